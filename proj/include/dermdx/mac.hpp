#pragma once

#include "dermdx/case_model.hpp"
#include "dermdx/error.hpp"
#include "dermdx/gateway.hpp"
#include "dermdx/prompts.hpp"
#include "dermdx/reranker.hpp"
#include "dermdx/retrieval.hpp"

#include <json.hpp>

#include <cstddef>
#include <exception>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dermdx {

struct MacConfig {
    std::size_t min_candidates = 3;
    std::size_t max_candidates = 5;
    std::size_t max_revision_rounds = 2;
    std::string termination_token = "TERMINATE";
    /// Optional replacement bodies keyed "coordinator", "admin", "specialist".
    std::map<std::string, std::string> role_prompts;
    /// Specialist names in assignment order; "Specialist_<i>" when too short.
    std::vector<std::string> specialist_names;
    GatewayConfig gateway;

    /// Throws ConfigError.
    void validate() const;
};

struct Assignment {
    std::string specialist_name;
    ConditionName disease;
};

struct SpecialistFinding {
    std::string specialist_name;
    ConditionName disease;
    std::string evidence;
    /// One entry per other candidate, in candidate order.
    std::vector<std::pair<ConditionName, std::string>> critiques;
};

struct RefinementRound {
    std::string instructions;
    std::vector<std::string> targets;
    std::map<std::string, std::string> refined_evidence; ///< specialist -> refined evidence
};

enum class MacPhaseKind {
    Init,
    Assignment,
    SpecialistAnalysis,
    Compilation,
    AdminEvaluation,
    Revision,
    FinalDiagnosis,
    Terminated
};

struct MacPhase {
    MacPhaseKind kind = MacPhaseKind::Init;
    std::size_t index = 0; ///< specialist index or revision round

    friend bool operator==(const MacPhase&, const MacPhase&) = default;
};

std::string to_string(const MacPhase& phase);

/// Checks that `phases` walks the legal MAC edges for `n` specialists:
/// Init, Assignment, SpecialistAnalysis(0..n-1), Compilation,
/// AdminEvaluation, (Revision(r), AdminEvaluation)*, FinalDiagnosis,
/// Terminated, with at most `max_rounds` revisions numbered from 0.
bool is_legal_phase_sequence(const std::vector<MacPhase>& phases, std::size_t n, std::size_t max_rounds);

struct MacTranscript {
    std::string case_id;
    std::string case_query;
    std::string observation;
    std::string observation_source; ///< "image_description" or "query"
    std::vector<ConditionName> candidates;
    std::vector<Assignment> assignments;
    std::vector<SpecialistFinding> findings;
    std::string consolidation;
    bool consolidation_fallback = false;
    std::vector<RefinementRound> refinement_rounds;
    std::optional<ConditionName> final_diagnosis;
    bool terminated = false;
    bool forced_finalize = false;
    bool forced_fallback = false; ///< forced finalize named no candidate; first candidate taken
    std::vector<MacPhase> phases;
    Conversation messages; ///< group chat log, speaker names set
    std::size_t llm_calls = 0;
    std::size_t call_budget = 0;

    nlohmann::json to_json() const;
};

/// Aborted MAC run. The transcript holds everything produced before the
/// failing step.
class MacRunError : public Error {
public:
    MacRunError(const std::string& what, MacTranscript partial, std::exception_ptr cause)
        : Error(what), transcript(std::make_shared<MacTranscript>(std::move(partial))),
          cause(std::move(cause)) {}
    std::shared_ptr<const MacTranscript> transcript;
    std::exception_ptr cause; ///< the sub-operation error
};

struct AdminDecision {
    enum class Kind { RequestRevision, Finalize };
    Kind kind = Kind::Finalize;
    std::vector<std::string> targets; ///< specialist names, for RequestRevision
    std::string instructions;         ///< the admin's message
    std::string diagnosis_text;       ///< the admin's message, for Finalize
    std::optional<ConditionName> diagnosis; ///< set by MacEngine for Finalize
};

/// Case-sensitive substring test.
bool detect_termination(std::string_view message, std::string_view token);

/// Reads "FINAL_DIAGNOSIS: <name>", else requires exactly one distinct
/// candidate mentioned in the text (longest names first). Throws
/// NoDiagnosisFound or AmbiguousDiagnosis.
ConditionName extract_final_diagnosis(std::string_view admin_text, const CandidateSet& candidates);

/// Throws TooManyCandidates / TooFewCandidates outside the configured bounds.
std::vector<Assignment> assign_diseases(const CandidateSet& candidates, const MacConfig& config);

/// Reads an agent reply in either the marker format (EVIDENCE: /
/// CRITIQUE <name>:) or the prose shape ("Supporting Evidence ...:" and a
/// numbered "Critiques" list). Critiques missing from the reply are absent
/// from the result; the caller decides whether that is fatal.
SpecialistFinding parse_specialist_reply(std::string_view reply, const Assignment& assignment,
                                         const CandidateSet& candidates);

/// Other candidates without a critique in `finding`, plus "evidence" when
/// the evidence is empty.
std::vector<std::string> missing_sections(const SpecialistFinding& finding, const CandidateSet& candidates);

/// Parses an admin reply. Throws AmbiguousDecision when the reply carries
/// both or neither of the REVISE line and the termination token, and
/// UnknownSpecialist when a target is not one of `specialists`.
AdminDecision parse_admin_decision(std::string_view reply, const std::vector<std::string>& specialists,
                                   std::string_view token);

/// Deterministic per-disease rendering of evidence and critiques, used when
/// the coordinator returns nothing.
std::string render_consolidation(const std::vector<SpecialistFinding>& findings);

/// Upper bound on LLM calls for one run with `n` specialists:
/// 1 + n + 1 + (max_revision_rounds + 1) * (1 + n) + 1.
std::size_t mac_call_budget(std::size_t n, const MacConfig& config);

/// Drives one MAC debate. Calls within a run are sequential.
class MacEngine {
public:
    MacEngine(Backend& backend, MacConfig config, PromptLibrary prompts = PromptLibrary::bundled());

    const MacConfig& config() const noexcept { return config_; }

    /// Starts a transcript: validates bounds, assigns diseases, opens the log.
    MacTranscript begin(const DermCase& dermcase, const CandidateSet& candidates,
                        const std::string& observation, std::string observation_source) const;

    /// One specialist's evidence and critiques. Re-asks once when sections
    /// are missing, then throws IncompleteFinding.
    SpecialistFinding run_specialist(MacTranscript& transcript, const DermCase& dermcase,
                                     const Assignment& assignment, const CandidateSet& candidates);

    /// Coordinator compilation; an empty reply falls back to
    /// render_consolidation().
    std::string consolidate(MacTranscript& transcript);

    /// Admin turn. Re-asks once on an ambiguous reply. With `force_finalize`
    /// the admin is told to conclude and any reply counts as Finalize.
    AdminDecision admin_evaluate(MacTranscript& transcript, const std::vector<std::string>& specialists,
                                 bool force_finalize);

    /// Refined evidence from one specialist for the current round.
    std::string refine(MacTranscript& transcript, const DermCase& dermcase, const Assignment& assignment,
                       const std::string& instructions);

    /// Full protocol. Any failure throws MacRunError carrying the partial
    /// transcript.
    MacTranscript run(const DermCase& dermcase, const CandidateSet& candidates,
                      const std::string& observation, std::string observation_source = "image_description");

private:
    std::string call(MacTranscript& transcript, Conversation conversation);
    Conversation agent_conversation(const MacTranscript& transcript, const std::string& system_prompt,
                                    const std::string& instruction,
                                    const std::vector<ImagePayload>& images) const;
    std::string role_prompt(const std::string& role, const std::string& name = {}) const;

    Backend& backend_;
    MacConfig config_;
    PromptLibrary prompts_;
};

struct Observation {
    std::string text;
    std::string source; ///< "image_description" or "query"
};

/// Asks for a visual description of the case images (stage mac). Falls back
/// to the case query when the call fails or returns nothing.
Observation obtain_observation(const DermCase& dermcase, Backend& backend, const GatewayConfig& gateway,
                               const PromptLibrary& prompts = PromptLibrary::bundled());

/// Ranking view of a finished run: the final diagnosis first, the rest in
/// candidate order.
RankOutcome mac_rank_outcome(const MacTranscript& transcript, const CandidateSet& candidates);

} // namespace dermdx
