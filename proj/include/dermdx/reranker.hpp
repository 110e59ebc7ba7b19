#pragma once

#include "dermdx/case_model.hpp"
#include "dermdx/gateway.hpp"
#include "dermdx/prompts.hpp"
#include "dermdx/retrieval.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dermdx {

enum class RerankStrategy { NaiveCot, ExpertWithContext, ExpertImageOnly, Mac };

std::string_view to_string(RerankStrategy s) noexcept;
/// Accepts "naive", "expert_context", "expert_image", "mac".
RerankStrategy rerank_strategy_from_string(std::string_view s);

struct ScoredCandidate {
    ConditionName name;
    int score = 1; ///< 1 (least probable) .. 10 (most probable)
};

struct RankOutcome {
    std::string case_id;
    RerankStrategy strategy = RerankStrategy::NaiveCot;
    std::vector<ScoredCandidate> scores; ///< empty for MAC
    std::vector<ConditionName> ranking;  ///< best first; a permutation of the candidates
    bool tie_broken = false;             ///< a random draw settled the head
    std::string transcript_ref;

    const ConditionName& top1() const { return ranking.at(0); }
    /// First min(k, |ranking|) entries.
    std::vector<ConditionName> top_k(std::size_t k) const;
    std::vector<ConditionName> top2() const { return top_k(2); }

    nlohmann::json to_json() const;
    static RankOutcome from_json(const nlohmann::json& j);
};

inline constexpr std::string_view kScoreInstruction =
    "Output format: one line per candidate: SCORE <name>: <integer 1-10>";

/// Reads one score per candidate. Lines "SCORE <name>: <int>" win; if there
/// are none, each candidate's name followed on the same line by an integer
/// in [1, 10] is used. Result follows the order scores appear in the text.
///
/// Throws OutOfRangeScore (structured line outside [1, 10]),
/// MissingCandidateScore (some candidates unscored) or ScoreParseError
/// (nothing found).
std::vector<ScoredCandidate> parse_scores(std::string_view response, const CandidateSet& candidates);

/// Seed for one case: the run seed mixed with a hash of the case id, so
/// batch ordering never changes a tie-break.
std::uint64_t case_seed(std::uint64_t run_seed, std::string_view case_id) noexcept;

/// Orders candidates by descending score; equal scores keep input order.
/// With `tie_seed`, a tie at the top is settled by a uniform draw among the
/// tied maxima and the winner moves to the front.
RankOutcome rank_from_scores(const std::vector<ScoredCandidate>& scores, const CandidateSet& candidates,
                             RerankStrategy strategy, std::optional<std::uint64_t> tie_seed);

Conversation build_rerank_prompt(const DermCase& dermcase, const CandidateSet& candidates,
                                 RerankStrategy strategy,
                                 const PromptLibrary& prompts = PromptLibrary::bundled());

struct RerankConfig {
    GatewayConfig gateway;
    std::uint64_t seed = 0;
};

/// All three require |candidates| >= 2 (PreconditionError otherwise).
RankOutcome rank_naive(const DermCase& dermcase, const CandidateSet& candidates, Backend& backend,
                       const RerankConfig& config,
                       const PromptLibrary& prompts = PromptLibrary::bundled());
RankOutcome rank_expert_with_context(const DermCase& dermcase, const CandidateSet& candidates,
                                     Backend& backend, const RerankConfig& config,
                                     const PromptLibrary& prompts = PromptLibrary::bundled());
RankOutcome rank_expert_image_only(const DermCase& dermcase, const CandidateSet& candidates,
                                   Backend& backend, const RerankConfig& config,
                                   const PromptLibrary& prompts = PromptLibrary::bundled());

} // namespace dermdx
