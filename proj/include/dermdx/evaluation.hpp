#pragma once

#include "dermdx/case_model.hpp"
#include "dermdx/gateway.hpp"
#include "dermdx/prompts.hpp"
#include "dermdx/reranker.hpp"
#include "dermdx/retrieval.hpp"

#include <json.hpp>

#include <cstddef>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dermdx {

struct SimilarityVerdict {
    bool similar = false;
    int rule_applied = 0; ///< 1..4 from the judge, 0 when decided without a call
    std::string rationale;
};

enum class JudgeMode { exact, llm };

JudgeMode judge_mode_from_string(std::string_view s);

inline constexpr std::string_view kVerdictInstruction =
    "Check the rules in order. Finish with one line in exactly this form:\n"
    "VERDICT: SIMILAR, RULE: <number of the rule that makes them similar>\n"
    "or\n"
    "VERDICT: DIFFERENT, RULE: 4";

/// Reads "VERDICT: SIMILAR|DIFFERENT, RULE: n". A DIFFERENT verdict without a
/// rule counts as rule 4 (every rule was checked). Throws JudgeParseError.
SimilarityVerdict parse_verdict(std::string_view reply);

/// Rule-based similarity of two condition names, cached by the unordered
/// normalized pair. Safe to share between threads.
class SimilarityJudge {
public:
    /// `backend` may be null in exact mode.
    SimilarityJudge(Backend* backend, GatewayConfig gateway, JudgeMode mode,
                    PromptLibrary prompts = PromptLibrary::bundled());

    /// Equal normalized forms are similar with rule 0 and no call. In exact
    /// mode anything else is different with rule 0. In llm mode one call,
    /// one re-ask on an unreadable reply, then JudgeParseError.
    SimilarityVerdict judge(const ConditionName& a, const ConditionName& b);

    JudgeMode mode() const noexcept { return mode_; }
    std::size_t llm_calls() const;

private:
    Backend* backend_;
    GatewayConfig gateway_;
    JudgeMode mode_;
    PromptLibrary prompts_;
    mutable std::mutex mutex_;
    std::map<std::pair<std::string, std::string>, SimilarityVerdict> cache_;
    std::size_t calls_ = 0;
};

/// Share of outcomes with a top-k entry judged similar to the case's ground
/// truth. Throws ZeroDenominator for no outcomes, PreconditionError when a
/// case lacks ground truth or k is not 1 or 2.
double topk_accuracy(const std::vector<RankOutcome>& outcomes,
                     const std::map<std::string, ConditionName>& ground_truths, std::size_t k,
                     SimilarityJudge& judge);

struct CaseEval {
    std::string case_id;
    bool judged = false;                 ///< ground truth known
    std::string judgment_source = "exact"; ///< "exact" or "llm"
    std::optional<bool> retrieved;
    std::optional<bool> top1;
    std::optional<bool> top2;
    std::optional<double> bleu;
    std::optional<double> delta_bleu;
};

struct EvalReport {
    std::string retrieval_strategy;
    std::string rerank_strategy;
    std::size_t retrieved_gt = 0;
    std::size_t total_known_gt = 0;
    std::size_t total_cases = 0;
    double accuracy = 0.0;
    std::size_t top1_hits = 0;
    std::size_t top2_hits = 0;
    double top1_accuracy = 0.0;
    double top2_accuracy = 0.0;
    std::size_t bleu_pairs = 0;
    std::optional<double> bleu;
    std::optional<double> delta_bleu;
    std::vector<CaseEval> per_case;

    nlohmann::json to_json() const;
    /// Fixed-width text tables: retrieval, re-ranking, alignment.
    std::string to_table() const;
};

struct RunArtifacts {
    std::string retrieval_strategy;
    std::string rerank_strategy;
    std::map<std::string, CandidateSet> candidates;
    std::map<std::string, RankOutcome> rankings;
    std::map<std::string, std::string> aligned;
};

/// Scores a run against its dataset. Cases without ground truth are left
/// out of every denominator; cases with ground truth but no artifact count
/// as misses. Throws ZeroDenominator when no case has ground truth.
EvalReport evaluate(const Dataset& dataset, const RunArtifacts& artifacts, SimilarityJudge& judge);

} // namespace dermdx
