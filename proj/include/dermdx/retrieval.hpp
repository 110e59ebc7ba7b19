#pragma once

#include "dermdx/case_model.hpp"
#include "dermdx/gateway.hpp"
#include "dermdx/prompts.hpp"

#include <json.hpp>

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dermdx {

enum class RetrievalStrategy { ImageOnly, NaiveCot, ExpertCot };

std::string_view to_string(RetrievalStrategy s) noexcept;
/// Accepts "image_only", "naive_cot", "expert_cot". Throws ConfigError.
RetrievalStrategy retrieval_strategy_from_string(std::string_view s);

/// Ordered, deduplicated candidate conditions for one case.
class CandidateSet {
public:
    /// Deduplicates by normalized form keeping first occurrences, then keeps
    /// the first `max_candidates`. Throws NoCandidatesFound when nothing is
    /// left and PreconditionError when `max_candidates` is zero.
    CandidateSet(std::vector<ConditionName> names, RetrievalStrategy strategy,
                 std::string source_case, std::size_t max_candidates = 10);

    const std::vector<ConditionName>& candidates() const noexcept { return candidates_; }
    RetrievalStrategy strategy() const noexcept { return strategy_; }
    const std::string& source_case() const noexcept { return source_case_; }
    std::size_t size() const noexcept { return candidates_.size(); }
    const ConditionName& operator[](std::size_t i) const { return candidates_[i]; }
    auto begin() const noexcept { return candidates_.begin(); }
    auto end() const noexcept { return candidates_.end(); }

    std::optional<std::size_t> index_of(std::string_view normalized) const;
    bool contains(const ConditionName& name) const { return index_of(name.normalized()).has_value(); }
    std::vector<std::string> normalized_names() const;

    nlohmann::json to_json() const;
    static CandidateSet from_json(const nlohmann::json& j);

private:
    std::vector<ConditionName> candidates_;
    RetrievalStrategy strategy_;
    std::string source_case_;
};

/// "['prurigo nodularis', 'chronic eczema']"
std::string format_candidates(const CandidateSet& set);

/// Appended to every retrieval prompt.
inline constexpr std::string_view kCandidateListInstruction =
    "End your answer with a JSON array of the condition names only.";

Conversation build_retrieval_prompt(const DermCase& dermcase, RetrievalStrategy strategy,
                                    const PromptLibrary& prompts = PromptLibrary::bundled());

/// Reads the final JSON array of strings (fenced or trailing) from a model
/// answer, falling back to numbered ("1.", "1:", "1)") or bulleted ("-", "*")
/// list items. Output is normalized and deduplicated. Throws
/// NoCandidatesFound.
std::vector<ConditionName> parse_candidate_list(std::string_view response);

struct RetrievalConfig {
    std::size_t max_candidates = 10;
    GatewayConfig gateway;
};

CandidateSet retrieve(const DermCase& dermcase, RetrievalStrategy strategy, Backend& backend,
                      const RetrievalConfig& config,
                      const PromptLibrary& prompts = PromptLibrary::bundled());

struct RetrievalResult {
    std::string case_id;
    std::optional<CandidateSet> candidates;
    std::string error; ///< empty on success
};

/// Runs retrieve() over `cases` with up to `max_concurrency` workers. A
/// failing case is reported in its result and never stops the batch.
std::vector<RetrievalResult> retrieve_batch(const std::vector<DermCase>& cases,
                                            RetrievalStrategy strategy, Backend& backend,
                                            const RetrievalConfig& config,
                                            const PromptLibrary& prompts,
                                            std::size_t max_concurrency = 4);

} // namespace dermdx
