#pragma once

#include "dermdx/gateway.hpp"
#include "dermdx/prompts.hpp"

#include <json.hpp>

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dermdx {

struct StyleRule {
    int index = 1;
    std::string title;
    std::string example;
    std::string explanation;

    friend bool operator==(const StyleRule&, const StyleRule&) = default;
};

enum class RuleProvenance { bundled, learned };

struct RuleSet {
    static constexpr std::size_t kMaxRules = 20;

    std::vector<StyleRule> rules;
    int version = 1;
    RuleProvenance provenance = RuleProvenance::bundled;

    /// Throws PreconditionError: 1..kMaxRules rules, non-empty titles,
    /// indices 1..n in order.
    void validate() const;

    /// Numbered block injected into the aligner prompt.
    std::string render() const;

    nlohmann::json to_json() const;
    /// Throws ParseError(0, ...) on schema errors; validates.
    static RuleSet from_json(const nlohmann::json& j);
    static RuleSet bundled();
    /// Throws ConfigError when unreadable, ParseError when malformed.
    static RuleSet load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    friend bool operator==(const RuleSet&, const RuleSet&) = default;
};

struct ApoTrainPair {
    std::string case_id;
    std::string draft;
    std::string reference;
};

/// JSONL of {"case_id", "draft", "reference"}. Throws ParseError with the
/// 1-based line number.
std::vector<ApoTrainPair> parse_pairs(std::string_view jsonl);
std::vector<ApoTrainPair> load_pairs(const std::filesystem::path& path);

struct AlignOutcome {
    std::string text;
    bool fell_back = false; ///< empty reply; draft returned unchanged
};

/// One rewrite call (stage align). An empty reply yields the draft with a
/// logged warning. Throws PreconditionError for an empty draft.
AlignOutcome apply_rules(std::string_view draft, const RuleSet& rules, Backend& backend,
                         const GatewayConfig& gateway, const std::string& case_id,
                         const PromptLibrary& prompts = PromptLibrary::bundled());

Conversation build_align_prompt(std::string_view draft, const RuleSet& rules,
                                const PromptLibrary& prompts = PromptLibrary::bundled());

/// Reads the critic's replacement rule list from the last fenced block (or
/// the whole reply) holding a JSON object with "rules" or a bare array.
/// Indices are renumbered 1..n. Result carries current.version + 1 and
/// learned provenance. Throws CriticParseError.
RuleSet parse_critic_reply(std::string_view reply, const RuleSet& current, std::size_t max_rules);

struct ApoConfig {
    std::size_t max_iterations = 5;
    double min_gain = 0.01;
    std::size_t worst_examples = 3;
    std::size_t max_rules = RuleSet::kMaxRules;
    std::size_t max_concurrency = 4;
    GatewayConfig gateway;
};

struct ApoIteration {
    std::size_t iteration = 0;
    std::optional<double> candidate_score; ///< unset when the critic reply failed to parse
    bool accepted = false;
    std::string error;
};

struct ApoResult {
    RuleSet rules;
    double initial_score = 0.0;
    double final_score = 0.0;
    std::vector<ApoIteration> history;
    std::size_t critic_failures = 0;
};

/// Corpus DeltaBLEU of the rewritten drafts against their references.
double score_rules(const std::vector<ApoTrainPair>& pairs, const RuleSet& rules, Backend& backend,
                   const ApoConfig& config, const PromptLibrary& prompts = PromptLibrary::bundled(),
                   std::vector<std::string>* rewrites = nullptr);

/// Greedy hill climb over rule sets. A candidate replaces the current set
/// only when it gains at least min_gain, so final_score >= initial_score.
/// Critic calls use stage apo.
ApoResult apo_optimize(const std::vector<ApoTrainPair>& pairs, const RuleSet& initial, Backend& backend,
                       const ApoConfig& config, const PromptLibrary& prompts = PromptLibrary::bundled());

} // namespace dermdx
