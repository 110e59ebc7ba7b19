#include "dermdx/reranker.hpp"

#include "dermdx/error.hpp"
#include "dermdx/text.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <random>

namespace dermdx {

using json = nlohmann::json;

std::string_view to_string(RerankStrategy s) noexcept {
    switch (s) {
    case RerankStrategy::NaiveCot: return "naive";
    case RerankStrategy::ExpertWithContext: return "expert_context";
    case RerankStrategy::ExpertImageOnly: return "expert_image";
    case RerankStrategy::Mac: return "mac";
    }
    return "naive";
}

RerankStrategy rerank_strategy_from_string(std::string_view s) {
    for (auto st : {RerankStrategy::NaiveCot, RerankStrategy::ExpertWithContext,
                    RerankStrategy::ExpertImageOnly, RerankStrategy::Mac}) {
        if (to_string(st) == s) return st;
    }
    throw ConfigError("unknown rerank strategy '" + std::string(s) + "'");
}

std::vector<ConditionName> RankOutcome::top_k(std::size_t k) const {
    auto n = std::min(k, ranking.size());
    return {ranking.begin(), ranking.begin() + static_cast<std::ptrdiff_t>(n)};
}

json RankOutcome::to_json() const {
    json js = json::array();
    for (const auto& s : scores) js.push_back({{"name", s.name.normalized()}, {"score", s.score}});
    json jr = json::array();
    for (const auto& r : ranking) jr.push_back(r.normalized());
    json top2j = json::array();
    for (const auto& r : top2()) top2j.push_back(r.normalized());
    return json{{"case_id", case_id},
                {"strategy", std::string(to_string(strategy))},
                {"scores", std::move(js)},
                {"ranking", std::move(jr)},
                {"top1", ranking.empty() ? json() : json(top1().normalized())},
                {"top2", std::move(top2j)},
                {"tie_broken", tie_broken},
                {"transcript_ref", transcript_ref}};
}

RankOutcome RankOutcome::from_json(const json& j) {
    RankOutcome o;
    o.case_id = j.at("case_id").get<std::string>();
    o.strategy = rerank_strategy_from_string(j.at("strategy").get<std::string>());
    for (const auto& s : j.at("scores"))
        o.scores.push_back({ConditionName::parse(s.at("name").get<std::string>()), s.at("score").get<int>()});
    for (const auto& r : j.at("ranking")) o.ranking.push_back(ConditionName::parse(r.get<std::string>()));
    o.tie_broken = j.value("tie_broken", false);
    o.transcript_ref = j.value("transcript_ref", std::string{});
    return o;
}

namespace {

/// Parses "<int>" after optional spaces, '*' and a sign. Returns nullopt
/// when no digits follow.
std::optional<long long> leading_int(std::string_view s) {
    std::size_t i = 0;
    while (i < s.size() && (text::is_space(s[i]) || s[i] == '*')) ++i;
    bool negative = false;
    if (i < s.size() && (s[i] == '-' || s[i] == '+')) {
        negative = s[i] == '-';
        ++i;
    }
    if (i >= s.size() || s[i] < '0' || s[i] > '9') return std::nullopt;
    auto v = text::read_integer(s, i);
    return negative ? -v : v;
}

std::vector<ScoredCandidate> structured_scores(std::string_view response, const CandidateSet& candidates,
                                               std::vector<bool>& filled) {
    std::vector<ScoredCandidate> out;
    for (const auto& raw : text::split_lines(response)) {
        auto line = text::trim(raw);
        auto start = line.find_first_not_of("*-# ");
        if (start == std::string::npos) continue;
        std::string_view rest = std::string_view(line).substr(start);
        if (!text::istarts_with(rest, "score") || rest.size() < 6 || !text::is_space(rest[5])) continue;
        rest.remove_prefix(6);
        auto colon = rest.rfind(':');
        if (colon == std::string_view::npos) continue;
        auto name = normalized_form(rest.substr(0, colon));
        std::erase_if(name, [](char c) { return c == '*'; });
        name = normalized_form(name);
        auto idx = candidates.index_of(name);
        if (!idx) continue;
        auto value = leading_int(rest.substr(colon + 1));
        if (!value) continue;
        if (*value < 1 || *value > 10) throw OutOfRangeScore(candidates[*idx].normalized(), *value);
        if (filled[*idx]) continue;
        filled[*idx] = true;
        out.push_back({candidates[*idx], static_cast<int>(*value)});
    }
    return out;
}

std::vector<ScoredCandidate> fallback_scores(std::string_view response, const CandidateSet& candidates,
                                             std::vector<bool>& filled) {
    auto names = candidates.normalized_names();
    std::vector<ScoredCandidate> out;
    for (const auto& raw : text::split_lines(response)) {
        auto line = text::to_lower(raw);
        auto mentions = text::find_mentions(line, names);
        for (std::size_t m = 0; m < mentions.size(); ++m) {
            auto idx = mentions[m].candidate;
            if (filled[idx]) continue;
            auto end = m + 1 < mentions.size() ? mentions[m + 1].pos : line.size();
            for (auto p = mentions[m].pos + mentions[m].len; p < end; ++p) {
                if (line[p] < '0' || line[p] > '9') continue;
                if (p > 0 && (text::is_alpha(line[p - 1]) || line[p - 1] == '.')) {
                    while (p < end && line[p] >= '0' && line[p] <= '9') ++p;
                    continue;
                }
                auto v = text::read_integer(line, p);
                if (v >= 1 && v <= 10) {
                    filled[idx] = true;
                    out.push_back({candidates[idx], static_cast<int>(v)});
                    break;
                }
            }
        }
    }
    return out;
}

} // namespace

std::vector<ScoredCandidate> parse_scores(std::string_view response, const CandidateSet& candidates) {
    std::vector<bool> filled(candidates.size(), false);
    auto scores = structured_scores(response, candidates, filled);
    if (scores.empty()) scores = fallback_scores(response, candidates, filled);
    if (scores.empty()) throw ScoreParseError("no candidate scores found in response");
    std::vector<std::string> missing;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (!filled[i]) missing.push_back(candidates[i].normalized());
    }
    if (!missing.empty()) throw MissingCandidateScore(std::move(missing));
    return scores;
}

std::uint64_t case_seed(std::uint64_t run_seed, std::string_view case_id) noexcept {
    return run_seed ^ text::fnv1a64(case_id);
}

RankOutcome rank_from_scores(const std::vector<ScoredCandidate>& scores, const CandidateSet& candidates,
                             RerankStrategy strategy, std::optional<std::uint64_t> tie_seed) {
    std::vector<int> by_index(candidates.size(), 0);
    std::vector<bool> seen(candidates.size(), false);
    for (const auto& s : scores) {
        auto idx = candidates.index_of(s.name.normalized());
        if (!idx) throw PreconditionError("score for unknown candidate '" + s.name.normalized() + "'");
        by_index[*idx] = s.score;
        seen[*idx] = true;
    }
    std::vector<std::string> missing;
    for (std::size_t i = 0; i < seen.size(); ++i) {
        if (!seen[i]) missing.push_back(candidates[i].normalized());
    }
    if (!missing.empty()) throw MissingCandidateScore(std::move(missing));

    std::vector<std::size_t> order(candidates.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return by_index[a] > by_index[b]; });

    RankOutcome out;
    out.case_id = candidates.source_case();
    out.strategy = strategy;
    out.scores = scores;
    std::size_t tied = 0;
    while (tied < order.size() && by_index[order[tied]] == by_index[order[0]]) ++tied;
    if (tie_seed && tied > 1) {
        std::mt19937_64 rng(*tie_seed);
        auto pick = static_cast<std::size_t>(rng() % tied);
        std::rotate(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(pick),
                    order.begin() + static_cast<std::ptrdiff_t>(pick + 1));
        out.tie_broken = true;
    }
    for (auto i : order) out.ranking.push_back(candidates[i]);
    return out;
}

Conversation build_rerank_prompt(const DermCase& dermcase, const CandidateSet& candidates,
                                 RerankStrategy strategy, const PromptLibrary& prompts) {
    std::map<std::string, std::string> vars{{"candidates", format_candidates(candidates)}};
    std::string body;
    switch (strategy) {
    case RerankStrategy::NaiveCot:
        vars["query"] = dermcase.query;
        body = prompts.render("rerank_naive", vars);
        break;
    case RerankStrategy::ExpertWithContext:
        vars["query"] = dermcase.query;
        body = prompts.render("rerank_expert_context", vars);
        break;
    case RerankStrategy::ExpertImageOnly:
        body = prompts.render("rerank_expert_image", vars);
        break;
    case RerankStrategy::Mac:
        throw PreconditionError("MAC ranking is driven by the MAC engine");
    }
    body += "\n\n";
    body += kScoreInstruction;
    Conversation c;
    c.messages.push_back(ChatMessage::user(std::move(body), dermcase.images));
    return c;
}

namespace {

RankOutcome rank_with(const DermCase& dermcase, const CandidateSet& candidates, Backend& backend,
                      const RerankConfig& config, const PromptLibrary& prompts, RerankStrategy strategy) {
    if (candidates.size() < 2) throw PreconditionError("re-ranking needs at least two candidates");
    auto conversation = build_rerank_prompt(dermcase, candidates, strategy, prompts);
    auto response = complete(conversation, config.gateway, backend,
                             CallContext{dermcase.case_id, Stage::rerank});
    auto scores = parse_scores(response, candidates);
    std::optional<std::uint64_t> seed;
    if (strategy == RerankStrategy::NaiveCot) seed = case_seed(config.seed, dermcase.case_id);
    auto out = rank_from_scores(scores, candidates, strategy, seed);
    out.case_id = dermcase.case_id;
    out.transcript_ref = "manifest.jsonl#" + dermcase.case_id + "/rerank";
    return out;
}

} // namespace

RankOutcome rank_naive(const DermCase& dermcase, const CandidateSet& candidates, Backend& backend,
                       const RerankConfig& config, const PromptLibrary& prompts) {
    return rank_with(dermcase, candidates, backend, config, prompts, RerankStrategy::NaiveCot);
}

RankOutcome rank_expert_with_context(const DermCase& dermcase, const CandidateSet& candidates,
                                     Backend& backend, const RerankConfig& config,
                                     const PromptLibrary& prompts) {
    return rank_with(dermcase, candidates, backend, config, prompts, RerankStrategy::ExpertWithContext);
}

RankOutcome rank_expert_image_only(const DermCase& dermcase, const CandidateSet& candidates,
                                   Backend& backend, const RerankConfig& config,
                                   const PromptLibrary& prompts) {
    return rank_with(dermcase, candidates, backend, config, prompts, RerankStrategy::ExpertImageOnly);
}

} // namespace dermdx
