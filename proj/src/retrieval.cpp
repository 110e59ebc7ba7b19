#include "dermdx/retrieval.hpp"

#include "dermdx/error.hpp"
#include "dermdx/parallel.hpp"
#include "dermdx/text.hpp"

#include <unordered_set>

namespace dermdx {

using json = nlohmann::json;

std::string_view to_string(RetrievalStrategy s) noexcept {
    switch (s) {
    case RetrievalStrategy::ImageOnly: return "image_only";
    case RetrievalStrategy::NaiveCot: return "naive_cot";
    case RetrievalStrategy::ExpertCot: return "expert_cot";
    }
    return "naive_cot";
}

RetrievalStrategy retrieval_strategy_from_string(std::string_view s) {
    for (auto st : {RetrievalStrategy::ImageOnly, RetrievalStrategy::NaiveCot, RetrievalStrategy::ExpertCot}) {
        if (to_string(st) == s) return st;
    }
    throw ConfigError("unknown retrieval strategy '" + std::string(s) + "'");
}

CandidateSet::CandidateSet(std::vector<ConditionName> names, RetrievalStrategy strategy,
                           std::string source_case, std::size_t max_candidates)
    : strategy_(strategy), source_case_(std::move(source_case)) {
    if (max_candidates == 0) throw PreconditionError("max_candidates must be at least 1");
    std::unordered_set<std::string> seen;
    for (auto& n : names) {
        if (candidates_.size() == max_candidates) break;
        if (seen.insert(n.normalized()).second) candidates_.push_back(std::move(n));
    }
    if (candidates_.empty()) throw NoCandidatesFound();
}

std::optional<std::size_t> CandidateSet::index_of(std::string_view normalized) const {
    for (std::size_t i = 0; i < candidates_.size(); ++i) {
        if (candidates_[i].normalized() == normalized) return i;
    }
    return std::nullopt;
}

std::vector<std::string> CandidateSet::normalized_names() const {
    std::vector<std::string> out;
    out.reserve(candidates_.size());
    for (const auto& c : candidates_) out.push_back(c.normalized());
    return out;
}

json CandidateSet::to_json() const {
    json names = json::array();
    for (const auto& c : candidates_) names.push_back(c.normalized());
    return json{{"case_id", source_case_},
                {"strategy", std::string(to_string(strategy_))},
                {"candidates", std::move(names)}};
}

CandidateSet CandidateSet::from_json(const json& j) {
    std::vector<ConditionName> names;
    for (const auto& n : j.at("candidates")) names.push_back(ConditionName::parse(n.get<std::string>()));
    auto max = std::max<std::size_t>(names.size(), 1);
    return CandidateSet(std::move(names),
                        retrieval_strategy_from_string(j.at("strategy").get<std::string>()),
                        j.at("case_id").get<std::string>(), max);
}

std::string format_candidates(const CandidateSet& set) {
    std::string out = "[";
    for (std::size_t i = 0; i < set.size(); ++i) {
        if (i) out += ", ";
        out += "'" + set[i].normalized() + "'";
    }
    out += "]";
    return out;
}

Conversation build_retrieval_prompt(const DermCase& dermcase, RetrievalStrategy strategy,
                                    const PromptLibrary& prompts) {
    std::string body;
    switch (strategy) {
    case RetrievalStrategy::ImageOnly:
        body = prompts.get("retrieval_image_only").body;
        break;
    case RetrievalStrategy::NaiveCot:
        body = prompts.render("retrieval_naive_cot", {{"query", dermcase.query}});
        break;
    case RetrievalStrategy::ExpertCot:
        body = prompts.render("retrieval_expert_cot", {{"query", dermcase.query}});
        break;
    }
    body += "\n\n";
    body += kCandidateListInstruction;
    Conversation c;
    c.messages.push_back(ChatMessage::user(std::move(body), dermcase.images));
    return c;
}

namespace {

void add_names(const std::vector<std::string>& raw, std::vector<ConditionName>& out) {
    std::unordered_set<std::string> seen;
    for (const auto& c : out) seen.insert(c.normalized());
    for (const auto& r : raw) {
        auto norm = normalized_form(r);
        if (norm.empty() || !seen.insert(norm).second) continue;
        out.push_back(ConditionName::parse(r));
    }
}

std::optional<std::vector<std::string>> as_string_array(std::string_view candidate) {
    auto j = json::parse(candidate.begin(), candidate.end(), nullptr, false);
    if (j.is_discarded() || !j.is_array()) return std::nullopt;
    std::vector<std::string> out;
    for (const auto& e : j) {
        if (!e.is_string()) return std::nullopt;
        out.push_back(e.get<std::string>());
    }
    return out;
}

/// The last ``` fenced block whose body is a JSON array of strings.
std::optional<std::vector<std::string>> fenced_array(std::string_view s) {
    std::vector<std::size_t> fences;
    for (auto p = s.find("```"); p != std::string_view::npos; p = s.find("```", p + 3)) fences.push_back(p);
    for (std::size_t k = fences.size() / 2; k-- > 0;) {
        auto open = fences[2 * k];
        auto close = fences[2 * k + 1];
        auto inner = s.substr(open + 3, close - open - 3);
        auto nl = inner.find('\n');
        // Skip an info string such as "json".
        if (nl != std::string_view::npos && inner.substr(0, nl).find('[') == std::string_view::npos)
            inner.remove_prefix(nl + 1);
        if (auto arr = as_string_array(text::trim(inner))) return arr;
    }
    return std::nullopt;
}

/// A JSON array of strings closing the answer, possibly followed by
/// whitespace or a closing fence.
std::optional<std::vector<std::string>> trailing_array(std::string_view s) {
    auto t = text::trim(s);
    while (t.ends_with("```")) t = text::trim(std::string_view(t).substr(0, t.size() - 3));
    if (t.empty() || t.back() != ']') return std::nullopt;
    int tries = 0;
    for (auto p = t.rfind('['); p != std::string::npos && tries < 64; ++tries) {
        if (auto arr = as_string_array(std::string_view(t).substr(p))) return arr;
        if (p == 0) break;
        p = t.rfind('[', p - 1);
    }
    return std::nullopt;
}

std::string clean_item(std::string_view item) {
    std::string s;
    for (char c : item) {
        if (c != '*' && c != '`' && c != '_') s.push_back(c);
    }
    for (std::string_view sep : {":", " - ", " -- "}) {
        auto p = s.find(sep);
        if (p != std::string::npos && p > 0) s.resize(p);
    }
    return text::trim(s);
}

std::vector<std::string> list_items(std::string_view response) {
    std::vector<std::string> items;
    for (const auto& raw_line : text::split_lines(response)) {
        auto line = text::trim(raw_line);
        std::size_t i = 0;
        if (i < line.size() && line[i] >= '0' && line[i] <= '9') {
            while (i < line.size() && line[i] >= '0' && line[i] <= '9') ++i;
            if (i >= line.size() || (line[i] != '.' && line[i] != ':' && line[i] != ')')) continue;
            ++i;
        } else if (i < line.size() && (line[i] == '-' || line[i] == '*')) {
            ++i;
        } else {
            continue;
        }
        if (i >= line.size() || !text::is_space(line[i])) continue;
        auto item = clean_item(std::string_view(line).substr(i));
        if (!item.empty()) items.push_back(std::move(item));
    }
    return items;
}

} // namespace

std::vector<ConditionName> parse_candidate_list(std::string_view response) {
    std::vector<ConditionName> out;
    auto arr = fenced_array(response);
    if (!arr) arr = trailing_array(response);
    if (arr) add_names(*arr, out);
    if (out.empty()) add_names(list_items(response), out);
    if (out.empty()) throw NoCandidatesFound();
    return out;
}

CandidateSet retrieve(const DermCase& dermcase, RetrievalStrategy strategy, Backend& backend,
                      const RetrievalConfig& config, const PromptLibrary& prompts) {
    auto conversation = build_retrieval_prompt(dermcase, strategy, prompts);
    auto response = complete(conversation, config.gateway, backend,
                             CallContext{dermcase.case_id, Stage::retrieval});
    return CandidateSet(parse_candidate_list(response), strategy, dermcase.case_id,
                        config.max_candidates);
}

std::vector<RetrievalResult> retrieve_batch(const std::vector<DermCase>& cases,
                                            RetrievalStrategy strategy, Backend& backend,
                                            const RetrievalConfig& config,
                                            const PromptLibrary& prompts,
                                            std::size_t max_concurrency) {
    std::vector<RetrievalResult> results(cases.size());
    parallel_for(cases.size(), max_concurrency, [&](std::size_t i) {
        results[i].case_id = cases[i].case_id;
        try {
            results[i].candidates = retrieve(cases[i], strategy, backend, config, prompts);
        } catch (const std::exception& e) {
            results[i].error = e.what();
        }
    });
    return results;
}

} // namespace dermdx
