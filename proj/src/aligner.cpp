#include "dermdx/aligner.hpp"

#include "dermdx/error.hpp"
#include "dermdx/metrics.hpp"
#include "dermdx/parallel.hpp"
#include "dermdx/text.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

namespace dermdx {

using json = nlohmann::json;

void RuleSet::validate() const {
    if (rules.empty() || rules.size() > kMaxRules)
        throw PreconditionError("a rule set holds 1 to " + std::to_string(kMaxRules) + " rules, got " +
                                std::to_string(rules.size()));
    for (std::size_t i = 0; i < rules.size(); ++i) {
        if (rules[i].index != static_cast<int>(i + 1))
            throw PreconditionError("rule indices must run 1.." + std::to_string(rules.size()));
        if (text::trim(rules[i].title).empty()) throw PreconditionError("rule " + std::to_string(i + 1) + " has no title");
    }
    if (version < 1) throw PreconditionError("rule set version must be at least 1");
}

std::string RuleSet::render() const {
    std::string out;
    for (const auto& r : rules) {
        out += std::to_string(r.index) + ". " + r.title + "\n";
        if (!r.example.empty()) out += "   Example: " + r.example + "\n";
        if (!r.explanation.empty()) out += "   Explanation: " + r.explanation + "\n";
    }
    return out;
}

json RuleSet::to_json() const {
    json rs = json::array();
    for (const auto& r : rules) {
        rs.push_back({{"index", r.index}, {"title", r.title}, {"example", r.example}, {"explanation", r.explanation}});
    }
    return json{{"version", version},
                {"provenance", provenance == RuleProvenance::bundled ? "bundled" : "learned"},
                {"rules", std::move(rs)}};
}

RuleSet RuleSet::from_json(const json& j) {
    RuleSet out;
    try {
        out.version = j.at("version").get<int>();
        auto prov = j.value("provenance", std::string("learned"));
        if (prov != "bundled" && prov != "learned") throw ParseError(0, "unknown provenance '" + prov + "'");
        out.provenance = prov == "bundled" ? RuleProvenance::bundled : RuleProvenance::learned;
        for (const auto& r : j.at("rules")) {
            out.rules.push_back({r.at("index").get<int>(), r.at("title").get<std::string>(),
                                 r.value("example", std::string{}), r.value("explanation", std::string{})});
        }
    } catch (const json::exception& e) {
        throw ParseError(0, std::string("malformed rule set: ") + e.what());
    }
    try {
        out.validate();
    } catch (const PreconditionError& e) {
        throw ParseError(0, e.what());
    }
    return out;
}

RuleSet RuleSet::bundled() {
    return from_json(json::parse(bundled_rules_json()));
}

RuleSet RuleSet::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read rules file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    auto j = json::parse(ss.str(), nullptr, false);
    if (j.is_discarded()) throw ParseError(0, "rules file " + path.string() + " is not valid JSON");
    return from_json(j);
}

void RuleSet::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write rules file " + path.string());
    out << to_json().dump(2) << '\n';
}

std::vector<ApoTrainPair> parse_pairs(std::string_view jsonl) {
    std::vector<ApoTrainPair> out;
    auto lines = text::split_lines(jsonl);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        auto line = text::trim(lines[i]);
        if (line.empty()) continue;
        auto j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) throw ParseError(i + 1, "not a JSON object");
        ApoTrainPair p;
        try {
            p.case_id = j.value("case_id", "pair_" + std::to_string(out.size() + 1));
            p.draft = j.at("draft").get<std::string>();
            p.reference = j.at("reference").get<std::string>();
        } catch (const json::exception& e) {
            throw ParseError(i + 1, e.what());
        }
        if (text::trim(p.draft).empty()) throw ParseError(i + 1, "empty draft");
        if (text::trim(p.reference).empty()) throw ParseError(i + 1, "empty reference");
        out.push_back(std::move(p));
    }
    return out;
}

std::vector<ApoTrainPair> load_pairs(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read pairs file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_pairs(ss.str());
}

Conversation build_align_prompt(std::string_view draft, const RuleSet& rules, const PromptLibrary& prompts) {
    Conversation c;
    c.messages.push_back(
        ChatMessage::user(prompts.render("aligner", {{"rules", rules.render()}, {"draft", std::string(draft)}})));
    return c;
}

AlignOutcome apply_rules(std::string_view draft, const RuleSet& rules, Backend& backend,
                         const GatewayConfig& gateway, const std::string& case_id, const PromptLibrary& prompts) {
    if (text::trim(draft).empty()) throw PreconditionError("draft is empty");
    auto reply = complete(build_align_prompt(draft, rules, prompts), gateway, backend,
                          CallContext{case_id, Stage::align});
    if (text::trim(reply).empty()) {
        spdlog::warn("aligner returned nothing for case '{}'; keeping the draft", case_id);
        return {std::string(draft), true};
    }
    return {reply, false};
}

namespace {

std::optional<RuleSet> rules_from(const json& j, const RuleSet& current, std::size_t max_rules) {
    const json* arr = nullptr;
    if (j.is_array()) arr = &j;
    else if (j.is_object() && j.contains("rules") && j["rules"].is_array()) arr = &j["rules"];
    if (!arr) return std::nullopt;
    RuleSet out;
    out.version = current.version + 1;
    out.provenance = RuleProvenance::learned;
    for (const auto& r : *arr) {
        if (!r.is_object() || !r.contains("title") || !r["title"].is_string()) return std::nullopt;
        auto str = [&](const char* key) {
            return r.contains(key) && r[key].is_string() ? r[key].get<std::string>() : std::string{};
        };
        out.rules.push_back({static_cast<int>(out.rules.size() + 1), text::trim(str("title")), str("example"),
                             str("explanation")});
    }
    if (out.rules.empty() || out.rules.size() > max_rules) return std::nullopt;
    for (const auto& r : out.rules) {
        if (r.title.empty()) return std::nullopt;
    }
    return out;
}

} // namespace

RuleSet parse_critic_reply(std::string_view reply, const RuleSet& current, std::size_t max_rules) {
    max_rules = std::min(max_rules, RuleSet::kMaxRules);
    std::vector<std::size_t> fences;
    for (auto p = reply.find("```"); p != std::string_view::npos; p = reply.find("```", p + 3)) fences.push_back(p);
    std::vector<std::string_view> blocks;
    for (std::size_t k = 0; k + 1 < fences.size(); k += 2) {
        auto inner = reply.substr(fences[k] + 3, fences[k + 1] - fences[k] - 3);
        auto nl = inner.find('\n');
        if (nl != std::string_view::npos && inner.substr(0, nl).find_first_of("{[") == std::string_view::npos)
            inner.remove_prefix(nl + 1);
        blocks.push_back(inner);
    }
    blocks.insert(blocks.begin(), reply);
    for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) {
        auto j = json::parse(text::trim(*it), nullptr, false);
        if (j.is_discarded()) continue;
        if (auto rs = rules_from(j, current, max_rules)) return *rs;
    }
    throw CriticParseError("critic reply holds no valid rule list");
}

double score_rules(const std::vector<ApoTrainPair>& pairs, const RuleSet& rules, Backend& backend,
                   const ApoConfig& config, const PromptLibrary& prompts, std::vector<std::string>* rewrites) {
    std::vector<std::string> hyps(pairs.size());
    parallel_for(pairs.size(), config.max_concurrency, [&](std::size_t i) {
        hyps[i] = apply_rules(pairs[i].draft, rules, backend, config.gateway, pairs[i].case_id, prompts).text;
    });
    std::vector<std::vector<WeightedReference>> refs;
    refs.reserve(pairs.size());
    for (const auto& p : pairs) refs.push_back({{p.reference, 1.0}});
    auto score = corpus_delta_bleu(hyps, refs);
    if (rewrites) *rewrites = std::move(hyps);
    return score;
}

ApoResult apo_optimize(const std::vector<ApoTrainPair>& pairs, const RuleSet& initial, Backend& backend,
                       const ApoConfig& config, const PromptLibrary& prompts) {
    initial.validate();
    ApoResult result{initial, 0.0, 0.0, {}, 0};
    if (pairs.empty()) return result;

    std::vector<std::string> rewrites;
    double current = score_rules(pairs, initial, backend, config, prompts, &rewrites);
    result.initial_score = current;

    for (std::size_t it = 0; it < config.max_iterations; ++it) {
        ApoIteration record{it + 1, std::nullopt, false, {}};

        std::vector<double> per_pair(pairs.size());
        for (std::size_t i = 0; i < pairs.size(); ++i) per_pair[i] = delta_bleu(rewrites[i], {{pairs[i].reference, 1.0}});
        std::vector<std::size_t> order(pairs.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return per_pair[a] < per_pair[b]; });
        std::string examples;
        for (std::size_t k = 0; k < std::min(config.worst_examples, order.size()); ++k) {
            auto i = order[k];
            examples += "Example " + std::to_string(k + 1) + " (" + pairs[i].case_id + ")\nDraft:\n" + pairs[i].draft +
                        "\nRewritten:\n" + rewrites[i] + "\nDermatologist:\n" + pairs[i].reference + "\n\n";
        }
        auto body = prompts.render("apo_critic", {{"rules_json", result.rules.to_json().dump(2)},
                                                  {"examples", examples},
                                                  {"max_rules", std::to_string(config.max_rules)}});
        body += "\n\nReply with the full rule list as JSON inside a ```json fenced block, shaped "
                "{\"rules\": [{\"title\": \"...\", \"example\": \"...\", \"explanation\": \"...\"}]}.";
        Conversation c;
        c.messages.push_back(ChatMessage::user(std::move(body)));
        auto reply = complete(c, config.gateway, backend, CallContext{"apo", Stage::apo});

        RuleSet candidate;
        try {
            candidate = parse_critic_reply(reply, result.rules, config.max_rules);
        } catch (const CriticParseError& e) {
            ++result.critic_failures;
            record.error = e.what();
            result.history.push_back(std::move(record));
            continue;
        }
        if (candidate.rules == result.rules.rules) {
            record.candidate_score = current;
            result.history.push_back(std::move(record));
            continue;
        }
        std::vector<std::string> candidate_rewrites;
        double score = score_rules(pairs, candidate, backend, config, prompts, &candidate_rewrites);
        record.candidate_score = score;
        if (score - current >= config.min_gain) {
            record.accepted = true;
            result.rules = std::move(candidate);
            current = score;
            rewrites = std::move(candidate_rewrites);
        }
        result.history.push_back(std::move(record));
    }
    result.final_score = current;
    return result;
}

} // namespace dermdx
