#include "dermdx/evaluation.hpp"

#include "dermdx/error.hpp"
#include "dermdx/metrics.hpp"
#include "dermdx/text.hpp"

#include <fmt/format.h>

#include <regex>

namespace dermdx {

using json = nlohmann::json;

JudgeMode judge_mode_from_string(std::string_view s) {
    if (s == "exact") return JudgeMode::exact;
    if (s == "llm") return JudgeMode::llm;
    throw ConfigError("unknown judge mode '" + std::string(s) + "'");
}

SimilarityVerdict parse_verdict(std::string_view reply) {
    static const std::regex pattern(R"(VERDICT\s*:\s*(SIMILAR|DIFFERENT)\b(?:[\s,;.]*RULE\s*:?\s*(\d+))?)",
                                    std::regex::icase);
    std::string cleaned;
    for (char c : reply) {
        if (c != '*' && c != '`') cleaned.push_back(c);
    }
    std::smatch m;
    std::optional<SimilarityVerdict> last;
    for (auto it = std::sregex_iterator(cleaned.begin(), cleaned.end(), pattern); it != std::sregex_iterator(); ++it) {
        m = *it;
        SimilarityVerdict v;
        v.similar = text::to_lower(m[1].str()) == "similar";
        if (m[2].matched) {
            std::size_t pos = 0;
            auto rule = text::read_integer(m[2].str(), pos);
            if (rule < 1 || rule > 4) throw JudgeParseError("rule " + m[2].str() + " outside 1..4");
            v.rule_applied = static_cast<int>(rule);
        } else if (v.similar) {
            throw JudgeParseError("SIMILAR verdict without a rule number");
        } else {
            v.rule_applied = 4;
        }
        v.rationale = text::trim(reply);
        last = std::move(v);
    }
    if (!last) throw JudgeParseError("no VERDICT line in judge reply");
    return *last;
}

SimilarityJudge::SimilarityJudge(Backend* backend, GatewayConfig gateway, JudgeMode mode, PromptLibrary prompts)
    : backend_(backend), gateway_(std::move(gateway)), mode_(mode), prompts_(std::move(prompts)) {
    if (mode_ == JudgeMode::llm && !backend_) throw PreconditionError("llm judge needs a backend");
}

std::size_t SimilarityJudge::llm_calls() const {
    std::lock_guard lock(mutex_);
    return calls_;
}

SimilarityVerdict SimilarityJudge::judge(const ConditionName& a, const ConditionName& b) {
    const auto& na = a.normalized();
    const auto& nb = b.normalized();
    if (na == nb) return {true, 0, "identical normalized names"};
    if (mode_ == JudgeMode::exact) return {false, 0, "exact mode: names differ"};

    auto key = na < nb ? std::make_pair(na, nb) : std::make_pair(nb, na);
    {
        std::lock_guard lock(mutex_);
        if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    }
    auto body = prompts_.render("judge", {{"a", key.first}, {"b", key.second}});
    body += "\n\n";
    body += kVerdictInstruction;
    Conversation c;
    c.messages.push_back(ChatMessage::user(std::move(body)));
    CallContext ctx{"judge:" + key.first + "|" + key.second, Stage::judge};

    auto call = [&] {
        {
            std::lock_guard lock(mutex_);
            ++calls_;
        }
        return complete(c, gateway_, *backend_, ctx);
    };
    auto reply = call();
    SimilarityVerdict verdict;
    try {
        verdict = parse_verdict(reply);
    } catch (const JudgeParseError&) {
        c.messages.push_back(ChatMessage::assistant(reply));
        c.messages.push_back(ChatMessage::user("Your reply did not end with a readable verdict line. " +
                                               std::string(kVerdictInstruction)));
        verdict = parse_verdict(call());
    }
    std::lock_guard lock(mutex_);
    cache_.emplace(key, verdict);
    return verdict;
}

namespace {

/// Exact matches first so the judge is only consulted when needed.
bool any_similar(const std::vector<ConditionName>& names, const ConditionName& truth, SimilarityJudge& judge,
                 bool& used_llm) {
    for (const auto& n : names) {
        if (n == truth) return true;
    }
    for (const auto& n : names) {
        auto v = judge.judge(n, truth);
        if (v.rule_applied != 0) used_llm = true;
        if (v.similar) return true;
    }
    return false;
}

} // namespace

double topk_accuracy(const std::vector<RankOutcome>& outcomes,
                     const std::map<std::string, ConditionName>& ground_truths, std::size_t k,
                     SimilarityJudge& judge) {
    if (k != 1 && k != 2) throw PreconditionError("k must be 1 or 2");
    if (outcomes.empty()) throw ZeroDenominator();
    std::size_t hits = 0;
    for (const auto& o : outcomes) {
        auto it = ground_truths.find(o.case_id);
        if (it == ground_truths.end()) throw PreconditionError("no ground truth for case '" + o.case_id + "'");
        bool used = false;
        if (any_similar(o.top_k(k), it->second, judge, used)) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(outcomes.size());
}

EvalReport evaluate(const Dataset& dataset, const RunArtifacts& artifacts, SimilarityJudge& judge) {
    EvalReport r;
    r.retrieval_strategy = artifacts.retrieval_strategy;
    r.rerank_strategy = artifacts.rerank_strategy;
    r.total_cases = dataset.total();

    std::vector<std::string> hyps;
    std::vector<std::vector<std::string>> refs;
    std::vector<std::vector<WeightedReference>> wrefs;

    for (const auto& c : dataset.cases()) {
        CaseEval ce;
        ce.case_id = c.case_id;
        bool used_llm = false;
        if (c.ground_truth) {
            ce.judged = true;
            ++r.total_known_gt;
            auto cs = artifacts.candidates.find(c.case_id);
            ce.retrieved = cs != artifacts.candidates.end() &&
                           any_similar(cs->second.candidates(), *c.ground_truth, judge, used_llm);
            if (*ce.retrieved) ++r.retrieved_gt;

            auto ro = artifacts.rankings.find(c.case_id);
            if (ro != artifacts.rankings.end() && !ro->second.ranking.empty()) {
                ce.top1 = any_similar(ro->second.top_k(1), *c.ground_truth, judge, used_llm);
                ce.top2 = *ce.top1 || any_similar(ro->second.top_k(2), *c.ground_truth, judge, used_llm);
            } else {
                ce.top1 = false;
                ce.top2 = false;
            }
            if (*ce.top1) ++r.top1_hits;
            if (*ce.top2) ++r.top2_hits;
        }
        ce.judgment_source = used_llm ? "llm" : "exact";

        auto al = artifacts.aligned.find(c.case_id);
        if (c.reference_response && al != artifacts.aligned.end() && !bleu_tokenize(al->second).empty()) {
            ce.bleu = bleu(al->second, {*c.reference_response});
            ce.delta_bleu = delta_bleu(al->second, {{*c.reference_response, 1.0}});
            hyps.push_back(al->second);
            refs.push_back({*c.reference_response});
            wrefs.push_back({{*c.reference_response, 1.0}});
        }
        r.per_case.push_back(std::move(ce));
    }

    r.accuracy = retrieval_accuracy(r.retrieved_gt, r.total_known_gt);
    r.top1_accuracy = static_cast<double>(r.top1_hits) / static_cast<double>(r.total_known_gt);
    r.top2_accuracy = static_cast<double>(r.top2_hits) / static_cast<double>(r.total_known_gt);
    r.bleu_pairs = hyps.size();
    if (!hyps.empty()) {
        r.bleu = corpus_bleu(hyps, refs);
        r.delta_bleu = corpus_delta_bleu(hyps, wrefs);
    }
    return r;
}

json EvalReport::to_json() const {
    json cases = json::array();
    auto opt = [](const auto& o) { return o ? json(*o) : json(); };
    for (const auto& c : per_case) {
        cases.push_back({{"case_id", c.case_id},
                         {"judged", c.judged},
                         {"judgment_source", c.judgment_source},
                         {"retrieved", opt(c.retrieved)},
                         {"top1", opt(c.top1)},
                         {"top2", opt(c.top2)},
                         {"bleu", opt(c.bleu)},
                         {"delta_bleu", opt(c.delta_bleu)}});
    }
    return json{{"retrieval_strategy", retrieval_strategy},
                {"rerank_strategy", rerank_strategy},
                {"retrieved_gt", retrieved_gt},
                {"total_known_gt", total_known_gt},
                {"total_cases", total_cases},
                {"accuracy", accuracy},
                {"top1_hits", top1_hits},
                {"top2_hits", top2_hits},
                {"top1_accuracy", top1_accuracy},
                {"top2_accuracy", top2_accuracy},
                {"bleu_pairs", bleu_pairs},
                {"bleu", opt(bleu)},
                {"delta_bleu", opt(delta_bleu)},
                {"per_case", std::move(cases)}};
}

std::string EvalReport::to_table() const {
    auto num = [](std::optional<double> v) { return v ? fmt::format("{:.6f}", *v) : std::string("n/a"); };
    std::string out;
    out += fmt::format("Retrieval ({})\n", retrieval_strategy.empty() ? "-" : retrieval_strategy);
    out += fmt::format("  {:<14}{:<14}{:<8}{}\n", "retrieved GT", "known GT", "cases", "accuracy");
    out += fmt::format("  {:<14}{:<14}{:<8}{:.6f}\n", retrieved_gt, total_known_gt, total_cases, accuracy);
    out += fmt::format("\nRe-ranking ({})\n", rerank_strategy.empty() ? "-" : rerank_strategy);
    out += fmt::format("  {:<12}{:<12}{:<12}{}\n", "top-1 hits", "top-1", "top-2 hits", "top-2");
    out += fmt::format("  {:<12}{:<12.6f}{:<12}{:.6f}\n", top1_hits, top1_accuracy, top2_hits, top2_accuracy);
    out += "\nAlignment\n";
    out += fmt::format("  {:<8}{:<12}{}\n", "pairs", "BLEU", "DeltaBLEU");
    out += fmt::format("  {:<8}{:<12}{}\n", bleu_pairs, num(bleu), num(delta_bleu));
    return out;
}

} // namespace dermdx
