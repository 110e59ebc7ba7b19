// Acceptance runner: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

#include "dermdx/aligner.hpp"
#include "dermdx/backends.hpp"
#include "dermdx/cli.hpp"
#include "dermdx/error.hpp"
#include "dermdx/evaluation.hpp"
#include "dermdx/mac.hpp"
#include "dermdx/metrics.hpp"
#include "dermdx/pipeline.hpp"
#include "dermdx/reranker.hpp"
#include "dermdx/retrieval.hpp"

#include "support.hpp"

#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

using namespace dermdx;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

/// Collects failed checks for one criterion.
struct Checks {
    std::vector<std::string> failures;

    void expect(bool ok, const std::string& what) {
        if (!ok) failures.push_back(what);
    }
    void near(double got, double want, double tol, const std::string& what) {
        if (!(std::fabs(got - want) <= tol)) failures.push_back(what + ": got " + std::to_string(got) + ", want " + std::to_string(want));
    }
};

struct Criterion {
    int id;
    std::string title;
    std::chrono::milliseconds limit; ///< zero: no time bound
    std::function<void(Checks&)> body;
};

// 1: retrieval accuracy ratios
void retrieval_ratios(Checks& c) {
    const std::vector<std::tuple<std::size_t, std::size_t, double>> rows{
        {22, 47, 0.468085}, {28, 47, 0.595744}, {40, 47, 0.851063}, {35, 47, 0.744680}};
    for (auto [hits, total, want] : rows)
        c.near(retrieval_accuracy(hits, total), want, 1e-6, std::to_string(hits) + "/" + std::to_string(total));
}

// 2: top-k accuracy on fixture outcomes
void topk_tables(Checks& c) {
    auto doc = json::parse(testing_support::slurp(testing_support::fixtures() / "tables" / "rank_outcomes.json"));
    SimilarityJudge judge(nullptr, GatewayConfig{}, JudgeMode::exact);
    auto rate = [&](const std::string& method, std::size_t k) {
        std::vector<RankOutcome> outs;
        std::map<std::string, ConditionName> gt;
        for (const auto& o : doc.at(method).at("outcomes")) {
            RankOutcome r;
            r.case_id = o.at("case_id");
            for (const auto& n : o.at("ranking")) r.ranking.push_back(ConditionName::parse(n.get<std::string>()));
            gt.emplace(r.case_id, ConditionName::parse(o.at("ground_truth").get<std::string>()));
            outs.push_back(std::move(r));
        }
        return topk_accuracy(outs, gt, k, judge);
    };
    c.near(rate("rerank_naive", 1), 0.425531, 1e-5, "naive top-1");
    c.near(rate("rerank_naive", 2), 0.553191, 1e-5, "naive top-2");
    c.near(rate("rerank_expert_context", 1), 0.531915, 1e-5, "expert context top-1");
    c.near(rate("rerank_expert_context", 2), 0.617021, 1e-5, "expert context top-2");
    c.near(rate("rerank_expert_image", 1), 0.446808, 1e-5, "expert image top-1");
    c.near(rate("rerank_expert_image", 2), 0.553191, 1e-5, "expert image top-2");
    c.near(rate("mac_mg_gr", 1), 0.53333, 1e-5, "MG-GR top-1");
    c.near(rate("mac", 1), 0.73333, 1e-5, "MAC top-1");
}

// 3: MAC protocol
const std::vector<std::string> kPool{"psoriasis", "chronic eczema", "tinea corporis", "lichen planus",
                                     "seborrheic dermatitis", "pityriasis rosea"};

DermCase mac_case() {
    DermCase d;
    d.case_id = "accept";
    d.query = "Itchy plaques for two years.";
    d.images.push_back(ImagePayload::from_bytes("a.png", testing_support::png_bytes()));
    return d;
}

CandidateSet pool(std::size_t n) {
    std::vector<ConditionName> v;
    for (std::size_t i = 0; i < n; ++i) v.push_back(ConditionName::parse(kPool[i]));
    return CandidateSet(v, RetrievalStrategy::ExpertCot, "accept");
}

void script_mac(ScriptedBackend& b, const CandidateSet& set, std::vector<std::string> admin,
                std::vector<std::string> forced) {
    auto add = [&](std::string contains, std::vector<std::string> replies, bool repeat) {
        ScriptedBackend::Entry e;
        e.stage = Stage::mac;
        e.contains = std::move(contains);
        e.responses.assign(replies.begin(), replies.end());
        e.repeat_last = repeat;
        b.add_entry(std::move(e));
    };
    for (std::size_t i = 0; i < set.size(); ++i) {
        std::string reply = "EVIDENCE:\nFits " + set[i].normalized() + ".\n";
        for (std::size_t j = 0; j < set.size(); ++j)
            if (j != i) reply += "CRITIQUE " + set[j].raw() + ":\nLess typical.\n";
        add("You are Specialist_" + std::to_string(i + 1) + ". Your assigned disease", {reply}, false);
        add("You are Specialist_" + std::to_string(i + 1) + ". The Admin asked you to refine",
            {"ENHANCED EVIDENCE:\nMore detail."}, true);
    }
    add("All specialists have reported", {"Compiled."}, false);
    add("As the Admin, evaluate the compiled evidence", std::move(admin), false);
    if (!forced.empty()) add("The revision limit has been reached", std::move(forced), false);
}

void mac_protocol(Checks& c) {
    MacConfig cfg;
    for (std::size_t n = 3; n <= 5; ++n) {
        auto tag = "n=" + std::to_string(n) + ": ";
        auto set = pool(n);
        auto assignments = assign_diseases(set, cfg);
        std::set<std::string> names, diseases;
        for (const auto& a : assignments) {
            names.insert(a.specialist_name);
            diseases.insert(a.disease.normalized());
        }
        c.expect(assignments.size() == n && names.size() == n && diseases.size() == n, tag + "assignment not bijective");

        ScriptedBackend quick;
        script_mac(quick, set, {"Clear.\nFINAL_DIAGNOSIS: " + set[n - 1].normalized() + "\nTERMINATE"}, {});
        auto t = MacEngine(quick, cfg).run(mac_case(), set, "red scaly plaques");
        c.expect(t.final_diagnosis && set.contains(*t.final_diagnosis), tag + "final diagnosis not a candidate");
        c.expect(t.llm_calls <= mac_call_budget(n, cfg) && quick.call_count() == t.llm_calls, tag + "budget");
        c.expect(is_legal_phase_sequence(t.phases, n, cfg.max_revision_rounds), tag + "illegal phases");

        ScriptedBackend slow;
        script_mac(slow, set, {"Weak.\nREVISE: Specialist_1", "Weak.\nREVISE: Specialist_2"},
                   {"FINAL_DIAGNOSIS: " + set[1].normalized() + "\nTERMINATE"});
        auto f = MacEngine(slow, cfg).run(mac_case(), set, "red scaly plaques");
        c.expect(f.refinement_rounds.size() <= 2, tag + "more than two revision rounds");
        c.expect(f.forced_finalize, tag + "no forced finalize after two rounds");
        c.expect(f.final_diagnosis && set.contains(*f.final_diagnosis), tag + "forced final not a candidate");
        c.expect(f.llm_calls <= mac_call_budget(n, cfg), tag + "forced run over budget");
        c.expect(is_legal_phase_sequence(f.phases, n, cfg.max_revision_rounds), tag + "illegal forced phases");
    }

    bool rejected = false;
    ScriptedBackend six;
    try {
        MacEngine(six, cfg).run(mac_case(), pool(6), "obs");
    } catch (const MacRunError& e) {
        try {
            std::rethrow_exception(e.cause);
        } catch (const TooManyCandidates&) {
            rejected = true;
        } catch (...) {
        }
    }
    c.expect(rejected && six.call_count() == 0, "n=6 not rejected with TooManyCandidates");

    auto dir = testing_support::fixtures() / "mac_appendix";
    auto fx = json::parse(testing_support::slurp(dir / "case.json"));
    auto backend = ScriptedBackend::from_file(dir / "script.json");
    DermCase d;
    d.case_id = fx["case_id"];
    d.query = fx["query"];
    std::vector<ConditionName> names;
    for (const auto& n : fx["candidates"]) names.push_back(ConditionName::parse(n.get<std::string>()));
    CandidateSet set(names, RetrievalStrategy::NaiveCot, d.case_id);
    MacConfig named;
    named.specialist_names = fx["specialist_names"].get<std::vector<std::string>>();
    auto t = MacEngine(*backend, named).run(d, set, fx["observation"].get<std::string>());
    c.expect(t.final_diagnosis && t.final_diagnosis->normalized() == "chronic eczema",
             "appendix case did not end in chronic eczema");
    c.expect(t.final_diagnosis && *t.final_diagnosis == ConditionName::parse(fx["ground_truth"].get<std::string>()),
             "appendix final differs from ground truth");
}

// 4: BLEU oracle
std::vector<std::string> oracle_tokens(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        auto u = static_cast<unsigned char>(ch);
        if (std::isspace(u) || std::ispunct(u)) {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
            if (std::ispunct(u)) out.emplace_back(1, ch);
        } else {
            cur.push_back(static_cast<char>(std::tolower(u)));
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

void bleu_oracle(Checks& c) {
    for (const char* s : {"the cat", "Use a steroid cream twice daily.", "x"})
        c.expect(bleu(s, {s}) == 1.0, std::string("bleu(x,[x]) != 1 for '") + s + "'");

    // manual count: hypothesis "the cat", reference "the cat sat"
    auto h = oracle_tokens("the cat");
    auto r = oracle_tokens("the cat sat");
    double p1 = 2.0 / 2.0; // both unigrams appear once in the reference
    double bp = h.size() >= r.size() ? 1.0 : std::exp(1.0 - double(r.size()) / double(h.size()));
    double manual = bp * p1;
    c.near(manual, std::exp(-0.5), 1e-12, "manual oracle");
    c.near(bleu("the cat", {"the cat sat"}, {1, Smoothing::None}), manual, 1e-6, "unigram the cat");
    c.near(bleu("the cat", {"the cat sat"}), 0.606531, 1e-6, "default the cat");

    const std::vector<std::string> words{"the", "rash", "is", "eczema", "use", "a", "steroid", "cream", "daily", ".", ","};
    std::mt19937 rng(2024);
    std::uniform_int_distribution<std::size_t> pick(0, words.size() - 1), len(1, 14);
    auto sentence = [&] {
        std::string s;
        for (std::size_t i = 0, n = len(rng); i < n; ++i) s += (i ? " " : "") + words[pick(rng)];
        return s;
    };
    for (int i = 0; i < 50; ++i) {
        auto hyp = sentence();
        auto ref = sentence();
        c.near(delta_bleu(hyp, {{ref, 1.0}}), bleu(hyp, {ref}), 1e-12, "delta_bleu vs bleu on '" + hyp + "'");
    }
}

// 5: record then replay
void record_replay(Checks& c) {
    testing_support::TempDir dir;
    auto fx = testing_support::fixtures() / "synthetic10";
    auto config = PipelineConfig::load(fx / "config.json");
    config.out_dir = dir.path();
    config.run_id = "recorded";
    auto scripted = ScriptedBackend::from_file(fx / "script.json");
    auto rec = run_pipeline(config, *scripted);
    c.expect(rec.exit_code == 0 && rec.status.size() == 10, "recording failed");

    auto replay = [&](const std::string& id) {
        config.run_id = id;
        ReplayBackend backend(load_manifest(rec.run_dir / "manifest.jsonl"), true);
        auto r = run_pipeline(config, backend);
        c.expect(r.exit_code == 0, id + " exit code");
        return r.run_dir;
    };
    auto a = replay("replay-a");
    auto b = replay("replay-b");
    auto files = comparable_files(rec.run_dir);
    std::set<std::string> kinds;
    for (const auto& f : files) kinds.insert(f.begin()->string());
    for (const char* k : {"candidates", "rankings", "mac", "aligned", "report.txt", "report.json"})
        c.expect(kinds.count(k) == 1, std::string("recorded run lacks ") + k);
    c.expect(comparable_files(a) == files && comparable_files(b) == files, "replay file sets differ");
    for (const auto& rel : files) {
        auto original = testing_support::slurp(rec.run_dir / rel);
        c.expect(testing_support::slurp(a / rel) == original, "replay-a differs at " + rel.generic_string());
        c.expect(testing_support::slurp(b / rel) == testing_support::slurp(a / rel),
                 "replays differ at " + rel.generic_string());
    }
}

// 6: similarity judge
void judge_suite(Checks& c) {
    ScriptedBackend none;
    SimilarityJudge quiet(&none, GatewayConfig{}, JudgeMode::llm);
    auto same = quiet.judge(ConditionName::parse("Chronic Eczema"), ConditionName::parse("chronic eczema."));
    c.expect(same.similar && none.call_count() == 0, "equal names made a backend call");

    ScriptedBackend b({"Both share the root eczema.\nVERDICT: SIMILAR, RULE: 3"});
    SimilarityJudge judge(&b, GatewayConfig{}, JudgeMode::llm);
    auto v = judge.judge(ConditionName::parse("herpetic eczema"), ConditionName::parse("seborrheic eczema"));
    c.expect(v.similar && v.rule_applied == 3, "herpetic/seborrheic eczema not similar by rule 3");

    ScriptedBackend junk({"not sure", "really not sure", "VERDICT: SIMILAR, RULE: 1"});
    SimilarityJudge strict(&junk, GatewayConfig{}, JudgeMode::llm);
    bool failed = false;
    try {
        strict.judge(ConditionName::parse("a rash"), ConditionName::parse("b rash"));
    } catch (const JudgeParseError&) {
        failed = true;
    }
    c.expect(failed && junk.call_count() == 2, "malformed verdict did not fail after exactly one re-ask");
}

// 7: APO monotonicity
void apo_monotone(Checks& c) {
    auto fx = testing_support::fixtures() / "apo_toy";
    auto pairs = load_pairs(fx / "pairs.jsonl");
    ApoConfig cfg;
    auto backend = ScriptedBackend::from_file(fx / "script.json");
    auto result = apo_optimize(pairs, RuleSet::bundled(), *backend, cfg);

    auto fresh_a = ScriptedBackend::from_file(fx / "script.json");
    auto fresh_b = ScriptedBackend::from_file(fx / "script.json");
    double initial = score_rules(pairs, RuleSet::bundled(), *fresh_a, cfg);
    double learned = score_rules(pairs, result.rules, *fresh_b, cfg);
    c.expect(learned >= initial, "learned rules score below the initial set");
    c.near(learned, result.final_score, 1e-12, "reported final score");

    testing_support::TempDir dir;
    std::ostringstream out, err;
    int code = run_cli({"--backend", "scripted", "--script", (fx / "script.json").string(), "--out", dir.path().string(),
                        "apo", "--pairs", (fx / "pairs.jsonl").string()},
                       out, err);
    c.expect(code == kExitOk, "apo command failed: " + err.str());
    c.expect(out.str().find("DeltaBLEU before=") != std::string::npos && out.str().find(" after=") != std::string::npos,
             "no before/after line");
}

// 8: parser fuzz
void parser_fuzz(Checks& c) {
    std::mt19937 rng(8);
    const std::vector<std::string> fragments{"1. ", "- ", "* ", "[", "]", "\"", "```json\n", "```", "SCORE ", ": ",
                                             "psoriasis", "chronic eczema", "FINAL_DIAGNOSIS:", "TERMINATE", "\n",
                                             "10", "0", "-3", "99999999999999999999", "{", "}", ",", "**", "\xff\xfe",
                                             "\xc3\xa9", " "};
    auto set = CandidateSet({ConditionName::parse("psoriasis"), ConditionName::parse("chronic eczema")},
                            RetrievalStrategy::ExpertCot, "fuzz");
    std::uniform_int_distribution<int> byte(0, 255), coin(0, 1), count(0, 40);
    std::uniform_int_distribution<std::size_t> frag(0, fragments.size() - 1);
    std::size_t foreign = 0;
    for (int i = 0; i < 10000; ++i) {
        std::string input;
        int n = count(rng);
        bool raw = coin(rng) == 0;
        for (int k = 0; k < n; ++k) input += raw ? std::string(1, static_cast<char>(byte(rng))) : fragments[frag(rng)];
        auto guard = [&](auto&& fn) {
            try {
                fn();
            } catch (const Error&) {
            } catch (...) {
                ++foreign;
            }
        };
        guard([&] {
            for (const auto& name : parse_candidate_list(input))
                if (name.normalized().empty()) ++foreign;
        });
        guard([&] {
            for (const auto& s : parse_scores(input, set))
                if (s.score < 1 || s.score > 10 || !set.contains(s.name)) ++foreign;
        });
        guard([&] {
            if (!set.contains(extract_final_diagnosis(input, set))) ++foreign;
        });
    }
    c.expect(foreign == 0, std::to_string(foreign) + " inputs escaped as non-library errors or invalid values");
}

} // namespace

int main() {
    spdlog::set_level(spdlog::level::off);
    using namespace std::chrono_literals;
    const std::vector<Criterion> criteria{
        {1, "retrieval accuracy ratios", 1ms, retrieval_ratios},
        {2, "top-k accuracy tables", 0ms, topk_tables},
        {3, "MAC protocol suite", 5000ms, mac_protocol},
        {4, "BLEU oracle", 0ms, bleu_oracle},
        {5, "record/replay round trip", 30000ms, record_replay},
        {6, "similarity judge", 0ms, judge_suite},
        {7, "APO monotonicity", 0ms, apo_monotone},
        {8, "parser fuzz floor", 0ms, parser_fuzz},
    };
    int failed = 0;
    for (const auto& cr : criteria) {
        Checks checks;
        auto start = std::chrono::steady_clock::now();
        try {
            cr.body(checks);
        } catch (const std::exception& e) {
            checks.failures.push_back(std::string("unexpected exception: ") + e.what());
        }
        auto took = std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - start);
        if (cr.limit.count() > 0 && took > cr.limit)
            checks.failures.push_back("took " + std::to_string(took.count()) + " us, limit " +
                                      std::to_string(cr.limit.count()) + " ms");
        bool ok = checks.failures.empty();
        if (!ok) ++failed;
        std::cout << (ok ? "PASS" : "FAIL") << " criterion " << cr.id << ": " << cr.title << " (" << took.count()
                  << " us)\n";
        for (const auto& f : checks.failures) std::cout << "    " << f << "\n";
    }
    std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed\n";
    return failed == 0 ? 0 : 1;
}
