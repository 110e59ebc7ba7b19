#include "dermdx/backends.hpp"
#include "dermdx/error.hpp"
#include "dermdx/mac.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <set>

using namespace dermdx;
using json = nlohmann::json;

namespace {

const std::vector<std::string> kPool{"psoriasis", "chronic eczema", "tinea corporis", "lichen planus",
                                     "seborrheic dermatitis", "pityriasis rosea"};

DermCase make_case(const std::string& id = "m1") {
    DermCase c;
    c.case_id = id;
    c.query = "Itchy plaques for two years.";
    c.images.push_back(ImagePayload::from_bytes(id + ".png", testing_support::png_bytes()));
    return c;
}

CandidateSet first_n(std::size_t n, const std::string& id = "m1") {
    std::vector<ConditionName> v;
    for (std::size_t i = 0; i < n; ++i) v.push_back(ConditionName::parse(kPool[i]));
    return CandidateSet(v, RetrievalStrategy::ExpertCot, id);
}

std::string name_of(std::size_t i) { return "Specialist_" + std::to_string(i + 1); }

std::string marker_reply(const CandidateSet& set, std::size_t own, std::optional<std::size_t> skip = std::nullopt) {
    std::string out = "EVIDENCE:\nThe history fits " + set[own].normalized() + ".\n";
    for (std::size_t i = 0; i < set.size(); ++i) {
        if (i == own || (skip && *skip == i)) continue;
        out += "CRITIQUE " + set[i].raw() + ":\nLess typical here.\n";
    }
    return out;
}

void add(ScriptedBackend& b, const std::string& contains, std::vector<std::string> replies, bool repeat = false) {
    ScriptedBackend::Entry e;
    e.stage = Stage::mac;
    e.contains = contains;
    e.responses.assign(replies.begin(), replies.end());
    e.repeat_last = repeat;
    b.add_entry(std::move(e));
}

/// Specialists and coordinator answer well-formed; admin replies as given.
void script_debate(ScriptedBackend& b, const CandidateSet& set, std::vector<std::string> admin,
                   std::vector<std::string> forced = {}) {
    for (std::size_t i = 0; i < set.size(); ++i)
        add(b, "You are " + name_of(i) + ". Your assigned disease", {marker_reply(set, i)});
    add(b, "All specialists have reported", {"Compiled."});
    add(b, "As the Admin, evaluate the compiled evidence", std::move(admin));
    if (!forced.empty()) add(b, "The revision limit has been reached", std::move(forced));
    for (std::size_t i = 0; i < set.size(); ++i)
        add(b, "You are " + name_of(i) + ". The Admin asked you to refine", {"ENHANCED EVIDENCE:\nMore detail."}, true);
}

std::string finalize(const std::string& name) { return "Decided.\nFINAL_DIAGNOSIS: " + name + "\nTERMINATE"; }

bool has_image(const Conversation& c) {
    for (const auto& m : c.messages)
        for (const auto& p : m.parts)
            if (std::holds_alternative<ImagePayload>(p)) return true;
    return false;
}

} // namespace

TEST(MacAssign, BijectiveForThreeToFive) {
    MacConfig cfg;
    for (std::size_t n = 3; n <= 5; ++n) {
        auto set = first_n(n);
        auto a = assign_diseases(set, cfg);
        ASSERT_EQ(a.size(), n);
        std::set<std::string> names, diseases;
        for (const auto& x : a) {
            names.insert(x.specialist_name);
            diseases.insert(x.disease.normalized());
        }
        EXPECT_EQ(names.size(), n);
        auto all = set.normalized_names();
        EXPECT_EQ(diseases, std::set<std::string>(all.begin(), all.end()));
    }
}

TEST(MacAssign, BoundsAndNames) {
    MacConfig cfg;
    EXPECT_THROW(assign_diseases(first_n(6), cfg), TooManyCandidates);
    EXPECT_THROW(assign_diseases(first_n(2), cfg), TooFewCandidates);
    cfg.specialist_names = {"Rick", "Sam"};
    auto a = assign_diseases(first_n(3), cfg);
    EXPECT_EQ(a[0].specialist_name, "Rick");
    EXPECT_EQ(a[1].specialist_name, "Sam");
    EXPECT_EQ(a[2].specialist_name, "Specialist_3");
}

TEST(MacConfig, Validate) {
    MacConfig cfg;
    EXPECT_NO_THROW(cfg.validate());
    cfg.min_candidates = 6;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = MacConfig{};
    cfg.termination_token.clear();
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = MacConfig{};
    cfg.specialist_names = {"Rick", "Rick"};
    EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(MacBudget, Formula) {
    MacConfig cfg;
    for (std::size_t n = 3; n <= 5; ++n) EXPECT_EQ(mac_call_budget(n, cfg), 1 + n + 1 + 3 * (1 + n) + 1);
    cfg.max_revision_rounds = 0;
    EXPECT_EQ(mac_call_budget(4, cfg), 1 + 4 + 1 + 1 * 5 + 1);
}

TEST(MacTermination, CaseSensitiveSubstring) {
    EXPECT_TRUE(detect_termination("Please **TERMINATE** now", "TERMINATE"));
    EXPECT_FALSE(detect_termination("please terminate", "TERMINATE"));
    EXPECT_FALSE(detect_termination("anything", ""));
}

TEST(MacFinalDiagnosis, Extraction) {
    auto set = first_n(4);
    EXPECT_EQ(extract_final_diagnosis("FINAL_DIAGNOSIS: Chronic Eczema.\nTERMINATE", set).normalized(), "chronic eczema");
    EXPECT_EQ(extract_final_diagnosis("**Final_Diagnosis:** 'lichen planus'", set).normalized(), "lichen planus");
    EXPECT_EQ(extract_final_diagnosis("The answer is clearly psoriasis.", set).normalized(), "psoriasis");
    EXPECT_THROW(extract_final_diagnosis("No idea.", set), NoDiagnosisFound);
    try {
        extract_final_diagnosis("Psoriasis or tinea corporis.", set);
        FAIL();
    } catch (const AmbiguousDiagnosis& e) {
        EXPECT_EQ(e.matches.size(), 2u);
    }
}

TEST(MacSpecialistReply, MarkerFormat) {
    auto set = first_n(3);
    Assignment a{"Specialist_1", set[0]};
    auto f = parse_specialist_reply(marker_reply(set, 0), a, set);
    EXPECT_FALSE(f.evidence.empty());
    ASSERT_EQ(f.critiques.size(), 2u);
    EXPECT_EQ(f.critiques[0].first.normalized(), "chronic eczema");
    EXPECT_TRUE(missing_sections(f, set).empty());

    auto partial = parse_specialist_reply(marker_reply(set, 0, 2), a, set);
    EXPECT_EQ(missing_sections(partial, set), std::vector<std::string>{"tinea corporis"});
    auto empty = parse_specialist_reply("", a, set);
    EXPECT_EQ(missing_sections(empty, set).front(), "evidence");
}

TEST(MacAdminDecision, Parsing) {
    std::vector<std::string> names{"Rick", "Sam", "Emma"};
    auto d = parse_admin_decision("Need more.\nREVISE: Sam, Emma\nPlease expand.", names, "TERMINATE");
    EXPECT_EQ(d.kind, AdminDecision::Kind::RequestRevision);
    EXPECT_EQ(d.targets, (std::vector<std::string>{"Sam", "Emma"}));
    EXPECT_NE(d.instructions.find("Please expand"), std::string::npos);

    auto f = parse_admin_decision("FINAL_DIAGNOSIS: psoriasis\nTERMINATE", names, "TERMINATE");
    EXPECT_EQ(f.kind, AdminDecision::Kind::Finalize);

    EXPECT_THROW(parse_admin_decision("REVISE: Sam\nTERMINATE", names, "TERMINATE"), AmbiguousDecision);
    EXPECT_THROW(parse_admin_decision("Hmm.", names, "TERMINATE"), AmbiguousDecision);
    EXPECT_THROW(parse_admin_decision("REVISE: Bob", names, "TERMINATE"), UnknownSpecialist);
}

TEST(MacPhases, LegalSequences) {
    using K = MacPhaseKind;
    std::vector<MacPhase> ok{{K::Init, 0}, {K::Assignment, 0}, {K::SpecialistAnalysis, 0}, {K::SpecialistAnalysis, 1},
                             {K::SpecialistAnalysis, 2}, {K::Compilation, 0}, {K::AdminEvaluation, 0},
                             {K::Revision, 0}, {K::AdminEvaluation, 0}, {K::FinalDiagnosis, 0}, {K::Terminated, 0}};
    EXPECT_TRUE(is_legal_phase_sequence(ok, 3, 2));
    EXPECT_FALSE(is_legal_phase_sequence(ok, 4, 2));
    EXPECT_FALSE(is_legal_phase_sequence(ok, 3, 0));
    auto skipped = ok;
    skipped.erase(skipped.begin() + 5); // no compilation
    EXPECT_FALSE(is_legal_phase_sequence(skipped, 3, 2));
    auto unterminated = ok;
    unterminated.pop_back();
    EXPECT_FALSE(is_legal_phase_sequence(unterminated, 3, 2));
}

class MacRunN : public ::testing::TestWithParam<std::size_t> {};

TEST_P(MacRunN, ImmediateFinalize) {
    auto n = GetParam();
    auto set = first_n(n);
    ScriptedBackend b;
    script_debate(b, set, {finalize(set[n - 1].normalized())});
    MacEngine engine(b, MacConfig{});
    auto t = engine.run(make_case(), set, "red scaly plaques");
    ASSERT_TRUE(t.final_diagnosis);
    EXPECT_TRUE(set.contains(*t.final_diagnosis));
    EXPECT_EQ(*t.final_diagnosis, set[n - 1]);
    EXPECT_TRUE(t.terminated);
    EXPECT_FALSE(t.forced_finalize);
    EXPECT_EQ(t.llm_calls, n + 2);
    EXPECT_EQ(b.call_count(), t.llm_calls);
    EXPECT_LE(t.llm_calls, t.call_budget);
    EXPECT_EQ(t.findings.size(), n);
    EXPECT_TRUE(is_legal_phase_sequence(t.phases, n, 2));
}

TEST_P(MacRunN, RevisionsStopAtLimitWithForcedFinalize) {
    auto n = GetParam();
    auto set = first_n(n);
    ScriptedBackend b;
    script_debate(b, set, {"Weak.\nREVISE: Specialist_1, Specialist_2\nMore.", "Still weak.\nREVISE: Specialist_2\nMore."},
                  {finalize(set[1].normalized())});
    MacEngine engine(b, MacConfig{});
    auto t = engine.run(make_case(), set, "red scaly plaques");
    EXPECT_EQ(t.refinement_rounds.size(), 2u);
    EXPECT_TRUE(t.forced_finalize);
    EXPECT_FALSE(t.forced_fallback);
    EXPECT_EQ(*t.final_diagnosis, set[1]);
    EXPECT_LE(t.llm_calls, t.call_budget);
    EXPECT_EQ(t.llm_calls, n + 1 + 1 + 2 + 1 + 1 + 1);
    EXPECT_EQ(t.refinement_rounds[0].targets, (std::vector<std::string>{"Specialist_1", "Specialist_2"}));
    EXPECT_EQ(t.refinement_rounds[1].refined_evidence.count("Specialist_2"), 1u);
    EXPECT_TRUE(is_legal_phase_sequence(t.phases, n, 2));
}

INSTANTIATE_TEST_SUITE_P(Sizes, MacRunN, ::testing::Values(3u, 4u, 5u));

TEST(MacRun, SixCandidatesRejectedWithoutCalls) {
    ScriptedBackend b;
    MacEngine engine(b, MacConfig{});
    try {
        engine.run(make_case(), first_n(6), "obs");
        FAIL();
    } catch (const MacRunError& e) {
        EXPECT_THROW(std::rethrow_exception(e.cause), TooManyCandidates);
    }
    EXPECT_EQ(b.call_count(), 0u);
}

TEST(MacRun, UnreadableForcedReplyFallsBackToFirstCandidate) {
    auto set = first_n(3);
    ScriptedBackend b;
    script_debate(b, set, {"REVISE: Specialist_1\nx", "REVISE: Specialist_1\ny"}, {"I cannot decide.", "Still no."});
    MacEngine engine(b, MacConfig{});
    auto t = engine.run(make_case(), set, "obs");
    EXPECT_TRUE(t.forced_finalize);
    EXPECT_TRUE(t.forced_fallback);
    EXPECT_EQ(*t.final_diagnosis, set[0]);
}

TEST(MacRun, ZeroRoundsForcesFirstAdminTurn) {
    auto set = first_n(3);
    ScriptedBackend b;
    script_debate(b, set, {}, {finalize("tinea corporis")});
    MacConfig cfg;
    cfg.max_revision_rounds = 0;
    MacEngine engine(b, cfg);
    auto t = engine.run(make_case(), set, "obs");
    EXPECT_TRUE(t.forced_finalize);
    EXPECT_EQ(t.final_diagnosis->normalized(), "tinea corporis");
    EXPECT_TRUE(t.refinement_rounds.empty());
}

TEST(MacRun, IncompleteSpecialistIsReaskedOnce) {
    auto set = first_n(3);
    ScriptedBackend b;
    add(b, "You are Specialist_1. Your assigned disease", {marker_reply(set, 0, 1), marker_reply(set, 0)});
    script_debate(b, set, {finalize("psoriasis")});
    MacEngine engine(b, MacConfig{});
    auto t = engine.run(make_case(), set, "obs");
    EXPECT_EQ(t.llm_calls, 3 + 1 + 1 + 1);
    EXPECT_EQ(t.findings[0].critiques.size(), 2u);
}

TEST(MacRun, IncompleteTwiceAbortsWithPartialTranscript) {
    auto set = first_n(3);
    ScriptedBackend b;
    add(b, "You are Specialist_1. Your assigned disease", {marker_reply(set, 0, 1)}, true);
    script_debate(b, set, {finalize("psoriasis")});
    MacEngine engine(b, MacConfig{});
    try {
        engine.run(make_case(), set, "obs");
        FAIL();
    } catch (const MacRunError& e) {
        EXPECT_EQ(e.transcript->llm_calls, 2u);
        EXPECT_TRUE(e.transcript->findings.empty());
        EXPECT_FALSE(e.transcript->terminated);
        try {
            std::rethrow_exception(e.cause);
        } catch (const IncompleteFinding& inc) {
            EXPECT_EQ(inc.missing, std::vector<std::string>{"chronic eczema"});
        }
    }
}

TEST(MacRun, AmbiguousAdminReaskedOnceThenFails) {
    auto set = first_n(3);
    ScriptedBackend b;
    script_debate(b, set, {"Hmm.", "REVISE: Specialist_1 and TERMINATE"});
    MacEngine engine(b, MacConfig{});
    try {
        engine.run(make_case(), set, "obs");
        FAIL();
    } catch (const MacRunError& e) {
        EXPECT_EQ(e.transcript->llm_calls, 3u + 1 + 2);
        EXPECT_THROW(std::rethrow_exception(e.cause), AmbiguousDecision);
    }
}

TEST(MacRun, UnknownSpecialistAborts) {
    auto set = first_n(3);
    ScriptedBackend b;
    script_debate(b, set, {"REVISE: Dr. House\nplease"});
    MacEngine engine(b, MacConfig{});
    try {
        engine.run(make_case(), set, "obs");
        FAIL();
    } catch (const MacRunError& e) {
        EXPECT_THROW(std::rethrow_exception(e.cause), UnknownSpecialist);
    }
}

TEST(MacRun, EmptyCoordinatorFallsBackToRendering) {
    auto set = first_n(3);
    ScriptedBackend b;
    add(b, "All specialists have reported", {"   "});
    script_debate(b, set, {finalize("psoriasis")});
    MacEngine engine(b, MacConfig{});
    auto t = engine.run(make_case(), set, "obs");
    EXPECT_TRUE(t.consolidation_fallback);
    EXPECT_EQ(t.consolidation, render_consolidation(t.findings));
    EXPECT_NE(t.consolidation.find("chronic eczema"), std::string::npos);
}

TEST(MacRun, BudgetStopsRunawayDebate) {
    auto set = first_n(3);
    ScriptedBackend b;
    for (std::size_t i = 0; i < 3; ++i) {
        add(b, "You are " + name_of(i) + ". Your assigned disease", {marker_reply(set, i)});
        add(b, "You are " + name_of(i) + ". The Admin asked you to refine", {"", "ENHANCED EVIDENCE: more"}, false);
        add(b, "You are " + name_of(i) + ". The Admin asked you to refine", {"", "ENHANCED EVIDENCE: more"}, false);
    }
    add(b, "All specialists have reported", {"Compiled."});
    add(b, "As the Admin, evaluate the compiled evidence", {"REVISE: Specialist_1, Specialist_2, Specialist_3\nall"}, true);
    add(b, "The revision limit has been reached", {finalize("psoriasis")});
    MacEngine engine(b, MacConfig{});
    try {
        engine.run(make_case(), set, "obs");
        FAIL();
    } catch (const MacRunError& e) {
        EXPECT_EQ(e.transcript->llm_calls, e.transcript->call_budget);
        EXPECT_THROW(std::rethrow_exception(e.cause), CallBudgetExhausted);
    }
    EXPECT_EQ(b.call_count(), mac_call_budget(3, MacConfig{}));
}

TEST(MacRun, ImagesOnlyReachSpecialists) {
    auto set = first_n(3);
    ScriptedBackend b;
    script_debate(b, set, {"REVISE: Specialist_3\nmore", finalize("psoriasis")});
    MacEngine engine(b, MacConfig{});
    engine.run(make_case(), set, "obs");
    for (const auto& req : b.requests()) {
        auto text = conversation_text(req);
        bool specialist = text.find("Your assigned disease") != std::string::npos ||
                          text.find("asked you to refine") != std::string::npos;
        EXPECT_EQ(has_image(req), specialist) << text.substr(text.size() - 120);
    }
}

TEST(MacRun, ChatLogSpeakers) {
    auto set = first_n(3);
    ScriptedBackend b;
    script_debate(b, set, {finalize("psoriasis")});
    MacEngine engine(b, MacConfig{});
    auto t = engine.run(make_case(), set, "obs");
    std::vector<std::string> speakers;
    for (const auto& m : t.messages.messages) speakers.push_back(m.speaker.value_or("?"));
    EXPECT_EQ(speakers, (std::vector<std::string>{"Admin", "Coordinator", "Specialist_1", "Specialist_2",
                                                  "Specialist_3", "Coordinator", "Admin"}));
    auto j = t.to_json();
    EXPECT_EQ(j["final_diagnosis"], "psoriasis");
    EXPECT_EQ(j["llm_calls"], 5);
    EXPECT_TRUE(j.contains("phases"));
}

TEST(MacRankOutcome, FinalFirstRestInOrder) {
    auto set = first_n(4);
    ScriptedBackend b;
    script_debate(b, set, {finalize("tinea corporis")});
    MacEngine engine(b, MacConfig{});
    auto t = engine.run(make_case(), set, "obs");
    auto o = mac_rank_outcome(t, set);
    std::vector<std::string> r;
    for (const auto& x : o.ranking) r.push_back(x.normalized());
    EXPECT_EQ(r, (std::vector<std::string>{"tinea corporis", "psoriasis", "chronic eczema", "lichen planus"}));
    EXPECT_EQ(o.strategy, RerankStrategy::Mac);
    EXPECT_EQ(o.transcript_ref, "mac/m1.json");
}

TEST(MacObservation, FallsBackToQuery) {
    ScriptedBackend ok({"Erythematous plaques."});
    auto c = make_case();
    auto o = obtain_observation(c, ok, GatewayConfig{});
    EXPECT_EQ(o.text, "Erythematous plaques.");
    EXPECT_EQ(o.source, "image_description");
    ASSERT_EQ(ok.requests().size(), 1u);
    EXPECT_TRUE(has_image(ok.requests()[0]));

    ScriptedBackend empty({"  "});
    EXPECT_EQ(obtain_observation(c, empty, GatewayConfig{}).source, "query");
    ScriptedBackend none;
    auto fb = obtain_observation(c, none, GatewayConfig{});
    EXPECT_EQ(fb.text, c.query);
    EXPECT_EQ(fb.source, "query");
}

TEST(MacAppendix, ChronicEczema) {
    auto dir = testing_support::fixtures() / "mac_appendix";
    auto fx = json::parse(testing_support::slurp(dir / "case.json"));
    auto backend = ScriptedBackend::from_file(dir / "script.json");

    DermCase c;
    c.case_id = fx["case_id"];
    c.query = fx["query"];
    std::vector<ConditionName> names;
    for (const auto& n : fx["candidates"]) names.push_back(ConditionName::parse(n.get<std::string>()));
    CandidateSet set(names, RetrievalStrategy::NaiveCot, c.case_id);
    MacConfig cfg;
    cfg.specialist_names = fx["specialist_names"].get<std::vector<std::string>>();

    MacEngine engine(*backend, cfg);
    auto t = engine.run(c, set, fx["observation"].get<std::string>());
    ASSERT_TRUE(t.final_diagnosis);
    EXPECT_EQ(*t.final_diagnosis, ConditionName::parse(fx["ground_truth"].get<std::string>()));
    EXPECT_EQ(t.assignments[0].specialist_name, "Rick");
    EXPECT_EQ(t.assignments[0].disease.normalized(), "prurigo nodularis");
    EXPECT_EQ(t.findings[0].critiques.size(), 4u); // numbered critique list
    ASSERT_EQ(t.refinement_rounds.size(), 1u);
    EXPECT_EQ(t.refinement_rounds[0].targets, std::vector<std::string>{"Sam"});
    EXPECT_FALSE(t.forced_finalize);
    EXPECT_EQ(t.llm_calls, 5u + 1 + 1 + 1 + 1);
    EXPECT_TRUE(is_legal_phase_sequence(t.phases, 5, 2));
    EXPECT_NE(t.messages.messages.front().text().find("['prurigo nodularis', 'chronic eczema', 'psoriasis', "
                                                      "'lichen simplex chronicus', 'allergic or irritant contact "
                                                      "dermatitis']"),
              std::string::npos);
}
