#include "dermdx/backends.hpp"
#include "dermdx/error.hpp"
#include "dermdx/retrieval.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

using namespace dermdx;

namespace {

DermCase make_case(const std::string& id, const std::string& query) {
    DermCase c;
    c.case_id = id;
    c.query = query;
    c.images.push_back(ImagePayload::from_bytes(id + ".png", testing_support::png_bytes()));
    return c;
}

std::vector<std::string> names(const std::vector<ConditionName>& v) {
    std::vector<std::string> out;
    for (const auto& n : v) out.push_back(n.normalized());
    return out;
}

using Names = std::vector<std::string>;

} // namespace

TEST(ParseCandidateList, FencedJsonWins) {
    auto r = parse_candidate_list("1. Psoriasis\n2. Eczema\n```json\n[\"Tinea corporis\", \"Psoriasis\"]\n```\n");
    EXPECT_EQ(names(r), (Names{"tinea corporis", "psoriasis"}));
}

TEST(ParseCandidateList, TrailingArray) {
    auto r = parse_candidate_list("Reasoning [step 1] done.\n[\"Acne vulgaris\", \"Rosacea\"]");
    EXPECT_EQ(names(r), (Names{"acne vulgaris", "rosacea"}));
}

TEST(ParseCandidateList, NumberedAndBulletedLists) {
    EXPECT_EQ(names(parse_candidate_list("1. **Psoriasis**: silvery scale\n2) Eczema - itchy\n3: Tinea")),
              (Names{"psoriasis", "eczema", "tinea"}));
    EXPECT_EQ(names(parse_candidate_list("- Urticaria\n* Insect bites\n")), (Names{"urticaria", "insect bites"}));
}

TEST(ParseCandidateList, DeduplicatesByNormalizedForm) {
    auto r = parse_candidate_list("[\"Psoriasis\", \"psoriasis.\", \"  PSORIASIS \", \"Eczema\"]");
    EXPECT_EQ(names(r), (Names{"psoriasis", "eczema"}));
    EXPECT_EQ(r[0].raw(), "Psoriasis");
}

TEST(ParseCandidateList, NothingUsableThrows) {
    EXPECT_THROW(parse_candidate_list(""), NoCandidatesFound);
    EXPECT_THROW(parse_candidate_list("I cannot tell from this image."), NoCandidatesFound);
    EXPECT_THROW(parse_candidate_list("[1, 2, 3]"), NoCandidatesFound);
    EXPECT_THROW(parse_candidate_list("[\"...\", \"42\"]"), NoCandidatesFound);
}

TEST(CandidateSet, DedupTruncateAndLookup) {
    std::vector<ConditionName> v;
    for (const char* n : {"A rash", "b rash", "A RASH", "c rash", "d rash"}) v.push_back(ConditionName::parse(n));
    CandidateSet s(v, RetrievalStrategy::NaiveCot, "c1", 3);
    EXPECT_EQ(s.size(), 3u);
    EXPECT_EQ(s.normalized_names(), (Names{"a rash", "b rash", "c rash"}));
    EXPECT_EQ(s.index_of("c rash"), std::optional<std::size_t>(2));
    EXPECT_FALSE(s.contains(ConditionName::parse("d rash")));
    EXPECT_THROW(CandidateSet({}, RetrievalStrategy::NaiveCot, "c1"), NoCandidatesFound);
    EXPECT_THROW(CandidateSet(v, RetrievalStrategy::NaiveCot, "c1", 0), PreconditionError);
}

TEST(CandidateSet, JsonRoundTripAndFormat) {
    CandidateSet s({ConditionName::parse("Prurigo nodularis"), ConditionName::parse("Chronic eczema")},
                   RetrievalStrategy::ExpertCot, "c1");
    auto back = CandidateSet::from_json(s.to_json());
    EXPECT_EQ(back.normalized_names(), s.normalized_names());
    EXPECT_EQ(back.strategy(), RetrievalStrategy::ExpertCot);
    EXPECT_EQ(back.source_case(), "c1");
    EXPECT_EQ(format_candidates(s), "['prurigo nodularis', 'chronic eczema']");
}

TEST(RetrievalStrategy, Names) {
    for (auto s : {RetrievalStrategy::ImageOnly, RetrievalStrategy::NaiveCot, RetrievalStrategy::ExpertCot})
        EXPECT_EQ(retrieval_strategy_from_string(to_string(s)), s);
    EXPECT_THROW(retrieval_strategy_from_string("gpt"), ConfigError);
}

TEST(RetrievalPrompt, ImageOnlyLeavesOutTheQuery) {
    auto c = make_case("c1", "UNIQUE-QUERY-TEXT");
    auto img = build_retrieval_prompt(c, RetrievalStrategy::ImageOnly);
    auto naive = build_retrieval_prompt(c, RetrievalStrategy::NaiveCot);
    auto expert = build_retrieval_prompt(c, RetrievalStrategy::ExpertCot);
    EXPECT_EQ(conversation_text(img).find("UNIQUE-QUERY-TEXT"), std::string::npos);
    EXPECT_NE(conversation_text(naive).find("UNIQUE-QUERY-TEXT"), std::string::npos);
    EXPECT_NE(conversation_text(expert).find("UNIQUE-QUERY-TEXT"), std::string::npos);
    EXPECT_NE(conversation_text(naive), conversation_text(expert));
    for (const auto* conv : {&img, &naive, &expert}) {
        ASSERT_EQ(conv->messages.size(), 1u);
        EXPECT_EQ(conv->messages[0].parts.size(), 2u); // text + image
        EXPECT_NE(conversation_text(*conv).find(kCandidateListInstruction), std::string::npos);
    }
}

TEST(Retrieve, UsesBackendAndCaps) {
    ScriptedBackend b({"[\"a rash\", \"b rash\", \"c rash\"]"});
    RetrievalConfig cfg;
    cfg.max_candidates = 2;
    auto s = retrieve(make_case("c1", "q"), RetrievalStrategy::NaiveCot, b, cfg);
    EXPECT_EQ(s.normalized_names(), (Names{"a rash", "b rash"}));
    EXPECT_EQ(b.call_count(), 1u);
}

TEST(RetrieveBatch, FailuresStayPerCase) {
    ScriptedBackend b;
    b.add_entry({std::string("ok"), Stage::retrieval, std::nullopt, {"[\"psoriasis\"]"}, false});
    b.add_entry({std::string("bad"), Stage::retrieval, std::nullopt, {"no idea"}, false});
    std::vector<DermCase> cases{make_case("ok", "q"), make_case("bad", "q"), make_case("missing", "q")};
    auto results = retrieve_batch(cases, RetrievalStrategy::ExpertCot, b, RetrievalConfig{}, PromptLibrary::bundled(), 3);
    ASSERT_EQ(results.size(), 3u);
    EXPECT_TRUE(results[0].candidates);
    EXPECT_TRUE(results[0].error.empty());
    EXPECT_FALSE(results[1].candidates);
    EXPECT_FALSE(results[1].error.empty());
    EXPECT_FALSE(results[2].candidates);
}
