#include "dermdx/case_model.hpp"
#include "dermdx/error.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

using namespace dermdx;
using testing_support::TempDir;

TEST(ConditionName, NormalizesCaseSpaceAndTrailingPunctuation) {
    auto n = ConditionName::parse("  Chronic   ECZEMA.;  ");
    EXPECT_EQ(n.normalized(), "chronic eczema");
    EXPECT_EQ(n.raw(), "  Chronic   ECZEMA.;  ");
    EXPECT_EQ(n, ConditionName::parse("chronic eczema"));
    EXPECT_EQ(normalized_form("Tinea\tPedis!?"), "tinea pedis");
}

TEST(ConditionName, NormalizationIsIdempotent) {
    for (const char* raw : {"Psoriasis", "  a  B  c ", "Post-Inflammatory  Hypopigmentation.", "Lichen planus!!"}) {
        auto once = normalized_form(raw);
        EXPECT_EQ(normalized_form(once), once) << raw;
    }
}

TEST(ConditionName, RejectsNamesWithoutLetters) {
    EXPECT_THROW(ConditionName::parse(""), EmptyName);
    EXPECT_THROW(ConditionName::parse(" 12 .,"), EmptyName);
    EXPECT_EQ(normalized_form("..."), "");
}

TEST(ImagePayload, SniffsMediaType) {
    auto png = ImagePayload::from_bytes("a.png", testing_support::png_bytes());
    EXPECT_EQ(png.media_type(), MediaType::png);
    auto jpg = ImagePayload::from_bytes("a.jpg", testing_support::jpeg_bytes());
    EXPECT_EQ(jpg.media_type(), MediaType::jpeg);
    EXPECT_THROW(ImagePayload::from_bytes("a.gif", "GIF89a...."), ImageError);
    EXPECT_EQ(png.sha256().size(), 64u);
}

TEST(ImagePayload, EncodedRoundTrip) {
    auto png = ImagePayload::from_bytes("a.png", testing_support::png_bytes());
    auto back = ImagePayload::from_encoded("a.png", png.encoded());
    EXPECT_EQ(back, png);
    EXPECT_EQ(back.bytes(), png.bytes());
    EXPECT_EQ(png.data_uri().rfind("data:image/png;base64,", 0), 0u);
}

TEST(ImagePayload, ReferenceHasNoBytesButSameIdentity) {
    auto png = ImagePayload::from_bytes("a.png", testing_support::png_bytes());
    auto ref = ImagePayload::reference("a.png", MediaType::png, png.sha256());
    EXPECT_FALSE(ref.has_bytes());
    EXPECT_EQ(ref, png);
}

class DatasetTest : public ::testing::Test {
protected:
    void SetUp() override {
        testing_support::write_file(dir / "img/a.png", testing_support::png_bytes());
        testing_support::write_file(dir / "img/b.jpg", testing_support::jpeg_bytes());
    }
    TempDir dir;
};

TEST_F(DatasetTest, ParsesRecords) {
    auto ds = parse_dataset(
        R"({"case_id":"c1","query":"itchy","image_paths":["img/a.png"],"ground_truth":"Psoriasis","split":"test","reference_response":"Psoriasis."})"
        "\n\n"
        R"({"case_id":"c2","image_paths":["img/b.jpg","img/a.png"],"ground_truth":null})"
        "\n",
        dir.path());
    ASSERT_EQ(ds.total(), 2u);
    EXPECT_EQ(ds.with_ground_truth(), 1u);
    const auto* c1 = ds.find("c1");
    ASSERT_NE(c1, nullptr);
    EXPECT_EQ(c1->ground_truth->normalized(), "psoriasis");
    EXPECT_EQ(c1->split, Split::test);
    EXPECT_EQ(*c1->reference_response, "Psoriasis.");
    const auto* c2 = ds.find("c2");
    EXPECT_TRUE(c2->query.empty());
    EXPECT_FALSE(c2->ground_truth);
    EXPECT_EQ(c2->split, Split::validation);
    EXPECT_EQ(c2->images.size(), 2u);
    EXPECT_EQ(ds.find("zz"), nullptr);
}

TEST_F(DatasetTest, ReportsLineNumbers) {
    try {
        parse_dataset(R"({"case_id":"c1","image_paths":["img/a.png"]})"
                      "\n"
                      R"({"case_id":"c2","image_paths":[]})",
                      dir.path());
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2u);
    }
    try {
        parse_dataset("{not json", dir.path());
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 1u);
    }
}

TEST_F(DatasetTest, RejectsBadFields) {
    EXPECT_THROW(parse_dataset(R"({"image_paths":["img/a.png"]})", dir.path()), ParseError);
    EXPECT_THROW(parse_dataset(R"({"case_id":"c","image_paths":["img/a.png"],"ground_truth":"  "})", dir.path()),
                 ParseError);
    EXPECT_THROW(parse_dataset(R"({"case_id":"c","image_paths":["img/a.png"],"split":"dev"})", dir.path()),
                 ParseError);
    EXPECT_THROW(parse_dataset(R"({"case_id":"c","image_paths":["img/missing.png"]})", dir.path()), Error);
}

TEST_F(DatasetTest, RejectsDuplicateIds) {
    EXPECT_THROW(parse_dataset(R"({"case_id":"c","image_paths":["img/a.png"]})"
                               "\n"
                               R"({"case_id":"c","image_paths":["img/b.jpg"]})",
                               dir.path()),
                 DuplicateCaseId);
}

TEST_F(DatasetTest, SerializeRoundTrip) {
    auto ds = parse_dataset(
        R"({"case_id":"c1","query":"itchy \"rash\"","image_paths":["img/a.png"],"ground_truth":"Psoriasis","split":"train"})"
        "\n"
        R"({"case_id":"c2","image_paths":["img/b.jpg"],"reference_response":"Eczema."})",
        dir.path());
    auto again = parse_dataset(serialize_dataset(ds), dir.path());
    EXPECT_EQ(again, ds);
}

TEST_F(DatasetTest, LoadMissingFileIsDatasetError) {
    EXPECT_THROW(load_dataset(dir / "nope.jsonl"), DatasetError);
}

TEST(Dataset, CaseWithoutImagesIsRejected) {
    DermCase c;
    c.case_id = "x";
    EXPECT_THROW(Dataset({c}), PreconditionError);
}

TEST(Dataset, BundledFixtureLoads) {
    auto ds = load_dataset(testing_support::fixtures() / "synthetic10/dataset.jsonl");
    EXPECT_EQ(ds.total(), 10u);
    EXPECT_EQ(ds.with_ground_truth(), 9u);
}
