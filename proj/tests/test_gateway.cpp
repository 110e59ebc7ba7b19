#include "dermdx/error.hpp"
#include "dermdx/gateway.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

using namespace dermdx;

namespace {

Conversation sample() {
    Conversation c;
    c.messages.push_back(ChatMessage::system("be brief"));
    c.messages.push_back(ChatMessage::user("what is this?",
                                           {ImagePayload::from_bytes("a.png", testing_support::png_bytes())}));
    c.messages.push_back(ChatMessage::assistant("psoriasis", std::string("Rick")));
    return c;
}

} // namespace

TEST(Conversation, ValidateAcceptsWellFormed) { EXPECT_NO_THROW(validate(sample())); }

TEST(Conversation, ValidateRejectsMisplacedSystemMessage) {
    auto c = sample();
    c.messages.push_back(ChatMessage::system("late"));
    EXPECT_THROW(validate(c), PreconditionError);
}

TEST(Conversation, ValidateRejectsImageOutsideUser) {
    auto c = sample();
    c.messages[2].parts.emplace_back(ImagePayload::from_bytes("a.png", testing_support::png_bytes()));
    EXPECT_THROW(validate(c), PreconditionError);
}

TEST(Conversation, ValidateRejectsEmptyMessage) {
    Conversation c;
    c.messages.push_back(ChatMessage{Role::user, std::nullopt, {}});
    EXPECT_THROW(validate(c), PreconditionError);
}

TEST(Conversation, TextJoinsTextParts) {
    auto t = conversation_text(sample());
    EXPECT_NE(t.find("be brief"), std::string::npos);
    EXPECT_NE(t.find("what is this?"), std::string::npos);
    EXPECT_NE(t.find("psoriasis"), std::string::npos);
}

TEST(CanonicalJson, StableAndImageByDigest) {
    auto a = sample();
    auto b = sample();
    EXPECT_EQ(canonical_string(a), canonical_string(b));
    EXPECT_EQ(request_hash(a), request_hash(b));
    EXPECT_EQ(canonical_string(a).find("iVBOR"), std::string::npos);
    EXPECT_EQ(request_hash(a).size(), 64u);
}

TEST(CanonicalJson, AnyChangeChangesHash) {
    auto a = sample();
    auto b = sample();
    b.messages[1] = ChatMessage::user("what is this?", {ImagePayload::from_bytes("a.jpg", testing_support::jpeg_bytes())});
    EXPECT_NE(request_hash(a), request_hash(b));
    auto c = sample();
    std::get<TextPart>(c.messages[0].parts[0]).text += " ";
    EXPECT_NE(request_hash(a), request_hash(c));
}

TEST(CanonicalJson, RoundTripKeepsHash) {
    auto a = sample();
    auto back = conversation_from_json(canonical_json(a));
    EXPECT_EQ(request_hash(back), request_hash(a));
    EXPECT_EQ(back.messages[2].speaker, std::optional<std::string>("Rick"));
}

TEST(GatewayConfig, Validate) {
    GatewayConfig g;
    EXPECT_NO_THROW(g.validate());
    g.temperature = 3.0;
    EXPECT_THROW(g.validate(), ConfigError);
    g = GatewayConfig{};
    g.max_retries = -1;
    EXPECT_THROW(g.validate(), ConfigError);
    g = GatewayConfig{};
    g.rate_limit_per_minute = 0;
    EXPECT_THROW(g.validate(), ConfigError);
    g = GatewayConfig{};
    g.model_name.clear();
    EXPECT_THROW(g.validate(), ConfigError);
}

TEST(Stage, NamesRoundTrip) {
    for (auto s : {Stage::retrieval, Stage::rerank, Stage::mac, Stage::align, Stage::judge, Stage::apo})
        EXPECT_EQ(stage_from_string(to_string(s)), s);
    EXPECT_THROW(stage_from_string("bogus"), Error);
}

TEST(CallRecord, JsonRoundTrip) {
    CallRecord r;
    r.run_id = "run";
    r.case_id = "c1";
    r.stage = Stage::mac;
    r.turn_index = 3;
    r.request = sample();
    r.request_hash = request_hash(r.request);
    r.response = "TERMINATE";
    r.model_name = "m";
    r.temperature = 0.0;
    r.timestamp = utc_timestamp();
    auto back = CallRecord::from_json(r.to_json());
    EXPECT_EQ(back.case_id, "c1");
    EXPECT_EQ(back.stage, Stage::mac);
    EXPECT_EQ(back.turn_index, 3u);
    EXPECT_EQ(back.request_hash, r.request_hash);
    EXPECT_EQ(back.response, "TERMINATE");
}

TEST(CallRecord, HashMismatchIsParseError) {
    CallRecord r;
    r.case_id = "c1";
    r.request = sample();
    r.request_hash = std::string(64, '0');
    EXPECT_THROW(CallRecord::from_json(r.to_json()), ParseError);
}

TEST(CallRecord, TimestampIsIsoUtc) {
    auto ts = utc_timestamp();
    ASSERT_GE(ts.size(), 20u);
    EXPECT_EQ(ts[4], '-');
    EXPECT_EQ(ts[10], 'T');
    EXPECT_EQ(ts.back(), 'Z');
}
