#include "dermdx/gateway.hpp"

#include "dermdx/digest.hpp"
#include "dermdx/error.hpp"

#include <ctime>

namespace dermdx {

using json = nlohmann::json;

std::string_view to_string(Role r) noexcept {
    switch (r) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
    }
    return "user";
}

namespace {

Role role_from_string(std::string_view s) {
    if (s == "system") return Role::system;
    if (s == "user") return Role::user;
    if (s == "assistant") return Role::assistant;
    throw PreconditionError("unknown role '" + std::string(s) + "'");
}

} // namespace

ChatMessage ChatMessage::system(std::string text) {
    return ChatMessage{Role::system, std::nullopt, {TextPart{std::move(text)}}};
}

ChatMessage ChatMessage::user(std::string text, const std::vector<ImagePayload>& images) {
    ChatMessage m{Role::user, std::nullopt, {TextPart{std::move(text)}}};
    for (const auto& img : images) m.parts.emplace_back(img);
    return m;
}

ChatMessage ChatMessage::assistant(std::string text, std::optional<std::string> speaker) {
    return ChatMessage{Role::assistant, std::move(speaker), {TextPart{std::move(text)}}};
}

std::string ChatMessage::text() const {
    std::string out;
    for (const auto& p : parts) {
        if (const auto* t = std::get_if<TextPart>(&p)) out += t->text;
    }
    return out;
}

void validate(const Conversation& conversation) {
    for (std::size_t i = 0; i < conversation.messages.size(); ++i) {
        const auto& m = conversation.messages[i];
        if (m.parts.empty()) throw PreconditionError("message " + std::to_string(i) + " has no parts");
        if (m.role == Role::system && i != 0)
            throw PreconditionError("system message must be first");
        if (m.role != Role::user) {
            for (const auto& p : m.parts) {
                if (std::holds_alternative<ImagePayload>(p))
                    throw PreconditionError("image part outside a user message");
            }
        }
    }
}

json canonical_json(const Conversation& conversation) {
    json msgs = json::array();
    for (const auto& m : conversation.messages) {
        json parts = json::array();
        for (const auto& p : m.parts) {
            if (const auto* t = std::get_if<TextPart>(&p)) {
                parts.push_back({{"type", "text"}, {"text", t->text}});
            } else {
                const auto& img = std::get<ImagePayload>(p);
                parts.push_back({{"type", "image"},
                                 {"media_type", std::string(to_string(img.media_type()))},
                                 {"sha256", img.sha256()}});
            }
        }
        json jm = {{"role", std::string(to_string(m.role))}, {"parts", std::move(parts)}};
        if (m.speaker) jm["name"] = *m.speaker;
        msgs.push_back(std::move(jm));
    }
    return json{{"messages", std::move(msgs)}};
}

std::string canonical_string(const Conversation& conversation) {
    return canonical_json(conversation).dump();
}

std::string request_hash(const Conversation& conversation) {
    return digest::sha256_hex(canonical_string(conversation));
}

Conversation conversation_from_json(const json& j) {
    Conversation c;
    for (const auto& jm : j.at("messages")) {
        ChatMessage m;
        m.role = role_from_string(jm.at("role").get<std::string>());
        if (jm.contains("name")) m.speaker = jm.at("name").get<std::string>();
        for (const auto& jp : jm.at("parts")) {
            auto type = jp.at("type").get<std::string>();
            if (type == "text") {
                m.parts.emplace_back(TextPart{jp.at("text").get<std::string>()});
            } else if (type == "image") {
                m.parts.emplace_back(ImagePayload::reference(
                    "", media_type_from_string(jp.at("media_type").get<std::string>()),
                    jp.at("sha256").get<std::string>()));
            } else {
                throw PreconditionError("unknown part type '" + type + "'");
            }
        }
        c.messages.push_back(std::move(m));
    }
    return c;
}

std::string conversation_text(const Conversation& conversation) {
    std::string out;
    for (const auto& m : conversation.messages) {
        if (!out.empty()) out += '\n';
        out += m.text();
    }
    return out;
}

void GatewayConfig::validate() const {
    if (!(temperature >= 0.0 && temperature <= 2.0))
        throw ConfigError("temperature must lie in [0, 2]");
    if (max_retries < 0 || max_retries > 10) throw ConfigError("max_retries must lie in [0, 10]");
    if (backoff_base.count() < 0) throw ConfigError("backoff_base must be non-negative");
    if (!(rate_limit_per_minute > 0.0)) throw ConfigError("rate_limit must be positive");
    if (model_name.empty()) throw ConfigError("model_name must be set");
}

std::string_view to_string(Stage s) noexcept {
    switch (s) {
    case Stage::retrieval: return "retrieval";
    case Stage::rerank: return "rerank";
    case Stage::mac: return "mac";
    case Stage::align: return "align";
    case Stage::judge: return "judge";
    case Stage::apo: return "apo";
    }
    return "retrieval";
}

Stage stage_from_string(std::string_view s) {
    for (auto st : {Stage::retrieval, Stage::rerank, Stage::mac, Stage::align, Stage::judge, Stage::apo}) {
        if (to_string(st) == s) return st;
    }
    throw PreconditionError("unknown stage '" + std::string(s) + "'");
}

std::string complete(const Conversation& conversation, const GatewayConfig& config,
                     Backend& backend, const CallContext& context) {
    if (conversation.empty()) throw PreconditionError("conversation is empty");
    validate(conversation);
    return backend.complete(CallRequest{conversation, config, context});
}

json CallRecord::to_json() const {
    return json{{"run_id", run_id},
                {"case_id", case_id},
                {"stage", std::string(to_string(stage))},
                {"turn_index", turn_index},
                {"request_hash", request_hash},
                {"request", canonical_json(request)},
                {"response", response},
                {"model_name", model_name},
                {"temperature", temperature},
                {"timestamp", timestamp}};
}

CallRecord CallRecord::from_json(const json& j) {
    CallRecord r;
    try {
        r.run_id = j.at("run_id").get<std::string>();
        r.case_id = j.at("case_id").get<std::string>();
        r.stage = stage_from_string(j.at("stage").get<std::string>());
        r.turn_index = j.at("turn_index").get<std::size_t>();
        r.request_hash = j.at("request_hash").get<std::string>();
        r.request = conversation_from_json(j.at("request"));
        r.response = j.at("response").get<std::string>();
        r.model_name = j.value("model_name", std::string{});
        r.temperature = j.value("temperature", 0.0);
        r.timestamp = j.value("timestamp", std::string{});
    } catch (const json::exception& e) {
        throw ParseError(0, std::string("malformed call record: ") + e.what());
    }
    if (dermdx::request_hash(r.request) != r.request_hash)
        throw ParseError(0, "call record hash does not match its request");
    return r;
}

std::string utc_timestamp() {
    auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

} // namespace dermdx
