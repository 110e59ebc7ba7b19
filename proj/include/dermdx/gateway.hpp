#pragma once

#include "dermdx/case_model.hpp"

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace dermdx {

enum class Role { system, user, assistant };

std::string_view to_string(Role r) noexcept;

struct TextPart {
    std::string text;
};

using Part = std::variant<TextPart, ImagePayload>;

struct ChatMessage {
    Role role = Role::user;
    std::optional<std::string> speaker; ///< agent name inside a MAC run
    std::vector<Part> parts;

    static ChatMessage system(std::string text);
    static ChatMessage user(std::string text, const std::vector<ImagePayload>& images = {});
    static ChatMessage assistant(std::string text, std::optional<std::string> speaker = std::nullopt);

    /// Concatenation of the text parts.
    std::string text() const;
};

struct Conversation {
    std::vector<ChatMessage> messages;

    bool empty() const noexcept { return messages.empty(); }
};

/// Throws PreconditionError when a message has no parts, an image sits in a
/// non-user message, or a system message appears anywhere but first.
void validate(const Conversation& conversation);

/// Key-sorted, whitespace-free JSON with images reduced to media type and
/// SHA-256. Equal conversations serialize identically.
nlohmann::json canonical_json(const Conversation& conversation);
std::string canonical_string(const Conversation& conversation);
std::string request_hash(const Conversation& conversation);

/// Inverse of canonical_json; images come back as digest-only references.
Conversation conversation_from_json(const nlohmann::json& j);

/// All text parts of all messages, joined by newlines.
std::string conversation_text(const Conversation& conversation);

struct GatewayConfig {
    std::string endpoint_url = "https://api.openai.com/v1/chat/completions";
    std::string model_name = "gpt-4-vision-preview";
    double temperature = 0.0;
    int max_retries = 3;
    std::chrono::milliseconds backoff_base{500};
    double rate_limit_per_minute = 60.0;
    std::uint64_t seed = 0;
    std::string image_detail = "auto";
    std::chrono::seconds timeout{120};

    /// Throws ConfigError.
    void validate() const;
};

enum class Stage { retrieval, rerank, mac, align, judge, apo };

std::string_view to_string(Stage s) noexcept;
Stage stage_from_string(std::string_view s);

/// Who is calling. Turn indices are derived per (case_id, stage) by the
/// backends that need them.
struct CallContext {
    std::string case_id;
    Stage stage = Stage::retrieval;
};

struct CallRequest {
    const Conversation& conversation;
    const GatewayConfig& config;
    const CallContext& context;
};

/// A chat-completion transport. Implementations must be callable from
/// several threads at once.
class Backend {
public:
    virtual ~Backend() = default;

    std::string complete(const CallRequest& request) {
        calls_.fetch_add(1, std::memory_order_relaxed);
        return do_complete(request);
    }

    std::size_t call_count() const noexcept { return calls_.load(std::memory_order_relaxed); }

private:
    virtual std::string do_complete(const CallRequest& request) = 0;

    std::atomic<std::size_t> calls_{0};
};

/// Validates the conversation and forwards it to `backend`.
std::string complete(const Conversation& conversation, const GatewayConfig& config,
                     Backend& backend, const CallContext& context);

struct CallRecord {
    std::string run_id;
    std::string case_id;
    Stage stage = Stage::retrieval;
    std::size_t turn_index = 0;
    std::string request_hash;
    Conversation request;
    std::string response;
    std::string model_name;
    double temperature = 0.0;
    std::string timestamp; ///< ISO-8601 UTC

    nlohmann::json to_json() const;
    /// Throws ParseError(0, ...) on schema violations or a hash mismatch.
    static CallRecord from_json(const nlohmann::json& j);
};

std::string utc_timestamp();

} // namespace dermdx
