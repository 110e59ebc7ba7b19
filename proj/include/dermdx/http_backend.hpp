#pragma once

#include "dermdx/gateway.hpp"

#include <chrono>
#include <functional>
#include <mutex>
#include <string>

namespace dermdx {

/// Token bucket refilled continuously at `per_minute` tokens per minute,
/// holding at most `burst` tokens.
class TokenBucket {
public:
    using Clock = std::chrono::steady_clock;

    TokenBucket(double per_minute, double burst);

    /// Takes a token if one is available at `now`.
    bool try_acquire(Clock::time_point now);
    /// Time until a token will be available at `now` (zero if one is).
    Clock::duration wait_time(Clock::time_point now);
    /// Blocks until a token is taken.
    void acquire();

private:
    void refill(Clock::time_point now);

    std::mutex mutex_;
    double per_second_;
    double burst_;
    double tokens_;
    Clock::time_point last_;
};

/// Request body for an OpenAI-style chat-completions endpoint; image parts
/// become base64 data URIs.
nlohmann::json chat_completion_body(const Conversation& conversation, const GatewayConfig& config);

/// Extracts the assistant text from a chat-completions response body.
/// Throws TransportError if the body does not have that shape.
std::string parse_chat_completion(const std::string& body);

/// Live vision-LLM backend over HTTP(S) with retries and rate limiting.
///
/// Connection failures, 429 and 5xx are retried up to `max_retries` times
/// with exponential backoff (`backoff_base * 2^attempt`). Other statuses fail
/// at once.
class HttpBackend final : public Backend {
public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    HttpBackend(GatewayConfig config, std::string auth_token);

    /// Replaces the backoff sleep, for tests.
    void set_sleeper(Sleeper sleeper) { sleeper_ = std::move(sleeper); }

    std::size_t attempts() const noexcept { return attempts_; }

private:
    std::string do_complete(const CallRequest& request) override;

    GatewayConfig config_;
    std::string token_;
    TokenBucket bucket_;
    Sleeper sleeper_;
    std::atomic<std::size_t> attempts_{0};
};

} // namespace dermdx
