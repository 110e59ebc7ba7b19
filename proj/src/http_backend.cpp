#include <httplib.h>

#include "dermdx/http_backend.hpp"

#include "dermdx/error.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <thread>

namespace dermdx {

using json = nlohmann::json;

TokenBucket::TokenBucket(double per_minute, double burst)
    : per_second_(per_minute / 60.0), burst_(std::max(1.0, burst)), tokens_(burst_),
      last_(Clock::now()) {}

void TokenBucket::refill(Clock::time_point now) {
    if (now <= last_) return;
    std::chrono::duration<double> dt = now - last_;
    tokens_ = std::min(burst_, tokens_ + dt.count() * per_second_);
    last_ = now;
}

bool TokenBucket::try_acquire(Clock::time_point now) {
    std::lock_guard lock(mutex_);
    refill(now);
    if (tokens_ < 1.0) return false;
    tokens_ -= 1.0;
    return true;
}

TokenBucket::Clock::duration TokenBucket::wait_time(Clock::time_point now) {
    std::lock_guard lock(mutex_);
    refill(now);
    if (tokens_ >= 1.0) return Clock::duration::zero();
    std::chrono::duration<double> secs((1.0 - tokens_) / per_second_);
    return std::chrono::duration_cast<Clock::duration>(secs) + Clock::duration(1);
}

void TokenBucket::acquire() {
    while (!try_acquire(Clock::now())) std::this_thread::sleep_for(wait_time(Clock::now()));
}

json chat_completion_body(const Conversation& conversation, const GatewayConfig& config) {
    json messages = json::array();
    for (const auto& m : conversation.messages) {
        json jm{{"role", std::string(to_string(m.role))}};
        if (m.speaker) jm["name"] = *m.speaker;
        if (m.role == Role::user) {
            json content = json::array();
            for (const auto& p : m.parts) {
                if (const auto* t = std::get_if<TextPart>(&p)) {
                    content.push_back({{"type", "text"}, {"text", t->text}});
                } else {
                    const auto& img = std::get<ImagePayload>(p);
                    if (!img.has_bytes())
                        throw PreconditionError("image '" + img.source_path() +
                                                "' has no bytes to send");
                    content.push_back({{"type", "image_url"},
                                       {"image_url", {{"url", img.data_uri()},
                                                      {"detail", config.image_detail}}}});
                }
            }
            jm["content"] = std::move(content);
        } else {
            jm["content"] = m.text();
        }
        messages.push_back(std::move(jm));
    }
    return json{{"model", config.model_name},
                {"temperature", config.temperature},
                {"seed", config.seed},
                {"messages", std::move(messages)}};
}

std::string parse_chat_completion(const std::string& body) {
    json j;
    try {
        j = json::parse(body);
        const auto& content = j.at("choices").at(0).at("message").at("content");
        if (content.is_string()) return content.get<std::string>();
        if (content.is_null()) return {};
        std::string out;
        for (const auto& part : content) {
            if (part.value("type", std::string{}) == "text") out += part.at("text").get<std::string>();
        }
        return out;
    } catch (const json::exception& e) {
        throw TransportError(std::string("unexpected completion body: ") + e.what());
    }
}

namespace {

struct Endpoint {
    std::string base; // scheme://host[:port]
    std::string path;
};

Endpoint split_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("endpoint_url needs a scheme: " + url);
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

bool transient(int status) { return status == 429 || status >= 500; }

} // namespace

HttpBackend::HttpBackend(GatewayConfig config, std::string auth_token)
    : config_(std::move(config)), token_(std::move(auth_token)),
      bucket_(config_.rate_limit_per_minute, std::max(1.0, std::floor(config_.rate_limit_per_minute / 6.0))),
      sleeper_([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }) {
    config_.validate();
    split_url(config_.endpoint_url);
}

std::string HttpBackend::do_complete(const CallRequest& request) {
    auto endpoint = split_url(config_.endpoint_url);
    auto body = chat_completion_body(request.conversation, request.config).dump();

    httplib::Client client(endpoint.base);
    client.set_connection_timeout(std::chrono::seconds(10));
    client.set_read_timeout(config_.timeout);
    client.set_write_timeout(config_.timeout);
    httplib::Headers headers;
    if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);

    std::string last_error;
    bool last_was_429 = false;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
        if (attempt > 0) sleeper_(config_.backoff_base * (1LL << (attempt - 1)));
        bucket_.acquire();
        attempts_.fetch_add(1, std::memory_order_relaxed);

        auto res = client.Post(endpoint.path, headers, body, "application/json");
        if (!res) {
            last_error = "transport: " + httplib::to_string(res.error());
            last_was_429 = false;
            spdlog::warn("chat completion attempt {} failed: {}", attempt + 1, last_error);
            continue;
        }
        if (res->status >= 200 && res->status < 300) return parse_chat_completion(res->body);
        last_error = "HTTP " + std::to_string(res->status);
        last_was_429 = res->status == 429;
        if (!transient(res->status)) throw TransportError(last_error + ": " + res->body);
        spdlog::warn("chat completion attempt {} got {}", attempt + 1, last_error);
    }
    auto msg = "giving up after " + std::to_string(config_.max_retries + 1) + " attempts: " + last_error;
    if (last_was_429) throw RateLimited(msg);
    throw TransportError(msg);
}

} // namespace dermdx
