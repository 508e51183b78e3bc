#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "socratic/errors.hpp"

namespace socratic {

enum class Role { System, User, Assistant };

std::string_view role_name(Role role);

struct ChatMessage {
    Role role = Role::User;
    std::string content;
    bool operator==(const ChatMessage&) const = default;
};

// One request/response against a chat-completion endpoint.
struct ChatExchange {
    std::vector<ChatMessage> messages;  // first message is the system message
    double temperature = 0.0;           // [0, 2]
    std::string model_name;
    int max_tokens = 1024;
    std::optional<std::string> response;
    bool operator==(const ChatExchange&) const = default;
};

// Content hash of (model_name, temperature, messages). Equal inputs give
// equal digests on every platform.
uint64_t cache_key(const ChatExchange& exchange);

// Raised by providers for failures worth retrying (connection loss, 429, 5xx).
struct TransientProviderError : Error {
    using Error::Error;
};

class ChatProvider {
public:
    virtual ~ChatProvider() = default;
    // Returns the assistant text. Throws TransientProviderError for retryable
    // failures and ProviderError for definitive ones.
    virtual std::string complete(const ChatExchange& exchange) = 0;
};

// Talks the de-facto chat-completions JSON dialect:
// POST {endpoint}/... {"model","messages","temperature","max_tokens"}
// -> choices[0].message.content.
class HttpChatProvider : public ChatProvider {
public:
    // endpoint_url carries scheme, host, port and path, e.g.
    // "http://localhost:8080/v1/chat/completions".
    HttpChatProvider(std::string endpoint_url, std::string api_key);
    std::string complete(const ChatExchange& exchange) override;

private:
    std::string base_;
    std::string path_;
    std::string api_key_;
};

// Test double: FIFO of scripted responses and injected failures.
class ScriptedProvider : public ChatProvider {
public:
    void push_response(std::string text);
    void push_transient_failure(std::string what = "scripted transient failure");
    // Deterministic fallback used when the queue is empty; by default the
    // provider throws ProviderError when it runs out of script.
    void set_fallback(std::function<std::string(const ChatExchange&)> fn);

    std::string complete(const ChatExchange& exchange) override;
    int calls() const;

private:
    struct Step {
        bool fail = false;
        std::string text;
    };
    mutable std::mutex mu_;
    std::deque<Step> steps_;
    std::function<std::string(const ChatExchange&)> fallback_;
    int calls_ = 0;
};

struct RetryPolicy {
    int max_attempts = 5;
    std::chrono::milliseconds base{1000};
    double factor = 2.0;
    // Injectable for tests; defaults to std::this_thread::sleep_for.
    std::function<void(std::chrono::milliseconds)> sleep;
};

struct GatewayOptions {
    // Empty: in-memory cache only. Otherwise a directory of one JSON file
    // per cache key, reused across runs.
    std::string cache_dir;
    int max_in_flight = 4;
    RetryPolicy retry;
};

struct GatewayStats {
    uint64_t requests = 0;       // complete() calls
    uint64_t network_calls = 0;  // requests that reached the provider
    uint64_t cache_hits = 0;
    uint64_t attempts = 0;       // provider attempts including retries
};

// Caching, retrying front end over a ChatProvider. Thread-safe; at most
// max_in_flight provider calls run concurrently.
class ChatGateway {
public:
    ChatGateway(std::shared_ptr<ChatProvider> provider, GatewayOptions options = {});

    // Returns the assistant text for the exchange, from cache when possible.
    // Never mutates the input.
    std::string complete(const ChatExchange& exchange);

    GatewayStats stats() const;

private:
    std::optional<std::string> cache_lookup(uint64_t key);
    void cache_store(uint64_t key, const ChatExchange& exchange, const std::string& response);
    std::string call_with_retries(const ChatExchange& exchange);

    std::shared_ptr<ChatProvider> provider_;
    GatewayOptions options_;
    mutable std::mutex mu_;
    std::unordered_map<uint64_t, std::string> memory_cache_;
    GatewayStats stats_;
    // Counting gate for in-flight provider calls.
    std::mutex gate_mu_;
    std::condition_variable gate_cv_;
    int in_flight_ = 0;
};

}  // namespace socratic
