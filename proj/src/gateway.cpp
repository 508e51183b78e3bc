#include "socratic/gateway.hpp"

#include <bit>
#include <filesystem>
#include <fstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "socratic/hash.hpp"

namespace socratic {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view role_name(Role role) {
    switch (role) {
        case Role::System: return "system";
        case Role::User: return "user";
        case Role::Assistant: return "assistant";
    }
    return "user";
}

uint64_t cache_key(const ChatExchange& exchange) {
    Fnv1a64 h;
    h.update_field(exchange.model_name);
    h.update_u64(std::bit_cast<uint64_t>(exchange.temperature));
    h.update_u64(exchange.messages.size());
    for (const ChatMessage& m : exchange.messages) {
        h.update_byte(static_cast<uint8_t>(m.role));
        h.update_field(m.content);
    }
    return h.digest();
}

// ---------------------------------------------------------------------------
// HttpChatProvider

HttpChatProvider::HttpChatProvider(std::string endpoint_url, std::string api_key)
    : api_key_(std::move(api_key)) {
    // Split "scheme://host[:port]" from the path.
    size_t scheme = endpoint_url.find("://");
    if (scheme == std::string::npos) {
        throw ConfigError("endpoint_url must carry a scheme, got \"" + endpoint_url + "\"");
    }
    size_t slash = endpoint_url.find('/', scheme + 3);
    if (slash == std::string::npos) {
        base_ = endpoint_url;
        path_ = "/v1/chat/completions";
    } else {
        base_ = endpoint_url.substr(0, slash);
        path_ = endpoint_url.substr(slash);
    }
    if (api_key_.empty()) {
        throw ConfigError("no API credential configured for " + base_);
    }
}

std::string HttpChatProvider::complete(const ChatExchange& exchange) {
    json body;
    body["model"] = exchange.model_name;
    body["temperature"] = exchange.temperature;
    body["max_tokens"] = exchange.max_tokens;
    json messages = json::array();
    for (const ChatMessage& m : exchange.messages) {
        messages.push_back({{"role", std::string(role_name(m.role))}, {"content", m.content}});
    }
    body["messages"] = std::move(messages);

    httplib::Client client(base_);
    client.set_connection_timeout(30);
    client.set_read_timeout(120);
    httplib::Headers headers{{"Authorization", "Bearer " + api_key_}};
    auto result = client.Post(path_, headers, body.dump(), "application/json");
    if (!result) {
        throw TransientProviderError("connection to " + base_ + " failed: " +
                                     httplib::to_string(result.error()));
    }
    if (result->status == 429 || result->status >= 500) {
        throw TransientProviderError("endpoint returned status " + std::to_string(result->status));
    }
    if (result->status < 200 || result->status >= 300) {
        throw ProviderError("endpoint returned status " + std::to_string(result->status) + ": " +
                                result->body,
                            result->status);
    }
    try {
        json reply = json::parse(result->body);
        return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
        throw ProviderError(std::string("unexpected response shape: ") + e.what(), result->status);
    }
}

// ---------------------------------------------------------------------------
// ScriptedProvider

void ScriptedProvider::push_response(std::string text) {
    std::lock_guard lock(mu_);
    steps_.push_back(Step{false, std::move(text)});
}

void ScriptedProvider::push_transient_failure(std::string what) {
    std::lock_guard lock(mu_);
    steps_.push_back(Step{true, std::move(what)});
}

void ScriptedProvider::set_fallback(std::function<std::string(const ChatExchange&)> fn) {
    std::lock_guard lock(mu_);
    fallback_ = std::move(fn);
}

std::string ScriptedProvider::complete(const ChatExchange& exchange) {
    Step step;
    std::function<std::string(const ChatExchange&)> fallback;
    {
        std::lock_guard lock(mu_);
        ++calls_;
        if (steps_.empty()) {
            if (!fallback_) throw ProviderError("scripted provider ran out of responses");
            fallback = fallback_;
        } else {
            step = steps_.front();
            steps_.pop_front();
        }
    }
    if (fallback) return fallback(exchange);
    if (step.fail) throw TransientProviderError(step.text);
    return step.text;
}

int ScriptedProvider::calls() const {
    std::lock_guard lock(mu_);
    return calls_;
}

// ---------------------------------------------------------------------------
// ChatGateway

namespace {

fs::path cache_file(const std::string& dir, uint64_t key) {
    return fs::path(dir) / (hex64(key) + ".json");
}

}  // namespace

ChatGateway::ChatGateway(std::shared_ptr<ChatProvider> provider, GatewayOptions options)
    : provider_(std::move(provider)), options_(std::move(options)) {
    if (!provider_) throw ConfigError("gateway needs a provider");
    if (options_.max_in_flight < 1) throw ConfigError("max_in_flight must be >= 1");
    if (!options_.retry.sleep) {
        options_.retry.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
    }
    if (!options_.cache_dir.empty()) fs::create_directories(options_.cache_dir);
}

std::optional<std::string> ChatGateway::cache_lookup(uint64_t key) {
    {
        auto it = memory_cache_.find(key);
        if (it != memory_cache_.end()) return it->second;
    }
    if (options_.cache_dir.empty()) return std::nullopt;
    fs::path file = cache_file(options_.cache_dir, key);
    std::ifstream in(file, std::ios::binary);
    if (!in) return std::nullopt;
    try {
        json entry = json::parse(in);
        std::string response = entry.at("response").get<std::string>();
        memory_cache_[key] = response;
        return response;
    } catch (const json::exception&) {
        return std::nullopt;  // corrupt entry: treat as a miss and rewrite
    }
}

void ChatGateway::cache_store(uint64_t key, const ChatExchange& exchange,
                              const std::string& response) {
    memory_cache_[key] = response;
    if (options_.cache_dir.empty()) return;
    json entry;
    entry["model_name"] = exchange.model_name;
    entry["temperature"] = exchange.temperature;
    entry["max_tokens"] = exchange.max_tokens;
    json messages = json::array();
    for (const ChatMessage& m : exchange.messages) {
        messages.push_back({{"role", std::string(role_name(m.role))}, {"content", m.content}});
    }
    entry["messages"] = std::move(messages);
    entry["response"] = response;
    std::ofstream out(cache_file(options_.cache_dir, key), std::ios::binary | std::ios::trunc);
    out << entry.dump(2) << "\n";
}

std::string ChatGateway::call_with_retries(const ChatExchange& exchange) {
    std::chrono::milliseconds delay = options_.retry.base;
    for (int attempt = 1;; ++attempt) {
        {
            std::lock_guard lock(mu_);
            ++stats_.attempts;
        }
        try {
            return provider_->complete(exchange);
        } catch (const TransientProviderError& e) {
            if (attempt >= options_.retry.max_attempts) {
                throw RetriesExhaustedError("gave up after " + std::to_string(attempt) +
                                            " attempts: " + e.what());
            }
            options_.retry.sleep(delay);
            delay = std::chrono::milliseconds(
                static_cast<int64_t>(static_cast<double>(delay.count()) * options_.retry.factor));
        }
    }
}

std::string ChatGateway::complete(const ChatExchange& exchange) {
    uint64_t key = cache_key(exchange);
    {
        std::lock_guard lock(mu_);
        ++stats_.requests;
        if (auto hit = cache_lookup(key)) {
            ++stats_.cache_hits;
            return *hit;
        }
    }

    {
        std::unique_lock gate(gate_mu_);
        gate_cv_.wait(gate, [&] { return in_flight_ < options_.max_in_flight; });
        ++in_flight_;
    }
    std::string response;
    try {
        {
            std::lock_guard lock(mu_);
            ++stats_.network_calls;
        }
        response = call_with_retries(exchange);
    } catch (...) {
        std::lock_guard gate(gate_mu_);
        --in_flight_;
        gate_cv_.notify_one();
        throw;
    }
    {
        std::lock_guard gate(gate_mu_);
        --in_flight_;
        gate_cv_.notify_one();
    }

    std::lock_guard lock(mu_);
    cache_store(key, exchange, response);
    return response;
}

GatewayStats ChatGateway::stats() const {
    std::lock_guard lock(mu_);
    return stats_;
}

}  // namespace socratic
