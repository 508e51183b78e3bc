#include "socratic/gateway.hpp"

#include <atomic>
#include <filesystem>
#include <set>
#include <thread>
#include <unistd.h>

#include "doctest.h"
#include "httplib.h"
#include "json.hpp"

using namespace socratic;
namespace fs = std::filesystem;

namespace {

ChatExchange simple_exchange(std::string user_text = "hello") {
    ChatExchange ex;
    ex.messages = {{Role::System, "system text"}, {Role::User, std::move(user_text)}};
    ex.temperature = 0.5;
    ex.model_name = "test-model";
    return ex;
}

RetryPolicy instant_retry(std::vector<std::chrono::milliseconds>* delays = nullptr) {
    RetryPolicy policy;
    policy.sleep = [delays](std::chrono::milliseconds d) {
        if (delays) delays->push_back(d);
    };
    return policy;
}

fs::path fresh_dir(const std::string& tag) {
    fs::path dir = fs::temp_directory_path() / ("socratic_gw_" + tag + "_" +
                                                std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_SUITE("gateway") {

TEST_CASE("scripted response passes through once") {
    auto provider = std::make_shared<ScriptedProvider>();
    provider->push_response("Q?");
    GatewayOptions options;
    options.retry = instant_retry();
    ChatGateway gateway(provider, options);
    CHECK(gateway.complete(simple_exchange()) == "Q?");
    CHECK(gateway.stats().network_calls == 1);
    CHECK(provider->calls() == 1);
}

TEST_CASE("second identical exchange is a cache hit") {
    auto provider = std::make_shared<ScriptedProvider>();
    provider->push_response("cached");
    GatewayOptions options;
    options.retry = instant_retry();
    ChatGateway gateway(provider, options);
    ChatExchange ex = simple_exchange();
    CHECK(gateway.complete(ex) == "cached");
    CHECK(gateway.complete(ex) == "cached");
    GatewayStats stats = gateway.stats();
    CHECK(stats.network_calls == 1);
    CHECK(stats.cache_hits == 1);
    CHECK(stats.requests == 2);
}

TEST_CASE("transient failures retry with exponential backoff") {
    auto provider = std::make_shared<ScriptedProvider>();
    provider->push_transient_failure();
    provider->push_transient_failure();
    provider->push_response("third time lucky");
    std::vector<std::chrono::milliseconds> delays;
    GatewayOptions options;
    options.retry = instant_retry(&delays);
    ChatGateway gateway(provider, options);
    CHECK(gateway.complete(simple_exchange()) == "third time lucky");
    CHECK(gateway.stats().attempts == 3);
    REQUIRE(delays.size() == 2);
    CHECK(delays[0] == std::chrono::milliseconds(1000));
    CHECK(delays[1] == std::chrono::milliseconds(2000));
}

TEST_CASE("retries exhaust after max_attempts") {
    auto provider = std::make_shared<ScriptedProvider>();
    for (int i = 0; i < 5; ++i) provider->push_transient_failure();
    GatewayOptions options;
    options.retry = instant_retry();
    ChatGateway gateway(provider, options);
    CHECK_THROWS_AS(gateway.complete(simple_exchange()), RetriesExhaustedError);
    CHECK(gateway.stats().attempts == 5);
}

TEST_CASE("complete never mutates its input") {
    auto provider = std::make_shared<ScriptedProvider>();
    provider->push_response("ok");
    GatewayOptions options;
    options.retry = instant_retry();
    ChatGateway gateway(provider, options);
    ChatExchange ex = simple_exchange();
    ChatExchange before = ex;
    gateway.complete(ex);
    CHECK(ex == before);
}

TEST_CASE("cache keys do not collide across distinct exchanges") {
    std::set<uint64_t> keys;
    int count = 0;
    for (int m = 0; m < 4; ++m) {
        for (int t = 0; t < 5; ++t) {
            for (int u = 0; u < 10; ++u) {
                ChatExchange ex = simple_exchange("user " + std::to_string(u));
                ex.model_name = "model-" + std::to_string(m);
                ex.temperature = 0.1 * t;
                keys.insert(cache_key(ex));
                ++count;
            }
        }
    }
    CHECK(static_cast<int>(keys.size()) == count);

    // Field boundaries matter: moving a byte between messages changes the key.
    ChatExchange a = simple_exchange("ab");
    ChatExchange b = simple_exchange("a");
    b.messages.push_back({Role::User, "b"});
    CHECK(cache_key(a) != cache_key(b));
}

TEST_CASE("disk cache survives a new gateway instance") {
    fs::path dir = fresh_dir("disk");
    ChatExchange ex = simple_exchange();
    {
        auto provider = std::make_shared<ScriptedProvider>();
        provider->push_response("persisted");
        GatewayOptions options;
        options.cache_dir = dir.string();
        options.retry = instant_retry();
        ChatGateway gateway(provider, options);
        CHECK(gateway.complete(ex) == "persisted");
    }
    {
        auto provider = std::make_shared<ScriptedProvider>();  // empty script
        GatewayOptions options;
        options.cache_dir = dir.string();
        options.retry = instant_retry();
        ChatGateway gateway(provider, options);
        CHECK(gateway.complete(ex) == "persisted");
        CHECK(gateway.stats().network_calls == 0);
        CHECK(gateway.stats().cache_hits == 1);
    }
    fs::remove_all(dir);
}

TEST_CASE("in-flight limit bounds provider concurrency") {
    struct Probe : ChatProvider {
        std::atomic<int> current{0};
        std::atomic<int> peak{0};
        std::string complete(const ChatExchange&) override {
            int now = ++current;
            int seen = peak.load();
            while (now > seen && !peak.compare_exchange_weak(seen, now)) {
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(5));
            --current;
            return "ok";
        }
    };
    auto probe = std::make_shared<Probe>();
    GatewayOptions options;
    options.max_in_flight = 3;
    options.retry = instant_retry();
    ChatGateway gateway(probe, options);

    std::vector<std::thread> threads;
    for (int i = 0; i < 16; ++i) {
        threads.emplace_back([&gateway, i] {
            gateway.complete(simple_exchange("payload " + std::to_string(i)));
        });
    }
    for (std::thread& t : threads) t.join();
    CHECK(probe->peak.load() <= 3);
    CHECK(gateway.stats().network_calls == 16);
}

TEST_CASE("http provider speaks the chat-completions dialect") {
    httplib::Server server;
    nlohmann::json seen_body;
    std::string seen_auth;
    std::atomic<int> hits{0};
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        int n = ++hits;
        seen_auth = req.get_header_value("Authorization");
        seen_body = nlohmann::json::parse(req.body);
        if (n == 1) {
            res.status = 500;  // first attempt fails, the gateway retries
            return;
        }
        nlohmann::json reply = {
            {"choices", {{{"message", {{"role", "assistant"}, {"content", "live answer"}}}}}}};
        res.set_content(reply.dump(), "application/json");
    });
    int port = server.bind_to_any_port("127.0.0.1");
    std::thread server_thread([&server] { server.listen_after_bind(); });
    server.wait_until_ready();

    auto provider = std::make_shared<HttpChatProvider>(
        "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions", "sk-test");
    GatewayOptions options;
    options.retry = instant_retry();
    ChatGateway gateway(provider, options);
    ChatExchange ex = simple_exchange("over the wire");
    ex.max_tokens = 77;

    CHECK(gateway.complete(ex) == "live answer");
    CHECK(gateway.stats().attempts == 2);
    CHECK(seen_auth == "Bearer sk-test");
    CHECK(seen_body.at("model") == "test-model");
    CHECK(seen_body.at("temperature").get<double>() == doctest::Approx(0.5));
    CHECK(seen_body.at("max_tokens") == 77);
    REQUIRE(seen_body.at("messages").size() == 2);
    CHECK(seen_body["messages"][0]["role"] == "system");
    CHECK(seen_body["messages"][1]["content"] == "over the wire");

    // Unknown path: definitive HTTP failure, no retry.
    auto lost = std::make_shared<HttpChatProvider>(
        "http://127.0.0.1:" + std::to_string(port) + "/nope", "sk-test");
    ChatGateway lost_gateway(lost, options);
    try {
        lost_gateway.complete(simple_exchange("missing"));
        FAIL("expected ProviderError");
    } catch (const ProviderError& e) {
        CHECK(e.status == 404);
    }

    server.stop();
    server_thread.join();
}

TEST_CASE("missing credential is a configuration error") {
    CHECK_THROWS_AS(HttpChatProvider("http://localhost:1/v1/chat/completions", ""), ConfigError);
    CHECK_THROWS_AS(HttpChatProvider("not-a-url", "key"), ConfigError);
}

}  // TEST_SUITE
