#include <doctest.h>

#include <set>

#include "agentinstruct/gateway.hpp"
#include "helpers.hpp"

using namespace agentinstruct;

namespace {

CompletionRequest make_request(const std::string& prompt, const std::string& backend = "scripted") {
    CompletionRequest r;
    r.prompt = prompt;
    r.backend_id = backend;
    return r;
}

}  // namespace

TEST_CASE("scripted backend replays registered prompts and errors elsewhere") {
    auto backend = std::make_shared<ScriptedBackend>("scripted");
    backend->register_exact("p", "Answer: 43");
    Gateway gateway;
    gateway.register_backend(backend);

    CHECK(gateway.complete(make_request("p")).text == "Answer: 43");
    CHECK_THROWS_AS(gateway.complete(make_request("unknown")), UnknownPromptError);
    CHECK_THROWS_AS(ScriptedBackend("empty").complete(make_request("anything", "empty")),
                    UnknownPromptError);
}

TEST_CASE("duplicate exact matchers are a registration error") {
    ScriptedBackend backend("s");
    backend.register_exact("same", "a");
    CHECK_THROWS_AS(backend.register_exact("same", "b"), ConfigError);
}

TEST_CASE("prefix matchers resolve in registration order") {
    ScriptedBackend backend("s");
    backend.register_prefix("abc", "first");
    backend.register_prefix("ab", "second");
    CompletionRequest r = make_request("abcdef", "s");
    CHECK(backend.complete(r).text == "first");
    r.prompt = "abX";
    CHECK(backend.complete(r).text == "second");
}

TEST_CASE("unknown backend id is a configuration error") {
    Gateway gateway;
    CHECK_THROWS_AS(gateway.complete(make_request("p", "nope")), ConfigError);
}

TEST_CASE("cache_key is stable and sensitive to every field") {
    CompletionRequest a = make_request("prompt");
    a.params.temperature = 0.0;
    CompletionRequest b = a;
    CHECK(cache_key(a) == cache_key(b));

    b.params.temperature = 0.3;
    CHECK(cache_key(a) != cache_key(b));

    b = a;
    b.params.seed = 1;
    CompletionRequest c = a;
    c.params.seed = 2;
    std::set<std::string> keys{cache_key(a), cache_key(b), cache_key(c)};
    CHECK(keys.size() == 3);

    b = a;
    b.prompt += "!";
    CHECK(cache_key(a) != cache_key(b));
    CHECK(cache_key(a) != cache_key(a, "other-model"));
    b = a;
    b.params.max_new_tokens += 1;
    CHECK(cache_key(a) != cache_key(b));
    b = a;
    b.params.stop_sequences = {"\n"};
    CHECK(cache_key(a) != cache_key(b));
}

TEST_CASE("cached wrapper: second identical request performs zero inner calls") {
    testutil::TempDir tmp("cache");
    auto backend = std::make_shared<ScriptedBackend>("scripted");
    backend->register_exact("p", "Answer: 43");
    Gateway gateway(tmp.path());
    gateway.register_backend(backend);

    auto first = gateway.complete_meta(make_request("p"));
    CHECK_FALSE(first.cache_hit);
    CHECK(backend->calls() == 1);

    auto second = gateway.complete_meta(make_request("p"));
    CHECK(second.cache_hit);
    CHECK(backend->calls() == 1);
    CHECK(second.result.text == first.result.text);
    CHECK(gateway.cache_hits() == 1);
    CHECK(gateway.backend_calls() == 1);
}

TEST_CASE("cache round-trip preserves result bytes across gateway instances") {
    testutil::TempDir tmp("cache_rt");
    std::string weird = "line1\nline2\ttab \xF0\x9F\x98\x80 end";
    {
        auto backend = std::make_shared<ScriptedBackend>("scripted");
        backend->register_exact("p", weird);
        Gateway gateway(tmp.path());
        gateway.register_backend(backend);
        CHECK(gateway.complete(make_request("p")).text == weird);
    }
    {
        Gateway gateway(tmp.path());
        gateway.register_backend(std::make_shared<ScriptedBackend>("scripted"));
        auto out = gateway.complete_meta(make_request("p"));
        CHECK(out.cache_hit);
        CHECK(out.result.text == weird);
    }
}

TEST_CASE("scripted backend loads a transcript file") {
    testutil::TempDir tmp("script");
    write_file(tmp.path() / "script.json", R"([
        {"match": "exact", "prompt": "a", "response": "ra"},
        {"match": "prefix", "prompt": "long", "response": "rb"}
    ])");
    ScriptedBackend backend("s");
    backend.load_script_file(tmp.path() / "script.json");
    CHECK(backend.complete(make_request("a", "s")).text == "ra");
    CHECK(backend.complete(make_request("long prompt...", "s")).text == "rb");
}

TEST_CASE("with_retries retries transient failures and keeps the payload intact") {
    RetryPolicy policy;
    policy.attempts = 3;
    policy.base_delay_ms = 1;
    std::vector<int> delays;
    policy.sleeper = [&](int ms) { delays.push_back(ms); };

    int calls = 0;
    const std::string payload = "fixed payload";
    std::vector<std::string> seen;
    auto result = with_retries(policy, [&]() -> std::string {
        seen.push_back(payload);
        if (++calls < 3) throw std::runtime_error("transient");
        return "ok";
    });
    CHECK(result == "ok");
    CHECK(calls == 3);
    CHECK(delays == std::vector<int>{1, 2});  // exponential backoff
    for (const auto& s : seen) CHECK(s == payload);

    calls = 0;
    CHECK_THROWS_AS(with_retries(policy,
                                 [&]() -> int { throw std::runtime_error("always"); }),
                    RetryExhaustedError);
    try {
        with_retries(policy, [&]() -> int { throw std::runtime_error("always"); });
    } catch (const RetryExhaustedError& e) {
        CHECK(e.attempts() == 3);
    }
}
