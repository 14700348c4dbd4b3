#pragma once

// Live-mode HTTP implementations of the gateway, search and fetch contracts.
// Everything in here is replaceable by the scripted equivalents for offline
// runs; nothing else in the library depends on this header.

#include <cstdlib>
#include <iostream>
#include <memory>
#include <mutex>
#include <set>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "agentinstruct/evidence.hpp"
#include "agentinstruct/gateway.hpp"
#include "agentinstruct/util.hpp"

namespace agentinstruct {

namespace detail {

struct SplitUrl {
    std::string origin;  // scheme://host[:port]
    std::string path;    // /path?query
};

inline SplitUrl split_url(const std::string& url) {
    size_t scheme = url.find("://");
    if (scheme == std::string::npos) {
        throw ConfigError("malformed URL: " + url);
    }
    size_t path_start = url.find('/', scheme + 3);
    if (path_start == std::string::npos) {
        return {url, "/"};
    }
    return {url.substr(0, path_start), url.substr(path_start)};
}

inline std::string env_or_empty(const std::string& name) {
    const char* value = std::getenv(name.c_str());
    return value ? value : "";
}

}  // namespace detail

// Chat-completion JSON client.  One wire shape with per-backend parameter
// mapping; parameters a backend does not support are dropped with a warning.
class HttpChatBackend : public Backend {
public:
    HttpChatBackend(BackendDescriptor descriptor, RetryPolicy retry = {})
        : descriptor_(std::move(descriptor)), retry_(std::move(retry)) {
        if (descriptor_.endpoint.empty() || descriptor_.model_name.empty()) {
            throw ConfigError("http_chat backend '" + descriptor_.id +
                              "' needs an endpoint and a model name");
        }
    }

    CompletionResult complete(const CompletionRequest& request) override {
        nlohmann::ordered_json body;
        body["model"] = descriptor_.model_name;
        body["messages"] = nlohmann::ordered_json::array();
        body["messages"].push_back({{"role", "user"}, {"content", request.prompt}});
        body["temperature"] = request.params.temperature;
        body["max_tokens"] = request.params.max_new_tokens;
        if (!request.params.stop_sequences.empty()) {
            if (descriptor_.supports_stop) {
                body["stop"] = request.params.stop_sequences;
            } else {
                warn_dropped("stop");
            }
        }
        if (request.params.top_k) {
            if (descriptor_.supports_top_k) {
                body["top_k"] = *request.params.top_k;
            } else {
                warn_dropped("top_k");
            }
        }
        if (request.params.seed) {
            if (descriptor_.supports_seed) {
                body["seed"] = *request.params.seed;
            } else {
                warn_dropped("seed");
            }
        }
        std::string payload = body.dump();

        return with_retries(retry_, [&]() -> CompletionResult {
            auto [origin, base_path] = detail::split_url(descriptor_.endpoint);
            httplib::Client client(origin);
            client.set_connection_timeout(15, 0);
            client.set_read_timeout(120, 0);
            httplib::Headers headers;
            if (!descriptor_.auth_env.empty()) {
                std::string token = detail::env_or_empty(descriptor_.auth_env);
                if (token.empty()) {
                    throw ConfigError("backend '" + descriptor_.id +
                                      "': environment variable " + descriptor_.auth_env +
                                      " is not set");
                }
                headers.emplace("Authorization", "Bearer " + token);
            }
            std::string path = base_path == "/" ? descriptor_.chat_path : base_path;
            auto res = client.Post(path, headers, payload, "application/json");
            if (!res) {
                throw std::runtime_error("transport error: " + httplib::to_string(res.error()));
            }
            if (res->status == 429 || res->status >= 500) {
                throw std::runtime_error("retryable status " + std::to_string(res->status));
            }
            if (res->status < 200 || res->status >= 300) {
                throw RetryExhaustedError("backend '" + descriptor_.id + "' returned status " +
                                              std::to_string(res->status) + ": " + res->body,
                                          1);
            }
            return parse_response(res->body);
        });
    }

    const BackendDescriptor& descriptor() const override { return descriptor_; }

private:
    CompletionResult parse_response(const std::string& body) const {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(body);
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error(std::string("unparseable completion response: ") + e.what());
        }
        if (!j.contains("choices") || j.at("choices").empty()) {
            throw std::runtime_error("completion response has no choices");
        }
        const auto& choice = j.at("choices")[0];
        CompletionResult result;
        if (choice.contains("message")) {
            result.text = choice.at("message").value("content", "");
        } else {
            result.text = choice.value("text", "");
        }
        std::string reason = choice.value("finish_reason", "stop");
        result.finish_reason = reason == "length" ? FinishReason::length : FinishReason::stop;
        if (j.contains("usage")) {
            const auto& usage = j.at("usage");
            result.token_counts = {usage.value("prompt_tokens", 0LL),
                                   usage.value("completion_tokens", 0LL)};
        } else {
            result.token_counts = {approx_token_count(result.text), 0LL};
            result.token_counts_approximate = true;
        }
        return result;
    }

    void warn_dropped(const std::string& param) const {
        std::lock_guard<std::mutex> lock(warn_mutex_);
        if (warned_.insert(param).second) {
            std::cerr << "[agentinstruct] backend '" << descriptor_.id << "' does not support '"
                      << param << "'; dropping it\n";
        }
    }

    BackendDescriptor descriptor_;
    RetryPolicy retry_;
    mutable std::mutex warn_mutex_;
    mutable std::set<std::string> warned_;
};

// Web-search client for a Bing-style JSON API; the key comes from an
// environment variable.
class HttpSearchClient : public SearchClient {
public:
    HttpSearchClient(std::string endpoint, std::string key_env, RetryPolicy retry = {})
        : endpoint_(std::move(endpoint)), key_env_(std::move(key_env)), retry_(std::move(retry)) {}

    std::vector<std::string> search(const std::string& query) override {
        std::string key = detail::env_or_empty(key_env_);
        if (key.empty()) {
            throw ConfigError("search key environment variable " + key_env_ + " is not set");
        }
        return with_retries(retry_, [&]() -> std::vector<std::string> {
            auto [origin, path] = detail::split_url(endpoint_);
            httplib::Client client(origin);
            client.set_connection_timeout(15, 0);
            client.set_read_timeout(30, 0);
            httplib::Headers headers{{"Ocp-Apim-Subscription-Key", key}};
            std::string full = path + (path.find('?') == std::string::npos ? "?" : "&") +
                               "q=" + httplib::detail::encode_url(query) + "&count=5";
            auto res = client.Get(full, headers);
            if (!res) {
                throw std::runtime_error("transport error: " + httplib::to_string(res.error()));
            }
            if (res->status != 200) {
                throw std::runtime_error("search returned status " + std::to_string(res->status));
            }
            nlohmann::json j = nlohmann::json::parse(res->body);
            std::vector<std::string> urls;
            if (j.contains("webPages") && j.at("webPages").contains("value")) {
                for (const auto& entry : j.at("webPages").at("value")) {
                    urls.push_back(entry.value("url", ""));
                }
            } else if (j.contains("results")) {
                for (const auto& entry : j.at("results")) {
                    urls.push_back(entry.value("url", ""));
                }
            }
            return urls;
        });
    }

private:
    std::string endpoint_;
    std::string key_env_;
    RetryPolicy retry_;
};

// Live page fetcher with a per-URL timeout; HTML and plain text only, other
// content types are reported as fetch failures and skipped upstream.
class HttpPageFetcher : public PageFetcher {
public:
    explicit HttpPageFetcher(int timeout_seconds = 15) : timeout_seconds_(timeout_seconds) {}

    FetchedPage fetch(const std::string& url) override {
        auto [origin, path] = detail::split_url(url);
        httplib::Client client(origin);
        client.set_connection_timeout(timeout_seconds_, 0);
        client.set_read_timeout(timeout_seconds_, 0);
        client.set_follow_location(true);
        auto res = client.Get(path);
        if (!res) {
            throw FetchError("transport error for " + url + ": " +
                             httplib::to_string(res.error()));
        }
        std::string content_type = res->get_header_value("Content-Type");
        if (!content_type.empty() && content_type.find("text/html") == std::string::npos &&
            content_type.find("text/plain") == std::string::npos) {
            throw FetchError("unsupported content type '" + content_type + "' for " + url);
        }
        return {res->status, res->body};
    }

private:
    int timeout_seconds_;
};

// Remote embedding endpoint (OpenAI-style /v1/embeddings shape).
class HttpEmbedder : public Embedder {
public:
    HttpEmbedder(std::string endpoint, std::string model, std::string key_env,
                 size_t dimension, RetryPolicy retry = {})
        : endpoint_(std::move(endpoint)), model_(std::move(model)),
          key_env_(std::move(key_env)), dimension_(dimension), retry_(std::move(retry)) {}

    std::vector<float> embed(const std::string& text) override {
        nlohmann::ordered_json body;
        body["model"] = model_;
        body["input"] = text;
        std::string payload = body.dump();
        return with_retries(retry_, [&]() -> std::vector<float> {
            auto [origin, path] = detail::split_url(endpoint_);
            httplib::Client client(origin);
            client.set_connection_timeout(15, 0);
            client.set_read_timeout(60, 0);
            httplib::Headers headers;
            std::string key = detail::env_or_empty(key_env_);
            if (!key.empty()) headers.emplace("Authorization", "Bearer " + key);
            auto res = client.Post(path, headers, payload, "application/json");
            if (!res) {
                throw std::runtime_error("transport error: " + httplib::to_string(res.error()));
            }
            if (res->status != 200) {
                throw std::runtime_error("embedding endpoint returned status " +
                                         std::to_string(res->status));
            }
            nlohmann::json j = nlohmann::json::parse(res->body);
            std::vector<float> v = j.at("data").at(0).at("embedding").get<std::vector<float>>();
            double norm = 0.0;
            for (float x : v) norm += static_cast<double>(x) * x;
            norm = std::sqrt(norm);
            if (norm > 0.0) {
                for (float& x : v) x = static_cast<float>(x / norm);
            }
            return v;
        });
    }

    std::string id() const override { return "http-" + model_; }
    size_t dimension() const override { return dimension_; }

private:
    std::string endpoint_;
    std::string model_;
    std::string key_env_;
    size_t dimension_;
    RetryPolicy retry_;
};

// Registers every backend declared in a backends config document:
// {"backends": [{"id", "kind": "scripted"|"http_chat", ...}]}
inline void register_backends_from_config(Gateway& gateway, const std::filesystem::path& path) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("backends config " + path.string() + ": " + e.what());
    }
    if (!doc.contains("backends") || !doc.at("backends").is_array()) {
        throw ConfigError("backends config needs a 'backends' array");
    }
    for (const auto& entry : doc.at("backends")) {
        std::string id = entry.value("id", "");
        std::string kind = entry.value("kind", "");
        if (id.empty()) throw ConfigError("backend declaration without an 'id'");
        if (kind == "scripted") {
            auto backend = std::make_shared<ScriptedBackend>(id);
            if (entry.contains("script")) {
                std::filesystem::path script = entry.at("script").get<std::string>();
                if (script.is_relative()) script = path.parent_path() / script;
                backend->load_script_file(script);
            }
            gateway.register_backend(std::move(backend));
        } else if (kind == "http_chat") {
            BackendDescriptor descriptor;
            descriptor.id = id;
            descriptor.kind = BackendKind::http_chat;
            descriptor.endpoint = entry.value("endpoint", "");
            descriptor.model_name = entry.value("model", entry.value("model_name", ""));
            descriptor.auth_env = entry.value("auth_env", "");
            descriptor.chat_path = entry.value("chat_path", descriptor.chat_path);
            descriptor.supports_top_k = entry.value("supports_top_k", false);
            descriptor.supports_seed = entry.value("supports_seed", true);
            descriptor.supports_stop = entry.value("supports_stop", true);
            gateway.register_backend(std::make_shared<HttpChatBackend>(descriptor));
        } else {
            throw ConfigError("backend '" + id + "': unknown kind '" + kind + "'");
        }
    }
}

}  // namespace agentinstruct
