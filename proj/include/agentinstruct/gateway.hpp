#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>
#include <openssl/evp.h>

#include "agentinstruct/task.hpp"
#include "agentinstruct/util.hpp"

namespace agentinstruct {

struct CompletionRequest {
    std::string prompt;  // exact bytes sent; never edited downstream
    GenerationParams params;
    std::string backend_id;
};

enum class FinishReason { stop, length, error };

inline std::string finish_reason_name(FinishReason r) {
    switch (r) {
        case FinishReason::stop: return "stop";
        case FinishReason::length: return "length";
        case FinishReason::error: return "error";
    }
    return "stop";
}

struct CompletionResult {
    std::string text;
    FinishReason finish_reason = FinishReason::stop;
    std::optional<std::pair<long long, long long>> token_counts;  // (prompt, completion)
    bool token_counts_approximate = false;
};

enum class BackendKind { http_chat, scripted };

struct BackendDescriptor {
    std::string id;
    BackendKind kind = BackendKind::scripted;
    std::string endpoint;       // http_chat only
    std::string model_name;     // http_chat only
    std::string auth_env;       // environment variable holding the credential
    std::string chat_path = "/v1/chat/completions";
    bool supports_top_k = false;
    bool supports_seed = true;
    bool supports_stop = true;
};

class UnknownPromptError : public std::runtime_error {
public:
    explicit UnknownPromptError(const std::string& what) : std::runtime_error(what) {}
};

class Backend {
public:
    virtual ~Backend() = default;
    virtual CompletionResult complete(const CompletionRequest& request) = 0;
    virtual const BackendDescriptor& descriptor() const = 0;
};

// Stable content digest over everything that can influence a completion.
inline std::string cache_key(const CompletionRequest& request, const std::string& model_name = "") {
    nlohmann::ordered_json fingerprint;
    fingerprint["backend_id"] = request.backend_id;
    fingerprint["model"] = model_name;
    fingerprint["prompt"] = request.prompt;
    fingerprint["temperature"] = request.params.temperature;
    fingerprint["top_k"] = request.params.top_k ? nlohmann::ordered_json(*request.params.top_k)
                                                : nlohmann::ordered_json(nullptr);
    fingerprint["max_new_tokens"] = request.params.max_new_tokens;
    fingerprint["stop"] = request.params.stop_sequences;
    fingerprint["seed"] = request.params.seed ? nlohmann::ordered_json(*request.params.seed)
                                              : nlohmann::ordered_json(nullptr);
    std::string payload = fingerprint.dump();

    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int digest_len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    EVP_DigestUpdate(ctx, payload.data(), payload.size());
    EVP_DigestFinal_ex(ctx, digest, &digest_len);
    EVP_MD_CTX_free(ctx);

    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(digest_len * 2);
    for (unsigned int i = 0; i < digest_len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xF];
    }
    return out;
}

// Deterministic replay backend: responses come from exact or prefix matchers,
// resolved in registration order.  Anything off-script is an error, never a
// silent fallthrough.
class ScriptedBackend : public Backend {
public:
    explicit ScriptedBackend(std::string id) {
        descriptor_.id = std::move(id);
        descriptor_.kind = BackendKind::scripted;
    }

    void register_exact(std::string prompt, std::string response) {
        std::lock_guard<std::mutex> lock(mutex_);
        for (const auto& e : entries_) {
            if (e.exact && e.prompt == prompt) {
                throw ConfigError("scripted backend '" + descriptor_.id +
                                  "': duplicate exact matcher");
            }
        }
        entries_.push_back({true, std::move(prompt), std::move(response)});
    }

    void register_prefix(std::string prefix, std::string response) {
        std::lock_guard<std::mutex> lock(mutex_);
        entries_.push_back({false, std::move(prefix), std::move(response)});
    }

    // [{"match": "exact"|"prefix", "prompt": ..., "response": ...}, ...]
    void load_script(const nlohmann::json& doc) {
        const nlohmann::json* list = &doc;
        if (doc.is_object() && doc.contains("entries")) list = &doc.at("entries");
        if (!list->is_array()) {
            throw ConfigError("scripted backend '" + descriptor_.id +
                              "': script must be an array of entries");
        }
        for (const auto& e : *list) {
            std::string match = e.value("match", "exact");
            if (match == "exact") {
                register_exact(e.at("prompt").get<std::string>(),
                               e.at("response").get<std::string>());
            } else if (match == "prefix") {
                register_prefix(e.at("prompt").get<std::string>(),
                                e.at("response").get<std::string>());
            } else {
                throw ConfigError("scripted backend '" + descriptor_.id +
                                  "': unknown matcher kind '" + match + "'");
            }
        }
    }

    void load_script_file(const std::filesystem::path& path) {
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(read_file(path));
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("script file " + path.string() + ": " + e.what());
        }
        load_script(doc);
    }

    CompletionResult complete(const CompletionRequest& request) override {
        calls_.fetch_add(1, std::memory_order_relaxed);
        std::lock_guard<std::mutex> lock(mutex_);
        for (const auto& e : entries_) {
            bool hit = e.exact ? request.prompt == e.prompt : starts_with(request.prompt, e.prompt);
            if (hit) {
                CompletionResult result;
                result.text = e.response;
                result.finish_reason = FinishReason::stop;
                result.token_counts = {approx_token_count(request.prompt),
                                       approx_token_count(e.response)};
                result.token_counts_approximate = true;
                return result;
            }
        }
        throw UnknownPromptError("scripted backend '" + descriptor_.id +
                                 "' has no entry for prompt starting with: " +
                                 request.prompt.substr(0, std::min<size_t>(request.prompt.size(), 120)));
    }

    const BackendDescriptor& descriptor() const override { return descriptor_; }

    uint64_t calls() const { return calls_.load(std::memory_order_relaxed); }

private:
    struct Entry {
        bool exact;
        std::string prompt;
        std::string response;
    };

    BackendDescriptor descriptor_;
    std::vector<Entry> entries_;
    mutable std::mutex mutex_;
    std::atomic<uint64_t> calls_{0};
};

struct RetryPolicy {
    int attempts = 3;
    int base_delay_ms = 1000;
    std::function<void(int)> sleeper = [](int ms) {
        std::this_thread::sleep_for(std::chrono::milliseconds(ms));
    };
};

// Runs fn up to policy.attempts times with exponential backoff.  The caller's
// request object is never touched between attempts.  ConfigError and
// RetryExhaustedError mark failures that repeating cannot fix and propagate
// immediately.
template <typename Fn>
auto with_retries(const RetryPolicy& policy, Fn&& fn) {
    std::string last_error;
    for (int attempt = 1; attempt <= policy.attempts; ++attempt) {
        try {
            return fn();
        } catch (const ConfigError&) {
            throw;
        } catch (const RetryExhaustedError&) {
            throw;
        } catch (const std::exception& e) {
            last_error = e.what();
            if (attempt < policy.attempts) {
                policy.sleeper(policy.base_delay_ms << (attempt - 1));
            }
        }
    }
    throw RetryExhaustedError("request failed after " + std::to_string(policy.attempts) +
                                  " attempts: " + last_error,
                              policy.attempts);
}

// Persistent completion cache: one JSON record per key under cache_dir,
// written atomically so concurrent readers see whole records only.
class DiskCache {
public:
    DiskCache() = default;
    explicit DiskCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

    bool enabled() const { return !dir_.empty(); }

    std::optional<CompletionResult> lookup(const std::string& key) const {
        if (!enabled()) return std::nullopt;
        std::filesystem::path path = record_path(key);
        if (!std::filesystem::exists(path)) return std::nullopt;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(read_file(path));
        } catch (...) {
            return std::nullopt;  // unreadable record counts as a miss
        }
        CompletionResult result;
        const auto& r = j.at("result");
        result.text = r.at("text").get<std::string>();
        std::string reason = r.value("finish_reason", "stop");
        result.finish_reason = reason == "length"  ? FinishReason::length
                               : reason == "error" ? FinishReason::error
                                                   : FinishReason::stop;
        if (r.contains("prompt_tokens") && r.contains("completion_tokens")) {
            result.token_counts = {r.at("prompt_tokens").get<long long>(),
                                   r.at("completion_tokens").get<long long>()};
        }
        result.token_counts_approximate = r.value("token_counts_approximate", false);
        return result;
    }

    // Best effort: a cache that cannot be written must not fail the run.
    void store(const std::string& key, const CompletionRequest& request,
               const std::string& model_name, const CompletionResult& result) const {
        if (!enabled()) return;
        try {
            store_or_throw(key, request, model_name, result);
        } catch (const std::exception& e) {
            static std::atomic<bool> warned{false};
            if (!warned.exchange(true)) {
                std::cerr << "[agentinstruct] cache write failed, continuing uncached: "
                          << e.what() << "\n";
            }
        }
    }

private:
    void store_or_throw(const std::string& key, const CompletionRequest& request,
                        const std::string& model_name, const CompletionResult& result) const {
        nlohmann::ordered_json j;
        j["key"] = key;
        j["backend_id"] = request.backend_id;
        j["model"] = model_name;
        j["prompt"] = request.prompt;
        j["params"] = detail::params_to_json(request.params);
        nlohmann::ordered_json r;
        r["text"] = result.text;
        r["finish_reason"] = finish_reason_name(result.finish_reason);
        if (result.token_counts) {
            r["prompt_tokens"] = result.token_counts->first;
            r["completion_tokens"] = result.token_counts->second;
        }
        r["token_counts_approximate"] = result.token_counts_approximate;
        j["result"] = r;
        write_file_atomic(record_path(key), j.dump(2) + "\n");
    }

    std::filesystem::path record_path(const std::string& key) const {
        return dir_ / key.substr(0, 2) / (key + ".json");
    }

    std::filesystem::path dir_;
    mutable std::mutex warn_mutex_;
    mutable bool warned_ = false;
};

struct CompletionOutcome {
    CompletionResult result;
    bool cache_hit = false;
};

// Routes requests to registered backends, consulting the cache first.
class Gateway {
public:
    Gateway() = default;
    explicit Gateway(std::filesystem::path cache_dir) : cache_(std::move(cache_dir)) {}

    void set_cache_dir(const std::filesystem::path& dir) { cache_ = DiskCache(dir); }

    void register_backend(std::shared_ptr<Backend> backend) {
        std::lock_guard<std::mutex> lock(mutex_);
        const std::string& id = backend->descriptor().id;
        if (backends_.count(id)) {
            throw ConfigError("backend '" + id + "' is already registered");
        }
        backends_[id] = std::move(backend);
    }

    bool has_backend(const std::string& id) const {
        std::lock_guard<std::mutex> lock(mutex_);
        return backends_.count(id) > 0;
    }

    Backend& backend(const std::string& id) const {
        std::lock_guard<std::mutex> lock(mutex_);
        auto it = backends_.find(id);
        if (it == backends_.end()) {
            throw ConfigError("no backend registered under id '" + id + "'");
        }
        return *it->second;
    }

    CompletionOutcome complete_meta(const CompletionRequest& request) {
        Backend* target = nullptr;
        {
            std::lock_guard<std::mutex> lock(mutex_);
            auto it = backends_.find(request.backend_id);
            if (it == backends_.end()) {
                throw ConfigError("no backend registered under id '" + request.backend_id + "'");
            }
            target = it->second.get();
        }
        std::string key = cache_key(request, target->descriptor().model_name);
        if (auto cached = cache_.lookup(key)) {
            cache_hits_.fetch_add(1, std::memory_order_relaxed);
            return {*cached, true};
        }
        CompletionResult result = target->complete(request);
        backend_calls_.fetch_add(1, std::memory_order_relaxed);
        cache_.store(key, request, target->descriptor().model_name, result);
        return {result, false};
    }

    CompletionResult complete(const CompletionRequest& request) {
        return complete_meta(request).result;
    }

    uint64_t backend_calls() const { return backend_calls_.load(std::memory_order_relaxed); }
    uint64_t cache_hits() const { return cache_hits_.load(std::memory_order_relaxed); }

private:
    std::unordered_map<std::string, std::shared_ptr<Backend>> backends_;
    DiskCache cache_;
    mutable std::mutex mutex_;
    std::atomic<uint64_t> backend_calls_{0};
    std::atomic<uint64_t> cache_hits_{0};
};

}  // namespace agentinstruct
