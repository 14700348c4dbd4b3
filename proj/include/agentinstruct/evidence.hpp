#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "agentinstruct/gateway.hpp"
#include "agentinstruct/util.hpp"

namespace agentinstruct {

class ToolError : public std::runtime_error {
public:
    explicit ToolError(const std::string& what) : std::runtime_error(what) {}
};

class FetchError : public std::runtime_error {
public:
    explicit FetchError(const std::string& what) : std::runtime_error(what) {}
};

struct WebDocument {
    std::string url;
    std::string text;  // markup-stripped
    std::chrono::system_clock::time_point fetched_at;
};

struct Chunk {
    std::string doc_url;
    size_t begin = 0;  // character offsets into the source text
    size_t end = 0;
    std::string text;
    std::vector<float> vector;
};

struct EvidenceIndex {
    std::vector<Chunk> chunks;
    std::string embedder_id;
};

class SearchClient {
public:
    virtual ~SearchClient() = default;
    virtual std::vector<std::string> search(const std::string& query) = 0;
};

// Offline search results from a JSON map {query: [url, ...]}.
class ScriptedSearchClient : public SearchClient {
public:
    ScriptedSearchClient() = default;
    explicit ScriptedSearchClient(const nlohmann::json& doc) {
        for (const auto& [query, urls] : doc.items()) {
            entries_[query] = urls.get<std::vector<std::string>>();
        }
    }

    void add(const std::string& query, std::vector<std::string> urls) {
        entries_[query] = std::move(urls);
    }

    std::vector<std::string> search(const std::string& query) override {
        auto it = entries_.find(query);
        return it == entries_.end() ? std::vector<std::string>{} : it->second;
    }

private:
    std::map<std::string, std::vector<std::string>> entries_;
};

struct FetchedPage {
    int status = 0;
    std::string body;
};

class PageFetcher {
public:
    virtual ~PageFetcher() = default;
    virtual FetchedPage fetch(const std::string& url) = 0;
};

// Offline pages from a JSON map {url: local html path}; unknown urls 404.
class FilePageFetcher : public PageFetcher {
public:
    FilePageFetcher() = default;
    explicit FilePageFetcher(const nlohmann::json& doc,
                             const std::filesystem::path& base_dir = {}) {
        for (const auto& [url, path] : doc.items()) {
            std::filesystem::path p = path.get<std::string>();
            mapping_[url] = p.is_absolute() || base_dir.empty() ? p : base_dir / p;
        }
    }

    void add(const std::string& url, std::filesystem::path path) {
        mapping_[url] = std::move(path);
    }

    FetchedPage fetch(const std::string& url) override {
        auto it = mapping_.find(url);
        if (it == mapping_.end() || !std::filesystem::exists(it->second)) {
            return {404, ""};
        }
        return {200, read_file(it->second)};
    }

private:
    std::map<std::string, std::filesystem::path> mapping_;
};

// At most the top 5 results, in the client's order.
inline std::vector<std::string> search_dataset(const std::string& name, SearchClient& client) {
    if (trim(name).empty()) {
        throw std::invalid_argument("search_dataset: empty dataset name");
    }
    std::vector<std::string> urls = client.search(name);
    if (urls.size() > 5) urls.resize(5);
    return urls;
}

namespace detail {

inline bool is_block_tag(std::string_view tag) {
    static const std::set<std::string_view> kBlocks = {
        "p",  "div",   "br",     "li",    "ul",     "ol",    "h1",    "h2",      "h3",
        "h4", "h5",    "h6",     "tr",    "td",     "th",    "table", "section", "article",
        "hr", "title", "header", "footer", "blockquote", "pre", "nav", "aside",  "form",
    };
    return kBlocks.count(tag) > 0;
}

inline std::string decode_entities(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    size_t i = 0;
    while (i < s.size()) {
        if (s[i] != '&') {
            out += s[i++];
            continue;
        }
        size_t semi = s.find(';', i);
        if (semi == std::string_view::npos || semi - i > 10) {
            out += s[i++];
            continue;
        }
        std::string_view entity = s.substr(i + 1, semi - i - 1);
        if (entity == "amp") out += '&';
        else if (entity == "lt") out += '<';
        else if (entity == "gt") out += '>';
        else if (entity == "quot") out += '"';
        else if (entity == "apos") out += '\'';
        else if (entity == "nbsp") out += ' ';
        else if (!entity.empty() && entity[0] == '#') {
            uint32_t cp = 0;
            bool ok = true;
            if (entity.size() > 1 && (entity[1] == 'x' || entity[1] == 'X')) {
                for (size_t k = 2; k < entity.size(); ++k) {
                    char c = entity[k];
                    if (!std::isxdigit(static_cast<unsigned char>(c))) { ok = false; break; }
                    cp = cp * 16 + (std::isdigit(static_cast<unsigned char>(c))
                                        ? static_cast<uint32_t>(c - '0')
                                        : static_cast<uint32_t>(std::tolower(c) - 'a' + 10));
                }
            } else {
                for (size_t k = 1; k < entity.size(); ++k) {
                    if (!std::isdigit(static_cast<unsigned char>(entity[k]))) { ok = false; break; }
                    cp = cp * 10 + static_cast<uint32_t>(entity[k] - '0');
                }
            }
            if (ok && cp > 0) {
                agentinstruct::detail::append_codepoint(out, cp);
            }
        } else {
            out += s[i];
            ++i;
            continue;
        }
        i = semi + 1;
    }
    return out;
}

}  // namespace detail

// Drops scripts, styles, comments and tags; block boundaries become newlines
// and remaining whitespace collapses to single spaces.
inline std::string strip_html(std::string_view html) {
    std::string text;
    text.reserve(html.size());
    size_t i = 0;
    auto lowered_ahead = [&](size_t pos, std::string_view word) {
        if (pos + word.size() > html.size()) return false;
        for (size_t k = 0; k < word.size(); ++k) {
            if (std::tolower(static_cast<unsigned char>(html[pos + k])) != word[k]) return false;
        }
        return true;
    };
    while (i < html.size()) {
        if (html[i] != '<') {
            text += html[i++];
            continue;
        }
        if (lowered_ahead(i, "<!--")) {
            size_t close = html.find("-->", i);
            i = close == std::string_view::npos ? html.size() : close + 3;
            continue;
        }
        if (lowered_ahead(i, "<script") || lowered_ahead(i, "<style")) {
            std::string_view closing = lowered_ahead(i, "<script") ? "</script" : "</style";
            size_t close = i;
            while (close < html.size()) {
                if (html[close] == '<' && lowered_ahead(close, closing)) break;
                ++close;
            }
            size_t end = html.find('>', close);
            i = end == std::string_view::npos ? html.size() : end + 1;
            continue;
        }
        size_t close = html.find('>', i);
        if (close == std::string_view::npos) {
            break;  // dangling tag at end of document
        }
        size_t name_begin = i + 1;
        if (name_begin < html.size() && html[name_begin] == '/') ++name_begin;
        size_t name_end = name_begin;
        while (name_end < close && std::isalnum(static_cast<unsigned char>(html[name_end]))) {
            ++name_end;
        }
        std::string tag;
        for (size_t k = name_begin; k < name_end; ++k) {
            tag += static_cast<char>(std::tolower(static_cast<unsigned char>(html[k])));
        }
        text += detail::is_block_tag(tag) ? "\n" : "";
        i = close + 1;
    }

    std::string decoded = detail::decode_entities(text);
    std::string out;
    out.reserve(decoded.size());
    bool pending_space = false;
    bool pending_newline = false;
    for (char c : decoded) {
        if (c == '\n') {
            pending_newline = true;
            pending_space = false;
        } else if (c == ' ' || c == '\t' || c == '\r' || c == '\f') {
            pending_space = true;
        } else {
            if (pending_newline && !out.empty()) out += '\n';
            else if (pending_space && !out.empty()) out += ' ';
            pending_newline = false;
            pending_space = false;
            out += c;
        }
    }
    return out;
}

inline WebDocument fetch_and_clean(const std::string& url, PageFetcher& fetcher) {
    FetchedPage page;
    try {
        page = fetcher.fetch(url);
    } catch (const std::exception& e) {
        throw FetchError("fetch failed for " + url + ": " + e.what());
    }
    if (page.status < 200 || page.status >= 300) {
        throw FetchError("fetch failed for " + url + ": status " + std::to_string(page.status));
    }
    WebDocument doc;
    doc.url = url;
    doc.text = strip_html(page.body);
    doc.fetched_at = std::chrono::system_clock::now();
    return doc;
}

// Chunk i covers [i*(size-overlap), i*(size-overlap)+size); the last chunk
// may be short and generation stops once the end of the text is reached.
inline std::vector<Chunk> chunk_document(const WebDocument& doc, size_t size, size_t overlap) {
    if (size == 0 || overlap >= size) {
        throw std::invalid_argument("chunk_document: require 0 <= overlap < size");
    }
    std::vector<Chunk> chunks;
    const std::string& text = doc.text;
    size_t stride = size - overlap;
    for (size_t start = 0; start < text.size(); start += stride) {
        size_t end = std::min(start + size, text.size());
        Chunk chunk;
        chunk.doc_url = doc.url;
        chunk.begin = start;
        chunk.end = end;
        chunk.text = text.substr(start, end - start);
        chunks.push_back(std::move(chunk));
        if (end == text.size()) break;
    }
    return chunks;
}

class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::vector<float> embed(const std::string& text) = 0;
    virtual std::string id() const = 0;
    virtual size_t dimension() const = 0;
};

// Deterministic fallback embedder: hashed bag of words into a fixed number of
// buckets, L2-normalized so cosine similarity reduces to a dot product.
class HashedBagEmbedder : public Embedder {
public:
    explicit HashedBagEmbedder(size_t dim = 512) : dim_(dim) {}

    std::vector<float> embed(const std::string& text) override {
        std::vector<float> v(dim_, 0.0f);
        std::string token;
        auto flush = [&] {
            if (!token.empty()) {
                v[fnv1a64(token) % dim_] += 1.0f;
                token.clear();
            }
        };
        for (char c : text) {
            if (std::isalnum(static_cast<unsigned char>(c))) {
                token += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
            } else {
                flush();
            }
        }
        flush();
        double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
        if (norm > 0.0) {
            for (float& x : v) x = static_cast<float>(x / norm);
        }
        return v;
    }

    std::string id() const override { return "hashed-bow-" + std::to_string(dim_); }
    size_t dimension() const override { return dim_; }

private:
    size_t dim_;
};

struct ScrapeOptions {
    size_t chunk_size = 1000;
    size_t chunk_overlap = 200;
    std::chrono::seconds total_budget{120};
};

struct ScrapeReport {
    std::vector<std::string> fetched;
    std::vector<std::pair<std::string, std::string>> skipped;  // (url, reason)
};

// Search, scrape and index the top pages for one dataset.  Individual fetch
// failures are recorded and skipped; the agent can reason from what remains.
inline EvidenceIndex build_evidence_index(const std::string& query, SearchClient& search,
                                          PageFetcher& fetcher, Embedder& embedder,
                                          const ScrapeOptions& options = {},
                                          ScrapeReport* report = nullptr) {
    EvidenceIndex index;
    index.embedder_id = embedder.id();
    auto deadline = std::chrono::steady_clock::now() + options.total_budget;
    for (const std::string& url : search_dataset(query, search)) {
        if (std::chrono::steady_clock::now() > deadline) {
            if (report) report->skipped.emplace_back(url, "scrape budget exceeded");
            continue;
        }
        WebDocument doc;
        try {
            doc = fetch_and_clean(url, fetcher);
        } catch (const FetchError& e) {
            if (report) report->skipped.emplace_back(url, e.what());
            continue;
        }
        if (doc.text.empty()) {
            if (report) report->skipped.emplace_back(url, "no text after markup removal");
            continue;
        }
        for (Chunk& chunk : chunk_document(doc, options.chunk_size, options.chunk_overlap)) {
            chunk.vector = embedder.embed(chunk.text);
            index.chunks.push_back(std::move(chunk));
        }
        if (report) report->fetched.push_back(url);
    }
    return index;
}

// Indices of the top_k most similar chunks; ties go to the lower ordinal.
inline std::vector<size_t> top_k_chunks(const EvidenceIndex& index,
                                        const std::vector<float>& query_vec, size_t top_k) {
    std::vector<std::pair<double, size_t>> scored;
    scored.reserve(index.chunks.size());
    for (size_t i = 0; i < index.chunks.size(); ++i) {
        const auto& v = index.chunks[i].vector;
        double score = 0.0;
        size_t n = std::min(v.size(), query_vec.size());
        for (size_t k = 0; k < n; ++k) score += static_cast<double>(v[k]) * query_vec[k];
        scored.emplace_back(score, i);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::vector<size_t> out;
    for (size_t i = 0; i < std::min(top_k, scored.size()); ++i) {
        out.push_back(scored[i].second);
    }
    return out;
}

inline std::string compose_qa_prompt(const std::vector<std::string>& context_chunks,
                                     const std::string& question) {
    std::string prompt =
        "Use only the following context to answer the question. If the answer is not found in "
        "the context, say that it is not found in the context.\n\nContext:\n";
    for (size_t i = 0; i < context_chunks.size(); ++i) {
        if (i > 0) prompt += "\n\n";
        prompt += context_chunks[i];
    }
    prompt += "\n\nQuestion: " + question + "\nAnswer:";
    return prompt;
}

inline std::string compose_qa_prompt(const EvidenceIndex& index, const std::string& question,
                                     size_t top_k, Embedder& embedder) {
    std::vector<float> qvec = embedder.embed(question);
    std::vector<std::string> context;
    for (size_t idx : top_k_chunks(index, qvec, top_k)) {
        context.push_back(index.chunks[idx].text);
    }
    return compose_qa_prompt(context, question);
}

struct QaToolOptions {
    size_t top_k = 4;
    int max_new_tokens = 256;
    double temperature = 0.0;
};

// The agent's single tool: answer a natural-language question over the index
// through a backend-composed QA prompt.
inline std::string answer_question(const EvidenceIndex& index, const std::string& question,
                                   Gateway& gateway, const std::string& backend_id,
                                   Embedder& embedder, const QaToolOptions& options = {}) {
    if (index.chunks.empty()) {
        throw ToolError("the evidence index is empty; no pages were retrieved");
    }
    CompletionRequest request;
    request.prompt = compose_qa_prompt(index, question, options.top_k, embedder);
    request.params.temperature = options.temperature;
    request.params.max_new_tokens = options.max_new_tokens;
    request.backend_id = backend_id;
    return gateway.complete(request).text;
}

}  // namespace agentinstruct
