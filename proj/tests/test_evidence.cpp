#include <doctest.h>

#include <random>

#include "agentinstruct/evidence.hpp"
#include "helpers.hpp"

using namespace agentinstruct;

TEST_CASE("search_dataset caps at the top five results in order") {
    ScriptedSearchClient client;
    client.add("IMDB", {"u1", "u2", "u3", "u4", "u5"});
    CHECK(search_dataset("IMDB", client) ==
          std::vector<std::string>{"u1", "u2", "u3", "u4", "u5"});

    CHECK(search_dataset("unknown", client).empty());

    client.add("big", {"a", "b", "c", "d", "e", "f", "g", "h"});
    CHECK(search_dataset("big", client) == std::vector<std::string>{"a", "b", "c", "d", "e"});

    CHECK_THROWS_AS(search_dataset("  ", client), std::invalid_argument);
}

TEST_CASE("strip_html removes markup") {
    CHECK(strip_html("<p>Hello <b>world</b></p>") == "Hello world");
    CHECK(strip_html("<script>var x = '<p>';</script>text") == "text");
    CHECK(strip_html("<style>p { color: red }</style>styled") == "styled");
    CHECK(strip_html("<!-- note -->visible") == "visible");
    CHECK(strip_html("a &amp; b &lt;tag&gt;") == "a & b <tag>");
    CHECK(strip_html("<div>one</div><div>two</div>") == "one\ntwo");
    CHECK(strip_html("lots   of\t spaces") == "lots of spaces");
}

TEST_CASE("fetch_and_clean") {
    testutil::TempDir tmp("fetch");
    write_file(tmp.path() / "page.html", "<html><body><p>Hello <b>world</b></p></body></html>");
    FilePageFetcher fetcher;
    fetcher.add("http://ok.example/", tmp.path() / "page.html");

    WebDocument doc = fetch_and_clean("http://ok.example/", fetcher);
    CHECK(doc.url == "http://ok.example/");
    CHECK(doc.text == "Hello world");

    CHECK_THROWS_AS(fetch_and_clean("http://missing.example/", fetcher), FetchError);
}

TEST_CASE("chunk_document covers the text with the configured stride") {
    WebDocument doc;
    doc.url = "u";
    doc.text = "0123456789";
    auto chunks = chunk_document(doc, 4, 1);
    REQUIRE(chunks.size() == 3);
    CHECK(chunks[0].begin == 0);
    CHECK(chunks[0].end == 4);
    CHECK(chunks[1].begin == 3);
    CHECK(chunks[1].end == 7);
    CHECK(chunks[2].begin == 6);
    CHECK(chunks[2].end == 10);
    CHECK(chunks[0].text == "0123");

    doc.text = "ab";
    chunks = chunk_document(doc, 4, 1);
    REQUIRE(chunks.size() == 1);
    CHECK(chunks[0].text == "ab");

    CHECK_THROWS_AS(chunk_document(doc, 4, 4), std::invalid_argument);
    CHECK_THROWS_AS(chunk_document(doc, 4, 7), std::invalid_argument);
}

TEST_CASE("chunk reassembly with overlaps deduplicated reproduces the source") {
    std::mt19937 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        WebDocument doc;
        doc.url = "u";
        size_t len = 1 + rng() % 400;
        for (size_t i = 0; i < len; ++i) doc.text += static_cast<char>('a' + rng() % 26);
        size_t size = 2 + rng() % 60;
        size_t overlap = rng() % size;
        auto chunks = chunk_document(doc, size, overlap);
        REQUIRE_FALSE(chunks.empty());
        std::string rebuilt = chunks.front().text;
        for (size_t i = 1; i < chunks.size(); ++i) {
            size_t shared = chunks[i - 1].end - chunks[i].begin;
            rebuilt += chunks[i].text.substr(shared);
        }
        CHECK(rebuilt == doc.text);
    }
}

TEST_CASE("hashed bag embedder is deterministic and unit-norm") {
    HashedBagEmbedder embedder;
    CHECK(embedder.dimension() == 512);
    auto v1 = embedder.embed("the features are the text of the reviews");
    auto v2 = embedder.embed("the features are the text of the reviews");
    CHECK(v1 == v2);
    double norm = 0;
    for (float x : v1) norm += static_cast<double>(x) * x;
    CHECK(norm == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("top_k selection equals brute-force argsort of cosine similarities") {
    std::mt19937 rng(17);
    HashedBagEmbedder embedder(32);
    EvidenceIndex index;
    index.embedder_id = embedder.id();
    const std::vector<std::string> words = {"cat", "dog", "fish", "movie", "review",
                                            "data", "set",  "trek", "blue", "red"};
    for (int i = 0; i < 300; ++i) {
        Chunk chunk;
        chunk.doc_url = "u";
        int n = 1 + static_cast<int>(rng() % 6);
        for (int k = 0; k < n; ++k) chunk.text += words[rng() % words.size()] + " ";
        chunk.vector = embedder.embed(chunk.text);
        index.chunks.push_back(std::move(chunk));
    }
    std::vector<float> q = embedder.embed("movie review data");
    auto picked = top_k_chunks(index, q, 7);

    // brute force oracle
    std::vector<std::pair<double, size_t>> scored;
    for (size_t i = 0; i < index.chunks.size(); ++i) {
        double s = 0;
        for (size_t k = 0; k < q.size(); ++k) {
            s += static_cast<double>(index.chunks[i].vector[k]) * q[k];
        }
        scored.emplace_back(s, i);
    }
    std::stable_sort(scored.begin(), scored.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<size_t> expected;
    for (size_t i = 0; i < 7; ++i) expected.push_back(scored[i].second);
    CHECK(picked == expected);
}

TEST_CASE("equal similarity ties break toward the lower chunk ordinal") {
    HashedBagEmbedder embedder(16);
    EvidenceIndex index;
    for (int i = 0; i < 3; ++i) {
        Chunk chunk;
        chunk.text = "identical text";
        chunk.vector = embedder.embed(chunk.text);
        index.chunks.push_back(std::move(chunk));
    }
    auto picked = top_k_chunks(index, embedder.embed("identical text"), 2);
    CHECK(picked == std::vector<size_t>{0, 1});
}

TEST_CASE("answer_question composes the QA prompt and returns the backend completion") {
    HashedBagEmbedder embedder;
    EvidenceIndex index;
    Chunk chunk;
    chunk.text = "The reviews are labeled positive or negative.";
    chunk.vector = embedder.embed(chunk.text);
    index.chunks.push_back(chunk);
    index.embedder_id = embedder.id();

    std::string expected_prompt = compose_qa_prompt(index, "What are the labels?", 4, embedder);
    // top_k larger than the index still yields exactly one context chunk
    CHECK(expected_prompt ==
          "Use only the following context to answer the question. If the answer is not found in "
          "the context, say that it is not found in the context.\n\nContext:\n" +
              chunk.text + "\n\nQuestion: What are the labels?\nAnswer:");

    auto backend = std::make_shared<ScriptedBackend>("qa");
    backend->register_exact(expected_prompt, "Binary labels.");
    Gateway gateway;
    gateway.register_backend(backend);
    CHECK(answer_question(index, "What are the labels?", gateway, "qa", embedder) ==
          "Binary labels.");

    EvidenceIndex empty;
    CHECK_THROWS_AS(answer_question(empty, "q", gateway, "qa", embedder), ToolError);
}

TEST_CASE("offline index builds are deterministic and skip failing urls") {
    testutil::TempDir tmp("pages");
    write_file(tmp.path() / "a.html", "<p>First page about the dataset.</p>");
    write_file(tmp.path() / "b.html", "<p>Second page, labels and features.</p>");
    ScriptedSearchClient search;
    search.add("DS", {"http://a/", "http://missing/", "http://b/"});
    FilePageFetcher fetcher;
    fetcher.add("http://a/", tmp.path() / "a.html");
    fetcher.add("http://b/", tmp.path() / "b.html");
    HashedBagEmbedder embedder;

    ScrapeOptions options;
    options.chunk_size = 20;
    options.chunk_overlap = 5;

    ScrapeReport report1;
    EvidenceIndex i1 = build_evidence_index("DS", search, fetcher, embedder, options, &report1);
    EvidenceIndex i2 = build_evidence_index("DS", search, fetcher, embedder, options);

    CHECK(report1.fetched == std::vector<std::string>{"http://a/", "http://b/"});
    REQUIRE(report1.skipped.size() == 1);
    CHECK(report1.skipped[0].first == "http://missing/");

    REQUIRE(i1.chunks.size() == i2.chunks.size());
    for (size_t i = 0; i < i1.chunks.size(); ++i) {
        CHECK(i1.chunks[i].text == i2.chunks[i].text);
        CHECK(i1.chunks[i].begin == i2.chunks[i].begin);
        CHECK(i1.chunks[i].vector == i2.chunks[i].vector);
    }
}

TEST_CASE("long pages are retained in full; chunking happens later") {
    testutil::TempDir tmp("bigpage");
    std::string body = "<p>";
    while (body.size() < 50000) body += "fifty thousand characters of page text ";
    body += "</p>";
    write_file(tmp.path() / "big.html", body);
    FilePageFetcher fetcher;
    fetcher.add("http://big/", tmp.path() / "big.html");
    WebDocument doc = fetch_and_clean("http://big/", fetcher);
    CHECK(doc.text.size() > 49000);
    auto chunks = chunk_document(doc, 1000, 200);
    CHECK(chunks.size() > 50);
    for (const auto& c : chunks) CHECK(c.text.size() <= 1000);
}
