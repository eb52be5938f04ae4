#include <algorithm>

#include "doctest.h"
#include "satseg/corpus.hpp"
#include "satseg/unicode.hpp"

using namespace satseg;

namespace {

tokenize::Tokenizer ascii_tok() {
    return tokenize::Tokenizer::char_tokenizer({"abcdefghijklmnopqrstuvwxyz .!?ABC"});
}

corpus::Document doc(std::vector<std::string> units, std::string lang = "und") {
    corpus::Document d;
    d.language = std::move(lang);
    for (auto& u : units) d.units.push_back({std::move(u), corpus::UnitKind::Sentence});
    return d;
}

}  // namespace

TEST_SUITE("corpus") {

TEST_CASE("lines format: blank line separates documents") {
    const auto docs = corpus::parse_corpus("A.\nB.\n\nC.\n", corpus::CorpusFormat::Lines);
    REQUIRE(docs.size() == 2);
    REQUIRE(docs[0].units.size() == 2);
    CHECK(docs[0].units[0].text == "A.");
    CHECK(docs[0].units[1].text == "B.");
    REQUIRE(docs[1].units.size() == 1);
    CHECK(docs[1].units[0].text == "C.");
}

TEST_CASE("jsonl format: document per line") {
    const auto docs = corpus::parse_corpus(R"({"language":"en","units":["Hi.","Yes."]})", corpus::CorpusFormat::Jsonl);
    REQUIRE(docs.size() == 1);
    CHECK(docs[0].language == "en");
    REQUIRE(docs[0].units.size() == 2);
    CHECK(docs[0].units[0].text == "Hi.");
    CHECK(docs[0].units[1].text == "Yes.");
}

TEST_CASE("malformed jsonl names the line") {
    try {
        corpus::parse_corpus("{bad json", corpus::CorpusFormat::Jsonl);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("line 1") != std::string::npos);
    }
}

TEST_CASE("empty file gives an empty corpus") {
    CHECK(corpus::parse_corpus("", corpus::CorpusFormat::Lines).empty());
    CHECK(corpus::parse_corpus("", corpus::CorpusFormat::Jsonl).empty());
}

TEST_CASE("empty lines never become units") {
    const auto docs = corpus::parse_corpus("A.\n\n\n\nB.\n", corpus::CorpusFormat::Lines);
    REQUIRE(docs.size() == 2);
    for (const auto& d : docs)
        for (const auto& u : d.units) CHECK(!u.text.empty());
}

TEST_CASE("fill packing respects the token budget") {
    const auto tok = ascii_tok();
    corpus::PackingConfig cfg;
    cfg.context_tokens = 8;  // "aaa bbb" is 7 chars; adding " ccc" exceeds
    const auto res = corpus::pack_chunks({doc({"aaa", "bbb", "ccc"})}, cfg, tok, 0);
    REQUIRE(res.chunks.size() == 2);
    CHECK(res.chunks[0].text == "aaa bbb");
    CHECK(res.chunks[0].boundary_char_indices == std::set<size_t>{2, 6});
    CHECK(res.chunks[1].text == "ccc");
    CHECK(res.chunks[1].boundary_char_indices == std::set<size_t>{2});
}

TEST_CASE("geometric packing with geo_p=1 puts one unit per chunk") {
    const auto tok = ascii_tok();
    corpus::PackingConfig cfg;
    cfg.context_tokens = 64;
    cfg.mode = corpus::PackMode::Geometric;
    cfg.geo_p = 1.0;
    const auto res = corpus::pack_chunks({doc({"aa", "bb", "cc", "dd"})}, cfg, tok, 7);
    REQUIRE(res.chunks.size() == 4);
    for (const auto& c : res.chunks) CHECK(c.boundary_char_indices.size() == 1);
}

TEST_CASE("geometric packing mean matches 1/geo_p") {
    // Monte-Carlo oracle: E[s] = 1/geo_p = 2 at geo_p = 0.5.
    const auto tok = ascii_tok();
    corpus::PackingConfig cfg;
    cfg.context_tokens = 4096;
    cfg.mode = corpus::PackMode::Geometric;
    cfg.geo_p = 0.5;
    std::vector<corpus::Document> docs;
    for (int i = 0; i < 300; ++i) {
        corpus::Document d;
        for (int u = 0; u < 100; ++u) d.units.push_back({"ab", corpus::UnitKind::Sentence});
        docs.push_back(std::move(d));
    }
    const auto res = corpus::pack_chunks(docs, cfg, tok, 123);
    REQUIRE(res.chunks.size() >= 10000);
    double mean = 0.0;
    for (const auto& c : res.chunks) mean += static_cast<double>(c.boundary_char_indices.size());
    mean /= static_cast<double>(res.chunks.size());
    // Document tails truncate a few draws, so allow the spec's +-0.05 band.
    CHECK(mean > 1.95);
    CHECK(mean < 2.05);
}

TEST_CASE("oversized unit is truncated with a warning") {
    const auto tok = ascii_tok();
    corpus::PackingConfig cfg;
    cfg.context_tokens = 8;
    const auto res = corpus::pack_chunks({doc({"aaaaaaaaaaaaaaaa"})}, cfg, tok, 0);
    REQUIRE(res.chunks.size() == 1);
    CHECK(uni::length(res.chunks[0].text) == 8);
    CHECK(res.warnings.size() == 1);
}

TEST_CASE("sentence pairs are disjoint and drop the odd tail") {
    const auto even = corpus::make_sentence_pairs({doc({"s1.", "s2.", "s3.", "s4."})}, 0);
    REQUIRE(even.chunks.size() == 2);
    CHECK(even.chunks[0].text == "s1. s2.");
    CHECK(even.chunks[1].text == "s3. s4.");
    CHECK(even.chunks[0].boundary_char_indices.size() == 2);

    const auto odd = corpus::make_sentence_pairs({doc({"s1.", "s2.", "s3."})}, 0);
    REQUIRE(odd.chunks.size() == 1);
    CHECK(odd.chunks[0].text == "s1. s2.");

    CHECK(corpus::make_sentence_pairs({}, 0).chunks.empty());
    CHECK(corpus::make_sentence_pairs({doc({"only"})}, 0).warnings.size() == 1);
}

TEST_CASE("pair generation uses every sentence at most once") {
    const auto res = corpus::make_sentence_pairs({doc({"a.", "b.", "c.", "d.", "e.", "f."})}, 0);
    std::vector<std::string> seen;
    for (const auto& c : res.chunks)
        for (const auto& u : corpus::split_chunk(c)) seen.push_back(u);
    std::sort(seen.begin(), seen.end());
    CHECK(std::adjacent_find(seen.begin(), seen.end()) == seen.end());
}

TEST_CASE("round-trip: splitting a chunk reproduces the unit texts") {
    const auto tok = ascii_tok();
    Rng rng(99);
    for (uint64_t seed = 0; seed < 20; ++seed) {
        std::vector<std::string> units;
        const size_t n = 2 + rng.below(6);
        for (size_t i = 0; i < n; ++i) {
            std::string u;
            const size_t len = 1 + rng.below(8);
            for (size_t k = 0; k < len; ++k) u += static_cast<char>('a' + rng.below(26));
            u += '.';
            units.push_back(u);
        }
        corpus::PackingConfig cfg;
        cfg.context_tokens = 32;
        cfg.mode = seed % 2 ? corpus::PackMode::Geometric : corpus::PackMode::Fill;
        const auto res = corpus::pack_chunks({doc(units)}, cfg, tok, seed);
        std::vector<std::string> recovered;
        for (const auto& c : res.chunks)
            for (auto& u : corpus::split_chunk(c)) recovered.push_back(std::move(u));
        CHECK(recovered == units);
    }
}

TEST_CASE("packing is deterministic under a fixed seed") {
    const auto tok = ascii_tok();
    corpus::PackingConfig cfg;
    cfg.context_tokens = 16;
    cfg.mode = corpus::PackMode::Geometric;
    cfg.geo_p = 0.5;
    const std::vector<corpus::Document> docs{doc({"aa.", "bb.", "cc.", "dd.", "ee."})};
    const auto a = corpus::pack_chunks(docs, cfg, tok, 42);
    const auto b = corpus::pack_chunks(docs, cfg, tok, 42);
    REQUIRE(a.chunks.size() == b.chunks.size());
    for (size_t i = 0; i < a.chunks.size(); ++i) {
        CHECK(a.chunks[i].text == b.chunks[i].text);
        CHECK(a.chunks[i].boundary_char_indices == b.chunks[i].boundary_char_indices);
    }
}

TEST_CASE("document sampling keeps non-punctuation-final units at or below the cap") {
    std::vector<corpus::Document> docs;
    for (int i = 0; i < 50; ++i) docs.push_back(doc({"good.", "fine.", "done."}));
    for (int i = 0; i < 50; ++i) docs.push_back(doc({"no punct here", "none"}));
    Rng rng(7);
    const auto picked = corpus::sample_documents(docs, 300, 0.10, rng);
    size_t units = 0, nonpunct = 0;
    for (size_t i : picked)
        for (const auto& u : docs[i].units) {
            ++units;
            if (!corpus::ends_in_punct(u)) ++nonpunct;
        }
    CHECK(units >= 300);
    CHECK(static_cast<double>(nonpunct) / static_cast<double>(units) <= 0.10 + 1e-9);
}

}  // TEST_SUITE
