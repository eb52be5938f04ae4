#include <map>

#include "doctest.h"
#include "satseg/common.hpp"
#include "satseg/tokenize.hpp"
#include "satseg/unicode.hpp"

using namespace satseg;

namespace {

// Brute-force adjacent-pair counting oracle for the first BPE merge.
std::pair<std::string, std::string> best_pair_oracle(const std::vector<std::string>& corpus) {
    std::map<std::pair<std::string, std::string>, int> counts;
    for (const auto& s : corpus) {
        const auto d = uni::decode(s);
        for (size_t i = 0; i + 1 < d.cps.size(); ++i)
            counts[{uni::encode_cp(d.cps[i]), uni::encode_cp(d.cps[i + 1])}] += 1;
    }
    std::pair<std::string, std::string> best;
    int best_count = 0;
    for (const auto& [pr, n] : counts)
        if (n > best_count) {
            best = pr;
            best_count = n;
        }
    return best;
}

std::string random_utf8(Rng& rng, size_t max_cps) {
    std::vector<uint32_t> cps;
    const size_t n = 1 + rng.below(max_cps);
    for (size_t i = 0; i < n; ++i) {
        switch (rng.below(4)) {
            case 0: cps.push_back(0x20 + static_cast<uint32_t>(rng.below(0x5F))); break;      // ASCII
            case 1: cps.push_back(0xC0 + static_cast<uint32_t>(rng.below(0x100))); break;     // Latin
            case 2: cps.push_back(0x0390 + static_cast<uint32_t>(rng.below(0x400))); break;   // Greek/Cyrillic
            default: cps.push_back(0x4E00 + static_cast<uint32_t>(rng.below(0x1000))); break;  // CJK
        }
    }
    return uni::encode(cps);
}

}  // namespace

TEST_SUITE("tokenize") {

TEST_CASE("first bpe merge matches the pair-counting oracle") {
    const std::vector<std::string> corpus{"aaab", "aaab"};
    // Distinct chars: a, b -> vocab budget chars+1 leaves one merge.
    const auto tok = tokenize::Tokenizer::train_bpe(corpus, 3);
    REQUIRE(tok.merges().size() == 1);
    CHECK(tok.merges()[0] == best_pair_oracle(corpus));
    CHECK(tok.merges()[0] == std::make_pair(std::string("a"), std::string("a")));
}

TEST_CASE("vocab budget equal to distinct chars means zero merges") {
    const auto bpe = tokenize::Tokenizer::train_bpe({"abcabc"}, 3);
    CHECK(bpe.merges().empty());
    const auto seq = bpe.encode("abc");
    REQUIRE(seq.ids.size() == 3);
    for (size_t i = 0; i < 3; ++i) CHECK(seq.spans[i] == tokenize::Span{i, i + 1});
}

TEST_CASE("empty corpus is an error") {
    CHECK_THROWS_AS(tokenize::Tokenizer::train_bpe({}, 10), std::invalid_argument);
    CHECK_THROWS_AS(tokenize::Tokenizer::train_bpe({""}, 10), std::invalid_argument);
}

TEST_CASE("char mode encodes one token per character") {
    const auto tok = tokenize::Tokenizer::char_tokenizer({"ab"});
    const auto seq = tok.encode("ab");
    REQUIRE(seq.ids.size() == 2);
    CHECK(seq.spans[0] == tokenize::Span{0, 1});
    CHECK(seq.spans[1] == tokenize::Span{1, 2});
    CHECK(tok.token_text(seq.ids[0]) == "a");
    CHECK(tok.token_text(seq.ids[1]) == "b");
}

TEST_CASE("greedy merge application: aaa with merge (a,a) gives [aa, a]") {
    const auto tok = tokenize::Tokenizer::train_bpe({"aaab", "aaab"}, 3);
    const auto seq = tok.encode("aaa");
    REQUIRE(seq.ids.size() == 2);
    CHECK(tok.token_text(seq.ids[0]) == "aa");
    CHECK(tok.token_text(seq.ids[1]) == "a");
    CHECK(seq.spans[0] == tokenize::Span{0, 2});
    CHECK(seq.spans[1] == tokenize::Span{2, 3});
}

TEST_CASE("empty input encodes to an empty sequence") {
    const auto tok = tokenize::Tokenizer::char_tokenizer({"ab"});
    const auto seq = tok.encode("");
    CHECK(seq.ids.empty());
    CHECK(seq.spans.empty());
}

TEST_CASE("encode/decode round-trips on random UTF-8") {
    const auto char_tok = tokenize::Tokenizer::char_tokenizer({"abc xyz"});
    const auto bpe_tok = tokenize::Tokenizer::train_bpe({"the cat sat on the mat", "the dog"}, 24);
    Rng rng(2024);
    for (int i = 0; i < 1000; ++i) {
        const std::string s = random_utf8(rng, 40);
        CHECK(char_tok.decode(char_tok.encode(s)) == s);
        CHECK(bpe_tok.decode(bpe_tok.encode(s)) == s);
    }
}

TEST_CASE("spans are contiguous and cover the text") {
    const auto bpe = tokenize::Tokenizer::train_bpe({"aa bb aa bb ccc", "aabb"}, 12);
    Rng rng(5);
    for (int i = 0; i < 300; ++i) {
        const std::string s = random_utf8(rng, 30);
        const auto seq = bpe.encode(s);
        size_t pos = 0;
        for (const auto& sp : seq.spans) {
            CHECK(sp.start == pos);
            CHECK(sp.end > sp.start);
            pos = sp.end;
        }
        CHECK(pos == uni::length(s));
    }
}

TEST_CASE("punctuation set from a small corpus") {
    const auto tok = tokenize::Tokenizer::char_tokenizer({"a. b. c!"});
    const auto ps = tokenize::punctuation_set(tok, {"a. b. c!"}, 30);
    CHECK(ps.chars == std::set<uint32_t>{'.', '!'});
    // Token ids decode to punctuation-only strings.
    for (int id : ps.token_ids) {
        const std::string t = tok.token_text(id);
        CHECK(tokenize::is_punct_only_token(t));
    }
    CHECK(ps.token_ids.size() == 2);
}

TEST_CASE("punctuation set unions per-corpus top-k") {
    const auto tok = tokenize::Tokenizer::char_tokenizer({".?ab"});
    const auto ps = tokenize::punctuation_set(tok, {"a.", "b?"}, 1);
    CHECK(ps.chars == std::set<uint32_t>{'.', '?'});
}

TEST_CASE("corpus without punctuation contributes nothing") {
    const auto tok = tokenize::Tokenizer::char_tokenizer({"abc"});
    const auto ps = tokenize::punctuation_set(tok, {"abc"}, 30);
    CHECK(ps.chars.empty());
    CHECK(ps.token_ids.empty());
}

TEST_CASE("punctuation-only token ids contain no letters or digits") {
    const auto bpe = tokenize::Tokenizer::train_bpe({"hi!! there!! wow!! !!", "x. y. z."}, 24);
    const auto ps = tokenize::punctuation_set(bpe, {"hi!! there!! wow!! !! x. y. z."}, 30);
    for (int id : ps.token_ids) {
        for (uint32_t cp : uni::decode(bpe.token_text(id)).cps) {
            CHECK(!uni::is_alnum(cp));
        }
    }
}

TEST_CASE("json serialization reloads bit-exact") {
    const auto bpe = tokenize::Tokenizer::train_bpe({"banana bandana", "ban ban"}, 16);
    const std::string j = bpe.to_json();
    const auto reloaded = tokenize::Tokenizer::from_json(j);
    CHECK(reloaded == bpe);
    CHECK(reloaded.to_json() == j);

    const auto ct = tokenize::Tokenizer::char_tokenizer({"xyz"});
    CHECK(tokenize::Tokenizer::from_json(ct.to_json()) == ct);
}

}  // TEST_SUITE
