#include "doctest.h"
#include "satseg/corrupt.hpp"
#include "satseg/unicode.hpp"

using namespace satseg;

namespace {

struct Fixture {
    tokenize::Tokenizer tok = tokenize::Tokenizer::char_tokenizer({"abcdefghijklmnopqrstuvwxyz .!?HYioABG"});
    tokenize::PunctuationSet punct = tokenize::punctuation_set(tok, {". . ! ! ? ?"}, 30);
};

corpus::PackedChunk chunk_of(const std::vector<std::string>& units) {
    corpus::PackedChunk c;
    c.language = "und";
    for (size_t i = 0; i < units.size(); ++i) {
        if (i) c.text += ' ';
        c.text += units[i];
        c.boundary_char_indices.insert(uni::length(c.text) - 1);
    }
    return c;
}

}  // namespace

TEST_SUITE("corrupt") {

TEST_CASE("zero probabilities leave the sample untouched") {
    Fixture fx;
    const auto c = chunk_of({"Hi.", "Yo."});
    corrupt::CorruptionConfig cfg;
    cfg.p_remove_punct = 0.0;
    cfg.p_full_strip_sample = 0.0;
    for (uint64_t seed = 0; seed < 10; ++seed) {
        const auto ex = corrupt::corrupt_pretrain(c, fx.tok, fx.punct, cfg, seed);
        CHECK(ex.text == c.text);
        CHECK(ex.boundary_char_indices == c.boundary_char_indices);
        CHECK(ex.aux_punct_labels.empty());
    }
}

TEST_CASE("certain removal remaps boundaries and records aux labels") {
    // Hand-remapping oracle: "Hi. Yo." -> "Hi Yo"; boundaries {2,6} -> {1,4};
    // each removed '.' labels the previous surviving character.
    Fixture fx;
    const auto c = chunk_of({"Hi.", "Yo."});
    corrupt::CorruptionConfig cfg;
    cfg.p_remove_punct = 1.0;
    cfg.p_full_strip_sample = 0.0;
    const auto ex = corrupt::corrupt_pretrain(c, fx.tok, fx.punct, cfg, 3);
    CHECK(ex.text == "Hi Yo");
    CHECK(ex.boundary_char_indices == std::set<size_t>{1, 4});
    const int dot_id = fx.tok.token_id(".");
    REQUIRE(ex.aux_punct_labels.size() == 2);
    CHECK(ex.aux_punct_labels.at(1) == dot_id);
    CHECK(ex.aux_punct_labels.at(4) == dot_id);
}

TEST_CASE("removal rate tracks p_remove_punct") {
    Fixture fx;
    corrupt::CorruptionConfig cfg;
    cfg.p_remove_punct = 0.25;
    cfg.p_full_strip_sample = 0.0;
    size_t total = 0, removed = 0;
    for (uint64_t seed = 0; seed < 2500; ++seed) {
        const auto c = chunk_of({"ab.", "cd.", "ef.", "gh."});
        const auto ex = corrupt::corrupt_pretrain(c, fx.tok, fx.punct, cfg, seed);
        total += 4;
        removed += ex.aux_punct_labels.size();
    }
    REQUIRE(total == 10000);
    const double rate = static_cast<double>(removed) / static_cast<double>(total);
    CHECK(rate > 0.23);
    CHECK(rate < 0.27);
}

TEST_CASE("full strip branch lowercases and strips the whole sample") {
    Fixture fx;
    const auto c = chunk_of({"Hi.", "Yo!"});
    corrupt::CorruptionConfig cfg;
    cfg.p_remove_punct = 0.0;
    cfg.p_full_strip_sample = 1.0;
    const auto ex = corrupt::corrupt_pretrain(c, fx.tok, fx.punct, cfg, 11);
    CHECK(ex.text == "hi yo");
    CHECK(ex.boundary_char_indices == std::set<size_t>{1, 4});
}

TEST_CASE("asr scheme removes casing and punctuation") {
    Fixture fx;
    const auto c = chunk_of({"Also gut.", "Alles klar?"});
    corrupt::CorruptionConfig cfg;
    cfg.scheme = corrupt::Scheme::SmAsr;
    const auto ex = corrupt::corrupt_sm(c, fx.tok, fx.punct, cfg, 0);
    CHECK(ex.text == "also gut alles klar");
    // Boundaries on the final characters of "gut" and "klar".
    CHECK(ex.boundary_char_indices == std::set<size_t>{7, 18});
}

TEST_CASE("clean scheme is the identity") {
    Fixture fx;
    const auto c = chunk_of({"Hi there.", "Bye!"});
    corrupt::CorruptionConfig cfg;
    cfg.scheme = corrupt::Scheme::Clean;
    for (uint64_t seed = 0; seed < 5; ++seed) {
        const auto ex = corrupt::corrupt_sm(c, fx.tok, fx.punct, cfg, seed);
        CHECK(ex.text == c.text);
        CHECK(ex.boundary_char_indices == c.boundary_char_indices);
    }
}

TEST_CASE("ugc duplication multiplicities follow the stated geometric") {
    // Monte-Carlo against P(m) = 0.5^(m-1), m >= 2: 0.5 / 0.25 / 0.125.
    Fixture fx;
    corrupt::CorruptionConfig cfg;
    cfg.scheme = corrupt::Scheme::SmUgc;
    cfg.p_lower = 0.0;
    cfg.p_ugc_remove_all = 0.0;
    cfg.p_dup_trigger = 1.0;
    cfg.dup_geo_base = 0.5;
    cfg.p_space_remove = 0.0;
    cfg.p_space_add = 0.0;
    std::map<size_t, size_t> freq;
    const size_t draws = 10000;
    for (uint64_t seed = 0; seed < draws; ++seed) {
        const auto c = chunk_of({"a!"});
        const auto ex = corrupt::corrupt_sm(c, fx.tok, fx.punct, cfg, seed);
        freq[uni::length(ex.text) - 1] += 1;  // number of '!' copies
    }
    const double p2 = static_cast<double>(freq[2]) / draws;
    const double p3 = static_cast<double>(freq[3]) / draws;
    const double p4 = static_cast<double>(freq[4]) / draws;
    CHECK(p2 == doctest::Approx(0.5).epsilon(0.08));
    CHECK(p3 == doctest::Approx(0.25).epsilon(0.15));
    CHECK(p4 == doctest::Approx(0.125).epsilon(0.3));
}

TEST_CASE("ugc keeps boundaries on the duplicated final punctuation") {
    Fixture fx;
    corrupt::CorruptionConfig cfg;
    cfg.scheme = corrupt::Scheme::SmUgc;
    cfg.p_lower = 0.0;
    cfg.p_ugc_remove_all = 0.0;
    cfg.p_dup_trigger = 1.0;
    cfg.p_space_remove = 0.0;
    cfg.p_space_add = 0.0;
    const auto c = chunk_of({"hi!", "yo!"});
    const auto ex = corrupt::corrupt_sm(c, fx.tok, fx.punct, cfg, 1);
    // Both units still end at their (now duplicated) punctuation.
    REQUIRE(ex.boundary_char_indices.size() == 2);
    const auto d = uni::decode(ex.text);
    for (size_t b : ex.boundary_char_indices) CHECK(d.cps[b] == static_cast<uint32_t>('!'));
    CHECK(*ex.boundary_char_indices.rbegin() == d.cps.size() - 1);
}

TEST_CASE("ugc space removal and insertion remap boundaries") {
    Fixture fx;
    corrupt::CorruptionConfig cfg;
    cfg.scheme = corrupt::Scheme::SmUgc;
    cfg.p_lower = 0.0;
    cfg.p_ugc_remove_all = 0.0;
    cfg.p_dup_trigger = 0.0;
    cfg.p_space_remove = 1.0;
    cfg.p_space_add = 0.0;
    const auto c = chunk_of({"ab.", "cd."});
    const auto removed = corrupt::corrupt_sm(c, fx.tok, fx.punct, cfg, 2);
    CHECK(removed.text == "ab.cd.");
    CHECK(removed.boundary_char_indices == std::set<size_t>{2, 5});

    cfg.p_space_remove = 0.0;
    cfg.p_space_add = 1.0;
    const auto added = corrupt::corrupt_sm(c, fx.tok, fx.punct, cfg, 2);
    CHECK(added.text == "ab.  cd.");
    CHECK(added.boundary_char_indices == std::set<size_t>{2, 7});
}

TEST_CASE("scheme sampler is uniform, deterministic, and covers all schemes") {
    size_t counts[3] = {0, 0, 0};
    const size_t draws = 30000;
    for (uint64_t seed = 0; seed < draws; ++seed) {
        switch (corrupt::sample_scheme(seed)) {
            case corrupt::Scheme::SmAsr: ++counts[0]; break;
            case corrupt::Scheme::SmUgc: ++counts[1]; break;
            case corrupt::Scheme::Clean: ++counts[2]; break;
            default: FAIL("unexpected scheme");
        }
    }
    for (size_t i = 0; i < 3; ++i) {
        const double f = static_cast<double>(counts[i]) / draws;
        CHECK(f > 0.32);
        CHECK(f < 0.35);
    }
    for (uint64_t seed = 0; seed < 10; ++seed) CHECK(corrupt::sample_scheme(seed) == corrupt::sample_scheme(seed));

    bool seen[3] = {false, false, false};
    for (uint64_t seed = 0; seed < 32; ++seed) {
        const auto s = corrupt::sample_scheme(seed);
        seen[s == corrupt::Scheme::SmAsr ? 0 : (s == corrupt::Scheme::SmUgc ? 1 : 2)] = true;
    }
    CHECK(seen[0]);
    CHECK(seen[1]);
    CHECK(seen[2]);
}

TEST_CASE("corruptions never change the boundary count") {
    Fixture fx;
    Rng rng(31);
    for (uint64_t seed = 0; seed < 200; ++seed) {
        std::vector<std::string> units;
        const size_t n = 1 + rng.below(5);
        for (size_t i = 0; i < n; ++i) {
            std::string u;
            const size_t len = 1 + rng.below(6);
            for (size_t k = 0; k < len; ++k) u += static_cast<char>('a' + rng.below(26));
            if (rng.coin(0.8)) u += rng.coin(0.5) ? '.' : '!';
            if (rng.coin(0.1)) u = "!";  // punctuation-only unit
            units.push_back(u);
        }
        const auto c = chunk_of(units);

        corrupt::CorruptionConfig pre;
        pre.p_remove_punct = rng.uniform01();
        pre.p_full_strip_sample = rng.uniform01() * 0.5;
        const auto ex1 = corrupt::corrupt_pretrain(c, fx.tok, fx.punct, pre, seed);
        CHECK(ex1.boundary_char_indices.size() == c.boundary_char_indices.size());

        corrupt::CorruptionConfig sm;
        sm.scheme = seed % 3 == 0 ? corrupt::Scheme::SmAsr
                                  : (seed % 3 == 1 ? corrupt::Scheme::SmUgc : corrupt::Scheme::Clean);
        const auto ex2 = corrupt::corrupt_sm(c, fx.tok, fx.punct, sm, seed);
        CHECK(ex2.boundary_char_indices.size() == c.boundary_char_indices.size());

        // Splitting at remapped boundaries yields non-empty pieces in order.
        const auto dec = uni::decode(ex2.text);
        size_t prev = 0;
        for (size_t b : ex2.boundary_char_indices) {
            CHECK(b < dec.cps.size());
            CHECK(b + 1 > prev);
            prev = b + 1;
        }
        CHECK(prev == dec.cps.size());
    }
}

TEST_CASE("removing a boundary-final token moves the boundary backwards") {
    Fixture fx;
    const auto c = chunk_of({"abc."});
    corrupt::CorruptionConfig cfg;
    cfg.p_remove_punct = 1.0;
    cfg.p_full_strip_sample = 0.0;
    const auto ex = corrupt::corrupt_pretrain(c, fx.tok, fx.punct, cfg, 0);
    CHECK(ex.text == "abc");
    CHECK(ex.boundary_char_indices == std::set<size_t>{2});
}

TEST_CASE("corruption is a pure function of input, config, and seed") {
    Fixture fx;
    const auto c = chunk_of({"Hello there!", "General?"});
    corrupt::CorruptionConfig cfg;
    cfg.scheme = corrupt::Scheme::SmUgc;
    for (uint64_t seed = 0; seed < 8; ++seed) {
        const auto a = corrupt::corrupt_sm(c, fx.tok, fx.punct, cfg, seed);
        const auto b = corrupt::corrupt_sm(c, fx.tok, fx.punct, cfg, seed);
        CHECK(a.text == b.text);
        CHECK(a.boundary_char_indices == b.boundary_char_indices);
        CHECK(a.aux_punct_labels == b.aux_punct_labels);
    }
}

TEST_CASE("scheme preconditions are enforced") {
    Fixture fx;
    const auto c = chunk_of({"a."});
    corrupt::CorruptionConfig cfg;
    cfg.scheme = corrupt::Scheme::SmAsr;
    CHECK_THROWS_AS(corrupt::corrupt_pretrain(c, fx.tok, fx.punct, cfg, 0), std::invalid_argument);
    cfg.scheme = corrupt::Scheme::Pretrain;
    CHECK_THROWS_AS(corrupt::corrupt_sm(c, fx.tok, fx.punct, cfg, 0), std::invalid_argument);
}

}  // TEST_SUITE
