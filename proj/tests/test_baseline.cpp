#include "doctest.h"
#include "satseg/baseline.hpp"

using namespace satseg;

namespace {

const std::set<uint32_t> kTerms = baseline::terminators_from_string(".!?");

std::string joined(const infer::SegmentationResult& res) {
    std::string out;
    for (const auto& s : res.sentences) out += s;
    return out;
}

}  // namespace

TEST_SUITE("baseline") {

TEST_CASE("splits on terminator followed by whitespace and uppercase") {
    const auto res = baseline::rule_segment("Hi. Bye.", kTerms, {});
    REQUIRE(res.sentences.size() == 2);
    CHECK(res.sentences[0] == "Hi. ");  // separator attaches to the first segment
    CHECK(res.sentences[1] == "Bye.");
    CHECK(joined(res) == "Hi. Bye.");
}

TEST_CASE("abbreviations suppress the boundary") {
    const auto one = baseline::rule_segment("Dr. Smith left.", kTerms, {"Dr."});
    CHECK(one.sentences.size() == 1);
    const auto two = baseline::rule_segment("Dr. Smith left.", kTerms, {});
    CHECK(two.sentences.size() == 2);
}

TEST_CASE("text without terminators is a single sentence") {
    const auto res = baseline::rule_segment("no punctuation at all", kTerms, {});
    REQUIRE(res.sentences.size() == 1);
    CHECK(res.sentences[0] == "no punctuation at all");
}

TEST_CASE("punctuation-stripped input produces exactly one segment") {
    // The failure mode the learned model is built to avoid.
    const auto res = baseline::rule_segment("also gut alles klar na also", kTerms, {});
    CHECK(res.sentences.size() == 1);
}

TEST_CASE("closing quotes attach to the preceding sentence") {
    const auto res = baseline::rule_segment("He said \"stop!\" Then left.", kTerms, {});
    REQUIRE(res.sentences.size() == 2);
    CHECK(res.sentences[0] == "He said \"stop!\" ");
    CHECK(res.sentences[1] == "Then left.");
}

TEST_CASE("lowercase after the terminator does not split") {
    const auto res = baseline::rule_segment("e.g. this stays whole.", kTerms, {});
    CHECK(res.sentences.size() == 1);
}

TEST_CASE("reconstruction is lossless on varied inputs") {
    Rng rng(5);
    const std::string pool = "abcDEF.! ?\"xyz";
    for (int trial = 0; trial < 300; ++trial) {
        std::string text;
        for (size_t i = 1 + rng.below(60); i > 0; --i) text += pool[rng.below(pool.size())];
        const auto res = baseline::rule_segment(text, kTerms, {"Dr."});
        CHECK(joined(res) == text);
    }
}

TEST_CASE("empty terminator set is rejected") {
    CHECK_THROWS_AS(baseline::rule_segment("abc", {}, {}), std::invalid_argument);
}

}  // TEST_SUITE
