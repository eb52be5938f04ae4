#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "satseg/corpus.hpp"
#include "satseg/tokenize.hpp"

namespace satseg::corrupt {

enum class Scheme { Pretrain, SmAsr, SmUgc, Clean };

struct CorruptionConfig {
    double p_remove_punct = 0.25;     // pretrain: per-token removal probability
    double p_full_strip_sample = 0.10;  // pretrain: whole-sample lowercase+strip
    Scheme scheme = Scheme::Pretrain;
    double p_lower = 0.5;             // sm_ugc: lowercase the whole sample
    double p_ugc_remove_all = 0.5;    // sm_ugc: strip all punctuation
    double p_dup_trigger = 0.5;       // sm_ugc: per surviving punct token
    double dup_geo_base = 0.5;        // P(m=k) = base^(k-1), k >= 2 at base 0.5
    double p_space_remove = 0.1;      // sm_ugc: per inter-sentence separator
    double p_space_add = 0.1;
};

struct CorruptedExample {
    std::string text;
    std::set<size_t> boundary_char_indices;
    // char index -> token id of the punctuation removed immediately after it
    std::map<size_t, int> aux_punct_labels;
    std::string language;
};

CorruptedExample corrupt_pretrain(const corpus::PackedChunk& chunk, const tokenize::Tokenizer& tok,
                                  const tokenize::PunctuationSet& punct, const CorruptionConfig& cfg,
                                  uint64_t rng_seed);

CorruptedExample corrupt_sm(const corpus::PackedChunk& chunk, const tokenize::Tokenizer& tok,
                            const tokenize::PunctuationSet& punct, const CorruptionConfig& cfg, uint64_t rng_seed);

// Uniform over {SmAsr, SmUgc, Clean}.
Scheme sample_scheme(uint64_t rng_seed);

// Lowercases and strips punctuation tokens from a single sentence the way the
// ASR scheme does. Returns the empty string when nothing survives (used by
// evaluation-time corruption, which drops such sentences).
std::string asr_strip_sentence(const std::string& text, const tokenize::Tokenizer& tok,
                               const tokenize::PunctuationSet& punct);

}  // namespace satseg::corrupt
