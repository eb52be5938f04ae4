#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "satseg/common.hpp"
#include "satseg/tokenize.hpp"

namespace satseg::corpus {

enum class UnitKind { Sentence, Paragraph };

struct Unit {
    std::string text;
    UnitKind kind = UnitKind::Sentence;
};

struct Document {
    std::string language = "und";
    std::vector<Unit> units;
};

// A training/eval sequence: packed unit texts joined by single spaces.
// boundary_char_indices holds the codepoint index of each unit's final
// character; the last unit's final character is always a boundary.
struct PackedChunk {
    std::string text;
    std::set<size_t> boundary_char_indices;
    std::string language;
};

enum class PackMode { Fill, Geometric };

struct PackingConfig {
    size_t context_tokens = 256;
    PackMode mode = PackMode::Fill;
    double geo_p = 0.5;  // P(s=k) = geo_p * (1-geo_p)^(k-1), k >= 1
};

struct PackResult {
    std::vector<PackedChunk> chunks;
    std::vector<std::string> warnings;
};

enum class CorpusFormat { Lines, Jsonl };

// `lines`: one sentence per line, blank line separates documents.
// `jsonl`: one document object per line: {"language": ..., "units": [...]},
// optional "kind": "sentence"|"paragraph".
std::vector<Document> load_corpus(const std::string& path, CorpusFormat format,
                                  const std::string& default_language = "und");
std::vector<Document> parse_corpus(const std::string& content, CorpusFormat format,
                                   const std::string& default_language = "und");

PackResult pack_chunks(const std::vector<Document>& docs, const PackingConfig& cfg,
                       const tokenize::Tokenizer& tok, uint64_t rng_seed);

// Disjoint consecutive sentence pairs; odd trailing sentence dropped.
PackResult make_sentence_pairs(const std::vector<Document>& docs, uint64_t rng_seed);

// True if the unit's last codepoint is punctuation.
bool ends_in_punct(const Unit& unit);

// Rejection-samples document indices until `target_units` units are gathered
// while keeping the fraction of non-punctuation-final units at or below
// max_nonpunct_frac. Gives up on the constraint after too many consecutive
// rejections rather than looping forever.
std::vector<size_t> sample_documents(const std::vector<Document>& docs, size_t target_units,
                                     double max_nonpunct_frac, Rng& rng);

// Splits a chunk at its boundaries back into unit texts (drops the single
// separator space that packing inserted).
std::vector<std::string> split_chunk(const PackedChunk& chunk);

std::vector<std::string> languages(const std::vector<Document>& docs);

}  // namespace satseg::corpus
