#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "satseg/corpus.hpp"
#include "satseg/tokenize.hpp"

namespace satseg::eval {

struct Prf {
    double precision = 0.0, recall = 0.0, f1 = 0.0;
    size_t tp = 0, fp = 0, fn = 0;
};

// Pure set arithmetic over boundary indices.
Prf boundary_prf(const std::set<size_t>& pred, const std::set<size_t>& gold);

// Character-level F1 for positive (sentence-ending) labels. The forced
// terminal boundary at text_cp_len-1 is excluded unless include_terminal.
Prf char_f1(const std::set<size_t>& pred, const std::set<size_t>& gold, size_t text_cp_len,
            bool include_terminal = false);

// char_f1 restricted to token-final positions of `seq`.
Prf token_f1(const std::set<size_t>& pred, const std::set<size_t>& gold, const tokenize::TokenizedSequence& seq,
             bool include_terminal = false);

// Fraction of sequences whose boundary sets match exactly. Errors on empty
// input.
double perfect_rate(const std::vector<std::pair<std::set<size_t>, std::set<size_t>>>& results);

struct AlignmentParams {
    double gap_open = -0.5;
    double gap_extend = -0.5;
    double match = 1.0;
    double mismatch = -0.5;
};

struct AlignedPair {
    int a = -1;  // codepoint index into a, or -1 for a gap
    int b = -1;
    bool operator==(const AlignedPair&) const = default;
};

struct Alignment {
    std::vector<AlignedPair> pairs;
    double score = 0.0;
};

// Global alignment over codepoints, affine gap scoring: a run of g gap
// characters costs gap_open + (g-1)*gap_extend. Deterministic tie-break:
// match/mismatch, then gap in a, then gap in b.
Alignment nw_align(const std::string& a, const std::string& b, const AlignmentParams& params = {});

// Maps boundary indices on an altered output string back onto the reference
// via NW alignment; boundaries on gap-aligned characters move to the nearest
// preceding aligned reference character. Returns the empty set when the
// normalized alignment score (score / (match * len(reference))) falls below
// score_floor.
std::set<size_t> project_boundaries(const std::string& altered, const std::set<size_t>& altered_boundaries,
                                    const std::string& reference, const AlignmentParams& params = {},
                                    double score_floor = 0.25);

// Evaluation-time ASR simulation: lowercase and strip punctuation tokens.
// Sentences consisting only of punctuation are dropped with a warning.
std::vector<corpus::Document> asr_corrupt_eval(const std::vector<corpus::Document>& docs,
                                               const tokenize::Tokenizer& tok, const tokenize::PunctuationSet& punct,
                                               std::vector<std::string>* warnings = nullptr);

struct EvalReport {
    double precision = 0.0, recall = 0.0, f1 = 0.0;
    double token_f1 = 0.0;
    double perfect_rate = 0.0;
    size_t tp = 0, fp = 0, fn = 0;
    size_t n_sequences = 0;
};

struct CorpusReport {
    EvalReport overall;                          // pooled counts over all sequences
    std::map<std::string, EvalReport> per_language;
    double macro_f1 = 0.0;                       // mean of per-language F1
};

using BoundaryPredictor = std::function<std::set<size_t>(const std::string& text)>;

struct EvalOptions {
    bool include_terminal = false;
    size_t threads = 1;
};

// Each document becomes one sequence (units joined by single spaces; gold
// boundary on each unit's final character).
CorpusReport evaluate_documents(const std::vector<corpus::Document>& docs, const BoundaryPredictor& predict,
                                const tokenize::Tokenizer* tok_for_token_f1, const EvalOptions& opts = {});

std::string report_to_json(const CorpusReport& report, bool per_language);

}  // namespace satseg::eval
