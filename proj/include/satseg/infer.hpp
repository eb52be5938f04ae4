#pragma once

#include <cstddef>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "satseg/model.hpp"
#include "satseg/tokenize.hpp"

namespace satseg::infer {

struct DecodeConfig {
    double alpha = 0.025;
    size_t stride = 64;
    size_t context = 512;
};

struct SegmentationResult {
    std::vector<double> char_probs;       // one per codepoint
    std::set<size_t> boundaries;          // char_probs > alpha, plus forced terminal
    std::vector<std::string> sentences;   // concatenation reproduces the input exactly
};

// Token windows [start, end): starts at 0, stride, 2*stride, ...; the final
// window is shifted back so end == n_tokens. Every token is covered.
std::vector<std::pair<size_t, size_t>> window_plan(size_t n_tokens, size_t context, size_t stride);

// Per-token boundary probabilities, averaged over all covering windows.
std::vector<double> token_probs_strided(const model::ModelParams& p, const std::vector<int>& ids, size_t context,
                                        size_t stride);

std::set<size_t> decode_boundaries(const std::vector<double>& char_probs, double alpha, bool force_terminal = true);

SegmentationResult segment(const model::ModelParams& p, const std::string& text, const tokenize::Tokenizer& tok,
                           const DecodeConfig& dec);

}  // namespace satseg::infer
