#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "satseg/corpus.hpp"
#include "satseg/corrupt.hpp"
#include "satseg/infer.hpp"
#include "satseg/model.hpp"
#include "satseg/tokenize.hpp"

namespace satseg::train {

enum class Stage { Pretrain, Sm, Lora };

struct TrainConfig {
    Stage stage = Stage::Pretrain;
    size_t batch_size = 8;
    size_t total_steps = 500;     // ignored when epochs > 0
    size_t epochs = 0;            // > 0: iterate packed chunks epoch-wise
    double lr_peak = 1e-4;
    size_t warmup_steps = 50;
    double warmup_fraction = -1.0;  // >= 0 overrides warmup_steps
    double aux_loss_weight = 1.0;
    double weight_decay = 0.01;
    uint64_t seed = 0;
};

struct TrainData {
    std::vector<corpus::Document> docs;
    const tokenize::Tokenizer* tok = nullptr;
    tokenize::PunctuationSet punct;
    corrupt::CorruptionConfig corruption;   // pretrain knobs; sm samples schemes per batch
    size_t context_tokens = 256;
    double geo_p = 0.5;                     // sm_ugc packing
    bool disable_corruption = false;        // clean-text-only ablation
    double max_nonpunct_final_frac = 0.10;  // pretrain batch constraint
};

struct TrainReport {
    std::vector<double> losses;
    std::vector<double> lrs;
    std::array<size_t, 3> scheme_counts{};  // sm batches: asr / ugc / clean
};

// Piecewise-linear: 0 -> peak over `warmup` steps, then linearly to 0 at the
// final step. Entry s is the rate applied at step s (0-based).
std::vector<double> lr_schedule(double peak, size_t warmup, size_t total);

// Runs one training stage in place. Deterministic given cfg.seed;
// single-threaded. Throws DivergenceError when the loss turns non-finite.
TrainReport train_stage(model::ModelParams& params, const TrainData& data, const TrainConfig& cfg,
                        std::ostream* jsonl_log = nullptr);

struct AdaptReport {
    TrainReport train;
    std::optional<double> tuned_alpha;  // set when > 512 sentences were available
};

// LoRA adaptation: attaches adapters (query/value/ffn-intermediate by
// default), trains adapters + boundary head with the backbone frozen, then
// tunes the threshold when more than 512 sentences are available.
AdaptReport adapt_lora(model::ModelParams& params, const std::vector<corpus::Document>& sentences,
                       const tokenize::Tokenizer& tok, const model::LoraSpec& spec, TrainConfig cfg,
                       size_t context_tokens = 256);

// Grid value maximizing pooled char-F1 on the labeled chunks; ties break
// toward the smallest alpha.
double tune_threshold(const model::ModelParams& params, const tokenize::Tokenizer& tok,
                      const std::vector<corpus::PackedChunk>& chunks, const std::vector<double>& grid,
                      const infer::DecodeConfig& dec);

// Core of tune_threshold, usable with precomputed per-char probabilities.
double tune_threshold_probs(const std::vector<std::pair<std::vector<double>, std::set<size_t>>>& prob_gold,
                            const std::vector<double>& grid);

std::vector<double> default_threshold_grid();  // 40 log-spaced values in [1e-3, 0.9]

// Token-level supervision from a corrupted example: boundary label on the
// token whose span contains a boundary character; aux class on the token
// after which a punctuation token was removed.
model::SequenceLabels labels_for(const corrupt::CorruptedExample& ex, const tokenize::TokenizedSequence& seq,
                                 const std::vector<int>& aux_token_ids, size_t aux_vocab);

}  // namespace satseg::train
