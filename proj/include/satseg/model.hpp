#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "satseg/common.hpp"
#include "satseg/mat.hpp"
#include "satseg/tokenize.hpp"

namespace satseg::model {

inline constexpr int kUnlimitedLookahead = -1;

struct ModelConfig {
    size_t vocab_size = 0;
    size_t dim = 64;
    size_t n_layers = 2;
    size_t n_heads = 4;
    size_t ffn_dim = 256;
    size_t max_context = 256;
    int lookahead_total = kUnlimitedLookahead;  // N; -1 = unlimited
    int lookahead_per_layer = kUnlimitedLookahead;  // N_L; derived, kept explicit for truncation
    size_t aux_vocab = 1;  // punctuation classes + "none"

    void validate() const;
};

// Low-rank delta for one weight matrix: W_eff = W + (scale/rank) * B * A.
struct LoraAdapter {
    Mat a;  // [rank x in]
    Mat b;  // [out x rank]
};

enum class LoraTarget { Query, Value, FfnIntermediate };

struct LoraSpec {
    size_t rank = 16;
    double scale = 32.0;
    std::vector<LoraTarget> targets = {LoraTarget::Query, LoraTarget::Value, LoraTarget::FfnIntermediate};
};

struct LayerParams {
    Mat ln1_g, ln1_b;
    Mat wq, bq, wk, bk, wv, bv, wo, bo;
    Mat ln2_g, ln2_b;
    Mat w1, b1, w2, b2;
    std::optional<LoraAdapter> lora_q, lora_v, lora_ffn;
};

struct ModelParams {
    ModelConfig config;
    Mat tok_emb;  // [vocab x dim]
    Mat pos_emb;  // [max_context x dim]
    std::vector<LayerParams> layers;
    Mat lnf_g, lnf_b;
    Mat head_w, head_b;      // boundary head: [1 x dim], [1 x 1]
    Mat aux_w, aux_b;        // aux punctuation head: [aux_vocab x dim], [1 x aux_vocab]
    std::optional<LoraSpec> lora;
    std::vector<int> aux_token_ids;  // class k < aux_token_ids.size() predicts this token id

    bool has_adapters() const { return lora.has_value(); }
};

// Visits every parameter tensor in a fixed order. Names are stable and used
// for checkpoints, optimizer state, and trainability filters.
void for_each_tensor(ModelParams& p, const std::function<void(const std::string&, Mat&)>& fn);
void for_each_tensor(const ModelParams& p, const std::function<void(const std::string&, const Mat&)>& fn);

// Allocates zeroed parameters for an already-derived config (layer norm
// scales start at one). Does not rederive the per-layer lookahead.
ModelParams make_params(const ModelConfig& cfg);
ModelParams init_model(const ModelConfig& cfg, uint64_t seed);
ModelParams zeros_like(const ModelParams& p);

// a_ij = 1 for j <= i; a_ij = 0 exactly when j > i + n_l. n_l < 0 = unlimited.
struct AttentionMask {
    size_t seq_len = 0;
    std::vector<uint8_t> allow;  // row-major seq_len x seq_len
    bool at(size_t i, size_t j) const { return allow[i * seq_len + j] != 0; }
};
AttentionMask build_lookahead_mask(size_t seq_len, int n_l);

struct ForwardResult {
    std::vector<double> boundary_probs;  // sigmoid, one per token
    Mat aux_logits;                      // [T x aux_vocab]
};

// Per-layer activations kept for backprop and inspection.
struct LayerCache {
    Mat x_in;          // residual stream entering the layer
    Mat ln1_out, ln1_xhat;
    std::vector<double> ln1_inv_sigma;
    Mat q, k, v;
    std::vector<Mat> att;  // per head: [T x T], masked rows renormalized
    Mat ctx;            // concatenated head outputs
    Mat attn_out;       // after W_o
    Mat x_mid;          // residual stream after attention
    Mat ln2_out, ln2_xhat;
    std::vector<double> ln2_inv_sigma;
    Mat ffn_pre;        // before activation
    Mat ffn_act;
    // Effective weights for this forward (identical to params unless LoRA
    // adapters are attached).
    Mat wq_eff, wv_eff, w1_eff;
};

struct ForwardCache {
    std::vector<int> ids;
    Mat x0;
    std::vector<LayerCache> layers;
    Mat lnf_out, lnf_xhat;
    std::vector<double> lnf_inv_sigma;
    std::vector<double> boundary_logits;
    ForwardResult result;
};

ForwardResult forward(const ModelParams& p, const std::vector<int>& ids);
void forward_cached(const ModelParams& p, const std::vector<int>& ids, ForwardCache& cache);

// Supervision for one sequence.
struct SequenceLabels {
    std::vector<uint8_t> boundary;  // 0/1 per token
    std::vector<int> aux_class;     // -1 = unlabeled, else class index < aux_vocab
};

struct LossSums {
    double boundary_loss_sum = 0.0;  // summed over labeled tokens
    double aux_loss_sum = 0.0;       // summed over aux-labeled tokens
    size_t n_tokens = 0;
    size_t n_aux = 0;
};

// Accumulates loss sums and parameter gradients for one sequence. Gradients
// are scaled by boundary_scale / aux_scale (1/batch denominators), so callers
// fix the denominators before the backward passes of a batch.
LossSums backward(const ModelParams& p, const ForwardCache& cache, const SequenceLabels& labels,
                  double boundary_scale, double aux_scale, double aux_loss_weight, ModelParams& grads);

LossSums loss_only(const ModelParams& p, const std::vector<int>& ids, const SequenceLabels& labels);

// Keeps the first k layers and both heads; per-layer lookahead becomes
// floor(N/k) when N is finite.
ModelParams truncate_layers(const ModelParams& p, size_t k);

// Folds adapters into the backbone: W += (scale/rank) * B * A. No-op when no
// adapters are attached.
ModelParams merge_lora(const ModelParams& p);

// Attaches freshly initialized adapters (A gaussian, B zero).
void attach_lora(ModelParams& p, const LoraSpec& spec, uint64_t seed);

size_t parameter_count(const ModelParams& p);
size_t adapter_parameter_count(const ModelParams& p);

}  // namespace satseg::model
