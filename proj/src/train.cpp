#include "satseg/train.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "satseg/unicode.hpp"

namespace satseg::train {

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

struct AdamState {
    model::ModelParams m, v;
    size_t t = 0;
};

bool lora_trainable(const std::string& name) {
    return name.find(".lora_") != std::string::npos || name.rfind("head.boundary.", 0) == 0;
}

void adam_step(model::ModelParams& params, const model::ModelParams& grads, AdamState& state, double lr,
               double weight_decay, bool lora_stage) {
    ++state.t;
    const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.t));

    // Collect tensors by name; the visit order is identical across the four
    // parameter structures.
    std::vector<Mat*> tp, tm, tv;
    std::vector<const Mat*> tg;
    std::vector<std::string> names;
    model::for_each_tensor(params, [&](const std::string& n, Mat& m) {
        names.push_back(n);
        tp.push_back(&m);
    });
    model::for_each_tensor(grads, [&](const std::string&, const Mat& m) { tg.push_back(&m); });
    model::for_each_tensor(state.m, [&](const std::string&, Mat& m) { tm.push_back(&m); });
    model::for_each_tensor(state.v, [&](const std::string&, Mat& m) { tv.push_back(&m); });

    for (size_t i = 0; i < tp.size(); ++i) {
        if (lora_stage && !lora_trainable(names[i])) continue;
        Mat& p = *tp[i];
        const Mat& g = *tg[i];
        Mat& m = *tm[i];
        Mat& v = *tv[i];
        for (size_t k = 0; k < p.size(); ++k) {
            m.v[k] = kBeta1 * m.v[k] + (1.0 - kBeta1) * g.v[k];
            v.v[k] = kBeta2 * v.v[k] + (1.0 - kBeta2) * g.v[k] * g.v[k];
            const double mhat = m.v[k] / bc1;
            const double vhat = v.v[k] / bc2;
            p.v[k] -= lr * (mhat / (std::sqrt(vhat) + kAdamEps) + weight_decay * p.v[k]);
        }
    }
}

}  // namespace

std::vector<double> lr_schedule(double peak, size_t warmup, size_t total) {
    std::vector<double> out(total, 0.0);
    if (total == 0) return out;
    const size_t w = std::min(std::max<size_t>(1, warmup), total);
    for (size_t s = 0; s < total; ++s) {
        const size_t pos = s + 1;
        if (pos <= w)
            out[s] = peak * static_cast<double>(pos) / static_cast<double>(w);
        else
            out[s] = peak * static_cast<double>(total - pos) / static_cast<double>(total - w);
    }
    return out;
}

model::SequenceLabels labels_for(const corrupt::CorruptedExample& ex, const tokenize::TokenizedSequence& seq,
                                 const std::vector<int>& aux_token_ids, size_t aux_vocab) {
    model::SequenceLabels labels;
    const size_t T = seq.ids.size();
    labels.boundary.assign(T, 0);
    labels.aux_class.assign(T, -1);
    for (size_t t = 0; t < T; ++t) {
        const auto& sp = seq.spans[t];
        auto it = ex.boundary_char_indices.lower_bound(sp.start);
        if (it != ex.boundary_char_indices.end() && *it < sp.end) labels.boundary[t] = 1;
        auto ax = ex.aux_punct_labels.lower_bound(sp.start);
        if (ax != ex.aux_punct_labels.end() && ax->first < sp.end) {
            auto pos = std::find(aux_token_ids.begin(), aux_token_ids.end(), ax->second);
            if (pos != aux_token_ids.end()) {
                const size_t cls = static_cast<size_t>(pos - aux_token_ids.begin());
                if (cls < aux_vocab) labels.aux_class[t] = static_cast<int>(cls);
            }
        }
    }
    return labels;
}

namespace {

struct Batch {
    std::vector<corrupt::CorruptedExample> examples;
    corrupt::Scheme scheme = corrupt::Scheme::Clean;
};

// Per-language document index.
struct LangIndex {
    std::vector<std::string> langs;
    std::map<std::string, std::vector<size_t>> by_lang;
};

LangIndex index_languages(const std::vector<corpus::Document>& docs) {
    LangIndex idx;
    for (size_t i = 0; i < docs.size(); ++i) {
        auto [it, inserted] = idx.by_lang.try_emplace(docs[i].language);
        if (inserted) idx.langs.push_back(docs[i].language);
        it->second.push_back(i);
    }
    return idx;
}

std::vector<corpus::PackedChunk> sample_batch_chunks(const TrainData& data, const LangIndex& idx, Stage stage,
                                                     corrupt::Scheme scheme, size_t batch_size, Rng& rng) {
    // Language of each batch is sampled uniformly.
    const std::string& lang = idx.langs[rng.below(idx.langs.size())];
    const auto& doc_ids = idx.by_lang.at(lang);

    corpus::PackingConfig pcfg;
    pcfg.context_tokens = data.context_tokens;
    pcfg.mode = (stage == Stage::Sm && scheme == corrupt::Scheme::SmUgc) ? corpus::PackMode::Geometric
                                                                         : corpus::PackMode::Fill;
    pcfg.geo_p = data.geo_p;

    std::vector<corpus::PackedChunk> chunks;
    for (int attempt = 0; attempt < 16 && chunks.size() < batch_size; ++attempt) {
        std::vector<corpus::Document> picked;
        if (stage == Stage::Pretrain) {
            std::vector<corpus::Document> lang_docs;
            lang_docs.reserve(doc_ids.size());
            for (size_t i : doc_ids) lang_docs.push_back(data.docs[i]);
            for (size_t i : corpus::sample_documents(lang_docs, batch_size * 4, data.max_nonpunct_final_frac, rng))
                picked.push_back(lang_docs[i]);
        } else {
            for (size_t k = 0; k < batch_size; ++k) picked.push_back(data.docs[doc_ids[rng.below(doc_ids.size())]]);
        }
        auto packed = corpus::pack_chunks(picked, pcfg, *data.tok, rng.u64());
        for (auto& c : packed.chunks) {
            chunks.push_back(std::move(c));
            if (chunks.size() >= batch_size) break;
        }
    }
    if (chunks.empty()) throw DataError("training data produced no chunks");
    return chunks;
}

corrupt::CorruptedExample identity_example(const corpus::PackedChunk& chunk) {
    corrupt::CorruptedExample ex;
    ex.text = chunk.text;
    ex.boundary_char_indices = chunk.boundary_char_indices;
    ex.language = chunk.language;
    return ex;
}

Batch make_batch(const TrainData& data, const LangIndex& idx, const TrainConfig& cfg, size_t step, Rng& rng) {
    Batch batch;
    corrupt::Scheme scheme = corrupt::Scheme::Clean;
    if (cfg.stage == Stage::Sm && !data.disable_corruption)
        scheme = corrupt::sample_scheme(mix_seed(cfg.seed, 0x5C4E4Dull, step));
    batch.scheme = scheme;

    auto chunks = sample_batch_chunks(data, idx, cfg.stage, scheme, cfg.batch_size, rng);
    for (size_t c = 0; c < chunks.size(); ++c) {
        const uint64_t ex_seed = mix_seed(cfg.seed, step, c);
        if (data.disable_corruption || cfg.stage == Stage::Lora) {
            batch.examples.push_back(identity_example(chunks[c]));
        } else if (cfg.stage == Stage::Pretrain) {
            corrupt::CorruptionConfig ccfg = data.corruption;
            ccfg.scheme = corrupt::Scheme::Pretrain;
            batch.examples.push_back(corrupt::corrupt_pretrain(chunks[c], *data.tok, data.punct, ccfg, ex_seed));
        } else {
            corrupt::CorruptionConfig ccfg = data.corruption;
            ccfg.scheme = scheme;
            batch.examples.push_back(corrupt::corrupt_sm(chunks[c], *data.tok, data.punct, ccfg, ex_seed));
        }
    }
    return batch;
}

}  // namespace

TrainReport train_stage(model::ModelParams& params, const TrainData& data, const TrainConfig& cfg,
                        std::ostream* jsonl_log) {
    if (data.docs.empty()) throw DataError("train_stage: no documents");
    if (data.tok == nullptr) throw std::invalid_argument("train_stage: tokenizer required");
    if (cfg.lr_peak < 0.0) throw std::invalid_argument("train_stage: lr_peak must be >= 0");
    // Aux labels only arise from corruptions; the class list must then match
    // the head size.
    if (cfg.stage != Stage::Lora && !data.disable_corruption) {
        if (params.aux_token_ids.empty() && params.config.aux_vocab > 1)
            for (int id : data.punct.token_ids) params.aux_token_ids.push_back(id);
        if (params.aux_token_ids.size() + 1 != params.config.aux_vocab && params.config.aux_vocab > 1)
            throw DataError("train_stage: aux_vocab does not match the punctuation token set");
    }

    const LangIndex idx = index_languages(data.docs);

    // Epoch mode packs everything once and iterates shuffled chunks.
    std::vector<corpus::PackedChunk> epoch_chunks;
    size_t total_steps = cfg.total_steps;
    if (cfg.epochs > 0) {
        corpus::PackingConfig pcfg;
        pcfg.context_tokens = data.context_tokens;
        pcfg.mode = corpus::PackMode::Fill;
        epoch_chunks = corpus::pack_chunks(data.docs, pcfg, *data.tok, mix_seed(cfg.seed, 0x9A5Cull)).chunks;
        if (epoch_chunks.empty()) throw DataError("train_stage: packing produced no chunks");
        const size_t per_epoch = (epoch_chunks.size() + cfg.batch_size - 1) / cfg.batch_size;
        total_steps = cfg.epochs * per_epoch;
    }
    if (total_steps == 0) throw std::invalid_argument("train_stage: zero training steps");

    size_t warmup = cfg.warmup_steps;
    if (cfg.warmup_fraction >= 0.0)
        warmup = static_cast<size_t>(cfg.warmup_fraction * static_cast<double>(total_steps));
    const auto lrs = lr_schedule(cfg.lr_peak, warmup, total_steps);

    TrainReport report;
    report.lrs = lrs;
    AdamState adam{model::zeros_like(params), model::zeros_like(params), 0};
    model::ModelParams grads = model::zeros_like(params);
    const size_t context = std::min(data.context_tokens, params.config.max_context);

    std::vector<size_t> order(epoch_chunks.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (size_t step = 0; step < total_steps; ++step) {
        Rng rng(mix_seed(cfg.seed, 0x57E9ull, step));

        Batch batch;
        if (cfg.epochs > 0) {
            const size_t per_epoch = (epoch_chunks.size() + cfg.batch_size - 1) / cfg.batch_size;
            const size_t epoch = step / per_epoch;
            const size_t pos = (step % per_epoch) * cfg.batch_size;
            if (pos == 0) {
                Rng shuffle_rng(mix_seed(cfg.seed, 0xE70C4ull, epoch));
                for (size_t i = order.size(); i > 1; --i)
                    std::swap(order[i - 1], order[shuffle_rng.below(i)]);
            }
            for (size_t k = pos; k < std::min(pos + cfg.batch_size, epoch_chunks.size()); ++k)
                batch.examples.push_back(identity_example(epoch_chunks[order[k]]));
        } else {
            batch = make_batch(data, idx, cfg, step, rng);
        }
        if (cfg.stage == Stage::Sm) {
            if (batch.scheme == corrupt::Scheme::SmAsr) ++report.scheme_counts[0];
            if (batch.scheme == corrupt::Scheme::SmUgc) ++report.scheme_counts[1];
            if (batch.scheme == corrupt::Scheme::Clean) ++report.scheme_counts[2];
        }

        // Forward all examples first so the batch loss denominators are known
        // before gradients are accumulated.
        std::vector<model::ForwardCache> caches(batch.examples.size());
        std::vector<model::SequenceLabels> labels(batch.examples.size());
        size_t n_tokens = 0, n_aux = 0;
        for (size_t e = 0; e < batch.examples.size(); ++e) {
            auto seq = data.tok->encode(batch.examples[e].text);
            if (seq.ids.size() > context) {
                seq.ids.resize(context);
                seq.spans.resize(context);
            }
            labels[e] = labels_for(batch.examples[e], seq, params.aux_token_ids, params.config.aux_vocab);
            model::forward_cached(params, seq.ids, caches[e]);
            n_tokens += seq.ids.size();
            for (int c : labels[e].aux_class)
                if (c >= 0) ++n_aux;
        }
        if (n_tokens == 0) throw DataError("train_stage: empty batch");

        model::for_each_tensor(grads, [](const std::string&, Mat& m) { m.zero(); });
        const double bscale = 1.0 / static_cast<double>(n_tokens);
        const double ascale = n_aux ? 1.0 / static_cast<double>(n_aux) : 0.0;
        double bsum = 0.0, asum = 0.0;
        for (size_t e = 0; e < batch.examples.size(); ++e) {
            const auto sums = model::backward(params, caches[e], labels[e], bscale, ascale, cfg.aux_loss_weight, grads);
            bsum += sums.boundary_loss_sum;
            asum += sums.aux_loss_sum;
        }
        const double loss = bsum * bscale + cfg.aux_loss_weight * asum * ascale;
        if (!std::isfinite(loss)) throw DivergenceError(static_cast<int>(step));

        adam_step(params, grads, adam, lrs[step], cfg.weight_decay, cfg.stage == Stage::Lora);

        report.losses.push_back(loss);
        if (jsonl_log)
            (*jsonl_log) << "{\"step\":" << step << ",\"loss\":" << loss << ",\"lr\":" << lrs[step] << "}\n";
    }
    return report;
}

std::vector<double> default_threshold_grid() {
    std::vector<double> grid(40);
    const double lo = std::log(1e-3), hi = std::log(0.9);
    for (size_t i = 0; i < grid.size(); ++i)
        grid[i] = std::exp(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(grid.size() - 1));
    return grid;
}

double tune_threshold_probs(const std::vector<std::pair<std::vector<double>, std::set<size_t>>>& prob_gold,
                            const std::vector<double>& grid) {
    if (grid.empty()) throw std::invalid_argument("tune_threshold: empty grid");
    for (double a : grid)
        if (!(a > 0.0 && a < 1.0)) throw std::invalid_argument("tune_threshold: grid values must be in (0,1)");
    std::vector<double> sorted = grid;
    std::sort(sorted.begin(), sorted.end());

    double best_alpha = sorted.front(), best_f1 = -1.0;
    for (double alpha : sorted) {
        size_t tp = 0, fp = 0, fn = 0;
        for (const auto& [probs, gold] : prob_gold) {
            auto pred = infer::decode_boundaries(probs, alpha, /*force_terminal=*/true);
            std::set<size_t> g = gold;
            // The forced terminal boundary carries no information.
            if (!probs.empty()) {
                pred.erase(probs.size() - 1);
                g.erase(probs.size() - 1);
            }
            for (size_t b : pred)
                if (g.count(b))
                    ++tp;
                else
                    ++fp;
            for (size_t b : g)
                if (!pred.count(b)) ++fn;
        }
        const double p = (tp + fp) ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
        const double r = (tp + fn) ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
        const double f1 = (p + r > 0.0) ? 2.0 * p * r / (p + r) : 0.0;
        if (f1 > best_f1) {
            best_f1 = f1;
            best_alpha = alpha;
        }
    }
    return best_alpha;
}

double tune_threshold(const model::ModelParams& params, const tokenize::Tokenizer& tok,
                      const std::vector<corpus::PackedChunk>& chunks, const std::vector<double>& grid,
                      const infer::DecodeConfig& dec) {
    std::vector<std::pair<std::vector<double>, std::set<size_t>>> prob_gold;
    const size_t context = std::min(dec.context, params.config.max_context);
    for (const auto& chunk : chunks) {
        const auto seq = tok.encode(chunk.text);
        if (seq.ids.empty()) continue;
        const auto tprobs = infer::token_probs_strided(params, seq.ids, context, std::min(dec.stride, context));
        std::vector<double> cprobs(uni::length(chunk.text), 0.0);
        for (size_t t = 0; t < tprobs.size(); ++t) cprobs[seq.spans[t].end - 1] = tprobs[t];
        prob_gold.emplace_back(std::move(cprobs), chunk.boundary_char_indices);
    }
    return tune_threshold_probs(prob_gold, grid);
}

AdaptReport adapt_lora(model::ModelParams& params, const std::vector<corpus::Document>& sentences,
                       const tokenize::Tokenizer& tok, const model::LoraSpec& spec, TrainConfig cfg,
                       size_t context_tokens) {
    if (sentences.empty()) throw DataError("adapt_lora: empty sentence set");
    model::attach_lora(params, spec, mix_seed(cfg.seed, 0x10F4ull));

    cfg.stage = Stage::Lora;
    if (cfg.epochs == 0) cfg.epochs = 30;
    if (cfg.warmup_fraction < 0.0) cfg.warmup_fraction = 0.10;

    TrainData data;
    data.docs = sentences;
    data.tok = &tok;
    data.context_tokens = context_tokens;
    data.disable_corruption = true;

    AdaptReport report;
    report.train = train_stage(params, data, cfg);

    size_t n_sentences = 0;
    for (const auto& d : sentences) n_sentences += d.units.size();
    if (n_sentences > 512) {
        corpus::PackingConfig pcfg;
        pcfg.context_tokens = context_tokens;
        auto packed = corpus::pack_chunks(sentences, pcfg, tok, mix_seed(cfg.seed, 0x7DAEull));
        infer::DecodeConfig dec;
        dec.context = context_tokens;
        dec.stride = std::min<size_t>(64, context_tokens);
        report.tuned_alpha = tune_threshold(params, tok, packed.chunks, default_threshold_grid(), dec);
    }
    return report;
}

}  // namespace satseg::train
