#include "satseg/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace satseg::model {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kInvSqrt2Pi = 0.3989422804014326779399460599344;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }
double gelu_grad(double x) {
    return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

void ln_forward(const Mat& x, const Mat& g, const Mat& b, Mat& out, Mat& xhat, std::vector<double>& inv_sigma) {
    const size_t T = x.rows, d = x.cols;
    out = Mat(T, d);
    xhat = Mat(T, d);
    inv_sigma.assign(T, 0.0);
    for (size_t t = 0; t < T; ++t) {
        const double* xt = x.row(t);
        double mu = 0.0;
        for (size_t i = 0; i < d; ++i) mu += xt[i];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (size_t i = 0; i < d; ++i) var += (xt[i] - mu) * (xt[i] - mu);
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + kLnEps);
        inv_sigma[t] = inv;
        double* xh = xhat.row(t);
        double* ot = out.row(t);
        for (size_t i = 0; i < d; ++i) {
            xh[i] = (xt[i] - mu) * inv;
            ot[i] = g.v[i] * xh[i] + b.v[i];
        }
    }
}

// dx += backward of layernorm; accumulates dgamma/dbeta.
void ln_backward(const Mat& dy, const Mat& g, const Mat& xhat, const std::vector<double>& inv_sigma, Mat& dx,
                 Mat& dgamma, Mat& dbeta) {
    const size_t T = dy.rows, d = dy.cols;
    std::vector<double> dxh(d);
    for (size_t t = 0; t < T; ++t) {
        const double* dyt = dy.row(t);
        const double* xh = xhat.row(t);
        double m1 = 0.0, m2 = 0.0;
        for (size_t i = 0; i < d; ++i) {
            dgamma.v[i] += dyt[i] * xh[i];
            dbeta.v[i] += dyt[i];
            dxh[i] = dyt[i] * g.v[i];
            m1 += dxh[i];
            m2 += dxh[i] * xh[i];
        }
        m1 /= static_cast<double>(d);
        m2 /= static_cast<double>(d);
        double* dxt = dx.row(t);
        const double inv = inv_sigma[t];
        for (size_t i = 0; i < d; ++i) dxt[i] += inv * (dxh[i] - m1 - xh[i] * m2);
    }
}

Mat gaussian_mat(size_t r, size_t c, double std, Rng& rng) {
    Mat m(r, c);
    for (auto& x : m.v) x = std * rng.gaussian();
    return m;
}

Mat ones_mat(size_t r, size_t c) {
    Mat m(r, c);
    std::fill(m.v.begin(), m.v.end(), 1.0);
    return m;
}

const Mat& eff_or_base(const Mat& eff, const Mat& base) { return eff.v.empty() ? base : eff; }

void materialize_eff(const Mat& base, const std::optional<LoraAdapter>& ad, double scale_over_rank, Mat& out) {
    if (!ad) {
        out = Mat();  // empty sentinel: use base directly
        return;
    }
    out = base;
    matmul_acc(ad->b, ad->a, scale_over_rank, out);
}

}  // namespace

void ModelConfig::validate() const {
    if (vocab_size == 0) throw std::invalid_argument("model: vocab_size must be > 0");
    if (dim == 0 || n_heads == 0 || dim % n_heads != 0)
        throw std::invalid_argument("model: dim must be a positive multiple of n_heads");
    if (n_layers == 0) throw std::invalid_argument("model: n_layers must be >= 1");
    if (ffn_dim == 0) throw std::invalid_argument("model: ffn_dim must be > 0");
    if (max_context == 0) throw std::invalid_argument("model: max_context must be >= 1");
    if (aux_vocab == 0) throw std::invalid_argument("model: aux_vocab must be >= 1");
    if (lookahead_total >= 0 && lookahead_per_layer < 0)
        throw std::invalid_argument("model: finite lookahead_total requires a per-layer lookahead");
}

ModelParams make_params(const ModelConfig& cfg) {
    cfg.validate();
    ModelParams p;
    p.config = cfg;
    p.tok_emb = Mat(cfg.vocab_size, cfg.dim);
    p.pos_emb = Mat(cfg.max_context, cfg.dim);
    for (size_t l = 0; l < cfg.n_layers; ++l) {
        LayerParams lp;
        lp.ln1_g = ones_mat(1, cfg.dim);
        lp.ln1_b = Mat(1, cfg.dim);
        lp.wq = Mat(cfg.dim, cfg.dim);
        lp.bq = Mat(1, cfg.dim);
        lp.wk = Mat(cfg.dim, cfg.dim);
        lp.bk = Mat(1, cfg.dim);
        lp.wv = Mat(cfg.dim, cfg.dim);
        lp.bv = Mat(1, cfg.dim);
        lp.wo = Mat(cfg.dim, cfg.dim);
        lp.bo = Mat(1, cfg.dim);
        lp.ln2_g = ones_mat(1, cfg.dim);
        lp.ln2_b = Mat(1, cfg.dim);
        lp.w1 = Mat(cfg.ffn_dim, cfg.dim);
        lp.b1 = Mat(1, cfg.ffn_dim);
        lp.w2 = Mat(cfg.dim, cfg.ffn_dim);
        lp.b2 = Mat(1, cfg.dim);
        p.layers.push_back(std::move(lp));
    }
    p.lnf_g = ones_mat(1, cfg.dim);
    p.lnf_b = Mat(1, cfg.dim);
    p.head_w = Mat(1, cfg.dim);
    p.head_b = Mat(1, 1);
    p.aux_w = Mat(cfg.aux_vocab, cfg.dim);
    p.aux_b = Mat(1, cfg.aux_vocab);
    return p;
}

ModelParams init_model(const ModelConfig& cfg_in, uint64_t seed) {
    ModelConfig cfg = cfg_in;
    if (cfg.lookahead_total >= 0) {
        if (cfg.lookahead_total % static_cast<int>(cfg.n_layers) != 0)
            throw std::invalid_argument("model: lookahead_total must be divisible by n_layers");
        cfg.lookahead_per_layer = cfg.lookahead_total / static_cast<int>(cfg.n_layers);
    } else {
        cfg.lookahead_per_layer = kUnlimitedLookahead;
    }
    ModelParams p = make_params(cfg);
    Rng rng(seed);
    const double std = 0.02;
    auto randomize = [&](Mat& m) {
        for (auto& x : m.v) x = std * rng.gaussian();
    };
    randomize(p.tok_emb);
    randomize(p.pos_emb);
    for (auto& lp : p.layers) {
        randomize(lp.wq);
        randomize(lp.wk);
        randomize(lp.wv);
        randomize(lp.wo);
        randomize(lp.w1);
        randomize(lp.w2);
    }
    // Heads stay at zero: an untrained model emits probability 0.5 everywhere.
    return p;
}

namespace {

template <typename Params, typename Fn>
void visit_tensors(Params& p, Fn&& fn) {
    fn("tok_emb", p.tok_emb);
    fn("pos_emb", p.pos_emb);
    for (size_t l = 0; l < p.layers.size(); ++l) {
        auto& lp = p.layers[l];
        const std::string pre = "layers." + std::to_string(l) + ".";
        fn(pre + "ln1.g", lp.ln1_g);
        fn(pre + "ln1.b", lp.ln1_b);
        fn(pre + "attn.wq", lp.wq);
        fn(pre + "attn.bq", lp.bq);
        fn(pre + "attn.wk", lp.wk);
        fn(pre + "attn.bk", lp.bk);
        fn(pre + "attn.wv", lp.wv);
        fn(pre + "attn.bv", lp.bv);
        fn(pre + "attn.wo", lp.wo);
        fn(pre + "attn.bo", lp.bo);
        fn(pre + "ln2.g", lp.ln2_g);
        fn(pre + "ln2.b", lp.ln2_b);
        fn(pre + "ffn.w1", lp.w1);
        fn(pre + "ffn.b1", lp.b1);
        fn(pre + "ffn.w2", lp.w2);
        fn(pre + "ffn.b2", lp.b2);
        if (lp.lora_q) {
            fn(pre + "attn.wq.lora_a", lp.lora_q->a);
            fn(pre + "attn.wq.lora_b", lp.lora_q->b);
        }
        if (lp.lora_v) {
            fn(pre + "attn.wv.lora_a", lp.lora_v->a);
            fn(pre + "attn.wv.lora_b", lp.lora_v->b);
        }
        if (lp.lora_ffn) {
            fn(pre + "ffn.w1.lora_a", lp.lora_ffn->a);
            fn(pre + "ffn.w1.lora_b", lp.lora_ffn->b);
        }
    }
    fn("ln_f.g", p.lnf_g);
    fn("ln_f.b", p.lnf_b);
    fn("head.boundary.w", p.head_w);
    fn("head.boundary.b", p.head_b);
    fn("head.aux.w", p.aux_w);
    fn("head.aux.b", p.aux_b);
}

}  // namespace

void for_each_tensor(ModelParams& p, const std::function<void(const std::string&, Mat&)>& fn) {
    visit_tensors(p, fn);
}
void for_each_tensor(const ModelParams& p, const std::function<void(const std::string&, const Mat&)>& fn) {
    visit_tensors(p, fn);
}

ModelParams zeros_like(const ModelParams& p) {
    ModelParams z = p;
    for_each_tensor(z, [](const std::string&, Mat& m) { m.zero(); });
    return z;
}

AttentionMask build_lookahead_mask(size_t seq_len, int n_l) {
    if (seq_len == 0) throw std::invalid_argument("build_lookahead_mask: seq_len must be >= 1");
    AttentionMask m;
    m.seq_len = seq_len;
    m.allow.assign(seq_len * seq_len, 0);
    for (size_t i = 0; i < seq_len; ++i) {
        const size_t jmax = n_l < 0 ? seq_len - 1 : std::min(seq_len - 1, i + static_cast<size_t>(n_l));
        for (size_t j = 0; j <= jmax; ++j) m.allow[i * seq_len + j] = 1;
    }
    return m;
}

void forward_cached(const ModelParams& p, const std::vector<int>& ids, ForwardCache& cache) {
    const auto& cfg = p.config;
    const size_t T = ids.size();
    if (T > cfg.max_context) throw std::invalid_argument("forward: sequence longer than max_context");
    for (int id : ids)
        if (id < 0 || static_cast<size_t>(id) >= cfg.vocab_size)
            throw std::out_of_range("forward: token id out of vocab range");

    cache = ForwardCache();
    cache.ids = ids;
    cache.result.aux_logits = Mat(T, cfg.aux_vocab);
    if (T == 0) return;

    const size_t d = cfg.dim, H = cfg.n_heads, hd = d / H;
    const double att_scale = 1.0 / std::sqrt(static_cast<double>(hd));
    const int n_l = cfg.lookahead_per_layer;
    const double lora_s = p.lora ? p.lora->scale / static_cast<double>(p.lora->rank) : 0.0;

    cache.x0 = Mat(T, d);
    for (size_t t = 0; t < T; ++t) {
        const double* te = p.tok_emb.row(static_cast<size_t>(ids[t]));
        const double* pe = p.pos_emb.row(t);
        double* x = cache.x0.row(t);
        for (size_t i = 0; i < d; ++i) x[i] = te[i] + pe[i];
    }

    Mat x = cache.x0;
    cache.layers.resize(cfg.n_layers);
    for (size_t l = 0; l < cfg.n_layers; ++l) {
        const auto& lp = p.layers[l];
        LayerCache& lc = cache.layers[l];
        lc.x_in = x;

        materialize_eff(lp.wq, lp.lora_q, lora_s, lc.wq_eff);
        materialize_eff(lp.wv, lp.lora_v, lora_s, lc.wv_eff);
        materialize_eff(lp.w1, lp.lora_ffn, lora_s, lc.w1_eff);

        ln_forward(x, lp.ln1_g, lp.ln1_b, lc.ln1_out, lc.ln1_xhat, lc.ln1_inv_sigma);
        linear_forward(lc.ln1_out, eff_or_base(lc.wq_eff, lp.wq), lp.bq, lc.q);
        linear_forward(lc.ln1_out, lp.wk, lp.bk, lc.k);
        linear_forward(lc.ln1_out, eff_or_base(lc.wv_eff, lp.wv), lp.bv, lc.v);

        lc.att.assign(H, Mat(T, T));
        lc.ctx = Mat(T, d);
        for (size_t h = 0; h < H; ++h) {
            Mat& att = lc.att[h];
            const size_t off = h * hd;
            for (size_t i = 0; i < T; ++i) {
                const size_t jmax = n_l < 0 ? T - 1 : std::min(T - 1, i + static_cast<size_t>(n_l));
                const double* qi = lc.q.row(i) + off;
                double mx = -1e300;
                double* arow = att.row(i);
                for (size_t j = 0; j <= jmax; ++j) {
                    const double* kj = lc.k.row(j) + off;
                    double s = 0.0;
                    for (size_t c = 0; c < hd; ++c) s += qi[c] * kj[c];
                    arow[j] = s * att_scale;
                    mx = std::max(mx, arow[j]);
                }
                double denom = 0.0;
                for (size_t j = 0; j <= jmax; ++j) {
                    arow[j] = std::exp(arow[j] - mx);
                    denom += arow[j];
                }
                double* ci = lc.ctx.row(i) + off;
                for (size_t j = 0; j <= jmax; ++j) {
                    arow[j] /= denom;
                    const double* vj = lc.v.row(j) + off;
                    for (size_t c = 0; c < hd; ++c) ci[c] += arow[j] * vj[c];
                }
            }
        }
        linear_forward(lc.ctx, lp.wo, lp.bo, lc.attn_out);
        lc.x_mid = Mat(T, d);
        for (size_t i = 0; i < x.size(); ++i) lc.x_mid.v[i] = lc.x_in.v[i] + lc.attn_out.v[i];

        ln_forward(lc.x_mid, lp.ln2_g, lp.ln2_b, lc.ln2_out, lc.ln2_xhat, lc.ln2_inv_sigma);
        linear_forward(lc.ln2_out, eff_or_base(lc.w1_eff, lp.w1), lp.b1, lc.ffn_pre);
        lc.ffn_act = lc.ffn_pre;
        for (auto& u : lc.ffn_act.v) u = gelu(u);
        Mat ffn_out;
        linear_forward(lc.ffn_act, lp.w2, lp.b2, ffn_out);
        x = lc.x_mid;
        for (size_t i = 0; i < x.size(); ++i) x.v[i] += ffn_out.v[i];
    }

    ln_forward(x, p.lnf_g, p.lnf_b, cache.lnf_out, cache.lnf_xhat, cache.lnf_inv_sigma);

    cache.boundary_logits.assign(T, 0.0);
    cache.result.boundary_probs.assign(T, 0.0);
    for (size_t t = 0; t < T; ++t) {
        const double* xt = cache.lnf_out.row(t);
        double z = p.head_b.v[0];
        for (size_t i = 0; i < d; ++i) z += p.head_w.v[i] * xt[i];
        cache.boundary_logits[t] = z;
        cache.result.boundary_probs[t] = 1.0 / (1.0 + std::exp(-z));
    }
    linear_forward(cache.lnf_out, p.aux_w, p.aux_b, cache.result.aux_logits);
}

ForwardResult forward(const ModelParams& p, const std::vector<int>& ids) {
    ForwardCache cache;
    forward_cached(p, ids, cache);
    return std::move(cache.result);
}

namespace {

// Numerically stable BCE with logits: max(z,0) - z*y + log(1+exp(-|z|)).
double bce_with_logit(double z, double y) {
    return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
}

}  // namespace

LossSums backward(const ModelParams& p, const ForwardCache& cache, const SequenceLabels& labels,
                  double boundary_scale, double aux_scale, double aux_loss_weight, ModelParams& grads) {
    LossSums sums;
    const size_t T = cache.ids.size();
    if (T == 0) return sums;
    const auto& cfg = p.config;
    const size_t d = cfg.dim, H = cfg.n_heads, hd = d / H;
    const double att_scale = 1.0 / std::sqrt(static_cast<double>(hd));
    const int n_l = cfg.lookahead_per_layer;
    const double lora_s = p.lora ? p.lora->scale / static_cast<double>(p.lora->rank) : 0.0;

    // Heads.
    Mat dlnf(T, d);
    Mat daux(T, cfg.aux_vocab);
    for (size_t t = 0; t < T; ++t) {
        const double y = static_cast<double>(labels.boundary[t]);
        const double z = cache.boundary_logits[t];
        sums.boundary_loss_sum += bce_with_logit(z, y);
        ++sums.n_tokens;
        const double dz = (cache.result.boundary_probs[t] - y) * boundary_scale;
        const double* xt = cache.lnf_out.row(t);
        double* dl = dlnf.row(t);
        for (size_t i = 0; i < d; ++i) {
            dl[i] += dz * p.head_w.v[i];
            grads.head_w.v[i] += dz * xt[i];
        }
        grads.head_b.v[0] += dz;

        const int cls = labels.aux_class[t];
        if (cls >= 0) {
            const double* logits = cache.result.aux_logits.row(t);
            double mx = logits[0];
            for (size_t c = 1; c < cfg.aux_vocab; ++c) mx = std::max(mx, logits[c]);
            double denom = 0.0;
            for (size_t c = 0; c < cfg.aux_vocab; ++c) denom += std::exp(logits[c] - mx);
            const double logdenom = std::log(denom) + mx;
            sums.aux_loss_sum += logdenom - logits[cls];
            ++sums.n_aux;
            double* da = daux.row(t);
            for (size_t c = 0; c < cfg.aux_vocab; ++c) {
                const double soft = std::exp(logits[c] - logdenom);
                da[c] = (soft - (static_cast<int>(c) == cls ? 1.0 : 0.0)) * aux_scale * aux_loss_weight;
            }
        }
    }
    linear_backward(cache.lnf_out, p.aux_w, daux, dlnf, grads.aux_w, grads.aux_b);

    Mat dx(T, d);
    ln_backward(dlnf, p.lnf_g, cache.lnf_xhat, cache.lnf_inv_sigma, dx, grads.lnf_g, grads.lnf_b);

    for (size_t l = cfg.n_layers; l-- > 0;) {
        const auto& lp = p.layers[l];
        const LayerCache& lc = cache.layers[l];
        auto& gl = grads.layers[l];

        // FFN block: x_out = x_mid + W2 gelu(W1 ln2(x_mid) + b1) + b2.
        Mat dact(T, cfg.ffn_dim);
        linear_backward(lc.ffn_act, p.layers[l].w2, dx, dact, gl.w2, gl.b2);
        Mat dpre(T, cfg.ffn_dim);
        for (size_t i = 0; i < dpre.size(); ++i) dpre.v[i] = dact.v[i] * gelu_grad(lc.ffn_pre.v[i]);
        Mat dln2(T, d);
        const Mat& w1e = eff_or_base(lc.w1_eff, lp.w1);
        Mat dw1_eff(cfg.ffn_dim, d);
        linear_backward(lc.ln2_out, w1e, dpre, dln2, dw1_eff, gl.b1);
        // dx currently holds the gradient at x_out; x_mid receives it directly
        // plus the LN2 path.
        ln_backward(dln2, lp.ln2_g, lc.ln2_xhat, lc.ln2_inv_sigma, dx, gl.ln2_g, gl.ln2_b);

        // Attention block: x_mid = x_in + Wo ctx + bo.
        Mat dctx(T, d);
        linear_backward(lc.ctx, lp.wo, dx, dctx, gl.wo, gl.bo);

        Mat dq(T, d), dk(T, d), dv(T, d);
        std::vector<double> datt_row;
        for (size_t h = 0; h < H; ++h) {
            const Mat& att = lc.att[h];
            const size_t off = h * hd;
            for (size_t i = 0; i < T; ++i) {
                const size_t jmax = n_l < 0 ? T - 1 : std::min(T - 1, i + static_cast<size_t>(n_l));
                const double* arow = att.row(i);
                const double* dci = dctx.row(i) + off;
                datt_row.assign(jmax + 1, 0.0);
                double dot = 0.0;
                for (size_t j = 0; j <= jmax; ++j) {
                    const double* vj = lc.v.row(j) + off;
                    double s = 0.0;
                    for (size_t c = 0; c < hd; ++c) s += dci[c] * vj[c];
                    datt_row[j] = s;
                    dot += s * arow[j];
                    double* dvj = dv.row(j) + off;
                    for (size_t c = 0; c < hd; ++c) dvj[c] += arow[j] * dci[c];
                }
                const double* qi = lc.q.row(i) + off;
                double* dqi = dq.row(i) + off;
                for (size_t j = 0; j <= jmax; ++j) {
                    const double ds = arow[j] * (datt_row[j] - dot) * att_scale;
                    if (ds == 0.0) continue;
                    const double* kj = lc.k.row(j) + off;
                    double* dkj = dk.row(j) + off;
                    for (size_t c = 0; c < hd; ++c) {
                        dqi[c] += ds * kj[c];
                        dkj[c] += ds * qi[c];
                    }
                }
            }
        }

        Mat dln1(T, d);
        const Mat& wqe = eff_or_base(lc.wq_eff, lp.wq);
        const Mat& wve = eff_or_base(lc.wv_eff, lp.wv);
        Mat dwq_eff(d, d), dwv_eff(d, d);
        linear_backward(lc.ln1_out, wqe, dq, dln1, dwq_eff, gl.bq);
        linear_backward(lc.ln1_out, lp.wk, dk, dln1, gl.wk, gl.bk);
        linear_backward(lc.ln1_out, wve, dv, dln1, dwv_eff, gl.bv);

        // Route effective-weight gradients: base always receives dW_eff; the
        // adapter factors receive the chain through (scale/rank) * B * A.
        auto route = [&](const Mat& dweff, Mat& gw, const std::optional<LoraAdapter>& ad,
                         std::optional<LoraAdapter>& gad) {
            for (size_t i = 0; i < dweff.size(); ++i) gw.v[i] += dweff.v[i];
            if (ad && gad) {
                // gA += s * B^T * dW_eff  -> [r x in]
                for (size_t r = 0; r < ad->a.rows; ++r)
                    for (size_t o = 0; o < dweff.rows; ++o) {
                        const double bv = ad->b(o, r) * lora_s;
                        if (bv == 0.0) continue;
                        const double* dwo = dweff.row(o);
                        double* gar = gad->a.row(r);
                        for (size_t i = 0; i < dweff.cols; ++i) gar[i] += bv * dwo[i];
                    }
                // gB += s * dW_eff * A^T  -> [out x r]
                for (size_t o = 0; o < dweff.rows; ++o) {
                    const double* dwo = dweff.row(o);
                    double* gbo = gad->b.row(o);
                    for (size_t r = 0; r < ad->a.rows; ++r) {
                        const double* ar = ad->a.row(r);
                        double s = 0.0;
                        for (size_t i = 0; i < dweff.cols; ++i) s += dwo[i] * ar[i];
                        gbo[r] += s * lora_s;
                    }
                }
            }
        };
        route(dwq_eff, gl.wq, lp.lora_q, gl.lora_q);
        route(dwv_eff, gl.wv, lp.lora_v, gl.lora_v);
        route(dw1_eff, gl.w1, lp.lora_ffn, gl.lora_ffn);

        ln_backward(dln1, lp.ln1_g, lc.ln1_xhat, lc.ln1_inv_sigma, dx, gl.ln1_g, gl.ln1_b);
    }

    for (size_t t = 0; t < T; ++t) {
        const double* dxt = dx.row(t);
        double* gt = grads.tok_emb.row(static_cast<size_t>(cache.ids[t]));
        double* gp = grads.pos_emb.row(t);
        for (size_t i = 0; i < d; ++i) {
            gt[i] += dxt[i];
            gp[i] += dxt[i];
        }
    }
    return sums;
}

LossSums loss_only(const ModelParams& p, const std::vector<int>& ids, const SequenceLabels& labels) {
    ForwardCache cache;
    forward_cached(p, ids, cache);
    LossSums sums;
    for (size_t t = 0; t < ids.size(); ++t) {
        sums.boundary_loss_sum += bce_with_logit(cache.boundary_logits[t], static_cast<double>(labels.boundary[t]));
        ++sums.n_tokens;
        const int cls = labels.aux_class[t];
        if (cls >= 0) {
            const double* logits = cache.result.aux_logits.row(t);
            double mx = logits[0];
            for (size_t c = 1; c < p.config.aux_vocab; ++c) mx = std::max(mx, logits[c]);
            double denom = 0.0;
            for (size_t c = 0; c < p.config.aux_vocab; ++c) denom += std::exp(logits[c] - mx);
            sums.aux_loss_sum += std::log(denom) + mx - logits[cls];
            ++sums.n_aux;
        }
    }
    return sums;
}

ModelParams truncate_layers(const ModelParams& p, size_t k) {
    if (k < 1 || k > p.config.n_layers) throw std::invalid_argument("truncate_layers: k out of range [1, L]");
    ModelParams out = p;
    out.layers.resize(k);
    out.config.n_layers = k;
    if (out.config.lookahead_total >= 0)
        out.config.lookahead_per_layer = out.config.lookahead_total / static_cast<int>(k);
    return out;
}

ModelParams merge_lora(const ModelParams& p) {
    ModelParams out = p;
    if (!p.lora) return out;
    const double s = p.lora->scale / static_cast<double>(p.lora->rank);
    for (auto& lp : out.layers) {
        if (lp.lora_q) matmul_acc(lp.lora_q->b, lp.lora_q->a, s, lp.wq);
        if (lp.lora_v) matmul_acc(lp.lora_v->b, lp.lora_v->a, s, lp.wv);
        if (lp.lora_ffn) matmul_acc(lp.lora_ffn->b, lp.lora_ffn->a, s, lp.w1);
        lp.lora_q.reset();
        lp.lora_v.reset();
        lp.lora_ffn.reset();
    }
    out.lora.reset();
    return out;
}

void attach_lora(ModelParams& p, const LoraSpec& spec, uint64_t seed) {
    if (spec.rank < 1) throw std::invalid_argument("attach_lora: rank must be >= 1");
    Rng rng(seed);
    const auto& cfg = p.config;
    auto make = [&](size_t out_dim, size_t in_dim) {
        LoraAdapter ad;
        ad.a = gaussian_mat(spec.rank, in_dim, 1.0 / std::sqrt(static_cast<double>(in_dim)), rng);
        ad.b = Mat(out_dim, spec.rank);  // zero: attaching is a no-op until trained
        return ad;
    };
    for (auto& lp : p.layers) {
        for (LoraTarget t : spec.targets) {
            if (t == LoraTarget::Query) lp.lora_q = make(cfg.dim, cfg.dim);
            if (t == LoraTarget::Value) lp.lora_v = make(cfg.dim, cfg.dim);
            if (t == LoraTarget::FfnIntermediate) lp.lora_ffn = make(cfg.ffn_dim, cfg.dim);
        }
    }
    p.lora = spec;
}

size_t parameter_count(const ModelParams& p) {
    size_t n = 0;
    for_each_tensor(p, [&](const std::string&, const Mat& m) { n += m.size(); });
    return n;
}

size_t adapter_parameter_count(const ModelParams& p) {
    size_t n = 0;
    for_each_tensor(p, [&](const std::string& name, const Mat& m) {
        if (name.find(".lora_") != std::string::npos) n += m.size();
    });
    return n;
}

}  // namespace satseg::model
