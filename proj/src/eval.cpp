#include "satseg/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "json.hpp"
#include "satseg/corrupt.hpp"
#include "satseg/unicode.hpp"

namespace satseg::eval {

Prf boundary_prf(const std::set<size_t>& pred, const std::set<size_t>& gold) {
    Prf out;
    for (size_t b : pred)
        if (gold.count(b))
            ++out.tp;
        else
            ++out.fp;
    for (size_t b : gold)
        if (!pred.count(b)) ++out.fn;
    out.precision = (out.tp + out.fp) ? static_cast<double>(out.tp) / static_cast<double>(out.tp + out.fp) : 0.0;
    out.recall = (out.tp + out.fn) ? static_cast<double>(out.tp) / static_cast<double>(out.tp + out.fn) : 0.0;
    out.f1 = (out.precision + out.recall > 0.0) ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
                                                : 0.0;
    return out;
}

namespace {

std::set<size_t> drop_index(const std::set<size_t>& s, size_t idx) {
    std::set<size_t> out = s;
    out.erase(idx);
    return out;
}

Prf prf_from_counts(size_t tp, size_t fp, size_t fn) {
    Prf out;
    out.tp = tp;
    out.fp = fp;
    out.fn = fn;
    out.precision = (tp + fp) ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    out.recall = (tp + fn) ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    out.f1 = (out.precision + out.recall > 0.0) ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
                                                : 0.0;
    return out;
}

}  // namespace

Prf char_f1(const std::set<size_t>& pred, const std::set<size_t>& gold, size_t text_cp_len, bool include_terminal) {
    if (include_terminal || text_cp_len == 0) return boundary_prf(pred, gold);
    const size_t terminal = text_cp_len - 1;
    return boundary_prf(drop_index(pred, terminal), drop_index(gold, terminal));
}

Prf token_f1(const std::set<size_t>& pred, const std::set<size_t>& gold, const tokenize::TokenizedSequence& seq,
             bool include_terminal) {
    // Boundary char index -> index of the token whose span contains it.
    auto to_tokens = [&](const std::set<size_t>& chars) {
        std::set<size_t> toks;
        size_t t = 0;
        for (size_t b : chars) {
            while (t < seq.spans.size() && seq.spans[t].end <= b) ++t;
            if (t < seq.spans.size() && seq.spans[t].start <= b) toks.insert(t);
        }
        return toks;
    };
    std::set<size_t> p = to_tokens(pred), g = to_tokens(gold);
    if (!include_terminal && !seq.spans.empty()) {
        p.erase(seq.spans.size() - 1);
        g.erase(seq.spans.size() - 1);
    }
    return boundary_prf(p, g);
}

double perfect_rate(const std::vector<std::pair<std::set<size_t>, std::set<size_t>>>& results) {
    if (results.empty()) throw std::invalid_argument("perfect_rate: empty result list");
    size_t exact = 0;
    for (const auto& [pred, gold] : results)
        if (pred == gold) ++exact;
    return static_cast<double>(exact) / static_cast<double>(results.size());
}

namespace {

constexpr double kNegInf = -1e300;

enum State : int { kM = 0, kY = 1, kX = 2 };  // preference order: M > Y (gap in a) > X (gap in b)

}  // namespace

Alignment nw_align(const std::string& a, const std::string& b, const AlignmentParams& params) {
    const auto da = uni::decode(a), db = uni::decode(b);
    const size_t n = da.cps.size(), m = db.cps.size();
    Alignment out;
    if (n == 0 && m == 0) return out;

    // Gotoh three-state DP. M: last column is match/mismatch; X: gap in b
    // (consumes a); Y: gap in a (consumes b).
    auto idx = [m](size_t i, size_t j) { return i * (m + 1) + j; };
    std::vector<double> M((n + 1) * (m + 1), kNegInf), X((n + 1) * (m + 1), kNegInf),
        Y((n + 1) * (m + 1), kNegInf);
    M[idx(0, 0)] = 0.0;
    for (size_t i = 1; i <= n; ++i)
        X[idx(i, 0)] = params.gap_open + static_cast<double>(i - 1) * params.gap_extend;
    for (size_t j = 1; j <= m; ++j)
        Y[idx(0, j)] = params.gap_open + static_cast<double>(j - 1) * params.gap_extend;

    for (size_t i = 1; i <= n; ++i) {
        for (size_t j = 1; j <= m; ++j) {
            const double sub = (da.cps[i - 1] == db.cps[j - 1]) ? params.match : params.mismatch;
            M[idx(i, j)] = sub + std::max({M[idx(i - 1, j - 1)], X[idx(i - 1, j - 1)], Y[idx(i - 1, j - 1)]});
            X[idx(i, j)] = std::max({M[idx(i - 1, j)] + params.gap_open, X[idx(i - 1, j)] + params.gap_extend,
                                     Y[idx(i - 1, j)] + params.gap_open});
            Y[idx(i, j)] = std::max({M[idx(i, j - 1)] + params.gap_open, X[idx(i, j - 1)] + params.gap_open,
                                     Y[idx(i, j - 1)] + params.gap_extend});
        }
    }

    auto pick_state = [](double vm, double vy, double vx) {
        if (vm >= vy && vm >= vx) return kM;
        if (vy >= vx) return kY;
        return kX;
    };

    size_t i = n, j = m;
    int state = pick_state(M[idx(n, m)], Y[idx(n, m)], X[idx(n, m)]);
    out.score = std::max({M[idx(n, m)], Y[idx(n, m)], X[idx(n, m)]});
    std::vector<AlignedPair> rev;
    while (i > 0 || j > 0) {
        if (state == kM) {
            rev.push_back({static_cast<int>(i - 1), static_cast<int>(j - 1)});
            const double target = M[idx(i, j)] -
                                  ((da.cps[i - 1] == db.cps[j - 1]) ? params.match : params.mismatch);
            --i;
            --j;
            const double vm = M[idx(i, j)], vy = Y[idx(i, j)], vx = X[idx(i, j)];
            // Pick the predecessor that actually attains the value, in
            // preference order.
            if (vm >= target - 1e-12 && vm >= vy && vm >= vx) state = kM;
            else if (vy >= target - 1e-12 && vy >= vx) state = kY;
            else state = kX;
        } else if (state == kY) {
            rev.push_back({-1, static_cast<int>(j - 1)});
            const double here = Y[idx(i, j)];
            --j;
            if (M[idx(i, j)] + params.gap_open >= here - 1e-12) state = kM;
            else if (Y[idx(i, j)] + params.gap_extend >= here - 1e-12) state = kY;
            else state = kX;
        } else {
            rev.push_back({static_cast<int>(i - 1), -1});
            const double here = X[idx(i, j)];
            --i;
            if (M[idx(i, j)] + params.gap_open >= here - 1e-12) state = kM;
            else if (Y[idx(i, j)] + params.gap_open >= here - 1e-12) state = kY;
            else state = kX;
        }
        if (i == 0 && j > 0) state = kY;
        if (j == 0 && i > 0) state = kX;
    }
    out.pairs.assign(rev.rbegin(), rev.rend());
    return out;
}

std::set<size_t> project_boundaries(const std::string& altered, const std::set<size_t>& altered_boundaries,
                                    const std::string& reference, const AlignmentParams& params, double score_floor) {
    std::set<size_t> out;
    const size_t ref_len = uni::length(reference);
    if (ref_len == 0) return out;
    const Alignment al = nw_align(altered, reference, params);
    const double normalized = al.score / (params.match * static_cast<double>(ref_len));
    if (normalized < score_floor) return out;

    // For each altered index, the aligned reference index or the nearest
    // preceding aligned one.
    std::vector<int> a_to_ref(uni::length(altered), -1);
    int last_ref = -1;
    for (const auto& pr : al.pairs) {
        if (pr.b >= 0) last_ref = pr.b;
        if (pr.a >= 0) a_to_ref[static_cast<size_t>(pr.a)] = last_ref;
    }
    for (size_t b : altered_boundaries) {
        if (b >= a_to_ref.size()) continue;
        if (a_to_ref[b] >= 0) out.insert(static_cast<size_t>(a_to_ref[b]));
    }
    return out;
}

std::vector<corpus::Document> asr_corrupt_eval(const std::vector<corpus::Document>& docs,
                                               const tokenize::Tokenizer& tok, const tokenize::PunctuationSet& punct,
                                               std::vector<std::string>* warnings) {
    std::vector<corpus::Document> out;
    for (const auto& doc : docs) {
        corpus::Document nd;
        nd.language = doc.language;
        for (const auto& u : doc.units) {
            std::string stripped = corrupt::asr_strip_sentence(u.text, tok, punct);
            if (stripped.empty()) {
                if (warnings)
                    warnings->push_back("sentence consisting only of punctuation dropped (language '" +
                                        doc.language + "')");
                continue;
            }
            nd.units.push_back({std::move(stripped), u.kind});
        }
        if (!nd.units.empty()) out.push_back(std::move(nd));
    }
    return out;
}

namespace {

struct SequenceEval {
    std::string text;
    std::set<size_t> gold;
    std::string language;
};

SequenceEval doc_to_sequence(const corpus::Document& doc) {
    SequenceEval s;
    s.language = doc.language;
    for (size_t i = 0; i < doc.units.size(); ++i) {
        if (i > 0) s.text += ' ';
        s.text += doc.units[i].text;
        s.gold.insert(uni::length(s.text) - 1);
    }
    return s;
}

}  // namespace

CorpusReport evaluate_documents(const std::vector<corpus::Document>& docs, const BoundaryPredictor& predict,
                                const tokenize::Tokenizer* tok_for_token_f1, const EvalOptions& opts) {
    std::vector<SequenceEval> seqs;
    seqs.reserve(docs.size());
    for (const auto& d : docs)
        if (!d.units.empty()) seqs.push_back(doc_to_sequence(d));

    std::vector<std::set<size_t>> preds(seqs.size());
    const size_t n_threads = std::max<size_t>(1, opts.threads);
    if (n_threads == 1 || seqs.size() < 2) {
        for (size_t i = 0; i < seqs.size(); ++i) preds[i] = predict(seqs[i].text);
    } else {
        std::vector<std::thread> pool;
        std::atomic<size_t> next{0};
        for (size_t w = 0; w < std::min(n_threads, seqs.size()); ++w)
            pool.emplace_back([&]() {
                for (size_t i = next.fetch_add(1); i < seqs.size(); i = next.fetch_add(1))
                    preds[i] = predict(seqs[i].text);
            });
        for (auto& t : pool) t.join();
    }

    struct Counts {
        size_t tp = 0, fp = 0, fn = 0;
        size_t ttp = 0, tfp = 0, tfn = 0;
        size_t exact = 0, n = 0;
    };
    std::map<std::string, Counts> by_lang;
    Counts total;
    for (size_t i = 0; i < seqs.size(); ++i) {
        const size_t len = uni::length(seqs[i].text);
        const Prf c = char_f1(preds[i], seqs[i].gold, len, opts.include_terminal);
        Prf t = c;
        if (tok_for_token_f1) t = token_f1(preds[i], seqs[i].gold, tok_for_token_f1->encode(seqs[i].text),
                                           opts.include_terminal);
        for (Counts* dst : {&total, &by_lang[seqs[i].language]}) {
            dst->tp += c.tp;
            dst->fp += c.fp;
            dst->fn += c.fn;
            dst->ttp += t.tp;
            dst->tfp += t.fp;
            dst->tfn += t.fn;
            if (preds[i] == seqs[i].gold) ++dst->exact;
            ++dst->n;
        }
    }

    auto to_report = [](const Counts& c) {
        EvalReport r;
        const Prf p = prf_from_counts(c.tp, c.fp, c.fn);
        r.precision = p.precision;
        r.recall = p.recall;
        r.f1 = p.f1;
        r.token_f1 = prf_from_counts(c.ttp, c.tfp, c.tfn).f1;
        r.perfect_rate = c.n ? static_cast<double>(c.exact) / static_cast<double>(c.n) : 0.0;
        r.tp = c.tp;
        r.fp = c.fp;
        r.fn = c.fn;
        r.n_sequences = c.n;
        return r;
    };

    CorpusReport report;
    report.overall = to_report(total);
    double macro_sum = 0.0;
    for (const auto& [lang, c] : by_lang) {
        report.per_language[lang] = to_report(c);
        macro_sum += report.per_language[lang].f1;
    }
    report.macro_f1 = by_lang.empty() ? 0.0 : macro_sum / static_cast<double>(by_lang.size());
    return report;
}

namespace {

nlohmann::ordered_json report_json(const EvalReport& r) {
    nlohmann::ordered_json j;
    j["precision"] = r.precision;
    j["recall"] = r.recall;
    j["f1"] = r.f1;
    j["token_f1"] = r.token_f1;
    j["perfect_rate"] = r.perfect_rate;
    j["tp"] = r.tp;
    j["fp"] = r.fp;
    j["fn"] = r.fn;
    j["n_sequences"] = r.n_sequences;
    return j;
}

}  // namespace

std::string report_to_json(const CorpusReport& report, bool per_language) {
    nlohmann::ordered_json j = report_json(report.overall);
    if (per_language) {
        j["macro_f1"] = report.macro_f1;
        nlohmann::ordered_json langs = nlohmann::ordered_json::object();
        for (const auto& [lang, r] : report.per_language) langs[lang] = report_json(r);
        j["per_language"] = std::move(langs);
    }
    return j.dump();
}

}  // namespace satseg::eval
