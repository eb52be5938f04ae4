#include "satseg/infer.hpp"

#include <algorithm>
#include <stdexcept>

#include "satseg/unicode.hpp"

namespace satseg::infer {

std::vector<std::pair<size_t, size_t>> window_plan(size_t n_tokens, size_t context, size_t stride) {
    if (context < 1) throw std::invalid_argument("window_plan: context must be >= 1");
    if (stride < 1 || stride > context) throw std::invalid_argument("window_plan: stride must be in [1, context]");
    std::vector<std::pair<size_t, size_t>> windows;
    if (n_tokens == 0) return windows;
    if (n_tokens <= context) {
        windows.emplace_back(0, n_tokens);
        return windows;
    }
    for (size_t start = 0; start + context < n_tokens; start += stride) windows.emplace_back(start, start + context);
    windows.emplace_back(n_tokens - context, n_tokens);
    return windows;
}

std::vector<double> token_probs_strided(const model::ModelParams& p, const std::vector<int>& ids, size_t context,
                                        size_t stride) {
    std::vector<double> sums(ids.size(), 0.0);
    std::vector<uint32_t> counts(ids.size(), 0);
    for (auto [start, end] : window_plan(ids.size(), context, stride)) {
        const std::vector<int> window(ids.begin() + static_cast<ptrdiff_t>(start),
                                      ids.begin() + static_cast<ptrdiff_t>(end));
        const auto res = model::forward(p, window);
        for (size_t t = start; t < end; ++t) {
            sums[t] += res.boundary_probs[t - start];
            ++counts[t];
        }
    }
    for (size_t t = 0; t < sums.size(); ++t) sums[t] /= static_cast<double>(counts[t]);
    return sums;
}

std::set<size_t> decode_boundaries(const std::vector<double>& char_probs, double alpha, bool force_terminal) {
    std::set<size_t> out;
    for (size_t i = 0; i < char_probs.size(); ++i)
        if (char_probs[i] > alpha) out.insert(i);
    if (force_terminal && !char_probs.empty()) out.insert(char_probs.size() - 1);
    return out;
}

SegmentationResult segment(const model::ModelParams& p, const std::string& text, const tokenize::Tokenizer& tok,
                           const DecodeConfig& dec) {
    SegmentationResult res;
    if (text.empty()) return res;

    const auto d = uni::decode(text);
    res.char_probs.assign(d.cps.size(), 0.0);

    bool all_space = true;
    for (uint32_t cp : d.cps)
        if (!uni::is_space(cp)) {
            all_space = false;
            break;
        }

    if (!all_space) {
        const auto seq = tok.encode(text);
        const size_t context = std::min(dec.context, p.config.max_context);
        const auto probs = token_probs_strided(p, seq.ids, context, std::min(dec.stride, context));
        // A token's probability lives on the final character of its span.
        for (size_t t = 0; t < probs.size(); ++t) res.char_probs[seq.spans[t].end - 1] = probs[t];
    }
    // else: whitespace-only input carries no boundary evidence and stays a
    // single sentence.

    res.boundaries = decode_boundaries(res.char_probs, dec.alpha, /*force_terminal=*/true);

    size_t start = 0;
    for (size_t b : res.boundaries) {
        res.sentences.push_back(uni::slice(text, d, start, b + 1));
        start = b + 1;
    }
    return res;
}

}  // namespace satseg::infer
