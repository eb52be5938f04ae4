#include "satseg/baseline.hpp"

#include <fstream>
#include <stdexcept>

#include "satseg/common.hpp"
#include "satseg/unicode.hpp"

namespace satseg::baseline {

namespace {

bool is_closer(uint32_t cp) {
    switch (cp) {
        case '"':
        case '\'':
        case ')':
        case ']':
        case 0x00BB:  // right guillemet
        case 0x2019:  // right single quote
        case 0x201D:  // right double quote
            return true;
        default:
            return false;
    }
}

}  // namespace

infer::SegmentationResult rule_segment(const std::string& text, const std::set<uint32_t>& terminators,
                                       const std::set<std::string>& abbreviations) {
    if (terminators.empty()) throw std::invalid_argument("rule_segment: terminators must be non-empty");
    infer::SegmentationResult res;
    if (text.empty()) return res;

    const auto d = uni::decode(text);
    const size_t n = d.cps.size();
    res.char_probs.assign(n, 0.0);

    for (size_t i = 0; i < n; ++i) {
        if (!terminators.count(d.cps[i])) continue;
        size_t j = i + 1;
        while (j < n && is_closer(d.cps[j])) ++j;
        if (j >= n) break;  // terminal boundary is forced anyway
        size_t k = j;
        while (k < n && uni::is_space(d.cps[k])) ++k;
        if (k == j || k >= n || !uni::is_upper(d.cps[k])) continue;

        // The word ending at the terminator, e.g. "Dr." for abbreviation
        // lookup.
        size_t w = i;
        while (w > 0 && !uni::is_space(d.cps[w - 1])) --w;
        if (abbreviations.count(uni::slice(text, d, w, i + 1))) continue;

        res.char_probs[k - 1] = 1.0;  // boundary after the whitespace run
    }

    res.boundaries = infer::decode_boundaries(res.char_probs, 0.5, /*force_terminal=*/true);
    size_t start = 0;
    for (size_t b : res.boundaries) {
        res.sentences.push_back(uni::slice(text, d, start, b + 1));
        start = b + 1;
    }
    return res;
}

std::set<std::string> load_abbreviations(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open abbreviation file: " + path);
    std::set<std::string> out;
    std::string line;
    while (std::getline(f, line)) {
        size_t b = 0, e = line.size();
        while (b < e && static_cast<unsigned char>(line[b]) <= ' ') ++b;
        while (e > b && static_cast<unsigned char>(line[e - 1]) <= ' ') --e;
        if (e > b) out.insert(line.substr(b, e - b));
    }
    return out;
}

std::set<uint32_t> terminators_from_string(const std::string& chars) {
    std::set<uint32_t> out;
    for (uint32_t cp : uni::decode(chars).cps) out.insert(cp);
    return out;
}

}  // namespace satseg::baseline
