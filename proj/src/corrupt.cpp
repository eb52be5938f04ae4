#include "satseg/corrupt.hpp"

#include <stdexcept>

#include "satseg/unicode.hpp"

namespace satseg::corrupt {

namespace {

struct Piece {
    std::string text;
    int id = 0;
    bool punct = false;
    bool removed = false;
    int copies = 1;
};

std::vector<Piece> tokenize_unit(const std::string& unit, const tokenize::Tokenizer& tok,
                                 const tokenize::PunctuationSet& punct) {
    const auto seq = tok.encode(unit);
    const auto d = uni::decode(unit);
    std::vector<Piece> pieces;
    pieces.reserve(seq.ids.size());
    for (size_t i = 0; i < seq.ids.size(); ++i) {
        Piece p;
        p.text = uni::slice(unit, d, seq.spans[i].start, seq.spans[i].end);
        p.id = seq.ids[i];
        p.punct = punct.contains_token(seq.ids[i]);
        pieces.push_back(std::move(p));
    }
    return pieces;
}

// Units where every piece is marked removed keep their last piece, so
// corruption never deletes a whole sentence (and never drops a boundary).
void keep_last_if_emptied(std::vector<Piece>& unit) {
    for (const auto& p : unit)
        if (!p.removed) return;
    if (!unit.empty()) unit.back().removed = false;
}

void lowercase_pieces(std::vector<Piece>& unit) {
    for (auto& p : unit) p.text = uni::lowercase(p.text);
}

// m >= 2; equals P(m=k) = base^(k-1) at base 0.5 and stays a proper
// distribution for any base in (0,1).
int sample_multiplicity(double base, Rng& rng) {
    int m = 2;
    while (m < 64 && rng.coin(base)) ++m;
    return m;
}

CorruptedExample assemble(const std::vector<std::vector<Piece>>& units, const std::vector<std::string>& separators,
                          const std::string& language) {
    CorruptedExample out;
    out.language = language;
    size_t len = 0;  // codepoints emitted so far
    for (size_t u = 0; u < units.size(); ++u) {
        if (u > 0) {
            out.text += separators[u - 1];
            len += uni::length(separators[u - 1]);
        }
        for (const auto& p : units[u]) {
            if (p.removed) {
                if (len > 0) out.aux_punct_labels.emplace(len - 1, p.id);
                continue;
            }
            for (int c = 0; c < p.copies; ++c) {
                out.text += p.text;
                len += uni::length(p.text);
            }
        }
        out.boundary_char_indices.insert(len - 1);
    }
    return out;
}

// Splits the chunk into unit piece lists plus the observed inter-unit
// separators, so reassembly of an untouched chunk is the identity.
void split_and_tokenize(const corpus::PackedChunk& chunk, const tokenize::Tokenizer& tok,
                        const tokenize::PunctuationSet& punct, std::vector<std::vector<Piece>>& units,
                        std::vector<std::string>& separators) {
    const auto d = uni::decode(chunk.text);
    size_t prev = 0;
    bool first = true;
    for (size_t b : chunk.boundary_char_indices) {
        std::string raw = uni::slice(chunk.text, d, prev, b + 1);
        if (!first) {
            if (!raw.empty() && raw.front() == ' ') {
                separators.emplace_back(" ");
                raw.erase(raw.begin());
            } else {
                separators.emplace_back("");
            }
        }
        units.push_back(tokenize_unit(raw, tok, punct));
        prev = b + 1;
        first = false;
    }
}

}  // namespace

CorruptedExample corrupt_pretrain(const corpus::PackedChunk& chunk, const tokenize::Tokenizer& tok,
                                  const tokenize::PunctuationSet& punct, const CorruptionConfig& cfg,
                                  uint64_t rng_seed) {
    if (cfg.scheme != Scheme::Pretrain) throw std::invalid_argument("corrupt_pretrain: cfg.scheme must be pretrain");
    Rng rng(rng_seed);
    std::vector<std::vector<Piece>> units;
    std::vector<std::string> separators;
    split_and_tokenize(chunk, tok, punct, units, separators);

    if (rng.coin(cfg.p_full_strip_sample)) {
        for (auto& unit : units) {
            lowercase_pieces(unit);
            for (auto& p : unit)
                if (p.punct) p.removed = true;
            keep_last_if_emptied(unit);
        }
    } else {
        for (auto& unit : units) {
            for (auto& p : unit)
                if (p.punct && rng.coin(cfg.p_remove_punct)) p.removed = true;
            keep_last_if_emptied(unit);
        }
    }
    return assemble(units, separators, chunk.language);
}

CorruptedExample corrupt_sm(const corpus::PackedChunk& chunk, const tokenize::Tokenizer& tok,
                            const tokenize::PunctuationSet& punct, const CorruptionConfig& cfg, uint64_t rng_seed) {
    if (cfg.scheme != Scheme::SmAsr && cfg.scheme != Scheme::SmUgc && cfg.scheme != Scheme::Clean)
        throw std::invalid_argument("corrupt_sm: cfg.scheme must be sm_asr, sm_ugc, or clean");
    Rng rng(rng_seed);
    std::vector<std::vector<Piece>> units;
    std::vector<std::string> separators;
    split_and_tokenize(chunk, tok, punct, units, separators);

    if (cfg.scheme == Scheme::SmAsr) {
        for (auto& unit : units) {
            lowercase_pieces(unit);
            for (auto& p : unit)
                if (p.punct) p.removed = true;
            keep_last_if_emptied(unit);
        }
    } else if (cfg.scheme == Scheme::SmUgc) {
        const bool lower_all = rng.coin(cfg.p_lower);
        const bool remove_all = rng.coin(cfg.p_ugc_remove_all);
        for (auto& unit : units) {
            if (lower_all) lowercase_pieces(unit);
            if (remove_all) {
                for (auto& p : unit)
                    if (p.punct) p.removed = true;
                keep_last_if_emptied(unit);
            } else {
                for (auto& p : unit)
                    if (p.punct && rng.coin(cfg.p_dup_trigger)) p.copies = sample_multiplicity(cfg.dup_geo_base, rng);
            }
        }
        for (auto& sep : separators) {
            if (rng.coin(cfg.p_space_remove)) sep.clear();
            if (rng.coin(cfg.p_space_add)) sep += ' ';
        }
    }
    return assemble(units, separators, chunk.language);
}

Scheme sample_scheme(uint64_t rng_seed) {
    Rng rng(rng_seed);
    switch (rng.below(3)) {
        case 0: return Scheme::SmAsr;
        case 1: return Scheme::SmUgc;
        default: return Scheme::Clean;
    }
}

std::string asr_strip_sentence(const std::string& text, const tokenize::Tokenizer& tok,
                               const tokenize::PunctuationSet& punct) {
    std::string out;
    for (auto& p : tokenize_unit(text, tok, punct))
        if (!p.punct) out += uni::lowercase(p.text);
    // Trim whitespace left dangling by removed punctuation at the edges.
    size_t b = 0, e = out.size();
    while (b < e && out[b] == ' ') ++b;
    while (e > b && out[e - 1] == ' ') --e;
    return out.substr(b, e - b);
}

}  // namespace satseg::corrupt
