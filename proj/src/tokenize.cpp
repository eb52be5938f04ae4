#include "satseg/tokenize.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "satseg/common.hpp"
#include "satseg/unicode.hpp"

namespace satseg::tokenize {

namespace {

constexpr const char* kUnkToken = "<unk>";

// Splits codepoints into alternating runs of space / non-space. Merges never
// cross piece borders, which keeps token ends aligned with word ends.
std::vector<std::pair<size_t, size_t>> split_pieces(const std::vector<uint32_t>& cps) {
    std::vector<std::pair<size_t, size_t>> pieces;
    size_t i = 0;
    while (i < cps.size()) {
        size_t j = i + 1;
        const bool space = uni::is_space(cps[i]);
        while (j < cps.size() && uni::is_space(cps[j]) == space) ++j;
        pieces.emplace_back(i, j);
        i = j;
    }
    return pieces;
}

}  // namespace

Tokenizer::Tokenizer() {
    id_to_token_.push_back(kUnkToken);
    finish_build();
}

void Tokenizer::finish_build() {
    token_to_id_.clear();
    for (size_t i = 0; i < id_to_token_.size(); ++i) token_to_id_[id_to_token_[i]] = static_cast<int>(i);
    merge_rank_.clear();
    for (size_t i = 0; i < merges_.size(); ++i) merge_rank_[merges_[i]] = static_cast<int>(i);
}

int Tokenizer::token_id(const std::string& tok) const {
    auto it = token_to_id_.find(tok);
    return it == token_to_id_.end() ? -1 : it->second;
}

Tokenizer Tokenizer::char_tokenizer(const std::vector<std::string>& corpus) {
    std::set<uint32_t> chars;
    for (const auto& s : corpus)
        for (uint32_t cp : uni::decode(s).cps) chars.insert(cp);
    Tokenizer t;  // ctor seeds id 0 with <unk>
    t.mode_ = Mode::Char;
    for (uint32_t cp : chars) t.id_to_token_.push_back(uni::encode_cp(cp));
    t.finish_build();
    return t;
}

Tokenizer Tokenizer::train_bpe(const std::vector<std::string>& corpus, size_t vocab_size) {
    // Deduplicated pieces with counts; merging operates on these.
    std::map<std::vector<uint32_t>, long long> piece_counts;
    std::set<uint32_t> chars;
    for (const auto& s : corpus) {
        const auto d = uni::decode(s);
        for (uint32_t cp : d.cps) chars.insert(cp);
        for (auto [b, e] : split_pieces(d.cps))
            piece_counts[std::vector<uint32_t>(d.cps.begin() + b, d.cps.begin() + e)] += 1;
    }
    if (chars.empty()) throw std::invalid_argument("train_bpe: empty corpus");
    if (vocab_size < chars.size())
        throw std::invalid_argument("train_bpe: vocab_size smaller than the number of distinct characters");

    Tokenizer t;  // ctor seeds id 0 with <unk>
    t.mode_ = Mode::Bpe;
    for (uint32_t cp : chars) t.id_to_token_.push_back(uni::encode_cp(cp));

    // Each unique piece as a list of token strings, plus its count.
    std::vector<std::vector<std::string>> seqs;
    std::vector<long long> counts;
    for (const auto& [piece, n] : piece_counts) {
        std::vector<std::string> syms;
        syms.reserve(piece.size());
        for (uint32_t cp : piece) syms.push_back(uni::encode_cp(cp));
        seqs.push_back(std::move(syms));
        counts.push_back(n);
    }

    const size_t n_merges_budget = vocab_size - chars.size();
    for (size_t m = 0; m < n_merges_budget; ++m) {
        std::map<std::pair<std::string, std::string>, long long> pair_counts;
        for (size_t p = 0; p < seqs.size(); ++p) {
            const auto& s = seqs[p];
            for (size_t i = 0; i + 1 < s.size(); ++i) pair_counts[{s[i], s[i + 1]}] += counts[p];
        }
        // Highest count, ties broken by lexicographically smallest pair.
        const std::pair<std::string, std::string>* best = nullptr;
        long long best_count = 0;
        for (const auto& [pr, n] : pair_counts) {
            if (n > best_count) {
                best_count = n;
                best = &pr;
            }
        }
        if (best == nullptr || best_count < 2) break;

        const std::string merged = best->first + best->second;
        t.merges_.push_back(*best);
        t.id_to_token_.push_back(merged);
        for (auto& s : seqs) {
            std::vector<std::string> out;
            out.reserve(s.size());
            for (size_t i = 0; i < s.size();) {
                if (i + 1 < s.size() && s[i] == best->first && s[i + 1] == best->second) {
                    out.push_back(merged);
                    i += 2;
                } else {
                    out.push_back(s[i]);
                    ++i;
                }
            }
            s = std::move(out);
        }
    }
    t.finish_build();
    return t;
}

TokenizedSequence Tokenizer::encode(const std::string& text) const {
    TokenizedSequence seq;
    seq.text = text;
    const auto d = uni::decode(text);
    if (d.cps.empty()) return seq;

    if (mode_ == Mode::Char) {
        seq.ids.reserve(d.cps.size());
        seq.spans.reserve(d.cps.size());
        for (size_t i = 0; i < d.cps.size(); ++i) {
            const int id = token_id(uni::encode_cp(d.cps[i]));
            seq.ids.push_back(id < 0 ? unk_id() : id);
            seq.spans.push_back({i, i + 1});
        }
        return seq;
    }

    struct Sym {
        std::string text;
        size_t start, end;
        bool known;
    };
    for (auto [pb, pe] : split_pieces(d.cps)) {
        std::vector<Sym> syms;
        syms.reserve(pe - pb);
        for (size_t i = pb; i < pe; ++i) {
            std::string s = uni::encode_cp(d.cps[i]);
            const bool known = token_to_id_.count(s) > 0;
            syms.push_back({std::move(s), i, i + 1, known});
        }
        // Repeatedly apply the applicable merge with the lowest rank,
        // leftmost occurrences first.
        while (true) {
            int best_rank = std::numeric_limits<int>::max();
            for (size_t i = 0; i + 1 < syms.size(); ++i) {
                if (!syms[i].known || !syms[i + 1].known) continue;
                auto it = merge_rank_.find({syms[i].text, syms[i + 1].text});
                if (it != merge_rank_.end() && it->second < best_rank) best_rank = it->second;
            }
            if (best_rank == std::numeric_limits<int>::max()) break;
            const auto& [ml, mr] = merges_[static_cast<size_t>(best_rank)];
            std::vector<Sym> out;
            out.reserve(syms.size());
            for (size_t i = 0; i < syms.size();) {
                if (i + 1 < syms.size() && syms[i].known && syms[i + 1].known && syms[i].text == ml &&
                    syms[i + 1].text == mr) {
                    out.push_back({ml + mr, syms[i].start, syms[i + 1].end, true});
                    i += 2;
                } else {
                    out.push_back(std::move(syms[i]));
                    ++i;
                }
            }
            syms = std::move(out);
        }
        for (const auto& s : syms) {
            seq.ids.push_back(s.known ? token_to_id_.at(s.text) : unk_id());
            seq.spans.push_back({s.start, s.end});
        }
    }
    return seq;
}

std::string Tokenizer::decode(const TokenizedSequence& seq) const {
    const auto d = uni::decode(seq.text);
    std::string out;
    out.reserve(seq.text.size());
    for (size_t i = 0; i < seq.ids.size(); ++i) {
        if (seq.ids[i] == unk_id())
            out += uni::slice(seq.text, d, seq.spans[i].start, seq.spans[i].end);
        else
            out += id_to_token_[static_cast<size_t>(seq.ids[i])];
    }
    return out;
}

std::string Tokenizer::to_json() const {
    nlohmann::ordered_json j;
    j["mode"] = mode_ == Mode::Char ? "char" : "bpe";
    nlohmann::ordered_json vocab = nlohmann::ordered_json::object();
    for (size_t i = 0; i < id_to_token_.size(); ++i) vocab[id_to_token_[i]] = i;
    j["vocab"] = std::move(vocab);
    nlohmann::ordered_json merges = nlohmann::ordered_json::array();
    for (const auto& [l, r] : merges_) merges.push_back(nlohmann::ordered_json::array({l, r}));
    j["merges"] = std::move(merges);
    j["unk_id"] = 0;
    return j.dump();
}

Tokenizer Tokenizer::from_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("tokenizer JSON parse error: ") + e.what());
    }
    Tokenizer t;
    const std::string mode = j.at("mode").get<std::string>();
    if (mode == "char")
        t.mode_ = Mode::Char;
    else if (mode == "bpe")
        t.mode_ = Mode::Bpe;
    else
        throw DataError("tokenizer JSON: unknown mode '" + mode + "'");
    const auto& vocab = j.at("vocab");
    t.id_to_token_.assign(vocab.size(), "");
    for (auto it = vocab.begin(); it != vocab.end(); ++it) {
        const size_t id = it.value().get<size_t>();
        if (id >= t.id_to_token_.size()) throw DataError("tokenizer JSON: ids are not dense");
        t.id_to_token_[id] = it.key();
    }
    for (const auto& m : j.at("merges")) t.merges_.emplace_back(m.at(0).get<std::string>(), m.at(1).get<std::string>());
    t.finish_build();
    return t;
}

void Tokenizer::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open for writing: " + path);
    f << to_json();
}

Tokenizer Tokenizer::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open tokenizer file: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return from_json(ss.str());
}

bool is_punct_only_token(const std::string& token_text) {
    const auto d = uni::decode(token_text);
    if (d.cps.empty()) return false;
    for (uint32_t cp : d.cps)
        if (!uni::is_punct(cp)) return false;
    return true;
}

PunctuationSet punctuation_set(const Tokenizer& tok, const std::vector<std::string>& corpora, size_t top_k) {
    if (top_k < 1) throw std::invalid_argument("punctuation_set: top_k must be >= 1");
    PunctuationSet out;
    for (const auto& corpus : corpora) {
        std::map<uint32_t, long long> freq;
        for (uint32_t cp : uni::decode(corpus).cps)
            if (uni::is_punct(cp)) ++freq[cp];
        std::vector<std::pair<uint32_t, long long>> ranked(freq.begin(), freq.end());
        std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        for (size_t i = 0; i < ranked.size() && i < top_k; ++i) out.chars.insert(ranked[i].first);
    }
    for (size_t id = 1; id < tok.vocab_size(); ++id) {
        const auto d = uni::decode(tok.token_text(static_cast<int>(id)));
        if (d.cps.empty()) continue;
        bool all = true;
        for (uint32_t cp : d.cps)
            if (!out.chars.count(cp)) {
                all = false;
                break;
            }
        if (all) out.token_ids.insert(static_cast<int>(id));
    }
    return out;
}

}  // namespace satseg::tokenize
