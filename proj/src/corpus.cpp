#include "satseg/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "satseg/unicode.hpp"

namespace satseg::corpus {

namespace {

std::string trim(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && (static_cast<unsigned char>(s[b]) <= ' ')) ++b;
    while (e > b && (static_cast<unsigned char>(s[e - 1]) <= ' ')) --e;
    return s.substr(b, e - b);
}

void validate_unit(const std::string& text, size_t line_no) {
    if (text.empty())
        throw DataError("corpus line " + std::to_string(line_no) + ": unit is empty after trimming");
    if (text.find('\n') != std::string::npos)
        throw DataError("corpus line " + std::to_string(line_no) + ": unit contains a newline");
}

}  // namespace

std::vector<Document> parse_corpus(const std::string& content, CorpusFormat format,
                                   const std::string& default_language) {
    std::vector<Document> docs;
    std::istringstream in(content);
    std::string line;
    size_t line_no = 0;

    if (format == CorpusFormat::Lines) {
        Document cur;
        cur.language = default_language;
        auto flush = [&]() {
            if (!cur.units.empty()) {
                docs.push_back(cur);
                cur.units.clear();
            }
        };
        while (std::getline(in, line)) {
            ++line_no;
            const std::string t = trim(line);
            if (t.empty()) {
                flush();
                continue;
            }
            cur.units.push_back({t, UnitKind::Sentence});
        }
        flush();
        return docs;
    }

    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError("corpus line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!j.is_object() || !j.contains("units") || !j["units"].is_array())
            throw DataError("corpus line " + std::to_string(line_no) + ": expected object with a 'units' array");
        Document doc;
        doc.language = j.value("language", default_language);
        UnitKind kind = UnitKind::Sentence;
        if (j.value("kind", "sentence") == std::string("paragraph")) kind = UnitKind::Paragraph;
        for (const auto& u : j["units"]) {
            if (!u.is_string())
                throw DataError("corpus line " + std::to_string(line_no) + ": units must be strings");
            const std::string t = trim(u.get<std::string>());
            validate_unit(t, line_no);
            doc.units.push_back({t, kind});
        }
        docs.push_back(std::move(doc));
    }
    return docs;
}

std::vector<Document> load_corpus(const std::string& path, CorpusFormat format, const std::string& default_language) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open corpus file: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_corpus(ss.str(), format, default_language);
}

namespace {

size_t token_count(const tokenize::Tokenizer& tok, const std::string& text) { return tok.encode(text).ids.size(); }

// Truncates a unit to at most `max_tokens` tokens, returning the surviving
// text and whether truncation happened.
std::pair<std::string, bool> clip_unit(const tokenize::Tokenizer& tok, const std::string& text, size_t max_tokens) {
    auto seq = tok.encode(text);
    if (seq.ids.size() <= max_tokens) return {text, false};
    const auto d = uni::decode(text);
    const size_t end_cp = seq.spans[max_tokens - 1].end;
    return {uni::slice(text, d, 0, end_cp), true};
}

PackedChunk chunk_from_units(const std::vector<std::string>& units, const std::string& language) {
    PackedChunk c;
    c.language = language;
    for (size_t i = 0; i < units.size(); ++i) {
        if (i > 0) c.text += ' ';
        c.text += units[i];
        c.boundary_char_indices.insert(uni::length(c.text) - 1);
    }
    return c;
}

size_t sample_geometric(double p, Rng& rng) {
    // P(s=k) = p*(1-p)^(k-1), k >= 1.
    size_t s = 1;
    while (s < 4096 && !rng.coin(p)) ++s;
    return s;
}

}  // namespace

PackResult pack_chunks(const std::vector<Document>& docs, const PackingConfig& cfg, const tokenize::Tokenizer& tok,
                       uint64_t rng_seed) {
    if (cfg.context_tokens < 8) throw std::invalid_argument("pack_chunks: context_tokens must be >= 8");
    if (!(cfg.geo_p > 0.0 && cfg.geo_p <= 1.0)) throw std::invalid_argument("pack_chunks: geo_p must be in (0,1]");
    PackResult out;
    Rng rng(rng_seed);

    for (const auto& doc : docs) {
        std::vector<std::string> pending;
        std::string pending_text;  // fill mode: the joined pending units
        size_t quota = 0;          // geometric mode: units remaining in this chunk
        auto flush = [&]() {
            if (!pending.empty()) {
                out.chunks.push_back(chunk_from_units(pending, doc.language));
                pending.clear();
                pending_text.clear();
            }
        };
        for (const auto& unit : doc.units) {
            auto [text, clipped] = clip_unit(tok, unit.text, cfg.context_tokens);
            if (clipped)
                out.warnings.push_back("unit longer than context (" + std::to_string(cfg.context_tokens) +
                                       " tokens) was truncated in language '" + doc.language + "'");
            if (cfg.mode == PackMode::Fill) {
                const std::string probe = pending.empty() ? text : pending_text + ' ' + text;
                if (!pending.empty() && token_count(tok, probe) > cfg.context_tokens) {
                    flush();
                    pending_text = text;
                } else {
                    pending_text = probe;
                }
                pending.push_back(text);
            } else {
                if (quota == 0) quota = sample_geometric(cfg.geo_p, rng);
                pending.push_back(text);
                if (--quota == 0) flush();
            }
        }
        flush();
    }
    return out;
}

PackResult make_sentence_pairs(const std::vector<Document>& docs, uint64_t rng_seed) {
    (void)rng_seed;  // pairing is deterministic; seed kept for interface stability
    PackResult out;
    for (const auto& doc : docs) {
        if (doc.units.size() < 2) {
            out.warnings.push_back("document with fewer than 2 units skipped (language '" + doc.language + "')");
            continue;
        }
        const size_t n_pairs = doc.units.size() / 2;
        for (size_t p = 0; p < n_pairs; ++p)
            out.chunks.push_back(
                chunk_from_units({doc.units[2 * p].text, doc.units[2 * p + 1].text}, doc.language));
    }
    return out;
}

bool ends_in_punct(const Unit& unit) {
    const auto d = uni::decode(unit.text);
    return !d.cps.empty() && uni::is_punct(d.cps.back());
}

std::vector<size_t> sample_documents(const std::vector<Document>& docs, size_t target_units,
                                     double max_nonpunct_frac, Rng& rng) {
    std::vector<size_t> picked;
    if (docs.empty()) return picked;
    size_t units = 0, nonpunct = 0, consecutive_rejects = 0;
    while (units < target_units) {
        const size_t i = rng.below(docs.size());
        size_t doc_units = docs[i].units.size();
        size_t doc_nonpunct = 0;
        for (const auto& u : docs[i].units)
            if (!ends_in_punct(u)) ++doc_nonpunct;
        const double frac = static_cast<double>(nonpunct + doc_nonpunct) / static_cast<double>(units + doc_units);
        if (frac > max_nonpunct_frac && consecutive_rejects < 64) {
            ++consecutive_rejects;
            continue;
        }
        consecutive_rejects = 0;
        picked.push_back(i);
        units += doc_units;
        nonpunct += doc_nonpunct;
    }
    return picked;
}

std::vector<std::string> split_chunk(const PackedChunk& chunk) {
    std::vector<std::string> units;
    const auto d = uni::decode(chunk.text);
    size_t start = 0;
    for (size_t b : chunk.boundary_char_indices) {
        std::string u = uni::slice(chunk.text, d, start, b + 1);
        if (start > 0 && !u.empty() && u.front() == ' ') u.erase(u.begin());
        units.push_back(std::move(u));
        start = b + 1;
    }
    return units;
}

std::vector<std::string> languages(const std::vector<Document>& docs) {
    std::vector<std::string> langs;
    for (const auto& d : docs)
        if (std::find(langs.begin(), langs.end(), d.language) == langs.end()) langs.push_back(d.language);
    return langs;
}

}  // namespace satseg::corpus
