#include "satseg/unicode.hpp"

#include <algorithm>

namespace satseg::uni {

Decoded decode(std::string_view text) {
    Decoded d;
    d.cps.reserve(text.size());
    d.offsets.reserve(text.size() + 1);
    size_t i = 0;
    const size_t n = text.size();
    while (i < n) {
        d.offsets.push_back(i);
        unsigned char b0 = static_cast<unsigned char>(text[i]);
        uint32_t cp = b0;
        size_t len = 1;
        if (b0 < 0x80) {
            cp = b0;
        } else if ((b0 & 0xE0) == 0xC0 && i + 1 < n && (text[i + 1] & 0xC0) == 0x80) {
            cp = (b0 & 0x1Fu) << 6 | (text[i + 1] & 0x3Fu);
            len = 2;
            if (cp < 0x80) { cp = b0; len = 1; }  // overlong: treat lead byte as raw
        } else if ((b0 & 0xF0) == 0xE0 && i + 2 < n && (text[i + 1] & 0xC0) == 0x80 && (text[i + 2] & 0xC0) == 0x80) {
            cp = (b0 & 0x0Fu) << 12 | (text[i + 1] & 0x3Fu) << 6 | (text[i + 2] & 0x3Fu);
            len = 3;
            if (cp < 0x800) { cp = b0; len = 1; }
        } else if ((b0 & 0xF8) == 0xF0 && i + 3 < n && (text[i + 1] & 0xC0) == 0x80 && (text[i + 2] & 0xC0) == 0x80 &&
                   (text[i + 3] & 0xC0) == 0x80) {
            cp = (b0 & 0x07u) << 18 | (text[i + 1] & 0x3Fu) << 12 | (text[i + 2] & 0x3Fu) << 6 | (text[i + 3] & 0x3Fu);
            len = 4;
            if (cp < 0x10000 || cp > 0x10FFFF) { cp = b0; len = 1; }
        }
        d.cps.push_back(cp);
        i += len;
    }
    d.offsets.push_back(n);
    return d;
}

std::string encode_cp(uint32_t cp) {
    std::string out;
    if (cp < 0x80) {
        out += static_cast<char>(cp);
    } else if (cp < 0x800) {
        out += static_cast<char>(0xC0 | (cp >> 6));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
        out += static_cast<char>(0xE0 | (cp >> 12));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
        out += static_cast<char>(0xF0 | (cp >> 18));
        out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    }
    return out;
}

std::string encode(const std::vector<uint32_t>& cps) {
    std::string out;
    out.reserve(cps.size());
    for (uint32_t cp : cps) out += encode_cp(cp);
    return out;
}

size_t length(std::string_view text) { return decode(text).cps.size(); }

std::string slice(std::string_view text, const Decoded& d, size_t first, size_t last) {
    if (first >= last || first >= d.cps.size()) return {};
    last = std::min(last, d.cps.size());
    return std::string(text.substr(d.offsets[first], d.offsets[last] - d.offsets[first]));
}

namespace {

struct Range {
    uint32_t lo, hi;
};

// Unicode general categories P* (connector/dash/open/close/initial/final/other
// punctuation). Curated for the scripts this toolkit is exercised on; symbols
// (S*: currency, math, modifiers) deliberately excluded.
constexpr Range kPunctRanges[] = {
    {0x0021, 0x0023},  // ! " #
    {0x0025, 0x002A},  // % & ' ( ) *
    {0x002C, 0x002F},  // , - . /
    {0x003A, 0x003B},  // : ;
    {0x003F, 0x0040},  // ? @
    {0x005B, 0x005D},  // [ \ ]
    {0x005F, 0x005F},  // _
    {0x007B, 0x007B},  // {
    {0x007D, 0x007D},  // }
    {0x00A1, 0x00A1},  // inverted exclamation
    {0x00A7, 0x00A7},  // section sign
    {0x00AB, 0x00AB},  // left guillemet
    {0x00B6, 0x00B7},  // pilcrow, middle dot
    {0x00BB, 0x00BB},  // right guillemet
    {0x00BF, 0x00BF},  // inverted question
    {0x037E, 0x037E},  // Greek question mark
    {0x0387, 0x0387},  // Greek ano teleia
    {0x055A, 0x055F},  // Armenian punctuation
    {0x0589, 0x058A},  // Armenian full stop, hyphen
    {0x060C, 0x060D},  // Arabic comma
    {0x061B, 0x061B},  // Arabic semicolon
    {0x061F, 0x061F},  // Arabic question mark
    {0x066A, 0x066D},  // Arabic percent..five pointed star
    {0x06D4, 0x06D4},  // Arabic full stop
    {0x0964, 0x0965},  // Devanagari danda, double danda
    {0x0E5A, 0x0E5B},  // Thai angkhankhu, khomut
    {0x10FB, 0x10FB},  // Georgian paragraph separator
    {0x1362, 0x1368},  // Ethiopic punctuation
    {0x166E, 0x166E},  // Canadian syllabics full stop
    {0x2010, 0x2027},  // dashes, quotes, daggers, bullet, ellipsis...
    {0x2030, 0x205E},  // per mille..vertical four dots
    {0x2E00, 0x2E52},  // supplemental punctuation
    {0x3001, 0x3003},  // ideographic comma, full stop, ditto
    {0x3008, 0x3011},  // CJK brackets
    {0x3014, 0x301F},  // CJK brackets and quotes
    {0x30FB, 0x30FB},  // Katakana middle dot
    {0xFE50, 0xFE52},  // small comma..small full stop
    {0xFE54, 0xFE57},  // small semicolon..small exclamation
    {0xFF01, 0xFF03},  // fullwidth ! " #
    {0xFF05, 0xFF0A},  // fullwidth % & ' ( ) *
    {0xFF0C, 0xFF0F},  // fullwidth , - . /
    {0xFF1A, 0xFF1B},  // fullwidth : ;
    {0xFF1F, 0xFF20},  // fullwidth ? @
    {0xFF3B, 0xFF3D},  // fullwidth [ \ ]
    {0xFF5B, 0xFF5B},  // fullwidth {
    {0xFF5D, 0xFF5D},  // fullwidth }
    {0xFF61, 0xFF65},  // halfwidth CJK punctuation
};

}  // namespace

bool is_punct(uint32_t cp) {
    for (const auto& r : kPunctRanges) {
        if (cp >= r.lo && cp <= r.hi) return true;
        if (cp < r.lo) return false;  // ranges sorted
    }
    return false;
}

bool is_space(uint32_t cp) {
    return cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == 0x0B || cp == 0x0C || cp == 0x00A0 ||
           (cp >= 0x2000 && cp <= 0x200A) || cp == 0x202F || cp == 0x205F || cp == 0x3000;
}

bool is_upper(uint32_t cp) {
    if (cp >= 'A' && cp <= 'Z') return true;
    if (cp >= 0x00C0 && cp <= 0x00DE && cp != 0x00D7) return true;          // Latin-1
    if (cp >= 0x0100 && cp <= 0x0177 && (cp % 2 == 0)) return true;         // Latin Ext-A pairs
    if (cp >= 0x0391 && cp <= 0x03A9 && cp != 0x03A2) return true;          // Greek
    if (cp >= 0x0410 && cp <= 0x042F) return true;                          // Cyrillic
    if (cp >= 0x0400 && cp <= 0x040F) return true;                          // Cyrillic supplements
    return false;
}

bool is_alnum(uint32_t cp) {
    if ((cp >= '0' && cp <= '9') || (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z')) return true;
    if (cp < 0x80) return false;
    // Non-ASCII: treat anything that is neither punctuation nor whitespace as
    // a letter for the purposes of this toolkit.
    return !is_punct(cp) && !is_space(cp);
}

uint32_t to_lower(uint32_t cp) {
    if (cp >= 'A' && cp <= 'Z') return cp + 32;
    if (cp >= 0x00C0 && cp <= 0x00DE && cp != 0x00D7) return cp + 32;       // Latin-1
    if (cp >= 0x0100 && cp <= 0x0177 && (cp % 2 == 0)) return cp + 1;       // Latin Ext-A pairs
    if (cp >= 0x0391 && cp <= 0x03A9 && cp != 0x03A2) return cp + 32;       // Greek
    if (cp >= 0x0410 && cp <= 0x042F) return cp + 32;                       // Cyrillic
    if (cp >= 0x0400 && cp <= 0x040F) return cp + 80;                       // Cyrillic supplements
    return cp;
}

std::string lowercase(std::string_view text) {
    Decoded d = decode(text);
    std::string out;
    out.reserve(text.size());
    for (uint32_t cp : d.cps) out += encode_cp(to_lower(cp));
    return out;
}

}  // namespace satseg::uni
