#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace satseg::uni {

// Decoded UTF-8 text: codepoints plus the byte offset where each starts.
// Invalid bytes are passed through as single-byte codepoints so that slicing
// by offsets always reproduces the original bytes.
struct Decoded {
    std::vector<uint32_t> cps;
    std::vector<size_t> offsets;  // offsets.size() == cps.size() + 1; last == text.size()
};

Decoded decode(std::string_view text);
std::string encode(const std::vector<uint32_t>& cps);
std::string encode_cp(uint32_t cp);
size_t length(std::string_view text);  // number of codepoints

// Substring by codepoint range [first, last), exact byte-level slice.
std::string slice(std::string_view text, const Decoded& d, size_t first, size_t last);

bool is_punct(uint32_t cp);       // Unicode P* (curated table; currency/math symbols excluded)
bool is_space(uint32_t cp);
bool is_upper(uint32_t cp);
bool is_alnum(uint32_t cp);
uint32_t to_lower(uint32_t cp);   // 1:1 simple lowering (ASCII, Latin-1/Ext-A, Greek, Cyrillic)

std::string lowercase(std::string_view text);

}  // namespace satseg::uni
