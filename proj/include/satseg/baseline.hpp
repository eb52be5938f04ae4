#pragma once

#include <set>
#include <string>

#include "satseg/infer.hpp"

namespace satseg::baseline {

// Rule-based segmenter: boundary after a terminator (plus any closing
// quotes/brackets and trailing whitespace) when followed by an uppercase
// letter or end of text, unless the preceding word is a known abbreviation.
// Whitespace after a boundary attaches to the preceding segment.
infer::SegmentationResult rule_segment(const std::string& text, const std::set<uint32_t>& terminators,
                                       const std::set<std::string>& abbreviations);

// Abbreviation list: plain text, one entry per line.
std::set<std::string> load_abbreviations(const std::string& path);

std::set<uint32_t> terminators_from_string(const std::string& chars);

}  // namespace satseg::baseline
