#pragma once

#include <optional>
#include <string>

#include "satseg/model.hpp"
#include "satseg/tokenize.hpp"

namespace satseg::checkpoint {

inline constexpr const char* kFormatTag = "satseg-ckpt-v1";

struct Meta {
    std::string stage = "init";     // init | pretrain | sm | lora | merged
    double default_alpha = 0.025;   // stage-appropriate decoding threshold
    std::optional<double> tuned_alpha;
};

struct Checkpoint {
    model::ModelParams params;
    tokenize::Tokenizer tokenizer;
    Meta meta;
};

// Single file: 8-byte magic "SATSEGCK", u64 LE manifest length, JSON manifest
// (format tag, config, tokenizer, meta, tensor directory with shapes/offsets),
// then a little-endian float32 payload.
void save(const std::string& path, const model::ModelParams& params, const tokenize::Tokenizer& tok,
          const Meta& meta);
Checkpoint load(const std::string& path);

}  // namespace satseg::checkpoint
