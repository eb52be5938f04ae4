#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace satseg {

// Raised for malformed input files, bad checkpoints, unusable datasets.
// The CLI maps it to exit code 2.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised when a training loss turns NaN/inf; carries the offending step.
struct DivergenceError : std::runtime_error {
    int step;
    explicit DivergenceError(int step_)
        : std::runtime_error("training diverged (non-finite loss) at step " + std::to_string(step_)),
          step(step_) {}
};

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Stable seed derivation for per-example / per-step streams.
inline uint64_t mix_seed(uint64_t a, uint64_t b) { return splitmix64(splitmix64(a) ^ (b + 0x9e3779b97f4a7c15ull)); }
inline uint64_t mix_seed(uint64_t a, uint64_t b, uint64_t c) { return mix_seed(mix_seed(a, b), c); }

// Deterministic, portable RNG. std::mt19937_64 keeps state; the float/range
// extraction avoids <random> distributions, whose output is
// implementation-defined and would break byte-reproducibility guarantees.
class Rng {
public:
    explicit Rng(uint64_t seed) : s_(splitmix64(seed ^ 0xa02f1c5d8e3b76c9ull)) {
        if (s_ == 0) s_ = 0x9e3779b97f4a7c15ull;
    }

    uint64_t u64() {
        // xorshift* on a splitmix-initialized state; one stream per Rng.
        s_ ^= s_ >> 12;
        s_ ^= s_ << 25;
        s_ ^= s_ >> 27;
        return s_ * 0x2545f4914f6cdd1dull;
    }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform01() { return static_cast<double>(u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n). n must be > 0.
    uint64_t below(uint64_t n) {
        return static_cast<uint64_t>((static_cast<__uint128_t>(u64()) * n) >> 64);
    }

    bool coin(double p) { return uniform01() < p; }

    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 1e-300) u1 = uniform01();
        double u2 = uniform01();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

private:
    uint64_t s_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace satseg
