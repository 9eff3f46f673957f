#pragma once

// SplitMix64: state += 0x9E3779B97F4A7C15, then the Stafford variant 13 mixer.
// Corpora are specified in terms of this stream so they can be regenerated
// from (seed, parameters) in any language.

#include <cstdint>

namespace squashfix {

class SplitMix64 {
public:
    static constexpr const char* kName = "splitmix64-v1";

    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1) with 53 bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Uniform in [0, bound) by rejection; bound > 0.
    std::uint64_t below(std::uint64_t bound) {
        std::uint64_t limit = -bound % bound; // 2^64 mod bound
        for (;;) {
            std::uint64_t r = next();
            unsigned __int128 m = static_cast<unsigned __int128>(r) * bound;
            if (static_cast<std::uint64_t>(m) >= limit) return static_cast<std::uint64_t>(m >> 64);
        }
    }

    using result_type = std::uint64_t;
    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return ~0ull; }
    result_type operator()() { return next(); }

private:
    std::uint64_t state_;
};

} // namespace squashfix
