#pragma once

// Independent references used as test oracles.

#include "squashfix/bytes.hpp"
#include "squashfix/prng.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <unistd.h>
#include <zlib.h>

namespace testutil {

using squashfix::Bytes;
using squashfix::ByteView;

inline Bytes zcompress(ByteView data, int level = 9) {
    uLongf n = compressBound(static_cast<uLong>(data.size()));
    Bytes out(n);
    if (compress2(out.data(), &n, data.data(), static_cast<uLong>(data.size()), level) != Z_OK) return {};
    out.resize(n);
    return out;
}

/// zlib's own inflate with Adler-32 check; nullopt unless the stream ends
/// cleanly within `max_len` output bytes.
inline std::optional<Bytes> zinflate(ByteView data, std::size_t max_len) {
    Bytes out(max_len + 1);
    uLongf dest = static_cast<uLongf>(out.size());
    uLong src = static_cast<uLong>(data.size());
    if (uncompress2(out.data(), &dest, data.data(), &src) != Z_OK) return std::nullopt;
    if (dest > max_len) return std::nullopt;
    out.resize(dest);
    return out;
}

/// Adler-32 from the textbook definition with plain running sums.
inline std::uint32_t naive_adler(ByteView data) {
    std::uint64_t a = 1, b = 0;
    for (auto c : data) {
        a = (a + c) % 65521;
        b = (b + a) % 65521;
    }
    return static_cast<std::uint32_t>((b << 16) | a);
}

inline Bytes random_bytes(std::uint64_t seed, std::size_t n) {
    squashfix::SplitMix64 rng(seed);
    Bytes out(n);
    for (auto& b : out) b = static_cast<std::uint8_t>(rng.next());
    return out;
}

/// Word-salad text that compresses to roughly a third of its size.
inline Bytes text_bytes(std::uint64_t seed, std::size_t n) {
    static const char* words[] = {"alpha", "beta",   "gamma", "delta", "flash", "page",  "block", "inode",
                                  "table", "kernel", "mount", "root",  "image", "value", "error", "bit"};
    squashfix::SplitMix64 rng(seed);
    std::string s;
    while (s.size() < n) {
        s += words[rng.below(16)];
        s += rng.below(9) == 0 ? '\n' : ' ';
        if (rng.below(13) == 0) s += std::to_string(rng.below(100000));
    }
    s.resize(n);
    return Bytes(s.begin(), s.end());
}

inline void flip(Bytes& b, std::uint64_t bit) { b[bit >> 3] ^= static_cast<std::uint8_t>(1u << (bit & 7)); }

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        static int counter = 0;
        path = std::filesystem::temp_directory_path() /
               ("squashfix-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

} // namespace testutil
