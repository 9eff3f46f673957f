#pragma once

// Raw NAND dump handling: spare-area removal, entropy segmentation of the
// resulting main image and bitflip counting between duplicated regions.

#include "squashfix/bytes.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace squashfix::dump {

struct PageGeometry {
    std::size_t page_total = 2176;
    std::size_t page_data = 2048;
    std::size_t page_spare = 128;

    void validate() const;
};

/// Keeps the first page_data bytes of every page.
Bytes strip_spare(ByteView raw, const PageGeometry& geom);

inline constexpr std::size_t kDefaultWindow = 262144;
inline constexpr std::size_t kDefaultStride = 65536;

struct EntropySeries {
    std::size_t window_size = 0;
    std::size_t stride = 0;
    std::vector<double> values; // normalized to [0, 1]

    std::size_t window_start(std::size_t i) const { return i * stride; }
};

/// Shannon entropy of the byte histogram, divided by 8.
double normalized_entropy(ByteView window);

EntropySeries entropy_scan(ByteView image, std::size_t window_size = kDefaultWindow,
                           std::size_t stride = kDefaultStride);

enum class SegmentKind { Null, Encrypted, Compressed, Unknown };

std::string_view to_string(SegmentKind kind);

struct SegmentLabel {
    std::uint64_t start = 0;
    std::uint64_t end = 0;
    SegmentKind kind = SegmentKind::Unknown;

    bool operator==(const SegmentLabel&) const = default;
};

struct Thresholds {
    double encrypted = 0.9998;  // every window at or above
    double compressed = 0.998;  // mean at or above
    double high_floor = 0.9;    // windows below start a new run
    bool require_dip = false;   // compressed also needs one window <= `compressed`
};

std::vector<SegmentLabel> classify_segments(const EntropySeries& series, ByteView image,
                                            const Thresholds& thresholds = {});

std::string segments_to_json(const std::vector<SegmentLabel>& segments);

struct BitflipDiff {
    std::vector<std::uint64_t> positions; // bit index = 8 * byte + bit
    std::uint64_t length = 0;             // bytes per copy
    /// (2 * length) / count, both copies counted; empty when count is 0.
    std::optional<double> bytes_per_flip;
};

BitflipDiff diff_bitflips(ByteView a, ByteView b);

} // namespace squashfix::dump
