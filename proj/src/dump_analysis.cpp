#include "squashfix/dump_analysis.hpp"

#include "squashfix/error.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <json.hpp>

namespace squashfix::dump {

void PageGeometry::validate() const {
    if (page_data == 0) throw Error(Errc::invalid_argument, "page_data must be positive");
    if (page_total != page_data + page_spare)
        throw Error(Errc::invalid_argument, "page_total must equal page_data + page_spare");
}

Bytes strip_spare(ByteView raw, const PageGeometry& geom) {
    geom.validate();
    if (raw.empty() || raw.size() % geom.page_total != 0)
        throw Error(Errc::length_not_page_multiple,
                    "dump length " + std::to_string(raw.size()) + " is not a positive multiple of " +
                        std::to_string(geom.page_total));
    const std::size_t pages = raw.size() / geom.page_total;
    Bytes out(pages * geom.page_data);
    for (std::size_t i = 0; i < pages; ++i)
        std::memcpy(out.data() + i * geom.page_data, raw.data() + i * geom.page_total, geom.page_data);
    return out;
}

namespace {

double entropy_of(const std::array<std::uint64_t, 256>& counts, std::size_t n) {
    double sum = 0.0;
    const double total = static_cast<double>(n);
    for (auto c : counts) {
        if (c == 0) continue;
        double q = static_cast<double>(c) / total;
        sum -= q * std::log2(q);
    }
    return std::clamp(sum / 8.0, 0.0, 1.0);
}

} // namespace

double normalized_entropy(ByteView window) {
    std::array<std::uint64_t, 256> counts{};
    for (auto b : window) ++counts[b];
    return window.empty() ? 0.0 : entropy_of(counts, window.size());
}

EntropySeries entropy_scan(ByteView image, std::size_t window_size, std::size_t stride) {
    if (window_size < 256) throw Error(Errc::invalid_argument, "window must be at least 256 bytes");
    if (stride == 0) throw Error(Errc::invalid_argument, "stride must be positive");
    if (image.size() < window_size)
        throw Error(Errc::image_too_short, "image shorter than the entropy window");

    EntropySeries s;
    s.window_size = window_size;
    s.stride = stride;
    const std::size_t n = (image.size() - window_size) / stride + 1;
    s.values.reserve(n);

    std::array<std::uint64_t, 256> counts{};
    for (std::size_t k = 0; k < window_size; ++k) ++counts[image[k]];
    s.values.push_back(entropy_of(counts, window_size));
    for (std::size_t i = 1; i < n; ++i) {
        std::size_t prev = (i - 1) * stride;
        std::size_t cur = i * stride;
        if (stride < window_size) {
            for (std::size_t k = prev; k < cur; ++k) --counts[image[k]];
            for (std::size_t k = prev + window_size; k < cur + window_size; ++k) ++counts[image[k]];
        } else {
            counts.fill(0);
            for (std::size_t k = cur; k < cur + window_size; ++k) ++counts[image[k]];
        }
        s.values.push_back(entropy_of(counts, window_size));
    }
    return s;
}

std::string_view to_string(SegmentKind kind) {
    switch (kind) {
    case SegmentKind::Null: return "null";
    case SegmentKind::Encrypted: return "encrypted";
    case SegmentKind::Compressed: return "compressed";
    case SegmentKind::Unknown: return "unknown";
    }
    return "unknown";
}

namespace {

void push_segment(std::vector<SegmentLabel>& out, std::uint64_t start, std::uint64_t end, SegmentKind kind) {
    if (start >= end) return;
    if (!out.empty() && out.back().kind == kind && out.back().end == start) {
        out.back().end = end;
        return;
    }
    out.push_back({start, end, kind});
}

SegmentKind classify_run(const std::vector<double>& v, std::size_t first, std::size_t last, const Thresholds& th) {
    double sum = 0.0;
    double lo = 1.0;
    for (std::size_t i = first; i <= last; ++i) {
        sum += v[i];
        lo = std::min(lo, v[i]);
    }
    double mean = sum / static_cast<double>(last - first + 1);
    if (lo >= th.encrypted) return SegmentKind::Encrypted;
    if (mean >= th.compressed && (!th.require_dip || lo <= th.compressed)) return SegmentKind::Compressed;
    return SegmentKind::Unknown;
}

// Labels [g0, g1), which contains no null run, from the windows lying inside it.
void classify_gap(const EntropySeries& s, std::uint64_t g0, std::uint64_t g1, const Thresholds& th,
                  std::vector<SegmentLabel>& out) {
    const std::uint64_t w = s.window_size;
    const std::uint64_t st = s.stride;
    std::uint64_t first = (g0 + st - 1) / st;
    if (g1 < w || first >= s.values.size() || first * st + w > g1) {
        push_segment(out, g0, g1, SegmentKind::Unknown);
        return;
    }
    std::uint64_t last = std::min<std::uint64_t>((g1 - w) / st, s.values.size() - 1);

    std::uint64_t seg_start = g0;
    std::uint64_t run_first = first;
    auto band = [&](std::uint64_t i) { return (s.values[i] >= th.high_floor) + (s.values[i] >= th.encrypted); };
    for (std::uint64_t i = first; i <= last; ++i) {
        bool boundary = i == last || band(i) != band(i + 1);
        if (!boundary) continue;
        std::uint64_t seg_end = g1;
        if (i != last) seg_end = std::clamp<std::uint64_t>((i * st + w + (i + 1) * st) / 2, seg_start, g1);
        SegmentKind kind = s.values[i] >= th.high_floor ? classify_run(s.values, run_first, i, th) : SegmentKind::Unknown;
        push_segment(out, seg_start, seg_end, kind);
        seg_start = seg_end;
        run_first = i + 1;
    }
}

} // namespace

std::vector<SegmentLabel> classify_segments(const EntropySeries& series, ByteView image, const Thresholds& th) {
    std::vector<SegmentLabel> out;
    const std::uint64_t len = image.size();
    if (len == 0) return out;
    if (series.values.empty() || series.window_size == 0) {
        out.push_back({0, len, SegmentKind::Unknown});
        return out;
    }

    std::uint64_t gap = 0;
    std::uint64_t i = 0;
    while (i < len) {
        if (image[i] != 0) {
            ++i;
            continue;
        }
        std::uint64_t j = i;
        while (j < len && image[j] == 0) ++j;
        if (j - i >= series.window_size) {
            if (gap < i) classify_gap(series, gap, i, th, out);
            push_segment(out, i, j, SegmentKind::Null);
            gap = j;
        }
        i = j;
    }
    if (gap < len) classify_gap(series, gap, len, th, out);
    return out;
}

std::string segments_to_json(const std::vector<SegmentLabel>& segments) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& s : segments)
        arr.push_back({{"start", hex_offset(s.start)}, {"end", hex_offset(s.end)}, {"kind", to_string(s.kind)}});
    nlohmann::json j = {{"schema_version", 1}, {"segments", std::move(arr)}};
    return j.dump(2) + "\n";
}

BitflipDiff diff_bitflips(ByteView a, ByteView b) {
    if (a.size() != b.size()) throw Error(Errc::length_mismatch, "regions differ in length");
    BitflipDiff d;
    d.length = a.size();
    for (std::size_t i = 0; i < a.size(); ++i) {
        unsigned x = a[i] ^ b[i];
        while (x) {
            unsigned bit = static_cast<unsigned>(std::countr_zero(x));
            d.positions.push_back(8 * static_cast<std::uint64_t>(i) + bit);
            x &= x - 1;
        }
    }
    if (!d.positions.empty())
        d.bytes_per_flip = 2.0 * static_cast<double>(d.length) / static_cast<double>(d.positions.size());
    return d;
}

} // namespace squashfix::dump
