#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace squashfix {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

// Little-endian field access. Callers are responsible for bounds.
inline std::uint16_t load_le16(const std::uint8_t* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline std::uint32_t load_le32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint64_t load_le64(const std::uint8_t* p) {
    return static_cast<std::uint64_t>(load_le32(p)) | (static_cast<std::uint64_t>(load_le32(p + 4)) << 32);
}

inline void store_le16(Bytes& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void store_le32(Bytes& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void store_le64(Bytes& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

/// Offsets are rendered as upper-case hex with a 0x prefix, e.g. "0xB60000".
std::string hex_offset(std::uint64_t value);
std::uint64_t parse_offset(const std::string& text);

std::string to_hex(ByteView data);

Bytes read_file(const std::filesystem::path& path);
Bytes read_file_range(const std::filesystem::path& path, std::uint64_t offset, std::uint64_t length);
void write_file(const std::filesystem::path& path, ByteView data);
/// Write to a temporary sibling and rename over the target.
void write_file_atomic(const std::filesystem::path& path, ByteView data);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

} // namespace squashfix
