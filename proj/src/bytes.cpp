#include "squashfix/bytes.hpp"

#include "squashfix/error.hpp"

#include <cstdio>
#include <fstream>
#include <limits>

namespace squashfix {

std::string hex_offset(std::uint64_t value) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "0x%llX", static_cast<unsigned long long>(value));
    return buf;
}

std::uint64_t parse_offset(const std::string& text) {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(text, &used, 0);
    } catch (const std::exception&) {
        throw Error(Errc::invalid_argument, "not a number: " + text);
    }
    if (used != text.size()) throw Error(Errc::invalid_argument, "not a number: " + text);
    return v;
}

std::string to_hex(ByteView data) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s;
    s.reserve(data.size() * 2);
    for (auto b : data) {
        s.push_back(digits[b >> 4]);
        s.push_back(digits[b & 15]);
    }
    return s;
}

Bytes read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::io_error, "cannot open " + path.string());
    in.seekg(0, std::ios::end);
    auto size = static_cast<std::size_t>(in.tellg());
    in.seekg(0);
    Bytes data(size);
    if (size && !in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(size)))
        throw Error(Errc::io_error, "cannot read " + path.string());
    return data;
}

Bytes read_file_range(const std::filesystem::path& path, std::uint64_t offset, std::uint64_t length) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::io_error, "cannot open " + path.string());
    in.seekg(0, std::ios::end);
    auto size = static_cast<std::uint64_t>(in.tellg());
    if (offset > size) throw Error(Errc::invalid_argument, "offset beyond end of " + path.string());
    if (length == std::numeric_limits<std::uint64_t>::max() || offset + length > size) length = size - offset;
    Bytes data(static_cast<std::size_t>(length));
    in.seekg(static_cast<std::streamoff>(offset));
    if (length && !in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(length)))
        throw Error(Errc::io_error, "cannot read " + path.string());
    return data;
}

void write_file(const std::filesystem::path& path, ByteView data) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::io_error, "cannot create " + path.string());
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!out) throw Error(Errc::io_error, "cannot write " + path.string());
}

void write_file_atomic(const std::filesystem::path& path, ByteView data) {
    auto tmp = path;
    tmp += ".tmp";
    write_file(tmp, data);
    std::filesystem::rename(tmp, path);
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
    write_file_atomic(path, ByteView(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

} // namespace squashfix
