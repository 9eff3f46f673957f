#pragma once

// Validity oracle for zlib-framed DEFLATE streams.
//
// A candidate is accepted only when the two-byte header is well formed, every
// DEFLATE block inflates, the output never exceeds the caller's cap and the
// trailing Adler-32 matches. On rejection the verdict carries the number of
// input bytes the decision depended on: any stream that agrees with the
// candidate on its first `consumed` bytes receives the same rejection. The
// search engine relies on that property to prune flip positions.

#include "squashfix/bytes.hpp"

#include <cstdint>
#include <optional>
#include <string_view>

namespace squashfix::zlib {

enum class Status : std::uint8_t {
    Valid,
    BadDeflate,
    AdlerMismatch,
    TooLong,
    BadHeader,
};

std::string_view to_string(Status status);
Status status_from_string(std::string_view text);

struct Verdict {
    Status status = Status::BadDeflate;
    std::size_t consumed = 0;
    Bytes payload;                          // only when Valid
    std::optional<std::uint32_t> computed;  // AdlerMismatch and Valid
    std::optional<std::uint32_t> stored;

    bool valid() const { return status == Status::Valid; }
};

struct OracleOptions {
    /// Reject bytes following the Adler-32 trailer instead of ignoring them.
    bool strict = false;
};

inline constexpr std::size_t kMetadataBlockMax = 8192;

std::uint32_t adler32(ByteView data, std::uint32_t start = 1);

/// Total function: every outcome is expressed through Verdict::status.
Verdict check_candidate(ByteView candidate, std::size_t max_len, OracleOptions options = {});

} // namespace squashfix::zlib
