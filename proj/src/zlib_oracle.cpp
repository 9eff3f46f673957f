#include "squashfix/zlib_oracle.hpp"

#include "inflate_core.hpp"
#include "squashfix/error.hpp"

#include <cstring>

namespace squashfix::zlib {

std::string_view to_string(Status status) {
    switch (status) {
    case Status::Valid: return "Valid";
    case Status::BadDeflate: return "BadDeflate";
    case Status::AdlerMismatch: return "AdlerMismatch";
    case Status::TooLong: return "TooLong";
    case Status::BadHeader: return "BadHeader";
    }
    return "BadDeflate";
}

Status status_from_string(std::string_view text) {
    for (auto s : {Status::Valid, Status::BadDeflate, Status::AdlerMismatch, Status::TooLong, Status::BadHeader})
        if (to_string(s) == text) return s;
    throw Error(Errc::invalid_argument, "unknown oracle status: " + std::string(text));
}

std::uint32_t adler32(ByteView data, std::uint32_t start) {
    std::uint32_t a = start & 0xFFFFu;
    std::uint32_t b = start >> 16;
    detail::adler_update(a, b, data.data(), data.size());
    return (b << 16) | a;
}

Verdict check_candidate(ByteView candidate, std::size_t max_len, OracleOptions options) {
    Bytes input(candidate.size() + detail::kInputPadding, 0);
    if (!candidate.empty()) std::memcpy(input.data(), candidate.data(), candidate.size());
    Bytes output(max_len);
    detail::CodeArena arena;
    detail::RunTarget target{input.data(), candidate.size(), output.data(), max_len};
    detail::Cursor start;
    auto run = detail::run_inflate(start, target, arena, nullptr);
    auto outcome = detail::finish(start, run, target, options.strict);

    Verdict v;
    v.consumed = outcome.consumed;
    switch (outcome.fail) {
    case detail::Fail::Header: v.status = Status::BadHeader; return v;
    case detail::Fail::Deflate: v.status = Status::BadDeflate; return v;
    case detail::Fail::TooLong: v.status = Status::TooLong; return v;
    case detail::Fail::None: break;
    }
    v.computed = outcome.computed;
    v.stored = outcome.stored;
    if (!outcome.adler_ok) {
        v.status = Status::AdlerMismatch;
        return v;
    }
    v.status = Status::Valid;
    output.resize(outcome.out);
    v.payload = std::move(output);
    return v;
}

} // namespace squashfix::zlib
