#pragma once

// Resumable raw-DEFLATE decoder shared by the oracle and the flip search.
//
// The decoder can be started from any recorded Cursor. A cursor captures the
// complete decoder state at a block boundary or between two symbols, so a
// candidate that differs from an already-decoded stream only at bit >= cursor.bit
// can be decoded from that cursor instead of from the beginning. Output bytes
// before cursor.out must already be present in the output buffer.
//
// Input buffers must be followed by kInputPadding readable zero bytes.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <vector>

namespace squashfix::detail {

inline constexpr std::size_t kInputPadding = 8;

struct HuffEntry {
    std::uint16_t value;
    std::uint8_t bits; // code length, or bits examined for invalid entries
    std::uint8_t op;
};

enum : std::uint8_t {
    kOpLiteral = 0x00,
    kOpBase = 0x10, // low nibble: extra bits
    kOpEnd = 0x20,
    kOpLink = 0x40, // low nibble: subtable index bits
    kOpInvalid = 0x80,
};

enum class CodeKind { CodeLengths, LitLen, Dist };

class HuffTable {
public:
    /// Returns false when the code lengths describe an unusable code.
    bool build(const std::uint8_t* lengths, unsigned count, CodeKind kind, unsigned root);

    const HuffEntry* data() const { return entries_.data(); }
    unsigned root_bits() const { return root_; }

private:
    std::vector<HuffEntry> entries_;
    unsigned root_ = 0;
};

struct BlockCodes {
    HuffTable litlen;
    HuffTable dist;
};

const BlockCodes& fixed_codes();

/// Pool of dynamic-block code tables; addresses stay stable until reset().
class CodeArena {
public:
    BlockCodes& acquire() {
        if (used_ == pool_.size()) pool_.emplace_back();
        return pool_[used_++];
    }
    void reset() { used_ = 0; }

private:
    std::deque<BlockCodes> pool_;
    std::size_t used_ = 0;
};

enum class Phase : std::uint8_t { StreamHeader, BlockHeader, Symbols };

struct Cursor {
    std::uint64_t bit = 0;
    std::uint32_t out = 0;
    std::uint32_t adler_a = 1; // Adler-32 state over output[0, out)
    std::uint32_t adler_b = 0;
    const BlockCodes* codes = nullptr;
    Phase phase = Phase::StreamHeader;
    bool last = false;
};

enum class Fail : std::uint8_t { None, Header, Deflate, TooLong };

struct RunResult {
    Fail fail = Fail::None;
    std::size_t consumed = 0;   // bytes the outcome depends on
    std::uint32_t out = 0;      // output bytes written (payload length on success)
    std::size_t trailer = 0;    // byte offset of the Adler-32 trailer on success
};

struct RunTarget {
    const std::uint8_t* in;
    std::size_t len;
    std::uint8_t* out;
    std::size_t max_len;
};

/// Decode from `start`. When `snapshots` is non-null, the start cursor and every
/// later block/symbol boundary are appended to it. Dynamic tables are built in
/// `arena`.
RunResult run_inflate(const Cursor& start, const RunTarget& target, CodeArena& arena,
                      std::vector<Cursor>* snapshots);

/// Continue an Adler-32 state over `data`.
void adler_update(std::uint32_t& a, std::uint32_t& b, const std::uint8_t* data, std::size_t len);

/// Fill adler_a/adler_b of snapshots[first..] from the first entry's state.
void fill_snapshot_adler(std::vector<Cursor>& snapshots, std::size_t first, const std::uint8_t* out);

/// index[b] = last snapshot whose bit <= 8*b, for b in [first_byte, len].
void index_snapshots(const std::vector<Cursor>& snapshots, std::size_t first_byte, std::size_t len,
                     std::vector<std::uint32_t>& index);

/// Outcome of a complete run including the trailer check.
struct Outcome {
    Fail fail = Fail::None;
    bool adler_ok = false;
    std::size_t consumed = 0;
    std::uint32_t out = 0;
    std::uint32_t computed = 0;
    std::uint32_t stored = 0;
};

Outcome finish(const Cursor& start, const RunResult& run, const RunTarget& target, bool strict);

} // namespace squashfix::detail
