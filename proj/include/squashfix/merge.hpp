#pragma once

// Length filtering of target sets and three-valued merging of the survivors.

#include "squashfix/bitflip_search.hpp"
#include "squashfix/bytes.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace squashfix::merge {

enum class Trit : std::uint8_t { False, True, X };

/// Per-bit three-valued buffer. A clear `known` bit marks X; `value` bits
/// under X are kept at zero so equal buffers compare equal.
class TernaryBuffer {
public:
    TernaryBuffer() = default;
    explicit TernaryBuffer(ByteView bytes);
    static TernaryBuffer indeterminate(std::size_t length);
    /// value bits under X are cleared.
    static TernaryBuffer from_parts(Bytes value, Bytes known);

    std::size_t size() const { return value_.size(); }
    Trit at(std::size_t bit) const;
    void set(std::size_t bit, Trit t);

    const Bytes& value() const { return value_; }
    const Bytes& known() const { return known_; }

    std::uint64_t indeterminate_bits() const;
    std::uint64_t indeterminate_bytes() const;

    TernaryBuffer slice(std::size_t offset, std::size_t length) const; // X beyond the end
    void append(const TernaryBuffer& other);

    bool operator==(const TernaryBuffer&) const = default;

private:
    Bytes value_;
    Bytes known_;
};

/// Bitwise merge: known only where both are known and agree. Lengths must match.
TernaryBuffer merge(const TernaryBuffer& a, const TernaryBuffer& b);

/// Three-valued merge of equal-length payloads; throws on empty input or
/// length mismatch.
TernaryBuffer merge_targets(const std::vector<Bytes>& payloads);

/// (all indeterminate bits set, all indeterminate bits clear)
std::pair<Bytes, Bytes> emit_variants(const TernaryBuffer& t);

struct FilterResult {
    search::TargetSet targets;
    bool escalate = false; // a nonempty set was emptied
};

FilterResult length_filter(search::TargetSet targets, std::uint64_t expected_len);

/// Every tuple (one value per set) summing to file_size, lexicographic order.
/// Throws Errc::no_admissible_tuple when there is none.
std::vector<std::vector<std::uint64_t>> subset_sum_filter(const std::vector<std::vector<std::uint64_t>>& sets,
                                                          std::uint64_t file_size);

struct IndeterminacyTotals {
    std::uint64_t total_bits = 0;
    std::uint64_t indeterminate_bits = 0;
    std::uint64_t total_bytes = 0;
    std::uint64_t indeterminate_bytes = 0;
    double bit_ratio = 0.0;
    double byte_ratio = 0.0;
};

IndeterminacyTotals indeterminacy_report(const std::vector<const TernaryBuffer*>& buffers);

/// {"schema_version":1,"length":N,"indeterminate_bits":B,"runs":[[start,len],...]}
/// where runs cover bytes holding at least one X bit.
std::string mask_to_json(const TernaryBuffer& t);

} // namespace squashfix::merge
