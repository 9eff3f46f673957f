#include "squashfix/merge.hpp"

#include "squashfix/error.hpp"

#include <algorithm>
#include <bit>
#include <functional>
#include <json.hpp>

namespace squashfix::merge {

TernaryBuffer::TernaryBuffer(ByteView bytes) : value_(bytes.begin(), bytes.end()), known_(bytes.size(), 0xFF) {}

TernaryBuffer TernaryBuffer::indeterminate(std::size_t length) {
    TernaryBuffer t;
    t.value_.assign(length, 0);
    t.known_.assign(length, 0);
    return t;
}

TernaryBuffer TernaryBuffer::from_parts(Bytes value, Bytes known) {
    if (value.size() != known.size()) throw Error(Errc::length_mismatch, "value and known masks differ in length");
    TernaryBuffer t;
    for (std::size_t i = 0; i < value.size(); ++i) value[i] &= known[i];
    t.value_ = std::move(value);
    t.known_ = std::move(known);
    return t;
}

Trit TernaryBuffer::at(std::size_t bit) const {
    std::uint8_t mask = static_cast<std::uint8_t>(1u << (bit & 7));
    if (!(known_.at(bit >> 3) & mask)) return Trit::X;
    return (value_[bit >> 3] & mask) ? Trit::True : Trit::False;
}

void TernaryBuffer::set(std::size_t bit, Trit t) {
    std::uint8_t mask = static_cast<std::uint8_t>(1u << (bit & 7));
    std::size_t i = bit >> 3;
    value_.at(i) &= static_cast<std::uint8_t>(~mask);
    known_[i] &= static_cast<std::uint8_t>(~mask);
    if (t == Trit::X) return;
    known_[i] |= mask;
    if (t == Trit::True) value_[i] |= mask;
}

std::uint64_t TernaryBuffer::indeterminate_bits() const {
    std::uint64_t n = 0;
    for (auto k : known_) n += static_cast<std::uint64_t>(std::popcount(static_cast<std::uint8_t>(~k)));
    return n;
}

std::uint64_t TernaryBuffer::indeterminate_bytes() const {
    return static_cast<std::uint64_t>(std::count_if(known_.begin(), known_.end(), [](std::uint8_t k) { return k != 0xFF; }));
}

TernaryBuffer TernaryBuffer::slice(std::size_t offset, std::size_t length) const {
    TernaryBuffer t = indeterminate(length);
    if (offset < size()) {
        std::size_t n = std::min(length, size() - offset);
        std::copy_n(value_.begin() + static_cast<std::ptrdiff_t>(offset), n, t.value_.begin());
        std::copy_n(known_.begin() + static_cast<std::ptrdiff_t>(offset), n, t.known_.begin());
    }
    return t;
}

void TernaryBuffer::append(const TernaryBuffer& other) {
    value_.insert(value_.end(), other.value_.begin(), other.value_.end());
    known_.insert(known_.end(), other.known_.begin(), other.known_.end());
}

TernaryBuffer merge(const TernaryBuffer& a, const TernaryBuffer& b) {
    if (a.size() != b.size()) throw Error(Errc::length_mismatch, "cannot merge buffers of different lengths");
    Bytes value(a.size());
    Bytes known(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        std::uint8_t k = a.known()[i] & b.known()[i] & static_cast<std::uint8_t>(~(a.value()[i] ^ b.value()[i]));
        known[i] = k;
        value[i] = a.value()[i] & k;
    }
    return TernaryBuffer::from_parts(std::move(value), std::move(known));
}

TernaryBuffer merge_targets(const std::vector<Bytes>& payloads) {
    if (payloads.empty()) throw Error(Errc::invalid_argument, "nothing to merge");
    const std::size_t n = payloads.front().size();
    Bytes ones(n, 0xFF);  // bits 1 in every payload
    Bytes zeros(n, 0xFF); // bits 0 in every payload
    for (const auto& p : payloads) {
        if (p.size() != n) throw Error(Errc::length_mismatch, "targets differ in length");
        for (std::size_t i = 0; i < n; ++i) {
            ones[i] &= p[i];
            zeros[i] &= static_cast<std::uint8_t>(~p[i]);
        }
    }
    Bytes known(n);
    for (std::size_t i = 0; i < n; ++i) known[i] = ones[i] | zeros[i];
    return TernaryBuffer::from_parts(std::move(ones), std::move(known));
}

std::pair<Bytes, Bytes> emit_variants(const TernaryBuffer& t) {
    Bytes all_true(t.size());
    Bytes all_false(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
        all_false[i] = t.value()[i] & t.known()[i];
        all_true[i] = all_false[i] | static_cast<std::uint8_t>(~t.known()[i]);
    }
    return {std::move(all_true), std::move(all_false)};
}

FilterResult length_filter(search::TargetSet targets, std::uint64_t expected_len) {
    FilterResult r;
    const bool had = !targets.targets.empty();
    std::erase_if(targets.targets, [&](const search::Target& t) { return t.payload.size() != expected_len; });
    r.escalate = had && targets.targets.empty();
    r.targets = std::move(targets);
    return r;
}

std::vector<std::vector<std::uint64_t>> subset_sum_filter(const std::vector<std::vector<std::uint64_t>>& sets,
                                                          std::uint64_t file_size) {
    if (sets.size() > 64) throw Error(Errc::invalid_argument, "at most 64 sets supported");
    std::vector<std::vector<std::uint64_t>> sorted;
    for (const auto& s : sets) {
        if (s.empty()) throw Error(Errc::invalid_argument, "empty length set");
        auto v = s;
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
        sorted.push_back(std::move(v));
    }
    const std::size_t n = sorted.size();
    std::vector<unsigned __int128> min_rest(n + 1, 0), max_rest(n + 1, 0);
    for (std::size_t i = n; i-- > 0;) {
        min_rest[i] = min_rest[i + 1] + sorted[i].front();
        max_rest[i] = max_rest[i + 1] + sorted[i].back();
    }

    std::vector<std::vector<std::uint64_t>> out;
    std::vector<std::uint64_t> cur;
    std::function<void(std::size_t, unsigned __int128)> dfs = [&](std::size_t i, unsigned __int128 sum) {
        if (i == n) {
            if (sum == file_size) out.push_back(cur);
            return;
        }
        for (auto v : sorted[i]) {
            unsigned __int128 s = sum + v;
            if (s + min_rest[i + 1] > file_size) break;
            if (s + max_rest[i + 1] < file_size) continue;
            cur.push_back(v);
            dfs(i + 1, s);
            cur.pop_back();
        }
    };
    dfs(0, 0);
    if (out.empty()) throw Error(Errc::no_admissible_tuple, "no combination of candidate lengths matches the file size");
    return out;
}

IndeterminacyTotals indeterminacy_report(const std::vector<const TernaryBuffer*>& buffers) {
    IndeterminacyTotals t;
    for (const auto* b : buffers) {
        t.total_bytes += b->size();
        t.indeterminate_bits += b->indeterminate_bits();
        t.indeterminate_bytes += b->indeterminate_bytes();
    }
    t.total_bits = 8 * t.total_bytes;
    if (t.total_bits) t.bit_ratio = static_cast<double>(t.indeterminate_bits) / static_cast<double>(t.total_bits);
    if (t.total_bytes) t.byte_ratio = static_cast<double>(t.indeterminate_bytes) / static_cast<double>(t.total_bytes);
    return t;
}

std::string mask_to_json(const TernaryBuffer& t) {
    nlohmann::json runs = nlohmann::json::array();
    const auto& known = t.known();
    std::size_t i = 0;
    while (i < known.size()) {
        if (known[i] == 0xFF) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < known.size() && known[j] != 0xFF) ++j;
        runs.push_back({i, j - i});
        i = j;
    }
    nlohmann::json j = {{"schema_version", 1},
                        {"length", t.size()},
                        {"indeterminate_bits", t.indeterminate_bits()},
                        {"runs", std::move(runs)}};
    return j.dump() + "\n";
}

} // namespace squashfix::merge
