#pragma once

// Brute-force repair of a corrupted zlib unit under 1-flip and 2-flip models.
//
// Candidate positions are bit indices into the compressed unit (bit k is bit
// k % 8 of byte k / 8). Every candidate is decoded by resuming a recorded
// decoder state just before the flipped byte, so the per-candidate cost is
// proportional to the tail of the stream after the flip.

#include "squashfix/bytes.hpp"
#include "squashfix/zlib_oracle.hpp"

#include <array>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace squashfix::search {

enum class Model : std::uint8_t { OneFlip = 1, TwoFlip = 2 };

std::string_view to_string(Model model);
Model model_from_string(std::string_view text);

/// One element of the candidate set: the positions flipped in the unit.
struct CandidateSpec {
    std::size_t fragment_index = 0;
    std::vector<std::uint32_t> flip_positions;
};

struct Target {
    std::vector<std::uint32_t> flips; // sorted, distinct
    Bytes payload;
};

struct SearchBudget {
    std::uint64_t one_flip = 0; // candidates evaluated
    std::uint64_t two_flip = 0;
};

struct TargetSet {
    std::size_t fragment_index = 0;
    std::vector<Target> targets; // canonical order by flips, payloads distinct
    SearchBudget search_budget;
    std::size_t prefix_limit = 0; // bytes
};

/// Raw hit collected during a search, before payload deduplication.
struct Hit {
    std::array<std::uint32_t, 2> pos{};
    std::uint8_t count = 0;

    auto operator<=>(const Hit&) const = default;
};

struct Shard {
    std::uint32_t index = 0;
    std::uint32_t total = 1;
};

Shard parse_shard(const std::string& text); // "i/m"
std::string to_string(Shard shard);

struct CheckpointConfig {
    std::filesystem::path path;                       // empty disables checkpointing
    std::chrono::milliseconds flush_interval{10'000};
    std::string fragment_id;                          // recorded for sanity checks
};

struct SearchOptions {
    unsigned jobs = 1;
    zlib::OracleOptions oracle;
    CheckpointConfig checkpoint;
    /// Stop after this many first-flip positions (2-flip only); 0 = unlimited.
    std::uint64_t max_first_positions = 0;
    const std::atomic<bool>* cancel = nullptr;
    std::function<void(std::uint64_t done, std::uint64_t total)> progress;
};

/// Byte count the flips must fall within; throws Errc::already_valid for a valid unit.
std::size_t prefix_limit(ByteView fragment, std::size_t max_len, zlib::OracleOptions options = {});

TargetSet repair_1flip(ByteView fragment, std::size_t max_len, std::size_t limit,
                       const SearchOptions& options = {}, std::size_t fragment_index = 0);

struct PartialResult {
    TargetSet targets;
    bool complete = false;          // every pair of the shard evaluated
    std::uint64_t resume_position = 0;
    std::uint64_t first_begin = 0;  // shard range of first-flip positions
    std::uint64_t first_end = 0;
};

/// Evaluates shard i of m over all flip pairs {a < b} with a < 8*limit.
/// The union of the shards' targets equals the unsharded search.
PartialResult repair_2flip(ByteView fragment, std::size_t max_len, std::size_t limit, Shard shard,
                           const SearchOptions& options = {}, std::size_t fragment_index = 0);

/// Union of shard results, re-deduplicated.
TargetSet merge_partials(ByteView fragment, std::size_t max_len, const std::vector<TargetSet>& parts,
                         zlib::OracleOptions options = {});

/// Turns raw hits into a canonical, payload-deduplicated target list.
std::vector<Target> materialize(ByteView fragment, std::size_t max_len, std::vector<Hit> hits,
                                zlib::OracleOptions options = {});

struct CostEstimate {
    std::uint64_t candidates = 0;
    /// Compressed bytes inflated if every candidate were decoded from scratch.
    std::uint64_t predicted_inflate_bytes = 0;
};

CostEstimate estimate_cost(std::size_t fragment_len, std::size_t limit, Model model);

/// First-flip range [begin, end) for a shard; balanced by pair count.
std::pair<std::uint64_t, std::uint64_t> shard_range(std::size_t fragment_len, std::size_t limit, Shard shard);

} // namespace squashfix::search
