#pragma once

#include "squashfix/bitflip_search.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace squashfix::search {

inline constexpr int kCheckpointSchema = 1;

/// Progress of one (fragment, shard) 2-flip search. Every first-flip position
/// in [shard begin, resume_position) has been fully evaluated.
struct Checkpoint {
    std::size_t fragment = 0;
    std::string fragment_id;
    Shard shard;
    std::uint64_t resume_position = 0;
    bool complete = false;
    std::vector<Hit> hits;
};

std::string checkpoint_to_json(const Checkpoint& cp);
Checkpoint checkpoint_from_json(const std::string& text);

std::optional<Checkpoint> load_checkpoint(const std::filesystem::path& path);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& cp);

/// <dir>/unit-<index>.shard-<i>-of-<m>.json
std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::size_t fragment, Shard shard);

} // namespace squashfix::search
