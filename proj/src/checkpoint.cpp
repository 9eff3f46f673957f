#include "squashfix/checkpoint.hpp"

#include "squashfix/error.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

namespace squashfix::search {

using nlohmann::json;

std::string checkpoint_to_json(const Checkpoint& cp) {
    json hits = json::array();
    for (const auto& h : cp.hits) {
        json flips = json::array();
        for (std::uint8_t k = 0; k < h.count; ++k) flips.push_back(h.pos[k]);
        hits.push_back(std::move(flips));
    }
    json j = {
        {"schema_version", kCheckpointSchema},
        {"fragment", cp.fragment},
        {"fragment_id", cp.fragment_id},
        {"shard", to_string(cp.shard)},
        {"resume_position", cp.resume_position},
        {"complete", cp.complete},
        {"hits", std::move(hits)},
    };
    return j.dump(1) + "\n";
}

Checkpoint checkpoint_from_json(const std::string& text) {
    Checkpoint cp;
    try {
        auto j = json::parse(text);
        if (j.at("schema_version").get<int>() != kCheckpointSchema)
            throw Error(Errc::checkpoint_mismatch, "unsupported checkpoint schema");
        cp.fragment = j.at("fragment").get<std::size_t>();
        cp.fragment_id = j.value("fragment_id", std::string{});
        cp.shard = parse_shard(j.at("shard").get<std::string>());
        cp.resume_position = j.at("resume_position").get<std::uint64_t>();
        cp.complete = j.value("complete", false);
        for (const auto& flips : j.at("hits")) {
            Hit h;
            if (flips.size() < 1 || flips.size() > 2) throw Error(Errc::checkpoint_mismatch, "bad hit in checkpoint");
            h.count = static_cast<std::uint8_t>(flips.size());
            for (std::size_t k = 0; k < flips.size(); ++k) h.pos[k] = flips[k].get<std::uint32_t>();
            cp.hits.push_back(h);
        }
    } catch (const json::exception& e) {
        throw Error(Errc::checkpoint_mismatch, std::string("malformed checkpoint: ") + e.what());
    }
    return cp;
}

std::optional<Checkpoint> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) return std::nullopt;
    std::stringstream ss;
    ss << in.rdbuf();
    return checkpoint_from_json(ss.str());
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& cp) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    write_text_atomic(path, checkpoint_to_json(cp));
}

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::size_t fragment, Shard shard) {
    return dir / ("unit-" + std::to_string(fragment) + ".shard-" + std::to_string(shard.index) + "-of-" +
                  std::to_string(shard.total) + ".json");
}

} // namespace squashfix::search
