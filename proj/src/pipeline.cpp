#include "squashfix/pipeline.hpp"

#include "squashfix/checkpoint.hpp"
#include "squashfix/error.hpp"
#include "squashfix/sha256.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <map>
#include <set>
#include <sstream>

namespace squashfix::pipeline {

using nlohmann::json;
namespace fs = std::filesystem;

Bytes load_image(const ImageSource& source) {
    if (source.offset == 0 && source.length == 0) return read_file(source.path);
    std::uint64_t length = source.length;
    if (length == 0) {
        std::uint64_t size = fs::file_size(source.path);
        if (source.offset > size) throw Error(Errc::image_too_short, "offset beyond the end of the file");
        length = size - source.offset;
    }
    return read_file_range(source.path, source.offset, length);
}

namespace {

std::vector<std::vector<std::uint32_t>> flips_of(const std::vector<search::Target>& targets) {
    std::vector<std::vector<std::uint32_t>> out;
    for (const auto& t : targets) out.push_back(t.flips);
    return out;
}

std::vector<search::Hit> hits_of(const std::vector<std::vector<std::uint32_t>>& flips) {
    std::vector<search::Hit> out;
    for (const auto& f : flips) {
        if (f.empty() || f.size() > 2) throw Error(Errc::invalid_argument, "flip set must hold one or two positions");
        search::Hit h;
        h.count = static_cast<std::uint8_t>(f.size());
        for (std::size_t k = 0; k < f.size(); ++k) h.pos[k] = f[k];
        out.push_back(h);
    }
    return out;
}

std::size_t limit_of(const zlib::Verdict& v, std::size_t len) { return v.consumed < len ? v.consumed : len; }

void log_line(std::ostream* log, const std::string& line) {
    if (log) *log << line << '\n' << std::flush;
}

void scan_metadata(Prepared& p, const std::string& table, std::uint64_t start, std::uint64_t end,
                   zlib::OracleOptions oracle) {
    std::vector<sqfs::MetadataBlock> blocks;
    try {
        blocks = sqfs::list_metadata_blocks(p.image, start, end);
    } catch (const Error&) {
        return; // reported through the inventory
    }
    for (const auto& b : blocks) {
        if (!b.compressed) continue;
        ByteView payload(p.image.data() + b.offset + 2, b.stored_len);
        auto v = zlib::check_candidate(payload, zlib::kMetadataBlockMax, oracle);
        if (v.valid()) continue;
        MetadataRepair m;
        m.offset = b.offset;
        m.table = table;
        m.status = std::string(zlib::to_string(v.status));
        search::SearchOptions opts;
        opts.oracle = oracle;
        auto ts = search::repair_1flip(payload, zlib::kMetadataBlockMax, limit_of(v, payload.size()), opts);
        m.n_targets = ts.targets.size();
        if (ts.targets.size() == 1) {
            m.flips = ts.targets.front().flips;
            for (auto f : m.flips) p.image[b.offset + 2 + (f >> 3)] ^= static_cast<std::uint8_t>(1u << (f & 7));
            m.repaired = true;
        }
        p.metadata.push_back(std::move(m));
    }
}

} // namespace

Prepared prepare(Bytes image, zlib::OracleOptions oracle) {
    Prepared p;
    p.image = std::move(image);
    auto sb = sqfs::parse_superblock(p.image);
    scan_metadata(p, "inode", sb.inode_table_start, sb.directory_table_start, oracle);
    scan_metadata(p, "directory", sb.directory_table_start, sqfs::directory_table_end(p.image, sb), oracle);
    p.inventory = sqfs::build_inventory(p.image);
    for (const auto& u : p.inventory.units) {
        auto v = sqfs::decode_unit(p.image, u, oracle);
        p.baseline.push_back(std::move(v));
        p.unit_ids.push_back(sha256_hex(sqfs::unit_bytes(p.image, u)));
    }
    return p;
}

// ---- repair stage -------------------------------------------------------

std::string artifact_to_json(const UnitArtifact& a) {
    json j = {{"schema_version", 1},
              {"unit", a.unit},
              {"id", a.id},
              {"baseline", {{"status", a.baseline_status}, {"consumed", a.consumed}}},
              {"prefix_limit", a.prefix_limit},
              {"one_flip", a.one_flip},
              {"two_flip_ran", a.two_flip_ran},
              {"shard", search::to_string(a.shard)},
              {"two_flip_complete", a.two_flip_complete},
              {"resume_position", a.resume_position},
              {"two_flip", a.two_flip},
              {"budget", {{"one_flip", a.budget.one_flip}, {"two_flip", a.budget.two_flip}}}};
    return j.dump(1) + "\n";
}

UnitArtifact artifact_from_json(const std::string& text) {
    UnitArtifact a;
    try {
        auto j = json::parse(text);
        if (j.at("schema_version").get<int>() != 1) throw Error(Errc::invalid_argument, "unsupported artifact schema");
        a.unit = j.at("unit").get<std::size_t>();
        a.id = j.at("id").get<std::string>();
        a.baseline_status = j.at("baseline").at("status").get<std::string>();
        a.consumed = j.at("baseline").at("consumed").get<std::size_t>();
        a.prefix_limit = j.at("prefix_limit").get<std::size_t>();
        a.one_flip = j.at("one_flip").get<std::vector<std::vector<std::uint32_t>>>();
        a.two_flip_ran = j.at("two_flip_ran").get<bool>();
        a.shard = search::parse_shard(j.at("shard").get<std::string>());
        a.two_flip_complete = j.at("two_flip_complete").get<bool>();
        a.resume_position = j.at("resume_position").get<std::uint64_t>();
        a.two_flip = j.at("two_flip").get<std::vector<std::vector<std::uint32_t>>>();
        a.budget.one_flip = j.at("budget").at("one_flip").get<std::uint64_t>();
        a.budget.two_flip = j.at("budget").at("two_flip").get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw Error(Errc::invalid_argument, std::string("malformed repair artifact: ") + e.what());
    }
    return a;
}

fs::path artifact_path(const fs::path& work, std::size_t unit, search::Shard shard) {
    return work / "targets" /
           ("unit-" + std::to_string(unit) + ".shard-" + std::to_string(shard.index) + "-of-" +
            std::to_string(shard.total) + ".json");
}

std::vector<UnitArtifact> repair_stage(const Prepared& prepared, const RepairConfig& config, const fs::path& work) {
    const auto& inv = prepared.inventory;
    std::vector<std::size_t> units;
    if (config.units) {
        units = *config.units;
        for (auto u : units)
            if (u >= inv.units.size()) throw Error(Errc::invalid_argument, "unit index out of range: " + std::to_string(u));
    } else {
        for (const auto& u : inv.units) units.push_back(u.index);
    }

    std::vector<UnitArtifact> out;
    for (auto idx : units) {
        if (!prepared.corrupt(idx)) continue;
        const auto& unit = inv.units[idx];
        const auto& v = prepared.baseline[idx];
        ByteView frag = sqfs::unit_bytes(prepared.image, unit);

        UnitArtifact a;
        a.unit = idx;
        a.id = prepared.unit_ids[idx];
        a.baseline_status = std::string(zlib::to_string(v.status));
        a.consumed = v.consumed;
        a.prefix_limit = limit_of(v, frag.size());
        a.shard = config.shard;

        search::SearchOptions opts;
        opts.jobs = config.jobs;
        opts.oracle = config.oracle;
        auto ts = search::repair_1flip(frag, unit.max_decompressed_len, a.prefix_limit, opts, idx);
        a.one_flip = flips_of(ts.targets);
        a.budget.one_flip = ts.search_budget.one_flip;
        log_line(config.log, "unit " + std::to_string(idx) + " at " + hex_offset(unit.start) + ": " + a.baseline_status +
                                 ", consumed " + std::to_string(a.consumed) + " of " + std::to_string(frag.size()) +
                                 ", 1flip targets " + std::to_string(a.one_flip.size()));

        if (config.model == search::Model::TwoFlip && a.one_flip.empty()) {
            auto cost = search::estimate_cost(frag.size(), a.prefix_limit, search::Model::TwoFlip);
            log_line(config.log, "unit " + std::to_string(idx) + ": 2flip shard " + search::to_string(config.shard) +
                                     ", " + std::to_string(cost.candidates) + " candidates in total");
            if (!config.checkpoint_dir.empty()) {
                opts.checkpoint.path = search::checkpoint_path(config.checkpoint_dir, idx, config.shard);
                opts.checkpoint.fragment_id = a.id;
            }
            opts.max_first_positions = config.max_first_positions;
            auto pr = search::repair_2flip(frag, unit.max_decompressed_len, a.prefix_limit, config.shard, opts, idx);
            a.two_flip_ran = true;
            a.two_flip_complete = pr.complete;
            a.resume_position = pr.resume_position;
            a.two_flip = flips_of(pr.targets.targets);
            a.budget.two_flip = pr.targets.search_budget.two_flip;
            log_line(config.log, "unit " + std::to_string(idx) + ": 2flip targets " + std::to_string(a.two_flip.size()) +
                                     (pr.complete ? "" : " (incomplete)"));
        }
        write_text_atomic(artifact_path(work, idx, config.shard), artifact_to_json(a));
        out.push_back(std::move(a));
    }
    return out;
}

// ---- merge stage --------------------------------------------------------

namespace {

std::vector<UnitArtifact> load_artifacts(const fs::path& work, std::size_t unit) {
    std::vector<UnitArtifact> out;
    fs::path dir = work / "targets";
    if (!fs::is_directory(dir)) return out;
    const std::string prefix = "unit-" + std::to_string(unit) + ".shard-";
    std::vector<fs::path> paths;
    for (const auto& e : fs::directory_iterator(dir)) {
        std::string name = e.path().filename().string();
        if (name.rfind(prefix, 0) == 0 && e.path().extension() == ".json") paths.push_back(e.path());
    }
    std::sort(paths.begin(), paths.end());
    for (const auto& p : paths) {
        std::ifstream in(p);
        std::stringstream ss;
        ss << in.rdbuf();
        out.push_back(artifact_from_json(ss.str()));
    }
    return out;
}

// Lengths admissible for `unit` under every owner's file size.
std::optional<std::set<std::uint64_t>> escalate_lengths(const Prepared& p, std::size_t unit,
                                                        const std::vector<search::Target>& targets) {
    std::set<std::uint64_t> candidate_lengths;
    for (const auto& t : targets) candidate_lengths.insert(t.payload.size());
    std::optional<std::set<std::uint64_t>> admissible;
    for (const auto& node : p.inventory.inodes) {
        if (node.kind != sqfs::InodeKind::File) continue;
        std::vector<std::vector<std::uint64_t>> sets;
        std::vector<std::size_t> positions;
        for (const auto& part : node.parts) {
            if (part.kind == sqfs::PartKind::Block && part.unit == unit) {
                positions.push_back(sets.size());
                sets.emplace_back(candidate_lengths.begin(), candidate_lengths.end());
            } else {
                sets.push_back({part.length});
            }
        }
        if (positions.empty()) continue;
        if (sets.size() > 64) return std::set<std::uint64_t>{};
        std::set<std::uint64_t> ok;
        try {
            for (const auto& tuple : merge::subset_sum_filter(sets, node.file_size)) {
                std::uint64_t v = tuple[positions.front()];
                if (std::all_of(positions.begin(), positions.end(), [&](std::size_t i) { return tuple[i] == v; }))
                    ok.insert(v);
            }
        } catch (const Error& e) {
            if (e.code() != Errc::no_admissible_tuple) throw;
        }
        if (!admissible) {
            admissible = ok;
        } else {
            std::set<std::uint64_t> both;
            std::set_intersection(admissible->begin(), admissible->end(), ok.begin(), ok.end(),
                                  std::inserter(both, both.begin()));
            admissible = both;
        }
    }
    return admissible;
}

void apply_length_filter(const Prepared& p, UnitResult& r, const std::vector<search::Target>& all) {
    const auto& unit = p.inventory.units[r.unit];
    search::TargetSet ts;
    ts.fragment_index = r.unit;
    ts.targets = all;
    if (!p.inventory.inodes_readable || unit.owners.empty()) {
        r.notes.push_back("no inode length constraint");
        r.targets = all;
        return;
    }
    if (!unit.conflicts.empty()) {
        r.notes.push_back("length constraint skipped: owner conflict");
        r.targets = all;
        return;
    }
    r.length_filtered = true;
    auto fr = merge::length_filter(ts, unit.expected_len);
    r.targets = std::move(fr.targets.targets);
    if (!fr.escalate) return;
    r.escalated = true;
    if (unit.kind != sqfs::UnitKind::DataBlock) {
        r.notes.push_back("length filter emptied the target set");
        return;
    }
    auto admissible = escalate_lengths(p, r.unit, all);
    if (!admissible || admissible->empty()) {
        r.notes.push_back("no admissible length tuple");
        return;
    }
    for (const auto& t : all)
        if (admissible->count(t.payload.size())) r.targets.push_back(t);
    r.notes.push_back("kept by subset-sum length filter");
}

UnitResult result_from_hits(const Prepared& p, std::size_t idx, const std::vector<search::Hit>& hits,
                            zlib::OracleOptions oracle) {
    UnitResult r;
    const auto& unit = p.inventory.units[idx];
    const auto& v = p.baseline[idx];
    ByteView frag = sqfs::unit_bytes(p.image, unit);
    r.unit = idx;
    r.id = p.unit_ids[idx];
    r.baseline_status = std::string(zlib::to_string(v.status));
    r.consumed = v.consumed;
    r.prefix_limit = limit_of(v, frag.size());
    auto all = search::materialize(frag, unit.max_decompressed_len, hits, oracle);
    r.n_targets_pre = all.size();
    apply_length_filter(p, r, all);
    r.n_targets_post = r.targets.size();
    return r;
}

} // namespace

std::vector<UnitResult> merge_stage(const Prepared& prepared, const fs::path& work, zlib::OracleOptions oracle) {
    std::vector<UnitResult> results;
    for (const auto& unit : prepared.inventory.units) {
        if (!prepared.corrupt(unit.index)) continue;
        auto artifacts = load_artifacts(work, unit.index);
        const std::string id = prepared.unit_ids[unit.index];
        std::erase_if(artifacts, [&](const UnitArtifact& a) { return a.id != id; });

        std::vector<search::Hit> hits;
        search::SearchBudget budget;
        bool two = false;
        std::map<std::uint32_t, std::map<std::uint32_t, bool>> shards; // total -> index -> complete
        for (const auto& a : artifacts) {
            auto h1 = hits_of(a.one_flip);
            hits.insert(hits.end(), h1.begin(), h1.end());
            budget.one_flip = std::max(budget.one_flip, a.budget.one_flip);
            if (a.two_flip_ran) {
                two = true;
                auto h2 = hits_of(a.two_flip);
                hits.insert(hits.end(), h2.begin(), h2.end());
                budget.two_flip += a.budget.two_flip;
                auto& slot = shards[a.shard.total][a.shard.index];
                slot = slot || a.two_flip_complete;
            }
        }

        UnitResult r = result_from_hits(prepared, unit.index, hits, oracle);
        r.budget = budget;
        if (artifacts.empty()) {
            r.search_complete = false;
            r.notes.push_back("not searched");
        } else if (two) {
            r.model_used = "2flip";
            std::uint32_t best_total = 0;
            std::size_t best_done = 0;
            bool complete = false;
            for (const auto& [total, idx] : shards) {
                std::size_t done = 0;
                for (const auto& [i, c] : idx) done += c;
                if (done == total) complete = true;
                if (best_total == 0 || done * best_total > best_done * total || (done == total && !complete)) {
                    best_total = total;
                    best_done = done;
                }
                if (done == total) {
                    best_total = total;
                    best_done = done;
                    break;
                }
            }
            r.search_complete = complete;
            r.shards_completed = std::to_string(best_done) + "/" + std::to_string(best_total);
        } else {
            r.model_used = "1flip";
        }
        results.push_back(std::move(r));
    }
    write_text_atomic(work / "merged.json", merged_to_json(results));
    return results;
}

std::string merged_to_json(const std::vector<UnitResult>& results) {
    json units = json::array();
    for (const auto& r : results) {
        json targets = json::array();
        for (const auto& t : r.targets)
            targets.push_back({{"flips", t.flips}, {"length", t.payload.size()}, {"sha256", sha256_hex(t.payload)}});
        units.push_back({{"unit", r.unit},
                         {"id", r.id},
                         {"baseline", {{"status", r.baseline_status}, {"consumed", r.consumed}}},
                         {"prefix_limit", r.prefix_limit},
                         {"model_used", r.model_used},
                         {"shards_completed", r.shards_completed},
                         {"search_complete", r.search_complete},
                         {"n_targets_pre", r.n_targets_pre},
                         {"n_targets_post", r.n_targets_post},
                         {"length_filtered", r.length_filtered},
                         {"escalated", r.escalated},
                         {"notes", r.notes},
                         {"budget", {{"one_flip", r.budget.one_flip}, {"two_flip", r.budget.two_flip}}},
                         {"targets", std::move(targets)}});
    }
    json j = {{"schema_version", 1}, {"units", std::move(units)}};
    return j.dump(1) + "\n";
}

std::vector<UnitResult> merged_from_json(const Prepared& prepared, const std::string& text, zlib::OracleOptions oracle) {
    std::vector<UnitResult> out;
    try {
        auto j = json::parse(text);
        if (j.at("schema_version").get<int>() != 1) throw Error(Errc::invalid_argument, "unsupported merge schema");
        for (const auto& ju : j.at("units")) {
            UnitResult r;
            r.unit = ju.at("unit").get<std::size_t>();
            if (r.unit >= prepared.inventory.units.size() || ju.at("id").get<std::string>() != prepared.unit_ids[r.unit])
                throw Error(Errc::invalid_argument, "merge result does not match the image");
            r.id = prepared.unit_ids[r.unit];
            r.baseline_status = ju.at("baseline").at("status").get<std::string>();
            r.consumed = ju.at("baseline").at("consumed").get<std::size_t>();
            r.prefix_limit = ju.at("prefix_limit").get<std::size_t>();
            r.model_used = ju.at("model_used").get<std::string>();
            r.shards_completed = ju.at("shards_completed").get<std::string>();
            r.search_complete = ju.at("search_complete").get<bool>();
            r.n_targets_pre = ju.at("n_targets_pre").get<std::size_t>();
            r.n_targets_post = ju.at("n_targets_post").get<std::size_t>();
            r.length_filtered = ju.at("length_filtered").get<bool>();
            r.escalated = ju.at("escalated").get<bool>();
            r.notes = ju.at("notes").get<std::vector<std::string>>();
            r.budget.one_flip = ju.at("budget").at("one_flip").get<std::uint64_t>();
            r.budget.two_flip = ju.at("budget").at("two_flip").get<std::uint64_t>();
            std::vector<std::vector<std::uint32_t>> flips;
            for (const auto& jt : ju.at("targets")) flips.push_back(jt.at("flips").get<std::vector<std::uint32_t>>());
            const auto& unit = prepared.inventory.units[r.unit];
            r.targets = search::materialize(sqfs::unit_bytes(prepared.image, unit), unit.max_decompressed_len,
                                            hits_of(flips), oracle);
            if (r.targets.size() != flips.size()) throw Error(Errc::invalid_argument, "merge result targets do not verify");
            out.push_back(std::move(r));
        }
    } catch (const json::exception& e) {
        throw Error(Errc::invalid_argument, std::string("malformed merge result: ") + e.what());
    }
    return out;
}

// ---- extract stage ------------------------------------------------------

std::vector<merge::TernaryBuffer> unit_buffers(const Prepared& prepared, const std::vector<UnitResult>& results) {
    std::map<std::size_t, const UnitResult*> by_unit;
    for (const auto& r : results) by_unit[r.unit] = &r;
    std::vector<merge::TernaryBuffer> out;
    for (const auto& unit : prepared.inventory.units) {
        if (!prepared.corrupt(unit.index)) {
            out.emplace_back(prepared.baseline[unit.index].payload);
            continue;
        }
        auto it = by_unit.find(unit.index);
        if (it == by_unit.end() || it->second->targets.empty()) {
            out.push_back(merge::TernaryBuffer::indeterminate(unit.expected_len));
            continue;
        }
        const auto& targets = it->second->targets;
        std::size_t len = 0;
        bool same = true;
        for (const auto& t : targets) {
            same = same && t.payload.size() == targets.front().payload.size();
            len = std::max(len, t.payload.size());
        }
        if (same) {
            std::vector<Bytes> payloads;
            for (const auto& t : targets) payloads.push_back(t.payload);
            out.push_back(merge::merge_targets(payloads));
        } else {
            auto acc = merge::TernaryBuffer(targets.front().payload).slice(0, len);
            for (std::size_t i = 1; i < targets.size(); ++i)
                acc = merge::merge(acc, merge::TernaryBuffer(targets[i].payload).slice(0, len));
            out.push_back(std::move(acc));
        }
    }
    return out;
}

namespace {

void write_variant(const fs::path& root, const std::string& rel, ByteView data) {
    fs::path p = root / rel;
    fs::create_directories(p.parent_path());
    write_file(p, data);
}

} // namespace

std::vector<FileResult> extract_stage(const Prepared& prepared, const std::vector<UnitResult>& results,
                                      const fs::path& out) {
    const auto buffers = unit_buffers(prepared, results);
    const fs::path t_root = out / "all_true";
    const fs::path f_root = out / "all_false";
    const fs::path m_root = out / "masks";
    const bool write = !out.empty();
    if (write) {
        for (const auto& d : {t_root, f_root, m_root}) {
            fs::remove_all(d);
            fs::create_directories(d);
        }
    }

    std::vector<FileResult> files;
    for (const auto& node : prepared.inventory.inodes) {
        if (node.kind == sqfs::InodeKind::Directory) {
            if (write && !node.path.empty()) {
                fs::create_directories(t_root / node.path);
                fs::create_directories(f_root / node.path);
            }
            continue;
        }
        if (node.kind == sqfs::InodeKind::Symlink) {
            if (write) {
                for (const auto& root : {t_root, f_root}) {
                    fs::path p = root / node.path;
                    fs::create_directories(p.parent_path());
                    fs::create_symlink(node.symlink_target, p);
                }
            }
            continue;
        }
        if (node.kind != sqfs::InodeKind::File) continue;

        FileResult fr;
        fr.path = node.path;
        fr.kind = node.kind;
        fr.size = node.file_size;
        merge::TernaryBuffer content;
        for (const auto& part : node.parts) {
            if (part.kind == sqfs::PartKind::Sparse) {
                content.append(merge::TernaryBuffer(Bytes(part.length, 0)));
                fr.baseline_bytes += part.length;
                continue;
            }
            auto slice = buffers[part.unit].slice(part.offset, part.length);
            if (prepared.corrupt(part.unit)) {
                fr.corrupt = true;
                auto it = std::find(fr.corrupt_units.begin(), fr.corrupt_units.end(), part.unit);
                std::size_t k = static_cast<std::size_t>(it - fr.corrupt_units.begin());
                if (it == fr.corrupt_units.end()) {
                    fr.corrupt_units.push_back(part.unit);
                    fr.unit_indeterminate_bits.push_back(0);
                    fr.unit_indeterminate_bytes.push_back(0);
                }
                fr.unit_indeterminate_bits[k] += slice.indeterminate_bits();
                fr.unit_indeterminate_bytes[k] += slice.indeterminate_bytes();
            } else {
                fr.baseline_bytes += part.length;
            }
            content.append(slice);
        }
        fr.indeterminate_bits = content.indeterminate_bits();
        fr.indeterminate_bytes = content.indeterminate_bytes();
        if (write) {
            auto [all_true, all_false] = merge::emit_variants(content);
            write_variant(t_root, node.path, all_true);
            write_variant(f_root, node.path, all_false);
            if (fr.indeterminate_bits) {
                fs::path mp = m_root / (node.path + ".mask.json");
                fs::create_directories(mp.parent_path());
                write_text_atomic(mp, merge::mask_to_json(content));
            }
        }
        files.push_back(std::move(fr));
    }
    return files;
}

// ---- report -------------------------------------------------------------

namespace {

double ratio(std::uint64_t num, std::uint64_t den) {
    return den == 0 ? 1.0 : static_cast<double>(num) / static_cast<double>(den);
}

json rate_block(const stats::RateEstimate& r) {
    json j = {{"p", r.p}, {"p_lo", r.p_lo}, {"p_hi", r.p_hi}, {"t", r.t}, {"confidence", r.confidence}};
    if (r.p > 0) j["bytes_per_flip"] = r.bytes_per_flip;
    if (r.p_hi > 0) j["bytes_per_flip_lo"] = 1.0 / (8.0 * r.p_hi);
    if (r.p_lo > 0) j["bytes_per_flip_hi"] = 1.0 / (8.0 * r.p_lo);
    return j;
}

} // namespace

RepairReport build_report(const Prepared& prepared, const std::vector<UnitResult>& results,
                          const std::vector<FileResult>& files, const ReportOptions& options) {
    const auto& inv = prepared.inventory;
    RepairReport rep;
    json j;
    j["schema_version"] = 1;
    j["image"] = {{"offset", hex_offset(options.image_offset)},
                  {"bytes_used", inv.superblock.bytes_used},
                  {"block_size", inv.superblock.block_size}};

    json meta = json::array();
    bool metadata_ok = true;
    for (const auto& m : prepared.metadata) {
        meta.push_back({{"table", m.table},
                        {"offset", hex_offset(m.offset)},
                        {"status", m.status},
                        {"n_targets", m.n_targets},
                        {"flips", m.flips},
                        {"repaired", m.repaired}});
        metadata_ok = metadata_ok && m.repaired;
    }
    j["metadata_blocks"] = std::move(meta);
    j["inodes_readable"] = inv.inodes_readable;
    if (!inv.inodes_readable) j["inode_error"] = inv.inode_error;

    // Per-unit indeterminacy summed over owning files.
    std::map<std::size_t, std::pair<std::uint64_t, std::uint64_t>> unit_x;
    for (const auto& f : files)
        for (std::size_t k = 0; k < f.corrupt_units.size(); ++k) {
            unit_x[f.corrupt_units[k]].first += f.unit_indeterminate_bits[k];
            unit_x[f.corrupt_units[k]].second += f.unit_indeterminate_bytes[k];
        }
    const auto buffers = unit_buffers(prepared, results);

    bool all_repaired = inv.inodes_readable && metadata_ok;
    json units = json::array();
    std::size_t corrupt_data = 0, corrupt_frag = 0;
    for (const auto& r : results) {
        const auto& unit = inv.units[r.unit];
        (unit.kind == sqfs::UnitKind::DataBlock ? corrupt_data : corrupt_frag)++;
        json targets = json::array();
        for (const auto& t : r.targets) targets.push_back(t.flips);
        const bool ok = r.n_targets_post > 0 && r.search_complete;
        all_repaired = all_repaired && ok;
        rep.repaired_units += ok;
        units.push_back({{"index", r.unit},
                         {"id", r.id},
                         {"kind", sqfs::to_string(unit.kind)},
                         {"start", hex_offset(unit.start)},
                         {"compressed_len", unit.compressed_len},
                         {"expected_len", unit.expected_len},
                         {"baseline", {{"status", r.baseline_status}, {"consumed", r.consumed}}},
                         {"prefix_limit", r.prefix_limit},
                         {"model_used", r.model_used},
                         {"shards_completed", r.shards_completed},
                         {"search_complete", r.search_complete},
                         {"n_targets_pre", r.n_targets_pre},
                         {"n_targets_post", r.n_targets_post},
                         {"escalated", r.escalated},
                         {"notes", r.notes},
                         {"budget", {{"one_flip", r.budget.one_flip}, {"two_flip", r.budget.two_flip}}},
                         {"targets", std::move(targets)},
                         {"unit_indet_bits", buffers[r.unit].indeterminate_bits()},
                         {"unit_indet_bytes", buffers[r.unit].indeterminate_bytes()},
                         {"indet_bits", unit_x[r.unit].first},
                         {"indet_bytes", unit_x[r.unit].second}});
    }
    j["units"] = std::move(units);
    rep.corrupt_units = results.size();

    json jfiles = json::array();
    json appendix = json::array();
    std::uint64_t total_bytes = 0, baseline_bytes = 0, x_bits = 0, x_bytes = 0;
    std::size_t files_corrupt = 0, files_repaired = 0, files_baseline = 0, files_clean_after = 0;
    for (const auto& f : files) {
        total_bytes += f.size;
        baseline_bytes += f.baseline_bytes;
        x_bits += f.indeterminate_bits;
        x_bytes += f.indeterminate_bytes;
        files_corrupt += f.corrupt;
        files_baseline += !f.corrupt;
        files_clean_after += f.indeterminate_bits == 0;
        files_repaired += f.corrupt && f.indeterminate_bits == 0;
        std::string status = !f.corrupt ? "intact" : f.indeterminate_bits == 0 ? "repaired" : "indeterminate";
        json ids = json::array();
        for (auto u : f.corrupt_units) ids.push_back(prepared.unit_ids[u]);
        jfiles.push_back({{"path", "/" + f.path},
                          {"size", f.size},
                          {"status", status},
                          {"corrupt_units", ids},
                          {"indet_bits", f.indeterminate_bits},
                          {"indet_bytes", f.indeterminate_bytes}});
        std::map<std::size_t, std::size_t> n_targets;
        for (const auto& r : results) n_targets[r.unit] = r.n_targets_post;
        for (std::size_t k = 0; k < f.corrupt_units.size(); ++k)
            appendix.push_back({{"file", "/" + f.path},
                                {"fragment_id", prepared.unit_ids[f.corrupt_units[k]]},
                                {"n_targets", n_targets[f.corrupt_units[k]]},
                                {"indet_bits", f.unit_indeterminate_bits[k]},
                                {"indet_bytes", f.unit_indeterminate_bytes[k]}});
    }
    j["files"] = std::move(jfiles);
    j["targets_table"] = std::move(appendix);

    const std::uint64_t total_bits = 8 * total_bytes;
    rep.baseline_bit_ratio = ratio(8 * baseline_bytes, total_bits);
    rep.repaired_bit_ratio = ratio(total_bits - x_bits, total_bits);
    j["ratios"] = {
        {"total", {{"bits", total_bits}, {"bytes", total_bytes}, {"files", files.size()}}},
        {"baseline",
         {{"bits", 8 * baseline_bytes},
          {"bytes", baseline_bytes},
          {"files", files_baseline},
          {"bit_ratio", rep.baseline_bit_ratio},
          {"byte_ratio", ratio(baseline_bytes, total_bytes)},
          {"file_ratio", ratio(files_baseline, files.size())}}},
        {"repaired",
         {{"bits", total_bits - x_bits},
          {"bytes", total_bytes - x_bytes},
          {"files", files_clean_after},
          {"bit_ratio", rep.repaired_bit_ratio},
          {"byte_ratio", ratio(total_bytes - x_bytes, total_bytes)},
          {"file_ratio", ratio(files_clean_after, files.size())}}},
        {"indeterminate", {{"bits", x_bits}, {"bytes", x_bytes}}},
    };

    j["summary"] = {{"files_total", files.size()},
                    {"files_corrupt", files_corrupt},
                    {"files_repaired", files_repaired},
                    {"units_total", inv.units.size()},
                    {"data_blocks", inv.data_block_count()},
                    {"fragment_blocks", inv.fragment_block_count()},
                    {"units_corrupt", results.size()},
                    {"corrupt_data_blocks", corrupt_data},
                    {"corrupt_fragment_blocks", corrupt_frag},
                    {"units_with_targets", rep.repaired_units}};

    std::vector<std::uint64_t> lengths;
    for (const auto& u : inv.units)
        if (u.is_compressed) lengths.push_back(u.compressed_len);
    if (!lengths.empty()) {
        auto h = stats::estimate_with_interval(lengths, results.size(), options.confidence, options.length_unit);
        auto c = stats::chebyshev_interval(lengths, results.size(), options.confidence, options.length_unit);
        json expected = json::array();
        for (unsigned k = 0; k <= 3; ++k)
            expected.push_back(stats::expected_k_flip_count(lengths, h.p, k, options.length_unit));
        j["rate"] = {{"length_unit", stats::to_string(options.length_unit)},
                     {"units", lengths.size()},
                     {"corrupted", results.size()},
                     {"hoeffding", rate_block(h)},
                     {"chebyshev", rate_block(c)},
                     {"expected_counts", std::move(expected)}};
    } else {
        j["rate"] = nullptr;
    }

    rep.exit_code = all_repaired ? 0 : 1;
    j["exit_code"] = rep.exit_code;
    rep.json = j.dump(1) + "\n";
    return rep;
}

std::string report_ratios(const std::string& report_json) {
    auto j = json::parse(report_json);
    const auto& r = j.at("ratios");
    auto cell = [](const json& row, const char* count, const char* rat, std::uint64_t total) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "%llu/%llu (%.2f%%)", static_cast<unsigned long long>(row.at(count).get<std::uint64_t>()),
                      static_cast<unsigned long long>(total), 100.0 * row.at(rat).get<double>());
        return std::string(buf);
    };
    const auto& total = r.at("total");
    std::ostringstream out;
    char line[256];
    std::snprintf(line, sizeof line, "%-10s %-34s %-30s %-20s\n", "", "bits", "bytes", "files");
    out << line;
    for (const char* name : {"baseline", "repaired"}) {
        const auto& row = r.at(name);
        std::snprintf(line, sizeof line, "%-10s %-34s %-30s %-20s\n", name,
                      cell(row, "bits", "bit_ratio", total.at("bits").get<std::uint64_t>()).c_str(),
                      cell(row, "bytes", "byte_ratio", total.at("bytes").get<std::uint64_t>()).c_str(),
                      cell(row, "files", "file_ratio", total.at("files").get<std::uint64_t>()).c_str());
        out << line;
    }
    return out.str();
}

RepairReport run_pipeline(const PipelineConfig& config) {
    Prepared prepared = prepare(load_image(config.source), config.repair.oracle);
    fs::path work = config.work.empty() ? config.out / "work" : config.work;
    repair_stage(prepared, config.repair, work);
    auto results = merge_stage(prepared, work, config.repair.oracle);
    auto files = extract_stage(prepared, results, config.out);
    ReportOptions ro = config.report;
    ro.image_offset = config.source.offset;
    auto report = build_report(prepared, results, files, ro);
    write_text_atomic(config.out / "report.json", report.json);
    return report;
}

} // namespace squashfix::pipeline
