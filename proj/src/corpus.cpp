#include "squashfix/corpus.hpp"

#include "squashfix/error.hpp"
#include "squashfix/prng.hpp"
#include "squashfix/sha256.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <set>

namespace squashfix::corpus {

namespace {

constexpr const char* kWords[] = {
    "mov",   "push",  "pop",    "call",   "ret",    "jmp",   "cmp",    "load",    "store", "init",
    "error", "value", "buffer", "device", "config", "debug", "status", "handler", "queue", "timer",
    "flash", "page",  "block",  "offset", "length", "read",  "write",  "sync",    "reset", "power",
    "the",   "and",   "for",    "with",   "from",   "into",  "over",   "under",   "when",  "then",
};

} // namespace

Bytes generate_text(std::uint64_t seed, std::size_t size) {
    SplitMix64 rng(seed);
    Bytes out;
    out.reserve(size + 32);
    char tmp[32];
    while (out.size() < size) {
        std::uint64_t r = rng.below(100);
        if (r < 70) {
            const char* w = kWords[rng.below(std::size(kWords))];
            while (*w) out.push_back(static_cast<std::uint8_t>(*w++));
        } else if (r < 85) {
            int n = std::snprintf(tmp, sizeof tmp, "0x%llx", static_cast<unsigned long long>(rng.below(1u << 20)));
            out.insert(out.end(), tmp, tmp + n);
        } else if (r < 95) {
            int n = std::snprintf(tmp, sizeof tmp, "%llu", static_cast<unsigned long long>(rng.below(100000)));
            out.insert(out.end(), tmp, tmp + n);
        } else {
            out.push_back(static_cast<std::uint8_t>(rng.next()));
        }
        out.push_back(rng.below(8) == 0 ? '\n' : ' ');
    }
    out.resize(size);
    return out;
}

std::vector<sqfs::TreeEntry> generate_tree(std::uint64_t seed, const TreeOptions& options) {
    SplitMix64 rng(seed);
    std::vector<sqfs::TreeEntry> tree;
    std::vector<std::string> dirs{""};
    for (std::size_t i = 0; i < options.directories; ++i) {
        const std::string& parent = dirs[rng.below(dirs.size())];
        std::string name = "dir" + std::to_string(i);
        dirs.push_back(parent.empty() ? name : parent + "/" + name);
        sqfs::TreeEntry d;
        d.kind = sqfs::InodeKind::Directory;
        d.path = dirs.back();
        tree.push_back(std::move(d));
    }
    const std::size_t span = options.max_size >= options.min_size ? options.max_size - options.min_size : 0;
    for (std::size_t i = 0; i < options.files; ++i) {
        const std::string& dir = dirs[rng.below(dirs.size())];
        sqfs::TreeEntry e;
        e.path = (dir.empty() ? "" : dir + "/") + "file" + std::to_string(i);
        if (i > 0 && rng.uniform() < options.symlink_fraction) {
            e.kind = sqfs::InodeKind::Symlink;
            e.target = "/file" + std::to_string(rng.below(i));
            tree.push_back(std::move(e));
            continue;
        }
        std::size_t size = options.min_size + static_cast<std::size_t>(rng.below(span + 1));
        std::uint64_t content_seed = rng.next();
        if (rng.uniform() < options.binary_fraction) {
            SplitMix64 bytes(content_seed);
            e.content.resize(size);
            for (auto& b : e.content) b = static_cast<std::uint8_t>(bytes.next());
        } else {
            e.content = generate_text(content_seed, size);
        }
        tree.push_back(std::move(e));
    }
    return tree;
}

std::vector<sqfs::TreeEntry> tree_from_directory(const std::filesystem::path& root) {
    namespace fs = std::filesystem;
    std::vector<sqfs::TreeEntry> tree;
    std::vector<fs::path> paths;
    for (auto it = fs::recursive_directory_iterator(root); it != fs::recursive_directory_iterator(); ++it)
        paths.push_back(it->path());
    std::sort(paths.begin(), paths.end());
    for (const auto& p : paths) {
        sqfs::TreeEntry e;
        e.path = p.lexically_relative(root).generic_string();
        auto st = fs::symlink_status(p);
        if (fs::is_symlink(st)) {
            e.kind = sqfs::InodeKind::Symlink;
            e.target = fs::read_symlink(p).string();
        } else if (fs::is_directory(st)) {
            e.kind = sqfs::InodeKind::Directory;
        } else if (fs::is_regular_file(st)) {
            e.content = read_file(p);
        } else {
            continue;
        }
        e.mode = static_cast<std::uint16_t>(static_cast<unsigned>(st.permissions()) & 07777);
        tree.push_back(std::move(e));
    }
    return tree;
}

namespace {

const char* part_kind(sqfs::PartKind k) {
    switch (k) {
    case sqfs::PartKind::Block: return "block";
    case sqfs::PartKind::Fragment: return "fragment";
    case sqfs::PartKind::Sparse: return "sparse";
    }
    return "block";
}

} // namespace

BuiltImage build_image(const std::vector<sqfs::TreeEntry>& tree, const sqfs::WriterOptions& options) {
    BuiltImage built;
    built.image = sqfs::write_image(tree, options);
    auto inv = sqfs::build_inventory(built.image);
    if (!inv.inodes_readable) throw Error(Errc::builder_limit, "built image does not parse: " + inv.inode_error);

    std::vector<Bytes> payloads;
    for (const auto& u : inv.units) {
        auto v = sqfs::decode_unit(built.image, u);
        if (!v.valid()) throw Error(Errc::builder_limit, "built unit does not inflate");
        payloads.push_back(std::move(v.payload));
    }

    std::map<std::string, const sqfs::TreeEntry*> by_path;
    for (const auto& e : tree) by_path[e.path] = &e;

    Manifest& m = built.manifest;
    m.block_size = inv.superblock.block_size;
    m.image_sha256 = sha256_hex(built.image);
    for (const auto& n : inv.inodes) {
        if (n.path.empty()) continue;
        ManifestFile f;
        f.path = n.path;
        f.kind = std::string(sqfs::to_string(n.kind));
        auto it = by_path.find(n.path);
        if (n.kind == sqfs::InodeKind::File) {
            Bytes content;
            for (const auto& p : n.parts) {
                ManifestPart mp;
                mp.kind = part_kind(p.kind);
                mp.offset = p.offset;
                mp.length = p.length;
                if (p.kind == sqfs::PartKind::Sparse) {
                    content.insert(content.end(), p.length, 0);
                } else {
                    mp.unit = p.unit;
                    const Bytes& src = payloads[p.unit];
                    if (p.offset + p.length > src.size()) throw Error(Errc::builder_limit, "part outside its unit");
                    content.insert(content.end(), src.begin() + static_cast<std::ptrdiff_t>(p.offset),
                                   src.begin() + static_cast<std::ptrdiff_t>(p.offset + p.length));
                }
                f.parts.push_back(mp);
            }
            if (it == by_path.end() || it->second->content != content)
                throw Error(Errc::builder_limit, "round trip mismatch for " + n.path);
            f.size = content.size();
            f.sha256 = sha256_hex(content);
        } else if (n.kind == sqfs::InodeKind::Symlink) {
            if (it == by_path.end() || it->second->target != n.symlink_target)
                throw Error(Errc::builder_limit, "round trip mismatch for " + n.path);
            f.target = n.symlink_target;
            f.size = n.symlink_target.size();
        }
        m.files.push_back(std::move(f));
    }
    std::size_t expected_nodes = 0;
    for (const auto& e : tree) expected_nodes += e.kind != sqfs::InodeKind::Directory;
    std::size_t got_nodes = 0;
    for (const auto& f : m.files) got_nodes += f.kind != "directory";
    if (got_nodes != expected_nodes) throw Error(Errc::builder_limit, "built image lost entries");

    for (const auto& u : inv.units) {
        ManifestUnit mu;
        mu.index = u.index;
        mu.kind = std::string(sqfs::to_string(u.kind));
        mu.start = u.start;
        mu.compressed_len = u.compressed_len;
        mu.expected_len = u.expected_len;
        mu.compressed_sha256 = sha256_hex(sqfs::unit_bytes(built.image, u));
        mu.payload_sha256 = sha256_hex(payloads[u.index]);
        m.units.push_back(std::move(mu));
    }
    return built;
}

std::vector<Region> unit_regions(const sqfs::Inventory& inv) {
    std::vector<Region> out;
    for (const auto& u : inv.units) out.push_back({u.start, u.start + u.compressed_len});
    return out;
}

void apply_flips(Bytes& image, const std::vector<Flip>& flips) {
    for (const auto& f : flips) {
        if (f.byte >= image.size() || f.bit > 7) throw Error(Errc::invalid_argument, "flip outside the image");
        image[f.byte] ^= static_cast<std::uint8_t>(1u << f.bit);
    }
}

InjectionRecord inject(Bytes& image, double p, std::uint64_t seed, const std::vector<Region>& regions) {
    if (!(p >= 0.0 && p <= 1.0)) throw Error(Errc::invalid_argument, "p must lie in [0, 1]");
    InjectionRecord rec;
    rec.seed = seed;
    rec.p = p;
    rec.regions = regions;
    std::sort(rec.regions.begin(), rec.regions.end(),
              [](const Region& a, const Region& b) { return a.start < b.start; });
    for (std::size_t i = 0; i < rec.regions.size(); ++i) {
        const auto& r = rec.regions[i];
        if (r.start > r.end || r.end > image.size()) throw Error(Errc::invalid_argument, "region outside the image");
        if (i > 0 && r.start < rec.regions[i - 1].end) throw Error(Errc::invalid_argument, "regions overlap");
    }
    SplitMix64 rng(seed);
    std::set<Flip> flips;
    if (p > 0.0) {
        const double log_q = std::log1p(-p);
        for (const auto& r : rec.regions) {
            const std::uint64_t bits = 8 * (r.end - r.start);
            std::uint64_t pos = 0;
            for (;;) {
                // Gap to the next flipped bit is geometric with parameter p.
                std::uint64_t gap = 0;
                if (p < 1.0) {
                    double u = 1.0 - rng.uniform(); // (0, 1]
                    double g = std::floor(std::log(u) / log_q);
                    if (g >= static_cast<double>(bits)) break;
                    gap = static_cast<std::uint64_t>(g);
                }
                if (gap >= bits - pos) break;
                pos += gap;
                std::uint64_t bit = 8 * r.start + pos;
                flips.insert({bit >> 3, static_cast<unsigned>(bit & 7)});
                if (++pos >= bits) break;
            }
        }
    }
    rec.flips.assign(flips.begin(), flips.end());
    apply_flips(image, rec.flips);
    return rec;
}

InjectionRecord inject_exact(Bytes& image, unsigned k, const sqfs::Unit& unit, std::uint64_t seed) {
    if (k == 0) throw Error(Errc::invalid_argument, "k must be at least 1");
    const std::uint64_t bits = 8 * static_cast<std::uint64_t>(unit.compressed_len);
    if (k > bits) throw Error(Errc::invalid_argument, "k exceeds the unit's bit count");
    if (unit.start + unit.compressed_len > image.size()) throw Error(Errc::invalid_argument, "unit outside the image");
    InjectionRecord rec;
    rec.seed = seed;
    rec.k = k;
    rec.unit = unit.index;
    rec.regions = {{unit.start, unit.start + unit.compressed_len}};
    SplitMix64 rng(seed);
    std::set<std::uint64_t> chosen;
    for (std::uint64_t j = bits - k; j < bits; ++j) {
        std::uint64_t t = rng.below(j + 1);
        if (!chosen.insert(t).second) chosen.insert(j);
    }
    for (auto b : chosen) {
        std::uint64_t bit = 8 * unit.start + b;
        rec.flips.push_back({bit >> 3, static_cast<unsigned>(bit & 7)});
    }
    apply_flips(image, rec.flips);
    if (unit.is_compressed) rec.still_valid = sqfs::decode_unit(image, unit).valid();
    return rec;
}

namespace {

using nlohmann::json;

json injection_json(const InjectionRecord& r) {
    json j = {{"prng", r.prng}, {"seed", r.seed}};
    if (r.p) j["p"] = *r.p;
    if (r.k) j["k"] = *r.k;
    if (r.unit) j["unit"] = *r.unit;
    if (r.still_valid) j["still_valid"] = *r.still_valid;
    json regions = json::array();
    for (const auto& g : r.regions) regions.push_back({hex_offset(g.start), hex_offset(g.end)});
    j["regions"] = std::move(regions);
    json flips = json::array();
    for (const auto& f : r.flips) flips.push_back({hex_offset(f.byte), f.bit});
    j["flips"] = std::move(flips);
    return j;
}

InjectionRecord injection_from(const json& j) {
    InjectionRecord r;
    r.prng = j.value("prng", std::string("splitmix64-v1"));
    r.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("p")) r.p = j["p"].get<double>();
    if (j.contains("k")) r.k = j["k"].get<unsigned>();
    if (j.contains("unit")) r.unit = j["unit"].get<std::size_t>();
    if (j.contains("still_valid")) r.still_valid = j["still_valid"].get<bool>();
    for (const auto& g : j.at("regions"))
        r.regions.push_back({parse_offset(g.at(0).get<std::string>()), parse_offset(g.at(1).get<std::string>())});
    for (const auto& f : j.at("flips"))
        r.flips.push_back({parse_offset(f.at(0).get<std::string>()), f.at(1).get<unsigned>()});
    return r;
}

} // namespace

std::string manifest_to_json(const Manifest& m) {
    json files = json::array();
    for (const auto& f : m.files) {
        json jf = {{"path", f.path}, {"kind", f.kind}, {"size", f.size}};
        if (f.kind == "file") {
            jf["sha256"] = f.sha256;
            json parts = json::array();
            for (const auto& p : f.parts) {
                json jp = {{"kind", p.kind}, {"offset", p.offset}, {"length", p.length}};
                if (p.unit) jp["unit"] = *p.unit;
                parts.push_back(std::move(jp));
            }
            jf["parts"] = std::move(parts);
        }
        if (f.kind == "symlink") jf["target"] = f.target;
        files.push_back(std::move(jf));
    }
    json units = json::array();
    for (const auto& u : m.units)
        units.push_back({{"index", u.index},
                         {"kind", u.kind},
                         {"start", hex_offset(u.start)},
                         {"compressed_len", u.compressed_len},
                         {"expected_len", u.expected_len},
                         {"compressed_sha256", u.compressed_sha256},
                         {"payload_sha256", u.payload_sha256}});
    json injections = json::array();
    for (const auto& r : m.injections) injections.push_back(injection_json(r));
    json j = {{"schema_version", 1},
              {"block_size", m.block_size},
              {"image_sha256", m.image_sha256},
              {"files", std::move(files)},
              {"fragments", std::move(units)},
              {"injections", std::move(injections)}};
    return j.dump(1) + "\n";
}

Manifest manifest_from_json(const std::string& text) {
    Manifest m;
    try {
        auto j = json::parse(text);
        if (j.at("schema_version").get<int>() != 1) throw Error(Errc::invalid_argument, "unsupported manifest schema");
        m.block_size = j.at("block_size").get<std::uint32_t>();
        m.image_sha256 = j.value("image_sha256", std::string{});
        for (const auto& jf : j.at("files")) {
            ManifestFile f;
            f.path = jf.at("path").get<std::string>();
            f.kind = jf.at("kind").get<std::string>();
            f.size = jf.value("size", std::uint64_t{0});
            f.sha256 = jf.value("sha256", std::string{});
            f.target = jf.value("target", std::string{});
            if (jf.contains("parts"))
                for (const auto& jp : jf["parts"]) {
                    ManifestPart p;
                    p.kind = jp.at("kind").get<std::string>();
                    p.offset = jp.at("offset").get<std::uint64_t>();
                    p.length = jp.at("length").get<std::uint64_t>();
                    if (jp.contains("unit")) p.unit = jp["unit"].get<std::size_t>();
                    f.parts.push_back(p);
                }
            m.files.push_back(std::move(f));
        }
        for (const auto& ju : j.at("fragments")) {
            ManifestUnit u;
            u.index = ju.at("index").get<std::size_t>();
            u.kind = ju.at("kind").get<std::string>();
            u.start = parse_offset(ju.at("start").get<std::string>());
            u.compressed_len = ju.at("compressed_len").get<std::uint32_t>();
            u.expected_len = ju.at("expected_len").get<std::uint64_t>();
            u.compressed_sha256 = ju.at("compressed_sha256").get<std::string>();
            u.payload_sha256 = ju.at("payload_sha256").get<std::string>();
            m.units.push_back(std::move(u));
        }
        for (const auto& ji : j.at("injections")) m.injections.push_back(injection_from(ji));
    } catch (const json::exception& e) {
        throw Error(Errc::invalid_argument, std::string("malformed manifest: ") + e.what());
    }
    return m;
}

} // namespace squashfix::corpus
