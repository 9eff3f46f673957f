// Acceptance suite: prints one PASS/FAIL line per criterion.
// Usage: acceptance [criterion numbers...]

#include "squashfix/bitflip_search.hpp"
#include "squashfix/corpus.hpp"
#include "squashfix/merge.hpp"
#include "squashfix/pipeline.hpp"
#include "squashfix/sha256.hpp"
#include "squashfix/statistics.hpp"
#include "squashfix/zlib_oracle.hpp"
#include "../unit/test_util.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <json.hpp>

#ifndef SQUASHFIX_CLI
#define SQUASHFIX_CLI "squashfix"
#endif

using namespace squashfix;
using namespace testutil;
using nlohmann::json;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string quote(const std::string& s) { return "'" + s + "'"; }

int run(const std::string& cmd) {
    std::fprintf(stderr, "  $ %s\n", cmd.c_str());
    int rc = std::system((cmd + " >/dev/null").c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

int cli(const std::string& args) { return run(quote(SQUASHFIX_CLI) + " " + args); }

struct Node {
    sqfs::InodeKind kind;
    Bytes content;
    std::string target;
    bool operator==(const Node&) const = default;
};

std::map<std::string, Node> tree_map(const std::vector<sqfs::TreeEntry>& tree) {
    std::map<std::string, Node> out;
    for (const auto& e : tree) out[e.path] = {e.kind, e.content, e.target};
    return out;
}

std::map<std::string, Node> disk_map(const fs::path& root) { return tree_map(corpus::tree_from_directory(root)); }

// Implicit parent directories of the input tree appear on disk too.
std::map<std::string, Node> with_parents(std::map<std::string, Node> m) {
    std::vector<std::string> paths;
    for (const auto& [p, n] : m) paths.push_back(p);
    for (auto p : paths)
        for (auto pos = p.rfind('/'); pos != std::string::npos; pos = p.rfind('/')) {
            p.resize(pos);
            m.emplace(p, Node{sqfs::InodeKind::Directory, {}, {}});
        }
    return m;
}

// Ground truth stays within [all_false, all_true] bitwise for every file.
std::size_t g_containment_runs = 0;
std::size_t g_containment_failures = 0;

void check_containment(const std::vector<sqfs::TreeEntry>& tree, const fs::path& out) {
    ++g_containment_runs;
    auto hi = disk_map(out / "all_true"), lo = disk_map(out / "all_false");
    for (const auto& e : tree) {
        if (e.kind != sqfs::InodeKind::File) continue;
        const auto& h = hi[e.path].content;
        const auto& l = lo[e.path].content;
        bool ok = h.size() == e.content.size() && l.size() == e.content.size();
        for (std::size_t i = 0; ok && i < e.content.size(); ++i)
            ok = (e.content[i] & ~h[i]) == 0 && (l[i] & ~e.content[i]) == 0;
        if (!ok) {
            ++g_containment_failures;
            std::fprintf(stderr, "  containment violated: %s\n", e.path.c_str());
        }
    }
}

std::vector<std::size_t> shuffled_units(const sqfs::Inventory& inv, std::uint64_t seed,
                                        std::function<bool(const sqfs::Unit&)> keep) {
    std::vector<std::size_t> idx;
    for (const auto& u : inv.units)
        if (u.is_compressed && keep(u)) idx.push_back(u.index);
    SplitMix64 rng(seed);
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
    return idx;
}

// Injects exactly k flips into `count` distinct units, retrying seeds until the
// oracle rejects each corrupted unit.
std::vector<std::size_t> corrupt_units(Bytes& image, const sqfs::Inventory& inv, const std::vector<std::size_t>& pool,
                                       std::size_t count, unsigned k, std::uint64_t seed) {
    std::vector<std::size_t> chosen;
    for (auto u : pool) {
        if (chosen.size() == count) break;
        for (std::uint64_t s = 0; s < 16; ++s) {
            Bytes trial = image;
            auto rec = corpus::inject_exact(trial, k, inv.units[u], seed * 1000 + u * 16 + s);
            if (*rec.still_valid) continue;
            image = std::move(trial);
            chosen.push_back(u);
            break;
        }
    }
    std::sort(chosen.begin(), chosen.end());
    return chosen;
}

// ---- 1 -------------------------------------------------------------------

Outcome criterion1(const fs::path& dir) {
    auto t0 = Clock::now();
    corpus::TreeOptions to;
    to.files = 120;
    to.min_size = 200;
    to.max_size = 40000;
    to.directories = 6;
    to.binary_fraction = 0.0;
    to.symlink_fraction = 0.05;
    auto tree = corpus::generate_tree(11, to);
    sqfs::WriterOptions wo;
    wo.block_size = 8192;
    auto built = corpus::build_image(tree, wo);
    auto inv = sqfs::build_inventory(built.image);
    std::size_t max_len = 0;
    for (const auto& u : inv.units) max_len = std::max<std::size_t>(max_len, u.compressed_len);

    Bytes image = built.image;
    auto pool = shuffled_units(inv, 11, [](const sqfs::Unit&) { return true; });
    auto corrupted = corrupt_units(image, inv, pool, 20, 1, 11);
    write_file(dir / "c1.img", image);

    auto work = (dir / "c1.work").string(), out = (dir / "c1.out").string(), img = (dir / "c1.img").string();
    int rc = cli("repair " + quote(img) + " --model 1flip --work " + quote(work));
    rc |= cli("merge " + quote(img) + " --work " + quote(work));
    rc |= cli("extract " + quote(img) + " --work " + quote(work) + " --out " + quote(out));
    int report_rc = cli("report " + quote(img) + " --work " + quote(work) + " -o " + quote(out + "/report.json"));

    auto merged = json::parse(slurp(fs::path(work) / "merged.json"));
    std::set<std::size_t> good;
    for (const auto& ju : merged.at("units")) {
        std::size_t u = ju.at("unit");
        const auto& ts = ju.at("targets");
        if (ts.size() == 1 && ts[0].at("sha256") == built.manifest.units[u].payload_sha256) good.insert(u);
    }

    // every file made only of intact or singleton-repaired units must match
    std::set<std::size_t> bad_units(corrupted.begin(), corrupted.end());
    for (auto u : good) bad_units.erase(u);
    auto extracted = disk_map(fs::path(out) / "all_true");
    std::size_t checked = 0, mismatched = 0;
    for (const auto& f : built.manifest.files) {
        if (f.kind != "file") continue;
        bool clean = std::none_of(f.parts.begin(), f.parts.end(),
                                  [&](const auto& p) { return p.unit && bad_units.count(*p.unit); });
        if (!clean) continue;
        ++checked;
        if (sha256_hex(extracted[f.path].content) != f.sha256) ++mismatched;
    }
    check_containment(tree, out);
    double secs = seconds_since(t0);
    Outcome o;
    o.pass = rc == 0 && inv.units.size() >= 50 && max_len <= 8192 && corrupted.size() == 20 && good.size() >= 18 &&
             mismatched == 0 && secs < 300;
    o.detail = fmt("%zu units (max %zu B compressed), %zu corrupted, %zu/20 singleton ground truth, "
                   "%zu/%zu files byte-identical, report exit %d, %.1f s",
                   inv.units.size(), max_len, corrupted.size(), good.size(), checked - mismatched, checked, report_rc,
                   secs);
    return o;
}

// ---- 2 -------------------------------------------------------------------

Bytes stream_of_size(std::size_t target, std::uint64_t seed) {
    std::size_t lo = target / 2, hi = target * 16;
    while (lo < hi) {
        std::size_t mid = (lo + hi) / 2;
        if (zcompress(text_bytes(seed, mid)).size() < target) lo = mid + 1;
        else hi = mid;
    }
    return zcompress(text_bytes(seed, lo));
}

double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) mx += std::log(x[i]), my += std::log(y[i]);
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(x.size());
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
        sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
    }
    return sxy / sxx;
}

Outcome criterion2(const fs::path& dir) {
    auto t0 = Clock::now();
    corpus::TreeOptions to;
    to.files = 60;
    to.min_size = 200;
    to.max_size = 12000;
    to.directories = 4;
    to.binary_fraction = 0.0;
    auto tree = corpus::generate_tree(12, to);
    sqfs::WriterOptions wo;
    wo.block_size = 4096;
    auto built = corpus::build_image(tree, wo);
    auto inv = sqfs::build_inventory(built.image);
    Bytes image = built.image;
    auto pool = shuffled_units(inv, 12, [](const sqfs::Unit& u) { return u.compressed_len <= 2048; });
    auto corrupted = corrupt_units(image, inv, pool, 3, 2, 12);
    auto prepared = pipeline::prepare(image);

    pipeline::RepairConfig rc;
    rc.model = search::Model::TwoFlip;
    auto work1 = dir / "c2.m1";
    pipeline::repair_stage(prepared, rc, work1);
    auto r1 = pipeline::merge_stage(prepared, work1);
    pipeline::extract_stage(prepared, r1, dir / "c2.out");
    check_containment(tree, dir / "c2.out");

    std::size_t exact = 0;
    std::size_t max_len = 0;
    for (const auto& r : r1) {
        max_len = std::max<std::size_t>(max_len, inv.units[r.unit].compressed_len);
        if (r.targets.size() == 1 &&
            sha256_hex(r.targets[0].payload) == built.manifest.units[r.unit].payload_sha256 &&
            r.targets[0].flips.size() == 2)
            ++exact;
    }
    bool tree_ok = disk_map(dir / "c2.out" / "all_true") == with_parents(tree_map(tree));

    auto work8 = dir / "c2.m8";
    for (std::uint32_t i = 0; i < 8; ++i) {
        rc.shard = {i, 8};
        pipeline::repair_stage(prepared, rc, work8);
    }
    auto r8 = pipeline::merge_stage(prepared, work8);
    bool union_ok = r1.size() == r8.size();
    for (std::size_t i = 0; union_ok && i < r1.size(); ++i) {
        union_ok = r1[i].targets.size() == r8[i].targets.size() && r8[i].shards_completed == "8/8";
        for (std::size_t t = 0; union_ok && t < r1[i].targets.size(); ++t)
            union_ok = r1[i].targets[t].flips == r8[i].targets[t].flips &&
                       r1[i].targets[t].payload == r8[i].targets[t].payload;
    }
    double recovery_secs = seconds_since(t0);

    // full-range 2-flip runtime against fragment size
    std::vector<double> sizes, times, costs;
    for (std::size_t n : {256, 512, 1024, 2048}) {
        int reps = n <= 512 ? 3 : 1;
        std::vector<double> ts;
        std::size_t len = 0;
        for (int r = 0; r < reps; ++r) {
            Bytes z = stream_of_size(n, n + static_cast<std::size_t>(r));
            len = z.size();
            flip(z, 8 * (z.size() / 3) + 1);
            flip(z, 8 * (2 * z.size() / 3) + 5);
            auto s = Clock::now();
            search::repair_2flip(z, 131072, z.size(), {0, 1});
            ts.push_back(seconds_since(s));
        }
        std::sort(ts.begin(), ts.end());
        sizes.push_back(static_cast<double>(len));
        times.push_back(ts[ts.size() / 2]);
        costs.push_back(static_cast<double>(search::estimate_cost(len, len, search::Model::TwoFlip).predicted_inflate_bytes));
        std::fprintf(stderr, "  2-flip full range: %zu B in %.3f s\n", len, ts[ts.size() / 2]);
    }
    double slope = fit_slope(sizes, times);
    double cost_slope = fit_slope(sizes, costs);
    double secs = seconds_since(t0);

    Outcome o;
    o.pass = corrupted.size() == 3 && exact == 3 && tree_ok && union_ok && std::abs(slope - 3.0) <= 0.3 &&
             std::abs(cost_slope - 3.0) <= 0.3 && secs < 1800;
    o.detail = fmt("%zu/3 units (max %zu B) recovered exactly, tree %s, shard union m=1 vs m=8 %s (%.1f s); "
                   "runtime slope %.2f, cost-model slope %.2f; total %.1f s",
                   exact, max_len, tree_ok ? "identical" : "differs", union_ok ? "equal" : "differs", recovery_secs,
                   slope, cost_slope, secs);
    return o;
}

// ---- 3 -------------------------------------------------------------------

Outcome criterion3(const fs::path&) {
    double t = stats::hoeffding_t(920, 0.01);
    bool t_ok = t >= 49.3 && t <= 49.5 && std::ceil(t) == 50.0;

    corpus::TreeOptions to;
    to.files = 300;
    to.min_size = 100;
    to.max_size = 20000;
    to.directories = 8;
    to.binary_fraction = 0.0;
    sqfs::WriterOptions wo;
    wo.block_size = 4096;
    auto built = corpus::build_image(corpus::generate_tree(13, to), wo);
    auto inv = sqfs::build_inventory(built.image);
    std::vector<std::uint64_t> lengths;
    for (const auto& u : inv.units) lengths.push_back(u.compressed_len);
    const double n = static_cast<double>(lengths.size());
    const double p_star = 1.5e-5;
    auto regions = corpus::unit_regions(inv);

    int covered = 0;
    const int trials = 1000;
    for (int s = 0; s < trials; ++s) {
        Bytes img = built.image;
        auto rec = corpus::inject(img, p_star, static_cast<std::uint64_t>(s), regions);
        std::set<std::size_t> hit;
        for (const auto& f : rec.flips)
            for (const auto& u : inv.units)
                if (f.byte >= u.start && f.byte < u.start + u.compressed_len) hit.insert(u.index);
        std::uint64_t corrupted = 0;
        for (auto u : hit)
            corrupted += !zlib::check_candidate(sqfs::unit_bytes(img, inv.units[u]), inv.units[u].max_decompressed_len).valid();
        auto est = stats::estimate_with_interval(lengths, corrupted, 0.99);
        covered += est.p_lo <= p_star && p_star <= est.p_hi;
    }

    std::uint64_t max_bits = 8 * *std::max_element(lengths.begin(), lengths.end());
    double mass = 0;
    for (std::uint64_t k = 0; k <= max_bits; ++k) mass += stats::expected_k_flip_count(lengths, p_star, static_cast<unsigned>(k));
    double mass_err = std::abs(mass - n);

    // re-derivation with 920 equal units over the 0x3C20000-byte area, 204 corrupt
    std::vector<std::uint64_t> equal(920, 0x3C20000 / 920);
    double p_bits = stats::estimate_rate(equal, 204, stats::LengthUnit::Bits);
    double p_bytes = stats::estimate_rate(equal, 204, stats::LengthUnit::Bytes);
    const char* pinned = std::abs(std::log(p_bits / 5.03e-7)) < std::abs(std::log(p_bytes / 5.03e-7)) ? "bits" : "bytes";

    Outcome o;
    o.pass = t_ok && covered >= 985 && mass_err < 1e-9;
    o.detail = fmt("hoeffding_t(920,0.01)=%.4f -> %.0f; p*=%.2e covered in %d/%d trials over %zu units; "
                   "sum_k E[k flips]=%.12f (err %.1e); synthetic re-derivation p=%.3e (bits) / %.3e (bytes), "
                   "unit pinned: %s",
                   t, std::ceil(t), p_star, covered, trials, lengths.size(), mass, mass_err, p_bits, p_bytes, pinned);
    return o;
}

// ---- 4 -------------------------------------------------------------------

Outcome criterion4(const fs::path&) {
    Bytes stream;
    Bytes payload;
    for (std::uint64_t seed = 0; seed < 1000 && stream.size() != 256; ++seed) {
        for (std::size_t len = 300; len < 1500; ++len) {
            auto z = zcompress(text_bytes(seed, len));
            if (z.size() == 256) {
                stream = z;
                payload = text_bytes(seed, len);
                break;
            }
            if (z.size() > 256) break;
        }
    }
    bool base_ok = stream.size() == 256 && zlib::check_candidate(stream, 131072).valid();

    std::size_t valid = 0, sound = 0, zlib_valid = 0, agree = 0;
    for (std::uint64_t bit = 0; bit < 8 * stream.size(); ++bit) {
        Bytes c = stream;
        flip(c, bit);
        auto v = zlib::check_candidate(c, 131072);
        auto ref = zinflate(c, 131072);
        zlib_valid += ref.has_value();
        agree += v.valid() == ref.has_value();
        if (!v.valid()) continue;
        ++valid;
        std::uint32_t trailer = load_le32(c.data() + c.size() - 4);
        trailer = __builtin_bswap32(trailer);
        if (ref && *ref == v.payload && naive_adler(v.payload) == trailer) ++sound;
    }

    auto abc = Bytes{'a', 'b', 'c'};
    bool adler_ok = zlib::adler32(Bytes{}) == 0x00000001u && zlib::adler32(Bytes{0x00}) == 0x00010001u &&
                    zlib::adler32(abc) == 0x024D0127u && naive_adler(abc) == 0x024D0127u &&
                    ::adler32(1, abc.data(), 3) == 0x024D0127u;

    Outcome o;
    o.pass = base_ok && sound == valid && adler_ok;
    o.detail = fmt("256-byte stream, 2048 single flips: %zu Valid verdicts, %zu re-verified by reference inflate "
                   "and Adler-32 (reference accepts %zu, agreement %zu/2048); adler32 vectors %s",
                   valid, sound, zlib_valid, agree, adler_ok ? "match" : "differ");
    return o;
}

// ---- 5 -------------------------------------------------------------------

Outcome criterion5(const fs::path& dir) {
    corpus::TreeOptions to;
    to.files = 30;
    to.min_size = 100;
    to.max_size = 20000;
    to.directories = 3;
    to.binary_fraction = 0.0;
    auto tree = corpus::generate_tree(10, to);
    sqfs::WriterOptions wo;
    wo.block_size = 4096;
    auto built = corpus::build_image(tree, wo);
    auto inv = sqfs::build_inventory(built.image);
    Bytes image = built.image;
    corrupt_units(image, inv, shuffled_units(inv, 10, [](const sqfs::Unit&) { return true; }), 8, 1, 10);
    write_file(dir / "c5.img", image);
    pipeline::PipelineConfig cfg;
    cfg.source.path = dir / "c5.img";
    cfg.out = dir / "c5.out";
    pipeline::run_pipeline(cfg);
    check_containment(tree, cfg.out);

    SplitMix64 rng(5);
    std::size_t failures = 0;
    auto random_set = [&](std::size_t n) {
        std::vector<Bytes> ps;
        auto base = random_bytes(rng.next(), n);
        std::size_t count = 1 + rng.below(5);
        for (std::size_t k = 0; k < count; ++k) {
            auto p = base;
            for (std::size_t f = rng.below(6); f > 0; --f) flip(p, rng.below(8 * n));
            ps.push_back(p);
        }
        return ps;
    };
    for (int trial = 0; trial < 1000; ++trial) {
        std::size_t n = 1 + rng.below(128);
        auto sa = random_set(n), sb = random_set(n), sc = random_set(n);
        auto a = merge::merge_targets(sa), b = merge::merge_targets(sb), c = merge::merge_targets(sc);
        bool ok = merge::merge(a, b) == merge::merge(b, a) &&
                  merge::merge(merge::merge(a, b), c) == merge::merge(a, merge::merge(b, c)) &&
                  merge::merge(a, a) == a;
        for (const auto* t : {&a, &b, &c}) {
            auto [hi, lo] = merge::emit_variants(*t);
            std::uint64_t pop = 0;
            for (std::size_t i = 0; i < hi.size(); ++i) pop += static_cast<std::uint64_t>(std::popcount(static_cast<unsigned>(hi[i] ^ lo[i])));
            ok = ok && pop == t->indeterminate_bits();
        }
        auto [hi, lo] = merge::emit_variants(a);
        for (const auto& p : sa)
            for (std::size_t i = 0; i < n; ++i) ok = ok && (p[i] & ~hi[i]) == 0 && (lo[i] & ~p[i]) == 0;
        failures += !ok;
    }
    Outcome o;
    o.pass = failures == 0 && g_containment_runs > 0 && g_containment_failures == 0;
    o.detail = fmt("%zu/1000 random target-set triples violate the merge algebra or popcount identity; "
                   "ground-truth containment held on %zu corpus runs (%zu violations)",
                   failures, g_containment_runs, g_containment_failures);
    return o;
}

// ---- 6 -------------------------------------------------------------------

bool same_targets(const std::vector<search::Target>& a, const std::vector<search::Target>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i].flips != b[i].flips || a[i].payload != b[i].payload) return false;
    return true;
}

Outcome criterion6(const fs::path&) {
    auto t0 = Clock::now();
    SplitMix64 rng(6);
    std::size_t fragments = 0, equal1 = 0, equal2 = 0, brute = 0, nonempty = 0;
    std::size_t max_len = 0;
    while (fragments < 100) {
        auto payload = text_bytes(rng.next(), 40 + rng.below(700));
        auto z = zcompress(payload);
        if (z.size() > 256) continue;
        unsigned k = 1 + static_cast<unsigned>(fragments % 2);
        Bytes c = z;
        for (unsigned i = 0; i < k; ++i) flip(c, rng.below(8 * c.size()));
        if (zlib::check_candidate(c, 131072).valid()) continue;
        ++fragments;
        max_len = std::max(max_len, c.size());

        auto limit = search::prefix_limit(c, 131072);
        auto p1 = search::repair_1flip(c, 131072, limit);
        auto f1 = search::repair_1flip(c, 131072, c.size());
        auto p2 = search::repair_2flip(c, 131072, limit, {0, 1});
        auto f2 = search::repair_2flip(c, 131072, c.size(), {0, 1});
        equal1 += same_targets(p1.targets, f1.targets);
        equal2 += same_targets(p2.targets.targets, f2.targets.targets);
        nonempty += !f2.targets.targets.empty();

        // independent exhaustive single-flip search through zlib
        std::set<Bytes> ref;
        for (std::uint64_t bit = 0; bit < 8 * c.size(); ++bit) {
            Bytes d = c;
            flip(d, bit);
            if (auto out = zinflate(d, 131072)) ref.insert(*out);
        }
        std::set<Bytes> got;
        for (const auto& t : f1.targets) got.insert(t.payload);
        brute += got == ref;
    }
    Outcome o;
    o.pass = equal1 == 100 && equal2 == 100 && brute == 100;
    o.detail = fmt("100 fragments <= %zu B: pruned == full range for 1-flip %zu/100, 2-flip %zu/100 "
                   "(%zu with 2-flip targets); 1-flip == zlib brute force %zu/100; %.1f s",
                   max_len, equal1, equal2, nonempty, brute, seconds_since(t0));
    return o;
}

// ---- 7 -------------------------------------------------------------------

Outcome criterion7(const fs::path& dir) {
    corpus::TreeOptions to;
    to.files = 100;
    to.min_size = 0;
    to.max_size = 300000;
    to.directories = 8;
    to.binary_fraction = 0.2;
    to.symlink_fraction = 0.0;
    auto tree = corpus::generate_tree(14, to);
    for (int i = 0; i < 5; ++i) {
        sqfs::TreeEntry link;
        link.path = "links/l" + std::to_string(i);
        link.kind = sqfs::InodeKind::Symlink;
        link.target = "../" + tree[static_cast<std::size_t>(i) * 7].path;
        tree.push_back(link);
    }
    auto built = corpus::build_image(tree);
    write_file(dir / "c7.img", built.image);
    std::size_t files = 0;
    for (const auto& e : tree) files += e.kind == sqfs::InodeKind::File;

    pipeline::PipelineConfig cfg;
    cfg.source.path = dir / "c7.img";
    cfg.out = dir / "c7.out";
    auto rep = pipeline::run_pipeline(cfg);

    fs::remove_all(dir / "c7.ref");
    int rc = run("python3 -m PySquashfsImage extract -d " + quote((dir / "c7.ref").string()) + " " +
                 quote((dir / "c7.img").string()));
    auto ours = disk_map(dir / "c7.out" / "all_true");
    auto ref = disk_map(dir / "c7.ref" / "squashfs-root");
    std::size_t differ = 0;
    for (const auto& [p, n] : ref)
        if (!ours.count(p) || !(ours[p] == n)) ++differ;
    for (const auto& [p, n] : ours) differ += !ref.count(p);
    auto expect = with_parents(tree_map(tree));
    bool truth = ours == expect;
    for (const auto& [p, n] : expect)
        if (!ours.count(p) || !(ours[p] == n)) std::fprintf(stderr, "  differs from input: %s (%d/%zu/%s vs %d/%zu/%s)\n", p.c_str(), static_cast<int>(n.kind), n.content.size(), n.target.c_str(), ours.count(p) ? static_cast<int>(ours[p].kind) : -1, ours[p].content.size(), ours[p].target.c_str());

    Outcome o;
    o.pass = rc == 0 && rep.exit_code == 0 && files >= 100 && !ref.empty() && differ == 0 && truth;
    o.detail = fmt("%zu files, %zu entries: %zu differ from PySquashfsImage extraction, input tree %s (tool exit %d)",
                   files, ref.size(), differ, truth ? "identical" : "differs", rc);
    return o;
}

// ---- 8 -------------------------------------------------------------------

Outcome criterion8(const fs::path& dir) {
    corpus::TreeOptions to;
    to.files = 40;
    to.min_size = 100;
    to.max_size = 12000;
    to.directories = 4;
    to.binary_fraction = 0.0;
    auto tree = corpus::generate_tree(15, to);
    sqfs::WriterOptions wo;
    wo.block_size = 4096;
    auto built = corpus::build_image(tree, wo);
    auto inv = sqfs::build_inventory(built.image);
    Bytes image = built.image;
    auto small = shuffled_units(inv, 8, [](const sqfs::Unit& u) { return u.compressed_len <= 1024; });
    auto two = corrupt_units(image, inv, small, 1, 2, 8);
    auto pool = shuffled_units(inv, 9, [&](const sqfs::Unit& u) { return two.empty() || u.index != two[0]; });
    auto one = corrupt_units(image, inv, pool, 2, 1, 9);
    write_file(dir / "c8.img", image);

    pipeline::PipelineConfig cfg;
    cfg.source.path = dir / "c8.img";
    cfg.repair.model = search::Model::TwoFlip;
    cfg.out = dir / "c8.a";
    pipeline::run_pipeline(cfg);
    cfg.out = dir / "c8.b";
    pipeline::run_pipeline(cfg);
    auto report_a = slurp(dir / "c8.a" / "report.json");
    bool rerun_ok = report_a == slurp(dir / "c8.b" / "report.json") &&
                    disk_map(dir / "c8.a" / "all_true") == disk_map(dir / "c8.b" / "all_true") &&
                    disk_map(dir / "c8.a" / "all_false") == disk_map(dir / "c8.b" / "all_false");
    check_containment(tree, dir / "c8.a");

    // interrupted 2-flip search, then resumed from its checkpoint
    auto prepared = pipeline::prepare(image);
    auto work = dir / "c8.resume";
    pipeline::RepairConfig rc;
    rc.model = search::Model::TwoFlip;
    rc.checkpoint_dir = work / "checkpoints";
    rc.max_first_positions = 100;
    auto partial = pipeline::repair_stage(prepared, rc, work);
    bool interrupted = std::any_of(partial.begin(), partial.end(),
                                   [](const auto& a) { return a.two_flip_ran && !a.two_flip_complete; });
    rc.max_first_positions = 0;
    pipeline::repair_stage(prepared, rc, work);
    auto results = pipeline::merge_stage(prepared, work);
    auto files = pipeline::extract_stage(prepared, results, dir / "c8.c");
    auto resumed = pipeline::build_report(prepared, results, files);
    bool resume_ok = resumed.json == report_a &&
                     disk_map(dir / "c8.c" / "all_true") == disk_map(dir / "c8.a" / "all_true");

    Outcome o;
    o.pass = two.size() == 1 && one.size() == 2 && rerun_ok && interrupted && resume_ok;
    o.detail = fmt("rerun report %s; 2-flip search interrupted %s, resumed report %s (%zu bytes)",
                   rerun_ok ? "byte-identical" : "differs", interrupted ? "yes" : "no",
                   resume_ok ? "byte-identical" : "differs", report_a.size());
    return o;
}

} // namespace

int main(int argc, char** argv) {
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
    const std::vector<std::pair<const char*, Outcome (*)(const fs::path&)>> criteria{
        {"1-flip round trip", criterion1},
        {"2-flip round trip and cubic cost", criterion2},
        {"statistics", criterion3},
        {"oracle soundness", criterion4},
        {"merge properties", criterion5},
        {"pruning soundness", criterion6},
        {"parser equivalence", criterion7},
        {"determinism and resume", criterion8},
    };
    TempDir dir;
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        int n = static_cast<int>(i + 1);
        if (!only.empty() && !only.count(n)) continue;
        Outcome o;
        try {
            o = criteria[i].second(dir.path);
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("%s %d %s: %s\n", o.pass ? "PASS" : "FAIL", n, criteria[i].first, o.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
