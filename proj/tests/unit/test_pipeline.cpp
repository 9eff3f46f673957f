#include "squashfix/corpus.hpp"
#include "squashfix/error.hpp"
#include "squashfix/pipeline.hpp"
#include "test_util.hpp"

#include <algorithm>
#include <doctest.h>
#include <fstream>
#include <json.hpp>
#include <map>
#include <set>
#include <sstream>

using namespace squashfix;
using namespace testutil;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::map<std::string, Bytes> files_of(const std::vector<sqfs::TreeEntry>& tree) {
    std::map<std::string, Bytes> out;
    for (const auto& e : tree)
        if (e.kind == sqfs::InodeKind::File) out[e.path] = e.content;
    return out;
}

std::map<std::string, Bytes> files_on_disk(const fs::path& root) {
    return files_of(corpus::tree_from_directory(root));
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

corpus::TreeOptions small_tree(std::size_t files) {
    corpus::TreeOptions o;
    o.files = files;
    o.min_size = 100;
    o.max_size = 12000;
    o.directories = 3;
    o.binary_fraction = 0.0;
    return o;
}

sqfs::WriterOptions small_blocks() {
    sqfs::WriterOptions w;
    w.block_size = 4096;
    return w;
}

pipeline::PipelineConfig config_for(const fs::path& image, const fs::path& out) {
    pipeline::PipelineConfig cfg;
    cfg.source.path = image;
    cfg.out = out;
    return cfg;
}

// Every unit of the inventory, smallest compressed length first.
std::vector<std::size_t> units_by_size(const sqfs::Inventory& inv) {
    std::vector<std::size_t> idx;
    for (const auto& u : inv.units)
        if (u.is_compressed) idx.push_back(u.index);
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) {
        return std::pair(inv.units[a].compressed_len, a) < std::pair(inv.units[b].compressed_len, b);
    });
    return idx;
}

} // namespace

TEST_CASE("clean image") {
    TempDir dir;
    auto tree = corpus::generate_tree(1, small_tree(25));
    auto built = corpus::build_image(tree, small_blocks());
    write_file(dir.path / "img", built.image);
    auto rep = pipeline::run_pipeline(config_for(dir.path / "img", dir.path / "out"));
    CHECK(rep.exit_code == 0);
    CHECK(rep.corrupt_units == 0);
    CHECK(rep.baseline_bit_ratio == 1.0);
    CHECK(rep.repaired_bit_ratio == 1.0);
    CHECK(files_on_disk(dir.path / "out" / "all_true") == files_of(tree));
    CHECK(files_on_disk(dir.path / "out" / "all_false") == files_of(tree));
    CHECK(fs::is_empty(dir.path / "out" / "masks"));

    auto table = pipeline::report_ratios(rep.json);
    CHECK(table.find("baseline") != std::string::npos);
    CHECK(table.find("repaired") != std::string::npos);
    CHECK(table.find("(100.00%)") != std::string::npos);
    CHECK(table.find("%)", 0) != std::string::npos);

    auto j = json::parse(rep.json);
    CHECK(j.at("schema_version") == 1);
    CHECK(j.at("summary").at("units_corrupt") == 0);
    CHECK(j.at("ratios").at("baseline").at("file_ratio") == 1.0);
}

TEST_CASE("one flip in each of ten units") {
    TempDir dir;
    auto tree = corpus::generate_tree(2, small_tree(40));
    auto built = corpus::build_image(tree, small_blocks());
    auto inv = sqfs::build_inventory(built.image);
    auto order = units_by_size(inv);
    REQUIRE(order.size() >= 10);
    Bytes img = built.image;
    std::size_t corrupted = 0;
    for (std::size_t i = 0; i < order.size() && corrupted < 10; ++i) {
        Bytes trial = img;
        auto rec = corpus::inject_exact(trial, 1, inv.units[order[i]], 100 + i);
        if (*rec.still_valid) continue;
        img = trial;
        ++corrupted;
    }
    REQUIRE(corrupted == 10);
    write_file(dir.path / "img", img);
    auto rep = pipeline::run_pipeline(config_for(dir.path / "img", dir.path / "out"));
    CHECK(rep.corrupt_units == 10);
    auto j = json::parse(rep.json);
    std::size_t singletons = 0;
    for (const auto& u : j.at("units")) singletons += u.at("n_targets_post") == 1;
    // distinct flips may still yield several payloads; the truth is always one of them
    CHECK(singletons >= 8);
    if (singletons == 10) {
        CHECK(rep.repaired_bit_ratio == 1.0);
        CHECK(files_on_disk(dir.path / "out" / "all_true") == files_of(tree));
    }
    CHECK(rep.exit_code == 0);
    CHECK(rep.repaired_units == 10);

    // ground truth inside every merged file
    auto hi = files_on_disk(dir.path / "out" / "all_true");
    auto lo = files_on_disk(dir.path / "out" / "all_false");
    for (const auto& [path, content] : files_of(tree)) {
        REQUIRE(hi[path].size() == content.size());
        for (std::size_t i = 0; i < content.size(); ++i) {
            REQUIRE((content[i] & ~hi[path][i]) == 0);
            REQUIRE((lo[path][i] & ~content[i]) == 0);
        }
    }
}

TEST_CASE("three flips under the 2-flip model stay unrepaired") {
    TempDir dir;
    auto tree = corpus::generate_tree(3, small_tree(30));
    auto built = corpus::build_image(tree, small_blocks());
    auto inv = sqfs::build_inventory(built.image);
    auto order = units_by_size(inv);
    REQUIRE(!order.empty());
    const auto& victim = inv.units[order.front()];
    CHECK(victim.compressed_len <= 1024);
    Bytes img = built.image;
    auto rec = corpus::inject_exact(img, 3, victim, 7);
    REQUIRE_FALSE(*rec.still_valid);
    write_file(dir.path / "img", img);

    auto cfg = config_for(dir.path / "img", dir.path / "out");
    cfg.repair.model = search::Model::TwoFlip;
    auto rep = pipeline::run_pipeline(cfg);
    CHECK(rep.exit_code != 0);
    CHECK(rep.corrupt_units == 1);
    CHECK(rep.repaired_units == 0);
    auto j = json::parse(rep.json);
    REQUIRE(j.at("units").size() == 1);
    CHECK(j.at("units")[0].at("n_targets_post") == 0);
    CHECK(j.at("units")[0].at("model_used") == "2flip");
    CHECK(j.at("units")[0].at("search_complete") == true);

    // every file not touching the victim is intact
    auto out = files_on_disk(dir.path / "out" / "all_true");
    std::set<std::string> touched;
    for (const auto& o : victim.owners) touched.insert(o.path);
    for (const auto& [path, content] : files_of(tree)) {
        if (touched.count(path)) {
            CHECK(fs::exists(dir.path / "out" / "masks" / (path + ".mask.json")));
            continue;
        }
        CHECK(out[path] == content);
    }
}

TEST_CASE("baseline ratio of 8 readable files out of 100") {
    TempDir dir;
    std::vector<sqfs::TreeEntry> tree;
    for (int i = 0; i < 100; ++i) {
        sqfs::TreeEntry e;
        e.path = "f" + std::to_string(100 + i);
        e.content = corpus::generate_text(static_cast<std::uint64_t>(i), 4096);
        tree.push_back(e);
    }
    auto built = corpus::build_image(tree, small_blocks());
    auto inv = sqfs::build_inventory(built.image);
    REQUIRE(inv.units.size() == 100);
    Bytes img = built.image;
    for (std::size_t u = 8; u < 100; ++u) {
        // corrupt the Adler-32 trailer so the unit always fails
        img[inv.units[u].start + inv.units[u].compressed_len - 1] ^= 0x10;
    }
    auto prepared = pipeline::prepare(img);
    std::vector<pipeline::UnitResult> results = pipeline::merge_stage(prepared, dir.path / "work");
    CHECK(results.size() == 92);
    for (const auto& r : results) CHECK(r.notes.front() == "not searched");
    auto files = pipeline::extract_stage(prepared, results, {});
    auto rep = pipeline::build_report(prepared, results, files);
    CHECK(rep.baseline_bit_ratio == doctest::Approx(0.08));
    auto j = json::parse(rep.json);
    CHECK(j.at("ratios").at("baseline").at("file_ratio") == doctest::Approx(0.08));
    CHECK(j.at("ratios").at("repaired").at("file_ratio") == doctest::Approx(0.08));
    CHECK(rep.exit_code == 1);
}

TEST_CASE("report invariants and determinism") {
    TempDir dir;
    auto tree = corpus::generate_tree(4, small_tree(30));
    auto built = corpus::build_image(tree, small_blocks());
    auto inv = sqfs::build_inventory(built.image);
    Bytes img = built.image;
    auto order = units_by_size(inv);
    corpus::inject_exact(img, 1, inv.units[order[3]], 1);
    corpus::inject_exact(img, 2, inv.units[order[0]], 2);
    write_file(dir.path / "img", img);

    auto cfg = config_for(dir.path / "img", dir.path / "a");
    cfg.repair.model = search::Model::TwoFlip;
    auto first = pipeline::run_pipeline(cfg);
    cfg.out = dir.path / "b";
    auto second = pipeline::run_pipeline(cfg);
    CHECK(first.json == second.json);
    CHECK(files_on_disk(dir.path / "a" / "all_true") == files_on_disk(dir.path / "b" / "all_true"));
    CHECK(files_on_disk(dir.path / "a" / "all_false") == files_on_disk(dir.path / "b" / "all_false"));

    auto j = json::parse(first.json);
    const auto& s = j.at("summary");
    CHECK(s.at("files_repaired").get<int>() <= s.at("files_corrupt").get<int>());
    CHECK(s.at("files_corrupt").get<int>() <= s.at("files_total").get<int>());
    std::uint64_t bytes = 0;
    for (const auto& f : j.at("files")) bytes += f.at("size").get<std::uint64_t>();
    CHECK(j.at("ratios").at("total").at("bits") == 8 * bytes);
    for (const auto* row : {"baseline", "repaired"})
        for (const auto* r : {"bit_ratio", "byte_ratio", "file_ratio"}) {
            double v = j.at("ratios").at(row).at(r);
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    CHECK(j.at("rate").at("corrupted") == 2);
    CHECK(j.at("rate").at("hoeffding").at("p") > 0.0);
    CHECK(j.at("rate").at("expected_counts").size() == 4);
    for (const auto& u : j.at("units")) CHECK(u.at("start").get<std::string>().rfind("0x", 0) == 0);
}

TEST_CASE("stage artifacts round trip") {
    pipeline::UnitArtifact a;
    a.unit = 3;
    a.id = "ff";
    a.baseline_status = "BadDeflate";
    a.consumed = 10;
    a.prefix_limit = 10;
    a.one_flip = {{4}, {9}};
    a.two_flip_ran = true;
    a.shard = {1, 4};
    a.two_flip_complete = true;
    a.resume_position = 80;
    a.two_flip = {{1, 70}};
    a.budget.one_flip = 80;
    a.budget.two_flip = 1234;
    auto text = pipeline::artifact_to_json(a);
    auto b = pipeline::artifact_from_json(text);
    CHECK(pipeline::artifact_to_json(b) == text);
    CHECK(pipeline::artifact_path("w", 3, {1, 4}) == fs::path("w") / "targets" / "unit-3.shard-1-of-4.json");
    CHECK_THROWS_AS(pipeline::artifact_from_json("{}"), Error);
}

TEST_CASE("staged runs match the single-process run") {
    TempDir dir;
    auto tree = corpus::generate_tree(5, small_tree(20));
    auto built = corpus::build_image(tree, small_blocks());
    auto inv = sqfs::build_inventory(built.image);
    Bytes img = built.image;
    auto order = units_by_size(inv);
    corpus::inject_exact(img, 2, inv.units[order[0]], 3);
    corpus::inject_exact(img, 1, inv.units[order[1]], 4);
    write_file(dir.path / "img", img);

    auto cfg = config_for(dir.path / "img", dir.path / "one");
    cfg.repair.model = search::Model::TwoFlip;
    auto whole = pipeline::run_pipeline(cfg);

    // three shards run separately, then merge/extract/report
    auto prepared = pipeline::prepare(pipeline::load_image({dir.path / "img"}));
    auto work = dir.path / "work";
    for (std::uint32_t i = 0; i < 3; ++i) {
        pipeline::RepairConfig rc;
        rc.model = search::Model::TwoFlip;
        rc.shard = {i, 3};
        rc.checkpoint_dir = work / "checkpoints";
        pipeline::repair_stage(prepared, rc, work);
    }
    auto merged = pipeline::merge_stage(prepared, work);
    auto reloaded = pipeline::merged_from_json(prepared, slurp(work / "merged.json"));
    REQUIRE(reloaded.size() == merged.size());
    CHECK(pipeline::merged_to_json(reloaded) == pipeline::merged_to_json(merged));
    auto files = pipeline::extract_stage(prepared, reloaded, dir.path / "staged");
    auto rep = pipeline::build_report(prepared, reloaded, files);

    auto a = json::parse(whole.json), b = json::parse(rep.json);
    CHECK(a.at("files") == b.at("files"));
    CHECK(a.at("ratios") == b.at("ratios"));
    CHECK(a.at("exit_code") == b.at("exit_code"));
    std::size_t two = 0;
    for (std::size_t i = 0; i < a.at("units").size(); ++i) {
        CHECK(a.at("units")[i].at("targets") == b.at("units")[i].at("targets"));
        if (b.at("units")[i].at("model_used") != "2flip") continue;
        ++two;
        CHECK(b.at("units")[i].at("shards_completed") == "3/3");
    }
    CHECK(two >= 1);
    CHECK(files_on_disk(dir.path / "one" / "all_true") == files_on_disk(dir.path / "staged" / "all_true"));
}

TEST_CASE("image inside a larger file") {
    TempDir dir;
    auto tree = corpus::generate_tree(6, small_tree(10));
    auto built = corpus::build_image(tree, small_blocks());
    Bytes outer(0xB60000, 0xFF);
    outer.insert(outer.end(), built.image.begin(), built.image.end());
    outer.insert(outer.end(), 5000, 0xEE);
    write_file(dir.path / "main", outer);
    auto cfg = config_for(dir.path / "main", dir.path / "out");
    cfg.source.offset = 0xB60000;
    cfg.source.length = built.image.size();
    auto rep = pipeline::run_pipeline(cfg);
    CHECK(rep.exit_code == 0);
    CHECK(json::parse(rep.json).at("image").at("offset") == "0xB60000");
    CHECK(files_on_disk(dir.path / "out" / "all_true") == files_of(tree));
    CHECK_THROWS_AS(pipeline::load_image({dir.path / "main", outer.size() + 1, 0}), Error);
}

TEST_CASE("corrupted inode table block is repaired in place") {
    auto tree = corpus::generate_tree(7, small_tree(15));
    auto built = corpus::build_image(tree, small_blocks());
    auto inv = sqfs::build_inventory(built.image);
    REQUIRE(!inv.inode_blocks.empty());
    const auto& b = inv.inode_blocks.front();
    REQUIRE(b.compressed);
    Bytes img = built.image;
    flip(img, 8 * (b.offset + 2 + b.stored_len / 2) + 3);
    auto prepared = pipeline::prepare(img);
    REQUIRE(prepared.metadata.size() == 1);
    CHECK(prepared.metadata[0].table == "inode");
    if (prepared.metadata[0].n_targets == 1) {
        CHECK(prepared.metadata[0].repaired);
        CHECK(prepared.image == built.image);
        CHECK(prepared.inventory.inodes_readable);
    }
}

TEST_CASE("unreadable superblock is fatal") {
    Bytes junk(8192, 0);
    CHECK_THROWS_AS(pipeline::prepare(junk), Error);
}
