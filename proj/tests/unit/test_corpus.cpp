#include "squashfix/bitflip_search.hpp"
#include "squashfix/corpus.hpp"
#include "squashfix/error.hpp"
#include "squashfix/sha256.hpp"
#include "squashfix/zlib_oracle.hpp"
#include "test_util.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <doctest.h>

using namespace squashfix;
using namespace testutil;

namespace {

sqfs::TreeEntry text_file(const std::string& path, std::uint64_t seed, std::size_t n) {
    sqfs::TreeEntry e;
    e.path = path;
    e.content = corpus::generate_text(seed, n);
    return e;
}

} // namespace

TEST_CASE("splitmix64 reference outputs") {
    SplitMix64 rng(0);
    CHECK(rng.next() == 0xE220A8397B1DCDAFull);
    CHECK(rng.next() == 0x6E789E6AA1B965F4ull);
    CHECK(rng.next() == 0x06C45D188009454Full);
}

TEST_CASE("sha256 reference") {
    std::string abc = "abc";
    CHECK(sha256_hex(ByteView(reinterpret_cast<const std::uint8_t*>(abc.data()), abc.size())) ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("generated trees are deterministic") {
    auto a = corpus::generate_tree(5);
    auto b = corpus::generate_tree(5);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].path == b[i].path);
        CHECK(a[i].content == b[i].content);
    }
    auto c = corpus::generate_tree(6);
    bool differ = c.size() != a.size();
    for (std::size_t i = 0; !differ && i < a.size(); ++i) differ = a[i].content != c[i].content;
    CHECK(differ);
    auto t = corpus::generate_text(1, 12345);
    CHECK(t.size() == 12345);
    auto z = zcompress(t);
    CHECK(z.size() * 2 < t.size());
}

TEST_CASE("three small text files") {
    std::vector<sqfs::TreeEntry> tree{text_file("a", 1, 1000), text_file("b", 2, 1000), text_file("c", 3, 1000)};
    auto built = corpus::build_image(tree);
    auto sb = sqfs::parse_superblock(built.image);
    CHECK(sb.fragment_entry_count >= 1);
    CHECK(built.manifest.image_sha256 == sha256_hex(built.image));
    auto nodes = sqfs::walk_inodes(built.image, sb);
    std::size_t files = 0;
    for (const auto& n : nodes) files += n.kind == sqfs::InodeKind::File;
    CHECK(files == 3);
    CHECK(built.manifest.files.size() == 3);
    for (const auto& f : built.manifest.files) CHECK(f.size == 1000);

    auto back = corpus::manifest_from_json(corpus::manifest_to_json(built.manifest));
    CHECK(corpus::manifest_to_json(back) == corpus::manifest_to_json(built.manifest));
    CHECK(back.files.size() == 3);
    CHECK(back.units.size() == built.manifest.units.size());
}

TEST_CASE("empty tree") {
    auto built = corpus::build_image({});
    CHECK(built.manifest.files.empty());
    CHECK(built.manifest.units.empty());
    CHECK_NOTHROW(sqfs::parse_superblock(built.image));
}

TEST_CASE("file of exactly one block") {
    auto built = corpus::build_image({text_file("big", 4, 131072)});
    REQUIRE(built.manifest.units.size() == 1);
    CHECK(built.manifest.units[0].kind == "data_block");
    REQUIRE(built.manifest.files.size() == 1);
    REQUIRE(built.manifest.files[0].parts.size() == 1);
    CHECK(built.manifest.files[0].parts[0].kind == "block");
}

TEST_CASE("manifest hashes match the units") {
    auto built = corpus::build_image(corpus::generate_tree(2, {30, 0, 300000, 4, 0.2, 0.1}));
    auto inv = sqfs::build_inventory(built.image);
    REQUIRE(inv.units.size() == built.manifest.units.size());
    for (const auto& mu : built.manifest.units) {
        const auto& u = inv.units[mu.index];
        CHECK(mu.start == u.start);
        CHECK(mu.compressed_sha256 == sha256_hex(sqfs::unit_bytes(built.image, u)));
        auto v = sqfs::decode_unit(built.image, u);
        REQUIRE(v.valid());
        CHECK(mu.payload_sha256 == sha256_hex(v.payload));
    }
}

TEST_CASE("bernoulli injection extremes") {
    auto built = corpus::build_image(corpus::generate_tree(3, {10, 100, 5000, 2, 0.0, 0.0}));
    auto inv = sqfs::build_inventory(built.image);
    auto regions = corpus::unit_regions(inv);
    std::uint64_t bits = 0;
    for (const auto& r : regions) bits += 8 * (r.end - r.start);

    Bytes img = built.image;
    auto none = corpus::inject(img, 0.0, 1, regions);
    CHECK(none.flips.empty());
    CHECK(img == built.image);

    auto all = corpus::inject(img, 1.0, 1, regions);
    CHECK(all.flips.size() == bits);
    for (const auto& r : regions)
        for (auto i = r.start; i < r.end; ++i) REQUIRE(img[i] == static_cast<std::uint8_t>(~built.image[i]));
    corpus::apply_flips(img, all.flips);
    CHECK(img == built.image);
}

TEST_CASE("bernoulli injection matches binomial moments") {
    const std::uint64_t len = 32ull << 20;
    Bytes img(len, 0);
    std::vector<corpus::Region> regions{{0, len}};
    const double p = 5.03e-7;
    const int seeds = 1000;
    double sum = 0;
    for (int s = 0; s < seeds; ++s) {
        auto rec = corpus::inject(img, p, static_cast<std::uint64_t>(s), regions);
        for (std::size_t i = 1; i < rec.flips.size(); ++i) REQUIRE(rec.flips[i - 1] < rec.flips[i]);
        for (const auto& f : rec.flips) REQUIRE(f.byte < len);
        sum += static_cast<double>(rec.flips.size());
        corpus::apply_flips(img, rec.flips);
    }
    CHECK(std::all_of(img.begin(), img.end(), [](auto b) { return b == 0; }));
    double n = 8.0 * static_cast<double>(len);
    double mean = sum / seeds;
    double sigma = std::sqrt(n * p * (1 - p) / seeds);
    CHECK(std::abs(mean - n * p) < 3 * sigma);
}

TEST_CASE("exact injection") {
    auto built = corpus::build_image(corpus::generate_tree(4, {20, 500, 20000, 3, 0.0, 0.0}));
    auto inv = sqfs::build_inventory(built.image);
    REQUIRE(!inv.units.empty());
    const auto& u = inv.units[0];

    Bytes img = built.image;
    CHECK_THROWS_AS(corpus::inject_exact(img, 0, u, 1), Error);

    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Bytes c = built.image;
        auto rec = corpus::inject_exact(c, 1, u, seed);
        REQUIRE(rec.flips.size() == 1);
        CHECK(rec.flips[0].byte >= u.start);
        CHECK(rec.flips[0].byte < u.start + u.compressed_len);
        REQUIRE(rec.still_valid);
        CHECK(*rec.still_valid == zlib::check_candidate(sqfs::unit_bytes(c, u), u.max_decompressed_len).valid());
    }

    Bytes c = built.image;
    auto rec = corpus::inject_exact(c, 5, u, 99);
    CHECK(rec.flips.size() == 5);
    std::set<corpus::Flip> uniq(rec.flips.begin(), rec.flips.end());
    CHECK(uniq.size() == 5);
    Bytes d = built.image;
    corpus::inject_exact(d, 5, u, 99);
    CHECK(c == d);
}

TEST_CASE("two flips in a 512-byte unit are recovered") {
    // a single small file packs into its own fragment block
    sqfs::TreeEntry e = text_file("f", 8, 1300);
    auto built = corpus::build_image({e});
    auto inv = sqfs::build_inventory(built.image);
    REQUIRE(inv.units.size() == 1);
    const auto& u = inv.units[0];
    CHECK(u.compressed_len <= 700);
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        Bytes img = built.image;
        auto rec = corpus::inject_exact(img, 2, u, seed);
        if (*rec.still_valid) continue;
        auto frag = sqfs::unit_bytes(img, u);
        auto limit = search::prefix_limit(frag, u.max_decompressed_len);
        auto pr = search::repair_2flip(frag, u.max_decompressed_len, limit, {0, 1});
        bool found = false;
        for (const auto& t : pr.targets.targets) found |= t.payload == e.content;
        CHECK(found);
    }
}

TEST_CASE("injection records round trip") {
    auto built = corpus::build_image(corpus::generate_tree(4, {5, 500, 2000, 1, 0.0, 0.0}));
    auto inv = sqfs::build_inventory(built.image);
    Bytes img = built.image;
    built.manifest.injections.push_back(corpus::inject(img, 1e-3, 7, corpus::unit_regions(inv)));
    built.manifest.injections.push_back(corpus::inject_exact(img, 2, inv.units[0], 8));
    auto text = corpus::manifest_to_json(built.manifest);
    auto back = corpus::manifest_from_json(text);
    REQUIRE(back.injections.size() == 2);
    CHECK(back.injections[0].p == 1e-3);
    CHECK(back.injections[0].prng == "splitmix64-v1");
    CHECK(back.injections[1].k == 2u);
    CHECK(back.injections[1].flips == built.manifest.injections[1].flips);
    CHECK(corpus::manifest_to_json(back) == text);
}

TEST_CASE("directory reader keeps symlink paths") {
    TempDir dir;
    std::filesystem::create_directories(dir.path / "d" / "sub");
    write_file(dir.path / "d" / "f", Bytes{1, 2, 3});
    std::filesystem::create_directories(dir.path / "links");
    std::filesystem::create_directory_symlink("../d", dir.path / "links" / "to_dir");
    std::filesystem::create_symlink("../d/f", dir.path / "links" / "to_file");
    auto tree = corpus::tree_from_directory(dir.path);
    std::map<std::string, sqfs::TreeEntry> by_path;
    for (const auto& e : tree) by_path[e.path] = e;
    REQUIRE(by_path.size() == 6);
    CHECK(by_path.at("links/to_dir").kind == sqfs::InodeKind::Symlink);
    CHECK(by_path.at("links/to_dir").target == "../d");
    CHECK(by_path.at("links/to_file").target == "../d/f");
    CHECK(by_path.at("d").kind == sqfs::InodeKind::Directory);
    CHECK(by_path.at("d/f").content == Bytes{1, 2, 3});
}
