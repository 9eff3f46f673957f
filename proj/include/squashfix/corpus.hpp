#pragma once

// Ground-truthed test images: synthetic trees, image building with a
// verified manifest, and seeded bitflip injection.

#include "squashfix/bytes.hpp"
#include "squashfix/squashfs.hpp"
#include "squashfix/squashfs_writer.hpp"

#include <optional>
#include <string>
#include <vector>

namespace squashfix::corpus {

struct TreeOptions {
    std::size_t files = 100;
    std::size_t min_size = 0;
    std::size_t max_size = 20000;
    std::size_t directories = 8;
    double binary_fraction = 0.1; // incompressible files
    double symlink_fraction = 0.0;
};

/// Deterministic synthetic tree. Text files use a seeded vocabulary so they
/// compress roughly 3:1 under DEFLATE.
std::vector<sqfs::TreeEntry> generate_tree(std::uint64_t seed, const TreeOptions& options = {});

/// Text-like bytes of exactly `size` bytes.
Bytes generate_text(std::uint64_t seed, std::size_t size);

/// Reads a directory on disk into tree entries (files, directories, symlinks).
std::vector<sqfs::TreeEntry> tree_from_directory(const std::filesystem::path& root);

struct ManifestPart {
    std::string kind; // block | fragment | sparse
    std::optional<std::size_t> unit;
    std::uint64_t offset = 0;
    std::uint64_t length = 0;
};

struct ManifestFile {
    std::string path;
    std::string kind;
    std::uint64_t size = 0;
    std::string sha256;
    std::string target;
    std::vector<ManifestPart> parts;
};

struct ManifestUnit {
    std::size_t index = 0;
    std::string kind;
    std::uint64_t start = 0;
    std::uint32_t compressed_len = 0;
    std::uint64_t expected_len = 0;
    std::string compressed_sha256;
    std::string payload_sha256;
};

struct Region {
    std::uint64_t start = 0;
    std::uint64_t end = 0;
};

struct Flip {
    std::uint64_t byte = 0;
    unsigned bit = 0;
    auto operator<=>(const Flip&) const = default;
};

struct InjectionRecord {
    std::string prng = "splitmix64-v1";
    std::uint64_t seed = 0;
    std::optional<double> p;                 // Bernoulli injection
    std::optional<unsigned> k;               // exact injection
    std::optional<std::size_t> unit;
    std::vector<Region> regions;
    std::vector<Flip> flips;                 // sorted, unique
    std::optional<bool> still_valid;         // exact injection: oracle accepts the corrupted unit
};

struct Manifest {
    std::uint32_t block_size = 0;
    std::string image_sha256;
    std::vector<ManifestFile> files;
    std::vector<ManifestUnit> units;
    std::vector<InjectionRecord> injections;
};

struct BuiltImage {
    Bytes image;
    Manifest manifest;
};

/// Builds with the internal writer, then re-parses the image and checks every
/// file's content against the input; throws Errc::builder_limit on mismatch.
BuiltImage build_image(const std::vector<sqfs::TreeEntry>& tree, const sqfs::WriterOptions& options = {});

/// Compressed byte ranges of all units.
std::vector<Region> unit_regions(const sqfs::Inventory& inv);

/// Every bit in `regions` flips independently with probability p.
InjectionRecord inject(Bytes& image, double p, std::uint64_t seed, const std::vector<Region>& regions);

/// Exactly k distinct uniformly chosen bits of `unit` flip.
InjectionRecord inject_exact(Bytes& image, unsigned k, const sqfs::Unit& unit, std::uint64_t seed);

void apply_flips(Bytes& image, const std::vector<Flip>& flips);

std::string manifest_to_json(const Manifest& m);
Manifest manifest_from_json(const std::string& text);

} // namespace squashfix::corpus
