#pragma once

// Read-only SquashFS 4.0 (little endian, gzip) model.
//
// Every independently inflatable zlib unit that holds file data (a full data
// block or a fragment block) is a repair Unit. Metadata blocks are listed
// separately so corrupted inode or directory tables can be routed to the same
// repair engine.

#include "squashfix/bytes.hpp"
#include "squashfix/zlib_oracle.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace squashfix::sqfs {

inline constexpr std::uint32_t kMagic = 0x73717368;
inline constexpr std::uint64_t kNoTable = ~0ull;
inline constexpr std::uint32_t kNoFragment = 0xFFFFFFFFu;
inline constexpr std::uint32_t kUncompressedBlock = 1u << 24;
inline constexpr std::uint16_t kUncompressedMeta = 0x8000;
inline constexpr std::size_t kSuperblockSize = 96;
inline constexpr std::uint16_t kGzip = 1;

struct Superblock {
    std::uint32_t magic = kMagic;
    std::uint32_t inode_count = 0;
    std::uint32_t mod_time = 0;
    std::uint32_t block_size = 0;
    std::uint32_t fragment_entry_count = 0;
    std::uint16_t compression_id = kGzip;
    std::uint16_t block_log = 0;
    std::uint16_t flags = 0;
    std::uint16_t id_count = 0;
    std::uint16_t version_major = 4;
    std::uint16_t version_minor = 0;
    std::uint64_t root_inode_ref = 0;
    std::uint64_t bytes_used = 0;
    std::uint64_t id_table_start = 0;
    std::uint64_t xattr_id_table_start = kNoTable;
    std::uint64_t inode_table_start = 0;
    std::uint64_t directory_table_start = 0;
    std::uint64_t fragment_table_start = kNoTable;
    std::uint64_t export_table_start = kNoTable;
};

Superblock parse_superblock(ByteView image);
Bytes serialize_superblock(const Superblock& sb);

/// One metadata block as stored: header at `offset`, payload follows.
struct MetadataBlock {
    std::uint64_t offset = 0;
    std::uint16_t stored_len = 0;
    bool compressed = true;
    std::uint64_t next() const { return offset + 2 + stored_len; }
};

MetadataBlock read_metadata_header(ByteView image, std::uint64_t offset);

/// Inflated (or copied) payload of one metadata block.
Bytes decode_metadata_block(ByteView image, const MetadataBlock& block);

/// Concatenated payloads of consecutive metadata blocks in [start, end).
Bytes read_metadata_blocks(ByteView image, std::uint64_t start, std::uint64_t end);

/// Headers of consecutive metadata blocks in [start, end), without decoding.
std::vector<MetadataBlock> list_metadata_blocks(ByteView image, std::uint64_t start, std::uint64_t end);

/// Random access into a metadata table by (block offset, offset in block)
/// references, continuing across block boundaries.
class MetadataReader {
public:
    MetadataReader(ByteView image, std::uint64_t table_start, std::uint64_t table_end);

    /// Reads `n` bytes starting at the reference; advances it.
    void read(std::uint64_t& block, std::uint32_t& offset, void* dst, std::size_t n);

private:
    const Bytes& block_at(std::uint64_t block);

    ByteView image_;
    std::uint64_t start_;
    std::uint64_t end_;
    std::map<std::uint64_t, std::pair<Bytes, std::uint64_t>> cache_; // payload, next block
};

struct FragmentEntry {
    std::uint32_t index = 0;
    std::uint64_t start = 0;
    std::uint32_t size_field = 0;
    std::uint32_t compressed_len() const { return size_field & ~kUncompressedBlock; }
    bool is_compressed() const { return (size_field & kUncompressedBlock) == 0; }
};

std::vector<FragmentEntry> load_fragment_table(ByteView image, const Superblock& sb);
std::vector<std::uint32_t> load_id_table(ByteView image, const Superblock& sb);

enum class InodeKind { Directory, File, Symlink, BlockDevice, CharDevice, Fifo, Socket };

std::string_view to_string(InodeKind kind);

enum class PartKind { Block, Fragment, Sparse };

/// A piece of file content: `length` bytes at `offset` of unit `unit`.
struct FilePart {
    PartKind kind = PartKind::Block;
    std::size_t unit = 0; // ignored for Sparse
    std::uint64_t offset = 0;
    std::uint64_t length = 0;
};

struct InodeSummary {
    std::uint32_t inode_number = 0;
    std::uint64_t inode_ref = 0;
    std::string path; // "" for the root, otherwise "a/b/c"
    InodeKind kind = InodeKind::File;
    std::uint16_t mode = 0;
    std::uint32_t uid = 0;
    std::uint32_t gid = 0;
    std::uint32_t mtime = 0;
    std::uint64_t file_size = 0;
    std::string symlink_target;
    std::uint64_t blocks_start = 0;
    std::vector<std::uint32_t> block_sizes;
    std::uint32_t fragment = kNoFragment;
    std::uint32_t fragment_offset = 0;
    std::vector<FilePart> parts; // filled by build_inventory
};

/// Files, directories and other nodes reachable from the root, depth first in
/// name order. Throws Errc::inode_table_unreadable or Errc::directory_cycle.
std::vector<InodeSummary> walk_inodes(ByteView image, const Superblock& sb);

enum class UnitKind { DataBlock, FragmentBlock };
enum class OwnerRole { TailFragment, DataBlock };

std::string_view to_string(UnitKind kind);
std::string_view to_string(OwnerRole role);

struct UnitOwner {
    std::uint32_t inode_number = 0;
    std::string path;
    OwnerRole role = OwnerRole::DataBlock;
    std::uint64_t offset = 0; // inside the decompressed unit
    std::uint64_t length = 0;
};

/// An independently compressed unit of file data.
struct Unit {
    std::size_t index = 0;
    UnitKind kind = UnitKind::DataBlock;
    std::uint32_t fragment_number = kNoFragment; // FragmentBlock only
    std::uint64_t start = 0;
    std::uint32_t compressed_len = 0;
    bool is_compressed = true;
    std::uint64_t max_decompressed_len = 0;
    /// Length implied by inode arithmetic; 0 when nothing references the unit.
    std::uint64_t expected_len = 0;
    std::vector<UnitOwner> owners;
    std::vector<std::string> conflicts;
};

struct Inventory {
    Superblock superblock;
    std::vector<FragmentEntry> fragments;
    std::vector<Unit> units; // ordered by start offset
    std::vector<InodeSummary> inodes;
    std::vector<MetadataBlock> inode_blocks;
    std::vector<MetadataBlock> directory_blocks;
    bool inodes_readable = true;
    std::string inode_error;

    std::size_t data_block_count() const;
    std::size_t fragment_block_count() const;
};

/// End of the directory table: the lowest table that follows it.
std::uint64_t directory_table_end(ByteView image, const Superblock& sb);

/// Parses everything. When the inode or directory table cannot be read the
/// inventory holds the fragment blocks only and inodes_readable is false.
Inventory build_inventory(ByteView image);

ByteView unit_bytes(ByteView image, const Unit& unit);

/// Decompressed content of a unit, or the oracle verdict explaining why not.
zlib::Verdict decode_unit(ByteView image, const Unit& unit, zlib::OracleOptions options = {});

std::string inventory_to_json(const Inventory& inv, ByteView image);

} // namespace squashfix::sqfs
