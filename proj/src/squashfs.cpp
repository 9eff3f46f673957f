#include "squashfix/squashfs.hpp"

#include "squashfix/error.hpp"
#include "squashfix/sha256.hpp"

#include <algorithm>
#include <cstring>
#include <functional>
#include <json.hpp>
#include <set>

namespace squashfix::sqfs {

namespace {

void need(ByteView image, std::uint64_t offset, std::uint64_t n, const char* what) {
    if (offset > image.size() || n > image.size() - offset)
        throw Error(Errc::table_out_of_range, std::string(what) + " at " + hex_offset(offset) + " lies outside the image");
}

} // namespace

Superblock parse_superblock(ByteView image) {
    if (image.size() < kSuperblockSize) throw Error(Errc::image_too_short, "image shorter than a superblock");
    const std::uint8_t* p = image.data();
    Superblock sb;
    sb.magic = load_le32(p + 0);
    if (sb.magic != kMagic) throw Error(Errc::bad_magic, "not a SquashFS image (bad magic)");
    sb.inode_count = load_le32(p + 4);
    sb.mod_time = load_le32(p + 8);
    sb.block_size = load_le32(p + 12);
    sb.fragment_entry_count = load_le32(p + 16);
    sb.compression_id = load_le16(p + 20);
    sb.block_log = load_le16(p + 22);
    sb.flags = load_le16(p + 24);
    sb.id_count = load_le16(p + 26);
    sb.version_major = load_le16(p + 28);
    sb.version_minor = load_le16(p + 30);
    sb.root_inode_ref = load_le64(p + 32);
    sb.bytes_used = load_le64(p + 40);
    sb.id_table_start = load_le64(p + 48);
    sb.xattr_id_table_start = load_le64(p + 56);
    sb.inode_table_start = load_le64(p + 64);
    sb.directory_table_start = load_le64(p + 72);
    sb.fragment_table_start = load_le64(p + 80);
    sb.export_table_start = load_le64(p + 88);

    if (sb.block_log >= 32 || sb.block_size != (1u << sb.block_log))
        throw Error(Errc::inconsistent_block_size, "block_size " + std::to_string(sb.block_size) +
                                                       " does not match block_log " + std::to_string(sb.block_log));
    if (sb.block_size < 4096 || sb.block_size > 1048576)
        throw Error(Errc::inconsistent_block_size, "block_size out of range");
    if (sb.version_major != 4 || sb.version_minor != 0)
        throw Error(Errc::unsupported_version, "only SquashFS 4.0 is supported");
    if (sb.compression_id != kGzip)
        throw Error(Errc::unsupported_compressor,
                    "compressor id " + std::to_string(sb.compression_id) + " is not supported (gzip only)");
    if (sb.bytes_used > image.size()) throw Error(Errc::image_too_short, "bytes_used exceeds the image length");
    for (auto [name, off, optional] : {std::tuple{"id table", sb.id_table_start, false},
                                       std::tuple{"inode table", sb.inode_table_start, false},
                                       std::tuple{"directory table", sb.directory_table_start, false},
                                       std::tuple{"fragment table", sb.fragment_table_start, true},
                                       std::tuple{"export table", sb.export_table_start, true},
                                       std::tuple{"xattr table", sb.xattr_id_table_start, true}}) {
        if (optional && off == kNoTable) continue;
        if (off >= sb.bytes_used)
            throw Error(Errc::table_out_of_range, std::string(name) + " start " + hex_offset(off) + " beyond bytes_used");
    }
    return sb;
}

Bytes serialize_superblock(const Superblock& sb) {
    Bytes out;
    out.reserve(kSuperblockSize);
    store_le32(out, sb.magic);
    store_le32(out, sb.inode_count);
    store_le32(out, sb.mod_time);
    store_le32(out, sb.block_size);
    store_le32(out, sb.fragment_entry_count);
    store_le16(out, sb.compression_id);
    store_le16(out, sb.block_log);
    store_le16(out, sb.flags);
    store_le16(out, sb.id_count);
    store_le16(out, sb.version_major);
    store_le16(out, sb.version_minor);
    store_le64(out, sb.root_inode_ref);
    store_le64(out, sb.bytes_used);
    store_le64(out, sb.id_table_start);
    store_le64(out, sb.xattr_id_table_start);
    store_le64(out, sb.inode_table_start);
    store_le64(out, sb.directory_table_start);
    store_le64(out, sb.fragment_table_start);
    store_le64(out, sb.export_table_start);
    return out;
}

MetadataBlock read_metadata_header(ByteView image, std::uint64_t offset) {
    need(image, offset, 2, "metadata block header");
    std::uint16_t h = load_le16(image.data() + offset);
    MetadataBlock b;
    b.offset = offset;
    b.compressed = (h & kUncompressedMeta) == 0;
    b.stored_len = static_cast<std::uint16_t>(h & 0x7FFF);
    if (b.stored_len == 0) throw Error(Errc::metadata_corrupt, "empty metadata block at " + hex_offset(offset));
    need(image, offset + 2, b.stored_len, "metadata block");
    return b;
}

Bytes decode_metadata_block(ByteView image, const MetadataBlock& block) {
    ByteView payload = image.subspan(block.offset + 2, block.stored_len);
    if (!block.compressed) {
        if (payload.size() > zlib::kMetadataBlockMax)
            throw Error(Errc::metadata_too_large, "metadata block at " + hex_offset(block.offset) + " exceeds 8192 bytes");
        return Bytes(payload.begin(), payload.end());
    }
    auto v = zlib::check_candidate(payload, zlib::kMetadataBlockMax);
    if (v.status == zlib::Status::TooLong)
        throw Error(Errc::metadata_too_large, "metadata block at " + hex_offset(block.offset) + " exceeds 8192 bytes");
    if (!v.valid())
        throw Error(Errc::metadata_corrupt, "metadata block at " + hex_offset(block.offset) +
                                                " does not inflate (" + std::string(zlib::to_string(v.status)) + ")");
    return std::move(v.payload);
}

std::vector<MetadataBlock> list_metadata_blocks(ByteView image, std::uint64_t start, std::uint64_t end) {
    std::vector<MetadataBlock> blocks;
    std::uint64_t pos = start;
    while (pos < end) {
        auto b = read_metadata_header(image, pos);
        if (b.next() > end) throw Error(Errc::metadata_corrupt, "metadata block at " + hex_offset(pos) + " overruns its table");
        blocks.push_back(b);
        pos = b.next();
    }
    return blocks;
}

Bytes read_metadata_blocks(ByteView image, std::uint64_t start, std::uint64_t end) {
    Bytes out;
    for (const auto& b : list_metadata_blocks(image, start, end)) {
        auto payload = decode_metadata_block(image, b);
        out.insert(out.end(), payload.begin(), payload.end());
    }
    return out;
}

MetadataReader::MetadataReader(ByteView image, std::uint64_t table_start, std::uint64_t table_end)
    : image_(image), start_(table_start), end_(std::min<std::uint64_t>(table_end, image.size())) {}

const Bytes& MetadataReader::block_at(std::uint64_t block) {
    auto it = cache_.find(block);
    if (it != cache_.end()) return it->second.first;
    if (block > end_ - std::min(end_, start_) || start_ + block >= end_)
        throw Error(Errc::table_out_of_range, "metadata reference " + hex_offset(block) + " outside its table");
    auto header = read_metadata_header(image_, start_ + block);
    auto payload = decode_metadata_block(image_, header);
    auto& slot = cache_[block];
    slot.first = std::move(payload);
    slot.second = header.next() - start_;
    return slot.first;
}

void MetadataReader::read(std::uint64_t& block, std::uint32_t& offset, void* dst, std::size_t n) {
    auto* out = static_cast<std::uint8_t*>(dst);
    while (n > 0) {
        const Bytes& data = block_at(block);
        if (offset >= data.size()) {
            if (offset > data.size())
                throw Error(Errc::table_out_of_range, "metadata offset beyond the end of its block");
            block = cache_[block].second;
            offset = 0;
            continue;
        }
        std::size_t take = std::min<std::size_t>(n, data.size() - offset);
        std::memcpy(out, data.data() + offset, take);
        out += take;
        n -= take;
        offset += static_cast<std::uint32_t>(take);
    }
}

namespace {

// Reads `count` little-endian entries of `entry_size` bytes through an index of
// u64 pointers to metadata blocks.
Bytes read_indexed_table(ByteView image, const Superblock& sb, std::uint64_t index_start, std::uint64_t count,
                         std::size_t entry_size, const char* what) {
    const std::uint64_t bytes = count * entry_size;
    const std::uint64_t blocks = (bytes + zlib::kMetadataBlockMax - 1) / zlib::kMetadataBlockMax;
    need(image, index_start, blocks * 8, what);
    if (index_start + blocks * 8 > sb.bytes_used)
        throw Error(Errc::table_out_of_range, std::string(what) + " index beyond bytes_used");
    Bytes out;
    for (std::uint64_t i = 0; i < blocks; ++i) {
        std::uint64_t ptr = load_le64(image.data() + index_start + 8 * i);
        if (ptr >= sb.bytes_used)
            throw Error(Errc::table_out_of_range, std::string(what) + " block pointer " + hex_offset(ptr) + " out of range");
        auto header = read_metadata_header(image, ptr);
        auto payload = decode_metadata_block(image, header);
        out.insert(out.end(), payload.begin(), payload.end());
    }
    if (out.size() < bytes)
        throw Error(Errc::entry_count_mismatch, std::string(what) + " holds fewer entries than declared");
    out.resize(bytes);
    return out;
}

} // namespace

std::vector<FragmentEntry> load_fragment_table(ByteView image, const Superblock& sb) {
    std::vector<FragmentEntry> out;
    if (sb.fragment_entry_count == 0) return out;
    if (sb.fragment_table_start == kNoTable)
        throw Error(Errc::entry_count_mismatch, "fragment entries declared without a fragment table");
    Bytes raw = read_indexed_table(image, sb, sb.fragment_table_start, sb.fragment_entry_count, 16, "fragment table");
    out.reserve(sb.fragment_entry_count);
    for (std::uint32_t i = 0; i < sb.fragment_entry_count; ++i) {
        FragmentEntry e;
        e.index = i;
        e.start = load_le64(raw.data() + 16 * i);
        e.size_field = load_le32(raw.data() + 16 * i + 8);
        if (e.start < kSuperblockSize || e.start >= sb.bytes_used || e.compressed_len() == 0 ||
            e.compressed_len() > sb.bytes_used - e.start)
            throw Error(Errc::table_out_of_range, "fragment " + std::to_string(i) + " at " + hex_offset(e.start) +
                                                      " lies outside the archive");
        out.push_back(e);
    }
    return out;
}

std::vector<std::uint32_t> load_id_table(ByteView image, const Superblock& sb) {
    std::vector<std::uint32_t> ids;
    if (sb.id_count == 0) return ids;
    Bytes raw = read_indexed_table(image, sb, sb.id_table_start, sb.id_count, 4, "id table");
    for (std::size_t i = 0; i < sb.id_count; ++i) ids.push_back(load_le32(raw.data() + 4 * i));
    return ids;
}

std::string_view to_string(InodeKind kind) {
    switch (kind) {
    case InodeKind::Directory: return "directory";
    case InodeKind::File: return "file";
    case InodeKind::Symlink: return "symlink";
    case InodeKind::BlockDevice: return "block_device";
    case InodeKind::CharDevice: return "char_device";
    case InodeKind::Fifo: return "fifo";
    case InodeKind::Socket: return "socket";
    }
    return "file";
}

std::string_view to_string(UnitKind kind) { return kind == UnitKind::DataBlock ? "data_block" : "fragment_block"; }
std::string_view to_string(OwnerRole role) { return role == OwnerRole::DataBlock ? "data_block" : "tail_fragment"; }

std::uint64_t directory_table_end(ByteView image, const Superblock& sb) {
    std::uint64_t end = sb.bytes_used;
    auto consider = [&](std::uint64_t v) {
        if (v != kNoTable && v > sb.directory_table_start && v < end) end = v;
    };
    auto first_pointer = [&](std::uint64_t index) {
        if (index == kNoTable || index + 8 > image.size()) return;
        consider(load_le64(image.data() + index));
    };
    consider(sb.fragment_table_start);
    consider(sb.export_table_start);
    consider(sb.id_table_start);
    consider(sb.xattr_id_table_start);
    if (sb.fragment_entry_count) first_pointer(sb.fragment_table_start);
    first_pointer(sb.export_table_start);
    if (sb.id_count) first_pointer(sb.id_table_start);
    return end;
}

namespace {

struct RawInode {
    InodeSummary s;
    std::uint64_t dir_block = 0;
    std::uint32_t dir_offset = 0;
    std::uint64_t dir_size = 0; // listing bytes, without the 3 byte bias
    std::uint32_t parent = 0;
};

class InodeParser {
public:
    InodeParser(ByteView image, const Superblock& sb, const std::vector<std::uint32_t>& ids)
        : sb_(sb), ids_(ids), inodes_(image, sb.inode_table_start, sb.directory_table_start),
          dirs_(image, sb.directory_table_start, directory_table_end(image, sb)) {}

    RawInode read_inode(std::uint64_t ref) {
        std::uint64_t block = ref >> 16;
        std::uint32_t offset = static_cast<std::uint32_t>(ref & 0xFFFF);
        std::uint8_t h[16];
        inodes_.read(block, offset, h, sizeof h);
        RawInode r;
        auto& s = r.s;
        s.inode_ref = ref;
        std::uint16_t type = load_le16(h);
        s.mode = load_le16(h + 2);
        s.uid = id(load_le16(h + 4));
        s.gid = id(load_le16(h + 6));
        s.mtime = load_le32(h + 8);
        s.inode_number = load_le32(h + 12);

        auto u16 = [&] {
            std::uint8_t b[2];
            inodes_.read(block, offset, b, 2);
            return load_le16(b);
        };
        auto u32 = [&] {
            std::uint8_t b[4];
            inodes_.read(block, offset, b, 4);
            return load_le32(b);
        };
        auto u64 = [&] {
            std::uint8_t b[8];
            inodes_.read(block, offset, b, 8);
            return load_le64(b);
        };

        switch (type) {
        case 1: {
            s.kind = InodeKind::Directory;
            r.dir_block = u32();
            u32(); // nlink
            std::uint16_t size = u16();
            r.dir_offset = u16();
            r.parent = u32();
            s.file_size = size;
            r.dir_size = size >= 3 ? size - 3u : 0;
            break;
        }
        case 8: {
            s.kind = InodeKind::Directory;
            u32(); // nlink
            std::uint32_t size = u32();
            r.dir_block = u32();
            r.parent = u32();
            std::uint16_t index_count = u16();
            r.dir_offset = u16();
            u32(); // xattr
            for (unsigned i = 0; i < index_count; ++i) {
                u32();
                u32();
                std::uint32_t name = u32();
                if (name > 255) throw Error(Errc::inode_table_unreadable, "bad directory index");
                std::uint8_t skip[256];
                inodes_.read(block, offset, skip, name + 1);
            }
            s.file_size = size;
            r.dir_size = size >= 3 ? size - 3u : 0;
            break;
        }
        case 2:
        case 9: {
            s.kind = InodeKind::File;
            if (type == 2) {
                s.blocks_start = u32();
                s.fragment = u32();
                s.fragment_offset = u32();
                s.file_size = u32();
            } else {
                s.blocks_start = u64();
                s.file_size = u64();
                u64(); // sparse
                u32(); // nlink
                s.fragment = u32();
                s.fragment_offset = u32();
                u32(); // xattr
            }
            std::uint64_t bs = sb_.block_size;
            std::uint64_t n = s.fragment == kNoFragment ? (s.file_size + bs - 1) / bs : s.file_size / bs;
            if (n > (1ull << 28)) throw Error(Errc::inode_table_unreadable, "implausible block count");
            s.block_sizes.resize(n);
            for (auto& b : s.block_sizes) b = u32();
            break;
        }
        case 3:
        case 10: {
            s.kind = InodeKind::Symlink;
            u32(); // nlink
            std::uint32_t size = u32();
            if (size > 65536) throw Error(Errc::inode_table_unreadable, "implausible symlink length");
            s.symlink_target.resize(size);
            inodes_.read(block, offset, s.symlink_target.data(), size);
            s.file_size = size;
            if (type == 10) u32();
            break;
        }
        case 4:
        case 5:
        case 11:
        case 12:
            s.kind = (type == 4 || type == 11) ? InodeKind::BlockDevice : InodeKind::CharDevice;
            u32();
            u32();
            if (type > 7) u32();
            break;
        case 6:
        case 7:
        case 13:
        case 14:
            s.kind = (type == 6 || type == 13) ? InodeKind::Fifo : InodeKind::Socket;
            u32();
            if (type > 7) u32();
            break;
        default:
            throw Error(Errc::inode_table_unreadable, "unknown inode type " + std::to_string(type));
        }
        return r;
    }

    struct Entry {
        std::string name;
        std::uint64_t ref;
        std::uint16_t type;
    };

    std::vector<Entry> read_listing(const RawInode& dir) {
        std::vector<Entry> entries;
        std::uint64_t block = dir.dir_block;
        std::uint32_t offset = dir.dir_offset;
        std::uint64_t remaining = dir.dir_size;
        while (remaining > 0) {
            if (remaining < 12) throw Error(Errc::inode_table_unreadable, "truncated directory header");
            std::uint8_t h[12];
            dirs_.read(block, offset, h, 12);
            remaining -= 12;
            std::uint32_t count = load_le32(h) + 1;
            std::uint32_t start = load_le32(h + 4);
            if (count > 256) throw Error(Errc::inode_table_unreadable, "directory header count too large");
            for (std::uint32_t i = 0; i < count; ++i) {
                if (remaining < 8) throw Error(Errc::inode_table_unreadable, "truncated directory entry");
                std::uint8_t e[8];
                dirs_.read(block, offset, e, 8);
                std::size_t name_size = load_le16(e + 6) + 1u;
                if (remaining < 8 + name_size) throw Error(Errc::inode_table_unreadable, "truncated directory entry");
                std::string name(name_size, '\0');
                dirs_.read(block, offset, name.data(), name_size);
                remaining -= 8 + name_size;
                if (name == "." || name == ".." || name.find('/') != std::string::npos || name.find('\0') != std::string::npos)
                    throw Error(Errc::inode_table_unreadable, "invalid directory entry name");
                entries.push_back({std::move(name), (static_cast<std::uint64_t>(start) << 16) | load_le16(e),
                                   load_le16(e + 4)});
            }
        }
        return entries;
    }

private:
    std::uint32_t id(std::uint16_t index) const { return index < ids_.size() ? ids_[index] : index; }

    const Superblock& sb_;
    const std::vector<std::uint32_t>& ids_;
    MetadataReader inodes_;
    MetadataReader dirs_;
};

} // namespace

std::vector<InodeSummary> walk_inodes(ByteView image, const Superblock& sb) {
    std::vector<InodeSummary> out;
    try {
        auto ids = load_id_table(image, sb);
        InodeParser parser(image, sb, ids);
        std::set<std::uint64_t> visited;

        std::function<void(std::uint64_t, const std::string&)> visit = [&](std::uint64_t ref, const std::string& path) {
            RawInode node = parser.read_inode(ref);
            node.s.path = path;
            if (node.s.kind != InodeKind::Directory) {
                out.push_back(std::move(node.s));
                return;
            }
            if (!visited.insert(ref).second)
                throw Error(Errc::directory_cycle, "directory " + (path.empty() ? std::string("/") : path) +
                                                       " is reachable more than once");
            auto entries = parser.read_listing(node);
            out.push_back(std::move(node.s));
            for (const auto& e : entries) visit(e.ref, path.empty() ? e.name : path + "/" + e.name);
        };
        visit(sb.root_inode_ref, "");
    } catch (const Error& e) {
        if (e.code() == Errc::directory_cycle) throw;
        throw Error(Errc::inode_table_unreadable, std::string("inode table unreadable: ") + e.what());
    }
    return out;
}

std::size_t Inventory::data_block_count() const {
    return static_cast<std::size_t>(
        std::count_if(units.begin(), units.end(), [](const Unit& u) { return u.kind == UnitKind::DataBlock; }));
}

std::size_t Inventory::fragment_block_count() const { return units.size() - data_block_count(); }

namespace {

void resolve_expected(Unit& u) {
    if (u.owners.empty()) return;
    auto owners = u.owners;
    std::sort(owners.begin(), owners.end(),
              [](const UnitOwner& a, const UnitOwner& b) { return std::tie(a.offset, a.length) < std::tie(b.offset, b.length); });
    std::uint64_t end = 0;
    for (std::size_t i = 0; i < owners.size(); ++i) {
        end = std::max(end, owners[i].offset + owners[i].length);
        if (i > 0 && owners[i].offset < owners[i - 1].offset + owners[i - 1].length &&
            !(owners[i].offset == owners[i - 1].offset && owners[i].length == owners[i - 1].length))
            u.conflicts.push_back("overlap between " + owners[i - 1].path + " and " + owners[i].path);
    }
    if (u.kind == UnitKind::DataBlock) {
        for (const auto& o : owners)
            if (o.offset != 0 || o.length != owners.front().length) {
                u.conflicts.push_back("data block claimed with different lengths");
                break;
            }
    }
    u.expected_len = end;
    if (end > u.max_decompressed_len) u.conflicts.push_back("owners extend beyond block_size");
}

} // namespace

Inventory build_inventory(ByteView image) {
    Inventory inv;
    inv.superblock = parse_superblock(image);
    const auto& sb = inv.superblock;
    inv.fragments = load_fragment_table(image, sb);

    std::map<std::uint64_t, Unit> by_start;
    auto conflict_start = [&](std::uint64_t start, const char* what) {
        throw Error(Errc::table_out_of_range, std::string(what) + " at " + hex_offset(start) + " overlaps another unit");
    };
    for (const auto& f : inv.fragments) {
        Unit u;
        u.kind = UnitKind::FragmentBlock;
        u.fragment_number = f.index;
        u.start = f.start;
        u.compressed_len = f.compressed_len();
        u.is_compressed = f.is_compressed();
        u.max_decompressed_len = sb.block_size;
        if (by_start.count(f.start)) conflict_start(f.start, "fragment");
        by_start.emplace(f.start, std::move(u));
    }

    try {
        inv.inode_blocks = list_metadata_blocks(image, sb.inode_table_start, sb.directory_table_start);
        inv.directory_blocks = list_metadata_blocks(image, sb.directory_table_start, directory_table_end(image, sb));
        inv.inodes = walk_inodes(image, sb);
        for (auto& node : inv.inodes) {
            if (node.kind != InodeKind::File) continue;
            std::uint64_t pos = node.blocks_start;
            const std::uint64_t bs = sb.block_size;
            for (std::size_t i = 0; i < node.block_sizes.size(); ++i) {
                std::uint32_t field = node.block_sizes[i];
                std::uint32_t len = field & ~kUncompressedBlock;
                std::uint64_t covered = std::min<std::uint64_t>(bs, node.file_size - i * bs);
                if (len == 0) continue;
                if (pos < kSuperblockSize || pos >= sb.bytes_used || len > sb.bytes_used - pos)
                    throw Error(Errc::table_out_of_range, node.path + ": data block outside the archive");
                auto it = by_start.find(pos);
                if (it == by_start.end()) {
                    Unit u;
                    u.kind = UnitKind::DataBlock;
                    u.start = pos;
                    u.compressed_len = len;
                    u.is_compressed = (field & kUncompressedBlock) == 0;
                    u.max_decompressed_len = sb.block_size;
                    it = by_start.emplace(pos, std::move(u)).first;
                } else if (it->second.kind != UnitKind::DataBlock || it->second.compressed_len != len) {
                    conflict_start(pos, "data block");
                }
                it->second.owners.push_back({node.inode_number, node.path, OwnerRole::DataBlock, 0, covered});
                pos += len;
            }
            if (node.fragment != kNoFragment) {
                if (node.fragment >= inv.fragments.size())
                    throw Error(Errc::table_out_of_range, node.path + ": fragment index out of range");
                std::uint64_t tail = node.file_size - node.block_sizes.size() * bs;
                auto& u = by_start.at(inv.fragments[node.fragment].start);
                u.owners.push_back({node.inode_number, node.path, OwnerRole::TailFragment, node.fragment_offset, tail});
            }
        }
    } catch (const Error& e) {
        inv.inodes_readable = false;
        inv.inode_error = e.what();
        inv.inodes.clear();
        for (auto it = by_start.begin(); it != by_start.end();) {
            if (it->second.kind == UnitKind::DataBlock)
                it = by_start.erase(it);
            else
                (it++)->second.owners.clear();
        }
    }

    std::map<std::uint64_t, std::size_t> index_of;
    for (auto& [start, u] : by_start) {
        u.index = inv.units.size();
        index_of[start] = u.index;
        resolve_expected(u);
        inv.units.push_back(std::move(u));
    }

    // Check units do not overlap one another.
    for (std::size_t i = 1; i < inv.units.size(); ++i) {
        const auto& a = inv.units[i - 1];
        if (a.start + a.compressed_len > inv.units[i].start)
            inv.units[i].conflicts.push_back("compressed bytes overlap unit " + std::to_string(a.index));
    }

    for (auto& node : inv.inodes) {
        if (node.kind != InodeKind::File) continue;
        const std::uint64_t bs = sb.block_size;
        std::uint64_t pos = node.blocks_start;
        for (std::size_t i = 0; i < node.block_sizes.size(); ++i) {
            std::uint32_t len = node.block_sizes[i] & ~kUncompressedBlock;
            std::uint64_t covered = std::min<std::uint64_t>(bs, node.file_size - i * bs);
            FilePart part;
            part.length = covered;
            if (len == 0) {
                part.kind = PartKind::Sparse;
            } else {
                part.kind = PartKind::Block;
                part.unit = index_of.at(pos);
                pos += len;
            }
            node.parts.push_back(part);
        }
        if (node.fragment != kNoFragment) {
            FilePart part;
            part.kind = PartKind::Fragment;
            part.unit = index_of.at(inv.fragments[node.fragment].start);
            part.offset = node.fragment_offset;
            part.length = node.file_size - node.block_sizes.size() * bs;
            node.parts.push_back(part);
        }
    }
    return inv;
}

ByteView unit_bytes(ByteView image, const Unit& unit) {
    need(image, unit.start, unit.compressed_len, "unit");
    return image.subspan(unit.start, unit.compressed_len);
}

zlib::Verdict decode_unit(ByteView image, const Unit& unit, zlib::OracleOptions options) {
    ByteView bytes = unit_bytes(image, unit);
    if (unit.is_compressed) return zlib::check_candidate(bytes, unit.max_decompressed_len, options);
    zlib::Verdict v;
    v.status = zlib::Status::Valid;
    v.consumed = bytes.size();
    v.payload.assign(bytes.begin(), bytes.end());
    return v;
}

std::string inventory_to_json(const Inventory& inv, ByteView image) {
    using nlohmann::json;
    const auto& sb = inv.superblock;
    auto table = [](std::uint64_t v) { return v == kNoTable ? json(nullptr) : json(hex_offset(v)); };
    json j;
    j["schema_version"] = 1;
    j["superblock"] = {
        {"inode_count", sb.inode_count},
        {"mod_time", sb.mod_time},
        {"block_size", sb.block_size},
        {"block_log", sb.block_log},
        {"fragment_entry_count", sb.fragment_entry_count},
        {"compression_id", sb.compression_id},
        {"flags", sb.flags},
        {"id_count", sb.id_count},
        {"version", std::to_string(sb.version_major) + "." + std::to_string(sb.version_minor)},
        {"root_inode_ref", hex_offset(sb.root_inode_ref)},
        {"bytes_used", sb.bytes_used},
        {"id_table_start", table(sb.id_table_start)},
        {"xattr_id_table_start", table(sb.xattr_id_table_start)},
        {"inode_table_start", table(sb.inode_table_start)},
        {"directory_table_start", table(sb.directory_table_start)},
        {"fragment_table_start", table(sb.fragment_table_start)},
        {"export_table_start", table(sb.export_table_start)},
    };
    j["counts"] = {{"units", inv.units.size()},
                   {"data_blocks", inv.data_block_count()},
                   {"fragment_blocks", inv.fragment_block_count()}};

    json units = json::array();
    for (const auto& u : inv.units) {
        json owners = json::array();
        for (const auto& o : u.owners)
            owners.push_back({{"inode", o.inode_number},
                              {"path", o.path},
                              {"role", to_string(o.role)},
                              {"offset", o.offset},
                              {"length", o.length}});
        auto bytes = unit_bytes(image, u);
        auto v = decode_unit(image, u);
        json baseline = {{"status", zlib::to_string(v.status)}, {"consumed", v.consumed}};
        if (v.valid()) baseline["length"] = v.payload.size();
        json ju = {{"index", u.index},
                   {"kind", to_string(u.kind)},
                   {"start", hex_offset(u.start)},
                   {"compressed_len", u.compressed_len},
                   {"is_compressed", u.is_compressed},
                   {"max_decompressed_len", u.max_decompressed_len},
                   {"expected_len", u.expected_len},
                   {"id", sha256_hex(bytes)},
                   {"baseline", std::move(baseline)},
                   {"owners", std::move(owners)},
                   {"conflicts", u.conflicts}};
        if (u.kind == UnitKind::FragmentBlock) ju["fragment"] = u.fragment_number;
        units.push_back(std::move(ju));
    }
    j["units"] = std::move(units);

    json inodes = json::array();
    for (const auto& n : inv.inodes) {
        json ji = {{"inode", n.inode_number},
                   {"path", "/" + n.path},
                   {"kind", to_string(n.kind)},
                   {"mode", n.mode},
                   {"size", n.file_size}};
        if (n.kind == InodeKind::Symlink) ji["target"] = n.symlink_target;
        if (n.kind == InodeKind::File) {
            json parts = json::array();
            for (const auto& p : n.parts) {
                json jp = {{"kind", p.kind == PartKind::Block ? "block" : p.kind == PartKind::Fragment ? "fragment" : "sparse"},
                           {"offset", p.offset},
                           {"length", p.length}};
                if (p.kind != PartKind::Sparse) jp["unit"] = p.unit;
                parts.push_back(std::move(jp));
            }
            ji["parts"] = std::move(parts);
        }
        inodes.push_back(std::move(ji));
    }
    j["inodes"] = std::move(inodes);
    j["inodes_readable"] = inv.inodes_readable;
    if (!inv.inodes_readable) j["inode_error"] = inv.inode_error;

    auto meta = [&](const std::vector<MetadataBlock>& blocks) {
        json arr = json::array();
        for (const auto& b : blocks) {
            std::string status = "Valid";
            if (b.compressed) {
                auto v = zlib::check_candidate(image.subspan(b.offset + 2, b.stored_len), zlib::kMetadataBlockMax);
                status = zlib::to_string(v.status);
            }
            arr.push_back({{"offset", hex_offset(b.offset)}, {"stored_len", b.stored_len}, {"compressed", b.compressed},
                           {"status", status}});
        }
        return arr;
    };
    j["metadata"] = {{"inode_blocks", meta(inv.inode_blocks)}, {"directory_blocks", meta(inv.directory_blocks)}};
    return j.dump(1) + "\n";
}

} // namespace squashfix::sqfs
