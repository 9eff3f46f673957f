#include "squashfix/squashfs_writer.hpp"

#include "squashfix/error.hpp"

#include <algorithm>
#include <bit>
#include <cstdlib>
#include <functional>
#include <map>
#include <memory>
#include <zlib.h>

namespace squashfix::sqfs {

namespace {

Bytes deflate(ByteView data, int level) {
    uLongf n = compressBound(static_cast<uLong>(data.size()));
    Bytes out(n);
    if (compress2(out.data(), &n, data.data(), static_cast<uLong>(data.size()), level) != Z_OK)
        throw Error(Errc::io_error, "zlib compression failed");
    out.resize(n);
    return out;
}

class MetaWriter {
public:
    explicit MetaWriter(int level) : level_(level) {}

    std::uint64_t ref() const { return (static_cast<std::uint64_t>(out_.size()) << 16) | cur_.size(); }
    std::uint64_t block() const { return out_.size(); }
    std::uint32_t offset() const { return static_cast<std::uint32_t>(cur_.size()); }

    void append(ByteView data) {
        while (!data.empty()) {
            std::size_t take = std::min(data.size(), zlib::kMetadataBlockMax - cur_.size());
            cur_.insert(cur_.end(), data.begin(), data.begin() + take);
            data = data.subspan(take);
            if (cur_.size() == zlib::kMetadataBlockMax) flush();
        }
    }

    Bytes finish() {
        if (!cur_.empty()) flush();
        return std::move(out_);
    }

    const std::vector<std::uint64_t>& block_starts() const { return starts_; }

private:
    void flush() {
        starts_.push_back(out_.size());
        Bytes c = deflate(cur_, level_);
        if (c.size() < cur_.size()) {
            store_le16(out_, static_cast<std::uint16_t>(c.size()));
            out_.insert(out_.end(), c.begin(), c.end());
        } else {
            store_le16(out_, static_cast<std::uint16_t>(cur_.size() | kUncompressedMeta));
            out_.insert(out_.end(), cur_.begin(), cur_.end());
        }
        cur_.clear();
    }

    int level_;
    Bytes out_;
    Bytes cur_;
    std::vector<std::uint64_t> starts_;
};

struct Node {
    std::string name;
    InodeKind kind = InodeKind::Directory;
    const TreeEntry* entry = nullptr;
    std::map<std::string, std::unique_ptr<Node>> children;
    std::uint32_t inode_number = 0;
    std::uint64_t inode_ref = 0;
    // file data
    std::uint64_t blocks_start = 0;
    std::vector<std::uint32_t> block_sizes;
    std::uint32_t fragment = kNoFragment;
    std::uint32_t fragment_offset = 0;
};

std::uint16_t basic_type(InodeKind kind) {
    switch (kind) {
    case InodeKind::Directory: return 1;
    case InodeKind::File: return 2;
    case InodeKind::Symlink: return 3;
    case InodeKind::BlockDevice: return 4;
    case InodeKind::CharDevice: return 5;
    case InodeKind::Fifo: return 6;
    case InodeKind::Socket: return 7;
    }
    return 2;
}

class Writer {
public:
    Writer(const std::vector<TreeEntry>& entries, const WriterOptions& options)
        : opt_(options), inodes_(options.level), dirs_(options.level) {
        if (options.block_size < 4096 || options.block_size > 1048576 || !std::has_single_bit(options.block_size))
            throw Error(Errc::invalid_argument, "block size must be a power of two in [4096, 1048576]");
        root_.name = "";
        for (const auto& e : entries) insert(e);
    }

    Bytes run() {
        image_.assign(kSuperblockSize, 0);
        std::uint32_t next = 1;
        number(root_, next);
        inode_count_ = next - 1;
        write_data(root_);
        flush_fragment();

        write_inodes(root_, inode_count_ + 1);

        Superblock sb;
        sb.inode_count = inode_count_;
        sb.mod_time = opt_.mtime;
        sb.block_size = opt_.block_size;
        sb.block_log = static_cast<std::uint16_t>(std::countr_zero(opt_.block_size));
        sb.fragment_entry_count = static_cast<std::uint32_t>(fragment_table_.size() / 16);
        sb.compression_id = kGzip;
        sb.flags = 0x0200; // no xattrs
        sb.id_count = 1;
        sb.root_inode_ref = root_.inode_ref;

        sb.inode_table_start = image_.size();
        Bytes it = inodes_.finish();
        image_.insert(image_.end(), it.begin(), it.end());
        sb.directory_table_start = image_.size();
        Bytes dt = dirs_.finish();
        image_.insert(image_.end(), dt.begin(), dt.end());

        if (sb.fragment_entry_count > 0) {
            sb.fragment_table_start = write_indexed(fragment_table_);
        } else {
            sb.fragment_table_start = kNoTable;
        }
        Bytes ids;
        store_le32(ids, 0);
        sb.id_table_start = write_indexed(ids);
        sb.xattr_id_table_start = kNoTable;
        sb.export_table_start = kNoTable;
        sb.bytes_used = image_.size();

        Bytes header = serialize_superblock(sb);
        std::copy(header.begin(), header.end(), image_.begin());
        image_.resize((image_.size() + 4095) / 4096 * 4096, 0);
        return std::move(image_);
    }

private:
    void insert(const TreeEntry& e) {
        if (e.path.empty() || e.path.front() == '/') throw Error(Errc::invalid_argument, "bad tree path: " + e.path);
        Node* cur = &root_;
        std::size_t pos = 0;
        for (;;) {
            std::size_t slash = e.path.find('/', pos);
            std::string name = e.path.substr(pos, slash == std::string::npos ? std::string::npos : slash - pos);
            if (name.empty() || name == "." || name == ".." || name.size() > 256)
                throw Error(Errc::invalid_argument, "bad tree path: " + e.path);
            auto& child = cur->children[name];
            if (!child) {
                child = std::make_unique<Node>();
                child->name = name;
                child->kind = InodeKind::Directory;
            }
            if (slash == std::string::npos) {
                if (e.kind == InodeKind::Directory) {
                    if (child->kind != InodeKind::Directory)
                        throw Error(Errc::invalid_argument, "duplicate tree path: " + e.path);
                    child->entry = &e;
                } else {
                    if (child->entry || !child->children.empty())
                        throw Error(Errc::invalid_argument, "duplicate tree path: " + e.path);
                    child->kind = e.kind;
                    child->entry = &e;
                }
                return;
            }
            if (child->kind != InodeKind::Directory)
                throw Error(Errc::invalid_argument, "path goes through a non-directory: " + e.path);
            cur = child.get();
            pos = slash + 1;
        }
    }

    // Children before parents; the root gets the highest number.
    void number(Node& n, std::uint32_t& next) {
        for (auto& [name, c] : n.children) number(*c, next);
        n.inode_number = next++;
    }

    void write_data(Node& n) {
        if (n.kind == InodeKind::File) {
            write_file(n);
            return;
        }
        for (auto& [name, c] : n.children) write_data(*c);
    }

    void write_file(Node& n) {
        const Bytes& data = n.entry->content;
        const std::uint64_t bs = opt_.block_size;
        std::uint64_t full = data.size() / bs;
        std::uint64_t tail = data.size() % bs;
        if (!opt_.fragments && tail) {
            ++full;
            tail = 0;
        }
        n.blocks_start = image_.size();
        for (std::uint64_t i = 0; i < full; ++i) {
            ByteView chunk(data.data() + i * bs, std::min<std::uint64_t>(bs, data.size() - i * bs));
            if (opt_.sparse && std::all_of(chunk.begin(), chunk.end(), [](std::uint8_t b) { return b == 0; })) {
                n.block_sizes.push_back(0);
                continue;
            }
            Bytes c = deflate(chunk, opt_.level);
            if (c.size() < chunk.size()) {
                image_.insert(image_.end(), c.begin(), c.end());
                n.block_sizes.push_back(static_cast<std::uint32_t>(c.size()));
            } else {
                image_.insert(image_.end(), chunk.begin(), chunk.end());
                n.block_sizes.push_back(static_cast<std::uint32_t>(chunk.size()) | kUncompressedBlock);
            }
        }
        if (tail) {
            if (frag_buf_.size() + tail > bs) flush_fragment();
            n.fragment = static_cast<std::uint32_t>(fragment_table_.size() / 16);
            n.fragment_offset = static_cast<std::uint32_t>(frag_buf_.size());
            frag_buf_.insert(frag_buf_.end(), data.end() - static_cast<std::ptrdiff_t>(tail), data.end());
        }
    }

    void flush_fragment() {
        if (frag_buf_.empty()) return;
        std::uint64_t start = image_.size();
        Bytes c = deflate(frag_buf_, opt_.level);
        std::uint32_t size;
        if (c.size() < frag_buf_.size()) {
            image_.insert(image_.end(), c.begin(), c.end());
            size = static_cast<std::uint32_t>(c.size());
        } else {
            image_.insert(image_.end(), frag_buf_.begin(), frag_buf_.end());
            size = static_cast<std::uint32_t>(frag_buf_.size()) | kUncompressedBlock;
        }
        store_le64(fragment_table_, start);
        store_le32(fragment_table_, size);
        store_le32(fragment_table_, 0);
        frag_buf_.clear();
    }

    void header(Bytes& b, std::uint16_t type, const Node& n, std::uint16_t mode) {
        store_le16(b, type);
        store_le16(b, mode);
        store_le16(b, 0); // uid index
        store_le16(b, 0); // gid index
        store_le32(b, opt_.mtime);
        store_le32(b, n.inode_number);
    }

    std::uint16_t mode_of(const Node& n, std::uint16_t fallback) const {
        return n.entry && n.entry->mode ? n.entry->mode : fallback;
    }

    void write_inodes(Node& n, std::uint32_t parent) {
        for (auto& [name, c] : n.children) {
            if (c->kind == InodeKind::Directory) write_inodes(*c, n.inode_number);
            else write_leaf(*c);
        }
        if (n.kind != InodeKind::Directory) return;

        // Directory listing.
        std::uint64_t dir_block = dirs_.block();
        std::uint32_t dir_offset = dirs_.offset();
        Bytes listing;
        std::size_t i = 0;
        std::vector<Node*> kids;
        for (auto& [name, c] : n.children) kids.push_back(c.get());
        while (i < kids.size()) {
            std::uint64_t start = kids[i]->inode_ref >> 16;
            std::uint32_t base = kids[i]->inode_number;
            std::size_t j = i;
            while (j < kids.size() && j - i < 256 && (kids[j]->inode_ref >> 16) == start &&
                   std::abs(static_cast<long>(kids[j]->inode_number) - static_cast<long>(base)) < 32768)
                ++j;
            store_le32(listing, static_cast<std::uint32_t>(j - i - 1));
            store_le32(listing, static_cast<std::uint32_t>(start));
            store_le32(listing, base);
            for (std::size_t k = i; k < j; ++k) {
                store_le16(listing, static_cast<std::uint16_t>(kids[k]->inode_ref & 0xFFFF));
                store_le16(listing, static_cast<std::uint16_t>(static_cast<std::int16_t>(
                                        static_cast<long>(kids[k]->inode_number) - static_cast<long>(base))));
                store_le16(listing, basic_type(kids[k]->kind));
                store_le16(listing, static_cast<std::uint16_t>(kids[k]->name.size() - 1));
                listing.insert(listing.end(), kids[k]->name.begin(), kids[k]->name.end());
            }
            i = j;
        }
        dirs_.append(listing);

        Bytes b;
        std::uint64_t size = listing.size() + 3;
        std::uint32_t nlink = 2;
        for (auto* k : kids)
            if (k->kind == InodeKind::Directory) ++nlink;
        n.inode_ref = inodes_.ref();
        if (size <= 0xFFFF) {
            header(b, 1, n, mode_of(n, 0755));
            store_le32(b, static_cast<std::uint32_t>(dir_block));
            store_le32(b, nlink);
            store_le16(b, static_cast<std::uint16_t>(size));
            store_le16(b, static_cast<std::uint16_t>(dir_offset));
            store_le32(b, parent);
        } else {
            header(b, 8, n, mode_of(n, 0755));
            store_le32(b, nlink);
            store_le32(b, static_cast<std::uint32_t>(size));
            store_le32(b, static_cast<std::uint32_t>(dir_block));
            store_le32(b, parent);
            store_le16(b, 0); // index count
            store_le16(b, static_cast<std::uint16_t>(dir_offset));
            store_le32(b, 0xFFFFFFFFu);
        }
        inodes_.append(b);
    }

    void write_leaf(Node& n) {
        Bytes b;
        n.inode_ref = inodes_.ref();
        if (n.kind == InodeKind::File) {
            std::uint64_t size = n.entry->content.size();
            if (n.blocks_start <= 0xFFFFFFFFu && size <= 0xFFFFFFFFu) {
                header(b, 2, n, mode_of(n, 0644));
                store_le32(b, static_cast<std::uint32_t>(n.blocks_start));
                store_le32(b, n.fragment);
                store_le32(b, n.fragment == kNoFragment ? 0 : n.fragment_offset);
                store_le32(b, static_cast<std::uint32_t>(size));
            } else {
                header(b, 9, n, mode_of(n, 0644));
                store_le64(b, n.blocks_start);
                store_le64(b, size);
                store_le64(b, 0);
                store_le32(b, 1);
                store_le32(b, n.fragment);
                store_le32(b, n.fragment == kNoFragment ? 0 : n.fragment_offset);
                store_le32(b, 0xFFFFFFFFu);
            }
            for (auto s : n.block_sizes) store_le32(b, s);
        } else if (n.kind == InodeKind::Symlink) {
            header(b, 3, n, mode_of(n, 0777));
            store_le32(b, 1);
            store_le32(b, static_cast<std::uint32_t>(n.entry->target.size()));
            b.insert(b.end(), n.entry->target.begin(), n.entry->target.end());
        } else {
            throw Error(Errc::builder_limit, "writer supports files, directories and symlinks only");
        }
        inodes_.append(b);
    }

    // Metadata blocks followed by their u64 index; returns the index offset.
    std::uint64_t write_indexed(const Bytes& table) {
        MetaWriter w(opt_.level);
        w.append(table);
        std::uint64_t base = image_.size();
        Bytes blocks = w.finish();
        const auto& starts = w.block_starts();
        image_.insert(image_.end(), blocks.begin(), blocks.end());
        std::uint64_t index = image_.size();
        for (auto s : starts) store_le64(image_, base + s);
        return index;
    }

    WriterOptions opt_;
    Node root_;
    Bytes image_;
    Bytes frag_buf_;
    Bytes fragment_table_;
    MetaWriter inodes_;
    MetaWriter dirs_;
    std::uint32_t inode_count_ = 0;
};

} // namespace

Bytes write_image(const std::vector<TreeEntry>& entries, const WriterOptions& options) {
    Writer w(entries, options);
    return w.run();
}

} // namespace squashfix::sqfs
