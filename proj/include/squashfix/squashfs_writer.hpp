#pragma once

// Minimal SquashFS 4.0 writer (gzip, little endian): regular files,
// directories and symlinks, tail packing into fragment blocks, sparse
// all-zero blocks. No xattrs, export table or duplicate detection.

#include "squashfix/bytes.hpp"
#include "squashfix/squashfs.hpp"

#include <string>
#include <vector>

namespace squashfix::sqfs {

struct TreeEntry {
    std::string path; // relative, '/' separated
    InodeKind kind = InodeKind::File;
    Bytes content;      // File
    std::string target; // Symlink
    std::uint16_t mode = 0;
};

struct WriterOptions {
    std::uint32_t block_size = 131072;
    std::uint32_t mtime = 0;
    bool fragments = true;    // pack tails into fragment blocks
    bool sparse = true;       // all-zero blocks stored as holes
    int level = 9;
};

/// Missing parent directories are created. Image length is padded to 4KiB.
Bytes write_image(const std::vector<TreeEntry>& entries, const WriterOptions& options = {});

} // namespace squashfix::sqfs
