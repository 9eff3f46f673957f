#pragma once

#include <stdexcept>
#include <string>

namespace squashfix {

enum class Errc {
    invalid_argument,
    length_not_page_multiple,
    image_too_short,
    length_mismatch,
    bad_magic,
    inconsistent_block_size,
    unsupported_version,
    unsupported_compressor,
    table_out_of_range,
    entry_count_mismatch,
    metadata_corrupt,
    metadata_too_large,
    inode_table_unreadable,
    directory_cycle,
    already_valid,
    invalid_shard,
    no_admissible_tuple,
    filter_emptied,
    io_error,
    builder_limit,
    checkpoint_mismatch,
};

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

} // namespace squashfix
