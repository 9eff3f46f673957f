#pragma once

// End-to-end repair: prepare -> repair (sharded) -> merge -> extract -> report.
//
// Stages exchange JSON artifacts through a work directory so shards of the
// repair stage can run as independent processes sharing only a filesystem.
//
//   <work>/targets/unit-<i>.shard-<s>-of-<m>.json   repair stage output
//   <work>/merged.json                              merge stage output
//   <out>/all_true/..., <out>/all_false/...         extracted variants
//   <out>/masks/<path>.mask.json                    X positions per file
//   <out>/report.json                               RepairReport

#include "squashfix/bitflip_search.hpp"
#include "squashfix/bytes.hpp"
#include "squashfix/merge.hpp"
#include "squashfix/squashfs.hpp"
#include "squashfix/statistics.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace squashfix::pipeline {

struct ImageSource {
    std::filesystem::path path;
    std::uint64_t offset = 0;
    std::uint64_t length = 0; // 0 = to the end of the file
};

Bytes load_image(const ImageSource& source);

struct MetadataRepair {
    std::uint64_t offset = 0;
    std::string table; // inode | directory
    std::string status;
    std::size_t n_targets = 0;
    std::vector<std::uint32_t> flips; // applied, when repaired
    bool repaired = false;
};

/// Image with corrupted inode/directory metadata blocks repaired in place
/// where a single flip gives a unique payload, plus the parsed inventory and
/// each unit's baseline verdict (payload kept for valid units).
struct Prepared {
    Bytes image;
    std::vector<MetadataRepair> metadata;
    sqfs::Inventory inventory;
    std::vector<zlib::Verdict> baseline;
    std::vector<std::string> unit_ids;

    bool corrupt(std::size_t unit) const { return !baseline[unit].valid(); }
};

Prepared prepare(Bytes image, zlib::OracleOptions oracle = {});

struct RepairConfig {
    search::Model model = search::Model::OneFlip;
    search::Shard shard;
    unsigned jobs = 1;
    std::filesystem::path checkpoint_dir; // empty disables checkpoints
    std::uint64_t max_first_positions = 0;
    zlib::OracleOptions oracle;
    std::optional<std::vector<std::size_t>> units;
    std::ostream* log = nullptr;
};

/// Result of the repair stage for one unit and one shard.
struct UnitArtifact {
    std::size_t unit = 0;
    std::string id;
    std::string baseline_status;
    std::size_t consumed = 0;
    std::size_t prefix_limit = 0;
    std::vector<std::vector<std::uint32_t>> one_flip; // target flip sets
    bool two_flip_ran = false;
    search::Shard shard;
    bool two_flip_complete = false;
    std::uint64_t resume_position = 0;
    std::vector<std::vector<std::uint32_t>> two_flip;
    search::SearchBudget budget;
};

std::string artifact_to_json(const UnitArtifact& a);
UnitArtifact artifact_from_json(const std::string& text);
std::filesystem::path artifact_path(const std::filesystem::path& work, std::size_t unit, search::Shard shard);

/// Repairs every corrupt unit (or the selected ones) and writes artifacts.
std::vector<UnitArtifact> repair_stage(const Prepared& prepared, const RepairConfig& config,
                                       const std::filesystem::path& work);

struct UnitResult {
    std::size_t unit = 0;
    std::string id;
    std::string baseline_status;
    std::size_t consumed = 0;
    std::size_t prefix_limit = 0;
    std::string model_used = "none"; // none | 1flip | 2flip
    std::string shards_completed;    // "k/m" for 2flip
    bool search_complete = true;
    std::size_t n_targets_pre = 0;
    std::size_t n_targets_post = 0;
    bool length_filtered = false;
    bool escalated = false;
    std::vector<std::string> notes;
    std::vector<search::Target> targets; // post-filter, with payloads
    search::SearchBudget budget;
};

/// Unions artifacts per unit, rebuilds payloads and applies the length filter
/// (with subset-sum escalation). Corrupt units without artifacts are reported
/// as not searched. Writes <work>/merged.json.
std::vector<UnitResult> merge_stage(const Prepared& prepared, const std::filesystem::path& work,
                                    zlib::OracleOptions oracle = {});

std::string merged_to_json(const std::vector<UnitResult>& results);
/// Reloads merge results; payloads are rebuilt from the image.
std::vector<UnitResult> merged_from_json(const Prepared& prepared, const std::string& text,
                                         zlib::OracleOptions oracle = {});

struct FileResult {
    std::string path;
    sqfs::InodeKind kind = sqfs::InodeKind::File;
    std::uint64_t size = 0;
    bool corrupt = false;        // some part comes from a baseline-failing unit
    std::uint64_t baseline_bytes = 0;
    std::uint64_t indeterminate_bits = 0;
    std::uint64_t indeterminate_bytes = 0;
    std::vector<std::size_t> corrupt_units;
    std::vector<std::uint64_t> unit_indeterminate_bits;  // parallel to corrupt_units
    std::vector<std::uint64_t> unit_indeterminate_bytes;
};

/// Ternary content of every unit after merging.
std::vector<merge::TernaryBuffer> unit_buffers(const Prepared& prepared, const std::vector<UnitResult>& results);

/// Assembles files and, when `out` is non-empty, writes both variant trees
/// and masks under it.
std::vector<FileResult> extract_stage(const Prepared& prepared, const std::vector<UnitResult>& results,
                                      const std::filesystem::path& out);

struct ReportOptions {
    stats::LengthUnit length_unit = stats::LengthUnit::Bits;
    double confidence = 0.99;
    std::uint64_t image_offset = 0;
};

struct RepairReport {
    std::string json;   // full report document
    int exit_code = 0;  // 0 iff every corrupt unit holds a nonempty, complete TargetSet
    double baseline_bit_ratio = 1.0;
    double repaired_bit_ratio = 1.0;
    std::size_t corrupt_units = 0;
    std::size_t repaired_units = 0;
};

RepairReport build_report(const Prepared& prepared, const std::vector<UnitResult>& results,
                          const std::vector<FileResult>& files, const ReportOptions& options = {});

/// Human-readable recovery table from a report document.
std::string report_ratios(const std::string& report_json);

struct PipelineConfig {
    ImageSource source;
    std::filesystem::path out;
    std::filesystem::path work; // default <out>/work
    RepairConfig repair;
    ReportOptions report;
};

/// Runs every stage in-process with a single shard and writes <out>/report.json.
RepairReport run_pipeline(const PipelineConfig& config);

} // namespace squashfix::pipeline
