// squashfix: repair bitflip-corrupted SquashFS images.

#include "squashfix/bitflip_search.hpp"
#include "squashfix/bytes.hpp"
#include "squashfix/corpus.hpp"
#include "squashfix/dump_analysis.hpp"
#include "squashfix/error.hpp"
#include "squashfix/pipeline.hpp"
#include "squashfix/sha256.hpp"
#include "squashfix/squashfs.hpp"
#include "squashfix/statistics.hpp"
#include "squashfix/zlib_oracle.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

using namespace squashfix;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string read_text(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw Error(Errc::io_error, "cannot read " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void emit(const std::string& out, const std::string& text) {
    if (out.empty() || out == "-")
        std::cout << text;
    else
        write_text_atomic(out, text);
}

struct SourceFlags {
    std::string image;
    std::string offset = "0";
    std::string length = "0";

    void add(CLI::App* app) {
        app->add_option("image", image, "SquashFS image or main image holding one")->required();
        app->add_option("--offset", offset, "start of the SquashFS inside the file (hex or decimal)");
        app->add_option("--length", length, "bytes to read from --offset; 0 reads to the end");
    }
    pipeline::ImageSource source() const { return {image, parse_offset(offset), parse_offset(length)}; }
};

struct RepairFlags {
    std::string model = "1flip";
    std::string shard = "0/1";
    unsigned jobs = 1;
    std::string checkpoint_dir;
    std::uint64_t max_first_positions = 0;
    std::vector<std::size_t> units;
    bool strict = false;

    void add(CLI::App* app) {
        app->add_option("--model", model, "flip model")->check(CLI::IsMember({"1flip", "2flip"}));
        app->add_option("--shard", shard, "2-flip shard i/m");
        app->add_option("--jobs", jobs, "worker threads")->check(CLI::Range(1u, 1024u));
        app->add_option("--checkpoint-dir", checkpoint_dir, "2-flip checkpoint directory");
        app->add_option("--max-first-positions", max_first_positions, "stop 2-flip after this many first flips");
        app->add_option("--unit", units, "restrict to these unit indexes");
        app->add_flag("--strict", strict, "reject trailing bytes after the Adler-32 trailer");
    }
    pipeline::RepairConfig config(const fs::path& work) const {
        pipeline::RepairConfig c;
        c.model = model == "2flip" ? search::Model::TwoFlip : search::Model::OneFlip;
        c.shard = search::parse_shard(shard);
        c.jobs = jobs;
        c.max_first_positions = max_first_positions;
        c.oracle.strict = strict;
        if (!units.empty()) c.units = units;
        if (!checkpoint_dir.empty())
            c.checkpoint_dir = checkpoint_dir;
        else if (const char* env = std::getenv("SQUASHFIX_CHECKPOINT_DIR"); env && *env)
            c.checkpoint_dir = env;
        else
            c.checkpoint_dir = work / "checkpoints";
        c.log = &std::cerr;
        return c;
    }
};

struct ReportFlags {
    std::string length_unit = "bits";
    double confidence = 0.99;

    void add(CLI::App* app) {
        app->add_option("--length-unit", length_unit, "exponent unit of the rate model")
            ->check(CLI::IsMember({"bits", "bytes"}));
        app->add_option("--confidence", confidence, "interval confidence")->check(CLI::Range(0.0, 1.0));
    }
    pipeline::ReportOptions options(std::uint64_t offset) const {
        pipeline::ReportOptions o;
        o.length_unit = length_unit == "bytes" ? stats::LengthUnit::Bytes : stats::LengthUnit::Bits;
        o.confidence = confidence;
        o.image_offset = offset;
        return o;
    }
};

dump::Thresholds parse_thresholds(const std::string& text) {
    dump::Thresholds t;
    if (text.empty()) return t;
    auto comma = text.find(',');
    if (comma == std::string::npos) throw Error(Errc::invalid_argument, "--thresholds expects ENCRYPTED,COMPRESSED");
    t.encrypted = std::stod(text.substr(0, comma));
    t.compressed = std::stod(text.substr(comma + 1));
    return t;
}

int run_estimate(const std::string& inventory, const std::string& corrupt_list, const ReportFlags& rf,
                 const std::string& out) {
    auto inv = json::parse(read_text(inventory));
    std::vector<std::uint64_t> lengths;
    std::set<std::size_t> compressed;
    std::size_t corrupted = 0;
    for (const auto& u : inv.at("units")) {
        if (!u.at("is_compressed").get<bool>()) continue;
        lengths.push_back(u.at("compressed_len").get<std::uint64_t>());
        compressed.insert(u.at("index").get<std::size_t>());
        if (corrupt_list.empty() && u.at("baseline").at("status").get<std::string>() != "Valid") ++corrupted;
    }
    if (!corrupt_list.empty()) {
        auto j = json::parse(read_text(corrupt_list));
        const json& arr = j.is_object() ? j.at("corrupt") : j;
        for (const auto& v : arr)
            if (!compressed.count(v.get<std::size_t>()))
                throw Error(Errc::invalid_argument, "corrupt unit not in inventory: " + v.dump());
        corrupted = arr.size();
    }
    auto opts = rf.options(0);
    auto h = stats::estimate_with_interval(lengths, corrupted, opts.confidence, opts.length_unit);
    json expected = json::array();
    for (unsigned k = 0; k <= 3; ++k) expected.push_back(stats::expected_k_flip_count(lengths, h.p, k, opts.length_unit));
    json j = {{"schema_version", 1},
              {"length_unit", stats::to_string(opts.length_unit)},
              {"units", lengths.size()},
              {"corrupted", corrupted},
              {"confidence", h.confidence},
              {"p", h.p},
              {"p_lo", h.p_lo},
              {"p_hi", h.p_hi},
              {"t", h.t},
              {"expected_counts", expected}};
    emit(out, j.dump(1) + "\n");
    return 0;
}

int run_check(const SourceFlags& src, std::size_t unit, const std::vector<std::uint32_t>& flips, bool strict) {
    auto p = pipeline::prepare(pipeline::load_image(src.source()), {strict});
    if (unit >= p.inventory.units.size()) throw Error(Errc::invalid_argument, "unit index out of range");
    const auto& u = p.inventory.units[unit];
    Bytes frag(sqfs::unit_bytes(p.image, u).begin(), sqfs::unit_bytes(p.image, u).end());
    for (auto f : flips) {
        if (f >= 8 * frag.size()) throw Error(Errc::invalid_argument, "flip position beyond the unit");
        frag[f >> 3] ^= static_cast<std::uint8_t>(1u << (f & 7));
    }
    auto v = zlib::check_candidate(frag, u.max_decompressed_len, {strict});
    json j = {{"unit", unit},
              {"flips", flips},
              {"status", zlib::to_string(v.status)},
              {"consumed", v.consumed},
              {"length", v.payload.size()}};
    if (v.computed) j["computed_adler"] = *v.computed;
    if (v.stored) j["stored_adler"] = *v.stored;
    if (v.valid()) j["sha256"] = sha256_hex(v.payload);
    std::cout << j.dump(1) << "\n";
    return v.valid() ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Repair bitflip-corrupted SquashFS images"};
    app.require_subcommand(1);
    int code = 0;

    // strip
    auto* strip = app.add_subcommand("strip", "drop per-page spare bytes from a raw NAND dump");
    std::string strip_in, strip_out;
    dump::PageGeometry geom;
    strip->add_option("input", strip_in)->required();
    strip->add_option("output", strip_out)->required();
    strip->add_option("--page", geom.page_total, "bytes per raw page");
    strip->add_option("--data", geom.page_data, "data bytes per page");
    strip->add_option("--spare", geom.page_spare, "spare bytes per page");
    strip->callback([&] {
        auto raw = read_file(strip_in);
        auto out = dump::strip_spare(raw, geom);
        write_file_atomic(strip_out, out);
        std::cerr << raw.size() << " -> " << out.size() << " bytes\n";
    });

    // scan
    auto* scan = app.add_subcommand("scan", "entropy scan and segment classification");
    std::string scan_in, scan_out, scan_thresholds;
    std::size_t window = dump::kDefaultWindow, stride = dump::kDefaultStride;
    bool scan_series = false;
    scan->add_option("image", scan_in)->required();
    scan->add_option("--window", window, "window size in bytes");
    scan->add_option("--stride", stride, "window stride in bytes");
    scan->add_option("--thresholds", scan_thresholds, "ENCRYPTED,COMPRESSED entropy thresholds");
    scan->add_flag("--series", scan_series, "include the entropy series");
    scan->add_option("-o,--output", scan_out, "output JSON (default stdout)");
    scan->callback([&] {
        auto image = read_file(scan_in);
        auto series = dump::entropy_scan(image, window, stride);
        auto segs = dump::classify_segments(series, image, parse_thresholds(scan_thresholds));
        auto j = json::parse(dump::segments_to_json(segs));
        if (scan_series) j["entropy"] = {{"window", window}, {"stride", stride}, {"values", series.values}};
        emit(scan_out, j.dump(1) + "\n");
    });

    // diff
    auto* diff = app.add_subcommand("diff", "count bit differences between two copies of a region");
    std::string diff_a, diff_b;
    diff->add_option("a", diff_a)->required();
    diff->add_option("b", diff_b)->required();
    diff->callback([&] {
        auto d = dump::diff_bitflips(read_file(diff_a), read_file(diff_b));
        json j = {{"schema_version", 1}, {"length", d.length}, {"count", d.positions.size()}, {"positions", d.positions}};
        j["bytes_per_flip"] = d.bytes_per_flip ? json(*d.bytes_per_flip) : json(nullptr);
        std::cout << j.dump(1) << "\n";
    });

    // inventory
    auto* inventory = app.add_subcommand("inventory", "parse the image and list repair units");
    SourceFlags inv_src;
    std::string inv_out;
    inv_src.add(inventory);
    inventory->add_option("-o,--output", inv_out, "output JSON (default stdout)");
    inventory->callback([&] {
        auto image = pipeline::load_image(inv_src.source());
        emit(inv_out, sqfs::inventory_to_json(sqfs::build_inventory(image), image));
    });

    // estimate
    auto* estimate = app.add_subcommand("estimate", "estimate the bitflip rate from an inventory");
    std::string est_inv, est_corrupt, est_out;
    ReportFlags est_rf;
    estimate->add_option("inventory", est_inv, "inventory JSON")->required();
    estimate->add_option("--corrupt", est_corrupt, "JSON file with the corrupt unit indexes (default: baseline failures)");
    est_rf.add(estimate);
    estimate->add_option("-o,--output", est_out, "output JSON (default stdout)");
    estimate->callback([&] { code = run_estimate(est_inv, est_corrupt, est_rf, est_out); });

    // check
    auto* check = app.add_subcommand("check", "run the oracle on one unit with optional flips");
    SourceFlags chk_src;
    std::size_t chk_unit = 0;
    std::vector<std::uint32_t> chk_flips;
    bool chk_strict = false;
    chk_src.add(check);
    check->add_option("--unit", chk_unit, "unit index")->required();
    check->add_option("--flip", chk_flips, "bit positions to flip");
    check->add_flag("--strict", chk_strict, "reject trailing bytes after the Adler-32 trailer");
    check->callback([&] { code = run_check(chk_src, chk_unit, chk_flips, chk_strict); });

    // repair
    auto* repair = app.add_subcommand("repair", "search flip sets for corrupt units (one shard)");
    SourceFlags rep_src;
    RepairFlags rep_flags;
    std::string rep_work;
    rep_src.add(repair);
    rep_flags.add(repair);
    repair->add_option("--work", rep_work, "work directory")->required();
    repair->callback([&] {
        auto src = rep_src.source();
        auto prepared = pipeline::prepare(pipeline::load_image(src), {rep_flags.strict});
        auto arts = pipeline::repair_stage(prepared, rep_flags.config(rep_work), rep_work);
        for (const auto& a : arts)
            if (a.two_flip_ran && !a.two_flip_complete) code = 1;
    });

    // merge
    auto* merge = app.add_subcommand("merge", "union shard results and apply length filters");
    SourceFlags mrg_src;
    std::string mrg_work;
    bool mrg_strict = false;
    mrg_src.add(merge);
    merge->add_option("--work", mrg_work, "work directory")->required();
    merge->add_flag("--strict", mrg_strict, "reject trailing bytes after the Adler-32 trailer");
    merge->callback([&] {
        auto prepared = pipeline::prepare(pipeline::load_image(mrg_src.source()), {mrg_strict});
        auto results = pipeline::merge_stage(prepared, mrg_work, {mrg_strict});
        for (const auto& r : results)
            std::cerr << "unit " << r.unit << ": " << r.model_used << ", targets " << r.n_targets_pre << " -> "
                      << r.n_targets_post << (r.search_complete ? "" : " (incomplete)") << "\n";
    });

    // extract
    auto* extract = app.add_subcommand("extract", "write all-true/all-false trees and masks");
    SourceFlags ext_src;
    std::string ext_work, ext_out;
    bool ext_strict = false;
    ext_src.add(extract);
    extract->add_option("--work", ext_work, "work directory holding merged.json")->required();
    extract->add_option("--out", ext_out, "output directory")->required();
    extract->add_flag("--strict", ext_strict, "reject trailing bytes after the Adler-32 trailer");
    extract->callback([&] {
        auto prepared = pipeline::prepare(pipeline::load_image(ext_src.source()), {ext_strict});
        auto results = pipeline::merged_from_json(prepared, read_text(fs::path(ext_work) / "merged.json"), {ext_strict});
        auto files = pipeline::extract_stage(prepared, results, ext_out);
        std::cerr << files.size() << " files written\n";
    });

    // report
    auto* report = app.add_subcommand("report", "write report.json and print recovery ratios");
    SourceFlags rpt_src;
    ReportFlags rpt_flags;
    std::string rpt_work, rpt_out;
    bool rpt_strict = false;
    rpt_src.add(report);
    rpt_flags.add(report);
    report->add_option("--work", rpt_work, "work directory holding merged.json")->required();
    report->add_option("-o,--output", rpt_out, "report JSON path (default <work>/report.json)");
    report->add_flag("--strict", rpt_strict, "reject trailing bytes after the Adler-32 trailer");
    report->callback([&] {
        auto src = rpt_src.source();
        auto prepared = pipeline::prepare(pipeline::load_image(src), {rpt_strict});
        auto results = pipeline::merged_from_json(prepared, read_text(fs::path(rpt_work) / "merged.json"), {rpt_strict});
        auto files = pipeline::extract_stage(prepared, results, {});
        auto rep = pipeline::build_report(prepared, results, files, rpt_flags.options(src.offset));
        write_text_atomic(rpt_out.empty() ? fs::path(rpt_work) / "report.json" : fs::path(rpt_out), rep.json);
        std::cout << pipeline::report_ratios(rep.json);
        code = rep.exit_code;
    });

    // run
    auto* run = app.add_subcommand("run", "all stages in one process");
    SourceFlags run_src;
    RepairFlags run_flags;
    ReportFlags run_rf;
    std::string run_out, run_work;
    run_src.add(run);
    run_flags.add(run);
    run_rf.add(run);
    run->add_option("--out", run_out, "output directory")->required();
    run->add_option("--work", run_work, "work directory (default <out>/work)");
    run->callback([&] {
        pipeline::PipelineConfig cfg;
        cfg.source = run_src.source();
        cfg.out = run_out;
        cfg.work = run_work.empty() ? fs::path(run_out) / "work" : fs::path(run_work);
        cfg.repair = run_flags.config(cfg.work);
        cfg.report = run_rf.options(cfg.source.offset);
        auto rep = pipeline::run_pipeline(cfg);
        std::cout << pipeline::report_ratios(rep.json);
        code = rep.exit_code;
    });

    // corpus
    auto* corpus_cmd = app.add_subcommand("corpus", "ground-truthed test images");
    corpus_cmd->require_subcommand(1);

    auto* build = corpus_cmd->add_subcommand("build", "build an image and its manifest");
    std::uint64_t build_seed = 1;
    corpus::TreeOptions tree_opts;
    sqfs::WriterOptions writer_opts;
    std::string build_from, build_image, build_manifest;
    build->add_option("--seed", build_seed, "tree seed");
    build->add_option("--files", tree_opts.files, "number of files");
    build->add_option("--min-size", tree_opts.min_size, "smallest file");
    build->add_option("--max-size", tree_opts.max_size, "largest file");
    build->add_option("--dirs", tree_opts.directories, "number of directories");
    build->add_option("--binary-fraction", tree_opts.binary_fraction, "share of incompressible files");
    build->add_option("--symlink-fraction", tree_opts.symlink_fraction, "share of symlinks");
    build->add_option("--block-size", writer_opts.block_size, "SquashFS block size");
    build->add_option("--from", build_from, "pack this directory instead of a synthetic tree");
    build->add_option("-o,--output", build_image, "image path")->required();
    build->add_option("--manifest", build_manifest, "manifest path (default <image>.manifest.json)");
    build->callback([&] {
        auto tree = build_from.empty() ? corpus::generate_tree(build_seed, tree_opts) : corpus::tree_from_directory(build_from);
        auto built = corpus::build_image(tree, writer_opts);
        write_file_atomic(build_image, built.image);
        emit(build_manifest.empty() ? build_image + ".manifest.json" : build_manifest, corpus::manifest_to_json(built.manifest));
        std::cerr << built.manifest.units.size() << " units, " << built.manifest.files.size() << " files\n";
    });

    auto* inject = corpus_cmd->add_subcommand("inject", "flip bits in an image and record them");
    std::string inj_image, inj_out, inj_manifest;
    std::uint64_t inj_seed = 1;
    std::optional<double> inj_p;
    std::optional<unsigned> inj_k;
    std::vector<std::size_t> inj_units;
    inject->add_option("image", inj_image)->required();
    inject->add_option("-o,--output", inj_out, "corrupted image path")->required();
    inject->add_option("--manifest", inj_manifest, "manifest to append to (default <image>.manifest.json)");
    inject->add_option("--seed", inj_seed, "injection seed");
    auto* p_opt = inject->add_option("--p", inj_p, "per-bit flip probability over all units");
    auto* k_opt = inject->add_option("--k", inj_k, "exact flips per selected unit");
    inject->add_option("--fragment,--unit", inj_units, "units for --k");
    p_opt->excludes(k_opt);
    inject->callback([&] {
        if (!inj_p && !inj_k) throw Error(Errc::invalid_argument, "one of --p or --k is required");
        if (inj_k && inj_units.empty()) throw Error(Errc::invalid_argument, "--k needs --fragment");
        auto image = read_file(inj_image);
        std::string mpath = inj_manifest.empty() ? inj_image + ".manifest.json" : inj_manifest;
        auto manifest = corpus::manifest_from_json(read_text(mpath));
        auto inv = sqfs::build_inventory(image);
        if (inj_p) {
            manifest.injections.push_back(corpus::inject(image, *inj_p, inj_seed, corpus::unit_regions(inv)));
        } else {
            for (std::size_t i = 0; i < inj_units.size(); ++i) {
                if (inj_units[i] >= inv.units.size()) throw Error(Errc::invalid_argument, "unit index out of range");
                manifest.injections.push_back(corpus::inject_exact(image, *inj_k, inv.units[inj_units[i]], inj_seed + i));
            }
        }
        write_file_atomic(inj_out, image);
        emit(inj_out + ".manifest.json", corpus::manifest_to_json(manifest));
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const json::exception& e) {
        std::cerr << "error: malformed JSON: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return code;
}
