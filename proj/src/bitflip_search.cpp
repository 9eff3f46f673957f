#include "squashfix/bitflip_search.hpp"

#include "inflate_core.hpp"
#include "squashfix/checkpoint.hpp"
#include "squashfix/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <mutex>
#include <string_view>
#include <thread>
#include <unordered_map>

namespace squashfix::search {

using detail::CodeArena;
using detail::Cursor;
using detail::Fail;
using detail::RunTarget;

std::string_view to_string(Model model) { return model == Model::OneFlip ? "1flip" : "2flip"; }

Model model_from_string(std::string_view text) {
    if (text == "1flip") return Model::OneFlip;
    if (text == "2flip") return Model::TwoFlip;
    throw Error(Errc::invalid_argument, "unknown model: " + std::string(text));
}

Shard parse_shard(const std::string& text) {
    auto slash = text.find('/');
    if (slash == std::string::npos) throw Error(Errc::invalid_shard, "shard must be i/m: " + text);
    Shard s;
    try {
        s.index = static_cast<std::uint32_t>(std::stoul(text.substr(0, slash)));
        s.total = static_cast<std::uint32_t>(std::stoul(text.substr(slash + 1)));
    } catch (const std::exception&) {
        throw Error(Errc::invalid_shard, "shard must be i/m: " + text);
    }
    if (s.total == 0 || s.index >= s.total) throw Error(Errc::invalid_shard, "shard index out of range: " + text);
    return s;
}

std::string to_string(Shard shard) { return std::to_string(shard.index) + "/" + std::to_string(shard.total); }

namespace {

// Pairs {a < b} with a in [0, first): sum over a of (bits - 1 - a).
unsigned __int128 pairs_before(std::uint64_t first, std::uint64_t bits) {
    if (first == 0) return 0;
    unsigned __int128 f = first;
    return f * (bits - 1) - f * (f - 1) / 2;
}

struct Baseline {
    std::size_t len = 0;
    std::size_t max_len = 0;
    bool strict = false;
    Bytes input; // padded
    std::vector<Cursor> snaps;
    std::vector<std::uint32_t> index;
    Bytes out;
    CodeArena arena;
    detail::Outcome outcome;

    Baseline(ByteView fragment, std::size_t cap, zlib::OracleOptions options)
        : len(fragment.size()), max_len(cap), strict(options.strict), input(fragment.size() + detail::kInputPadding, 0),
          out(cap) {
        if (!fragment.empty()) std::memcpy(input.data(), fragment.data(), fragment.size());
        RunTarget t{input.data(), len, out.data(), max_len};
        Cursor start;
        auto run = detail::run_inflate(start, t, arena, &snaps);
        outcome = detail::finish(start, run, t, strict);
        detail::fill_snapshot_adler(snaps, 0, out.data());
        detail::index_snapshots(snaps, 0, len, index);
    }
};

class Worker {
public:
    explicit Worker(const Baseline& base)
        : base_(base), cand_(base.input), out_(base.out), base_valid_(static_cast<std::uint32_t>(base.out.size())) {}

    bool evaluate_single(std::uint64_t pos) {
        const Cursor& s = base_.snaps[base_.index[pos >> 3]];
        restore_base(s.out);
        flip(pos);
        bool ok = run_from(s);
        flip(pos);
        base_valid_ = std::min(base_valid_, s.out);
        return ok;
    }

    // Evaluates every pair {a, b} with b > a. Returns false if cancelled.
    bool evaluate_first(std::uint64_t a, std::vector<Hit>& hits, const std::atomic<bool>* cancel) {
        const Cursor& s = base_.snaps[base_.index[a >> 3]];
        restore_base(s.out);
        flip(a);
        p_snaps_.clear();
        p_arena_.reset();
        RunTarget t{cand_.data(), base_.len, out_.data(), base_.max_len};
        auto run = detail::run_inflate(s, t, p_arena_, &p_snaps_);
        auto outcome = detail::finish(s, run, t, base_.strict);
        base_valid_ = std::min(base_valid_, s.out);
        detail::fill_snapshot_adler(p_snaps_, 0, out_.data());
        detail::index_snapshots(p_snaps_, a >> 3, base_.len, p_index_);
        const std::uint32_t p_begin = s.out;
        std::uint32_t p_valid = run.out;
        p_out_.assign(out_.begin() + p_begin, out_.begin() + run.out);

        std::uint64_t end = 8 * static_cast<std::uint64_t>(base_.len);
        bool alone_valid = outcome.fail == Fail::None && outcome.adler_ok;
        if (!alone_valid) end = std::min<std::uint64_t>(end, 8 * static_cast<std::uint64_t>(outcome.consumed));

        bool finished = true;
        std::uint64_t step = 0;
        for (std::uint64_t b = end; b-- > a + 1;) {
            if (cancel && (++step & 4095u) == 0 && cancel->load(std::memory_order_relaxed)) {
                finished = false;
                break;
            }
            const Cursor& sb = p_snaps_[p_index_[b >> 3]];
            if (p_valid < sb.out) {
                std::memcpy(out_.data() + p_valid, p_out_.data() + (p_valid - p_begin), sb.out - p_valid);
                p_valid = sb.out;
            }
            flip(b);
            bool ok = run_from(sb);
            flip(b);
            p_valid = std::min(p_valid, sb.out);
            if (ok) {
                Hit h;
                h.count = 2;
                h.pos = {static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
                hits.push_back(h);
            }
        }
        flip(a);
        return finished;
    }

private:
    void flip(std::uint64_t pos) { cand_[pos >> 3] ^= static_cast<std::uint8_t>(1u << (pos & 7)); }

    void restore_base(std::uint32_t upto) {
        if (base_valid_ < upto) {
            std::memcpy(out_.data() + base_valid_, base_.out.data() + base_valid_, upto - base_valid_);
            base_valid_ = upto;
        }
    }

    bool run_from(const Cursor& s) {
        scratch_.reset();
        RunTarget t{cand_.data(), base_.len, out_.data(), base_.max_len};
        auto run = detail::run_inflate(s, t, scratch_, nullptr);
        auto outcome = detail::finish(s, run, t, base_.strict);
        return outcome.fail == Fail::None && outcome.adler_ok;
    }

    const Baseline& base_;
    Bytes cand_;
    Bytes out_;
    std::uint32_t base_valid_;
    CodeArena scratch_;
    CodeArena p_arena_;
    std::vector<Cursor> p_snaps_;
    std::vector<std::uint32_t> p_index_;
    Bytes p_out_;
};

unsigned effective_jobs(unsigned requested, std::uint64_t work_items) {
    unsigned jobs = requested == 0 ? std::max(1u, std::thread::hardware_concurrency()) : requested;
    if (work_items < jobs) jobs = static_cast<unsigned>(std::max<std::uint64_t>(1, work_items));
    return jobs;
}

} // namespace

std::size_t prefix_limit(ByteView fragment, std::size_t max_len, zlib::OracleOptions options) {
    auto v = zlib::check_candidate(fragment, max_len, options);
    if (v.valid()) throw Error(Errc::already_valid, "fragment already passes the oracle");
    return v.consumed < fragment.size() ? v.consumed : fragment.size();
}

std::vector<Target> materialize(ByteView fragment, std::size_t max_len, std::vector<Hit> hits,
                                zlib::OracleOptions options) {
    std::sort(hits.begin(), hits.end());
    hits.erase(std::unique(hits.begin(), hits.end()), hits.end());
    std::vector<Target> targets;
    std::unordered_map<std::size_t, std::vector<std::size_t>> seen;
    Bytes work(fragment.begin(), fragment.end());
    for (const auto& h : hits) {
        for (std::uint8_t k = 0; k < h.count; ++k) work[h.pos[k] >> 3] ^= static_cast<std::uint8_t>(1u << (h.pos[k] & 7));
        auto v = zlib::check_candidate(work, max_len, options);
        for (std::uint8_t k = 0; k < h.count; ++k) work[h.pos[k] >> 3] ^= static_cast<std::uint8_t>(1u << (h.pos[k] & 7));
        if (!v.valid()) continue;
        auto key = std::hash<std::string_view>{}(
            std::string_view(reinterpret_cast<const char*>(v.payload.data()), v.payload.size()));
        auto& bucket = seen[key];
        bool duplicate = std::any_of(bucket.begin(), bucket.end(),
                                     [&](std::size_t i) { return targets[i].payload == v.payload; });
        if (duplicate) continue;
        bucket.push_back(targets.size());
        Target t;
        t.flips.assign(h.pos.begin(), h.pos.begin() + h.count);
        t.payload = std::move(v.payload);
        targets.push_back(std::move(t));
    }
    return targets;
}

TargetSet repair_1flip(ByteView fragment, std::size_t max_len, std::size_t limit, const SearchOptions& options,
                       std::size_t fragment_index) {
    limit = std::min(limit, fragment.size());
    Baseline base(fragment, max_len, options.oracle);
    const std::uint64_t total = 8 * static_cast<std::uint64_t>(limit);
    constexpr std::uint64_t kChunk = 256;
    const std::uint64_t chunks = (total + kChunk - 1) / kChunk;
    const unsigned jobs = effective_jobs(options.jobs, chunks);

    std::atomic<std::uint64_t> next{0};
    std::mutex mu;
    std::vector<Hit> hits;
    auto work = [&] {
        Worker w(base);
        std::vector<Hit> local;
        for (;;) {
            std::uint64_t c = next.fetch_add(1);
            if (c >= chunks) break;
            // Chunks are handed out from the top so each worker's positions descend.
            std::uint64_t hi = total - c * kChunk;
            std::uint64_t lo = hi > kChunk ? hi - kChunk : 0;
            for (std::uint64_t p = hi; p-- > lo;) {
                if (w.evaluate_single(p)) {
                    Hit h;
                    h.count = 1;
                    h.pos = {static_cast<std::uint32_t>(p), 0};
                    local.push_back(h);
                }
            }
        }
        std::lock_guard lock(mu);
        hits.insert(hits.end(), local.begin(), local.end());
    };
    if (jobs == 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned i = 0; i < jobs; ++i) pool.emplace_back(work);
    }

    TargetSet ts;
    ts.fragment_index = fragment_index;
    ts.prefix_limit = limit;
    ts.search_budget.one_flip = total;
    ts.targets = materialize(fragment, max_len, std::move(hits), options.oracle);
    return ts;
}

std::pair<std::uint64_t, std::uint64_t> shard_range(std::size_t fragment_len, std::size_t limit, Shard shard) {
    if (shard.total == 0 || shard.index >= shard.total) throw Error(Errc::invalid_shard, "invalid shard");
    const std::uint64_t bits = 8 * static_cast<std::uint64_t>(fragment_len);
    const std::uint64_t first = 8 * static_cast<std::uint64_t>(std::min(limit, fragment_len));
    const unsigned __int128 total = pairs_before(first, bits);

    // Smallest a in [0, first] with pairs_before(a) >= target.
    auto boundary = [&](unsigned __int128 target) -> std::uint64_t {
        if (target == 0) return 0;
        if (target >= total) return first;
        long double n2 = 2.0L * static_cast<long double>(bits) - 1.0L;
        long double disc = n2 * n2 - 8.0L * static_cast<long double>(target);
        long double guess = (n2 - std::sqrt(std::max(0.0L, disc))) / 2.0L;
        auto a = static_cast<std::uint64_t>(std::clamp(guess, 0.0L, static_cast<long double>(first)));
        while (a > 0 && pairs_before(a - 1, bits) >= target) --a;
        while (a < first && pairs_before(a, bits) < target) ++a;
        return a;
    };
    auto lo = boundary(total * shard.index / shard.total);
    auto hi = shard.index + 1 == shard.total ? first : boundary(total * (shard.index + 1) / shard.total);
    return {lo, hi};
}

CostEstimate estimate_cost(std::size_t fragment_len, std::size_t limit, Model model) {
    CostEstimate c;
    limit = std::min(limit, fragment_len);
    if (model == Model::OneFlip) {
        c.candidates = 8 * static_cast<std::uint64_t>(limit);
    } else {
        c.candidates = static_cast<std::uint64_t>(
            pairs_before(8 * static_cast<std::uint64_t>(limit), 8 * static_cast<std::uint64_t>(fragment_len)));
    }
    c.predicted_inflate_bytes = c.candidates * fragment_len;
    return c;
}

PartialResult repair_2flip(ByteView fragment, std::size_t max_len, std::size_t limit, Shard shard,
                           const SearchOptions& options, std::size_t fragment_index) {
    limit = std::min(limit, fragment.size());
    auto [begin, end] = shard_range(fragment.size(), limit, shard);
    const std::uint64_t bits = 8 * static_cast<std::uint64_t>(fragment.size());

    PartialResult result;
    result.first_begin = begin;
    result.first_end = end;
    result.targets.fragment_index = fragment_index;
    result.targets.prefix_limit = limit;

    std::vector<Hit> hits;
    std::uint64_t frontier = begin;
    const auto& cp_cfg = options.checkpoint;
    if (!cp_cfg.path.empty()) {
        if (auto cp = load_checkpoint(cp_cfg.path)) {
            if (cp->fragment != fragment_index || cp->shard.index != shard.index || cp->shard.total != shard.total ||
                (!cp_cfg.fragment_id.empty() && !cp->fragment_id.empty() && cp->fragment_id != cp_cfg.fragment_id))
                throw Error(Errc::checkpoint_mismatch, "checkpoint does not match " + cp_cfg.path.string());
            frontier = std::clamp<std::uint64_t>(cp->resume_position, begin, end);
            if (cp->complete) frontier = end;
            hits = std::move(cp->hits);
        }
    }

    Baseline base(fragment, max_len, options.oracle);
    const std::uint64_t todo = end - frontier;
    std::uint64_t allowed = todo;
    if (options.max_first_positions) allowed = std::min(allowed, options.max_first_positions);

    std::mutex mu;
    std::vector<std::uint8_t> done(static_cast<std::size_t>(todo), 0);
    const std::uint64_t start_frontier = frontier;
    std::atomic<std::uint64_t> next{0};
    auto last_flush = std::chrono::steady_clock::now();
    std::uint64_t completed = 0;

    auto write_checkpoint = [&](bool complete) {
        if (cp_cfg.path.empty()) return;
        Checkpoint cp;
        cp.fragment = fragment_index;
        cp.fragment_id = cp_cfg.fragment_id;
        cp.shard = shard;
        cp.resume_position = frontier;
        cp.complete = complete;
        cp.hits = hits;
        std::sort(cp.hits.begin(), cp.hits.end());
        cp.hits.erase(std::unique(cp.hits.begin(), cp.hits.end()), cp.hits.end());
        save_checkpoint(cp_cfg.path, cp);
    };

    auto work = [&] {
        Worker w(base);
        std::vector<Hit> local;
        for (;;) {
            if (options.cancel && options.cancel->load(std::memory_order_relaxed)) break;
            std::uint64_t k = next.fetch_add(1);
            if (k >= allowed) break;
            std::uint64_t a = start_frontier + k;
            local.clear();
            if (!w.evaluate_first(a, local, options.cancel)) break;
            std::lock_guard lock(mu);
            hits.insert(hits.end(), local.begin(), local.end());
            done[static_cast<std::size_t>(k)] = 1;
            ++completed;
            while (frontier < end && done[static_cast<std::size_t>(frontier - start_frontier)]) ++frontier;
            if (options.progress) options.progress(completed, allowed);
            auto now = std::chrono::steady_clock::now();
            if (now - last_flush >= cp_cfg.flush_interval) {
                write_checkpoint(false);
                last_flush = now;
            }
        }
    };

    const unsigned jobs = effective_jobs(options.jobs, allowed);
    if (allowed > 0) {
        if (jobs == 1) {
            work();
        } else {
            std::vector<std::jthread> pool;
            for (unsigned i = 0; i < jobs; ++i) pool.emplace_back(work);
        }
    }

    result.complete = frontier >= end;
    result.resume_position = frontier;
    write_checkpoint(result.complete);

    result.targets.search_budget.two_flip =
        static_cast<std::uint64_t>(pairs_before(frontier, bits) - pairs_before(begin, bits));
    result.targets.targets = materialize(fragment, max_len, std::move(hits), options.oracle);
    return result;
}

TargetSet merge_partials(ByteView fragment, std::size_t max_len, const std::vector<TargetSet>& parts,
                         zlib::OracleOptions options) {
    TargetSet merged;
    std::vector<Hit> hits;
    for (const auto& part : parts) {
        merged.fragment_index = part.fragment_index;
        merged.prefix_limit = std::max(merged.prefix_limit, part.prefix_limit);
        merged.search_budget.one_flip += part.search_budget.one_flip;
        merged.search_budget.two_flip += part.search_budget.two_flip;
        for (const auto& t : part.targets) {
            Hit h;
            h.count = static_cast<std::uint8_t>(t.flips.size());
            for (std::size_t k = 0; k < t.flips.size() && k < 2; ++k) h.pos[k] = t.flips[k];
            hits.push_back(h);
        }
    }
    merged.targets = materialize(fragment, max_len, std::move(hits), options);
    return merged;
}

} // namespace squashfix::search
