#include "inflate_core.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>

namespace squashfix::detail {

namespace {

constexpr std::array<std::uint16_t, 29> kLengthBase = {3,  4,  5,  6,  7,  8,  9,  10, 11,  13,
                                                       15, 17, 19, 23, 27, 31, 35, 43, 51,  59,
                                                       67, 83, 99, 115, 131, 163, 195, 227, 258};
constexpr std::array<std::uint8_t, 29> kLengthExtra = {0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2,
                                                       2, 3, 3, 3, 3, 4, 4, 4, 4, 5, 5, 5, 5, 0};
constexpr std::array<std::uint16_t, 30> kDistBase = {1,    2,    3,    4,    5,    7,     9,     13,    17,  25,
                                                     33,   49,   65,   97,   129,  193,   257,   385,   513, 769,
                                                     1025, 1537, 2049, 3073, 4097, 6145, 8193, 12289, 16385, 24577};
constexpr std::array<std::uint8_t, 30> kDistExtra = {0, 0, 0, 0, 1, 1, 2, 2,  3,  3,  4,  4,  5,  5,  6,
                                                     6, 7, 7, 8, 8, 9, 9, 10, 10, 11, 11, 12, 12, 13, 13};
constexpr std::array<std::uint8_t, 19> kCodeLengthOrder = {16, 17, 18, 0, 8, 7, 9, 6, 10, 5,
                                                           11, 4,  12, 3, 13, 2, 14, 1, 15};

inline std::uint64_t peek(const std::uint8_t* in, std::uint64_t bit) {
    std::uint64_t v;
    std::memcpy(&v, in + (bit >> 3), sizeof v);
    if constexpr (std::endian::native == std::endian::big) v = __builtin_bswap64(v);
    return v >> (bit & 7);
}

inline std::uint32_t mask(unsigned bits) { return (1u << bits) - 1u; }

inline HuffEntry lookup(const HuffEntry* table, unsigned root, std::uint64_t window) {
    HuffEntry e = table[window & mask(root)];
    if (e.op & kOpLink) e = table[e.value + ((window >> root) & mask(e.op & 15u))];
    return e;
}

inline unsigned reverse_bits(unsigned code, unsigned len) {
    unsigned r = 0;
    for (unsigned i = 0; i < len; ++i) {
        r = (r << 1) | (code & 1u);
        code >>= 1;
    }
    return r;
}

HuffEntry make_entry(unsigned sym, unsigned len, CodeKind kind) {
    auto bits = static_cast<std::uint8_t>(len);
    switch (kind) {
    case CodeKind::CodeLengths:
        return {static_cast<std::uint16_t>(sym), bits, kOpLiteral};
    case CodeKind::LitLen:
        if (sym < 256) return {static_cast<std::uint16_t>(sym), bits, kOpLiteral};
        if (sym == 256) return {0, bits, kOpEnd};
        if (sym < 286)
            return {kLengthBase[sym - 257], bits, static_cast<std::uint8_t>(kOpBase | kLengthExtra[sym - 257])};
        return {0, bits, kOpInvalid};
    case CodeKind::Dist:
        if (sym < 30) return {kDistBase[sym], bits, static_cast<std::uint8_t>(kOpBase | kDistExtra[sym])};
        return {0, bits, kOpInvalid};
    }
    return {0, bits, kOpInvalid};
}

struct Runner {
    const RunTarget& t;
    CodeArena& arena;
    std::uint64_t end_bits;
    Cursor c;

    RunResult fail(Fail f, std::uint64_t bits_examined) const {
        RunResult r;
        r.fail = f;
        r.consumed = static_cast<std::size_t>(std::min<std::uint64_t>(t.len, (bits_examined + 7) / 8));
        r.out = c.out;
        return r;
    }
    RunResult out_of_input() const { return fail(Fail::Deflate, end_bits); }

    template <bool Record>
    void record(std::vector<Cursor>* snaps) const {
        if constexpr (Record) {
            if (!snaps->empty() && snaps->back().bit == c.bit && snaps->back().phase == c.phase &&
                snaps->back().out == c.out)
                return;
            snaps->push_back(c);
        }
    }

    // Parses a dynamic block header into `codes`; returns Fail::None on success.
    bool read_dynamic(BlockCodes& codes, RunResult& error) {
        const std::uint8_t* in = t.in;
        if (c.bit + 14 > end_bits) return error = out_of_input(), false;
        std::uint64_t w = peek(in, c.bit);
        unsigned nlen = static_cast<unsigned>(w & 31u) + 257;
        unsigned ndist = static_cast<unsigned>((w >> 5) & 31u) + 1;
        unsigned ncode = static_cast<unsigned>((w >> 10) & 15u) + 4;
        c.bit += 14;
        if (nlen > 286 || ndist > 30) return error = fail(Fail::Deflate, c.bit), false;

        std::uint8_t cl[19] = {};
        if (c.bit + 3 * ncode > end_bits) return error = out_of_input(), false;
        for (unsigned i = 0; i < ncode; ++i) {
            cl[kCodeLengthOrder[i]] = static_cast<std::uint8_t>(peek(in, c.bit) & 7u);
            c.bit += 3;
        }
        thread_local HuffTable cl_table;
        if (!cl_table.build(cl, 19, CodeKind::CodeLengths, 7)) return error = fail(Fail::Deflate, c.bit), false;

        std::uint8_t lens[320];
        unsigned n = 0;
        const unsigned total = nlen + ndist;
        const HuffEntry* table = cl_table.data();
        const unsigned root = cl_table.root_bits();
        while (n < total) {
            if (c.bit > end_bits) return error = out_of_input(), false;
            w = peek(in, c.bit);
            HuffEntry e = table[w & mask(root)];
            if (c.bit + e.bits > end_bits) return error = out_of_input(), false;
            if (e.op & kOpInvalid) return error = fail(Fail::Deflate, c.bit + e.bits), false;
            unsigned sym = e.value;
            if (sym < 16) {
                lens[n++] = static_cast<std::uint8_t>(sym);
                c.bit += e.bits;
                continue;
            }
            unsigned rep = 0;
            unsigned nb = 0;
            std::uint8_t value = 0;
            if (sym == 16) {
                nb = e.bits + 2u;
                if (n == 0) return error = fail(Fail::Deflate, c.bit + nb), false;
                value = lens[n - 1];
                rep = 3 + static_cast<unsigned>((w >> e.bits) & 3u);
            } else if (sym == 17) {
                nb = e.bits + 3u;
                rep = 3 + static_cast<unsigned>((w >> e.bits) & 7u);
            } else {
                nb = e.bits + 7u;
                rep = 11 + static_cast<unsigned>((w >> e.bits) & 127u);
            }
            if (c.bit + nb > end_bits) return error = out_of_input(), false;
            if (n + rep > total) return error = fail(Fail::Deflate, c.bit + nb), false;
            std::memset(lens + n, value, rep);
            n += rep;
            c.bit += nb;
        }
        if (lens[256] == 0) return error = fail(Fail::Deflate, c.bit), false;
        if (!codes.litlen.build(lens, nlen, CodeKind::LitLen, 10)) return error = fail(Fail::Deflate, c.bit), false;
        if (!codes.dist.build(lens + nlen, ndist, CodeKind::Dist, 8)) return error = fail(Fail::Deflate, c.bit), false;
        return true;
    }

    static void copy_match(std::uint8_t* dst, unsigned dist, unsigned length) {
        const std::uint8_t* src = dst - dist;
        if (dist >= length) {
            std::memcpy(dst, src, length);
        } else if (dist >= 8) {
            while (length >= 8) {
                std::memcpy(dst, src, 8);
                dst += 8;
                src += 8;
                length -= 8;
            }
            while (length--) *dst++ = *src++;
        } else {
            while (length--) *dst++ = *src++;
        }
    }

    template <bool Record>
    RunResult run(std::vector<Cursor>* snaps) {
        const std::uint8_t* in = t.in;
        std::uint8_t* out = t.out;
        const std::size_t max_len = t.max_len;
        record<Record>(snaps);

        if (c.phase == Phase::StreamHeader) {
            if (t.len < 2) return fail(Fail::Header, end_bits);
            unsigned cmf = in[0];
            unsigned flg = in[1];
            if ((cmf & 15u) != 8 || (cmf >> 4) > 7 || ((cmf << 8) | flg) % 31 != 0 || (flg & 0x20u))
                return fail(Fail::Header, 16);
            c.bit = 16;
            c.phase = Phase::BlockHeader;
        }

        for (;;) {
            if (c.phase == Phase::BlockHeader) {
                record<Record>(snaps);
                if (c.bit + 3 > end_bits) return out_of_input();
                std::uint64_t w = peek(in, c.bit);
                c.last = (w & 1u) != 0;
                unsigned type = static_cast<unsigned>((w >> 1) & 3u);
                c.bit += 3;
                if (type == 0) {
                    std::uint64_t byte = (c.bit + 7) >> 3;
                    if (byte + 4 > t.len) return out_of_input();
                    unsigned len = load16(in + byte);
                    unsigned nlen = load16(in + byte + 2);
                    if (len != (~nlen & 0xFFFFu)) return fail(Fail::Deflate, (byte + 4) * 8);
                    if (c.out + len > max_len) return fail(Fail::TooLong, (byte + 4) * 8);
                    if (byte + 4 + len > t.len) return out_of_input();
                    std::memcpy(out + c.out, in + byte + 4, len);
                    c.out += len;
                    c.bit = (byte + 4 + len) * 8;
                    if (c.last) break;
                    continue;
                }
                if (type == 1) {
                    c.codes = &fixed_codes();
                } else if (type == 2) {
                    BlockCodes& codes = arena.acquire();
                    RunResult error;
                    if (!read_dynamic(codes, error)) return error;
                    c.codes = &codes;
                } else {
                    return fail(Fail::Deflate, c.bit);
                }
                c.phase = Phase::Symbols;
            }

            const HuffEntry* lt = c.codes->litlen.data();
            const unsigned lroot = c.codes->litlen.root_bits();
            const HuffEntry* dt = c.codes->dist.data();
            const unsigned droot = c.codes->dist.root_bits();
            for (;;) {
                record<Record>(snaps);
                std::uint64_t w = peek(in, c.bit);
                HuffEntry e = lookup(lt, lroot, w);
                if (e.op == kOpLiteral) {
                    if (c.bit + e.bits > end_bits) return out_of_input();
                    if (c.out >= max_len) return fail(Fail::TooLong, c.bit + e.bits);
                    out[c.out++] = static_cast<std::uint8_t>(e.value);
                    c.bit += e.bits;
                    continue;
                }
                if (e.op == kOpEnd) {
                    if (c.bit + e.bits > end_bits) return out_of_input();
                    c.bit += e.bits;
                    break;
                }
                if (e.op & kOpInvalid) {
                    if (c.bit + e.bits > end_bits) return out_of_input();
                    return fail(Fail::Deflate, c.bit + e.bits);
                }
                unsigned extra = e.op & 15u;
                unsigned nb = e.bits + extra;
                unsigned length = e.value + static_cast<unsigned>((w >> e.bits) & mask(extra));
                if (c.bit + nb > end_bits) return out_of_input();
                if (c.out + length > max_len) return fail(Fail::TooLong, c.bit + nb);
                std::uint64_t w2 = w >> nb;
                HuffEntry d = lookup(dt, droot, w2);
                if (d.op & kOpInvalid) {
                    if (c.bit + nb + d.bits > end_bits) return out_of_input();
                    return fail(Fail::Deflate, c.bit + nb + d.bits);
                }
                unsigned dextra = d.op & 15u;
                unsigned total = nb + d.bits + dextra;
                if (c.bit + total > end_bits) return out_of_input();
                unsigned dist = d.value + static_cast<unsigned>((w2 >> d.bits) & mask(dextra));
                if (dist > c.out) return fail(Fail::Deflate, c.bit + total);
                copy_match(out + c.out, dist, length);
                c.out += length;
                c.bit += total;
            }
            if (c.last) break;
            c.phase = Phase::BlockHeader;
        }

        RunResult r;
        r.out = c.out;
        r.trailer = static_cast<std::size_t>((c.bit + 7) >> 3);
        if (r.trailer + 4 > t.len) return out_of_input();
        r.consumed = r.trailer + 4;
        return r;
    }

    static unsigned load16(const std::uint8_t* p) { return static_cast<unsigned>(p[0] | (p[1] << 8)); }
};

} // namespace

bool HuffTable::build(const std::uint8_t* lengths, unsigned count, CodeKind kind, unsigned root) {
    unsigned bl_count[16] = {};
    for (unsigned i = 0; i < count; ++i) ++bl_count[lengths[i]];
    bl_count[0] = 0;
    unsigned max = 15;
    while (max > 0 && bl_count[max] == 0) --max;
    unsigned min = 1;
    while (min < max && bl_count[min] == 0) ++min;

    int left = 1;
    for (unsigned len = 1; len <= 15; ++len) {
        left <<= 1;
        left -= static_cast<int>(bl_count[len]);
        if (left < 0) return false; // over-subscribed
    }
    if (max == 0) {
        // Only a distance code may be empty; any use of it is an error.
        if (kind != CodeKind::Dist) return false;
        root_ = 1;
        entries_.assign(2, HuffEntry{0, 1, kOpInvalid});
        return true;
    }
    if (left > 0 && (kind == CodeKind::CodeLengths || max != 1)) return false; // incomplete

    root_ = std::clamp(root, min, max);
    unsigned next_code[16] = {};
    unsigned code = 0;
    for (unsigned bits = 1; bits <= 15; ++bits) {
        code = (code + bl_count[bits - 1]) << 1;
        next_code[bits] = code;
    }

    const unsigned root_size = 1u << root_;
    const unsigned sub_bits = max > root_ ? max - root_ : 0;
    entries_.assign(root_size, HuffEntry{0, static_cast<std::uint8_t>(root_), kOpInvalid});
    std::vector<int> link(sub_bits ? root_size : 0, -1);

    for (unsigned sym = 0; sym < count; ++sym) {
        unsigned len = lengths[sym];
        if (len == 0) continue;
        unsigned rev = reverse_bits(next_code[len]++, len);
        HuffEntry e = make_entry(sym, len, kind);
        if (len <= root_) {
            for (unsigned k = rev; k < root_size; k += 1u << len) entries_[k] = e;
            continue;
        }
        unsigned lo = rev & (root_size - 1);
        if (link[lo] < 0) {
            link[lo] = static_cast<int>(entries_.size());
            entries_.resize(entries_.size() + (1u << sub_bits),
                            HuffEntry{0, static_cast<std::uint8_t>(root_ + sub_bits), kOpInvalid});
            entries_[lo] = HuffEntry{static_cast<std::uint16_t>(link[lo]), static_cast<std::uint8_t>(root_),
                                     static_cast<std::uint8_t>(kOpLink | sub_bits)};
        }
        unsigned hi = rev >> root_;
        for (unsigned k = hi; k < (1u << sub_bits); k += 1u << (len - root_))
            entries_[static_cast<unsigned>(link[lo]) + k] = e;
    }
    return true;
}

const BlockCodes& fixed_codes() {
    static const BlockCodes codes = [] {
        BlockCodes c;
        std::uint8_t lens[288];
        std::fill(lens, lens + 144, 8);
        std::fill(lens + 144, lens + 256, 9);
        std::fill(lens + 256, lens + 280, 7);
        std::fill(lens + 280, lens + 288, 8);
        c.litlen.build(lens, 288, CodeKind::LitLen, 10);
        std::uint8_t dl[32];
        std::fill(dl, dl + 32, 5);
        c.dist.build(dl, 32, CodeKind::Dist, 8);
        return c;
    }();
    return codes;
}

RunResult run_inflate(const Cursor& start, const RunTarget& target, CodeArena& arena,
                      std::vector<Cursor>* snapshots) {
    Runner runner{target, arena, static_cast<std::uint64_t>(target.len) * 8, start};
    if (snapshots) return runner.run<true>(snapshots);
    return runner.run<false>(nullptr);
}

void adler_update(std::uint32_t& a, std::uint32_t& b, const std::uint8_t* data, std::size_t len) {
    constexpr std::uint32_t kMod = 65521;
    constexpr std::size_t kChunk = 5552;
    while (len > 0) {
        std::size_t n = std::min(len, kChunk);
        len -= n;
        while (n >= 4) {
            a += data[0];
            b += a;
            a += data[1];
            b += a;
            a += data[2];
            b += a;
            a += data[3];
            b += a;
            data += 4;
            n -= 4;
        }
        while (n--) {
            a += *data++;
            b += a;
        }
        a %= kMod;
        b %= kMod;
    }
}

void fill_snapshot_adler(std::vector<Cursor>& snapshots, std::size_t first, const std::uint8_t* out) {
    for (std::size_t k = first + 1; k < snapshots.size(); ++k) {
        std::uint32_t a = snapshots[k - 1].adler_a;
        std::uint32_t b = snapshots[k - 1].adler_b;
        adler_update(a, b, out + snapshots[k - 1].out, snapshots[k].out - snapshots[k - 1].out);
        snapshots[k].adler_a = a;
        snapshots[k].adler_b = b;
    }
}

void index_snapshots(const std::vector<Cursor>& snapshots, std::size_t first_byte, std::size_t len,
                     std::vector<std::uint32_t>& index) {
    index.resize(len + 1);
    std::size_t k = 0;
    for (std::size_t b = first_byte; b <= len; ++b) {
        while (k + 1 < snapshots.size() && snapshots[k + 1].bit <= 8 * static_cast<std::uint64_t>(b)) ++k;
        index[b] = static_cast<std::uint32_t>(k);
    }
}

Outcome finish(const Cursor& start, const RunResult& run, const RunTarget& target, bool strict) {
    Outcome o;
    o.fail = run.fail;
    o.consumed = run.consumed;
    o.out = run.out;
    if (run.fail != Fail::None) return o;
    std::uint32_t a = start.adler_a;
    std::uint32_t b = start.adler_b;
    adler_update(a, b, target.out + start.out, run.out - start.out);
    o.computed = (b << 16) | a;
    const std::uint8_t* p = target.in + run.trailer;
    o.stored = (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
               (static_cast<std::uint32_t>(p[2]) << 8) | p[3];
    o.adler_ok = o.computed == o.stored;
    if (strict && run.consumed < target.len) {
        o.fail = Fail::Deflate;
        o.consumed = target.len;
    }
    return o;
}

} // namespace squashfix::detail
