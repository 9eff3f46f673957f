#include "squashfix/statistics.hpp"

#include "squashfix/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace squashfix::stats {

std::string_view to_string(LengthUnit unit) { return unit == LengthUnit::Bits ? "bits" : "bytes"; }

LengthUnit length_unit_from_string(std::string_view text) {
    if (text == "bits") return LengthUnit::Bits;
    if (text == "bytes") return LengthUnit::Bytes;
    throw Error(Errc::invalid_argument, "length unit must be bits or bytes");
}

namespace {

double exponent(std::uint64_t len, LengthUnit unit) {
    return unit == LengthUnit::Bits ? 8.0 * static_cast<double>(len) : static_cast<double>(len);
}

void check_lengths(const std::vector<std::uint64_t>& lengths) {
    if (lengths.empty()) throw Error(Errc::invalid_argument, "no unit lengths");
    for (auto l : lengths)
        if (l == 0) throw Error(Errc::invalid_argument, "unit length must be positive");
}

} // namespace

double expected_corrupted(const std::vector<std::uint64_t>& lengths, double p, LengthUnit unit) {
    if (p <= 0.0) return 0.0;
    if (p >= 1.0) return static_cast<double>(lengths.size());
    const double lq = std::log1p(-p);
    double sum = 0.0;
    for (auto l : lengths) sum += -std::expm1(exponent(l, unit) * lq);
    return sum;
}

double estimate_rate(const std::vector<std::uint64_t>& lengths, double corrupted, LengthUnit unit) {
    check_lengths(lengths);
    const double n = static_cast<double>(lengths.size());
    if (corrupted < 0.0 || corrupted > n)
        throw Error(Errc::invalid_argument, "corrupted count exceeds the number of units");
    if (corrupted == 0.0) return 0.0;
    if (corrupted == n) return 1.0;
    // Bisection on log p keeps relative precision for tiny rates.
    double lo = -800.0 * std::log(2.0);
    double hi = 0.0;
    for (int i = 0; i < 200; ++i) {
        double mid = 0.5 * (lo + hi);
        if (expected_corrupted(lengths, std::exp(mid), unit) < corrupted)
            lo = mid;
        else
            hi = mid;
        if (hi - lo < 1e-14) break;
    }
    return std::exp(0.5 * (lo + hi));
}

double hoeffding_t(std::uint64_t n, double tail_prob) {
    if (n == 0) throw Error(Errc::invalid_argument, "n must be positive");
    if (!(tail_prob > 0.0)) throw Error(Errc::invalid_argument, "tail probability must be positive");
    if (tail_prob >= 2.0) return 0.0;
    return std::sqrt(static_cast<double>(n) * std::log(2.0 / tail_prob) / 2.0);
}

Interval rate_interval(const std::vector<std::uint64_t>& lengths, double corrupted, double t, LengthUnit unit) {
    check_lengths(lengths);
    const double n = static_cast<double>(lengths.size());
    Interval iv;
    iv.lo = estimate_rate(lengths, std::clamp(corrupted - t, 0.0, n), unit);
    iv.hi = estimate_rate(lengths, std::clamp(corrupted + t, 0.0, n), unit);
    return iv;
}

RateEstimate estimate_with_interval(const std::vector<std::uint64_t>& lengths, std::uint64_t corrupted,
                                    double confidence, LengthUnit unit) {
    RateEstimate r;
    r.confidence = confidence;
    r.p = estimate_rate(lengths, static_cast<double>(corrupted), unit);
    r.t = hoeffding_t(lengths.size(), 1.0 - confidence);
    auto iv = rate_interval(lengths, static_cast<double>(corrupted), r.t, unit);
    r.p_lo = iv.lo;
    r.p_hi = iv.hi;
    r.bytes_per_flip = r.p > 0.0 ? 1.0 / (8.0 * r.p) : 0.0;
    return r;
}

double corruption_variance(const std::vector<std::uint64_t>& lengths, double p, LengthUnit unit) {
    if (p <= 0.0 || p >= 1.0) return 0.0;
    const double lq = std::log1p(-p);
    double var = 0.0;
    for (auto l : lengths) {
        double clean = std::exp(exponent(l, unit) * lq);
        var += clean * (1.0 - clean);
    }
    return var;
}

RateEstimate chebyshev_interval(const std::vector<std::uint64_t>& lengths, std::uint64_t corrupted,
                                double confidence, LengthUnit unit) {
    RateEstimate r;
    r.confidence = confidence;
    r.p = estimate_rate(lengths, static_cast<double>(corrupted), unit);
    const double tail = 1.0 - confidence;
    if (!(tail > 0.0)) throw Error(Errc::invalid_argument, "confidence must be below 1");
    r.t = std::sqrt(corruption_variance(lengths, r.p, unit) / tail);
    auto iv = rate_interval(lengths, static_cast<double>(corrupted), r.t, unit);
    r.p_lo = iv.lo;
    r.p_hi = iv.hi;
    r.bytes_per_flip = r.p > 0.0 ? 1.0 / (8.0 * r.p) : 0.0;
    return r;
}

double expected_k_flip_count(const std::vector<std::uint64_t>& lengths, double p, unsigned k, LengthUnit unit) {
    double sum = 0.0;
    for (auto l : lengths) {
        const double n = exponent(l, unit);
        if (static_cast<double>(k) > n) continue;
        if (p <= 0.0) {
            sum += k == 0 ? 1.0 : 0.0;
            continue;
        }
        if (p >= 1.0) {
            sum += static_cast<double>(k) == n ? 1.0 : 0.0;
            continue;
        }
        double log_c = std::lgamma(n + 1.0) - std::lgamma(static_cast<double>(k) + 1.0) -
                       std::lgamma(n - static_cast<double>(k) + 1.0);
        if (k <= 3) {
            log_c = 0.0;
            for (unsigned i = 0; i < k; ++i) log_c += std::log(n - i) - std::log(static_cast<double>(i + 1));
        }
        sum += std::exp(log_c + k * std::log(p) + (n - k) * std::log1p(-p));
    }
    return sum;
}

} // namespace squashfix::stats
