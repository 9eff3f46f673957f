#pragma once

// Bernoulli bitflip model: rate estimation from the number of corrupted units,
// Hoeffding and Chebyshev confidence intervals and expected k-flip counts.
//
// Unit lengths are given in bytes. With LengthUnit::Bits (default) the
// exponent uses 8 * length, which is what a per-bit probability requires;
// LengthUnit::Bytes uses the byte count directly.

#include <cstdint>
#include <string_view>
#include <vector>

namespace squashfix::stats {

enum class LengthUnit { Bits, Bytes };

std::string_view to_string(LengthUnit unit);
LengthUnit length_unit_from_string(std::string_view text);

struct RateEstimate {
    double p = 0.0;
    double p_lo = 0.0;
    double p_hi = 0.0;
    double confidence = 0.0;
    double t = 0.0;
    double bytes_per_flip = 0.0; // 1/(8p); 0 when p == 0
};

/// Solves sum_i [1 - (1-p)^len_i] = corrupted for p by bisection.
/// `corrupted` may be fractional (interval endpoints).
double estimate_rate(const std::vector<std::uint64_t>& lengths, double corrupted,
                     LengthUnit unit = LengthUnit::Bits);

/// Expected number of corrupted units at rate p.
double expected_corrupted(const std::vector<std::uint64_t>& lengths, double p, LengthUnit unit = LengthUnit::Bits);

/// t = sqrt(n ln(2/tail) / 2), solving 2 exp(-2 t^2 / n) = tail.
double hoeffding_t(std::uint64_t n, double tail_prob);

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

Interval rate_interval(const std::vector<std::uint64_t>& lengths, double corrupted, double t,
                       LengthUnit unit = LengthUnit::Bits);

/// Hoeffding interval at the given confidence (tail = 1 - confidence).
RateEstimate estimate_with_interval(const std::vector<std::uint64_t>& lengths, std::uint64_t corrupted,
                                    double confidence, LengthUnit unit = LengthUnit::Bits);

/// sum_i Var(Y_i) at rate p, Y_i the corruption indicator of unit i.
double corruption_variance(const std::vector<std::uint64_t>& lengths, double p, LengthUnit unit = LengthUnit::Bits);

/// Chebyshev bound: |S - E S| < t with t = sqrt(Var / tail), the variance
/// evaluated at the point estimate.
RateEstimate chebyshev_interval(const std::vector<std::uint64_t>& lengths, std::uint64_t corrupted,
                                double confidence, LengthUnit unit = LengthUnit::Bits);

/// sum_i C(n_i, k) p^k (1-p)^(n_i - k), in log space.
double expected_k_flip_count(const std::vector<std::uint64_t>& lengths, double p, unsigned k,
                             LengthUnit unit = LengthUnit::Bits);

} // namespace squashfix::stats
