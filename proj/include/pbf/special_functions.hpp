#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>

#include <boost/math/special_functions/erf.hpp>

namespace pbf {

inline constexpr double kLogSqrt2Pi = 0.91893853320467274178032973640562;

/// log(1 + exp(x)) without overflow.
inline double log1pExp(double x) noexcept {
    if (x > 35.0) return x;
    if (x < -35.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

/// log Phi(x) for the standard normal CDF, accurate in the far lower tail.
inline double logNormalCdf(double x) noexcept {
    if (x > 5.0) return std::log1p(-0.5 * std::erfc(x / std::numbers::sqrt2));
    if (x > -30.0) return std::log(0.5 * std::erfc(-x / std::numbers::sqrt2));
    // Asymptotic expansion of the Mills ratio.
    const double x2 = x * x;
    const double series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
    return -0.5 * x2 - kLogSqrt2Pi - std::log(-x) + std::log(series);
}

inline double normalCdf(double x) noexcept { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Standard normal quantile; p must lie in (0, 1).
inline double normalQuantile(double p) {
    return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

inline double logSumExp(std::span<const double> values) noexcept {
    if (values.empty()) return -std::numeric_limits<double>::infinity();
    const double peak = *std::max_element(values.begin(), values.end());
    if (!std::isfinite(peak)) return peak;
    double acc = 0.0;
    for (double v : values) acc += std::exp(v - peak);
    return peak + std::log(acc);
}

/// log of the arithmetic mean of exp(values). Returns values[0] exactly when
/// all entries are equal.
inline double logMeanExp(std::span<const double> values) noexcept {
    if (values.empty()) return -std::numeric_limits<double>::infinity();
    const double peak = *std::max_element(values.begin(), values.end());
    if (!std::isfinite(peak)) return peak;
    double acc = 0.0;
    for (double v : values) acc += std::exp(v - peak);
    return peak + std::log(acc / static_cast<double>(values.size()));
}

}  // namespace pbf
