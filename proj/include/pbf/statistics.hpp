#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

namespace pbf {

inline double mean(std::span<const double> v) {
    if (v.empty()) return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Unbiased sample variance (divisor N - 1), two-pass.
inline double variance(std::span<const double> v) {
    if (v.size() < 2) return 0.0;
    const double mu = mean(v);
    double ss = 0.0;
    for (double x : v) ss += (x - mu) * (x - mu);
    return ss / static_cast<double>(v.size() - 1);
}

/// Integrated autocorrelation time with Geyer's initial positive sequence.
inline double autocorrelationTime(std::span<const double> v) {
    const std::size_t n = v.size();
    if (n < 4) return 1.0;
    const double mu = mean(v);
    std::vector<double> c(v.begin(), v.end());
    for (double& x : c) x -= mu;
    const auto acov = [&](std::size_t lag) {
        double s = 0.0;
        for (std::size_t t = 0; t + lag < n; ++t) s += c[t] * c[t + lag];
        return s / static_cast<double>(n);
    };
    const double c0 = acov(0);
    if (c0 <= 0.0) return 1.0;
    double tau = -1.0;
    for (std::size_t lag = 0; lag + 1 < n / 2; lag += 2) {
        const double pair = (acov(lag) + acov(lag + 1)) / c0;
        if (pair <= 0.0) break;
        tau += 2.0 * pair;
    }
    return std::max(tau, 1.0);
}

inline double effectiveSampleSize(std::span<const double> v) {
    return static_cast<double>(v.size()) / autocorrelationTime(v);
}

/// Standard error of the mean from floor(sqrt(N)) non-overlapping batches.
inline double batchMeansStdErr(std::span<const double> v) {
    const std::size_t n = v.size();
    if (n < 4) return std::sqrt(variance(v) / std::max<std::size_t>(n, 1));
    const std::size_t batches = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(n))));
    const std::size_t size = n / batches;
    std::vector<double> means(batches);
    for (std::size_t b = 0; b < batches; ++b)
        means[b] = mean(v.subspan(b * size, size));
    return std::sqrt(variance(means) / static_cast<double>(batches));
}

/// Kolmogorov-Smirnov statistic of a sample against a continuous CDF.
template <class Cdf>
double ksStatistic(std::vector<double> sample, Cdf&& cdf) {
    std::sort(sample.begin(), sample.end());
    const double n = static_cast<double>(sample.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const double f = cdf(sample[i]);
        d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
    }
    return d;
}

/// P(K > x) for the Kolmogorov distribution.
inline double kolmogorovSurvival(double x) {
    if (x <= 0.0) return 1.0;
    if (x < 1.18) {
        // small-x theta-function form
        const double pi2 = 9.869604401089358;
        const double f = std::sqrt(2.0 * 3.141592653589793) / x;
        double s = 0.0;
        for (int k = 1; k <= 20; ++k) {
            const double t = (2 * k - 1);
            s += std::exp(-t * t * pi2 / (8.0 * x * x));
        }
        return 1.0 - f * s;
    }
    double s = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = 2.0 * std::exp(-2.0 * k * k * x * x) * ((k % 2) ? 1.0 : -1.0);
        s += term;
        if (std::fabs(term) < 1e-16) break;
    }
    return std::clamp(s, 0.0, 1.0);
}

/// Asymptotic KS p-value with the Stephens small-sample correction.
inline double ksPValue(double d, std::size_t n) {
    const double rn = std::sqrt(static_cast<double>(n));
    return kolmogorovSurvival((rn + 0.12 + 0.11 / rn) * d);
}

}  // namespace pbf
