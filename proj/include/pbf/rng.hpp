#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <string_view>

namespace pbf {

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t z) noexcept {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view text) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace detail

/// Counter-based generator: output k of a stream is a pure function of
/// (key, k), so substreams derived by name never overlap in practice and the
/// whole computation is reproducible regardless of scheduling.
///
/// Satisfies std::uniform_random_bit_generator. The variate helpers below are
/// implemented here rather than through <random> distributions so the bit
/// patterns do not depend on the standard library vendor.
class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed = 0) noexcept : key_(detail::splitmix64(seed ^ 0x6a09e667f3bcc908ULL)) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept {
        const std::uint64_t c = counter_++;
        return detail::splitmix64(key_ ^ detail::splitmix64(c + 0x3c6ef372fe94f82bULL));
    }

    /// Independent child stream keyed by a label.
    Rng substream(std::string_view label) const noexcept { return derived(detail::fnv1a(label)); }

    /// Independent child stream keyed by a sequence of integers, e.g. (model, fold).
    Rng substream(std::initializer_list<std::uint64_t> path) const noexcept {
        std::uint64_t k = key_;
        for (std::uint64_t p : path) k = detail::splitmix64(k ^ detail::splitmix64(p + 0xa54ff53a5f1d36f1ULL));
        Rng child;
        child.key_ = k;
        return child;
    }

    Rng substream(std::string_view label, std::initializer_list<std::uint64_t> path) const noexcept {
        return substream(label).substream(path);
    }

    std::uint64_t key() const noexcept { return key_; }
    std::uint64_t counter() const noexcept { return counter_; }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    /// Uniform on (0, 1), never returns 0.
    double uniformOpen() noexcept { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }

    double uniform(double a, double b) noexcept { return a + (b - a) * uniform(); }

    /// Standard normal via Box-Muller (one output per pair of uniforms, no cache).
    double normal() noexcept {
        const double u1 = uniformOpen();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    double normal(double mean, double sd) noexcept { return mean + sd * normal(); }

    bool coin() noexcept { return ((*this)() >> 63) != 0; }

    /// Poisson variate. Inversion for small means, PTRS (Hormann 1993) otherwise.
    std::uint64_t poisson(double mean) noexcept {
        if (!(mean > 0.0)) return 0;
        if (mean < 10.0) {
            const double limit = std::exp(-mean);
            double p = uniform();
            std::uint64_t k = 0;
            double prob = limit;
            double cdf = prob;
            while (p > cdf && k < 1000) {
                ++k;
                prob *= mean / static_cast<double>(k);
                cdf += prob;
            }
            return k;
        }
        const double slam = std::sqrt(mean);
        const double loglam = std::log(mean);
        const double b = 0.931 + 2.53 * slam;
        const double a = -0.059 + 0.02483 * b;
        const double invalpha = 1.1239 + 1.1328 / (b - 3.4);
        const double vr = 0.9277 - 3.6224 / (b - 2.0);
        for (;;) {
            const double u = uniform() - 0.5;
            const double v = uniformOpen();
            const double us = 0.5 - std::fabs(u);
            const double k = std::floor((2.0 * a / us + b) * u + mean + 0.43);
            if (us >= 0.07 && v <= vr) return static_cast<std::uint64_t>(k);
            if (k < 0.0 || (us < 0.013 && v > us)) continue;
            if (std::log(v) + std::log(invalpha) - std::log(a / (us * us) + b) <=
                -mean + k * loglam - std::lgamma(k + 1.0))
                return static_cast<std::uint64_t>(k);
        }
    }

private:
    Rng derived(std::uint64_t salt) const noexcept {
        Rng child;
        child.key_ = detail::splitmix64(key_ ^ detail::splitmix64(salt));
        return child;
    }

    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
};

}  // namespace pbf
