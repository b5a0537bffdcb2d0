#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "pbf/error.hpp"
#include "pbf/rng.hpp"

namespace pbf {

struct NelderMeadOptions {
    double diameterTol = 1e-9;
    std::size_t maxIterations = 200000;
    double initialStep = 0.1;
};

struct NelderMeadResult {
    std::vector<double> x;
    double value = 0.0;
    std::size_t iterations = 0;
};

/// Plain Nelder-Mead (reflection 1, expansion 2, contraction 1/2, shrink 1/2).
/// Stops when the largest vertex distance from the best vertex drops below
/// diameterTol.
template <class F>
NelderMeadResult nelderMead(F&& f, std::vector<double> start, const NelderMeadOptions& opt = {}) {
    const std::size_t d = start.size();
    if (d == 0) return {start, f(std::span<const double>(start)), 0};
    std::vector<std::vector<double>> simplex(d + 1, start);
    for (std::size_t k = 0; k < d; ++k) {
        const double step = opt.initialStep * std::max(1.0, std::fabs(start[k]));
        simplex[k + 1][k] += step;
    }
    std::vector<double> fv(d + 1);
    const auto eval = [&](const std::vector<double>& x) {
        const double v = f(std::span<const double>(x));
        return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
    };
    for (std::size_t k = 0; k <= d; ++k) fv[k] = eval(simplex[k]);
    std::vector<std::size_t> order(d + 1);
    std::vector<double> centroid(d), xr(d), xe(d), xc(d);
    for (std::size_t it = 0; it < opt.maxIterations; ++it) {
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
        const std::size_t best = order.front(), worst = order.back(), second = order[d - 1];
        double diam = 0.0;
        for (std::size_t k = 0; k <= d; ++k) {
            double dist = 0.0;
            for (std::size_t c = 0; c < d; ++c) dist = std::max(dist, std::fabs(simplex[k][c] - simplex[best][c]));
            diam = std::max(diam, dist);
        }
        if (diam < opt.diameterTol) return {simplex[best], fv[best], it};

        std::fill(centroid.begin(), centroid.end(), 0.0);
        for (std::size_t k = 0; k <= d; ++k)
            if (k != worst)
                for (std::size_t c = 0; c < d; ++c) centroid[c] += simplex[k][c] / static_cast<double>(d);
        for (std::size_t c = 0; c < d; ++c) xr[c] = centroid[c] + (centroid[c] - simplex[worst][c]);
        const double fr = eval(xr);
        if (fr < fv[best]) {
            for (std::size_t c = 0; c < d; ++c) xe[c] = centroid[c] + 2.0 * (centroid[c] - simplex[worst][c]);
            const double fe = eval(xe);
            if (fe < fr) {
                simplex[worst] = xe;
                fv[worst] = fe;
            } else {
                simplex[worst] = xr;
                fv[worst] = fr;
            }
            continue;
        }
        if (fr < fv[second]) {
            simplex[worst] = xr;
            fv[worst] = fr;
            continue;
        }
        const bool outside = fr < fv[worst];
        for (std::size_t c = 0; c < d; ++c)
            xc[c] = outside ? centroid[c] + 0.5 * (xr[c] - centroid[c]) : centroid[c] + 0.5 * (simplex[worst][c] - centroid[c]);
        const double fc = eval(xc);
        if (fc < (outside ? fr : fv[worst])) {
            simplex[worst] = xc;
            fv[worst] = fc;
            continue;
        }
        for (std::size_t k = 0; k <= d; ++k) {
            if (k == best) continue;
            for (std::size_t c = 0; c < d; ++c) simplex[k][c] = simplex[best][c] + 0.5 * (simplex[k][c] - simplex[best][c]);
            fv[k] = eval(simplex[k]);
        }
    }
    fail(ErrorCode::NoConvergence, "kl-theory", "Nelder-Mead hit the iteration cap");
}

struct ConvexMinimizeOptions {
    std::size_t restarts = 5;
    double agreementTol = 1e-6;
    double perturbation = 0.5;
    std::uint64_t seed = 12345;
    NelderMeadOptions nm;
};

/// Minimize a convex h over theta where coordinates flagged in `positive`
/// are optimized on the log scale. Runs from init and from `restarts`
/// perturbed inits; all solutions must agree within agreementTol (on the
/// natural scale) or NoConvergence is raised. Returns the best solution.
template <class H>
std::vector<double> minimizeConvexH(H&& h, std::size_t dim, std::vector<double> init, std::vector<bool> positive = {}) {
    return minimizeConvexH(std::forward<H>(h), dim, std::move(init), std::move(positive), ConvexMinimizeOptions{});
}

template <class H>
std::vector<double> minimizeConvexH(H&& h, std::size_t dim, std::vector<double> init, std::vector<bool> positive,
                                    const ConvexMinimizeOptions& opt) {
    if (init.size() != dim) fail(ErrorCode::DimensionMismatch, "kl-theory", "initial point has the wrong dimension");
    if (positive.empty()) positive.assign(dim, false);
    if (positive.size() != dim) fail(ErrorCode::DimensionMismatch, "kl-theory", "positivity mask has the wrong dimension");
    const auto toNatural = [&](std::span<const double> u) {
        std::vector<double> th(u.begin(), u.end());
        for (std::size_t k = 0; k < dim; ++k)
            if (positive[k]) th[k] = std::exp(u[k]);
        return th;
    };
    const auto objective = [&](std::span<const double> u) {
        const auto th = toNatural(u);
        return h(std::span<const double>(th));
    };
    std::vector<double> u0(dim);
    for (std::size_t k = 0; k < dim; ++k) {
        if (positive[k] && !(init[k] > 0.0))
            fail(ErrorCode::NonPositiveVariance, "kl-theory", "initial value of a positive coordinate is not positive");
        u0[k] = positive[k] ? std::log(init[k]) : init[k];
    }
    Rng rng(opt.seed);
    std::vector<std::vector<double>> sols;
    std::vector<double> vals;
    for (std::size_t r = 0; r <= opt.restarts; ++r) {
        std::vector<double> start = u0;
        if (r > 0)
            for (double& v : start) v += opt.perturbation * rng.normal();
        const auto res = nelderMead(objective, start, opt.nm);
        // polish from the converged point to shed early-simplex bias
        const auto polished = nelderMead(objective, res.x, opt.nm);
        sols.push_back(toNatural(polished.x));
        vals.push_back(polished.value);
    }
    const std::size_t best = static_cast<std::size_t>(std::min_element(vals.begin(), vals.end()) - vals.begin());
    for (const auto& s : sols)
        for (std::size_t k = 0; k < dim; ++k)
            if (std::fabs(s[k] - sols[best][k]) > opt.agreementTol)
                fail(ErrorCode::NoConvergence, "kl-theory",
                     "restarts disagree by " + std::to_string(std::fabs(s[k] - sols[best][k])) + " in coordinate " +
                         std::to_string(k));
    return sols[best];
}

}  // namespace pbf
