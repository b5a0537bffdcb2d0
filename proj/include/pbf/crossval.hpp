#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pbf/data_model.hpp"
#include "pbf/error.hpp"
#include "pbf/inverse_priors.hpp"
#include "pbf/likelihoods.hpp"
#include "pbf/parallel.hpp"
#include "pbf/rng.hpp"
#include "pbf/samplers.hpp"
#include "pbf/special_functions.hpp"
#include "pbf/statistics.hpp"

namespace pbf {

struct FoldEstimate {
    double logDensity = 0.0;
    double mcse = 0.0;  // standard error of logDensity (delta method)
    bool fallback = false;
    std::size_t skipped = 0;      // evaluations dropped for empty prior support
    std::size_t evaluations = 0;  // evaluations that entered the average
};

struct CvOptions {
    ResamplePlan plan;
    std::size_t heldOut = 0;  // replicate k scored in every fold
    double minEss = 10.0;
    bool allowFallback = true;
    /// Chain settings for the per-fold fallback when weights degenerate.
    TmcmcConfig fallback;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
};

namespace detail {

/// log of the mean of exp(values) and the delta-method standard error of that
/// log, from batch means over `groups` (each an average over one theta draw).
inline FoldEstimate summarizeGroups(std::span<const double> groupLogMeans, std::size_t evaluations, std::size_t skipped) {
    FoldEstimate est;
    est.evaluations = evaluations;
    est.skipped = skipped;
    if (groupLogMeans.empty()) {
        est.logDensity = -std::numeric_limits<double>::infinity();
        return est;
    }
    est.logDensity = logMeanExp(groupLogMeans);
    if (!std::isfinite(est.logDensity)) return est;
    // relative values exp(l - logDensity) have mean 1
    std::vector<double> rel(groupLogMeans.size());
    for (std::size_t g = 0; g < rel.size(); ++g) rel[g] = std::exp(groupLogMeans[g] - est.logDensity);
    est.mcse = batchMeansStdErr(rel);
    return est;
}

inline void requireFinite(const FoldEstimate& est, std::size_t fold) {
    if (!std::isfinite(est.logDensity))
        fail(ErrorCode::ZeroDensityFold, "crossval", "every evaluation underflowed in fold " + std::to_string(fold));
}

}  // namespace detail

/// Forward CV density of y_{ik} from explicit distinct theta draws, each reused
/// `reuse` times (reuse does not change a forward average: the density at a
/// fixed theta is evaluated once).
inline FoldEstimate forwardFromDraws(const CompiledModel& model, std::size_t i, std::size_t k,
                                     const std::vector<std::vector<double>>& draws, std::size_t reuse = 1) {
    const auto xrow = model.data().covariateRow(i);
    std::vector<double> logf(draws.size());
    for (std::size_t s = 0; s < draws.size(); ++s) {
        try {
            logf[s] = model.heldOutLogDensity(draws[s], i, k, xrow);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::LinkOverflow) throw;
            logf[s] = -std::numeric_limits<double>::infinity();
        }
    }
    return detail::summarizeGroups(logf, draws.size() * reuse, 0);
}

/// Inverse CV density: each distinct theta receives `reuse` fresh covariate
/// draws from its prior. Draws whose prior support is empty are skipped and
/// counted; more than half skipped raises PriorIncompatible.
inline FoldEstimate inverseFromDraws(const CompiledModel& model, const InversePrior& prior, std::size_t i, std::size_t k,
                                     const std::vector<std::vector<double>>& draws, std::size_t reuse, Rng& rng) {
    const ReplicatedDataset& ds = model.data();
    const double y = ds.y(i, k);
    const double yPrev = model.previousResponse(i, k);
    std::vector<double> xrow = ds.covariateRow(i);
    std::vector<PriorInterval> ivs;
    std::vector<double> groupMeans;
    groupMeans.reserve(draws.size());
    std::vector<double> logf(reuse);
    std::size_t skipped = 0;
    for (const auto& th : draws) {
        if (!prior.intervals(th, i, ivs)) {
            skipped += reuse;
            continue;
        }
        const double s2 = model.noiseVariance(th);
        for (std::size_t r = 0; r < reuse; ++r) {
            for (std::size_t c = 0; c < ivs.size(); ++c)
                xrow[prior.covariateColumn(c)] = ivs[c].a + (ivs[c].b - ivs[c].a) * rng.uniform();
            try {
                logf[r] = model.logDensity(model.predictor(th, xrow, yPrev), y, s2);
            } catch (const Error& e) {
                if (e.code() != ErrorCode::LinkOverflow) throw;
                logf[r] = -std::numeric_limits<double>::infinity();
            }
        }
        groupMeans.push_back(logMeanExp(logf));
    }
    const std::size_t total = draws.size() * reuse;
    if (2 * skipped > total)
        fail(ErrorCode::PriorIncompatible, "crossval",
             std::to_string(skipped) + " of " + std::to_string(total) + " evaluations had empty prior support in fold " +
                 std::to_string(i));
    return detail::summarizeGroups(groupMeans, total - skipped, skipped);
}

/// Theta draws approximating the fold-i posterior: importance weights from
/// the full-data chain, then weighted resampling without replacement. When the
/// weights degenerate and fallback is allowed, a dedicated chain is run on the
/// fold target and subsampled uniformly.
inline std::vector<std::vector<double>> foldDraws(const CompiledModel& model, std::size_t i, const PosteriorChain& chain,
                                                  const CvOptions& opt, Rng& rng, bool* usedFallback = nullptr) {
    if (usedFallback) *usedFallback = false;
    std::vector<double> logRatio(chain.size());
    for (std::size_t s = 0; s < chain.size(); ++s) {
        double v;
        try {
            v = -model.rowLogLikelihood(chain.draw(s), i);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::LinkOverflow) throw;
            v = -std::numeric_limits<double>::infinity();
        }
        logRatio[s] = std::isnan(v) ? -std::numeric_limits<double>::infinity() : v;
    }
    const PosteriorChain* source = &chain;
    PosteriorChain foldChain;
    std::vector<double> weights;
    try {
        weights = normalizeLogWeights(logRatio, opt.minEss).weights;
    } catch (const Error& e) {
        if (e.code() != ErrorCode::DegenerateWeights || !opt.allowFallback) throw;
        TmcmcConfig cfg = opt.fallback;
        cfg.seed = rng.substream("fallback")();
        const auto last = chain.draw(chain.size() - 1);
        foldChain = tmcmcSample([&](std::span<const double> th) { return model.logPosterior(th, i); },
                                std::vector<double>(last.begin(), last.end()), cfg);
        source = &foldChain;
        weights.assign(foldChain.size(), 1.0 / static_cast<double>(foldChain.size()));
        if (usedFallback) *usedFallback = true;
    }
    Rng pick = rng.substream("resample");
    const auto idx = resampleWithoutReplacement(weights, opt.plan, pick);
    std::vector<std::vector<double>> out;
    out.reserve(idx.size());
    for (std::size_t s : idx) {
        const auto d = source->draw(s);
        out.emplace_back(d.begin(), d.end());
    }
    return out;
}

/// log pi(y_ik | Y_{-i}) under the forward setup, by IRMCMC reuse of a chain
/// targeting the full-data posterior. Parameter-free models are exact.
inline FoldEstimate forwardCvLogDensity(const CompiledModel& model, std::size_t i, const PosteriorChain& chain,
                                        const CvOptions& opt, Rng rng) {
    const ReplicatedDataset& ds = model.data();
    if (i >= ds.n()) fail(ErrorCode::IndexOutOfRange, "crossval", "fold " + std::to_string(i) + " outside the design");
    if (opt.heldOut >= ds.m()) fail(ErrorCode::IndexOutOfRange, "crossval", "held-out replicate outside the data");
    FoldEstimate est;
    if (model.dim() == 0) {
        est.logDensity = model.heldOutLogDensity({}, i, opt.heldOut);
        est.evaluations = 1;
    } else {
        bool fb = false;
        const auto draws = foldDraws(model, i, chain, opt, rng, &fb);
        est = forwardFromDraws(model, i, opt.heldOut, draws, opt.plan.reusePerDraw);
        est.fallback = fb;
    }
    detail::requireFinite(est, i);
    return est;
}

/// log pi(y_ik | Y_{-i}, X_{-i}) under the inverse setup.
inline FoldEstimate inverseCvLogDensity(const CompiledModel& model, std::size_t i, const PosteriorChain& chain,
                                        const CvOptions& opt, const InversePrior& prior, Rng rng) {
    const ReplicatedDataset& ds = model.data();
    if (i >= ds.n()) fail(ErrorCode::IndexOutOfRange, "crossval", "fold " + std::to_string(i) + " outside the design");
    if (opt.heldOut >= ds.m()) fail(ErrorCode::IndexOutOfRange, "crossval", "held-out replicate outside the data");
    std::vector<std::vector<double>> draws;
    bool fb = false;
    std::size_t reuse = opt.plan.reusePerDraw;
    if (model.dim() == 0) {
        draws.assign(1, {});
        reuse = opt.plan.totalEvaluations();
    } else {
        draws = foldDraws(model, i, chain, opt, rng, &fb);
    }
    Rng xs = rng.substream("covariate");
    FoldEstimate est = inverseFromDraws(model, prior, i, opt.heldOut, draws, reuse, xs);
    est.fallback = fb;
    detail::requireFinite(est, i);
    return est;
}

/// All n folds of one model. Each fold owns the substream (seed, mode, fold).
inline CvReport crossValidate(const CompiledModel& model, const PosteriorChain& chain, CvMode mode, const CvOptions& opt,
                              const InversePrior* prior = nullptr) {
    if (mode == CvMode::Inverse && prior == nullptr)
        fail(ErrorCode::PriorIncompatible, "crossval", "inverse cross-validation needs a covariate prior");
    const std::size_t n = model.data().n();
    std::vector<FoldEstimate> folds(n);
    const Rng root(opt.seed);
    parallelFor(n, opt.threads, [&](std::size_t i) {
        Rng rng = root.substream("cv", {static_cast<std::uint64_t>(mode), i});
        folds[i] = mode == CvMode::Forward ? forwardCvLogDensity(model, i, chain, opt, rng)
                                           : inverseCvLogDensity(model, i, chain, opt, *prior, rng);
    });
    std::vector<double> dens(n), se(n);
    std::size_t fallbacks = 0, skipped = 0;
    for (std::size_t i = 0; i < n; ++i) {
        dens[i] = folds[i].logDensity;
        se[i] = folds[i].mcse;
        fallbacks += folds[i].fallback ? 1 : 0;
        skipped += folds[i].skipped;
    }
    CvReport r = makeCvReport(std::move(dens), std::move(se), mode, opt.heldOut, describe(model.spec()));
    r.fallbackFolds = fallbacks;
    r.skippedEvaluations = skipped;
    r.clampedIntervals = prior && mode == CvMode::Inverse ? prior->clampedRows() : 0;
    return r;
}

// ---------------------------------------------------------------------------
// PBF
// ---------------------------------------------------------------------------

struct PbfReport {
    double logPbf = 0.0;
    std::vector<double> perFoldLogRatio;
    std::string modelA, modelB;
    CvMode mode = CvMode::Forward;
    double normalized = 0.0;  // logPbf / n
};

/// log PBF(A, B) = sum_i [log dens_A(i) - log dens_B(i)].
inline PbfReport pbf(const CvReport& a, const CvReport& b) {
    if (a.perFoldLogDensity.size() != b.perFoldLogDensity.size())
        fail(ErrorCode::FoldCountMismatch, "crossval",
             "reports have " + std::to_string(a.perFoldLogDensity.size()) + " and " +
                 std::to_string(b.perFoldLogDensity.size()) + " folds");
    if (a.heldOutReplicate != b.heldOutReplicate)
        fail(ErrorCode::FoldCountMismatch, "crossval", "reports score different held-out replicates");
    PbfReport r;
    r.modelA = a.model;
    r.modelB = b.model;
    r.mode = a.mode;
    r.perFoldLogRatio.resize(a.perFoldLogDensity.size());
    for (std::size_t i = 0; i < r.perFoldLogRatio.size(); ++i)
        r.perFoldLogRatio[i] = a.perFoldLogDensity[i] - b.perFoldLogDensity[i];
    double total = 0.0;
    for (double v : r.perFoldLogRatio) total += v;
    r.logPbf = total;
    r.normalized = r.logPbf / static_cast<double>(r.perFoldLogRatio.size());
    return r;
}

}  // namespace pbf
