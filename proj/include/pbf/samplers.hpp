#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pbf/error.hpp"
#include "pbf/rng.hpp"
#include "pbf/special_functions.hpp"

namespace pbf {

using DrawMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct TmcmcConfig {
    std::size_t totalIterations = 30000;
    std::size_t burnIn = 10000;
    double scale = 0.1;  // initial epsilon_0
    std::uint64_t seed = 0;
    bool adaptDuringBurnin = true;
    double targetAcceptance = 0.3;

    void validate() const {
        if (!(burnIn < totalIterations))
            fail(ErrorCode::InvalidConfig, "samplers", "burn-in must be shorter than the chain (burnIn < totalIterations)");
        if (!(scale > 0.0) || !std::isfinite(scale))
            fail(ErrorCode::InvalidConfig, "samplers", "TMCMC scale must be positive (scale > 0)");
        if (!(targetAcceptance > 0.0 && targetAcceptance < 1.0))
            fail(ErrorCode::InvalidConfig, "samplers", "target acceptance must lie in (0, 1)");
    }
};

struct PosteriorChain {
    DrawMatrix draws;  // kept iterations x dim
    std::vector<double> logPosterior;
    double acceptanceRate = 0.0;
    std::uint64_t seed = 0;
    std::uint64_t streamKey = 0;
    double finalScale = 0.0;
    /// Set when the kept acceptance rate is exactly 0 or 1.
    bool acceptanceWarning = false;

    std::size_t size() const noexcept { return static_cast<std::size_t>(draws.rows()); }
    std::size_t dim() const noexcept { return static_cast<std::size_t>(draws.cols()); }
    std::span<const double> draw(std::size_t k) const noexcept {
        return {draws.data() + k * dim(), dim()};
    }
};

/// Additive TMCMC: every step draws one epsilon = |N(0, eps0^2)| and moves
/// each coordinate by +/- epsilon with independent fair signs. The move is
/// symmetric with unit Jacobian, so acceptance is the plain target ratio.
/// eps0 follows a Robbins-Monro recursion toward the target acceptance during
/// burn-in and is frozen afterwards.
template <class LogTarget>
PosteriorChain tmcmcSample(LogTarget&& logTarget, std::vector<double> init, const TmcmcConfig& cfg) {
    cfg.validate();
    const std::size_t d = init.size();
    const std::size_t kept = cfg.totalIterations - cfg.burnIn;
    PosteriorChain chain;
    chain.seed = cfg.seed;
    Rng rng = Rng(cfg.seed).substream("tmcmc");
    chain.streamKey = rng.key();
    chain.draws.resize(static_cast<Eigen::Index>(kept), static_cast<Eigen::Index>(d));
    chain.logPosterior.resize(kept);

    double lp = logTarget(std::span<const double>(init));
    if (!std::isfinite(lp)) fail(ErrorCode::NonFiniteInit, "samplers", "log target is not finite at the initial point");
    if (d == 0) {
        for (std::size_t k = 0; k < kept; ++k) chain.logPosterior[k] = lp;
        chain.acceptanceRate = 1.0;
        chain.finalScale = cfg.scale;
        return chain;
    }

    std::vector<double> theta = std::move(init);
    std::vector<double> proposal(d);
    double logScale = std::log(cfg.scale);
    std::size_t acceptedKept = 0;
    for (std::size_t it = 0; it < cfg.totalIterations; ++it) {
        const double eps = std::fabs(rng.normal()) * std::exp(logScale);
        for (std::size_t c = 0; c < d; ++c) proposal[c] = theta[c] + (rng.coin() ? eps : -eps);
        const double lpProp = logTarget(std::span<const double>(proposal));
        const double logU = std::log(rng.uniformOpen());
        const bool accept = std::isfinite(lpProp) && logU < lpProp - lp;
        if (accept) {
            theta.swap(proposal);
            lp = lpProp;
        }
        if (it < cfg.burnIn) {
            if (cfg.adaptDuringBurnin) {
                const double gain = 1.0 / std::pow(static_cast<double>(it + 1), 0.6);
                logScale += gain * ((accept ? 1.0 : 0.0) - cfg.targetAcceptance);
                logScale = std::clamp(logScale, -30.0, 10.0);
            }
        } else {
            const std::size_t k = it - cfg.burnIn;
            for (std::size_t c = 0; c < d; ++c) chain.draws(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(c)) = theta[c];
            chain.logPosterior[k] = lp;
            acceptedKept += accept ? 1 : 0;
        }
    }
    chain.finalScale = std::exp(logScale);
    chain.acceptanceRate = static_cast<double>(acceptedKept) / static_cast<double>(kept);
    chain.acceptanceWarning = acceptedKept == 0 || acceptedKept == kept;
    if (chain.acceptanceRate < 0.001)
        fail(ErrorCode::AllProposalsRejected, "samplers",
             "acceptance rate " + std::to_string(chain.acceptanceRate) + " is below 0.001");
    return chain;
}

/// log acceptance ratio of a symmetric move from -> to.
inline double logAcceptanceRatio(double logTargetFrom, double logTargetTo) noexcept { return logTargetTo - logTargetFrom; }

// ---------------------------------------------------------------------------
// Importance weights and resampling
// ---------------------------------------------------------------------------

struct ResamplePlan {
    std::size_t subsampleSize = 1000;
    std::size_t reusePerDraw = 100;
    bool withReplacement = false;

    std::size_t totalEvaluations() const noexcept { return subsampleSize * reusePerDraw; }
    void validate() const {
        if (subsampleSize == 0 || reusePerDraw == 0)
            fail(ErrorCode::InvalidConfig, "samplers", "resample plan needs positive subsample size and reuse count");
        if (withReplacement) fail(ErrorCode::InvalidConfig, "samplers", "only resampling without replacement is supported");
    }
};

struct ImportanceWeights {
    std::vector<double> weights;
    std::vector<double> logWeights;  // normalized: logsumexp = 0
    double ess = 0.0;
};

/// Normalize unnormalized log weights; ESS = 1 / sum w^2.
inline ImportanceWeights normalizeLogWeights(std::span<const double> logRatio, double minEss = 10.0) {
    if (logRatio.empty()) fail(ErrorCode::DegenerateWeights, "samplers", "no draws to weight");
    const double lse = logSumExp(logRatio);
    if (!std::isfinite(lse)) fail(ErrorCode::DegenerateWeights, "samplers", "all importance weights vanish");
    ImportanceWeights iw;
    iw.weights.resize(logRatio.size());
    iw.logWeights.resize(logRatio.size());
    double s2 = 0.0;
    for (std::size_t k = 0; k < logRatio.size(); ++k) {
        iw.logWeights[k] = logRatio[k] - lse;
        iw.weights[k] = std::exp(iw.logWeights[k]);
        s2 += iw.weights[k] * iw.weights[k];
    }
    iw.ess = 1.0 / s2;
    if (iw.ess < minEss)
        fail(ErrorCode::DegenerateWeights, "samplers",
             "effective sample size " + std::to_string(iw.ess) + " below " + std::to_string(minEss));
    return iw;
}

/// w_k proportional to exp(foldTarget(theta_k) - chainTarget(theta_k)).
template <class ChainTarget, class FoldTarget>
ImportanceWeights importanceWeights(ChainTarget&& chainTarget, FoldTarget&& foldTarget, const PosteriorChain& chain,
                                    double minEss = 10.0) {
    std::vector<double> logRatio(chain.size());
    for (std::size_t k = 0; k < chain.size(); ++k) {
        const auto th = chain.draw(k);
        logRatio[k] = foldTarget(th) - chainTarget(th);
        if (std::isnan(logRatio[k])) logRatio[k] = -std::numeric_limits<double>::infinity();
    }
    return normalizeLogWeights(logRatio, minEss);
}

/// Weighted sampling without replacement. Uses exponential keys
/// E_k = -log(U_k) / w_k taken in increasing order, which has the same law as
/// drawing one index at a time with probability proportional to weight and
/// removing it. Returns indices in selection order.
inline std::vector<std::size_t> resampleWithoutReplacement(std::span<const double> weights, const ResamplePlan& plan, Rng& rng) {
    plan.validate();
    if (plan.subsampleSize > weights.size())
        fail(ErrorCode::SubsampleTooLarge, "samplers",
             "subsample of " + std::to_string(plan.subsampleSize) + " from " + std::to_string(weights.size()) + " draws");
    std::vector<std::pair<double, std::size_t>> keys;
    keys.reserve(weights.size());
    for (std::size_t k = 0; k < weights.size(); ++k) {
        const double u = rng.uniformOpen();
        if (weights[k] > 0.0) keys.emplace_back(std::log(-std::log(u)) - std::log(weights[k]), k);
    }
    if (plan.subsampleSize > keys.size())
        fail(ErrorCode::SubsampleTooLarge, "samplers",
             "only " + std::to_string(keys.size()) + " draws carry positive weight");
    std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(plan.subsampleSize), keys.end());
    std::vector<std::size_t> out(plan.subsampleSize);
    for (std::size_t k = 0; k < plan.subsampleSize; ++k) out[k] = keys[k].second;
    return out;
}

/// Chain dump with header iter,logpost,theta_0..theta_{d-1}; iter counts
/// kept iterations from the end of burn-in.
inline void writeChainCsv(std::ostream& os, const PosteriorChain& chain, std::size_t burnIn = 0) {
    os << "iter,logpost";
    for (std::size_t c = 0; c < chain.dim(); ++c) os << ",theta_" << c;
    os << '\n';
    char buf[32];
    for (std::size_t k = 0; k < chain.size(); ++k) {
        os << (burnIn + k);
        std::snprintf(buf, sizeof buf, "%.17g", chain.logPosterior[k]);
        os << ',' << buf;
        for (std::size_t c = 0; c < chain.dim(); ++c) {
            std::snprintf(buf, sizeof buf, "%.17g", chain.draws(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(c)));
            os << ',' << buf;
        }
        os << '\n';
    }
}

}  // namespace pbf
