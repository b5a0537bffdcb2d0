#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "pbf/data_model.hpp"
#include "pbf/error.hpp"
#include "pbf/special_functions.hpp"

namespace pbf {

inline constexpr double kGpJitter = 1e-8;
/// Default box for the GP log-amplitude when the model spec leaves it unbounded. A
/// flat prior on omega makes the posterior improper as omega -> -inf.
inline constexpr std::pair<double, double> kDefaultGpOmegaBounds{-10.0, 10.0};

namespace detail {

inline void checkCount(double y) {
    if (!(y >= 0.0) || y != std::floor(y) || !std::isfinite(y))
        fail(ErrorCode::InvalidCount, "likelihoods", "count response must be a nonnegative integer, got " + std::to_string(y));
}

}  // namespace detail

/// log f(y | eta) for a family/link pair, with eta the linear predictor and
/// sigma2 the noise variance (Gaussian family only).
inline double logDensityFromEta(Family family, Link link, double eta, double y, double sigma2 = 1.0) {
    if (std::isnan(eta)) fail(ErrorCode::LinkOverflow, "likelihoods", "linear predictor is NaN");
    switch (family) {
        case Family::Poisson: {
            detail::checkCount(y);
            if (eta > 700.0 || std::isinf(eta))
                fail(ErrorCode::LinkOverflow, "likelihoods", "Poisson rate exp(" + std::to_string(eta) + ") overflows");
            return y * eta - std::exp(eta) - std::lgamma(y + 1.0);
        }
        case Family::Geometric: {
            detail::checkCount(y);
            double logP, log1mP;
            if (link == Link::Logit) {
                logP = -log1pExp(-eta);
                log1mP = -log1pExp(eta);
            } else {
                logP = logNormalCdf(eta);
                log1mP = logNormalCdf(-eta);
            }
            if (!std::isfinite(logP) || !std::isfinite(log1mP))
                fail(ErrorCode::LinkOverflow, "likelihoods", "success probability saturated at eta=" + std::to_string(eta));
            return y * log1mP + logP;
        }
        case Family::GaussianNoise: {
            if (!(sigma2 > 0.0) || !std::isfinite(sigma2))
                fail(ErrorCode::LinkOverflow, "likelihoods", "noise variance is not a positive finite number");
            const double r = y - eta;
            return -0.5 * std::log(sigma2) - kLogSqrt2Pi - 0.5 * r * r / sigma2;
        }
    }
    return -std::numeric_limits<double>::infinity();
}

/// (1/(u+1), 1/(l+1)): geometric success probabilities whose mean (1-p)/p
/// spans [l, u].
inline std::pair<double, double> probitInverseMeanBand(double l, double u) {
    if (!(l > 0.0))
        fail(ErrorCode::NonPositiveLowerBand, "likelihoods", "lower mean band " + std::to_string(l) + " is not positive");
    if (!(u > l)) fail(ErrorCode::EmptyPriorSupport, "likelihoods", "mean band upper edge must exceed lower edge");
    return {1.0 / (u + 1.0), 1.0 / (l + 1.0)};
}

// ---------------------------------------------------------------------------
// CompiledModel
// ---------------------------------------------------------------------------

/// A ModelSpec bound to a design: slot positions are resolved once, the GP
/// correlation factor is cached, and evaluation works on raw spans of the
/// free parameters (the layout returned by slots()).
///
/// GP latents are sampled in whitened form by default: with C the unit-scale
/// correlation matrix (plus jitter) and C = L L^T, eta = mu + exp(omega/2) L u
/// and u ~ N(0, I) a priori. The "natural" parameterization keeps eta itself
/// in theta and adds the multivariate normal prior density instead.
class CompiledModel {
public:
    enum class GpParam { Whitened, Natural };

    CompiledModel(ModelSpec spec, const ReplicatedDataset& ds, GpParam gp = GpParam::Whitened)
        : spec_(std::move(spec)), ds_(&ds), gpParam_(gp) {
        validateModel(spec_);
        for (std::size_t c : spec_.covariateSubset)
            if (c >= ds.p())
                fail(ErrorCode::InvalidModel, "likelihoods", "covariate index " + std::to_string(c) + " outside the design");
        const auto natural = allSlots(spec_, ds.n());
        names_ = natural;
        if (spec_.regression == Regression::GP && gp == GpParam::Whitened)
            for (std::size_t r = 0; r < ds.n(); ++r) names_[firstLatent() + r] = "u_" + std::to_string(r);
        sources_.resize(names_.size());
        for (std::size_t k = 0; k < names_.size(); ++k) {
            if (spec_.fixedParams.has(natural[k])) {
                sources_[k] = {-1, spec_.fixedParams.at(natural[k])};
            } else {
                sources_[k] = {static_cast<int>(free_.size()), 0.0};
                free_.push_back(names_[k]);
            }
        }
        for (const auto& [slot, range] : spec_.bounds) {
            bool found = false;
            for (std::size_t k = 0; k < free_.size(); ++k)
                if (free_[k] == slot) {
                    boxes_.push_back({k, range.first, range.second});
                    found = true;
                }
            if (!found) fail(ErrorCode::UnknownSlot, "likelihoods", "bounds given for unknown slot '" + slot + "'");
        }
        if (spec_.regression == Regression::GP) {
            if (!spec_.bounds.contains("omega") && sources_[omegaPos()].index >= 0)
                boxes_.push_back({static_cast<std::size_t>(sources_[omegaPos()].index), kDefaultGpOmegaBounds.first,
                                  kDefaultGpOmegaBounds.second});
            factorKernel();
        }
        if (isCount(spec_.family))
            for (std::size_t i = 0; i < ds.n(); ++i)
                for (std::size_t j = 0; j < ds.m(); ++j) detail::checkCount(ds.y(i, j));
    }

    const ModelSpec& spec() const noexcept { return spec_; }
    const ReplicatedDataset& data() const noexcept { return *ds_; }
    std::size_t dim() const noexcept { return free_.size(); }
    const std::vector<std::string>& slots() const noexcept { return free_; }
    GpParam gpParameterization() const noexcept { return gpParam_; }

    ThetaVector wrap(std::span<const double> theta) const {
        return ThetaVector(free_, std::vector<double>(theta.begin(), theta.end()));
    }

    /// Project a ThetaVector onto the free layout (missing slots -> error).
    std::vector<double> unwrap(const ThetaVector& theta) const {
        std::vector<double> out(free_.size());
        for (std::size_t k = 0; k < free_.size(); ++k) out[k] = theta.at(free_[k]);
        return out;
    }

    /// Linear predictor at an arbitrary covariate row. GP models use the
    /// linearized mean mu(x) = alpha + beta x (+ gamma z).
    double predictor(std::span<const double> theta, std::span<const double> xrow, double yPrev = 0.0) const {
        switch (spec_.regression) {
            case Regression::Linear:
            case Regression::GP: {
                double eta = value(theta, 0);
                for (std::size_t k = 0; k < spec_.covariateSubset.size(); ++k)
                    eta += value(theta, 1 + k) * xrow[spec_.covariateSubset[k]];
                return eta;
            }
            case Regression::Quadratic: {
                const double x = xrow[spec_.covariateSubset[0]];
                return value(theta, 0) + value(theta, 1) * x + value(theta, 2) * x * x;
            }
            case Regression::AR1:
                return value(theta, 0) * yPrev + value(theta, 1) * xrow[spec_.covariateSubset[0]];
            case Regression::FixedFunction:
                return spec_.truthFunction(xrow);
        }
        return 0.0;
    }

    double noiseVariance(std::span<const double> theta) const {
        if (spec_.family != Family::GaussianNoise) return 1.0;
        return std::exp(value(theta, names_.size() - 1));
    }

    double logDensity(double eta, double y, double sigma2) const {
        return logDensityFromEta(spec_.family, spec_.link, eta, y, sigma2);
    }

    /// Forward density of cell (row, rep) with the covariate row replaced by
    /// xrow. GP models use the linearized mean here, as for a held-out row.
    double heldOutLogDensity(std::span<const double> theta, std::size_t row, std::size_t rep,
                             std::span<const double> xrow) const {
        return logDensity(predictor(theta, xrow, previousResponse(row, rep)), ds_->y(row, rep), noiseVariance(theta));
    }

    double heldOutLogDensity(std::span<const double> theta, std::size_t row, std::size_t rep) const {
        const auto xrow = ds_->covariateRow(row);
        return heldOutLogDensity(theta, row, rep, xrow);
    }

    /// Sum over the m replicates of row i of log f(y_ij | theta) as it enters
    /// the likelihood (GP models use the latent value at row i).
    double rowLogLikelihood(std::span<const double> theta, std::size_t row) const {
        const double s2 = noiseVariance(theta);
        double total = 0.0;
        if (spec_.regression == Regression::GP) {
            const Eigen::VectorXd eta = latents(theta);
            for (std::size_t j = 0; j < ds_->m(); ++j) total += logDensity(eta(row), ds_->y(row, j), s2);
            return total;
        }
        const auto xrow = ds_->covariateRow(row);
        for (std::size_t j = 0; j < ds_->m(); ++j)
            total += logDensity(predictor(theta, xrow, previousResponse(row, j)), ds_->y(row, j), s2);
        return total;
    }

    /// Prior density term over the latents: the GP density in natural form,
    /// the standard normal density of u in whitened form. Zero for non-GP.
    double latentLogPrior(std::span<const double> theta) const {
        if (spec_.regression != Regression::GP) return 0.0;
        const std::size_t n = nLatent();
        if (gpParam_ == GpParam::Whitened) {
            double ss = 0.0;
            for (std::size_t r = 0; r < n; ++r) {
                const double u = value(theta, firstLatent() + r);
                ss += u * u;
            }
            return -0.5 * ss - static_cast<double>(n) * kLogSqrt2Pi;
        }
        const double omega = value(theta, omegaPos());
        Eigen::VectorXd resid(n);
        for (std::size_t r = 0; r < n; ++r)
            resid(r) = value(theta, firstLatent() + r) - gpMean(theta, r);
        const Eigen::VectorXd w = chol_.matrixL().solve(resid);
        return -0.5 * std::exp(-omega) * w.squaredNorm() - 0.5 * static_cast<double>(n) * omega - halfLogDetC_ -
               static_cast<double>(n) * kLogSqrt2Pi;
    }

    /// log-likelihood over every included row plus the latent prior term.
    /// For GP models the prior covers all n latents; integrating the held-out
    /// latent out of this joint leaves exactly the GP prior at the included
    /// points, so fold posteriors of the remaining parameters are unchanged.
    double logLikelihood(std::span<const double> theta, std::optional<std::size_t> excludeFold = std::nullopt) const {
        if (excludeFold && *excludeFold >= ds_->n())
            fail(ErrorCode::IndexOutOfRange, "likelihoods", "fold " + std::to_string(*excludeFold) + " outside the design");
        double total = latentLogPrior(theta);
        const double s2 = noiseVariance(theta);
        if (spec_.regression == Regression::GP) {
            const Eigen::VectorXd eta = latents(theta);
            for (std::size_t i = 0; i < ds_->n(); ++i) {
                if (excludeFold && i == *excludeFold) continue;
                for (std::size_t j = 0; j < ds_->m(); ++j) total += logDensity(eta(i), ds_->y(i, j), s2);
            }
            return total;
        }
        std::vector<double> xrow(ds_->p());
        for (std::size_t i = 0; i < ds_->n(); ++i) {
            if (excludeFold && i == *excludeFold) continue;
            for (std::size_t c = 0; c < ds_->p(); ++c) xrow[c] = ds_->x(i, c);
            for (std::size_t j = 0; j < ds_->m(); ++j)
                total += logDensity(predictor(theta, xrow, previousResponse(i, j)), ds_->y(i, j), s2);
        }
        return total;
    }

    /// Log of the box prior on bounded slots: 0 inside, -inf outside.
    double logPrior(std::span<const double> theta) const noexcept {
        for (const auto& b : boxes_)
            if (!(theta[b.index] >= b.lower && theta[b.index] <= b.upper)) return -std::numeric_limits<double>::infinity();
        return 0.0;
    }

    /// Unnormalized log posterior. Proposals that overflow a link map to -inf
    /// so samplers reject them instead of aborting.
    double logPosterior(std::span<const double> theta, std::optional<std::size_t> excludeFold = std::nullopt) const {
        const double lp = logPrior(theta);
        if (!std::isfinite(lp)) return lp;
        try {
            return lp + logLikelihood(theta, excludeFold);
        } catch (const Error& e) {
            if (e.code() == ErrorCode::LinkOverflow) return -std::numeric_limits<double>::infinity();
            throw;
        }
    }

    /// Latent regression values at every design row (GP only).
    Eigen::VectorXd latents(std::span<const double> theta) const {
        const std::size_t n = nLatent();
        Eigen::VectorXd out(n);
        if (gpParam_ == GpParam::Natural) {
            for (std::size_t r = 0; r < n; ++r) out(r) = value(theta, firstLatent() + r);
            return out;
        }
        Eigen::VectorXd u(n);
        for (std::size_t r = 0; r < n; ++r) u(r) = value(theta, firstLatent() + r);
        const Eigen::VectorXd lu = chol_.matrixL() * u;
        out = std::exp(0.5 * value(theta, omegaPos())) * lu;
        for (std::size_t r = 0; r < n; ++r) out(r) += gpMean(theta, r);
        return out;
    }

    /// GP mean alpha + beta x_r (+ gamma z_r) at design row r.
    double gpMean(std::span<const double> theta, std::size_t r) const {
        double mu = value(theta, 0);
        for (std::size_t k = 0; k < spec_.covariateSubset.size(); ++k)
            mu += value(theta, 1 + k) * ds_->x(r, spec_.covariateSubset[k]);
        return mu;
    }

    /// 0.5 * log det(C + jitter I) of the unit-amplitude correlation matrix.
    double halfLogDetCorrelation() const noexcept { return halfLogDetC_; }

    /// y_{t-1} for AR(1) models (y_{-1} = 0), otherwise 0.
    double previousResponse(std::size_t row, std::size_t rep) const {
        if (spec_.regression != Regression::AR1 || row == 0) return 0.0;
        return ds_->y(row - 1, rep);
    }

    /// Value of position k of allSlots (free or fixed).
    double value(std::span<const double> theta, std::size_t k) const noexcept {
        const auto& s = sources_[k];
        return s.index >= 0 ? theta[static_cast<std::size_t>(s.index)] : s.fixed;
    }

    std::size_t omegaPos() const noexcept { return 1 + spec_.covariateSubset.size(); }
    std::size_t firstLatent() const noexcept { return 2 + spec_.covariateSubset.size(); }

private:
    struct Source {
        int index;
        double fixed;
    };
    struct Box {
        std::size_t index;
        double lower, upper;
    };

    static bool isCount(Family f) noexcept { return f == Family::Poisson || f == Family::Geometric; }

    std::size_t nLatent() const noexcept { return spec_.regression == Regression::GP ? ds_->n() : 0; }

    void factorKernel() {
        const std::size_t n = ds_->n();
        Eigen::MatrixXd c(n, n);
        for (std::size_t a = 0; a < n; ++a)
            for (std::size_t b = 0; b < n; ++b) {
                double d2 = 0.0;
                for (std::size_t k : spec_.covariateSubset) {
                    const double d = ds_->x(a, k) - ds_->x(b, k);
                    d2 += d * d;
                }
                c(a, b) = std::exp(-d2);
            }
        c.diagonal().array() += kGpJitter;
        chol_.compute(c);
        if (chol_.info() != Eigen::Success)
            fail(ErrorCode::InvalidModel, "likelihoods", "GP correlation matrix is not positive definite");
        halfLogDetC_ = chol_.matrixLLT().diagonal().array().log().sum();
    }

    ModelSpec spec_;
    const ReplicatedDataset* ds_;
    GpParam gpParam_;
    std::vector<std::string> names_;  // all slots, in model order
    std::vector<Source> sources_;
    std::vector<std::string> free_;
    std::vector<Box> boxes_;
    Eigen::LLT<Eigen::MatrixXd> chol_;
    double halfLogDetC_ = 0.0;
};

// ---------------------------------------------------------------------------
// ThetaVector-level entry points
// ---------------------------------------------------------------------------

/// log f(y | theta, x, history). For AR(1) models history holds y_{t-1}; an
/// absent history means y_0 = 0. GP models evaluate the linearized mean.
inline double logDensityObs(const ModelSpec& spec, const ThetaVector& theta, std::span<const double> x, double y,
                            std::optional<double> history = std::nullopt) {
    validateModel(spec);
    const auto param = [&](const std::string& slot) {
        if (spec.fixedParams.has(slot)) return spec.fixedParams.at(slot);
        return theta.at(slot);
    };
    double eta = 0.0;
    switch (spec.regression) {
        case Regression::Linear:
        case Regression::GP:
            eta = param("alpha");
            for (std::size_t k = 0; k < spec.covariateSubset.size(); ++k) {
                const std::size_t c = spec.covariateSubset[k];
                if (c >= x.size()) fail(ErrorCode::DimensionMismatch, "likelihoods", "covariate row too short");
                eta += param(slopeSlot(k)) * x[c];
            }
            break;
        case Regression::Quadratic: {
            const std::size_t c = spec.covariateSubset[0];
            if (c >= x.size()) fail(ErrorCode::DimensionMismatch, "likelihoods", "covariate row too short");
            eta = param("alpha") + param("beta1") * x[c] + param("beta2") * x[c] * x[c];
            break;
        }
        case Regression::AR1: {
            const std::size_t c = spec.covariateSubset[0];
            if (c >= x.size()) fail(ErrorCode::DimensionMismatch, "likelihoods", "covariate row too short");
            eta = param("rho") * history.value_or(0.0) + param("beta") * x[c];
            break;
        }
        case Regression::FixedFunction:
            eta = spec.truthFunction(x);
            break;
    }
    double sigma2 = 1.0;
    if (spec.family == Family::GaussianNoise)
        sigma2 = std::exp(param(spec.regression == Regression::GP ? "omega_noise" : "omega"));
    return logDensityFromEta(spec.family, spec.link, eta, y, sigma2);
}

/// Sum of cell log densities over included rows, plus the GP prior term.
inline double logLikelihood(const ModelSpec& spec, const ThetaVector& theta, const ReplicatedDataset& ds,
                            std::optional<std::size_t> excludeFold = std::nullopt,
                            CompiledModel::GpParam gp = CompiledModel::GpParam::Natural) {
    CompiledModel model(spec, ds, gp);
    const auto values = model.unwrap(theta);
    return model.logLikelihood(values, excludeFold);
}

/// Log density of the latent values eta under the GP prior N(mu, K) with
/// K_ab = exp(omega) exp(-|x_a - x_b|^2) plus 1e-8 exp(omega) jitter.
inline double gpLogPrior(std::span<const double> eta, std::span<const double> mean, double omega,
                         const Eigen::MatrixXd& covariates) {
    const auto n = static_cast<Eigen::Index>(eta.size());
    if (covariates.rows() != n || static_cast<Eigen::Index>(mean.size()) != n)
        fail(ErrorCode::DimensionMismatch, "likelihoods", "GP prior inputs disagree in length");
    Eigen::MatrixXd k(n, n);
    for (Eigen::Index a = 0; a < n; ++a)
        for (Eigen::Index b = 0; b < n; ++b)
            k(a, b) = std::exp(omega) * std::exp(-(covariates.row(a) - covariates.row(b)).squaredNorm());
    k.diagonal().array() += kGpJitter * std::exp(omega);
    Eigen::LLT<Eigen::MatrixXd> llt(k);
    if (llt.info() != Eigen::Success) fail(ErrorCode::InvalidModel, "likelihoods", "GP kernel is not positive definite");
    Eigen::VectorXd r(n);
    for (Eigen::Index a = 0; a < n; ++a) r(a) = eta[a] - mean[a];
    const Eigen::VectorXd w = llt.matrixL().solve(r);
    const double halfLogDet = llt.matrixLLT().diagonal().array().log().sum();
    return -0.5 * w.squaredNorm() - halfLogDet - static_cast<double>(n) * kLogSqrt2Pi;
}

}  // namespace pbf
