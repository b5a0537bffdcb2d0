#pragma once

#include <cmath>
#include <numbers>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "pbf/error.hpp"
#include "pbf/special_functions.hpp"

namespace pbf {

/// Exact leave-one-out predictive densities for Gaussian linear regression
/// y = D b + e under a flat prior on b. D must include the intercept column.
///
/// Known variance: y_i | rest ~ N(d_i' b_{-i}, s2 (1 + d_i'(D_{-i}'D_{-i})^{-1} d_i)).
/// Unknown variance with the prior flat in log sigma^2: a Student t with
/// nu = n - 1 - p degrees of freedom and scale^2 = RSS_{-i}/nu times the same
/// inflation factor. Both use the hat-matrix identities
///   y_i - d_i' b_{-i} = e_i / (1 - h_ii),  1 + d_i'(...)^{-1} d_i = 1 / (1 - h_ii),
///   RSS_{-i} = RSS - e_i^2 / (1 - h_ii).
class GaussianLooPredictive {
public:
    GaussianLooPredictive(const Eigen::MatrixXd& design, const Eigen::VectorXd& y) : y_(y) {
        const auto n = design.rows();
        const auto p = design.cols();
        if (y.size() != n) fail(ErrorCode::DimensionMismatch, "crossval", "design and response lengths differ");
        if (n <= p + 1) fail(ErrorCode::RankDeficientDesign, "crossval", "need n > p + 1 rows for leave-one-out fits");
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
        if (qr.rank() < p) fail(ErrorCode::RankDeficientDesign, "crossval", "design matrix is rank deficient");
        const Eigen::VectorXd beta = qr.solve(y);
        resid_ = y - design * beta;
        rss_ = resid_.squaredNorm();
        // leverages from the thin Q factor
        const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, p);
        lev_ = q.rowwise().squaredNorm();
        p_ = static_cast<std::size_t>(p);
    }

    std::size_t size() const noexcept { return static_cast<std::size_t>(y_.size()); }
    double leverage(std::size_t i) const { return lev_(static_cast<Eigen::Index>(i)); }

    /// Predictive mean d_i' b_{-i}.
    double looMean(std::size_t i) const {
        const auto k = static_cast<Eigen::Index>(i);
        return y_(k) - resid_(k) / (1.0 - lev_(k));
    }

    double logDensityKnownVariance(std::size_t i, double sigma2) const {
        const auto k = static_cast<Eigen::Index>(i);
        const double oneMinusH = 1.0 - lev_(k);
        const double r = resid_(k) / oneMinusH;
        const double var = sigma2 / oneMinusH;
        return -0.5 * std::log(var) - kLogSqrt2Pi - 0.5 * r * r / var;
    }

    double logDensityUnknownVariance(std::size_t i) const {
        const auto k = static_cast<Eigen::Index>(i);
        const double oneMinusH = 1.0 - lev_(k);
        const double nu = static_cast<double>(size() - 1 - p_);
        const double rssLoo = rss_ - resid_(k) * resid_(k) / oneMinusH;
        if (!(rssLoo > 0.0)) fail(ErrorCode::NonPositiveVariance, "crossval", "leave-one-out residual sum of squares is zero");
        const double scale2 = rssLoo / nu / oneMinusH;
        const double r = resid_(k) / oneMinusH;
        return std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) - 0.5 * std::log(nu * std::numbers::pi * scale2) -
               0.5 * (nu + 1.0) * std::log1p(r * r / (nu * scale2));
    }

    std::vector<double> allKnownVariance(double sigma2) const {
        std::vector<double> out(size());
        for (std::size_t i = 0; i < size(); ++i) out[i] = logDensityKnownVariance(i, sigma2);
        return out;
    }
    std::vector<double> allUnknownVariance() const {
        std::vector<double> out(size());
        for (std::size_t i = 0; i < size(); ++i) out[i] = logDensityUnknownVariance(i);
        return out;
    }

private:
    Eigen::VectorXd y_;
    Eigen::VectorXd resid_;
    Eigen::VectorXd lev_;
    double rss_ = 0.0;
    std::size_t p_ = 0;
};

/// Design [1, covariates(:, subset)] for a linear predictor.
inline Eigen::MatrixXd interceptDesign(const Eigen::MatrixXd& covariates, const std::vector<std::size_t>& subset) {
    Eigen::MatrixXd d(covariates.rows(), static_cast<Eigen::Index>(subset.size() + 1));
    d.col(0).setOnes();
    for (std::size_t k = 0; k < subset.size(); ++k) d.col(static_cast<Eigen::Index>(k + 1)) = covariates.col(static_cast<Eigen::Index>(subset[k]));
    return d;
}

}  // namespace pbf
