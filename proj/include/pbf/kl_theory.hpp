#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "pbf/data_model.hpp"
#include "pbf/error.hpp"
#include "pbf/nelder_mead.hpp"
#include "pbf/quadrature.hpp"

namespace pbf {

using TruthFunction = std::function<double(double)>;

namespace detail {
inline void requirePositiveVariance(double s2, const char* what) {
    if (!(s2 > 0.0) || !std::isfinite(s2)) fail(ErrorCode::NonPositiveVariance, "kl-theory", std::string(what) + " must be positive");
}
inline void requireDim(std::span<const double> theta, std::size_t d, const char* what) {
    if (theta.size() != d)
        fail(ErrorCode::DimensionMismatch, "kl-theory", std::string(what) + " expects " + std::to_string(d) + " parameters");
}
}  // namespace detail

// ---- Gaussian regression with iid covariates, theta = (coefficients..., sigma^2)

/// h for the linear model, theta = (alpha, beta, sigma^2).
inline double hLinear(std::span<const double> theta, const TruthFunction& eta0, double sigma0sq, const CovariateSpace& space) {
    detail::requireDim(theta, 3, "hLinear");
    detail::requirePositiveVariance(theta[2], "sigma^2");
    detail::requirePositiveVariance(sigma0sq, "sigma_0^2");
    const double a = theta[0], b = theta[1], s2 = theta[2];
    const double bias = ex([&](double x) { const double r = eta0(x) - a - b * x; return r * r; }, space);
    return 0.5 * std::log(s2 / sigma0sq) + sigma0sq / (2.0 * s2) + bias / (2.0 * s2) - 0.5;
}

inline std::vector<double> minimizerLinear(const TruthFunction& eta0, double sigma0sq, const CovariateSpace& space) {
    detail::requirePositiveVariance(sigma0sq, "sigma_0^2");
    const double ex1 = ex([](double x) { return x; }, space);
    const double ex2 = ex([](double x) { return x * x; }, space);
    const double varX = ex2 - ex1 * ex1;
    if (!(varX > 0.0)) fail(ErrorCode::DegenerateCovariateSpace, "kl-theory", "Var_X(X) is zero");
    const double eEta = ex(eta0, space);
    const double eXEta = ex([&](double x) { return x * eta0(x); }, space);
    const double beta = (eXEta - ex1 * eEta) / varX;
    const double alpha = eEta - beta * ex1;
    const double resid = ex([&](double x) { const double r = eta0(x) - alpha - beta * x; return r * r; }, space);
    return {alpha, beta, sigma0sq + resid};
}

/// h for the quadratic model, theta = (alpha, beta1, beta2, sigma^2).
inline double hQuadratic(std::span<const double> theta, const TruthFunction& eta0, double sigma0sq, const CovariateSpace& space) {
    detail::requireDim(theta, 4, "hQuadratic");
    detail::requirePositiveVariance(theta[3], "sigma^2");
    detail::requirePositiveVariance(sigma0sq, "sigma_0^2");
    const double a = theta[0], b1 = theta[1], b2 = theta[2], s2 = theta[3];
    const double bias = ex([&](double x) { const double r = eta0(x) - a - b1 * x - b2 * x * x; return r * r; }, space);
    return 0.5 * std::log(s2 / sigma0sq) + sigma0sq / (2.0 * s2) + bias / (2.0 * s2) - 0.5;
}

/// vartheta = A^{-1} b with A_jk = E X^{j+k}, b_j = E X^j eta0(X); the
/// residual variance uses the fitted beta2 on the X^2 term.
inline std::vector<double> minimizerQuadratic(const TruthFunction& eta0, double sigma0sq, const CovariateSpace& space) {
    detail::requirePositiveVariance(sigma0sq, "sigma_0^2");
    std::array<double, 5> mom{};
    for (int k = 0; k < 5; ++k) mom[static_cast<std::size_t>(k)] = ex([k](double x) { return std::pow(x, k); }, space);
    Eigen::Matrix3d A;
    Eigen::Vector3d b;
    for (int j = 0; j < 3; ++j) {
        for (int k = 0; k < 3; ++k) A(j, k) = mom[static_cast<std::size_t>(j + k)];
        b(j) = ex([&](double x) { return std::pow(x, j) * eta0(x); }, space);
    }
    Eigen::FullPivLU<Eigen::Matrix3d> lu(A);
    if (!lu.isInvertible()) fail(ErrorCode::SingularMomentMatrix, "kl-theory", "moment matrix is singular");
    const Eigen::Vector3d v = lu.solve(b);
    const double resid = ex([&](double x) { const double r = eta0(x) - v(0) - v(1) * x - v(2) * x * x; return r * r; }, space);
    return {v(0), v(1), v(2), sigma0sq + resid};
}

enum class RegressionForm { Linear, Quadratic };

/// Least-squares estimators of the minimizer from data, theta*_n =
/// (coefficients, sigma^2). Every replicate is stacked; eta0 is evaluated at
/// the first covariate column. The variance is assembled from its three
/// parts: noise, approximation bias and their cross term.
inline std::vector<double> empiricalMinimizers(const ReplicatedDataset& ds, RegressionForm form, const TruthFunction& eta0) {
    const std::size_t n = ds.n(), m = ds.m();
    const int p = form == RegressionForm::Linear ? 2 : 3;
    Eigen::MatrixXd D(static_cast<Eigen::Index>(n), p);
    Eigen::VectorXd ybar(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        const double x = ds.x(i, 0);
        const auto r = static_cast<Eigen::Index>(i);
        D(r, 0) = 1.0;
        D(r, 1) = x;
        if (p == 3) D(r, 2) = x * x;
        ybar(r) = ds.rowMean(i);
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(D);
    if (qr.rank() < p || static_cast<int>(n) <= p)
        fail(ErrorCode::RankDeficientDesign, "kl-theory", "design is rank deficient (repeated covariate values?)");
    const Eigen::VectorXd coef = qr.solve(ybar);
    double noise = 0.0, bias = 0.0, cross = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = ds.x(i, 0);
        const double e0 = eta0(x);
        const double fit = D.row(static_cast<Eigen::Index>(i)).dot(coef);
        for (std::size_t j = 0; j < m; ++j) {
            const double eps = ds.y(i, j) - e0;
            noise += eps * eps;
            bias += (e0 - fit) * (e0 - fit);
            cross += 2.0 * eps * (e0 - fit);
        }
    }
    const double nm = static_cast<double>(n * m);
    std::vector<double> out(coef.data(), coef.data() + coef.size());
    out.push_back(noise / nm + bias / nm + cross / nm);
    return out;
}

// ---- AR(1) with two orthogonal covariate streams, theta = (rho, beta, sigma)

struct Ar1TheoryInputs {
    double rho0 = 0.5;
    double beta0 = 1.0;
    double sigma0sq = 1.0;
    double sigmaX2 = 1.0;
    double sigmaZ2 = 1.0;

    double sigmaXZ2() const noexcept { return sigmaX2 + sigmaZ2; }

    void validate() const {
        if (!(std::fabs(rho0) < 1.0)) fail(ErrorCode::NonStationaryTruth, "kl-theory", "|rho_0| must be < 1");
        detail::requirePositiveVariance(sigma0sq, "sigma_0^2");
        if (!(sigmaX2 >= 0.0) || !(sigmaZ2 >= 0.0) || !(sigmaXZ2() > 0.0))
            fail(ErrorCode::NonPositiveVariance, "kl-theory", "covariate variances must be non-negative with a positive sum");
    }

    /// Stationary second moment of y under the truth.
    double stationaryVariance() const noexcept {
        return sigma0sq / (1.0 - rho0 * rho0) + beta0 * beta0 * sigmaXZ2() / (1.0 - rho0 * rho0);
    }
};

/// Which covariate the misspecified AR(1) model carries.
enum class Ar1Covariate { X, Z };

namespace detail {
// Every term of h_1 / h_2 except the last, which is where they differ.
inline double ar1Common(std::span<const double> theta, const Ar1TheoryInputs& in) {
    const double rho = theta[0], beta = theta[1], sigma = theta[2];
    const double s2 = sigma * sigma, s02 = in.sigma0sq, r0 = in.rho0, b0 = in.beta0, sxz = in.sigmaXZ2();
    const double V = in.stationaryVariance();
    return std::log(sigma / std::sqrt(s02)) + (1.0 / (2.0 * s2) - 1.0 / (2.0 * s02)) * V +
           (rho * rho / (2.0 * s2) - r0 * r0 / (2.0 * s02)) * V + beta * beta * sxz / (2.0 * s2) - b0 * b0 * sxz / (2.0 * s02) -
           (rho / s2 - r0 / s02) * (r0 * s02 / (1.0 - r0 * r0) + r0 * b0 * b0 * sxz / (1.0 - r0 * r0)) -
           (beta / s2 - b0 / s02) * sxz * b0;
}
inline void checkAr1Theta(std::span<const double> theta, const Ar1TheoryInputs& in) {
    requireDim(theta, 3, "AR(1) h");
    in.validate();
    if (!(theta[2] > 0.0)) fail(ErrorCode::NonPositiveVariance, "kl-theory", "sigma must be positive");
}
}  // namespace detail

/// h_1 (which = X) or h_2 (which = Z).
inline double hAr1(std::span<const double> theta, const Ar1TheoryInputs& in, Ar1Covariate which) {
    detail::checkAr1Theta(theta, in);
    const double beta = theta[1], s2 = theta[2] * theta[2];
    const double omitted = which == Ar1Covariate::X ? in.sigmaZ2 : in.sigmaX2;
    return detail::ar1Common(theta, in) + omitted * beta * (2.0 * in.beta0 - beta) / (2.0 * s2);
}

/// sigma^2_{x*} (which = X) or sigma^2_{z*} (which = Z) for the limiting
/// inverse covariate, given the model's own minimizer (rho~, beta~, sigma~).
inline double ar1StarVariance(const Ar1TheoryInputs& in, std::span<const double> thetaTilde, Ar1Covariate which) {
    const double carried = which == Ar1Covariate::X ? in.sigmaX2 : in.sigmaZ2;
    const double rt = thetaTilde[0], bt = thetaTilde[1];
    if (bt == 0.0) fail(ErrorCode::SlopeZero, "kl-theory", "beta~ is zero");
    return carried * in.beta0 * in.beta0 * (1.0 - rt) * (1.0 - rt) / (bt * bt * (1.0 - in.rho0 * in.rho0));
}

/// h*_1 / h*_2: the inverse-setup rate with the covariate replaced by its
/// limiting inverse estimate.
inline double hAr1Star(std::span<const double> theta, const Ar1TheoryInputs& in, std::span<const double> thetaTilde,
                       Ar1Covariate which) {
    detail::checkAr1Theta(theta, in);
    detail::requireDim(thetaTilde, 3, "theta~");
    const double beta = theta[1], s2 = theta[2] * theta[2];
    const double carried = which == Ar1Covariate::X ? in.sigmaX2 : in.sigmaZ2;
    const double omitted = which == Ar1Covariate::X ? in.sigmaZ2 : in.sigmaX2;
    const double starVar = ar1StarVariance(in, thetaTilde, which);
    return detail::ar1Common(theta, in) + omitted * beta * (in.beta0 - beta) / s2 +
           beta * beta / (2.0 * s2) * (in.sigmaXZ2() + starVar - 2.0 * in.beta0 * carried / thetaTilde[1]);
}

/// theta~ = argmin h_1 or h_2, sigma optimized on the log scale.
inline std::vector<double> minimizerAr1(const Ar1TheoryInputs& in, Ar1Covariate which) {
    in.validate();
    const auto h = [&](std::span<const double> t) { return hAr1(t, in, which); };
    return minimizeConvexH(h, 3, {in.rho0, in.beta0, std::sqrt(in.sigma0sq)}, {false, false, true});
}

// ---- limits of (1/n) log PBF

enum class TheoryModel { Truth, Linear, Quadratic, Ar1X, Ar1Z };

inline std::string_view toString(TheoryModel m) noexcept {
    switch (m) {
        case TheoryModel::Truth: return "truth";
        case TheoryModel::Linear: return "linear";
        case TheoryModel::Quadratic: return "quadratic";
        case TheoryModel::Ar1X: return "ar1_x";
        case TheoryModel::Ar1Z: return "ar1_z";
    }
    return "?";
}

inline TheoryModel parseTheoryModel(std::string_view s) {
    for (auto m : {TheoryModel::Truth, TheoryModel::Linear, TheoryModel::Quadratic, TheoryModel::Ar1X, TheoryModel::Ar1Z})
        if (s == toString(m)) return m;
    fail(ErrorCode::UnsupportedPair, "kl-theory", "unknown theory model '" + std::string(s) + "'");
}

struct ModelPair {
    TheoryModel a = TheoryModel::Linear;
    TheoryModel b = TheoryModel::Truth;
};

/// Parses "linear:truth", "ar1_x:ar1_z" and so on.
inline ModelPair parseModelPair(std::string_view s) {
    const auto colon = s.find(':');
    if (colon == std::string_view::npos) fail(ErrorCode::UnsupportedPair, "kl-theory", "pair must look like 'a:b'");
    return {parseTheoryModel(s.substr(0, colon)), parseTheoryModel(s.substr(colon + 1))};
}

struct TheoryInputs {
    TruthFunction eta0;
    double sigma0sq = 1.0;
    CovariateSpace space;
    std::optional<Ar1TheoryInputs> ar1;
    bool inverse = false;
};

struct KlLimit {
    double limit = 0.0;  // predicted lim (1/n) log PBF(a, b)
    double hA = 0.0;
    double hB = 0.0;
    std::vector<double> thetaA;
    std::vector<double> thetaB;
};

namespace detail {
inline bool isAr1(TheoryModel m) { return m == TheoryModel::Ar1X || m == TheoryModel::Ar1Z; }

inline std::pair<double, std::vector<double>> rateAtMinimizer(TheoryModel m, const TheoryInputs& in) {
    switch (m) {
        case TheoryModel::Truth: return {0.0, {}};
        case TheoryModel::Linear: {
            auto t = minimizerLinear(in.eta0, in.sigma0sq, in.space);
            return {hLinear(t, in.eta0, in.sigma0sq, in.space), t};
        }
        case TheoryModel::Quadratic: {
            auto t = minimizerQuadratic(in.eta0, in.sigma0sq, in.space);
            return {hQuadratic(t, in.eta0, in.sigma0sq, in.space), t};
        }
        case TheoryModel::Ar1X:
        case TheoryModel::Ar1Z: {
            const auto which = m == TheoryModel::Ar1X ? Ar1Covariate::X : Ar1Covariate::Z;
            auto t = minimizerAr1(*in.ar1, which);
            // the inverse limit evaluates h* at the forward minimizer
            const double h = in.inverse ? hAr1Star(t, *in.ar1, t, which) : hAr1(t, *in.ar1, which);
            return {h, t};
        }
    }
    fail(ErrorCode::UnsupportedPair, "kl-theory", "unknown model");
}
}  // namespace detail

inline KlLimit klLimit(ModelPair pair, const TheoryInputs& in) {
    const bool arA = detail::isAr1(pair.a), arB = detail::isAr1(pair.b);
    const bool anyAr = arA || arB;
    if ((pair.a != TheoryModel::Truth && pair.b != TheoryModel::Truth && arA != arB))
        fail(ErrorCode::UnsupportedPair, "kl-theory", "cannot mix AR(1) and iid regression models");
    if (anyAr && !in.ar1) fail(ErrorCode::UnsupportedPair, "kl-theory", "AR(1) pair needs AR(1) theory inputs");
    if (!anyAr && pair.a != pair.b && !in.eta0) fail(ErrorCode::UnsupportedPair, "kl-theory", "regression pair needs eta0");
    KlLimit out;
    if (pair.a == pair.b) return out;
    auto [ha, ta] = detail::rateAtMinimizer(pair.a, in);
    auto [hb, tb] = detail::rateAtMinimizer(pair.b, in);
    out.hA = ha;
    out.hB = hb;
    out.thetaA = std::move(ta);
    out.thetaB = std::move(tb);
    out.limit = -(ha - hb);
    return out;
}

/// Predicted almost-sure limit of (1/n) log PBF(a, b) = -[h_a(theta~_a) - h_b(theta~_b)].
inline double theoreticalPbfLimit(ModelPair pair, const TheoryInputs& in) { return klLimit(pair, in).limit; }

}  // namespace pbf
