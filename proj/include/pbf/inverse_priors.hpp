#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pbf/data_model.hpp"
#include "pbf/error.hpp"
#include "pbf/likelihoods.hpp"
#include "pbf/rng.hpp"
#include "pbf/special_functions.hpp"

namespace pbf {

/// Which uniform prior a held-out covariate receives.
///   PoissonLog, GeomLogit, GeomProbit, GaussianIdentity: single-covariate
///     linear predictor alpha + beta x on the matching link scale.
///   Quadratic: alpha + beta1 x + beta2 x_i^2 with the observed x_i in the
///     square, slope beta1.
///   AR1: rho ybar_{t-1} + beta x with s_t(rho) in place of s_t.
///   TwoCovariate: one coordinate of a two-covariate linear predictor, the
///     other coordinate held at its observed value; baseKind picks the link.
///   KnownCovariate: point mass at the observed value.
///   TruthBand: {x : eta0(x) in band} for a parameter-free Gaussian truth,
///     located on a grid over the observed covariate range.
enum class PriorKind { PoissonLog, GeomLogit, GeomProbit, GaussianIdentity, Quadratic, AR1, TwoCovariate, KnownCovariate, TruthBand };
enum class ClampPolicy { Error, ClampToEpsilon };
enum class CovariateRole { X, Z };

inline constexpr double kClampEpsilon = 1e-6;

struct InversePriorSpec {
    PriorKind kind = PriorKind::GaussianIdentity;
    PriorKind baseKind = PriorKind::PoissonLog;
    CovariateRole which = CovariateRole::X;
    double c1 = 1.0;
    double c2 = 100.0;
    ClampPolicy clamp = ClampPolicy::Error;
};

inline void validatePriorSpec(const InversePriorSpec& spec) {
    if (!(spec.c1 >= 0.0))
        fail(ErrorCode::InvalidConfig, "inverse-priors", "c1 must be nonnegative (c1 >= 0), got " + std::to_string(spec.c1));
    if (!(spec.c2 >= spec.c1))
        fail(ErrorCode::InvalidConfig, "inverse-priors",
             "c2 must be at least c1 (c2 >= c1), got c1=" + std::to_string(spec.c1) + " c2=" + std::to_string(spec.c2));
    if (spec.kind == PriorKind::TwoCovariate &&
        (spec.baseKind == PriorKind::TwoCovariate || spec.baseKind == PriorKind::Quadratic || spec.baseKind == PriorKind::AR1 ||
         spec.baseKind == PriorKind::KnownCovariate || spec.baseKind == PriorKind::TruthBand))
        fail(ErrorCode::InvalidConfig, "inverse-priors", "two-covariate prior needs a single-link base kind");
}

struct PriorInterval {
    double a = 0.0;
    double b = 0.0;
    bool clamped = false;
    double width() const noexcept { return b - a; }
};

namespace detail {

inline PriorKind linkKind(const InversePriorSpec& spec) {
    switch (spec.kind) {
        case PriorKind::TwoCovariate: return spec.baseKind;
        case PriorKind::Quadratic:
        case PriorKind::AR1:
        case PriorKind::TruthBand: return PriorKind::GaussianIdentity;
        default: return spec.kind;
    }
}

inline bool needsPositiveEdge(PriorKind link) {
    return link == PriorKind::PoissonLog || link == PriorKind::GeomLogit || link == PriorKind::GeomProbit;
}

}  // namespace detail

/// The band [ybar - c1 s/sqrt(m), ybar + c2 s/sqrt(m)] on the response-mean
/// scale, after the clamp policy.
struct MeanBand {
    double lower = 0.0;
    double upper = 0.0;
    bool clamped = false;
};

inline MeanBand meanBand(const InversePriorSpec& spec, double ybar, double s, std::size_t m) {
    validatePriorSpec(spec);
    if (m == 0) fail(ErrorCode::ReplicateCountTooSmall, "inverse-priors", "band needs m >= 1");
    if (!std::isfinite(ybar) || !std::isfinite(s) || s < 0.0)
        fail(ErrorCode::NonFiniteInput, "inverse-priors", "row summary must be finite with s >= 0");
    const double root = std::sqrt(static_cast<double>(m));
    MeanBand band{ybar - spec.c1 * s / root, ybar + spec.c2 * s / root, false};
    if (detail::needsPositiveEdge(detail::linkKind(spec)) && !(band.lower > 0.0)) {
        if (spec.clamp == ClampPolicy::Error)
            fail(ErrorCode::NonPositiveBandEdge, "inverse-priors",
                 "lower band edge " + std::to_string(band.lower) + " is not positive");
        band.lower = kClampEpsilon;
        band.upper = std::max(band.upper, band.lower);
        band.clamped = true;
    }
    return band;
}

/// Probit predictor for a geometric mean: Phi^{-1}(1/(mean+1)), taken through
/// the small tail so a positive mean below 1e-16 does not round p up to 1.
inline double probitEta(double mean) { return -normalQuantile(mean / (mean + 1.0)); }

/// Map a response-mean value to the linear-predictor scale of a link kind.
inline double linkTransform(PriorKind link, double mean) {
    switch (link) {
        case PriorKind::PoissonLog: return std::log(mean);
        case PriorKind::GeomLogit: return -std::log(mean);  // (1-p)/p = exp(-eta)
        case PriorKind::GeomProbit: return probitEta(mean);
        default: return mean;
    }
}

/// Band endpoints carried to the linear-predictor scale, unsorted.
inline std::pair<double, double> transformedBand(const InversePriorSpec& spec, const MeanBand& band) {
    const PriorKind link = detail::linkKind(spec);
    if (link == PriorKind::GeomProbit && band.upper > band.lower) {
        probitInverseMeanBand(band.lower, band.upper);  // validates the edges
        return {probitEta(band.lower), probitEta(band.upper)};
    }
    return {linkTransform(link, band.lower), linkTransform(link, band.upper)};
}

/// [a, b] = sorted ((eta_l - offset)/slope, (eta_u - offset)/slope).
inline PriorInterval affineInterval(std::pair<double, double> etaBand, double offset, double slope, bool clamped) {
    if (slope == 0.0) fail(ErrorCode::SlopeZero, "inverse-priors", "slope of the held-out covariate is zero");
    const double e1 = (etaBand.first - offset) / slope;
    const double e2 = (etaBand.second - offset) / slope;
    return {std::min(e1, e2), std::max(e1, e2), clamped};
}

/// Offset and slope of the held-out covariate in the linear predictor.
inline std::pair<double, double> offsetAndSlope(const InversePriorSpec& spec, const ThetaVector& theta,
                                                std::optional<double> fixedOther) {
    const auto other = [&]() {
        if (!fixedOther)
            fail(ErrorCode::DimensionMismatch, "inverse-priors", "this prior kind needs the other covariate value");
        return *fixedOther;
    };
    switch (spec.kind) {
        case PriorKind::PoissonLog:
        case PriorKind::GeomLogit:
        case PriorKind::GeomProbit:
        case PriorKind::GaussianIdentity: return {theta.at("alpha"), theta.at("beta")};
        case PriorKind::Quadratic: {
            const double x = other();
            return {theta.at("alpha") + theta.at("beta2") * x * x, theta.at("beta1")};
        }
        case PriorKind::AR1: return {theta.at("rho") * other(), theta.at("beta")};
        case PriorKind::TwoCovariate:
            if (spec.which == CovariateRole::X) return {theta.at("alpha") + theta.at("gamma") * other(), theta.at("beta")};
            return {theta.at("alpha") + theta.at("beta") * other(), theta.at("gamma")};
        case PriorKind::KnownCovariate:
        case PriorKind::TruthBand: break;
    }
    fail(ErrorCode::PriorIncompatible, "inverse-priors", "prior kind has no affine offset");
}

/// Support of the uniform prior on the held-out covariate. For AR1 kinds s
/// is s_t(rho) and fixedOther is ybar_{t-1}; for Quadratic fixedOther is the
/// observed x_i; for TwoCovariate it is the observed other covariate.
inline PriorInterval priorInterval(const InversePriorSpec& spec, const ThetaVector& theta, double ybar, double s,
                                   std::size_t m, std::optional<double> fixedOther = std::nullopt) {
    if (spec.kind == PriorKind::KnownCovariate) {
        const double x = fixedOther.value_or(0.0);
        return {x, x, false};
    }
    if (spec.kind == PriorKind::TruthBand)
        fail(ErrorCode::PriorIncompatible, "inverse-priors", "truth-band priors are built by InversePrior");
    const MeanBand band = meanBand(spec, ybar, s, m);
    const auto [offset, slope] = offsetAndSlope(spec, theta, fixedOther);
    return affineInterval(transformedBand(spec, band), offset, slope, band.clamped);
}

inline double samplePrior(const InversePriorSpec& spec, const ThetaVector& theta, const RowSummary& row, std::size_t m,
                          Rng& rng, std::optional<double> fixedOther = std::nullopt) {
    const PriorInterval iv = priorInterval(spec, theta, row.mean, row.sd, m, fixedOther);
    return iv.a + (iv.b - iv.a) * rng.uniform();
}

/// m -> infinity concentration point of the prior support at theta-tilde.
/// truthMean is the limiting row mean E[y | x_i] on the response scale; for
/// AR1 kinds fixedOther is the previous limiting mean m_{t-1}.
inline double limitPoint(const InversePriorSpec& spec, const ThetaVector& thetaTilde, double truthMean,
                         std::optional<double> fixedOther = std::nullopt) {
    validatePriorSpec(spec);
    if (spec.kind == PriorKind::KnownCovariate) return fixedOther.value_or(0.0);
    const auto [offset, slope] = offsetAndSlope(spec, thetaTilde, fixedOther);
    if (slope == 0.0) fail(ErrorCode::SlopeZero, "inverse-priors", "slope at the limit is zero");
    return (linkTransform(detail::linkKind(spec), truthMean) - offset) / slope;
}

// ---------------------------------------------------------------------------
// AR(1) summaries
// ---------------------------------------------------------------------------

/// s_t(rho) = sqrt((1/m) sum_j [(y_tj - ybar_t) - rho (y_{t-1,j} - ybar_{t-1})]^2)
/// with y_{-1,j} = 0.
inline double ar1BandScale(const ReplicatedDataset& ds, std::size_t t, double rho) {
    if (t >= ds.n()) fail(ErrorCode::IndexOutOfRange, "inverse-priors", "time index outside the series");
    const double ybar = ds.rowMean(t);
    const double prevBar = t > 0 ? ds.rowMean(t - 1) : 0.0;
    double ss = 0.0;
    for (std::size_t j = 0; j < ds.m(); ++j) {
        const double prev = t > 0 ? ds.y(t - 1, j) : 0.0;
        const double d = (ds.y(t, j) - ybar) - rho * (prev - prevBar);
        ss += d * d;
    }
    return std::sqrt(ss / static_cast<double>(ds.m()));
}

// ---------------------------------------------------------------------------
// InversePrior: priors for every covariate of a compiled model
// ---------------------------------------------------------------------------

/// Default prior kind for a covariate of a candidate model.
inline InversePriorSpec defaultPriorFor(const ModelSpec& spec, std::size_t k, double c1 = 1.0, double c2 = 100.0,
                                        ClampPolicy clamp = ClampPolicy::Error) {
    InversePriorSpec p;
    p.c1 = c1;
    p.c2 = c2;
    p.clamp = clamp;
    PriorKind link = PriorKind::GaussianIdentity;
    if (spec.family == Family::Poisson) link = PriorKind::PoissonLog;
    if (spec.family == Family::Geometric) link = spec.link == Link::Logit ? PriorKind::GeomLogit : PriorKind::GeomProbit;
    if (spec.regression == Regression::FixedFunction) {
        p.kind = PriorKind::KnownCovariate;
    } else if (spec.regression == Regression::Quadratic) {
        p.kind = PriorKind::Quadratic;
    } else if (spec.regression == Regression::AR1) {
        p.kind = PriorKind::AR1;
    } else if (spec.covariateSubset.size() == 2) {
        p.kind = PriorKind::TwoCovariate;
        p.baseKind = link;
        p.which = k == 0 ? CovariateRole::X : CovariateRole::Z;
    } else if (spec.covariateSubset.size() == 1) {
        p.kind = link;
    } else {
        fail(ErrorCode::PriorIncompatible, "inverse-priors", "no inverse prior for more than two covariates");
    }
    return p;
}

/// Priors for all covariates in a model's subset, bound to one dataset.
/// Draws replace the subset coordinates of a covariate row; the bands that
/// do not depend on theta are cached per row.
class InversePrior {
public:
    InversePrior(const CompiledModel& model, std::vector<InversePriorSpec> specs)
        : model_(&model), specs_(std::move(specs)) {
        const ModelSpec& ms = model.spec();
        const ReplicatedDataset& ds = model.data();
        const std::size_t q = ms.regression == Regression::FixedFunction ? 1 : ms.covariateSubset.size();
        if (specs_.size() != q)
            fail(ErrorCode::PriorIncompatible, "inverse-priors", "need one prior per covariate in the model");
        for (std::size_t k = 0; k < specs_.size(); ++k) {
            validatePriorSpec(specs_[k]);
            checkCompatible(ms, specs_[k], k);
        }
        bands_.assign(specs_.size(), std::vector<Band>(ds.n()));
        for (std::size_t k = 0; k < specs_.size(); ++k) {
            const auto& sp = specs_[k];
            if (sp.kind == PriorKind::KnownCovariate || sp.kind == PriorKind::AR1) continue;
            if (ds.m() < 2)
                fail(ErrorCode::ReplicateCountTooSmall, "inverse-priors", "inverse priors need m >= 2 replicates");
            for (std::size_t i = 0; i < ds.n(); ++i) {
                const RowSummary rs = rowSummary(ds, i);
                const MeanBand mb = meanBand(sp, rs.mean, rs.sd, ds.m());
                Band& b = bands_[k][i];
                b.clamped = mb.clamped;
                if (sp.kind == PriorKind::TruthBand) {
                    locateTruthBand(ms, mb, i, b);
                } else {
                    b.eta = transformedBand(sp, mb);
                }
            }
        }
    }

    static InversePrior defaults(const CompiledModel& model, double c1 = 1.0, double c2 = 100.0,
                                 ClampPolicy clamp = ClampPolicy::Error) {
        const ModelSpec& ms = model.spec();
        const std::size_t q = ms.regression == Regression::FixedFunction ? 1 : ms.covariateSubset.size();
        std::vector<InversePriorSpec> specs;
        for (std::size_t k = 0; k < q; ++k) specs.push_back(defaultPriorFor(ms, k, c1, c2, clamp));
        return InversePrior(model, std::move(specs));
    }

    const std::vector<InversePriorSpec>& specs() const noexcept { return specs_; }

    /// Number of rows whose band was clamped for covariate k.
    std::size_t clampedRows() const noexcept {
        std::size_t c = 0;
        for (const auto& perCov : bands_)
            for (const auto& b : perCov) c += b.clamped ? 1 : 0;
        return c;
    }

    /// Support interval for covariate k of row i at theta; nullopt when the
    /// support is empty or undefined for this draw (zero slope, NaN).
    std::optional<PriorInterval> interval(std::span<const double> theta, std::size_t i, std::size_t k) const {
        const auto& sp = specs_[k];
        const ReplicatedDataset& ds = model_->data();
        const ModelSpec& ms = model_->spec();
        if (sp.kind == PriorKind::KnownCovariate) {
            const double x = ds.x(i, covariateColumn(k));
            return PriorInterval{x, x, false};
        }
        if (sp.kind == PriorKind::TruthBand) {
            const Band& b = bands_[k][i];
            if (!b.valid) return std::nullopt;
            return PriorInterval{b.eta.first, b.eta.second, b.clamped};
        }
        double offset = 0.0, slope = 0.0;
        std::pair<double, double> eta;
        bool clamped = false;
        if (sp.kind == PriorKind::AR1) {
            const double rho = model_->value(theta, 0);
            const double s = ar1BandScale(ds, i, rho);
            const MeanBand mb = meanBandNoThrow(sp, ds.rowMean(i), s, ds.m());
            eta = {mb.lower, mb.upper};
            offset = rho * (i > 0 ? ds.rowMean(i - 1) : 0.0);
            slope = model_->value(theta, 1);
        } else {
            eta = bands_[k][i].eta;
            clamped = bands_[k][i].clamped;
            switch (sp.kind) {
                case PriorKind::Quadratic: {
                    const double x = ds.x(i, ms.covariateSubset[0]);
                    offset = model_->value(theta, 0) + model_->value(theta, 2) * x * x;
                    slope = model_->value(theta, 1);
                    break;
                }
                default: {
                    // alpha + sum of the other coordinates at observed values
                    offset = model_->value(theta, 0);
                    for (std::size_t j = 0; j < ms.covariateSubset.size(); ++j)
                        if (j != k) offset += model_->value(theta, 1 + j) * ds.x(i, ms.covariateSubset[j]);
                    slope = model_->value(theta, 1 + k);
                    break;
                }
            }
        }
        if (slope == 0.0 || !std::isfinite(slope) || !std::isfinite(offset)) return std::nullopt;
        const double e1 = (eta.first - offset) / slope;
        const double e2 = (eta.second - offset) / slope;
        if (!std::isfinite(e1) || !std::isfinite(e2)) return std::nullopt;
        return PriorInterval{std::min(e1, e2), std::max(e1, e2), clamped};
    }

    /// Fill xrow (a full covariate row, pre-initialized with the observed
    /// values) with fresh draws for every subset covariate of row i.
    bool sample(std::span<const double> theta, std::size_t i, Rng& rng, std::vector<double>& xrow) const {
        for (std::size_t k = 0; k < specs_.size(); ++k) {
            const auto iv = interval(theta, i, k);
            if (!iv) return false;
            xrow[covariateColumn(k)] = iv->a + (iv->b - iv->a) * rng.uniform();
        }
        return true;
    }

    /// Precompute intervals for theta once, then draw repeatedly.
    bool intervals(std::span<const double> theta, std::size_t i, std::vector<PriorInterval>& out) const {
        out.resize(specs_.size());
        for (std::size_t k = 0; k < specs_.size(); ++k) {
            const auto iv = interval(theta, i, k);
            if (!iv) return false;
            out[k] = *iv;
        }
        return true;
    }

    std::size_t covariateColumn(std::size_t k) const {
        const ModelSpec& ms = model_->spec();
        if (ms.regression == Regression::FixedFunction) return 0;
        return ms.covariateSubset[k];
    }

private:
    struct Band {
        std::pair<double, double> eta{0.0, 0.0};
        bool clamped = false;
        bool valid = true;
    };

    static MeanBand meanBandNoThrow(const InversePriorSpec& sp, double ybar, double s, std::size_t m) {
        const double root = std::sqrt(static_cast<double>(m));
        return {ybar - sp.c1 * s / root, ybar + sp.c2 * s / root, false};
    }

    static void checkCompatible(const ModelSpec& ms, const InversePriorSpec& sp, std::size_t k) {
        const auto bad = [](const std::string& why) { fail(ErrorCode::PriorIncompatible, "inverse-priors", why); };
        if (sp.kind == PriorKind::KnownCovariate) return;
        if (ms.regression == Regression::FixedFunction) {
            if (sp.kind != PriorKind::TruthBand || ms.family != Family::GaussianNoise)
                bad("parameter-free truths take a known covariate or a Gaussian truth band");
            return;
        }
        if (sp.kind == PriorKind::TruthBand) bad("truth-band prior needs a parameter-free model");
        if (sp.kind == PriorKind::Quadratic) {
            if (ms.regression != Regression::Quadratic) bad("quadratic prior on a non-quadratic model");
            return;
        }
        if (sp.kind == PriorKind::AR1) {
            if (ms.regression != Regression::AR1) bad("AR(1) prior on a non-AR(1) model");
            return;
        }
        if (ms.regression == Regression::Quadratic || ms.regression == Regression::AR1)
            bad("model needs its own structured prior kind");
        const PriorKind link = sp.kind == PriorKind::TwoCovariate ? sp.baseKind : sp.kind;
        const bool ok = (link == PriorKind::PoissonLog && ms.family == Family::Poisson) ||
                        (link == PriorKind::GeomLogit && ms.family == Family::Geometric && ms.link == Link::Logit) ||
                        (link == PriorKind::GeomProbit && ms.family == Family::Geometric && ms.link == Link::Probit) ||
                        (link == PriorKind::GaussianIdentity && ms.family == Family::GaussianNoise);
        if (!ok) bad("prior link kind does not match the model family/link");
        if (sp.kind == PriorKind::TwoCovariate && ms.covariateSubset.size() != 2) bad("two-covariate prior on a one-covariate model");
        if (sp.kind != PriorKind::TwoCovariate && ms.covariateSubset.size() != 1) bad("single-covariate prior on a two-covariate model");
        if (sp.kind == PriorKind::TwoCovariate && (sp.which == CovariateRole::X) != (k == 0))
            bad("two-covariate prior roles must follow the subset order (x first)");
    }

    /// {x in [min x, max x] : eta0(x) in band}, by scanning a 2001-point grid.
    void locateTruthBand(const ModelSpec& ms, const MeanBand& mb, std::size_t, Band& b) const {
        const ReplicatedDataset& ds = model_->data();
        const Eigen::VectorXd col = ds.covariates().col(0);
        const double lo = col.minCoeff(), hi = col.maxCoeff();
        const int grid = 2001;
        double first = 0.0, last = 0.0;
        bool any = false;
        for (int g = 0; g < grid; ++g) {
            const double x = lo + (hi - lo) * g / (grid - 1);
            const double v = ms.truthFunction(x);
            if (v >= mb.lower && v <= mb.upper) {
                if (!any) first = x;
                last = x;
                any = true;
            }
        }
        b.valid = any;
        b.eta = {first, last};
    }

    const CompiledModel* model_;
    std::vector<InversePriorSpec> specs_;
    std::vector<std::vector<Band>> bands_;
};

}  // namespace pbf
