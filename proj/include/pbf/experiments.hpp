#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "pbf/conjugate.hpp"
#include "pbf/crossval.hpp"
#include "pbf/data_model.hpp"
#include "pbf/error.hpp"
#include "pbf/expression.hpp"
#include "pbf/inverse_priors.hpp"
#include "pbf/kl_theory.hpp"
#include "pbf/likelihoods.hpp"
#include "pbf/parallel.hpp"
#include "pbf/rng.hpp"
#include "pbf/samplers.hpp"
#include "pbf/serialization.hpp"

namespace pbf {

enum class StudyKind { ConvergenceLinear, ConvergenceQuadratic, ConvergenceAr1, Table1, Table2, Custom };

inline std::string_view toString(StudyKind k) noexcept {
    switch (k) {
        case StudyKind::ConvergenceLinear: return "convergence_linear";
        case StudyKind::ConvergenceQuadratic: return "convergence_quadratic";
        case StudyKind::ConvergenceAr1: return "convergence_ar1";
        case StudyKind::Table1: return "table1";
        case StudyKind::Table2: return "table2";
        case StudyKind::Custom: return "custom";
    }
    return "?";
}

inline bool isConvergence(StudyKind k) noexcept {
    return k == StudyKind::ConvergenceLinear || k == StudyKind::ConvergenceQuadratic || k == StudyKind::ConvergenceAr1;
}

enum class Estimator { Auto, Exact, MonteCarlo };

inline std::string_view toString(Estimator e) noexcept {
    return e == Estimator::Auto ? "auto" : (e == Estimator::Exact ? "exact" : "monte_carlo");
}

/// Truth parameters. Unset table coefficients are drawn from U(-1, 1) per seed.
struct TruthConfig {
    std::optional<double> alpha0, beta0, gamma0;
    std::string eta0 = "x^2";
    double sigma0sq = 1.0;
    double lower = -1.0, upper = 1.0;  // covariate range for iid designs
    // AR(1)
    double rho0 = 0.5;
    double ar1Beta0 = 1.0;
    double sigmaX2 = 1.0, sigmaZ2 = 1.0;
    // custom truths
    Family family = Family::GaussianNoise;
    Link link = Link::Identity;
    std::size_t covariates = 1;
};

struct ExperimentConfig {
    StudyKind kind = StudyKind::Table1;
    std::size_t n = 10;                    // tables / custom
    std::vector<std::size_t> schedule;     // convergence
    std::size_t m = 10;
    std::vector<std::uint64_t> seeds{1};
    TruthConfig truth;
    std::vector<ModelSpec> models;         // custom roster
    std::string pair = "linear:truth";     // convergence
    CvMode mode = CvMode::Forward;         // convergence
    Estimator estimator = Estimator::Auto;
    double gapTolerance = 0.1;
    TmcmcConfig sampler;
    ResamplePlan resample;
    double c1 = 1.0, c2 = 100.0;
    ClampPolicy clamp = ClampPolicy::ClampToEpsilon;
    std::size_t heldOut = 0;
    double minEss = 10.0;
    std::size_t threads = 1;
    bool runInverse = true;

    void validate() const {
        if (seeds.empty()) fail(ErrorCode::InvalidConfig, "experiments", "seed list must be nonempty");
        if (isConvergence(kind)) {
            if (schedule.empty()) fail(ErrorCode::InvalidConfig, "experiments", "n schedule must be nonempty");
            for (std::size_t v : schedule)
                if (v < 5) fail(ErrorCode::InvalidConfig, "experiments", "schedule entries must be >= 5");
        } else if (n < 2) {
            fail(ErrorCode::InvalidConfig, "experiments", "n must be >= 2");
        }
        if (m < 1) fail(ErrorCode::InvalidConfig, "experiments", "m must be >= 1");
        if (heldOut >= m) fail(ErrorCode::InvalidConfig, "experiments", "held-out replicate must be < m");
        if (!(c1 >= 0.0)) fail(ErrorCode::InvalidConfig, "experiments", "c1 >= 0");
        if (!(c2 >= c1)) fail(ErrorCode::InvalidConfig, "experiments", "c2 >= c1");
        if (!(truth.lower < truth.upper)) fail(ErrorCode::InvalidConfig, "experiments", "covariate range needs lower < upper");
        if (!(truth.sigma0sq >= 0.0)) fail(ErrorCode::InvalidConfig, "experiments", "sigma0_sq >= 0");
        if (kind == StudyKind::ConvergenceAr1 && !(std::fabs(truth.rho0) < 1.0))
            fail(ErrorCode::InvalidConfig, "experiments", "|rho0| < 1");
        if (kind == StudyKind::Custom && models.empty())
            fail(ErrorCode::InvalidConfig, "experiments", "custom study needs a model roster");
        sampler.validate();
        resample.validate();
    }
};

// ---------------------------------------------------------------------------
// truth generation
// ---------------------------------------------------------------------------

struct GeneratedData {
    ReplicatedDataset data;
    ThetaVector truth;       // realized coefficients
    std::string eta0;        // truth linear predictor as text, when iid
};

/// Failures before the first success, P(success) = p.
inline double geometricVariate(Rng& rng, double p) {
    if (p >= 1.0) return 0.0;
    return std::floor(std::log(rng.uniformOpen()) / std::log1p(-p));
}

inline double drawResponse(Rng& rng, Family family, Link link, double eta, double sigma0sq) {
    switch (family) {
        case Family::Poisson: return static_cast<double>(rng.poisson(std::exp(eta)));
        case Family::Geometric: {
            const double p = link == Link::Probit ? normalCdf(eta) : 1.0 / (1.0 + std::exp(-eta));
            return geometricVariate(rng, p);
        }
        case Family::GaussianNoise: return eta + std::sqrt(sigma0sq) * rng.normal();
    }
    return 0.0;
}

namespace detail {
inline double coefficientOr(const std::optional<double>& v, Rng& rng) { return v ? *v : rng.uniform(-1.0, 1.0); }
}  // namespace detail

/// Simulates one dataset of n rows for the configured truth. Every stream is
/// derived from `seed`, so (config, seed, n) fixes the output.
inline GeneratedData generateTruth(const ExperimentConfig& cfg, std::uint64_t seed, std::size_t n) {
    const Rng root(seed);
    Rng coef = root.substream("truth-coefficients");
    Rng cov = root.substream("truth-covariates");
    Rng noise = root.substream("truth-responses");
    const std::size_t m = cfg.m;
    const TruthConfig& t = cfg.truth;
    switch (cfg.kind) {
        case StudyKind::Table1:
        case StudyKind::Table2: {
            const bool two = cfg.kind == StudyKind::Table2;
            const double a0 = detail::coefficientOr(t.alpha0, coef);
            const double b0 = detail::coefficientOr(t.beta0, coef);
            const double g0 = two ? detail::coefficientOr(t.gamma0, coef) : 0.0;
            Eigen::MatrixXd X(static_cast<Eigen::Index>(n), two ? 2 : 1), Y(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
            for (std::size_t i = 0; i < n; ++i) {
                const auto r = static_cast<Eigen::Index>(i);
                X(r, 0) = cov.uniform(-1.0, 1.0);
                if (two) X(r, 1) = cov.uniform(0.0, 2.0);
                const double eta = a0 + b0 * X(r, 0) + (two ? g0 * X(r, 1) : 0.0);
                for (std::size_t j = 0; j < m; ++j)
                    Y(r, static_cast<Eigen::Index>(j)) = drawResponse(noise, Family::Poisson, Link::Log, eta, 0.0);
            }
            ThetaVector truth = two ? ThetaVector::of({{"alpha", a0}, {"beta", b0}, {"gamma", g0}})
                                    : ThetaVector::of({{"alpha", a0}, {"beta", b0}});
            const std::string eta = formatExact(a0) + " + " + formatExact(b0) + "*x" + (two ? " + " + formatExact(g0) + "*z" : "");
            return {buildDataset(std::move(X), std::move(Y)), std::move(truth), eta};
        }
        case StudyKind::ConvergenceLinear:
        case StudyKind::ConvergenceQuadratic:
        case StudyKind::Custom: {
            const Expression eta0 = Expression::parse(t.eta0);
            const Family fam = cfg.kind == StudyKind::Custom ? t.family : Family::GaussianNoise;
            const Link link = cfg.kind == StudyKind::Custom ? t.link : Link::Identity;
            const std::size_t p = cfg.kind == StudyKind::Custom ? std::max<std::size_t>(1, t.covariates) : 1;
            Eigen::MatrixXd X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p)), Y(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
            std::vector<double> row(p);
            for (std::size_t i = 0; i < n; ++i) {
                const auto r = static_cast<Eigen::Index>(i);
                for (std::size_t c = 0; c < p; ++c) row[c] = X(r, static_cast<Eigen::Index>(c)) = cov.uniform(t.lower, t.upper);
                const double eta = eta0(std::span<const double>(row));
                for (std::size_t j = 0; j < m; ++j) Y(r, static_cast<Eigen::Index>(j)) = drawResponse(noise, fam, link, eta, t.sigma0sq);
            }
            return {buildDataset(std::move(X), std::move(Y)), ThetaVector::of({{"omega", std::log(t.sigma0sq)}}), t.eta0};
        }
        case StudyKind::ConvergenceAr1: {
            // centred uniforms with the target second moments; columns x, z and u = x + z
            const double ax = std::sqrt(3.0 * t.sigmaX2), az = std::sqrt(3.0 * t.sigmaZ2);
            Eigen::MatrixXd X(static_cast<Eigen::Index>(n), 3), Y(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
            for (std::size_t i = 0; i < n; ++i) {
                const auto r = static_cast<Eigen::Index>(i);
                X(r, 0) = cov.uniform(-ax, ax);
                X(r, 1) = cov.uniform(-az, az);
                X(r, 2) = X(r, 0) + X(r, 1);
            }
            const double sd = std::sqrt(t.sigma0sq);
            for (std::size_t j = 0; j < m; ++j) {
                double prev = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const auto r = static_cast<Eigen::Index>(i);
                    const double y = t.rho0 * prev + t.ar1Beta0 * X(r, 2) + sd * noise.normal();
                    Y(r, static_cast<Eigen::Index>(j)) = y;
                    prev = y;
                }
            }
            return {buildDataset(std::move(X), std::move(Y), {"x", "z", "u"}),
                    ThetaVector::of({{"rho", t.rho0}, {"beta", t.ar1Beta0}, {"omega", std::log(t.sigma0sq)}}),
                    {}};
        }
    }
    fail(ErrorCode::InvalidConfig, "experiments", "unknown study kind");
}

/// Largest deviation of the empirical (A1) moments from their limits:
/// means, cross products, lag-1 autocovariances and second moments.
inline double ar1PreflightDeviation(const ReplicatedDataset& ds, const TruthConfig& t) {
    const std::size_t n = ds.n();
    double sx = 0, sz = 0, sxz = 0, sxx1 = 0, szz1 = 0, sx1z = 0, sxz1 = 0, sx2 = 0, sz2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = ds.x(i, 0), z = ds.x(i, 1);
        sx += x;
        sz += z;
        sxz += x * z;
        sx2 += x * x;
        sz2 += z * z;
        if (i + 1 < n) {
            sxx1 += ds.x(i + 1, 0) * x;
            szz1 += ds.x(i + 1, 1) * z;
            sx1z += ds.x(i + 1, 0) * z;
            sxz1 += x * ds.x(i + 1, 1);
        }
    }
    const double nn = static_cast<double>(n);
    double dev = 0.0;
    for (double v : {sx, sz, sxz, sxx1, szz1, sx1z, sxz1}) dev = std::max(dev, std::fabs(v / nn));
    dev = std::max(dev, std::fabs(sx2 / nn - t.sigmaX2));
    dev = std::max(dev, std::fabs(sz2 / nn - t.sigmaZ2));
    return dev;
}

// ---------------------------------------------------------------------------
// convergence studies
// ---------------------------------------------------------------------------

struct ConvergencePoint {
    std::size_t n = 0;
    std::uint64_t seed = 0;
    double logPbf = 0.0;
    double normalized = 0.0;
    double gap = 0.0;  // |normalized - limit|
    double preflight = 0.0;
};

struct ConvergenceSummary {
    std::size_t n = 0;
    double meanNormalized = 0.0;
    double medianGap = 0.0;
    double fractionWithinTolerance = 0.0;
};

struct ConvergenceReport {
    std::string pair;
    CvMode mode = CvMode::Forward;
    Estimator estimator = Estimator::Exact;
    double limit = 0.0;
    double hA = 0.0, hB = 0.0;
    std::vector<double> thetaA, thetaB;
    std::vector<ConvergencePoint> points;  // n-major, then seed
    std::vector<ConvergenceSummary> summary;
    double tolerance = 0.1;
    double fractionSeedsShrinking = 0.0;   // gap(last n) <= gap(first n)
    bool medianMonotone = false;           // seed-median gap non-increasing over the schedule
    double fractionWithinAtLargest = 0.0;
    bool verdict = false;
    std::string verdictText;
};

inline TheoryInputs theoryInputsFor(const ExperimentConfig& cfg) {
    TheoryInputs in;
    const TruthConfig& t = cfg.truth;
    in.sigma0sq = t.sigma0sq;
    in.space = CovariateSpace{t.lower, t.upper, 2001};
    in.inverse = cfg.mode == CvMode::Inverse;
    if (cfg.kind == StudyKind::ConvergenceAr1) {
        in.ar1 = Ar1TheoryInputs{t.rho0, t.ar1Beta0, t.sigma0sq, t.sigmaX2, t.sigmaZ2};
    } else {
        const Expression e = Expression::parse(t.eta0);
        in.eta0 = [e](double x) { return e(x); };
    }
    return in;
}

/// Candidate / truth model for a theory label on a dataset from generateTruth.
inline ModelSpec modelForTheory(TheoryModel m, const ExperimentConfig& cfg) {
    ModelSpec s;
    s.family = Family::GaussianNoise;
    s.link = Link::Identity;
    s.label = std::string(toString(m));
    const bool ar = cfg.kind == StudyKind::ConvergenceAr1;
    switch (m) {
        case TheoryModel::Linear: s.regression = Regression::Linear; break;
        case TheoryModel::Quadratic: s.regression = Regression::Quadratic; break;
        case TheoryModel::Ar1X: s.regression = Regression::AR1; s.covariateSubset = {0}; break;
        case TheoryModel::Ar1Z: s.regression = Regression::AR1; s.covariateSubset = {1}; break;
        case TheoryModel::Truth:
            s.role = Role::Truth;
            if (ar) {
                s.regression = Regression::AR1;
                s.covariateSubset = {2};
                s.fixedParams = ThetaVector::of(
                    {{"rho", cfg.truth.rho0}, {"beta", cfg.truth.ar1Beta0}, {"omega", std::log(cfg.truth.sigma0sq)}});
            } else {
                s.regression = Regression::FixedFunction;
                s.truthFunction = Expression::parse(cfg.truth.eta0);
                s.fixedParams = ThetaVector::of({{"omega", std::log(cfg.truth.sigma0sq)}});
            }
            break;
    }
    return s;
}

namespace detail {

/// Design and response for the closed-form leave-one-out predictive.
inline std::pair<Eigen::MatrixXd, Eigen::VectorXd> conjugateDesign(TheoryModel m, const ReplicatedDataset& ds) {
    const auto n = static_cast<Eigen::Index>(ds.n());
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) y(i) = ds.y(static_cast<std::size_t>(i), 0);
    Eigen::MatrixXd D;
    switch (m) {
        case TheoryModel::Linear:
        case TheoryModel::Quadratic: {
            D.resize(n, m == TheoryModel::Linear ? 2 : 3);
            for (Eigen::Index i = 0; i < n; ++i) {
                const double x = ds.x(static_cast<std::size_t>(i), 0);
                D(i, 0) = 1.0;
                D(i, 1) = x;
                if (m == TheoryModel::Quadratic) D(i, 2) = x * x;
            }
            break;
        }
        case TheoryModel::Ar1X:
        case TheoryModel::Ar1Z: {
            const std::size_t col = m == TheoryModel::Ar1X ? 0 : 1;
            D.resize(n, 2);
            for (Eigen::Index i = 0; i < n; ++i) {
                D(i, 0) = i == 0 ? 0.0 : y(i - 1);
                D(i, 1) = ds.x(static_cast<std::size_t>(i), col);
            }
            break;
        }
        case TheoryModel::Truth: break;
    }
    return {D, y};
}

inline CvReport exactCvReport(TheoryModel m, const ExperimentConfig& cfg, const ReplicatedDataset& ds) {
    const std::size_t n = ds.n();
    std::vector<double> dens(n);
    if (m == TheoryModel::Truth) {
        const CompiledModel model(modelForTheory(m, cfg), ds);
        for (std::size_t i = 0; i < n; ++i) dens[i] = model.heldOutLogDensity({}, i, 0);
    } else {
        auto [D, y] = conjugateDesign(m, ds);
        dens = GaussianLooPredictive(D, y).allUnknownVariance();
    }
    return makeCvReport(std::move(dens), std::vector<double>(n, 0.0), CvMode::Forward, 0, std::string(toString(m)));
}

inline CvOptions cvOptionsFor(const ExperimentConfig& cfg, std::uint64_t seed, std::size_t threads) {
    CvOptions opt;
    opt.plan = cfg.resample;
    opt.heldOut = cfg.heldOut;
    opt.minEss = cfg.minEss;
    opt.fallback = cfg.sampler;
    opt.fallback.seed = seed;
    opt.seed = seed;
    opt.threads = threads;
    return opt;
}

inline PosteriorChain sampleModel(const CompiledModel& model, const TmcmcConfig& base, std::uint64_t seed) {
    TmcmcConfig cfg = base;
    cfg.seed = seed;
    std::vector<double> init(model.dim(), 0.0);
    return tmcmcSample([&](std::span<const double> t) { return model.logPosterior(t); }, init, cfg);
}

inline CvReport monteCarloCvReport(TheoryModel m, const ExperimentConfig& cfg, const ReplicatedDataset& ds,
                                   std::uint64_t seed, std::size_t threads) {
    const CompiledModel model(modelForTheory(m, cfg), ds);
    const Rng root(seed);
    const PosteriorChain chain = sampleModel(model, cfg.sampler, root.substream("chain", {static_cast<std::uint64_t>(m)})());
    const CvOptions opt = cvOptionsFor(cfg, root.substream("cv", {static_cast<std::uint64_t>(m)})(), threads);
    // the truth is cross-validated with its covariate known
    if (cfg.mode == CvMode::Inverse && m != TheoryModel::Truth) {
        const InversePrior prior = InversePrior::defaults(model, cfg.c1, cfg.c2, cfg.clamp);
        CvReport r = crossValidate(model, chain, CvMode::Inverse, opt, &prior);
        r.model = std::string(toString(m));
        return r;
    }
    CvReport r = crossValidate(model, chain, CvMode::Forward, opt);
    r.model = std::string(toString(m));
    r.mode = cfg.mode;
    return r;
}

inline double median(std::vector<double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

}  // namespace detail

/// Whether the study can use closed-form cross-validation densities.
inline bool exactEstimatorAvailable(const ExperimentConfig& cfg) {
    return cfg.mode == CvMode::Forward && cfg.m == 1 && isConvergence(cfg.kind);
}

inline ConvergenceReport runConvergenceStudy(const ExperimentConfig& cfg) {
    cfg.validate();
    if (!isConvergence(cfg.kind)) fail(ErrorCode::InvalidConfig, "experiments", "not a convergence study");
    const ModelPair pair = parseModelPair(cfg.pair);
    const bool ar = cfg.kind == StudyKind::ConvergenceAr1;
    for (TheoryModel tm : {pair.a, pair.b})
        if (tm != TheoryModel::Truth && detail::isAr1(tm) != ar)
            fail(ErrorCode::UnsupportedPair, "experiments", "pair '" + cfg.pair + "' does not match the study kind");

    ConvergenceReport rep;
    rep.pair = cfg.pair;
    rep.mode = cfg.mode;
    rep.tolerance = cfg.gapTolerance;
    const bool exact = exactEstimatorAvailable(cfg);
    if (cfg.estimator == Estimator::Exact && !exact)
        fail(ErrorCode::InvalidConfig, "experiments", "exact densities need forward mode with m = 1");
    rep.estimator = cfg.estimator == Estimator::MonteCarlo || !exact ? Estimator::MonteCarlo : Estimator::Exact;

    const KlLimit lim = klLimit(pair, theoryInputsFor(cfg));
    rep.limit = lim.limit;
    rep.hA = lim.hA;
    rep.hB = lim.hB;
    rep.thetaA = lim.thetaA;
    rep.thetaB = lim.thetaB;

    const std::size_t S = cfg.seeds.size(), N = cfg.schedule.size();
    rep.points.resize(N * S);
    const std::size_t outer = cfg.threads == 0 ? defaultThreads() : cfg.threads;
    parallelFor(N * S, outer, [&](std::size_t idx) {
        const std::size_t a = idx / S, s = idx % S;
        const std::size_t n = cfg.schedule[a];
        const std::uint64_t seed = cfg.seeds[s];
        // every schedule point simulates afresh from its own (seed, n) stream
        const std::uint64_t dataSeed = Rng(seed).substream("data", {n})();
        const GeneratedData gen = generateTruth(cfg, dataSeed, n);
        CvReport ra, rb;
        if (rep.estimator == Estimator::Exact) {
            ra = detail::exactCvReport(pair.a, cfg, gen.data);
            rb = detail::exactCvReport(pair.b, cfg, gen.data);
        } else {
            const std::uint64_t mcSeed = Rng(seed).substream("mc", {n})();
            ra = detail::monteCarloCvReport(pair.a, cfg, gen.data, mcSeed, 1);
            rb = detail::monteCarloCvReport(pair.b, cfg, gen.data, mcSeed, 1);
        }
        const PbfReport p = pbf(ra, rb);
        ConvergencePoint& pt = rep.points[idx];
        pt.n = n;
        pt.seed = seed;
        pt.logPbf = p.logPbf;
        pt.normalized = p.normalized;
        pt.gap = std::fabs(p.normalized - rep.limit);
        pt.preflight = ar ? ar1PreflightDeviation(gen.data, cfg.truth) : 0.0;
    });

    for (std::size_t a = 0; a < N; ++a) {
        ConvergenceSummary sm;
        sm.n = cfg.schedule[a];
        std::vector<double> gaps;
        double sum = 0.0;
        std::size_t within = 0;
        for (std::size_t s = 0; s < S; ++s) {
            const auto& pt = rep.points[a * S + s];
            gaps.push_back(pt.gap);
            sum += pt.normalized;
            within += pt.gap < cfg.gapTolerance ? 1 : 0;
        }
        sm.meanNormalized = sum / static_cast<double>(S);
        sm.medianGap = detail::median(gaps);
        sm.fractionWithinTolerance = static_cast<double>(within) / static_cast<double>(S);
        rep.summary.push_back(sm);
    }
    std::size_t shrinking = 0;
    for (std::size_t s = 0; s < S; ++s) shrinking += rep.points[(N - 1) * S + s].gap <= rep.points[s].gap ? 1 : 0;
    rep.fractionSeedsShrinking = static_cast<double>(shrinking) / static_cast<double>(S);
    rep.medianMonotone = true;
    for (std::size_t a = 1; a < N; ++a) rep.medianMonotone = rep.medianMonotone && rep.summary[a].medianGap <= rep.summary[a - 1].medianGap;
    rep.fractionWithinAtLargest = rep.summary.back().fractionWithinTolerance;
    rep.verdict = rep.fractionWithinAtLargest > 0.5 && (N == 1 || rep.fractionSeedsShrinking > 0.5);
    rep.verdictText = std::string(rep.verdict ? "CONVERGING" : "NOT CONVERGING") + ": gap < " + formatExact(cfg.gapTolerance) +
                      " at n=" + std::to_string(cfg.schedule.back()) + " for " +
                      std::to_string(static_cast<int>(std::lround(rep.fractionWithinAtLargest * static_cast<double>(S)))) + "/" +
                      std::to_string(S) + " seeds; gap shrank from first to last n for " +
                      std::to_string(shrinking) + "/" + std::to_string(S) + " seeds";
    return rep;
}

// ---------------------------------------------------------------------------
// table studies
// ---------------------------------------------------------------------------

struct TableRow {
    ModelSpec spec;
    std::string covariates;  // "x", "z", "(x,z)"; Table 2 only
};

inline std::string covariateLabel(const std::vector<std::size_t>& subset, const std::vector<std::string>& names) {
    if (subset.size() == 1) return names.at(subset[0]);
    std::string s = "(";
    for (std::size_t k = 0; k < subset.size(); ++k) s += (k ? "," : "") + names.at(subset[k]);
    return s + ")";
}

/// Row order: family/link, then regression form, then covariate set.
inline std::vector<TableRow> tableRows(StudyKind kind, const std::vector<ModelSpec>& roster = {}) {
    struct FL {
        Family f;
        Link l;
    };
    const std::vector<FL> fams{{Family::Poisson, Link::Log}, {Family::Geometric, Link::Logit}, {Family::Geometric, Link::Probit}};
    std::vector<TableRow> rows;
    if (kind == StudyKind::Table1 || kind == StudyKind::Table2) {
        const std::vector<std::vector<std::size_t>> covSets =
            kind == StudyKind::Table1 ? std::vector<std::vector<std::size_t>>{{0}} : std::vector<std::vector<std::size_t>>{{0}, {1}, {0, 1}};
        for (const auto& fl : fams)
            for (Regression r : {Regression::Linear, Regression::GP})
                for (const auto& cs : covSets) {
                    ModelSpec s;
                    s.family = fl.f;
                    s.link = fl.l;
                    s.regression = r;
                    s.covariateSubset = cs;
                    rows.push_back({s, kind == StudyKind::Table2 ? covariateLabel(cs, {"x", "z"}) : std::string{}});
                }
        return rows;
    }
    for (const auto& s : roster) rows.push_back({s, {}});
    return rows;
}

struct TableSeedResult {
    std::uint64_t seed = 0;
    ThetaVector truth;
    std::vector<double> forward;
    std::vector<double> inverse;            // NaN when infeasible
    std::vector<std::string> inverseNote;   // reason for infeasibility, empty if fine
    std::vector<std::size_t> fallbackFolds;
};

struct TableRowSummary {
    double meanForward = 0.0;
    double meanInverse = std::numeric_limits<double>::quiet_NaN();
    double forwardWinRate = 0.0;  // fraction of seeds with the best forward score
    double inverseWinRate = 0.0;
    std::size_t inverseFeasibleSeeds = 0;
};

struct TableReport {
    StudyKind kind = StudyKind::Table1;
    std::size_t n = 0, m = 0;
    std::vector<TableRow> rows;
    std::vector<TableSeedResult> seeds;
    std::vector<TableRowSummary> summary;

    /// Fraction of seeds where row a has a strictly higher forward score than row b.
    double forwardBeatRate(std::size_t a, std::size_t b) const {
        if (seeds.empty()) return 0.0;
        std::size_t w = 0;
        for (const auto& s : seeds) w += s.forward[a] > s.forward[b] ? 1 : 0;
        return static_cast<double>(w) / static_cast<double>(seeds.size());
    }
};

/// Scores for one row on one dataset.
struct RowScores {
    double forward = 0.0;
    double inverse = std::numeric_limits<double>::quiet_NaN();
    std::string inverseNote;
    std::size_t fallbackFolds = 0;
};

inline RowScores scoreRow(const ModelSpec& spec, const ReplicatedDataset& ds, const ExperimentConfig& cfg, std::uint64_t seed,
                          std::size_t threads) {
    const CompiledModel model(spec, ds);
    const Rng root(seed);
    const PosteriorChain chain = detail::sampleModel(model, cfg.sampler, root.substream("chain")());
    const CvOptions opt = detail::cvOptionsFor(cfg, root.substream("cv")(), threads);
    RowScores out;
    const CvReport fwd = crossValidate(model, chain, CvMode::Forward, opt);
    out.forward = fwd.meanLogDensity;
    out.fallbackFolds = fwd.fallbackFolds;
    if (!cfg.runInverse) {
        out.inverseNote = "not run";
        return out;
    }
    if (ds.m() < 2) {
        out.inverseNote = "infeasible: m < 2 leaves s_i undefined";
        return out;
    }
    try {
        const InversePrior prior = InversePrior::defaults(model, cfg.c1, cfg.c2, cfg.clamp);
        const CvReport inv = crossValidate(model, chain, CvMode::Inverse, opt, &prior);
        out.inverse = inv.meanLogDensity;
        out.fallbackFolds += inv.fallbackFolds;
    } catch (const Error& e) {
        out.inverseNote = std::string("infeasible: ") + std::string(errorName(e.code()));
    }
    return out;
}

inline TableReport runTableStudy(const ExperimentConfig& cfg) {
    cfg.validate();
    if (isConvergence(cfg.kind)) fail(ErrorCode::InvalidConfig, "experiments", "not a table study");
    TableReport rep;
    rep.kind = cfg.kind;
    rep.n = cfg.n;
    rep.m = cfg.m;
    rep.rows = tableRows(cfg.kind, cfg.models);
    const std::size_t R = rep.rows.size(), S = cfg.seeds.size();
    std::vector<GeneratedData> data;
    data.reserve(S);
    for (std::uint64_t seed : cfg.seeds) data.push_back(generateTruth(cfg, seed, cfg.n));
    for (const auto& row : rep.rows)
        for (std::size_t c : row.spec.covariateSubset)
            if (c >= data.front().data.p())
                fail(ErrorCode::InvalidConfig, "experiments", "model uses covariate " + std::to_string(c) + " which the truth lacks");
    std::vector<RowScores> scores(R * S);
    const std::size_t outer = cfg.threads == 0 ? defaultThreads() : cfg.threads;
    parallelFor(R * S, outer, [&](std::size_t idx) {
        const std::size_t s = idx / R, r = idx % R;
        const std::uint64_t unitSeed = Rng(cfg.seeds[s]).substream("row", {r})();
        scores[idx] = scoreRow(rep.rows[r].spec, data[s].data, cfg, unitSeed, 1);
    });
    for (std::size_t s = 0; s < S; ++s) {
        TableSeedResult sr;
        sr.seed = cfg.seeds[s];
        sr.truth = data[s].truth;
        for (std::size_t r = 0; r < R; ++r) {
            const auto& sc = scores[s * R + r];
            sr.forward.push_back(sc.forward);
            sr.inverse.push_back(sc.inverse);
            sr.inverseNote.push_back(sc.inverseNote);
            sr.fallbackFolds.push_back(sc.fallbackFolds);
        }
        rep.seeds.push_back(std::move(sr));
    }
    rep.summary.assign(R, {});
    for (const auto& sr : rep.seeds) {
        const auto bestF = static_cast<std::size_t>(std::max_element(sr.forward.begin(), sr.forward.end()) - sr.forward.begin());
        std::optional<std::size_t> bestI;
        for (std::size_t r = 0; r < R; ++r)
            if (std::isfinite(sr.inverse[r]) && (!bestI || sr.inverse[r] > sr.inverse[*bestI])) bestI = r;
        rep.summary[bestF].forwardWinRate += 1.0;
        if (bestI) rep.summary[*bestI].inverseWinRate += 1.0;
        for (std::size_t r = 0; r < R; ++r) {
            rep.summary[r].meanForward += sr.forward[r];
            if (std::isfinite(sr.inverse[r])) {
                if (rep.summary[r].inverseFeasibleSeeds == 0) rep.summary[r].meanInverse = 0.0;
                rep.summary[r].meanInverse += sr.inverse[r];
                ++rep.summary[r].inverseFeasibleSeeds;
            }
        }
    }
    for (auto& sm : rep.summary) {
        sm.meanForward /= static_cast<double>(S);
        sm.forwardWinRate /= static_cast<double>(S);
        sm.inverseWinRate /= static_cast<double>(S);
        if (sm.inverseFeasibleSeeds) sm.meanInverse /= static_cast<double>(sm.inverseFeasibleSeeds);
    }
    return rep;
}

}  // namespace pbf
