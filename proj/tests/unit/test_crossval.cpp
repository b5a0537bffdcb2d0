#include <gtest/gtest.h>

#include <numbers>

#include "generators.hpp"
#include "pbf/conjugate.hpp"
#include "pbf/crossval.hpp"
#include "pbf/quadrature.hpp"

using namespace pbf;

namespace {

ModelSpec gaussianLinearKnownVariance() {
    ModelSpec s;
    s.family = Family::GaussianNoise;
    s.link = Link::Identity;
    s.regression = Regression::Linear;
    s.fixedParams = ThetaVector::of({{"omega", 0.0}});
    return s;
}

ReplicatedDataset gaussianData(std::uint64_t seed, std::size_t n, std::size_t m = 1) {
    Rng r(seed);
    Eigen::MatrixXd x(n, 1), y(n, m);
    for (std::size_t i = 0; i < n; ++i) {
        x(i) = r.uniform(-1, 1);
        for (std::size_t j = 0; j < m; ++j) y(i, j) = 0.5 + x(i) * x(i) + r.normal();
    }
    return buildDataset(x, y);
}

/// Refit least squares without row i, then the Gaussian predictive with the
/// parameter-uncertainty inflation d'(D'D)^{-1}d.
double looOracle(const ReplicatedDataset& ds, std::size_t i, double sigma2) {
    const auto n = static_cast<Eigen::Index>(ds.n());
    Eigen::MatrixXd d(n - 1, 2);
    Eigen::VectorXd y(n - 1);
    for (Eigen::Index r = 0, k = 0; r < n; ++r) {
        if (r == static_cast<Eigen::Index>(i)) continue;
        d(k, 0) = 1.0;
        d(k, 1) = ds.x(r);
        y(k) = ds.y(r, 0);
        ++k;
    }
    const Eigen::Matrix2d g = (d.transpose() * d).inverse();
    const Eigen::Vector2d b = g * d.transpose() * y;
    const Eigen::Vector2d di(1.0, ds.x(i));
    const double mean = di.dot(b), var = sigma2 * (1.0 + di.dot(g * di));
    const double r = ds.y(i, 0) - mean;
    return -0.5 * std::log(2 * std::numbers::pi * var) - 0.5 * r * r / var;
}

PosteriorChain runChain(const CompiledModel& model, std::uint64_t seed) {
    TmcmcConfig cfg;
    cfg.seed = seed;
    return tmcmcSample([&](std::span<const double> t) { return model.logPosterior(t); }, std::vector<double>(model.dim(), 0.0),
                       cfg);
}

CvReport fakeReport(Rng& r, std::size_t n, std::string name) {
    return makeCvReport(gen::vec(r, n, -20, 2), std::vector<double>(n, 0.0), CvMode::Forward, 0, std::move(name));
}

}  // namespace

TEST(ForwardCv, ParameterFreeTruthIsExact) {
    const auto ds = gaussianData(1, 15);
    ModelSpec truth;
    truth.regression = Regression::FixedFunction;
    truth.truthFunction = Expression::parse("0.5 + x^2");
    truth.fixedParams = ThetaVector::of({{"omega", 0.0}});
    truth.role = Role::Truth;
    const CompiledModel model(truth, ds);
    ASSERT_EQ(model.dim(), 0u);
    PosteriorChain empty;
    const auto rep = crossValidate(model, empty, CvMode::Forward, CvOptions{});
    for (std::size_t i = 0; i < ds.n(); ++i) {
        const double direct = logDensityObs(truth, ThetaVector{}, ds.covariateRow(i), ds.y(i, 0));
        EXPECT_EQ(rep.perFoldLogDensity[i], direct);
        EXPECT_EQ(rep.mcStdErr[i], 0.0);
        // the general estimator on a zero-dimensional theta gives the same value
        const auto general = forwardFromDraws(model, i, 0, {std::vector<double>{}});
        EXPECT_EQ(general.logDensity, direct);
    }
}

TEST(ForwardCv, ConjugateGaussianMatchesClosedForm) {
    // linear truth, so the model is correctly specified
    Rng r(1);
    Eigen::MatrixXd x(20, 1), y(20, 1);
    for (Eigen::Index i = 0; i < 20; ++i) {
        x(i) = r.uniform(-1, 1);
        y(i) = 0.5 + x(i) + r.normal();
    }
    const auto ds = buildDataset(x, y);
    const CompiledModel model(gaussianLinearKnownVariance(), ds);
    // a long chain keeps the weight ESS well above the 1000-draw subsample;
    // near the default length, resampling without replacement biases folds
    // whose ESS is only a few thousand
    TmcmcConfig cfg;
    cfg.seed = 1;
    cfg.totalIterations = 410000;
    const auto chain = tmcmcSample([&](std::span<const double> t) { return model.logPosterior(t); }, {0.0, 0.0}, cfg);
    CvOptions opt;
    opt.seed = 1;
    opt.threads = 4;
    const auto rep = crossValidate(model, chain, CvMode::Forward, opt);
    for (std::size_t i = 0; i < ds.n(); ++i) {
        const double oracle = looOracle(ds, i, 1.0);
        EXPECT_LT(std::fabs(rep.perFoldLogDensity[i] - oracle), 3 * rep.mcStdErr[i]) << "fold " << i;
    }
    // library closed form agrees with the refit oracle
    const GaussianLooPredictive loo(interceptDesign(ds.covariates(), {0}), ds.responses().col(0));
    for (std::size_t i = 0; i < ds.n(); ++i) EXPECT_NEAR(loo.logDensityKnownVariance(i, 1.0), looOracle(ds, i, 1.0), 1e-12);
}

TEST(ForwardCv, DuplicateModelsShareDensities) {
    const auto ds = gaussianData(5, 12);
    const CompiledModel a(gaussianLinearKnownVariance(), ds), b(gaussianLinearKnownVariance(), ds);
    const auto chain = runChain(a, 6);
    CvOptions opt;
    opt.seed = 7;
    opt.plan = {200, 10};
    const auto ra = crossValidate(a, chain, CvMode::Forward, opt);
    const auto rb = crossValidate(b, chain, CvMode::Forward, opt);
    EXPECT_EQ(ra.perFoldLogDensity, rb.perFoldLogDensity);
    EXPECT_EQ(pbf::pbf(ra, rb).logPbf, 0.0);
}

TEST(ForwardCv, ErrorHalvesWhenEvaluationsQuadruple) {
    const auto ds = gaussianData(8, 20);
    const CompiledModel model(gaussianLinearKnownVariance(), ds);
    double ss1 = 0, ss4 = 0;
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
        TmcmcConfig cfg;
        cfg.seed = 100 + seed;
        cfg.totalIterations = 170000;
        cfg.burnIn = 10000;
        const auto chain = tmcmcSample([&](std::span<const double> t) { return model.logPosterior(t); }, {0.0, 0.0}, cfg);
        for (auto [plan, acc] : {std::pair{ResamplePlan{100, 100}, &ss1}, std::pair{ResamplePlan{400, 100}, &ss4}}) {
            CvOptions opt;
            opt.seed = seed;
            opt.plan = plan;
            const auto rep = crossValidate(model, chain, CvMode::Forward, opt);
            for (std::size_t i = 0; i < ds.n(); ++i) *acc += std::pow(rep.perFoldLogDensity[i] - looOracle(ds, i, 1.0), 2);
        }
    }
    const double ratio = std::sqrt(ss1 / ss4);
    EXPECT_GT(ratio, 1.4);
    EXPECT_LT(ratio, 2.9);
}

TEST(ForwardCv, Errors) {
    const auto ds = gaussianData(9, 6);
    const CompiledModel model(gaussianLinearKnownVariance(), ds);
    const auto chain = runChain(model, 1);
    CvOptions opt;
    EXPECT_PBF_ERROR(forwardCvLogDensity(model, 6, chain, opt, Rng(1)), IndexOutOfRange);
    opt.heldOut = 1;
    EXPECT_PBF_ERROR(forwardCvLogDensity(model, 0, chain, opt, Rng(1)), IndexOutOfRange);
    // every evaluation overflows the Poisson rate
    Eigen::MatrixXd y(3, 1);
    y << 1, 2, 3;
    const auto counts = buildDataset(Eigen::MatrixXd::Ones(3, 1), y);
    ModelSpec pois;
    pois.family = Family::Poisson;
    pois.link = Link::Log;
    const CompiledModel pm(pois, counts);
    const auto est = forwardFromDraws(pm, 0, 0, {{800.0, 0.0}, {900.0, 1.0}});
    EXPECT_EQ(est.logDensity, -std::numeric_limits<double>::infinity());
    EXPECT_PBF_ERROR(detail::requireFinite(est, 0), ZeroDensityFold);
    // a chain whose draws all give vanishing fold weights, without fallback
    PosteriorChain bad;
    bad.draws = DrawMatrix::Constant(50, 2, 0.0);
    bad.draws.col(0).setConstant(800.0);
    CvOptions noFallback;
    noFallback.allowFallback = false;
    noFallback.plan = {10, 1};
    EXPECT_PBF_ERROR(forwardCvLogDensity(pm, 0, bad, noFallback, Rng(2)), DegenerateWeights);
}

TEST(ForwardCv, FallbackChainOnDegenerateWeights) {
    const auto ds = gaussianData(10, 10);
    const CompiledModel model(gaussianLinearKnownVariance(), ds);
    const auto chain = runChain(model, 2);
    CvOptions opt;
    opt.minEss = 1e9;  // force every fold onto its own chain
    opt.plan = {500, 10};
    opt.fallback.totalIterations = 12000;
    opt.fallback.burnIn = 2000;
    const auto rep = crossValidate(model, chain, CvMode::Forward, opt);
    EXPECT_EQ(rep.fallbackFolds, ds.n());
    for (std::size_t i = 0; i < ds.n(); ++i) EXPECT_NEAR(rep.perFoldLogDensity[i], looOracle(ds, i, 1.0), 0.1);
}

TEST(InverseCv, PointMassPriorEqualsForward) {
    const auto ds = gaussianData(11, 10, 3);
    const CompiledModel model(gaussianLinearKnownVariance(), ds);
    const auto chain = runChain(model, 12);
    InversePriorSpec known;
    known.kind = PriorKind::KnownCovariate;
    const InversePrior prior(model, {known});
    CvOptions opt;
    opt.plan = {300, 20};
    for (std::size_t i = 0; i < ds.n(); ++i) {
        Rng rng(13 + i);
        const auto draws = foldDraws(model, i, chain, opt, rng);
        const auto fwd = forwardFromDraws(model, i, 0, draws, 20);
        Rng xs(99);
        const auto inv = inverseFromDraws(model, prior, i, 0, draws, 20, xs);
        EXPECT_NEAR(inv.logDensity, fwd.logDensity, 1e-12);
    }
}

TEST(InverseCv, WideUniformPriorMatchesQuadrature) {
    const auto ds = gaussianData(14, 8, 4);
    const CompiledModel model(gaussianLinearKnownVariance(), ds);
    InversePriorSpec wide;
    wide.kind = PriorKind::GaussianIdentity;
    wide.c1 = 40.0;
    wide.c2 = 400.0;
    const InversePrior prior(model, {wide});
    const std::vector<double> theta{0.3, 1.7};
    const std::size_t i = 2, k = 0;
    const auto iv = prior.interval(theta, i, 0);
    ASSERT_TRUE(iv);
    const double y = ds.y(i, k);
    // (1/(b-a)) * integral of N(y; alpha + beta x, 1) dx over [a, b]
    const double quad = ex([&](double x) { return std::exp(-0.5 * std::pow(y - 0.3 - 1.7 * x, 2)) / std::sqrt(2 * std::numbers::pi); },
                           CovariateSpace{iv->a, iv->b, 200001});
    Rng rng(15);
    const auto est = inverseFromDraws(model, prior, i, k, {theta}, 400000, rng);
    EXPECT_NEAR(std::exp(est.logDensity), quad, 4 * quad * std::sqrt(1.0 / 400000 * (iv->width() * 1.7 / std::sqrt(2 * std::numbers::pi) / 2)));
    // wide-support limit: density times width approaches 1/|beta|
    EXPECT_NEAR(quad * iv->width(), 1.0 / 1.7, 0.02);
}

TEST(InverseCv, PoissonBruteForceSixTerms) {
    Eigen::MatrixXd x(4, 1), y(4, 3);
    x << -0.5, 0.0, 0.4, 0.9;
    y << 1, 2, 0, 2, 1, 3, 2, 4, 3, 5, 4, 6;
    const auto ds = buildDataset(x, y);
    ModelSpec pois;
    pois.family = Family::Poisson;
    pois.link = Link::Log;
    const CompiledModel model(pois, ds);
    const InversePrior prior = InversePrior::defaults(model);
    const std::vector<std::vector<double>> draws{{0.1, 1.0}, {0.4, 0.6}, {-0.2, 1.5}};
    const std::size_t i = 1, k = 0;
    Rng a(16), b(16);
    const auto est = inverseFromDraws(model, prior, i, k, draws, 2, a);
    const double ybar = ds.rowMean(i), s = std::sqrt(ds.rowVariance(i));
    double sum = 0.0;
    for (const auto& th : draws) {
        const double lo = (std::log(ybar - s / std::sqrt(3.0)) - th[0]) / th[1];
        const double hi = (std::log(ybar + 100 * s / std::sqrt(3.0)) - th[0]) / th[1];
        for (int r = 0; r < 2; ++r) {
            const double xt = lo + (hi - lo) * b.uniform();
            const double lam = std::exp(th[0] + th[1] * xt);
            sum += std::exp(ds.y(i, k) * std::log(lam) - lam - std::lgamma(ds.y(i, k) + 1));
        }
    }
    EXPECT_NEAR(est.logDensity, std::log(sum / 6.0), 1e-12);
}

TEST(InverseCv, EmptySupportSkipsAndIncompatibility) {
    Eigen::MatrixXd x(3, 1), y(3, 2);
    x << 0, 1, 2;
    y << 1, 3, 2, 4, 5, 7;
    const auto ds = buildDataset(x, y);
    ModelSpec pois;
    pois.family = Family::Poisson;
    pois.link = Link::Log;
    const CompiledModel model(pois, ds);
    const InversePrior prior = InversePrior::defaults(model);
    Rng rng(1);
    // zero slope gives empty support for that draw only
    const auto est = inverseFromDraws(model, prior, 0, 0, {{0.0, 1.0}, {0.0, 1.0}, {0.0, 0.0}}, 5, rng);
    EXPECT_EQ(est.skipped, 5u);
    EXPECT_EQ(est.evaluations, 10u);
    EXPECT_PBF_ERROR(inverseFromDraws(model, prior, 0, 0, {{0.0, 1.0}, {0.0, 0.0}, {0.0, 0.0}}, 5, rng), PriorIncompatible);
    std::vector<double> xrow = ds.covariateRow(0);
    EXPECT_FALSE(prior.sample(std::vector<double>{0.0, 0.0}, 0, rng, xrow));
    PosteriorChain c;
    EXPECT_PBF_ERROR(crossValidate(model, c, CvMode::Inverse, CvOptions{}), PriorIncompatible);
}

TEST(Pbf, Examples) {
    const auto a = makeCvReport({-1, -2}, {0, 0}, CvMode::Forward, 0, "a");
    const auto b = makeCvReport({-2, -2}, {0, 0}, CvMode::Forward, 0, "b");
    EXPECT_EQ(pbf::pbf(a, a).logPbf, 0.0);
    const auto r = pbf::pbf(a, b);
    EXPECT_EQ(r.logPbf, 1.0);
    EXPECT_EQ(r.normalized, 0.5);
    EXPECT_EQ(r.perFoldLogRatio, (std::vector<double>{1.0, 0.0}));
}

TEST(Pbf, FoldCountMismatch) {
    const auto a = makeCvReport({-1, -2}, {0, 0}, CvMode::Forward, 0);
    const auto b = makeCvReport({-2, -2, -3}, {0, 0, 0}, CvMode::Forward, 0);
    EXPECT_PBF_ERROR(pbf::pbf(a, b), FoldCountMismatch);
    const auto c = makeCvReport({-1, -2}, {0, 0}, CvMode::Forward, 1);
    EXPECT_PBF_ERROR(pbf::pbf(a, c), FoldCountMismatch);
}

TEST(Pbf, PropertyAntisymmetryAndAccumulation) {
    Rng r(17);
    for (int c = 0; c < gen::kCases; ++c) {
        const auto n = gen::size(r, 1, 200);
        const auto a = fakeReport(r, n, "a"), b = fakeReport(r, n, "b"), d = fakeReport(r, n, "c");
        EXPECT_EQ(pbf::pbf(a, b).logPbf, -pbf::pbf(b, a).logPbf);
        EXPECT_NEAR(pbf::pbf(a, b).logPbf + pbf::pbf(b, d).logPbf, pbf::pbf(a, d).logPbf, 1e-12 * static_cast<double>(n));
        const auto ab = pbf::pbf(a, b);
        double s = 0;
        for (std::size_t i = 0; i < n; ++i) {
            EXPECT_EQ(ab.perFoldLogRatio[i], a.perFoldLogDensity[i] - b.perFoldLogDensity[i]);
            s += ab.perFoldLogRatio[i];
        }
        EXPECT_EQ(ab.logPbf, s);
    }
}
