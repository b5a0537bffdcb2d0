#include <gtest/gtest.h>

#include "generators.hpp"
#include "pbf/inverse_priors.hpp"

using namespace pbf;

namespace {

InversePriorSpec kindSpec(PriorKind k, double c1 = 1.0, double c2 = 100.0, ClampPolicy clamp = ClampPolicy::Error) {
    InversePriorSpec s;
    s.kind = k;
    s.c1 = c1;
    s.c2 = c2;
    s.clamp = clamp;
    return s;
}

const auto kUnit = ThetaVector::of({{"alpha", 0.0}, {"beta", 1.0}});

}  // namespace

TEST(PriorInterval, PoissonPointInterval) {
    const auto iv = priorInterval(kindSpec(PriorKind::PoissonLog), kUnit, std::exp(1.0), 0.0, 10);
    EXPECT_DOUBLE_EQ(iv.a, 1.0);
    EXPECT_DOUBLE_EQ(iv.b, 1.0);
}

TEST(PriorInterval, PoissonHandEvaluation) {
    const auto iv = priorInterval(kindSpec(PriorKind::PoissonLog), kUnit, 10.0, 2.0, 100);
    EXPECT_NEAR(iv.a, std::log(9.8), 1e-14);
    EXPECT_NEAR(iv.b, std::log(30.0), 1e-14);
    EXPECT_NEAR(iv.a, 2.2824, 5e-5);
    EXPECT_NEAR(iv.b, 3.4012, 5e-5);
}

TEST(PriorInterval, ProbitQuantiles) {
    // l = 1, u = 3 from ybar = 1.5, s = 0.5, m = 1 with c1 = 1, c2 = 3
    const auto iv = priorInterval(kindSpec(PriorKind::GeomProbit, 1.0, 3.0), kUnit, 1.5, 0.5, 1);
    EXPECT_NEAR(iv.a, -0.6744897501960817, 1e-12);
    EXPECT_NEAR(iv.b, 0.0, 1e-12);
}

TEST(PriorInterval, ProbitSurvivesATinyPositiveEdge) {
    // ybar - c1 s/sqrt(m) lands just above zero, where 1/(l+1) rounds to 1
    const auto spec = kindSpec(PriorKind::GeomProbit, 1.0 - 1e-15, 100.0);
    const auto band = meanBand(spec, 0.1, 0.1, 1);
    ASSERT_GT(band.lower, 0.0);
    ASSERT_EQ(1.0 / (band.lower + 1.0), 1.0);
    const auto iv = priorInterval(spec, kUnit, 0.1, 0.1, 1);
    EXPECT_TRUE(std::isfinite(iv.a));
    EXPECT_TRUE(std::isfinite(iv.b));
    EXPECT_GT(iv.b, 7.0);  // Phi^{-1}(1 - l) for l near 1e-17 is about 8.4
}

TEST(PriorInterval, LogitAndIdentityForms) {
    const auto th = ThetaVector::of({{"alpha", 0.4}, {"beta", -2.0}});
    const auto lg = priorInterval(kindSpec(PriorKind::GeomLogit), th, 3.0, 1.0, 25);
    // eta = -log(mean): band (2.8, 23) -> eta (-log 23, -log 2.8)
    const double e1 = (-std::log(2.8) - 0.4) / -2.0, e2 = (-std::log(23.0) - 0.4) / -2.0;
    EXPECT_NEAR(lg.a, std::min(e1, e2), 1e-14);
    EXPECT_NEAR(lg.b, std::max(e1, e2), 1e-14);
    const auto id = priorInterval(kindSpec(PriorKind::GaussianIdentity), th, -1.0, 2.0, 4);
    EXPECT_NEAR(id.a, (99.0 - 0.4) / -2.0, 1e-12);
    EXPECT_NEAR(id.b, (-2.0 - 0.4) / -2.0, 1e-12);
}

TEST(PriorInterval, Errors) {
    const auto flat = ThetaVector::of({{"alpha", 0.0}, {"beta", 0.0}});
    EXPECT_PBF_ERROR(priorInterval(kindSpec(PriorKind::PoissonLog), flat, 5.0, 1.0, 10), SlopeZero);
    EXPECT_PBF_ERROR(priorInterval(kindSpec(PriorKind::PoissonLog), kUnit, 0.2, 1.0, 4), NonPositiveBandEdge);
    EXPECT_PBF_ERROR(priorInterval(kindSpec(PriorKind::GeomProbit), kUnit, 0.2, 1.0, 4), NonPositiveBandEdge);
    EXPECT_PBF_ERROR(priorInterval(kindSpec(PriorKind::PoissonLog, 2.0, 1.0), kUnit, 5.0, 1.0, 4), InvalidConfig);
    EXPECT_PBF_ERROR(priorInterval(kindSpec(PriorKind::PoissonLog, -1.0, 1.0), kUnit, 5.0, 1.0, 4), InvalidConfig);
    EXPECT_PBF_ERROR(priorInterval(kindSpec(PriorKind::Quadratic), ThetaVector::of({{"alpha", 0}, {"beta1", 1}, {"beta2", 1}}), 1.0,
                                   1.0, 4),
                     DimensionMismatch);
}

TEST(PriorInterval, ClampToEpsilon) {
    const auto iv = priorInterval(kindSpec(PriorKind::PoissonLog, 1.0, 100.0, ClampPolicy::ClampToEpsilon), kUnit, 0.2, 1.0, 4);
    EXPECT_TRUE(iv.clamped);
    EXPECT_NEAR(iv.a, std::log(kClampEpsilon), 1e-12);
    EXPECT_NEAR(iv.b, std::log(50.2), 1e-12);
    const auto band = meanBand(kindSpec(PriorKind::GaussianIdentity), 0.2, 1.0, 4);
    EXPECT_FALSE(band.clamped);
}

TEST(PriorInterval, TwoCovariateUsesObservedOther) {
    const auto th = ThetaVector::of({{"alpha", 0.1}, {"beta", 0.5}, {"gamma", -0.8}});
    InversePriorSpec sx = kindSpec(PriorKind::TwoCovariate);
    sx.baseKind = PriorKind::PoissonLog;
    const double z = 1.3, x = -0.4;
    const auto ivx = priorInterval(sx, th, 4.0, 1.0, 16, z);
    EXPECT_NEAR(ivx.a, (std::log(3.75) - 0.1 + 0.8 * z) / 0.5, 1e-12);
    sx.which = CovariateRole::Z;
    const auto ivz = priorInterval(sx, th, 4.0, 1.0, 16, x);
    EXPECT_NEAR(ivz.b, (std::log(3.75) - 0.1 - 0.5 * x) / -0.8, 1e-12);
}

TEST(PriorInterval, QuadraticAndAr1Offsets) {
    const auto tq = ThetaVector::of({{"alpha", 0.2}, {"beta1", 2.0}, {"beta2", -1.0}});
    const auto iq = priorInterval(kindSpec(PriorKind::Quadratic, 1, 1), tq, 1.0, 2.0, 4, 0.5);
    EXPECT_NEAR(iq.a, (0.0 - 0.2 + 0.25) / 2.0, 1e-14);
    EXPECT_NEAR(iq.b, (2.0 - 0.2 + 0.25) / 2.0, 1e-14);
    const auto ta = ThetaVector::of({{"rho", 0.5}, {"beta", 1.0}});
    const auto ia = priorInterval(kindSpec(PriorKind::AR1, 1, 1), ta, 1.0, 2.0, 4, 0.6);
    EXPECT_NEAR(ia.a, 0.0 - 0.3, 1e-14);
    EXPECT_NEAR(ia.b, 2.0 - 0.3, 1e-14);
}

TEST(PriorInterval, PropertyCanonicalOrder) {
    Rng r(31);
    const std::array kinds{PriorKind::PoissonLog, PriorKind::GeomLogit, PriorKind::GeomProbit, PriorKind::GaussianIdentity};
    for (int c = 0; c < 1000; ++c) {
        const auto k = kinds[static_cast<std::size_t>(c) % 4];
        double beta = r.uniform(-3, 3);
        if (beta == 0.0) beta = 1.0;
        const auto th = ThetaVector::of({{"alpha", r.uniform(-3, 3)}, {"beta", beta}});
        const double c1 = r.uniform(0, 2), c2 = c1 + r.uniform(0, 100);
        const double ybar = r.uniform(0.5, 20), s = r.uniform(0, 5);
        const auto iv = priorInterval(kindSpec(k, c1, c2, ClampPolicy::ClampToEpsilon), th, ybar, s, gen::size(r, 2, 500));
        EXPECT_LE(iv.a, iv.b);
    }
}

TEST(PriorInterval, LinearBandWidthLawIsExact) {
    Rng r(32);
    for (int c = 0; c < gen::kCases; ++c) {
        const double c1 = r.uniform(0, 2), c2 = c1 + r.uniform(0, 50), s = r.uniform(0.1, 4), beta = r.uniform(0.2, 3);
        const std::size_t m = gen::size(r, 2, 2000);
        const auto th = ThetaVector::of({{"alpha", r.uniform(-1, 1)}, {"beta", -beta}});
        const auto iv = priorInterval(kindSpec(PriorKind::GaussianIdentity, c1, c2), th, r.uniform(-5, 5), s, m);
        EXPECT_NEAR(iv.width(), (c1 + c2) * s / std::sqrt(double(m)) / beta, 1e-12 * (1 + iv.width()));
    }
}

TEST(PriorInterval, SmoothLinkWidthHalvesWhenMQuadruples) {
    const auto th = ThetaVector::of({{"alpha", 0.5}, {"beta", 1.0}});
    const double eta = 1.0;
    for (auto k : {PriorKind::PoissonLog, PriorKind::GeomLogit, PriorKind::GeomProbit}) {
        const double mean = k == PriorKind::PoissonLog ? std::exp(eta) : std::exp(-eta);
        const double sd = k == PriorKind::PoissonLog ? std::sqrt(mean) : std::sqrt(mean * (1 + mean));
        for (std::size_t m : {100, 400, 1600}) {
            const auto sp = kindSpec(k, 1.0, 1.0);
            const double ratio = priorInterval(sp, th, mean, sd, m).width() / priorInterval(sp, th, mean, sd, 4 * m).width();
            EXPECT_NEAR(ratio, 2.0, 0.1) << int(k) << " m=" << m;
        }
    }
}

TEST(SamplePrior, Examples) {
    Rng r(33);
    const RowSummary point{std::exp(1.0), 0.0};
    EXPECT_EQ(samplePrior(kindSpec(PriorKind::PoissonLog), kUnit, point, 10, r), 1.0);
    // interval (0, 1): identity band [0, 1] with alpha = 0, beta = 1
    const RowSummary unitBand{0.5, 0.5};
    const auto sp = kindSpec(PriorKind::GaussianIdentity, 1.0, 1.0);
    const auto iv = priorInterval(sp, kUnit, unitBand.mean, unitBand.sd, 1);
    ASSERT_DOUBLE_EQ(iv.a, 0.0);
    ASSERT_DOUBLE_EQ(iv.b, 1.0);
    const int n = 100000;
    double s = 0;
    for (int k = 0; k < n; ++k) s += samplePrior(sp, kUnit, unitBand, 1, r);
    EXPECT_NEAR(s / n, 0.5, 3 / std::sqrt(12.0 * n));
    Rng a(7), b(7);
    for (int k = 0; k < 20; ++k) EXPECT_EQ(samplePrior(sp, kUnit, unitBand, 1, a), samplePrior(sp, kUnit, unitBand, 1, b));
}

TEST(LimitPoint, Examples) {
    const auto th = ThetaVector::of({{"alpha", 0.3}, {"beta", 1.5}});
    const double xi = 0.7;
    EXPECT_NEAR(limitPoint(kindSpec(PriorKind::GaussianIdentity), th, 0.3 + 1.5 * xi), xi, 1e-15);
    EXPECT_NEAR(limitPoint(kindSpec(PriorKind::PoissonLog), th, std::exp(0.3 + 1.5 * xi)), xi, 1e-15);
    const auto tq = ThetaVector::of({{"alpha", 1.0 / 3}, {"beta", 0.8}});
    EXPECT_NEAR(limitPoint(kindSpec(PriorKind::GaussianIdentity), tq, 0.25), (0.25 - 1.0 / 3) / 0.8, 1e-15);
    const auto quad = ThetaVector::of({{"alpha", 1.0 / 3}, {"beta1", 0.8}, {"beta2", 0.0}});
    EXPECT_NEAR(limitPoint(kindSpec(PriorKind::Quadratic), quad, 0.25, 0.5), (0.25 - 1.0 / 3) / 0.8, 1e-15);
    EXPECT_PBF_ERROR(limitPoint(kindSpec(PriorKind::GaussianIdentity), ThetaVector::of({{"alpha", 1.0 / 3}, {"beta", 0.0}}), 0.25),
                     SlopeZero);
}

TEST(LimitPoint, PriorConcentratesAtLargeM) {
    Rng r(34);
    const std::size_t m = 10000;
    const auto th = ThetaVector::of({{"alpha", 0.5}, {"beta", 1.0}});
    const double xi = 0.4;
    for (auto k : {PriorKind::PoissonLog, PriorKind::GeomLogit}) {
        const double eta = 0.5 + xi;
        std::vector<double> ys(m);
        for (auto& y : ys) {
            if (k == PriorKind::PoissonLog) {
                y = static_cast<double>(r.poisson(std::exp(eta)));
            } else {
                const double p = 1.0 / (1.0 + std::exp(-eta));
                y = std::floor(std::log(r.uniformOpen()) / std::log1p(-p));
            }
        }
        double mean = 0, ss = 0;
        for (double y : ys) mean += y / m;
        for (double y : ys) ss += (y - mean) * (y - mean);
        const RowSummary rs{mean, std::sqrt(ss / (m - 1))};
        const auto sp = kindSpec(k);
        const auto iv = priorInterval(sp, th, rs.mean, rs.sd, m);
        const double truthMean = k == PriorKind::PoissonLog ? std::exp(eta) : std::exp(-eta);
        const double xStar = limitPoint(sp, th, truthMean);
        EXPECT_NEAR(xStar, xi, 1e-12);
        double s = 0;
        for (int d = 0; d < 10000; ++d) s += samplePrior(sp, th, rs, m, r);
        EXPECT_LT(std::fabs(s / 10000 - xStar), iv.width());
    }
}

TEST(InversePrior, ModelBoundPriorsAndIncompatibility) {
    Eigen::MatrixXd x(3, 2), y(3, 2);
    x << 0, 1, 1, 0, 2, 2;
    y << 1, 3, 2, 4, 5, 7;
    const auto ds = buildDataset(x, y);
    ModelSpec pois;
    pois.family = Family::Poisson;
    pois.link = Link::Log;
    const CompiledModel single(pois, ds);
    EXPECT_PBF_ERROR(InversePrior(single, {kindSpec(PriorKind::GeomLogit)}), PriorIncompatible);
    EXPECT_PBF_ERROR(InversePrior(single, {kindSpec(PriorKind::Quadratic)}), PriorIncompatible);
    EXPECT_PBF_ERROR(InversePrior(single, {}), PriorIncompatible);
    pois.covariateSubset = {0, 1};
    const CompiledModel two(pois, ds);
    const auto prior = InversePrior::defaults(two);
    ASSERT_EQ(prior.specs().size(), 2u);
    EXPECT_EQ(prior.specs()[1].which, CovariateRole::Z);
    const std::vector<double> th{0.1, 0.5, -0.8};
    const auto ivz = prior.interval(th, 1, 1);
    ASSERT_TRUE(ivz);
    const double m = std::sqrt(2.0), ybar = 3.0, s = std::sqrt(2.0);
    EXPECT_NEAR(ivz->b, (std::log(ybar - s / m) - 0.1 - 0.5 * ds.x(1, 0)) / -0.8, 1e-12);
    // m = 1 data cannot carry a band
    const auto ds1 = buildDataset(x, y.leftCols(1));
    pois.covariateSubset = {0};
    const CompiledModel m1(pois, ds1);
    EXPECT_PBF_ERROR(InversePrior::defaults(m1), ReplicateCountTooSmall);
}

TEST(InversePrior, Ar1BandScale) {
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(2, 1), y(2, 2);
    y << 1, 3, 2, 6;
    const auto ds = buildDataset(x, y);
    // t = 1: deviations (-2, 2) - rho (-1, 1)
    EXPECT_NEAR(ar1BandScale(ds, 1, 0.5), 1.5, 1e-15);
    EXPECT_NEAR(ar1BandScale(ds, 0, 0.5), 1.0, 1e-15);
    EXPECT_PBF_ERROR(ar1BandScale(ds, 2, 0.5), IndexOutOfRange);
}
