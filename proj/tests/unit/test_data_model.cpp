#include <gtest/gtest.h>

#include "generators.hpp"
#include "pbf/crossval.hpp"
#include "pbf/serialization.hpp"

using namespace pbf;

namespace {

ReplicatedDataset oneRow(std::vector<double> ys) {
    Eigen::MatrixXd x(2, 1);
    x << 0.0, 1.0;
    Eigen::MatrixXd y(2, static_cast<Eigen::Index>(ys.size()));
    for (std::size_t j = 0; j < ys.size(); ++j) y(0, j) = y(1, j) = ys[j];
    return buildDataset(x, y);
}

}  // namespace

TEST(BuildDataset, TenByTenCounts) {
    Rng r(3);
    Eigen::MatrixXd x(10, 1), y(10, 10);
    for (Eigen::Index i = 0; i < 10; ++i) x(i) = r.uniform(-1, 1);
    for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = static_cast<double>(r.poisson(2.0));
    const auto ds = buildDataset(x, y);
    EXPECT_EQ(ds.n(), 10u);
    EXPECT_EQ(ds.m(), 10u);
    EXPECT_EQ(ds.p(), 1u);
}

TEST(BuildDataset, ConstantRowHasZeroVariance) {
    const auto ds = oneRow({4, 4, 4, 4});
    EXPECT_EQ(ds.rowVariance(0), 0.0);
}

TEST(BuildDataset, HandMoments) {
    const auto ds = oneRow({3, 5, 7});
    EXPECT_DOUBLE_EQ(ds.rowMean(0), 5.0);
    EXPECT_DOUBLE_EQ(ds.rowVariance(0), 4.0);
}

TEST(BuildDataset, Errors) {
    EXPECT_PBF_ERROR(buildDataset(Eigen::MatrixXd::Zero(3, 1), Eigen::MatrixXd::Zero(4, 2)), DimensionMismatch);
    Eigen::MatrixXd y = Eigen::MatrixXd::Zero(3, 2);
    y(1, 1) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_PBF_ERROR(buildDataset(Eigen::MatrixXd::Zero(3, 1), y), NonFiniteInput);
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(3, 1);
    x(0) = std::numeric_limits<double>::infinity();
    EXPECT_PBF_ERROR(buildDataset(x, Eigen::MatrixXd::Zero(3, 2)), NonFiniteInput);
    const auto single = buildDataset(Eigen::MatrixXd::Zero(3, 1), Eigen::MatrixXd::Zero(3, 1));
    EXPECT_PBF_ERROR(single.rowVariance(0), ReplicateCountTooSmall);
    EXPECT_PBF_ERROR(rowSummary(single, 0), ReplicateCountTooSmall);
}

TEST(RowSummary, Examples) {
    auto s = rowSummary(oneRow({0, 0, 0, 0}), 0);
    EXPECT_EQ(s.mean, 0.0);
    EXPECT_EQ(s.sd, 0.0);
    s = rowSummary(oneRow({3, 5, 7}), 0);
    EXPECT_DOUBLE_EQ(s.mean, 5.0);
    EXPECT_DOUBLE_EQ(s.sd, 2.0);
    s = rowSummary(oneRow(std::vector<double>(10, 10.0)), 0);
    EXPECT_EQ(s.mean, 10.0);
    EXPECT_EQ(s.sd, 0.0);
}

TEST(RowSummary, IndexOutOfRange) {
    const auto ds = oneRow({1, 2});
    EXPECT_PBF_ERROR(rowSummary(ds, 2), IndexOutOfRange);
}

TEST(RowSummary, PropertyMatchesTwoPassBruteForce) {
    Rng r(11);
    for (int c = 0; c < gen::kCases; ++c) {
        const std::size_t n = gen::size(r, 2, 5), m = gen::size(r, 2, 30);
        Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, 1), y(n, m);
        const double scale = std::pow(10.0, r.uniform(-3, 6)), shift = r.uniform(-1e3, 1e3);
        for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = shift + scale * r.normal();
        const auto ds = buildDataset(x, y);
        for (std::size_t i = 0; i < n; ++i) {
            long double sum = 0;
            for (std::size_t j = 0; j < m; ++j) sum += y(i, j);
            const long double mean = sum / m;
            long double ss = 0;
            for (std::size_t j = 0; j < m; ++j) ss += (y(i, j) - mean) * (y(i, j) - mean);
            const double sd = static_cast<double>(std::sqrt(ss / (m - 1)));
            const auto got = rowSummary(ds, i);
            EXPECT_NEAR(got.mean, static_cast<double>(mean), 1e-12 * std::max(1.0, std::fabs(static_cast<double>(mean))));
            EXPECT_NEAR(got.sd, sd, 1e-12 * std::max(sd, scale * 1e-3)) << "case " << c;
        }
    }
}

TEST(Serialization, PropertyCsvRoundTripIsBitExact) {
    Rng r(5);
    for (int c = 0; c < gen::kCases; ++c) {
        const auto ds = gen::dataset(r);
        const auto back = datasetFromCsv(datasetToCsv(ds));
        ASSERT_TRUE(back == ds) << "case " << c;
        for (Eigen::Index i = 0; i < ds.responses().size(); ++i)
            ASSERT_EQ(std::signbit(back.responses()(i)), std::signbit(ds.responses()(i)));
    }
}

TEST(Serialization, CsvErrors) {
    EXPECT_PBF_ERROR(datasetFromCsv(""), ParseError);
    EXPECT_PBF_ERROR(datasetFromCsv("x,y_1\n1,abc\n2,3\n"), ParseError);
    EXPECT_PBF_ERROR(datasetFromCsv("x,y_1\n1,2,3\n2,3\n"), DimensionMismatch);
    EXPECT_PBF_ERROR(datasetFromCsv("x,y_1\n1,nan\n2,3\n"), NonFiniteInput);
}

TEST(Serialization, ThetaAndModelJsonRoundTrip) {
    const auto t = ThetaVector::of({{"alpha", 0.1}, {"beta", -2.5e-17}, {"omega", 3.0}});
    EXPECT_EQ(thetaFromJson(Json::parse(toJson(t).dump())), t);
    ModelSpec s;
    s.family = Family::Geometric;
    s.link = Link::Probit;
    s.regression = Regression::GP;
    s.covariateSubset = {0, 1};
    s.bounds["omega"] = {-3.0, 2.0};
    s.label = "geo-gp";
    const auto back = modelSpecFromJson(Json::parse(toJson(s).dump()));
    EXPECT_EQ(back.family, s.family);
    EXPECT_EQ(back.link, s.link);
    EXPECT_EQ(back.regression, s.regression);
    EXPECT_EQ(back.covariateSubset, s.covariateSubset);
    EXPECT_EQ(back.bounds, s.bounds);
    EXPECT_EQ(back.label, s.label);
    EXPECT_PBF_ERROR(modelSpecFromJson(Json::parse(R"({"family":"poisson"})")), ParseError);
    EXPECT_PBF_ERROR(modelSpecFromJson(Json::parse(R"({"family":"bernoulli","link":"log","regression":"linear"})")),
                     ParseError);
}

TEST(Serialization, CvReportRoundTrip) {
    const auto rep = makeCvReport({-1.25, -0.5, -3.0}, {0.01, 0.02, 0.0}, CvMode::Inverse, 2, "m");
    const auto back = cvReportFromJson(Json::parse(toJson(rep).dump()));
    EXPECT_EQ(back.perFoldLogDensity, rep.perFoldLogDensity);
    EXPECT_EQ(back.meanLogDensity, rep.meanLogDensity);
    EXPECT_EQ(back.mode, CvMode::Inverse);
    EXPECT_EQ(back.heldOutReplicate, 2u);
}

TEST(ThetaVector, SlotsAndErrors) {
    auto t = ThetaVector::of({{"alpha", 1.0}, {"omega", std::log(4.0)}});
    EXPECT_DOUBLE_EQ(t.variance(), 4.0);
    t.set("beta", 2.0);
    EXPECT_EQ(t.size(), 3u);
    EXPECT_PBF_ERROR(t.at("gamma"), UnknownSlot);
    EXPECT_PBF_ERROR(ThetaVector({"a", "b"}, {1.0}), DimensionMismatch);
}

TEST(ModelSpec, Compatibility) {
    ModelSpec s;
    s.family = Family::Poisson;
    s.link = Link::Logit;
    EXPECT_PBF_ERROR(validateModel(s), InvalidModel);
    s.family = Family::Geometric;
    s.link = Link::Log;
    EXPECT_PBF_ERROR(validateModel(s), InvalidModel);
    s.family = Family::GaussianNoise;
    s.link = Link::Identity;
    s.regression = Regression::FixedFunction;
    EXPECT_PBF_ERROR(validateModel(s), InvalidModel);
    s.truthFunction = Expression::parse("x^2");
    EXPECT_NO_THROW(validateModel(s));
    for (auto [f, l] : {std::pair{Family::Poisson, Link::Log}, {Family::Geometric, Link::Logit},
                        {Family::Geometric, Link::Probit}, {Family::GaussianNoise, Link::Identity}}) {
        ModelSpec ok;
        ok.family = f;
        ok.link = l;
        EXPECT_NO_THROW(validateModel(ok));
    }
}

TEST(CvReport, MeanIsExactArithmeticMeanAndFinite) {
    Rng r(2);
    for (int c = 0; c < gen::kCases; ++c) {
        const auto n = gen::size(r, 1, 40);
        auto v = gen::vec(r, n, -50, 5);
        const auto rep = makeCvReport(v, std::vector<double>(n, 0.0), CvMode::Forward, 0);
        double s = 0;
        for (double e : v) s += e;
        EXPECT_EQ(rep.meanLogDensity, s / static_cast<double>(n));
    }
    EXPECT_PBF_ERROR(makeCvReport({-1.0, -std::numeric_limits<double>::infinity()}, {0, 0}, CvMode::Forward, 0),
                     ZeroDensityFold);
    EXPECT_PBF_ERROR(makeCvReport({-1.0}, {0, 0}, CvMode::Forward, 0), DimensionMismatch);
}

TEST(Expression, ParsesTruthFunctions) {
    EXPECT_DOUBLE_EQ(Expression::parse("x^2")(3.0), 9.0);
    EXPECT_DOUBLE_EQ(Expression::parse("1 + 2*x - x^3")(2.0), -3.0);
    EXPECT_NEAR(Expression::parse("exp(-x) * sin(x)")(0.5), std::exp(-0.5) * std::sin(0.5), 1e-15);
    std::vector<double> xz{2.0, 3.0};
    EXPECT_DOUBLE_EQ(Expression::parse("x*z + z")(xz), 9.0);
    EXPECT_PBF_ERROR(Expression::parse("x +"), ParseError);
    EXPECT_PBF_ERROR(Expression::parse("foo(x)"), ParseError);
}
