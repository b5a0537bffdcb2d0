#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "pbf/error.hpp"
#include "pbf/expression.hpp"

namespace pbf {

// ---------------------------------------------------------------------------
// ReplicatedDataset
// ---------------------------------------------------------------------------

/// Covariates (n x p) with m replicated responses per covariate row. With
/// m = 1 this is the ordinary single-response regression dataset. Rows and
/// replicates are indexed from 0.
class ReplicatedDataset {
public:
    ReplicatedDataset() = default;

    std::size_t n() const noexcept { return static_cast<std::size_t>(covariates_.rows()); }
    std::size_t m() const noexcept { return static_cast<std::size_t>(responses_.cols()); }
    std::size_t p() const noexcept { return static_cast<std::size_t>(covariates_.cols()); }

    const Eigen::MatrixXd& covariates() const noexcept { return covariates_; }
    const Eigen::MatrixXd& responses() const noexcept { return responses_; }
    const std::vector<std::string>& names() const noexcept { return names_; }

    double x(std::size_t row, std::size_t col = 0) const { return covariates_(row, col); }
    double y(std::size_t row, std::size_t rep) const { return responses_(row, rep); }

    std::vector<double> covariateRow(std::size_t row) const {
        std::vector<double> out(p());
        for (std::size_t c = 0; c < p(); ++c) out[c] = covariates_(row, c);
        return out;
    }

    /// Mean of row i over its m replicates.
    double rowMean(std::size_t row) const {
        checkRow(row);
        return responses_.row(row).mean();
    }

    /// Sample variance of row i with divisor m - 1.
    double rowVariance(std::size_t row) const {
        checkRow(row);
        if (m() < 2) fail(ErrorCode::ReplicateCountTooSmall, "data-model", "sample variance needs m >= 2");
        const double mean = rowMean(row);
        double ss = 0.0;
        for (std::size_t j = 0; j < m(); ++j) {
            const double d = responses_(row, j) - mean;
            ss += d * d;
        }
        return ss / static_cast<double>(m() - 1);
    }

    bool rowsDistinct(std::span<const std::size_t> columns) const {
        std::vector<std::vector<double>> rows;
        rows.reserve(n());
        for (std::size_t i = 0; i < n(); ++i) {
            std::vector<double> r;
            for (std::size_t c : columns) r.push_back(covariates_(i, c));
            rows.push_back(std::move(r));
        }
        std::sort(rows.begin(), rows.end());
        return std::adjacent_find(rows.begin(), rows.end()) == rows.end();
    }

    friend ReplicatedDataset buildDataset(Eigen::MatrixXd covariates, Eigen::MatrixXd responses,
                                          std::vector<std::string> names);

    friend bool operator==(const ReplicatedDataset& a, const ReplicatedDataset& b) {
        return a.names_ == b.names_ && a.covariates_.rows() == b.covariates_.rows() &&
               a.covariates_.cols() == b.covariates_.cols() && a.responses_.cols() == b.responses_.cols() &&
               a.covariates_ == b.covariates_ && a.responses_ == b.responses_;
    }

private:
    void checkRow(std::size_t row) const {
        if (row >= n())
            fail(ErrorCode::IndexOutOfRange, "data-model",
                 "row " + std::to_string(row) + " outside [0, " + std::to_string(n()) + ")");
    }

    Eigen::MatrixXd covariates_;
    Eigen::MatrixXd responses_;
    std::vector<std::string> names_;
};

inline ReplicatedDataset buildDataset(Eigen::MatrixXd covariates, Eigen::MatrixXd responses,
                                      std::vector<std::string> names = {}) {
    if (covariates.rows() != responses.rows())
        fail(ErrorCode::DimensionMismatch, "data-model",
             "covariates have " + std::to_string(covariates.rows()) + " rows, responses " +
                 std::to_string(responses.rows()));
    if (covariates.rows() < 2) fail(ErrorCode::DimensionMismatch, "data-model", "need n >= 2 rows");
    if (covariates.cols() < 1) fail(ErrorCode::DimensionMismatch, "data-model", "need p >= 1 covariate");
    if (responses.cols() < 1) fail(ErrorCode::DimensionMismatch, "data-model", "need m >= 1 replicate");
    if (!covariates.allFinite() || !responses.allFinite())
        fail(ErrorCode::NonFiniteInput, "data-model", "dataset contains non-finite entries");
    if (names.empty()) {
        static const char* defaults[] = {"x", "z"};
        for (Eigen::Index c = 0; c < covariates.cols(); ++c)
            names.push_back(c < 2 ? defaults[c] : "x" + std::to_string(c));
    }
    if (names.size() != static_cast<std::size_t>(covariates.cols()))
        fail(ErrorCode::DimensionMismatch, "data-model", "covariate name count does not match p");
    ReplicatedDataset ds;
    ds.covariates_ = std::move(covariates);
    ds.responses_ = std::move(responses);
    ds.names_ = std::move(names);
    return ds;
}

struct RowSummary {
    double mean = 0.0;
    double sd = 0.0;
};

/// Sample mean and standard deviation (divisor m - 1) of row i.
inline RowSummary rowSummary(const ReplicatedDataset& ds, std::size_t i) {
    if (i >= ds.n())
        fail(ErrorCode::IndexOutOfRange, "data-model",
             "row " + std::to_string(i) + " outside [0, " + std::to_string(ds.n()) + ")");
    return {ds.rowMean(i), std::sqrt(ds.rowVariance(i))};
}

// ---------------------------------------------------------------------------
// ThetaVector
// ---------------------------------------------------------------------------

/// Flat parameter vector with named slots. Slot names in use: alpha, beta,
/// gamma (second covariate slope), beta1, beta2, rho, omega (log variance),
/// omega_noise, eta_<k> (GP latent value at design row k).
class ThetaVector {
public:
    ThetaVector() = default;
    ThetaVector(std::vector<std::string> layout, std::vector<double> values)
        : layout_(std::move(layout)), values_(std::move(values)) {
        if (layout_.size() != values_.size())
            fail(ErrorCode::DimensionMismatch, "data-model", "theta layout and value lengths differ");
    }

    static ThetaVector of(std::initializer_list<std::pair<std::string, double>> slots) {
        ThetaVector t;
        for (const auto& [k, v] : slots) {
            t.layout_.push_back(k);
            t.values_.push_back(v);
        }
        return t;
    }

    std::size_t size() const noexcept { return values_.size(); }
    bool empty() const noexcept { return values_.empty(); }
    const std::vector<std::string>& layout() const noexcept { return layout_; }
    const std::vector<double>& values() const noexcept { return values_; }
    std::span<const double> span() const noexcept { return values_; }

    std::optional<std::size_t> indexOf(std::string_view slot) const noexcept {
        for (std::size_t k = 0; k < layout_.size(); ++k)
            if (layout_[k] == slot) return k;
        return std::nullopt;
    }
    bool has(std::string_view slot) const noexcept { return indexOf(slot).has_value(); }

    double at(std::string_view slot) const {
        if (auto k = indexOf(slot)) return values_[*k];
        fail(ErrorCode::UnknownSlot, "data-model", "theta has no slot '" + std::string(slot) + "'");
    }

    void set(std::string_view slot, double value) {
        if (auto k = indexOf(slot)) {
            values_[*k] = value;
            return;
        }
        layout_.emplace_back(slot);
        values_.push_back(value);
    }

    /// sigma^2 = exp(omega).
    double variance(std::string_view slot = "omega") const { return std::exp(at(slot)); }

    friend bool operator==(const ThetaVector&, const ThetaVector&) = default;

private:
    std::vector<std::string> layout_;
    std::vector<double> values_;
};

// ---------------------------------------------------------------------------
// ModelSpec
// ---------------------------------------------------------------------------

enum class Family { Poisson, Geometric, GaussianNoise };
enum class Link { Log, Logit, Probit, Identity };
enum class Regression { Linear, Quadratic, GP, AR1, FixedFunction };
enum class Role { Candidate, Truth };

constexpr std::string_view toString(Family f) {
    switch (f) {
        case Family::Poisson: return "poisson";
        case Family::Geometric: return "geometric";
        case Family::GaussianNoise: return "gaussian";
    }
    return "?";
}
constexpr std::string_view toString(Link l) {
    switch (l) {
        case Link::Log: return "log";
        case Link::Logit: return "logit";
        case Link::Probit: return "probit";
        case Link::Identity: return "identity";
    }
    return "?";
}
constexpr std::string_view toString(Regression r) {
    switch (r) {
        case Regression::Linear: return "linear";
        case Regression::Quadratic: return "quadratic";
        case Regression::GP: return "gp";
        case Regression::AR1: return "ar1";
        case Regression::FixedFunction: return "fixed";
    }
    return "?";
}

struct ModelSpec {
    Family family = Family::GaussianNoise;
    Link link = Link::Identity;
    Regression regression = Regression::Linear;
    std::vector<std::size_t> covariateSubset{0};
    /// Linear predictor of a parameter-free truth model (FixedFunction).
    Expression truthFunction;
    /// Slots held at known values; they are not part of the sampled theta.
    ThetaVector fixedParams;
    Role role = Role::Candidate;
    /// Optional uniform box prior per slot; unlisted slots get a flat prior.
    std::map<std::string, std::pair<double, double>> bounds;
    std::string label;
};

/// Name of the slope slot for the k-th covariate of a linear / GP predictor.
inline std::string slopeSlot(std::size_t k) {
    if (k == 0) return "beta";
    if (k == 1) return "gamma";
    return "slope_" + std::to_string(k);
}

inline std::string latentSlot(std::size_t row) { return "eta_" + std::to_string(row); }

inline void validateModel(const ModelSpec& spec) {
    const auto bad = [](const std::string& why) { fail(ErrorCode::InvalidModel, "data-model", why); };
    switch (spec.family) {
        case Family::Poisson:
            if (spec.link != Link::Log) bad("Poisson family requires the log link");
            break;
        case Family::Geometric:
            if (spec.link != Link::Logit && spec.link != Link::Probit) bad("geometric family requires logit or probit link");
            break;
        case Family::GaussianNoise:
            if (spec.link != Link::Identity) bad("Gaussian family requires the identity link");
            break;
    }
    if (spec.regression == Regression::FixedFunction && spec.truthFunction.empty())
        bad("fixed-function regression needs a truth function");
    if (spec.regression == Regression::AR1 && spec.family != Family::GaussianNoise)
        bad("AR(1) regression is defined for Gaussian noise only");
    if ((spec.regression == Regression::Quadratic || spec.regression == Regression::AR1) &&
        spec.covariateSubset.size() != 1)
        bad("quadratic and AR(1) regressions take exactly one covariate");
    if (spec.regression != Regression::FixedFunction && spec.covariateSubset.empty())
        bad("covariate subset is empty");
    for (const auto& [slot, range] : spec.bounds)
        if (!(range.first < range.second)) bad("bounds for '" + slot + "' are empty");
}

/// Every slot the model's predictor and noise use, before removing fixed ones.
inline std::vector<std::string> allSlots(const ModelSpec& spec, std::size_t nRows) {
    std::vector<std::string> slots;
    switch (spec.regression) {
        case Regression::Linear:
            slots.push_back("alpha");
            for (std::size_t k = 0; k < spec.covariateSubset.size(); ++k) slots.push_back(slopeSlot(k));
            break;
        case Regression::Quadratic:
            slots = {"alpha", "beta1", "beta2"};
            break;
        case Regression::GP:
            slots.push_back("alpha");
            for (std::size_t k = 0; k < spec.covariateSubset.size(); ++k) slots.push_back(slopeSlot(k));
            slots.push_back("omega");
            for (std::size_t r = 0; r < nRows; ++r) slots.push_back(latentSlot(r));
            break;
        case Regression::AR1:
            slots = {"rho", "beta"};
            break;
        case Regression::FixedFunction:
            break;
    }
    if (spec.family == Family::GaussianNoise)
        slots.push_back(spec.regression == Regression::GP ? "omega_noise" : "omega");
    return slots;
}

/// Slots sampled by MCMC: allSlots minus fixedParams.
inline std::vector<std::string> freeSlots(const ModelSpec& spec, std::size_t nRows) {
    std::vector<std::string> out;
    for (auto& s : allSlots(spec, nRows))
        if (!spec.fixedParams.has(s)) out.push_back(std::move(s));
    return out;
}

inline std::string describe(const ModelSpec& spec) {
    if (!spec.label.empty()) return spec.label;
    std::string s = std::string(toString(spec.family)) + "/" + std::string(toString(spec.link)) + "/" +
                    std::string(toString(spec.regression));
    return s;
}

// ---------------------------------------------------------------------------
// CvReport
// ---------------------------------------------------------------------------

enum class CvMode { Forward, Inverse };

constexpr std::string_view toString(CvMode m) { return m == CvMode::Forward ? "forward" : "inverse"; }

/// Per-fold log cross-validation densities of held-out replicate k.
struct CvReport {
    std::vector<double> perFoldLogDensity;
    double meanLogDensity = 0.0;
    std::vector<double> mcStdErr;
    CvMode mode = CvMode::Forward;
    std::size_t heldOutReplicate = 0;
    std::string model;
    // diagnostics
    std::size_t fallbackFolds = 0;
    std::size_t clampedIntervals = 0;
    std::size_t skippedEvaluations = 0;
};

inline CvReport makeCvReport(std::vector<double> perFold, std::vector<double> mcse, CvMode mode, std::size_t k,
                             std::string model = {}) {
    if (perFold.size() != mcse.size())
        fail(ErrorCode::DimensionMismatch, "data-model", "fold and standard-error vectors differ in length");
    if (perFold.empty()) fail(ErrorCode::DimensionMismatch, "data-model", "report without folds");
    for (std::size_t i = 0; i < perFold.size(); ++i)
        if (!std::isfinite(perFold[i]))
            fail(ErrorCode::ZeroDensityFold, "data-model", "fold " + std::to_string(i) + " has non-finite log density");
    CvReport r;
    double sum = 0.0;
    for (double v : perFold) sum += v;
    r.meanLogDensity = sum / static_cast<double>(perFold.size());
    r.perFoldLogDensity = std::move(perFold);
    r.mcStdErr = std::move(mcse);
    r.mode = mode;
    r.heldOutReplicate = k;
    r.model = std::move(model);
    return r;
}

// ---------------------------------------------------------------------------
// KlRateSpec
// ---------------------------------------------------------------------------

/// An evaluable KL-divergence rate, in nats per observation, with an optional
/// closed-form minimizer.
struct KlRateSpec {
    std::function<double(std::span<const double>)> evaluate;
    std::size_t domainDim = 0;
    std::string label;
    std::function<std::vector<double>()> minimizer;

    double operator()(std::span<const double> theta) const { return evaluate(theta); }
};

}  // namespace pbf
