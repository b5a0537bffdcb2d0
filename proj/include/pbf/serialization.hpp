#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pbf/crossval.hpp"
#include "pbf/data_model.hpp"
#include "pbf/error.hpp"

namespace pbf {

using Json = nlohmann::ordered_json;

/// Shortest text that parses back to the same double.
inline std::string formatExact(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline double parseDouble(std::string_view s, std::string_view where) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        fail(ErrorCode::ParseError, "data-model", "cannot parse number '" + std::string(s) + "' in " + std::string(where));
    return v;
}

namespace detail {
inline std::vector<std::string_view> splitCsv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto comma = line.find(',', start);
        out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}
}  // namespace detail

// ---- dataset CSV: covariate columns by name, then y_1..y_m

inline void writeDatasetCsv(std::ostream& os, const ReplicatedDataset& ds) {
    for (std::size_t c = 0; c < ds.p(); ++c) os << ds.names()[c] << ',';
    for (std::size_t j = 0; j < ds.m(); ++j) os << "y_" << (j + 1) << (j + 1 < ds.m() ? "," : "\n");
    for (std::size_t i = 0; i < ds.n(); ++i) {
        for (std::size_t c = 0; c < ds.p(); ++c) os << formatExact(ds.x(i, c)) << ',';
        for (std::size_t j = 0; j < ds.m(); ++j) os << formatExact(ds.y(i, j)) << (j + 1 < ds.m() ? "," : "\n");
    }
}

/// Reads the format above; columns whose header starts with "y_" are
/// responses, everything before them is a covariate.
inline ReplicatedDataset readDatasetCsv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) fail(ErrorCode::ParseError, "data-model", "empty dataset file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = detail::splitCsv(line);
    std::size_t p = 0;
    while (p < header.size() && header[p].substr(0, 2) != "y_") ++p;
    const std::size_t m = header.size() - p;
    std::vector<std::string> names(header.begin(), header.begin() + static_cast<std::ptrdiff_t>(p));
    std::vector<std::vector<double>> rows;
    std::size_t lineNo = 1;
    while (std::getline(is, line)) {
        ++lineNo;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = detail::splitCsv(line);
        if (cells.size() != header.size())
            fail(ErrorCode::DimensionMismatch, "data-model", "line " + std::to_string(lineNo) + " has the wrong number of columns");
        std::vector<double> row;
        for (auto c : cells) row.push_back(parseDouble(c, "line " + std::to_string(lineNo)));
        rows.push_back(std::move(row));
    }
    Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(p));
    Eigen::MatrixXd Y(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(m));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t c = 0; c < p; ++c) X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
        for (std::size_t j = 0; j < m; ++j) Y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][p + j];
    }
    return buildDataset(std::move(X), std::move(Y), std::move(names));
}

inline std::string datasetToCsv(const ReplicatedDataset& ds) {
    std::ostringstream os;
    writeDatasetCsv(os, ds);
    return os.str();
}
inline ReplicatedDataset datasetFromCsv(const std::string& text) {
    std::istringstream is(text);
    return readDatasetCsv(is);
}

// ---- enum text

template <class E, std::size_t N>
E parseEnum(std::string_view s, const std::array<E, N>& all, std::string_view what) {
    for (E e : all)
        if (toString(e) == s) return e;
    fail(ErrorCode::ParseError, "data-model", "unknown " + std::string(what) + " '" + std::string(s) + "'");
}

inline Family parseFamily(std::string_view s) {
    return parseEnum(s, std::array{Family::Poisson, Family::Geometric, Family::GaussianNoise}, "family");
}
inline Link parseLink(std::string_view s) {
    return parseEnum(s, std::array{Link::Log, Link::Logit, Link::Probit, Link::Identity}, "link");
}
inline Regression parseRegression(std::string_view s) {
    return parseEnum(s,
                     std::array{Regression::Linear, Regression::Quadratic, Regression::GP, Regression::AR1,
                                Regression::FixedFunction},
                     "regression");
}
inline CvMode parseCvMode(std::string_view s) { return parseEnum(s, std::array{CvMode::Forward, CvMode::Inverse}, "mode"); }

// ---- JSON

inline Json toJson(const ThetaVector& t) {
    Json j = Json::object();
    for (std::size_t k = 0; k < t.size(); ++k) j[t.layout()[k]] = t.values()[k];
    return j;
}

inline ThetaVector thetaFromJson(const Json& j) {
    if (!j.is_object()) fail(ErrorCode::ParseError, "data-model", "theta must be a JSON object");
    std::vector<std::string> layout;
    std::vector<double> values;
    for (const auto& [k, v] : j.items()) {
        if (!v.is_number()) fail(ErrorCode::ParseError, "data-model", "theta slot '" + k + "' is not a number");
        layout.push_back(k);
        values.push_back(v.get<double>());
    }
    return ThetaVector(std::move(layout), std::move(values));
}

inline Json toJson(const ModelSpec& s) {
    Json j;
    j["family"] = std::string(toString(s.family));
    j["link"] = std::string(toString(s.link));
    j["regression"] = std::string(toString(s.regression));
    j["covariates"] = s.covariateSubset;
    if (!s.truthFunction.empty()) j["truth"] = s.truthFunction.text();
    if (!s.fixedParams.empty()) j["fixed"] = toJson(s.fixedParams);
    if (!s.bounds.empty()) {
        Json b = Json::object();
        for (const auto& [k, v] : s.bounds) b[k] = {v.first, v.second};
        j["bounds"] = b;
    }
    j["role"] = s.role == Role::Truth ? "truth" : "candidate";
    if (!s.label.empty()) j["label"] = s.label;
    return j;
}

inline ModelSpec modelSpecFromJson(const Json& j) {
    if (!j.is_object()) fail(ErrorCode::ParseError, "data-model", "model spec must be a JSON object");
    try {
        ModelSpec s;
        s.family = parseFamily(j.at("family").get<std::string>());
        s.link = parseLink(j.at("link").get<std::string>());
        s.regression = parseRegression(j.at("regression").get<std::string>());
        if (j.contains("covariates")) s.covariateSubset = j.at("covariates").get<std::vector<std::size_t>>();
        if (j.contains("truth")) s.truthFunction = Expression::parse(j.at("truth").get<std::string>());
        if (j.contains("fixed")) s.fixedParams = thetaFromJson(j.at("fixed"));
        if (j.contains("bounds"))
            for (const auto& [k, v] : j.at("bounds").items()) s.bounds[k] = {v.at(0).get<double>(), v.at(1).get<double>()};
        if (j.contains("role")) {
            const auto r = j.at("role").get<std::string>();
            if (r != "truth" && r != "candidate") fail(ErrorCode::ParseError, "data-model", "role must be truth or candidate");
            s.role = r == "truth" ? Role::Truth : Role::Candidate;
        }
        if (j.contains("label")) s.label = j.at("label").get<std::string>();
        validateModel(s);
        return s;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ParseError, "data-model", std::string("model spec: ") + e.what());
    }
}

inline Json toJson(const CvReport& r) {
    Json j;
    j["model"] = r.model;
    j["mode"] = std::string(toString(r.mode));
    j["held_out_replicate"] = r.heldOutReplicate;
    j["mean_log_density"] = r.meanLogDensity;
    j["per_fold_log_density"] = r.perFoldLogDensity;
    j["mc_std_err"] = r.mcStdErr;
    j["fallback_folds"] = r.fallbackFolds;
    j["clamped_intervals"] = r.clampedIntervals;
    j["skipped_evaluations"] = r.skippedEvaluations;
    return j;
}

inline CvReport cvReportFromJson(const Json& j) {
    try {
        CvReport r = makeCvReport(j.at("per_fold_log_density").get<std::vector<double>>(), j.at("mc_std_err").get<std::vector<double>>(),
                                  parseCvMode(j.at("mode").get<std::string>()), j.at("held_out_replicate").get<std::size_t>(),
                                  j.value("model", std::string{}));
        r.fallbackFolds = j.value("fallback_folds", std::size_t{0});
        r.clampedIntervals = j.value("clamped_intervals", std::size_t{0});
        r.skippedEvaluations = j.value("skipped_evaluations", std::size_t{0});
        return r;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ParseError, "data-model", std::string("cv report: ") + e.what());
    }
}

inline Json toJson(const PbfReport& r) {
    Json j;
    j["model_a"] = r.modelA;
    j["model_b"] = r.modelB;
    j["mode"] = std::string(toString(r.mode));
    j["log_pbf"] = r.logPbf;
    j["normalized"] = r.normalized;
    j["per_fold_log_ratio"] = r.perFoldLogRatio;
    return j;
}

inline Json readJsonFile(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::InvalidConfig, "cli", "cannot open '" + path + "'");
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ParseError, "cli", "'" + path + "': " + e.what());
    }
}

}  // namespace pbf
