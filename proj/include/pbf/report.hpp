#pragma once

#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "pbf/experiments.hpp"
#include "pbf/serialization.hpp"

namespace pbf {

inline constexpr std::string_view kVersion = "1.0.0";

enum class OutputFormat { Csv, Json, Pretty };

inline OutputFormat parseFormat(std::string_view s) {
    if (s == "csv") return OutputFormat::Csv;
    if (s == "json") return OutputFormat::Json;
    if (s == "pretty") return OutputFormat::Pretty;
    fail(ErrorCode::InvalidConfig, "cli", "format must be csv, json or pretty");
}

inline std::string familyLabel(Family f) {
    switch (f) {
        case Family::Poisson: return "Poisson";
        case Family::Geometric: return "Geometric";
        case Family::GaussianNoise: return "Gaussian";
    }
    return "?";
}

inline std::string regressionLabel(Regression r) {
    switch (r) {
        case Regression::Linear: return "linear";
        case Regression::Quadratic: return "quadratic";
        case Regression::GP: return "Gaussian process";
        case Regression::AR1: return "AR(1)";
        case Regression::FixedFunction: return "fixed";
    }
    return "?";
}

/// Quotes a CSV cell that holds a comma or quote, such as the "(x,z)" label.
inline std::string csvCell(const std::string& s) {
    if (s.find_first_of(",\"") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
}

inline std::string fixed3(double v) {
    if (!std::isfinite(v)) return "NA";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

// ---- tables

inline Json toJson(const TableReport& rep) {
    Json j;
    j["study"] = std::string(toString(rep.kind));
    j["n"] = rep.n;
    j["m"] = rep.m;
    Json rows = Json::array();
    for (std::size_t r = 0; r < rep.rows.size(); ++r) {
        Json row;
        if (!rep.rows[r].covariates.empty()) row["covariates"] = rep.rows[r].covariates;
        row["model"] = toJson(rep.rows[r].spec);
        if (r < rep.summary.size()) {
            const auto& s = rep.summary[r];
            row["mean_forward"] = s.meanForward;
            row["mean_inverse"] = std::isfinite(s.meanInverse) ? Json(s.meanInverse) : Json(nullptr);
            row["forward_win_rate"] = s.forwardWinRate;
            row["inverse_win_rate"] = s.inverseWinRate;
            row["inverse_feasible_seeds"] = s.inverseFeasibleSeeds;
        }
        rows.push_back(row);
    }
    j["rows"] = rows;
    Json seeds = Json::array();
    for (const auto& s : rep.seeds) {
        Json e;
        e["seed"] = s.seed;
        e["truth"] = toJson(s.truth);
        e["forward"] = s.forward;
        Json inv = Json::array();
        for (double v : s.inverse) inv.push_back(std::isfinite(v) ? Json(v) : Json(nullptr));
        e["inverse"] = inv;
        e["inverse_note"] = s.inverseNote;
        e["fallback_folds"] = s.fallbackFolds;
        seeds.push_back(e);
    }
    j["seeds"] = seeds;
    return j;
}

/// Table with columns (Covariates,) Model, Link, Regression form, Forward, Inverse. Scores are seed means.
inline std::string renderTable(const TableReport& rep, OutputFormat fmt = OutputFormat::Csv) {
    if (fmt == OutputFormat::Json) return toJson(rep).dump(2) + "\n";
    const bool cov = rep.kind == StudyKind::Table2;
    std::vector<std::vector<std::string>> cells;
    std::vector<std::string> header;
    if (cov) header.push_back("Covariates");
    for (const char* h : {"Model", "Link", "Regression form", "Forward", "Inverse"}) header.emplace_back(h);
    cells.push_back(header);
    for (std::size_t r = 0; r < rep.rows.size(); ++r) {
        const auto& spec = rep.rows[r].spec;
        std::vector<std::string> row;
        if (cov) row.push_back(rep.rows[r].covariates);
        row.push_back(familyLabel(spec.family));
        row.push_back(std::string(toString(spec.link)));
        row.push_back(regressionLabel(spec.regression));
        const bool have = r < rep.summary.size();
        row.push_back(have ? fixed3(rep.summary[r].meanForward) : "NA");
        row.push_back(have ? fixed3(rep.summary[r].meanInverse) : "NA");
        cells.push_back(row);
    }
    std::ostringstream os;
    if (fmt == OutputFormat::Csv) {
        for (const auto& row : cells)
            for (std::size_t c = 0; c < row.size(); ++c) os << csvCell(row[c]) << (c + 1 < row.size() ? "," : "\n");
        return os.str();
    }
    std::vector<std::size_t> width(header.size(), 0);
    for (const auto& row : cells)
        for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
    for (std::size_t k = 0; k < cells.size(); ++k) {
        for (std::size_t c = 0; c < cells[k].size(); ++c) {
            os << cells[k][c] << std::string(width[c] - cells[k][c].size(), ' ');
            os << (c + 1 < cells[k].size() ? " | " : "\n");
        }
        if (k == 0) {
            for (std::size_t c = 0; c < width.size(); ++c) os << std::string(width[c], '-') << (c + 1 < width.size() ? "-+-" : "\n");
        }
    }
    return os.str();
}

/// Per-seed, per-row scores in long form.
inline std::string tableSeedsCsv(const TableReport& rep) {
    std::ostringstream os;
    os << "seed,row,covariates,model,link,regression,forward,inverse,note\n";
    for (const auto& s : rep.seeds)
        for (std::size_t r = 0; r < rep.rows.size(); ++r) {
            const auto& spec = rep.rows[r].spec;
            os << s.seed << ',' << r << ',' << csvCell(rep.rows[r].covariates) << ',' << familyLabel(spec.family) << ',' << toString(spec.link)
               << ',' << regressionLabel(spec.regression) << ',' << formatExact(s.forward[r]) << ','
               << (std::isfinite(s.inverse[r]) ? formatExact(s.inverse[r]) : "NA") << ',' << s.inverseNote[r] << '\n';
        }
    return os.str();
}

// ---- convergence

inline Json toJson(const ConvergenceReport& rep) {
    Json j;
    j["pair"] = rep.pair;
    j["mode"] = std::string(toString(rep.mode));
    j["estimator"] = std::string(toString(rep.estimator));
    j["limit"] = rep.limit;
    j["h_a"] = rep.hA;
    j["h_b"] = rep.hB;
    j["theta_a"] = rep.thetaA;
    j["theta_b"] = rep.thetaB;
    j["tolerance"] = rep.tolerance;
    Json pts = Json::array();
    for (const auto& p : rep.points)
        pts.push_back({{"n", p.n}, {"seed", p.seed}, {"log_pbf", p.logPbf}, {"normalized", p.normalized}, {"gap", p.gap}, {"preflight", p.preflight}});
    j["points"] = pts;
    Json sm = Json::array();
    for (const auto& s : rep.summary)
        sm.push_back({{"n", s.n}, {"mean_normalized", s.meanNormalized}, {"median_gap", s.medianGap}, {"fraction_within", s.fractionWithinTolerance}});
    j["summary"] = sm;
    j["fraction_seeds_shrinking"] = rep.fractionSeedsShrinking;
    j["median_monotone"] = rep.medianMonotone;
    j["verdict"] = rep.verdict;
    j["verdict_text"] = rep.verdictText;
    return j;
}

inline std::string gapTableCsv(const ConvergenceReport& rep) {
    std::ostringstream os;
    os << "n,seed,log_pbf,normalized,limit,gap\n";
    for (const auto& p : rep.points)
        os << p.n << ',' << p.seed << ',' << formatExact(p.logPbf) << ',' << formatExact(p.normalized) << ',' << formatExact(rep.limit)
           << ',' << formatExact(p.gap) << '\n';
    return os.str();
}

/// Plot series: x = n, y = normalized log PBF (seed mean), reference = limit.
inline std::string plotDataCsv(const ConvergenceReport& rep) {
    std::ostringstream os;
    os << "n,mean_normalized_log_pbf,median_gap,reference_limit\n";
    for (const auto& s : rep.summary)
        os << s.n << ',' << formatExact(s.meanNormalized) << ',' << formatExact(s.medianGap) << ',' << formatExact(rep.limit) << '\n';
    return os.str();
}

inline std::string renderConvergence(const ConvergenceReport& rep, OutputFormat fmt) {
    if (fmt == OutputFormat::Json) return toJson(rep).dump(2) + "\n";
    if (fmt == OutputFormat::Csv) return plotDataCsv(rep) + rep.verdictText + "\n";
    std::ostringstream os;
    os << "pair " << rep.pair << " (" << toString(rep.mode) << ", " << toString(rep.estimator) << ")\n";
    os << "limit of (1/n) log PBF: " << formatExact(rep.limit) << "\n";
    os << "n        mean (1/n)logPBF   median gap\n";
    for (const auto& s : rep.summary) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "%-8zu %-18.6f %.6f\n", s.n, s.meanNormalized, s.medianGap);
        os << buf;
    }
    os << rep.verdictText << "\n";
    return os.str();
}

// ---- config

namespace detail {
inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}
}  // namespace detail

inline std::string configHash(const Json& config) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(detail::fnv1a64(config.dump())));
    return buf;
}

inline StudyKind parseStudyKind(std::string_view s) {
    for (auto k : {StudyKind::ConvergenceLinear, StudyKind::ConvergenceQuadratic, StudyKind::ConvergenceAr1, StudyKind::Table1,
                   StudyKind::Table2, StudyKind::Custom})
        if (toString(k) == s) return k;
    fail(ErrorCode::InvalidConfig, "experiments", "unknown study '" + std::string(s) + "'");
}

/// Defaults that depend on the study kind.
inline ExperimentConfig defaultConfig(StudyKind kind) {
    ExperimentConfig c;
    c.kind = kind;
    if (isConvergence(kind)) {
        c.m = 1;
        c.schedule = {100, 500, 2000, 5000};
        c.seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
        if (kind == StudyKind::ConvergenceQuadratic) {
            c.pair = "quadratic:truth";
            c.truth.eta0 = "x^3";
        }
        if (kind == StudyKind::ConvergenceAr1) c.pair = "ar1_x:ar1_z";
    } else {
        c.n = 10;
        c.m = 10;
        c.seeds.clear();
        for (std::uint64_t s = 1; s <= 20; ++s) c.seeds.push_back(s);
    }
    return c;
}

/// Reads the documented config schema. Unknown keys are rejected so typos
/// surface as validation errors.
inline ExperimentConfig configFromJson(const Json& j) {
    if (!j.is_object()) fail(ErrorCode::InvalidConfig, "experiments", "config must be a JSON object");
    static const std::vector<std::string> known{"study", "n", "schedule", "m", "seeds", "truth", "models", "pair", "mode", "estimator",
                                                "gap_tolerance", "sampler", "resample", "inverse_prior", "held_out_replicate",
                                                "min_ess", "threads", "run_inverse", "description"};
    for (const auto& [k, v] : j.items())
        if (std::find(known.begin(), known.end(), k) == known.end())
            fail(ErrorCode::InvalidConfig, "experiments", "unknown config key '" + k + "'");
    try {
        ExperimentConfig c = defaultConfig(parseStudyKind(j.at("study").get<std::string>()));
        if (j.contains("n")) c.n = j.at("n").get<std::size_t>();
        if (j.contains("schedule")) c.schedule = j.at("schedule").get<std::vector<std::size_t>>();
        if (j.contains("m")) c.m = j.at("m").get<std::size_t>();
        if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        if (j.contains("truth")) {
            const Json& t = j.at("truth");
            auto opt = [&](const char* key, std::optional<double>& dst) {
                if (t.contains(key)) dst = t.at(key).get<double>();
            };
            opt("alpha0", c.truth.alpha0);
            opt("beta0", c.truth.beta0);
            opt("gamma0", c.truth.gamma0);
            c.truth.eta0 = t.value("eta0", c.truth.eta0);
            c.truth.sigma0sq = t.value("sigma0_sq", c.truth.sigma0sq);
            if (t.contains("covariate_range")) {
                c.truth.lower = t.at("covariate_range").at(0).get<double>();
                c.truth.upper = t.at("covariate_range").at(1).get<double>();
            }
            c.truth.rho0 = t.value("rho0", c.truth.rho0);
            c.truth.ar1Beta0 = t.value("ar1_beta0", c.truth.ar1Beta0);
            c.truth.sigmaX2 = t.value("sigma_x_sq", c.truth.sigmaX2);
            c.truth.sigmaZ2 = t.value("sigma_z_sq", c.truth.sigmaZ2);
            if (t.contains("family")) c.truth.family = parseFamily(t.at("family").get<std::string>());
            if (t.contains("link")) c.truth.link = parseLink(t.at("link").get<std::string>());
            c.truth.covariates = t.value("covariates", c.truth.covariates);
        }
        if (j.contains("models"))
            for (const auto& m : j.at("models")) c.models.push_back(modelSpecFromJson(m));
        c.pair = j.value("pair", c.pair);
        if (j.contains("mode")) c.mode = parseCvMode(j.at("mode").get<std::string>());
        if (j.contains("estimator")) {
            const auto e = j.at("estimator").get<std::string>();
            if (e == "auto") c.estimator = Estimator::Auto;
            else if (e == "exact") c.estimator = Estimator::Exact;
            else if (e == "monte_carlo") c.estimator = Estimator::MonteCarlo;
            else fail(ErrorCode::InvalidConfig, "experiments", "estimator must be auto, exact or monte_carlo");
        }
        c.gapTolerance = j.value("gap_tolerance", c.gapTolerance);
        if (j.contains("sampler")) {
            const Json& s = j.at("sampler");
            c.sampler.totalIterations = s.value("iterations", c.sampler.totalIterations);
            c.sampler.burnIn = s.value("burn_in", c.sampler.burnIn);
            c.sampler.scale = s.value("scale", c.sampler.scale);
            c.sampler.adaptDuringBurnin = s.value("adapt", c.sampler.adaptDuringBurnin);
        }
        if (j.contains("resample")) {
            const Json& s = j.at("resample");
            c.resample.subsampleSize = s.value("subsample", c.resample.subsampleSize);
            c.resample.reusePerDraw = s.value("reuse", c.resample.reusePerDraw);
        }
        if (j.contains("inverse_prior")) {
            const Json& s = j.at("inverse_prior");
            c.c1 = s.value("c1", c.c1);
            c.c2 = s.value("c2", c.c2);
            const auto clamp = s.value("clamp", std::string("epsilon"));
            if (clamp != "epsilon" && clamp != "error")
                fail(ErrorCode::InvalidConfig, "experiments", "inverse_prior.clamp must be epsilon or error");
            c.clamp = clamp == "epsilon" ? ClampPolicy::ClampToEpsilon : ClampPolicy::Error;
        }
        c.heldOut = j.value("held_out_replicate", c.heldOut);
        c.minEss = j.value("min_ess", c.minEss);
        c.threads = j.value("threads", c.threads);
        c.runInverse = j.value("run_inverse", c.runInverse);
        c.validate();
        return c;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::InvalidConfig, "experiments", std::string("config: ") + e.what());
    }
}

inline Json manifestJson(const Json& config, const std::string& command, const std::vector<std::uint64_t>& seeds, std::size_t threads) {
    Json j;
    j["tool"] = "pbf";
    j["version"] = std::string(kVersion);
    j["command"] = command;
    j["config_hash"] = configHash(config);
    j["config"] = config;
    j["seeds"] = seeds;
    j["threads"] = threads;
    Json mods = Json::object();
    for (const char* m : {"data-model", "likelihoods", "samplers", "crossval", "inverse-priors", "kl-theory", "experiments", "cli"})
        mods[m] = std::string(kVersion);
    j["modules"] = mods;
    return j;
}

}  // namespace pbf
