#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pbf/experiments.hpp"
#include "pbf/kl_theory.hpp"
#include "pbf/report.hpp"
#include "pbf/serialization.hpp"

namespace pbf {

struct CliInvocation {
    std::string subcommand;
    std::string configPath;
    std::string outDir = "pbf_out";
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
    std::string format = "pretty";
    bool verbose = false;
    // kl-limit
    std::string pair = "linear:truth";
    std::string eta0 = "x^2";
    double sigma0sq = 1.0, lower = -1.0, upper = 1.0;
    double rho0 = 0.5, beta0 = 1.0, sigmaX2 = 1.0, sigmaZ2 = 1.0;
    bool inverse = false;
};

namespace detail {

inline void writeFile(const std::filesystem::path& p, const std::string& text) {
    std::ofstream os(p, std::ios::binary);
    if (!os) fail(ErrorCode::InvalidConfig, "cli", "cannot write '" + p.string() + "'");
    os << text;
}

inline std::filesystem::path prepareOut(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) fail(ErrorCode::InvalidConfig, "cli", "cannot create output directory '" + dir + "': " + ec.message());
    return dir;
}

/// Applies --seed and --threads overrides on top of the file config.
inline Json loadConfig(const CliInvocation& inv, std::optional<StudyKind> force) {
    Json j;
    if (inv.configPath.empty()) {
        if (!force) fail(ErrorCode::InvalidConfig, "cli", "--config is required for this subcommand");
        j["study"] = std::string(toString(*force));
    } else {
        if (!std::filesystem::exists(inv.configPath))
            fail(ErrorCode::InvalidConfig, "cli", "config file '" + inv.configPath + "' does not exist");
        j = readJsonFile(inv.configPath);
        if (force) j["study"] = std::string(toString(*force));
    }
    if (inv.seed) j["seeds"] = std::vector<std::uint64_t>{*inv.seed};
    if (inv.threads) j["threads"] = *inv.threads;
    else if (!j.contains("threads")) j["threads"] = 0;
    return j;
}

inline int runStudy(const CliInvocation& inv, std::optional<StudyKind> force, std::ostream& out) {
    const Json config = loadConfig(inv, force);
    const ExperimentConfig cfg = configFromJson(config);
    const OutputFormat fmt = parseFormat(inv.format);
    const auto dir = prepareOut(inv.outDir);
    writeFile(dir / "manifest.json", manifestJson(config, inv.subcommand, cfg.seeds, cfg.threads).dump(2) + "\n");
    if (isConvergence(cfg.kind)) {
        const ConvergenceReport rep = runConvergenceStudy(cfg);
        writeFile(dir / "report.json", toJson(rep).dump(2) + "\n");
        writeFile(dir / "gaps.csv", gapTableCsv(rep));
        writeFile(dir / "plot.csv", plotDataCsv(rep));
        out << renderConvergence(rep, fmt);
        if (fmt == OutputFormat::Json) out << rep.verdictText << "\n";
        return 0;
    }
    const TableReport rep = runTableStudy(cfg);
    writeFile(dir / "report.json", toJson(rep).dump(2) + "\n");
    writeFile(dir / "table.csv", renderTable(rep, OutputFormat::Csv));
    writeFile(dir / "scores.csv", tableSeedsCsv(rep));
    out << renderTable(rep, fmt);
    return 0;
}

inline int klLimitCommand(const CliInvocation& inv, std::ostream& out) {
    const ModelPair pair = parseModelPair(inv.pair);
    TheoryInputs in;
    in.sigma0sq = inv.sigma0sq;
    in.space = CovariateSpace{inv.lower, inv.upper, 2001};
    in.inverse = inv.inverse;
    if (detail::isAr1(pair.a) || detail::isAr1(pair.b)) {
        in.ar1 = Ar1TheoryInputs{inv.rho0, inv.beta0, inv.sigma0sq, inv.sigmaX2, inv.sigmaZ2};
    } else {
        const Expression e = Expression::parse(inv.eta0);
        in.eta0 = [e](double x) { return e(x); };
    }
    const KlLimit lim = klLimit(pair, in);
    const double hTilde = lim.hA - lim.hB;
    const OutputFormat fmt = parseFormat(inv.format);
    if (fmt == OutputFormat::Json) {
        Json j;
        j["pair"] = inv.pair;
        j["mode"] = inv.inverse ? "inverse" : "forward";
        j["h_a"] = lim.hA;
        j["h_b"] = lim.hB;
        j["theta_a"] = lim.thetaA;
        j["theta_b"] = lim.thetaB;
        j["h_tilde"] = hTilde;
        j["log_pbf_limit"] = lim.limit;
        out << j.dump(2) << "\n";
    } else if (fmt == OutputFormat::Csv) {
        out << "pair,mode,h_a,h_b,h_tilde,log_pbf_limit\n"
            << inv.pair << ',' << (inv.inverse ? "inverse" : "forward") << ',' << formatExact(lim.hA) << ',' << formatExact(lim.hB) << ','
            << formatExact(hTilde) << ',' << formatExact(lim.limit) << '\n';
    } else {
        auto vec = [](const std::vector<double>& v) {
            std::string s = "(";
            for (std::size_t k = 0; k < v.size(); ++k) s += (k ? ", " : "") + formatExact(v[k]);
            return s + ")";
        };
        out << "pair: " << inv.pair << (inv.inverse ? " (inverse)" : " (forward)") << "\n";
        if (!lim.thetaA.empty()) out << "theta~ " << toString(pair.a) << ": " << vec(lim.thetaA) << "\n";
        if (!lim.thetaB.empty()) out << "theta~ " << toString(pair.b) << ": " << vec(lim.thetaB) << "\n";
        out << "h_tilde: " << formatExact(hTilde) << "\n";
        out << "log_pbf_limit: " << formatExact(lim.limit) << "\n";
    }
    return 0;
}

/// Draws from the covariate prior of one row at a fixed theta.
/// Config keys: model, dataset (CSV path, relative to the config file), theta,
/// row, draws, seed, inverse_prior {c1, c2, clamp}.
inline int samplePriorCommand(const CliInvocation& inv, std::ostream& out) {
    if (inv.configPath.empty()) fail(ErrorCode::InvalidConfig, "cli", "--config is required for sample-prior");
    const Json j = readJsonFile(inv.configPath);
    try {
        const ModelSpec spec = modelSpecFromJson(j.at("model"));
        std::filesystem::path dsPath = j.at("dataset").get<std::string>();
        if (dsPath.is_relative()) dsPath = std::filesystem::path(inv.configPath).parent_path() / dsPath;
        std::ifstream dsIn(dsPath);
        if (!dsIn) fail(ErrorCode::InvalidConfig, "cli", "cannot open dataset '" + dsPath.string() + "'");
        const ReplicatedDataset ds = readDatasetCsv(dsIn);
        const CompiledModel model(spec, ds);
        const ThetaVector theta = thetaFromJson(j.at("theta"));
        std::vector<double> t;
        for (const auto& slot : model.slots()) t.push_back(theta.at(slot));
        const std::size_t row = j.value("row", std::size_t{0});
        if (row >= ds.n()) fail(ErrorCode::IndexOutOfRange, "cli", "row outside the dataset");
        const std::size_t draws = j.value("draws", std::size_t{1000});
        double c1 = 1.0, c2 = 100.0;
        ClampPolicy clamp = ClampPolicy::Error;
        if (j.contains("inverse_prior")) {
            const Json& p = j.at("inverse_prior");
            c1 = p.value("c1", c1);
            c2 = p.value("c2", c2);
            clamp = p.value("clamp", std::string("error")) == "epsilon" ? ClampPolicy::ClampToEpsilon : ClampPolicy::Error;
        }
        const InversePrior prior = InversePrior::defaults(model, c1, c2, clamp);
        Rng rng = Rng(inv.seed.value_or(j.value("seed", std::uint64_t{1}))).substream("sample-prior");
        std::vector<double> xrow = ds.covariateRow(row);
        const std::size_t q = prior.specs().size();
        for (std::size_t k = 0; k < q; ++k) out << ds.names()[prior.covariateColumn(k)] << (k + 1 < q ? "," : "\n");
        for (std::size_t d = 0; d < draws; ++d) {
            if (!prior.sample(t, row, rng, xrow)) fail(ErrorCode::EmptyPriorSupport, "inverse-priors", "prior support is empty at this theta");
            for (std::size_t k = 0; k < q; ++k) out << formatExact(xrow[prior.covariateColumn(k)]) << (k + 1 < q ? "," : "\n");
        }
        return 0;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::InvalidConfig, "cli", std::string("sample-prior config: ") + e.what());
    }
}

inline int validateConfigCommand(const CliInvocation& inv, std::ostream& out) {
    const Json config = loadConfig(inv, std::nullopt);
    const ExperimentConfig cfg = configFromJson(config);
    out << "ok: " << toString(cfg.kind) << " config is valid (hash " << configHash(config) << ")\n";
    return 0;
}

}  // namespace detail

/// Entry point. Exit codes: 0 success, 1 validation error, 2 estimator or
/// runtime error.
inline int parseAndDispatch(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CliInvocation inv;
    CLI::App app{"Pseudo-Bayes factor studies for forward and inverse regression"};
    app.require_subcommand(1, 1);
    app.set_version_flag("--version", std::string(kVersion));

    const auto common = [&](CLI::App* sc, bool needsConfig) {
        auto* c = sc->add_option("--config", inv.configPath, "JSON config file");
        if (needsConfig) c->required();
        sc->add_option("--out", inv.outDir, "output directory");
        sc->add_option("--seed", inv.seed, "override the seed list with one seed");
        sc->add_option("--threads", inv.threads, "worker threads (0 = all cores)");
        sc->add_option("--format", inv.format, "csv|json|pretty")->check(CLI::IsMember({"csv", "json", "pretty"}));
        sc->add_flag("-v,--verbose", inv.verbose, "log progress");
    };
    auto* run = app.add_subcommand("run", "run the study described by a config");
    common(run, true);
    auto* t1 = app.add_subcommand("table1", "Table 1 study (single covariate, six models)");
    common(t1, false);
    auto* t2 = app.add_subcommand("table2", "Table 2 study (two covariates, eighteen models)");
    common(t2, false);
    auto* conv = app.add_subcommand("converge", "PBF convergence study against the KL limit");
    common(conv, true);
    auto* kl = app.add_subcommand("kl-limit", "predicted limit of (1/n) log PBF for a model pair");
    kl->add_option("--pair", inv.pair, "a:b with a, b in truth|linear|quadratic|ar1_x|ar1_z");
    kl->add_option("--eta0", inv.eta0, "true regression function of x");
    kl->add_option("--sigma0-sq", inv.sigma0sq, "true noise variance");
    kl->add_option("--lower", inv.lower, "covariate space lower end");
    kl->add_option("--upper", inv.upper, "covariate space upper end");
    kl->add_option("--rho0", inv.rho0, "AR(1) truth coefficient");
    kl->add_option("--beta0", inv.beta0, "AR(1) truth slope");
    kl->add_option("--sigma-x-sq", inv.sigmaX2, "limit of mean x^2");
    kl->add_option("--sigma-z-sq", inv.sigmaZ2, "limit of mean z^2");
    kl->add_flag("--inverse", inv.inverse, "inverse-setup limit");
    kl->add_option("--format", inv.format, "csv|json|pretty")->check(CLI::IsMember({"csv", "json", "pretty"}));
    auto* sp = app.add_subcommand("sample-prior", "draw held-out covariates from the inverse prior");
    common(sp, true);
    auto* vc = app.add_subcommand("validate-config", "check a config without running it");
    common(vc, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        app.exit(e, out, err);
        return 0;
    } catch (const CLI::CallForVersion& e) {
        app.exit(e, out, err);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: cli: " << e.what() << "\n";
        return 1;
    }
    try {
        if (run->parsed()) {
            inv.subcommand = "run";
            return detail::runStudy(inv, std::nullopt, out);
        }
        if (t1->parsed()) {
            inv.subcommand = "table1";
            return detail::runStudy(inv, StudyKind::Table1, out);
        }
        if (t2->parsed()) {
            inv.subcommand = "table2";
            return detail::runStudy(inv, StudyKind::Table2, out);
        }
        if (conv->parsed()) {
            inv.subcommand = "converge";
            const Json j = readJsonFile(inv.configPath);
            if (!j.contains("study") || !isConvergence(parseStudyKind(j.at("study").get<std::string>())))
                fail(ErrorCode::InvalidConfig, "cli", "converge needs a convergence_* study config");
            return detail::runStudy(inv, std::nullopt, out);
        }
        if (kl->parsed()) return detail::klLimitCommand(inv, out);
        if (sp->parsed()) return detail::samplePriorCommand(inv, out);
        if (vc->parsed()) return detail::validateConfigCommand(inv, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return isValidationError(e.code()) ? 1 : 2;
    } catch (const std::exception& e) {
        err << "error: runtime: " << e.what() << "\n";
        return 2;
    }
    return 1;
}

}  // namespace pbf
