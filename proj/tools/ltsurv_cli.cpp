// Command-line front end: estimation, uniform bands, and simulation suites
// with deterministic file-based outputs.
#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ltsurv/data_model.hpp"
#include "ltsurv/estimators.hpp"
#include "ltsurv/functionals.hpp"
#include "ltsurv/report.hpp"
#include "ltsurv/simulation.hpp"

namespace {

using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitEstimation = 3;

struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

ltsurv::CensoringMode parse_mode(const std::string& s) {
    if (s == "single") return ltsurv::CensoringMode::single;
    if (s == "quantile_bins") return ltsurv::CensoringMode::quantile_bins;
    if (s == "elapsed") return ltsurv::CensoringMode::elapsed;
    if (s == "by_w") return ltsurv::CensoringMode::by_w;
    throw ValidationError("unknown censoring mode: " + s);
}

void apply_nuisance_json(const json& j, ltsurv::NuisanceConfig& cfg) {
    if (j.contains("censoring_mode")) cfg.censoring_mode = parse_mode(j["censoring_mode"]);
    if (j.contains("w_bins")) cfg.w_bins = j["w_bins"].get<std::size_t>();
    if (j.contains("pi_clip")) cfg.pi_clip = j["pi_clip"].get<double>();
    if (j.contains("a0")) cfg.a0 = j["a0"].get<int>();
    if (j.contains("degenerate_exposure")) {
        cfg.degenerate_exposure = j["degenerate_exposure"].get<bool>();
    }
    if (j.contains("misspecify_q_one")) cfg.misspecify_q_one = j["misspecify_q_one"].get<bool>();
    if (j.contains("misspecify_pi_const")) {
        cfg.misspecify_pi_const = j["misspecify_pi_const"].get<double>();
    }
}

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ValidationError("bad JSON in " + path + ": " + e.what());
    }
    return j;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write output file: " + path.string());
    out << content;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

struct CommonArgs {
    std::string data_path;
    std::string out_dir;
    std::string nuisance_path;
    std::uint64_t seed = 1;
    int folds = 5;
    double alpha = 0.05;

    ltsurv::EstimatorConfig config() const {
        ltsurv::EstimatorConfig cfg;
        cfg.K = folds;
        cfg.seed = seed;
        cfg.alpha = alpha;
        if (!nuisance_path.empty()) apply_nuisance_json(load_json_file(nuisance_path), cfg.nuisance);
        return cfg;
    }
};

void finish_manifest(ltsurv::RunManifest& manifest, const std::filesystem::path& out,
                     std::chrono::steady_clock::time_point start) {
    manifest.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_file(out / "manifest.json", manifest.to_json());
}

int cmd_estimate(const CommonArgs& args, const std::string& estimand_id) {
    const auto start = std::chrono::steady_clock::now();
    const std::filesystem::path out(args.out_dir);
    std::filesystem::create_directories(out);
    ltsurv::RunManifest manifest;
    manifest.command = "estimate " + estimand_id;
    manifest.seed = args.seed;
    manifest.input_digests[args.data_path] = ltsurv::file_digest(args.data_path);
    if (!args.nuisance_path.empty()) {
        manifest.input_digests[args.nuisance_path] = ltsurv::file_digest(args.nuisance_path);
    }
    manifest.config_digest =
        ltsurv::hex_digest(ltsurv::fnv1a(estimand_id + "|" + std::to_string(args.seed) + "|" +
                                         std::to_string(args.folds) + "|" + fmt(args.alpha)));

    const ltsurv::Dataset data = ltsurv::ingest_csv(args.data_path);
    ltsurv::EstimatorConfig cfg = args.config();
    const ltsurv::EstimandRequest req = ltsurv::parse_estimand(estimand_id);

    json j;
    j["schema_version"] = ltsurv::kSchemaVersion;
    j["estimand_id"] = estimand_id;
    std::string csv = "estimand_id,psi_plugin,psi_onestep,psi_ee,se_simple,se_crossfit,ci_lo,ci_hi\n";

    using Type = ltsurv::EstimandRequest::Type;
    if (req.type == Type::survival || req.type == Type::brier || req.type == Type::cf_survival) {
        ltsurv::Kernel kernel;
        if (req.type == Type::survival) {
            kernel = ltsurv::kernel_survival(req.tau);
            cfg.nuisance.degenerate_exposure = true;
        } else if (req.type == Type::brier) {
            const double b = req.b;
            kernel = ltsurv::kernel_brier(req.tau, [b](const std::vector<double>&) { return b; });
            cfg.nuisance.degenerate_exposure = true;
        } else {
            kernel = ltsurv::kernel_survival(req.tau);
            cfg.nuisance.a0 = req.a0;
        }
        const ltsurv::EstimateReport rep = ltsurv::estimate(data, kernel, cfg);
        j["psi_plugin"] = rep.psi_plugin;
        j["psi_onestep"] = rep.psi_onestep;
        j["psi_ee"] = rep.psi_ee;
        j["se_simple"] = rep.se_simple_onestep;
        j["se_crossfit"] = rep.se_crossfit_onestep;
        j["ci"] = {rep.ci_lo_onestep, rep.ci_hi_onestep};
        j["ci_ee"] = {rep.ci_lo_ee, rep.ci_hi_ee};
        j["flags"] = rep.flags;
        j["support_flag"] = rep.support_flag;
        json folds = json::array();
        for (const ltsurv::FoldEstimate& f : rep.folds) {
            folds.push_back({{"fold", f.fold},
                             {"n_k", f.n_k},
                             {"psi_plugin", f.psi_plugin},
                             {"psi_onestep", f.psi_onestep},
                             {"psi_ee", f.psi_ee},
                             {"gamma_k", f.gamma_k},
                             {"ee_residual", f.ee_residual}});
        }
        j["per_fold"] = folds;
        csv += estimand_id + "," + fmt(rep.psi_plugin) + "," + fmt(rep.psi_onestep) + "," +
               fmt(rep.psi_ee) + "," + fmt(rep.se_simple_onestep) + "," +
               fmt(rep.se_crossfit_onestep) + "," + fmt(rep.ci_lo_onestep) + "," +
               fmt(rep.ci_hi_onestep) + "\n";
        std::string infl = "record,phi\n";
        const std::vector<double> phi = rep.influence_values(rep.psi_onestep);
        for (std::size_t i = 0; i < phi.size(); ++i) {
            infl += std::to_string(i) + "," + fmt(phi[i]) + "\n";
        }
        write_file(out / "influence.csv", infl);
        manifest.output_paths.push_back((out / "influence.csv").string());
    } else if (req.type == Type::median) {
        const ltsurv::FunctionalSpec spec = ltsurv::median_functional(req.a0);
        const ltsurv::RootReport rep = ltsurv::solve_estimating_equation(data, spec, cfg);
        j["m_hat"] = rep.m_hat;
        j["se"] = rep.se;
        j["ci"] = {rep.ci_lo, rep.ci_hi};
        j["derivative"] = rep.derivative;
        csv += estimand_id + ",NA," + fmt(rep.m_hat) + ",NA,NA," + fmt(rep.se) + "," +
               fmt(rep.ci_lo) + "," + fmt(rep.ci_hi) + "\n";
    } else { // loglog
        std::vector<double> grid;
        if (req.has_window && req.hi > req.lo) {
            for (int i = 0; i < req.points; ++i) {
                grid.push_back(req.lo +
                               (req.hi - req.lo) * static_cast<double>(i) /
                                   static_cast<double>(req.points - 1));
            }
        }
        const ltsurv::LoglogReport rep = ltsurv::loglog_contrast(data, cfg, grid);
        j["contrast"] = rep.contrast;
        j["se"] = rep.se;
        j["ci"] = {rep.ci_lo, rep.ci_hi};
        csv += estimand_id + ",NA," + fmt(rep.contrast) + ",NA,NA," + fmt(rep.se) + "," +
               fmt(rep.ci_lo) + "," + fmt(rep.ci_hi) + "\n";
    }

    write_file(out / "estimate.json", j.dump(2) + "\n");
    write_file(out / "estimate.csv", csv);
    manifest.output_paths.push_back((out / "estimate.json").string());
    manifest.output_paths.push_back((out / "estimate.csv").string());
    finish_manifest(manifest, out, start);
    return kExitOk;
}

int cmd_band(const CommonArgs& args, const std::string& times_csv, int a0, int draws,
             bool studentized) {
    const auto start = std::chrono::steady_clock::now();
    const std::filesystem::path out(args.out_dir);
    std::filesystem::create_directories(out);
    ltsurv::RunManifest manifest;
    manifest.command = "band " + times_csv;
    manifest.seed = args.seed;
    manifest.input_digests[args.data_path] = ltsurv::file_digest(args.data_path);
    manifest.config_digest = ltsurv::hex_digest(
        ltsurv::fnv1a(times_csv + "|" + std::to_string(args.seed) + "|" + fmt(args.alpha)));

    std::vector<double> times;
    std::stringstream ss(times_csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (!tok.empty()) times.push_back(std::stod(tok));
    }
    if (times.empty()) throw ValidationError("band: no evaluation times given");

    const ltsurv::Dataset data = ltsurv::ingest_csv(args.data_path);
    ltsurv::EstimatorConfig cfg = args.config();
    bool has_exposure = false;
    for (const ltsurv::ObservedRecord& r : data.records) {
        if (r.a != a0) has_exposure = true;
    }
    if (!has_exposure) cfg.nuisance.degenerate_exposure = true;
    ltsurv::BandConfig bc;
    bc.alpha = args.alpha;
    bc.draws = draws;
    bc.seed = args.seed;
    bc.studentized = studentized;
    const ltsurv::CurveReport rep = ltsurv::cf_survival_curve(data, times, a0, cfg, &bc);

    std::string csv = "time,est,est_isotonic,se,band_lo,band_hi\n";
    for (std::size_t s = 0; s < times.size(); ++s) {
        csv += fmt(times[s]) + "," + fmt(rep.est[s]) + "," + fmt(rep.est_isotonic[s]) + "," +
               fmt(rep.se[s]) + "," + fmt(rep.band.lo[s]) + "," + fmt(rep.band.hi[s]) + "\n";
    }
    write_file(out / "band.csv", csv);
    json j;
    j["schema_version"] = ltsurv::kSchemaVersion;
    j["alpha"] = args.alpha;
    j["draws"] = draws;
    j["studentized"] = studentized;
    j["crit"] = rep.band.crit;
    j["halfwidth"] = rep.band.halfwidth;
    j["singular_covariance"] = rep.band.singular_covariance;
    write_file(out / "band.json", j.dump(2) + "\n");
    manifest.output_paths.push_back((out / "band.csv").string());
    manifest.output_paths.push_back((out / "band.json").string());
    finish_manifest(manifest, out, start);
    return kExitOk;
}

ltsurv::Scenario scenario_from_name(const std::string& name) {
    ltsurv::Scenario sc;
    if (name == "none_25") {
        sc.truncation = ltsurv::TruncationLevel::none;
        sc.censoring = ltsurv::CensoringLevel::low_25;
    } else if (name == "none_50") {
        sc.truncation = ltsurv::TruncationLevel::none;
        sc.censoring = ltsurv::CensoringLevel::high_50;
    } else if (name == "low_25") {
        sc.truncation = ltsurv::TruncationLevel::low_25;
        sc.censoring = ltsurv::CensoringLevel::low_25;
    } else if (name == "low_50") {
        sc.truncation = ltsurv::TruncationLevel::low_25;
        sc.censoring = ltsurv::CensoringLevel::high_50;
    } else if (name == "high_25") {
        sc.truncation = ltsurv::TruncationLevel::high_50;
        sc.censoring = ltsurv::CensoringLevel::low_25;
    } else if (name == "high_50") {
        sc.truncation = ltsurv::TruncationLevel::high_50;
        sc.censoring = ltsurv::CensoringLevel::high_50;
    } else {
        throw ValidationError("unknown scenario: " + name);
    }
    return sc;
}

ltsurv::Scenario scenario_from_json(const json& j) {
    ltsurv::Scenario sc;
    const std::string tr = j.value("truncation", "low_25");
    if (tr == "none") {
        sc.truncation = ltsurv::TruncationLevel::none;
    } else if (tr == "low_25") {
        sc.truncation = ltsurv::TruncationLevel::low_25;
    } else if (tr == "high_50") {
        sc.truncation = ltsurv::TruncationLevel::high_50;
    } else {
        throw ValidationError("unknown truncation level: " + tr);
    }
    const std::string ce = j.value("censoring", "low_25");
    if (ce == "low_25") {
        sc.censoring = ltsurv::CensoringLevel::low_25;
    } else if (ce == "high_50") {
        sc.censoring = ltsurv::CensoringLevel::high_50;
    } else {
        throw ValidationError("unknown censoring level: " + ce);
    }
    sc.n = j.value("n", static_cast<std::size_t>(500));
    sc.reps = j.value("reps", 1000);
    sc.seed = j.value("seed", static_cast<std::uint64_t>(1));
    if (j.contains("eval_times")) sc.eval_times = j["eval_times"].get<std::vector<double>>();
    if (j.contains("estimators")) sc.estimators = j["estimators"].get<std::vector<std::string>>();
    sc.censoring_shape = j.value("censoring_shape", 0.0);
    if (j.contains("nuisance")) apply_nuisance_json(j["nuisance"], sc.est_cfg.nuisance);
    return sc;
}

int cmd_simulate(const std::string& scenario_arg, const std::string& out_dir, int reps_override,
                 long long n_override, std::uint64_t seed, const std::string& nuisance_path) {
    const auto start = std::chrono::steady_clock::now();
    const std::filesystem::path out(out_dir);
    std::filesystem::create_directories(out);
    ltsurv::RunManifest manifest;
    manifest.command = "simulate " + scenario_arg;
    manifest.seed = seed;
    manifest.config_digest = ltsurv::hex_digest(ltsurv::fnv1a(
        scenario_arg + "|" + std::to_string(reps_override) + "|" + std::to_string(n_override)));

    std::vector<ltsurv::Scenario> scenarios;
    if (scenario_arg == "all") {
        for (const char* name : {"none_25", "none_50", "low_25", "low_50", "high_25", "high_50"}) {
            scenarios.push_back(scenario_from_name(name));
        }
    } else if (scenario_arg.size() > 5 &&
               scenario_arg.substr(scenario_arg.size() - 5) == ".json") {
        manifest.input_digests[scenario_arg] = ltsurv::file_digest(scenario_arg);
        scenarios.push_back(scenario_from_json(load_json_file(scenario_arg)));
    } else {
        scenarios.push_back(scenario_from_name(scenario_arg));
    }
    std::string csv;
    for (ltsurv::Scenario& sc : scenarios) {
        sc.seed = seed;
        if (reps_override > 0) sc.reps = reps_override;
        if (n_override > 0) sc.n = static_cast<std::size_t>(n_override);
        sc.est_cfg.nuisance.censoring_mode = ltsurv::CensoringMode::elapsed;
        if (!nuisance_path.empty()) {
            apply_nuisance_json(load_json_file(nuisance_path), sc.est_cfg.nuisance);
        }
        const ltsurv::MetricsTable table = ltsurv::run_monte_carlo(sc);
        const std::string block = table.to_csv();
        if (csv.empty()) {
            csv = block;
        } else {
            csv += block.substr(block.find('\n') + 1); // drop repeated header
        }
    }
    write_file(out / "metrics.csv", csv);
    manifest.output_paths.push_back((out / "metrics.csv").string());
    finish_manifest(manifest, out, start);
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"survival-integral estimation for left-truncated right-censored data"};
    app.require_subcommand(1);

    CommonArgs common;
    std::string estimand_id, band_times, scenario_arg = "low_25";
    int band_a0 = 1, band_draws = 20000, reps_override = -1;
    long long n_override = -1;
    bool studentized = false;

    CLI::App* est = app.add_subcommand("estimate", "estimate a single functional");
    est->add_option("--data", common.data_path, "dataset CSV")->required();
    est->add_option("--estimand", estimand_id, "estimand id, e.g. survival(tau=2)")->required();
    est->add_option("--out", common.out_dir, "output directory")->required();
    est->add_option("--seed", common.seed, "master seed");
    est->add_option("--folds", common.folds, "number of cross-fitting folds");
    est->add_option("--alpha", common.alpha, "CI level is 1 - alpha");
    est->add_option("--nuisance", common.nuisance_path, "nuisance config JSON");

    CLI::App* band = app.add_subcommand("band", "uniform band over a survival family");
    band->add_option("--data", common.data_path, "dataset CSV")->required();
    band->add_option("--times", band_times, "comma-separated evaluation times")->required();
    band->add_option("--out", common.out_dir, "output directory")->required();
    band->add_option("--a0", band_a0, "exposure arm");
    band->add_option("--draws", band_draws, "multiplier bootstrap draws");
    band->add_flag("--studentized", studentized, "variable-width studentized band");
    band->add_option("--seed", common.seed, "master seed");
    band->add_option("--folds", common.folds, "number of cross-fitting folds");
    band->add_option("--alpha", common.alpha, "band level is 1 - alpha");
    band->add_option("--nuisance", common.nuisance_path, "nuisance config JSON");

    CLI::App* sim = app.add_subcommand("simulate", "Monte Carlo scenario suite");
    sim->add_option("--scenario", scenario_arg, "scenario name, 'all', or JSON path");
    sim->add_option("--out", common.out_dir, "output directory")->required();
    sim->add_option("--reps", reps_override, "replicate count override");
    sim->add_option("--n", n_override, "sample size override");
    sim->add_option("--seed", common.seed, "master seed");
    sim->add_option("--nuisance", common.nuisance_path, "nuisance config JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitValidation;
    }

    try {
        if (est->parsed()) return cmd_estimate(common, estimand_id);
        if (band->parsed()) return cmd_band(common, band_times, band_a0, band_draws, studentized);
        return cmd_simulate(scenario_arg, common.out_dir, reps_override, n_override, common.seed,
                            common.nuisance_path);
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const ltsurv::DataError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::invalid_argument& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "estimation failure: " << e.what() << "\n";
        return kExitEstimation;
    }
}
