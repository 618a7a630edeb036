#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "sysrisk/control.hpp"
#include "sysrisk/dynamics.hpp"
#include "sysrisk/errors.hpp"
#include "sysrisk/io.hpp"
#include "sysrisk/model.hpp"
#include "sysrisk/risk.hpp"
#include "sysrisk/scenario.hpp"
#include "sysrisk/stability.hpp"

namespace sysrisk {

inline constexpr std::string_view kToolVersion = "sysrisk 0.1.0";

struct RunManifest {
    std::string command;
    std::uint64_t scenario_hash = 0;
    std::uint64_t base_seed = 0;
    std::string version{kToolVersion};
    std::vector<std::string> outputs;
    double duration_seconds = 0.0;
};

struct RunOptions {
    std::filesystem::path out_dir;
    int threads = 0;
    bool bridge = false;
    SweepAxis axis = SweepAxis::rho_pair;
    Vec values;
    int k_lo = 5;
    int k_hi = 60;
};

namespace detail_run {

class Emitter {
public:
    Emitter(std::string command, const std::filesystem::path& out_dir, std::uint64_t scenario_hash,
            std::uint64_t base_seed)
        : out_dir_(out_dir), start_(std::chrono::steady_clock::now()) {
        manifest_.command = std::move(command);
        manifest_.scenario_hash = scenario_hash;
        manifest_.base_seed = base_seed;
        std::filesystem::create_directories(out_dir_);
    }

    void emit(const std::string& name, std::string_view content) {
        write_file(out_dir_ / name, content);
        manifest_.outputs.push_back(name);
    }

    /// Writes manifest.json atomically and returns the manifest.
    RunManifest finish() {
        manifest_.duration_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        nlohmann::json j;
        j["command"] = manifest_.command;
        j["scenario_hash"] = hex_u64(manifest_.scenario_hash);
        j["base_seed"] = manifest_.base_seed;
        j["version"] = manifest_.version;
        j["outputs"] = manifest_.outputs;
        j["duration_seconds"] = manifest_.duration_seconds;
        write_file_atomic(out_dir_ / "manifest.json", j.dump(2) + "\n");
        return manifest_;
    }

private:
    std::filesystem::path out_dir_;
    std::chrono::steady_clock::time_point start_;
    RunManifest manifest_;
};

inline std::string policy_curve_csv(const PolicyResult& res) {
    Csv csv({"r", "w", "g", "rho2"});
    for (const auto& row : res.curve) csv.row({row[0], row[1], row[2], row[3]});
    return csv.str();
}

inline std::string policy_summary_csv(const PolicyResult& res) {
    Csv csv({"r_star", "w_star", "liquidity_trap"});
    csv.row({res.r_star, res.w_star, res.liquidity_trap});
    return csv.str();
}

inline std::string histogram_csv(const DefaultReport& rep) {
    Csv csv({"count", "frequency"});
    for (std::size_t k = 0; k < rep.histogram.size(); ++k) csv.row({k, rep.histogram[k]});
    return csv.str();
}

inline std::string ecdf_csv(const DefaultReport& rep) {
    Csv csv({"count", "cum_prob"});
    for (std::size_t k = 0; k < rep.ecdf.size(); ++k) csv.row({k, rep.ecdf[k]});
    return csv.str();
}

inline std::string paths_csv(const PathEnsemble& ens) {
    Csv csv({"path", "step", "time", "bank", "Y"});
    for (std::size_t p = 0; p < ens.n_paths; ++p)
        for (std::size_t k = 0; k <= ens.n_steps; ++k)
            for (std::size_t i = 0; i < ens.n_banks; ++i)
                csv.row({p, k, ens.times[k], i, ens.y(p, k, i)});
    return csv.str();
}

inline std::string meta_json(const PathEnsemble& ens, std::uint64_t base_seed) {
    nlohmann::json j;
    j["config_hash"] = hex_u64(ens.meta);
    j["base_seed"] = base_seed;
    j["seeds"] = ens.seeds;
    return j.dump(2) + "\n";
}

} // namespace detail_run

/// `policy`: objective curve and the optimal rate. lambda is taken from the
/// scenario's rate block (0 when a fixed rate is configured, which makes the
/// objective the pure growth rate g).
inline RunManifest run_policy(const Scenario& s, const RunOptions& opt) {
    detail_run::Emitter em("policy", opt.out_dir, s.fingerprint(), s.config.base_seed);
    const CovarianceMatrix cov = build_covariance(s.params, s.corr);
    const double lambda = s.config.rate.kind == RateKind::policy ? s.config.rate.lambda : 0.0;
    const PolicyResult res = optimal_rate(s.params, cov, lambda);
    em.emit("curve.csv", detail_run::policy_curve_csv(res));
    em.emit("summary.csv", detail_run::policy_summary_csv(res));
    return em.finish();
}

/// `simulate`: long-format trajectory CSV plus a meta fingerprint file.
inline RunManifest run_simulate(const Scenario& s, const RunOptions& opt) {
    detail_run::Emitter em("simulate", opt.out_dir, s.fingerprint(), s.config.base_seed);
    const SimPlan plan = make_plan(s.params, s.corr, s.flows, s.config);
    const PathEnsemble ens = simulate(plan, opt.threads);
    em.emit("paths.csv", detail_run::paths_csv(ens));
    em.emit("meta.json", detail_run::meta_json(ens, s.config.base_seed));
    return em.finish();
}

/// `defaults`: default-count histogram, ECDF and tail probabilities.
inline RunManifest run_defaults(const Scenario& s, const RunOptions& opt) {
    detail_run::Emitter em("defaults", opt.out_dir, s.fingerprint(), s.config.base_seed);
    const SimPlan plan = make_plan(s.params, s.corr, s.flows, s.config);
    auto counts = simulate_default_counts(plan, s.config.default_threshold, opt.bridge, opt.threads);
    const DefaultReport rep = default_report(std::move(counts), plan.n_banks(), opt.k_lo, opt.k_hi);
    em.emit("histogram.csv", detail_run::histogram_csv(rep));
    em.emit("ecdf.csv", detail_run::ecdf_csv(rep));
    Csv tails({"axis_value", "p_large", "se_large", "p_small", "se_small"});
    tails.row({plan.controls.r, rep.p_large, rep.se_large, rep.p_small, rep.se_small});
    em.emit("tails.csv", tails.str());
    return em.finish();
}

/// `sweep`: one default study per axis value under common random numbers.
inline RunManifest run_sweep(const Scenario& s, const RunOptions& opt) {
    if (opt.values.empty()) throw ValidationError("sweep: need at least one axis value");
    for (std::size_t i = 1; i < opt.values.size(); ++i)
        if (!(opt.values[i - 1] <= opt.values[i]))
            throw ValidationError("sweep: axis values must be sorted ascending");
    detail_run::Emitter em("sweep", opt.out_dir, s.fingerprint(), s.config.base_seed);
    const SweepResult res =
        sweep(s.params, s.corr, s.flows, s.config, opt.axis, opt.values, opt.k_lo, opt.k_hi, opt.threads);
    Csv tails({"axis_value", "p_large", "se_large", "p_small", "se_small"});
    for (const auto& row : res.rows)
        tails.row({row.value, row.p_large, row.se_large, row.p_small, row.se_small});
    em.emit("tails.csv", tails.str());
    for (std::size_t k = 0; k < res.reports.size(); ++k)
        em.emit("ecdf_" + std::to_string(k) + ".csv", detail_run::ecdf_csv(res.reports[k]));
    return em.finish();
}

/// `stability`: generator spectrum, stationary covariance and ergodic
/// diagnostics for the scenario's flow graph. Disconnected graphs get a
/// divergence regression instead of stationary quantities; state-dependent
/// (modulated) flows get bounded time-average diagnostics only, since the
/// stationary law is no longer Gaussian.
inline RunManifest run_stability(const Scenario& s, const RunOptions& opt) {
    detail_run::Emitter em("stability", opt.out_dir, s.fingerprint(), s.config.base_seed);
    const CovarianceMatrix cov = build_covariance(s.params, s.corr);
    const ResolvedControls controls = resolve_controls(s.params, cov, s.config.rate);
    const CenteredMoments cm = centered_moments(controls.effective);
    const GeneratorMatrix gen = build_generator(s.flows);
    const Connectivity conn = connectivity(s.flows);
    const double gap = spectral_gap(gen);
    const bool modulated = s.flows.modulation.kind == ModulationKind::norm_dependent;

    const double nan = std::nan("");
    Csv report({"connected", "spectral_gap", "c1", "c2", "lambda"});
    if (conn.connected && gap > 0.0) {
        const LyapunovCertificate cert = lyapunov_drift_certificate(gen, cm.a_tilde, cm.mu_tilde);
        report.row({conn.connected, gap, cert.c1, cert.c2, cert.lambda});
    } else {
        report.row({conn.connected, gap, nan, nan, nan});
    }
    em.emit("report.csv", report.str());

    const SimPlan plan = make_plan(s.params, s.corr, s.flows, s.config);
    const PathEnsemble ens = simulate(plan, opt.threads);

    if (conn.connected && gap > 0.0 && !modulated) {
        const Mat sigma = stationary_covariance(gen, cm.a_tilde);
        const Vec mu_inf = stationary_mean(gen, cm.mu_tilde);
        std::vector<std::string> header;
        for (std::size_t i = 0; i < sigma.rows(); ++i) header.push_back("bank_" + std::to_string(i));
        Csv cov_csv(header);
        for (std::size_t i = 0; i < sigma.rows(); ++i) {
            std::vector<CsvCell> cells;
            for (std::size_t j = 0; j < sigma.cols(); ++j) cells.emplace_back(sigma(i, j));
            cov_csv.row(cells);
        }
        em.emit("stationary_cov.csv", cov_csv.str());

        const double burn = std::min(s.config.horizon / 4.0,
                                     10.0 * static_cast<double>(s.params.size()) / gap);
        Csv erg({"functional", "time_average", "stationary_value", "abs_error"});
        for (const TestFunctional& f :
             {TestFunctional::indicator(0.0), TestFunctional::bounded_norm_sq(100.0)}) {
            const ErgodicCheck chk = ergodic_check(ens, sigma, mu_inf, f, burn);
            erg.row({f.name(), chk.time_average, chk.stationary_value, chk.abs_error});
        }
        em.emit("ergodic.csv", erg.str());
    } else if (conn.connected && gap > 0.0 && modulated) {
        // No closed-form stationary law; report bounded time averages and the
        // absence of a linear trend across window averages.
        const TestFunctional f = TestFunctional::bounded_norm_sq(100.0);
        const std::size_t windows = 8;
        Vec centers, averages;
        const std::size_t m = ens.n_steps;
        Vec y_tilde(ens.n_banks);
        for (std::size_t w = 0; w < windows; ++w) {
            const std::size_t k0 = m * w / windows;
            const std::size_t k1 = m * (w + 1) / windows;
            double acc = 0.0;
            std::size_t cnt = 0;
            for (std::size_t p = 0; p < ens.n_paths; ++p)
                for (std::size_t k = k0; k < k1; ++k) {
                    double mean_k = 0.0;
                    for (std::size_t i = 0; i < ens.n_banks; ++i) mean_k += ens.y(p, k, i);
                    mean_k /= static_cast<double>(ens.n_banks);
                    for (std::size_t i = 0; i < ens.n_banks; ++i)
                        y_tilde[i] = ens.y(p, k, i) - mean_k;
                    acc += f(y_tilde.data(), ens.n_banks);
                    ++cnt;
                }
            centers.push_back(ens.times[(k0 + k1) / 2]);
            averages.push_back(acc / static_cast<double>(cnt));
        }
        const LinearFit fit = linear_fit(centers, averages);
        Csv erg({"functional", "time_average", "stationary_value", "abs_error"});
        erg.row({"window_mean_" + f.name(), mean(averages), nan, std::abs(fit.slope)});
        em.emit("ergodic.csv", erg.str());
    } else {
        if (conn.components.size() >= 2 && ens.n_paths >= 3) {
            const DivergenceDiagnostic d =
                group_divergence(ens, conn.components[0], conn.components[1]);
            Csv div({"slope", "intercept", "r_squared"});
            div.row({d.slope, d.intercept, d.r_squared});
            em.emit("divergence.csv", div.str());
        }
    }
    return em.finish();
}

inline RunManifest run(std::string_view subcommand, const Scenario& s, const RunOptions& opt) {
    if (subcommand == "policy") return run_policy(s, opt);
    if (subcommand == "simulate") return run_simulate(s, opt);
    if (subcommand == "defaults") return run_defaults(s, opt);
    if (subcommand == "sweep") return run_sweep(s, opt);
    if (subcommand == "stability") return run_stability(s, opt);
    throw ValidationError("unknown subcommand: " + std::string(subcommand));
}

// ---------------------------------------------------------------------------
// Figure recipes. Randomized bank parameters take a fixed param_seed, so
// each recipe is reproducible run to run. Reproduction of external plots is
// qualitative (shapes and monotonicity, not pointwise values).

namespace detail_run {

inline constexpr std::uint64_t kFigureParamSeed = 7;

inline BankParams uniform_banks(std::size_t n, double lo, double hi, std::uint64_t param_seed) {
    NormalRng rng(mix_seed(param_seed, 0x50415241u));
    BankParams p;
    p.mu.resize(n);
    p.sigma.resize(n);
    for (std::size_t i = 0; i < n; ++i) p.mu[i] = lo + (hi - lo) * rng.uniform();
    for (std::size_t i = 0; i < n; ++i) p.sigma[i] = lo + (hi - lo) * rng.uniform();
    return p;
}

inline FlowRateMatrix example_block_flows(std::size_t n) {
    // First ten banks tightly coupled, weak background coupling elsewhere.
    return block_flows(n, {{0, 10, 10.0}}, 0.5);
}

inline std::string rate_curve_csv(const BankParams& params, const CovarianceMatrix& cov,
                                  const Vec& lambdas) {
    Csv csv({"lambda", "r_star", "w_star", "liquidity_trap"});
    for (double l : lambdas) {
        const PolicyResult res = optimal_rate(params, cov, l, 2);
        csv.row({l, res.r_star, res.w_star, res.liquidity_trap});
    }
    return csv.str();
}

inline Vec lambda_grid(const BankParams& params, std::size_t points) {
    double hi = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double ratio = params.mu[i] / (params.sigma[i] * params.sigma[i]);
        hi = std::max(hi, 1.0 - 2.0 / (ratio + 1.0));
    }
    hi = 1.25 * static_cast<double>(params.size()) * std::max(hi, 0.1);
    Vec out(points);
    for (std::size_t k = 0; k < points; ++k)
        out[k] = hi * static_cast<double>(k) / static_cast<double>(points - 1);
    return out;
}

inline SimulationConfig figure_sim_config(std::size_t n, std::size_t n_steps, std::size_t n_paths,
                                          double r) {
    SimulationConfig c;
    c.horizon = 1.0;
    c.n_steps = n_steps;
    c.n_paths = n_paths;
    c.y0.assign(n, 0.0);
    c.default_threshold = -1.0;
    c.base_seed = 42;
    c.rate = RateSpec::fixed(r);
    return c;
}

} // namespace detail_run

/// Emits the CSV data behind one of the bundled studies (fig1..fig11).
inline RunManifest reproduce_figure(std::string_view id, const RunOptions& opt) {
    using namespace detail_run;
    Emitter em("figure " + std::string(id), opt.out_dir, fnv1a(id), 42);

    const auto emit_paths = [&](const BankParams& p, const CorrelationStructure& corr,
                                const FlowRateMatrix& flows, double r, const std::string& name) {
        SimulationConfig cfg = figure_sim_config(p.size(), 1000, 1, r);
        const PathEnsemble ens = simulate(make_plan(p, corr, flows, cfg), opt.threads);
        em.emit(name, paths_csv(ens));
    };
    const auto default_study = [&](const BankParams& p, const CorrelationStructure& corr,
                                   const FlowRateMatrix& flows, double r, std::size_t n_steps,
                                   std::size_t n_paths) {
        SimulationConfig cfg = figure_sim_config(p.size(), n_steps, n_paths, r);
        const SimPlan plan = make_plan(p, corr, flows, cfg);
        auto counts = simulate_default_counts(plan, cfg.default_threshold, false, opt.threads);
        return default_report(std::move(counts), p.size());
    };

    if (id == "fig1") {
        const BankParams p = uniform_banks(30, 0.1, 0.2, kFigureParamSeed);
        for (double r : {0.0, 0.12, 0.20})
            emit_paths(p, CorrelationStructure::independent(), zero_flows(30), r,
                       "paths_r" + format_double(r) + ".csv");
    } else if (id == "fig2") {
        const BankParams p = uniform_banks(30, 0.1, 0.2, kFigureParamSeed);
        emit_paths(p, CorrelationStructure::independent(), example_block_flows(30), 0.0, "paths.csv");
    } else if (id == "fig3") {
        const BankParams p = uniform_banks(30, 0.1, 0.2, kFigureParamSeed);
        emit_paths(p, CorrelationStructure::one_factor(0.5), example_block_flows(30), 0.08,
                   "paths.csv");
    } else if (id == "fig4") {
        const BankParams p = uniform_banks(100, 0.1, 0.2, kFigureParamSeed);
        for (double r : {0.0, 0.05, 0.08}) {
            const DefaultReport rep =
                default_study(p, CorrelationStructure::independent(), zero_flows(100), r, 100, 1000);
            em.emit("histogram_r" + format_double(r) + ".csv", histogram_csv(rep));
        }
    } else if (id == "fig5" || id == "fig6") {
        BankParams p;
        p.mu.assign(100, 0.1);
        p.sigma.assign(100, 0.1);
        const std::pair<double, double> combos[] = {{0.0, 0.0}, {0.0, 0.5}, {0.03, 0.3}, {0.05, 0.3}};
        for (const auto& [r, rho] : combos) {
            const DefaultReport rep = default_study(p, CorrelationStructure::one_factor(rho),
                                                    zero_flows(100), r, 1000, 1000);
            const std::string suffix = "_r" + format_double(r) + "_rho" + format_double(rho) + ".csv";
            if (id == "fig5")
                em.emit("ecdf" + suffix, ecdf_csv(rep));
            else
                em.emit("histogram" + suffix, histogram_csv(rep));
        }
    } else if (id == "fig7") {
        BankParams p;
        p.mu.assign(100, 0.1);
        p.sigma.assign(100, 0.1);
        Vec rhos;
        for (int k = 0; k <= 10; ++k) rhos.push_back(0.1 * k);
        for (double r : {0.0, 0.03, 0.05}) {
            SimulationConfig cfg = figure_sim_config(100, 1000, 5000, r);
            const SweepResult res = sweep(p, CorrelationStructure::independent(), zero_flows(100),
                                          cfg, SweepAxis::rho_pair, rhos, 5, 60, opt.threads);
            Csv tails({"axis_value", "p_large", "se_large", "p_small", "se_small"});
            for (const auto& row : res.rows)
                tails.row({row.value, row.p_large, row.se_large, row.p_small, row.se_small});
            em.emit("tails_r" + format_double(r) + ".csv", tails.str());
        }
    } else if (id == "fig8") {
        BankParams p;
        p.mu.assign(100, 0.1);
        p.sigma.assign(100, 0.1);
        for (double r : {0.0, 0.03}) {
            SimulationConfig cfg = figure_sim_config(100, 1000, 1000, r);
            const SweepResult res =
                sweep(p, CorrelationStructure::one_factor(0.5), constant_flows(100, 1.0), cfg,
                      SweepAxis::c_scale, {0.0, 0.5, 1.0}, 5, 60, opt.threads);
            for (std::size_t k = 0; k < res.reports.size(); ++k)
                em.emit("ecdf_r" + format_double(r) + "_c" + format_double(res.rows[k].value) + ".csv",
                        ecdf_csv(res.reports[k]));
        }
    } else if (id == "fig9" || id == "fig10" || id == "fig11") {
        BankParams p;
        CorrelationStructure corr = CorrelationStructure::independent();
        if (id == "fig9") {
            p.mu.assign(30, 0.1);
            p.sigma.assign(30, 0.1);
        } else {
            p = uniform_banks(30, 0.1, 0.2, kFigureParamSeed);
            if (id == "fig11") corr = CorrelationStructure::one_factor(0.8);
        }
        const CovarianceMatrix cov = build_covariance(p, corr);
        const Vec lambdas = lambda_grid(p, 301);
        em.emit("rate_curve.csv", rate_curve_csv(p, cov, lambdas));
        Csv curves({"lambda", "r", "w", "g", "rho2"});
        for (std::size_t k = 0; k < 5; ++k) {
            const double l = lambdas[(lambdas.size() - 1) * k / 4];
            const PolicyResult res = optimal_rate(p, cov, l, 256);
            for (const auto& row : res.curve) curves.row({l, row[0], row[1], row[2], row[3]});
        }
        em.emit("objective_curves.csv", curves.str());
        if (id != "fig9") {
            Csv prof({"bank", "mu_minus_sigma2"});
            for (std::size_t i = 0; i < p.size(); ++i)
                prof.row({i, p.mu[i] - p.sigma[i] * p.sigma[i]});
            em.emit("profitability.csv", prof.str());
        }
    } else {
        throw ValidationError("unknown figure id: " + std::string(id));
    }
    return em.finish();
}

} // namespace sysrisk
