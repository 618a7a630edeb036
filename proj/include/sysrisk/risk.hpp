#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sysrisk/dynamics.hpp"
#include "sysrisk/errors.hpp"
#include "sysrisk/model.hpp"
#include "sysrisk/rng.hpp"

namespace sysrisk {

/// Number of defaulting banks per path: bank i defaults iff its log-wealth
/// dips below the threshold at some grid point (discrete monitoring).
inline std::vector<int> count_defaults(const PathEnsemble& ens, double threshold) {
    std::vector<int> counts(ens.n_paths, 0);
    for (std::size_t p = 0; p < ens.n_paths; ++p) {
        int c = 0;
        for (std::size_t i = 0; i < ens.n_banks; ++i) {
            for (std::size_t k = 0; k <= ens.n_steps; ++k) {
                if (ens.y(p, k, i) < threshold) {
                    ++c;
                    break;
                }
            }
        }
        counts[p] = c;
    }
    return counts;
}

namespace detail {

constexpr std::uint64_t kBridgeStreamTag = 0x4252494447455355ull;

/// Marks defaults on one path. With the bridge correction the per-step
/// continuous crossing probability exp(-2 (Y_k - D)(Y_{k+1} - D) / (s_i^2 dt))
/// is sampled from a dedicated substream; this is exact only for constant
/// coefficients and zero flows, which the caller enforces. Bernoulli draws are
/// consumed bank-major, step-major, and skipped when the probability
/// underflows to zero, so the stream is reproducible.
inline int path_default_count(const double* buf, std::size_t n, std::size_t steps, double threshold,
                              bool bridge, const Vec& diag_var, double dt, std::uint64_t seed) {
    int count = 0;
    NormalRng bridge_rng(mix_seed(seed, kBridgeStreamTag));
    for (std::size_t i = 0; i < n; ++i) {
        bool defaulted = false;
        for (std::size_t k = 0; k <= steps; ++k) {
            if (buf[k * n + i] < threshold) {
                defaulted = true;
                break;
            }
        }
        if (!defaulted && bridge) {
            const double denom = diag_var[i] * dt;
            for (std::size_t k = 0; k < steps && !defaulted; ++k) {
                const double a = buf[k * n + i] - threshold;
                const double b = buf[(k + 1) * n + i] - threshold;
                const double p_cross = std::exp(-2.0 * a * b / denom);
                if (p_cross <= 0.0) continue;
                if (bridge_rng.uniform() < p_cross) defaulted = true;
            }
        }
        if (defaulted) ++count;
    }
    return count;
}

} // namespace detail

/// Streams the simulation and returns per-path default counts without storing
/// trajectories. The Brownian-bridge crossing correction requires zero flows
/// (constant per-bank coefficients).
inline std::vector<int> simulate_default_counts(const SimPlan& plan, double threshold, bool bridge,
                                                int threads = 0) {
    if (bridge && plan.has_flows)
        throw ValidationError(
            "bridge correction requires zero interbank flows (state-dependent drift has no exact "
            "crossing probability)");
    const std::size_t n = plan.n_banks();
    Vec diag_var(n);
    for (std::size_t i = 0; i < n; ++i) diag_var[i] = plan.controls.effective.a_star(i, i);
    std::vector<int> counts(plan.config.n_paths, 0);
    simulate_visit(
        plan,
        [&](std::size_t p, std::uint64_t seed, const Vec&, const double* buf) {
            counts[p] = detail::path_default_count(buf, n, plan.config.n_steps, threshold, bridge,
                                                   diag_var, plan.dt(), seed);
        },
        threads);
    return counts;
}

/// Distribution of the per-path default count over {0..N}, with tail
/// probabilities and their binomial standard errors.
struct DefaultReport {
    std::vector<int> counts;
    std::vector<std::size_t> histogram; // index d: number of paths with count d
    Vec ecdf;                           // ecdf[k] = P(D <= k)
    int k_lo = 5;
    int k_hi = 60;
    double p_large = 0.0; // P(D > k_hi)
    double se_large = 0.0;
    double p_small = 0.0; // P(D < k_lo)
    double se_small = 0.0;
    std::size_t n_banks = 0;
};

inline DefaultReport default_report(std::vector<int> counts, std::size_t n_banks, int k_lo = 5,
                                    int k_hi = 60) {
    if (k_lo > k_hi) throw ValidationError("default_report: k_lo must be <= k_hi");
    DefaultReport r;
    r.n_banks = n_banks;
    r.k_lo = k_lo;
    r.k_hi = k_hi;
    r.histogram.assign(n_banks + 1, 0);
    const double n_paths = static_cast<double>(counts.size());
    std::size_t large = 0, small = 0;
    for (int c : counts) {
        r.histogram[static_cast<std::size_t>(c)]++;
        if (c > k_hi) ++large;
        if (c < k_lo) ++small;
    }
    r.ecdf.resize(n_banks + 1);
    std::size_t cum = 0;
    for (std::size_t k = 0; k <= n_banks; ++k) {
        cum += r.histogram[k];
        r.ecdf[k] = static_cast<double>(cum) / n_paths;
    }
    r.p_large = static_cast<double>(large) / n_paths;
    r.p_small = static_cast<double>(small) / n_paths;
    r.se_large = std::sqrt(r.p_large * (1.0 - r.p_large) / n_paths);
    r.se_small = std::sqrt(r.p_small * (1.0 - r.p_small) / n_paths);
    r.counts = std::move(counts);
    return r;
}

enum class SweepAxis { rho_pair, rate, c_scale };

inline std::string to_string(SweepAxis a) {
    switch (a) {
        case SweepAxis::rho_pair: return "rho_pair";
        case SweepAxis::rate: return "r";
        case SweepAxis::c_scale: return "c_scale";
    }
    return "?";
}

struct SweepRow {
    double value = 0.0;
    double p_large = 0.0;
    double se_large = 0.0;
    double p_small = 0.0;
    double se_small = 0.0;
};

struct SweepResult {
    SweepAxis axis = SweepAxis::rho_pair;
    std::vector<SweepRow> rows;
    std::vector<DefaultReport> reports; // one per axis value, same order
};

/// One default study per axis value with common random numbers: every value
/// reuses the same base_seed, so the per-path noise is shared and monotone
/// comparisons across values are sharpened.
inline SweepResult sweep(const BankParams& params, const CorrelationStructure& corr,
                         const FlowRateMatrix& flows, const SimulationConfig& config, SweepAxis axis,
                         const Vec& values, int k_lo = 5, int k_hi = 60, int threads = 0) {
    SweepResult out;
    out.axis = axis;
    for (double v : values) {
        CorrelationStructure corr_v = corr;
        FlowRateMatrix flows_v = flows;
        SimulationConfig config_v = config;
        switch (axis) {
            case SweepAxis::rho_pair:
                corr_v = CorrelationStructure::one_factor(v);
                break;
            case SweepAxis::rate:
                config_v.rate = RateSpec::fixed(v);
                break;
            case SweepAxis::c_scale:
                for (double& e : flows_v.c.data()) e *= v;
                break;
        }
        const SimPlan plan = make_plan(params, corr_v, flows_v, config_v);
        auto counts = simulate_default_counts(plan, config_v.default_threshold, false, threads);
        DefaultReport rep = default_report(std::move(counts), plan.n_banks(), k_lo, k_hi);
        out.rows.push_back({v, rep.p_large, rep.se_large, rep.p_small, rep.se_small});
        out.reports.push_back(std::move(rep));
    }
    return out;
}

} // namespace sysrisk
