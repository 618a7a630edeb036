#pragma once

#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "sysrisk/control.hpp"
#include "sysrisk/errors.hpp"
#include "sysrisk/hashing.hpp"
#include "sysrisk/linalg.hpp"
#include "sysrisk/model.hpp"
#include "sysrisk/rng.hpp"

namespace sysrisk {

enum class NoiseKind { dense, factor };

/// Factorization of the driving covariance A: either a lower-triangular
/// loading with L L' = A, or the one-factor form with per-bank idiosyncratic
/// and common-factor scales.
struct NoiseFactorization {
    NoiseKind kind = NoiseKind::dense;
    Mat loading;
    Vec idiosyncratic;
    Vec common;

    std::size_t banks() const {
        return kind == NoiseKind::dense ? loading.rows() : idiosyncratic.size();
    }
    /// Number of standard normal draws consumed per time step.
    std::size_t factor_count() const { return kind == NoiseKind::dense ? banks() : banks() + 1; }
};

inline NoiseFactorization factorize_noise(const CovarianceMatrix& cov) {
    NoiseFactorization f;
    f.kind = NoiseKind::dense;
    f.loading = cholesky_psd(cov.a);
    return f;
}

/// Prefers the factor form for the one-factor correlation family (pairwise
/// correlation rho realized through one shared factor); falls back to the
/// dense Cholesky loading for explicit correlation matrices.
inline NoiseFactorization factorize_noise(const BankParams& params, const CorrelationStructure& corr) {
    if (corr.kind == CorrelationKind::one_factor || corr.kind == CorrelationKind::identical) {
        const double rho = corr.effective_rho();
        NoiseFactorization f;
        f.kind = NoiseKind::factor;
        const std::size_t n = params.size();
        f.idiosyncratic.resize(n);
        f.common.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            f.idiosyncratic[i] = params.sigma[i] * std::sqrt(1.0 - rho);
            f.common[i] = params.sigma[i] * std::sqrt(rho);
        }
        return f;
    }
    return factorize_noise(build_covariance(params, corr));
}

/// Flow drift vector (f/N) sum_j c_ij (y_j - y_i), accumulated over ordered
/// pairs so the two sides of each pair are exact negations of one another.
inline Vec flow_drift(const Mat& c, const Vec& y, double factor_over_n) {
    const std::size_t n = y.size();
    Vec d(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double cij = c(i, j);
            if (cij == 0.0) continue;
            const double t = cij * (y[j] - y[i]);
            d[i] += t;
            d[j] -= t;
        }
    for (std::size_t i = 0; i < n; ++i) d[i] *= factor_over_n;
    return d;
}

/// Everything precomputed for integrating the controlled log-wealth SDE:
/// resolved rate, per-bank policy, leverage-scaled noise loadings and the
/// flow-coupling structure.
struct SimPlan {
    BankParams params;
    CovarianceMatrix cov;
    FlowRateMatrix flows;
    SimulationConfig config;
    ResolvedControls controls;
    NoiseFactorization noise; // factorization of A (unscaled)

    // integration internals (loadings scaled by 1 + alpha*)
    bool factor_noise = false;
    bool diagonal_loading = false;
    Mat loading_scaled;
    Vec idio_scaled;
    Vec common_scaled;

    struct Edge {
        std::uint32_t i, j;
        double c;
    };
    bool has_flows = false;
    bool homogeneous_flows = false;
    double homog_c = 0.0;
    std::vector<Edge> edges;

    std::uint64_t fingerprint = 0;

    std::size_t n_banks() const { return params.size(); }
    double dt() const { return config.horizon / static_cast<double>(config.n_steps); }
};

namespace detail {

inline void finalize_plan(SimPlan& plan) {
    const std::size_t n = plan.n_banks();
    plan.config.validate(n);
    {
        const auto violations = validate_flows(plan.flows);
        if (!violations.empty()) {
            const auto& v = violations.front();
            throw ValidationError("flows: " + v.message + " at (" + std::to_string(v.i) + ", " +
                                  std::to_string(v.j) + ")");
        }
        plan.flows.modulation.validate();
    }
    if (plan.flows.size() != n) throw ValidationError("flows: matrix must be N x N");

    plan.controls = resolve_controls(plan.params, plan.cov, plan.config.rate);

    plan.factor_noise = plan.noise.kind == NoiseKind::factor;
    if (plan.factor_noise) {
        plan.idio_scaled.resize(n);
        plan.common_scaled.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double lev = 1.0 + plan.controls.policy.alpha_star[i];
            plan.idio_scaled[i] = lev * plan.noise.idiosyncratic[i];
            plan.common_scaled[i] = lev * plan.noise.common[i];
        }
    } else {
        plan.loading_scaled = plan.noise.loading;
        plan.diagonal_loading = true;
        for (std::size_t i = 0; i < n; ++i) {
            const double lev = 1.0 + plan.controls.policy.alpha_star[i];
            for (std::size_t k = 0; k < n; ++k) {
                plan.loading_scaled(i, k) *= lev;
                if (k != i && plan.loading_scaled(i, k) != 0.0) plan.diagonal_loading = false;
            }
        }
    }

    plan.has_flows = false;
    plan.homogeneous_flows = true;
    double first = -1.0;
    for (std::size_t i = 0; i < n && plan.homogeneous_flows; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double c = plan.flows.c(i, j);
            if (first < 0.0) first = c;
            if (c != first) {
                plan.homogeneous_flows = false;
                break;
            }
        }
    if (n < 2) plan.homogeneous_flows = false;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (plan.flows.c(i, j) > 0.0) {
                plan.has_flows = true;
                plan.edges.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j),
                                      plan.flows.c(i, j)});
            }
    plan.homogeneous_flows = plan.homogeneous_flows && plan.has_flows;
    plan.homog_c = plan.homogeneous_flows ? first : 0.0;

    Hasher h;
    plan.params.hash_into(h);
    h.add("cov").add_range(plan.cov.a.data());
    plan.flows.hash_into(h);
    plan.config.hash_into(h);
    h.add(plan.factor_noise ? "factor" : "dense");
    plan.fingerprint = h.value();
}

} // namespace detail

inline SimPlan make_plan(const BankParams& params, const CorrelationStructure& corr,
                         const FlowRateMatrix& flows, const SimulationConfig& config) {
    SimPlan plan;
    plan.params = params;
    plan.cov = build_covariance(params, corr);
    plan.flows = flows;
    plan.config = config;
    plan.noise = factorize_noise(params, corr);
    detail::finalize_plan(plan);
    return plan;
}

inline SimPlan make_plan(const BankParams& params, const CovarianceMatrix& cov,
                         const FlowRateMatrix& flows, const SimulationConfig& config) {
    params.validate();
    SimPlan plan;
    plan.params = params;
    plan.cov = cov;
    plan.flows = flows;
    plan.config = config;
    plan.noise = factorize_noise(cov);
    detail::finalize_plan(plan);
    return plan;
}

namespace detail {

/// Integrates a single path into buf, laid out step-major: buf[k*n + i] is
/// bank i at grid point k. Normal draws are consumed in (step, factor index)
/// order; the factor form draws N idiosyncratic deviates then the common one.
inline void integrate_path(const SimPlan& plan, std::uint64_t seed, std::size_t path_index,
                           double* buf, Vec& xi, Vec& acc) {
    const std::size_t n = plan.n_banks();
    const std::size_t steps = plan.config.n_steps;
    const double dt = plan.dt();
    const double sqrt_dt = std::sqrt(dt);
    const double inv_n = 1.0 / static_cast<double>(n);
    const Vec& h_star = plan.controls.policy.h_star;
    const bool modulated = plan.flows.modulation.kind == ModulationKind::norm_dependent;

    NormalRng rng(seed);
    for (std::size_t i = 0; i < n; ++i) buf[i] = plan.config.y0[i];

    for (std::size_t k = 0; k < steps; ++k) {
        const double* y = buf + k * n;
        double* next = buf + (k + 1) * n;

        double f = 1.0;
        if (plan.has_flows && modulated) {
            double m = 0.0;
            for (std::size_t i = 0; i < n; ++i) m += y[i];
            m *= inv_n;
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double d = y[i] - m;
                s += d * d;
            }
            f = plan.flows.modulation.factor(std::sqrt(s));
        }

        for (std::size_t i = 0; i < n; ++i) next[i] = h_star[i];
        if (plan.has_flows) {
            const double scale = f * inv_n;
            if (plan.homogeneous_flows) {
                double sum = 0.0;
                for (std::size_t i = 0; i < n; ++i) sum += y[i];
                const double cf = plan.homog_c * scale;
                for (std::size_t i = 0; i < n; ++i)
                    next[i] += cf * (sum - static_cast<double>(n) * y[i]);
            } else {
                for (std::size_t i = 0; i < n; ++i) acc[i] = 0.0;
                for (const auto& e : plan.edges) {
                    const double t = e.c * (y[e.j] - y[e.i]);
                    acc[e.i] += t;
                    acc[e.j] -= t;
                }
                for (std::size_t i = 0; i < n; ++i) next[i] += scale * acc[i];
            }
        }

        bool finite = true;
        if (plan.factor_noise) {
            for (std::size_t i = 0; i < n; ++i) xi[i] = rng.normal();
            const double common = rng.normal();
            for (std::size_t i = 0; i < n; ++i) {
                const double noise = plan.idio_scaled[i] * xi[i] + plan.common_scaled[i] * common;
                next[i] = y[i] + next[i] * dt + noise * sqrt_dt;
                finite &= std::isfinite(next[i]);
            }
        } else if (plan.diagonal_loading) {
            for (std::size_t i = 0; i < n; ++i) xi[i] = rng.normal();
            for (std::size_t i = 0; i < n; ++i) {
                next[i] = y[i] + next[i] * dt + plan.loading_scaled(i, i) * xi[i] * sqrt_dt;
                finite &= std::isfinite(next[i]);
            }
        } else {
            for (std::size_t i = 0; i < n; ++i) xi[i] = rng.normal();
            for (std::size_t i = 0; i < n; ++i) {
                double noise = 0.0;
                for (std::size_t k2 = 0; k2 <= i; ++k2) noise += plan.loading_scaled(i, k2) * xi[k2];
                next[i] = y[i] + next[i] * dt + noise * sqrt_dt;
                finite &= std::isfinite(next[i]);
            }
        }
        if (!finite)
            throw NumericError("simulate: non-finite state at path " + std::to_string(path_index) +
                               ", step " + std::to_string(k + 1));
    }
}

inline int resolve_threads(int threads) {
    if (threads > 0) return threads;
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

} // namespace detail

inline Vec time_grid(const SimulationConfig& config) {
    Vec t(config.n_steps + 1);
    for (std::size_t k = 0; k <= config.n_steps; ++k)
        t[k] = config.horizon * static_cast<double>(k) / static_cast<double>(config.n_steps);
    return t;
}

/// Runs every path of the plan and hands each finished path to the visitor as
/// visit(path_index, seed, times, buf) where buf is the step-major path data.
/// Paths are split over threads in contiguous blocks; each path owns its RNG
/// stream, so results do not depend on the thread count. The visitor is
/// invoked concurrently for distinct paths and must tolerate that.
template <class Visitor>
void simulate_visit(const SimPlan& plan, Visitor&& visit, int threads = 0) {
    const std::size_t n_paths = plan.config.n_paths;
    const std::size_t n = plan.n_banks();
    const Vec times = time_grid(plan.config);
    const int n_threads = std::min<int>(detail::resolve_threads(threads),
                                        static_cast<int>(n_paths));

    std::mutex err_mutex;
    std::exception_ptr error;

    auto worker = [&](std::size_t begin, std::size_t end) {
        std::vector<double> buf((plan.config.n_steps + 1) * n);
        Vec xi(n + 1), acc(n);
        try {
            for (std::size_t p = begin; p < end; ++p) {
                const std::uint64_t seed = path_seed(plan.config.base_seed, p);
                detail::integrate_path(plan, seed, p, buf.data(), xi, acc);
                visit(p, seed, times, buf.data());
            }
        } catch (...) {
            std::lock_guard<std::mutex> lock(err_mutex);
            if (!error) error = std::current_exception();
        }
    };

    if (n_threads <= 1) {
        worker(0, n_paths);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n_threads);
        for (int t = 0; t < n_threads; ++t) {
            const std::size_t begin = n_paths * static_cast<std::size_t>(t) / n_threads;
            const std::size_t end = n_paths * static_cast<std::size_t>(t + 1) / n_threads;
            pool.emplace_back(worker, begin, end);
        }
        for (auto& th : pool) th.join();
    }
    if (error) std::rethrow_exception(error);
}

/// Simulated log-wealth trajectories, path-major: y(p, k, i) is bank i of
/// path p at grid point k.
struct PathEnsemble {
    Vec times;
    std::size_t n_paths = 0;
    std::size_t n_steps = 0;
    std::size_t n_banks = 0;
    std::vector<double> data;
    std::vector<std::uint64_t> seeds;
    std::uint64_t meta = 0; // fingerprint of the generating plan

    double y(std::size_t p, std::size_t k, std::size_t i) const {
        return data[(p * (n_steps + 1) + k) * n_banks + i];
    }
    const double* path(std::size_t p) const { return data.data() + p * (n_steps + 1) * n_banks; }
};

inline PathEnsemble simulate(const SimPlan& plan, int threads = 0) {
    PathEnsemble ens;
    ens.times = time_grid(plan.config);
    ens.n_paths = plan.config.n_paths;
    ens.n_steps = plan.config.n_steps;
    ens.n_banks = plan.n_banks();
    ens.data.resize(ens.n_paths * (ens.n_steps + 1) * ens.n_banks);
    ens.seeds.resize(ens.n_paths);
    ens.meta = plan.fingerprint;
    const std::size_t stride = (ens.n_steps + 1) * ens.n_banks;
    simulate_visit(
        plan,
        [&](std::size_t p, std::uint64_t seed, const Vec&, const double* buf) {
            ens.seeds[p] = seed;
            std::copy(buf, buf + stride, ens.data.begin() + p * stride);
        },
        threads);
    return ens;
}

inline PathEnsemble simulate(const BankParams& params, const CovarianceMatrix& cov,
                             const FlowRateMatrix& flows, const SimulationConfig& config,
                             int threads = 0) {
    return simulate(make_plan(params, cov, flows, config), threads);
}

inline PathEnsemble simulate(const BankParams& params, const CorrelationStructure& corr,
                             const FlowRateMatrix& flows, const SimulationConfig& config,
                             int threads = 0) {
    return simulate(make_plan(params, corr, flows, config), threads);
}

/// Mean across banks per grid point, path-major: result[p * (n_steps+1) + k].
inline std::vector<double> mean_process(const PathEnsemble& ens) {
    std::vector<double> out(ens.n_paths * (ens.n_steps + 1));
    const double inv_n = 1.0 / static_cast<double>(ens.n_banks);
    for (std::size_t p = 0; p < ens.n_paths; ++p)
        for (std::size_t k = 0; k <= ens.n_steps; ++k) {
            double s = 0.0;
            for (std::size_t i = 0; i < ens.n_banks; ++i) s += ens.y(p, k, i);
            out[p * (ens.n_steps + 1) + k] = s * inv_n;
        }
    return out;
}

/// Deviations from the cross-sectional mean, same layout as ens.data.
inline std::vector<double> centered_paths(const PathEnsemble& ens) {
    std::vector<double> out(ens.data.size());
    const double inv_n = 1.0 / static_cast<double>(ens.n_banks);
    for (std::size_t p = 0; p < ens.n_paths; ++p)
        for (std::size_t k = 0; k <= ens.n_steps; ++k) {
            double s = 0.0;
            for (std::size_t i = 0; i < ens.n_banks; ++i) s += ens.y(p, k, i);
            const double m = s * inv_n;
            const std::size_t base = (p * (ens.n_steps + 1) + k) * ens.n_banks;
            for (std::size_t i = 0; i < ens.n_banks; ++i) out[base + i] = ens.data[base + i] - m;
        }
    return out;
}

} // namespace sysrisk
