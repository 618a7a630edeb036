#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sysrisk/errors.hpp"
#include "sysrisk/hashing.hpp"
#include "sysrisk/linalg.hpp"

namespace sysrisk {

/// Per-bank growth rates and volatilities of the risky portfolios.
struct BankParams {
    Vec mu;    // drift per unit time
    Vec sigma; // volatility per sqrt unit time, all > 0

    std::size_t size() const { return mu.size(); }

    void validate() const {
        if (mu.empty()) throw ValidationError("banks: need at least one bank");
        if (mu.size() != sigma.size())
            throw ValidationError("banks: mu and sigma must have equal length");
        for (std::size_t i = 0; i < sigma.size(); ++i) {
            if (!std::isfinite(mu[i]))
                throw ValidationError("banks.mu[" + std::to_string(i) + "]: must be finite");
            if (!(sigma[i] > 0.0) || !std::isfinite(sigma[i]))
                throw ValidationError("banks.sigma[" + std::to_string(i) + "]: must be > 0");
        }
    }

    void hash_into(Hasher& h) const {
        h.add("banks").add_range(mu).add_range(sigma);
    }
};

enum class CorrelationKind { independent, one_factor, identical, explicit_matrix };

inline std::string to_string(CorrelationKind k) {
    switch (k) {
        case CorrelationKind::independent: return "independent";
        case CorrelationKind::one_factor: return "one_factor";
        case CorrelationKind::identical: return "identical";
        case CorrelationKind::explicit_matrix: return "explicit";
    }
    return "?";
}

/// How the portfolio Brownian motions are correlated. one_factor(rho) means
/// pairwise correlation rho between any two banks, realized as loadings
/// sqrt(1-rho) on an idiosyncratic factor and sqrt(rho) on a shared one.
/// independent == one_factor(0), identical == one_factor(1).
struct CorrelationStructure {
    CorrelationKind kind = CorrelationKind::independent;
    double rho_pair = 0.0;
    Mat matrix; // explicit correlation matrix, unit diagonal, PSD

    static CorrelationStructure independent() { return {}; }
    static CorrelationStructure one_factor(double rho) {
        return {CorrelationKind::one_factor, rho, {}};
    }
    static CorrelationStructure identical() { return {CorrelationKind::identical, 1.0, {}}; }
    static CorrelationStructure explicit_matrix(Mat r) {
        return {CorrelationKind::explicit_matrix, 0.0, std::move(r)};
    }

    /// Pairwise correlation used by the factor representation.
    double effective_rho() const {
        switch (kind) {
            case CorrelationKind::independent: return 0.0;
            case CorrelationKind::identical: return 1.0;
            default: return rho_pair;
        }
    }

    void validate(std::size_t n_banks) const {
        if (kind == CorrelationKind::one_factor) {
            if (!(rho_pair >= 0.0 && rho_pair <= 1.0))
                throw ValidationError("correlation.rho_pair: must be in [0, 1]");
        }
        if (kind == CorrelationKind::explicit_matrix) {
            if (!matrix.square() || matrix.rows() != n_banks)
                throw ValidationError("correlation.matrix: must be N x N");
            if (!is_symmetric(matrix, 0.0))
                throw ValidationError("correlation.matrix: must be symmetric");
            for (std::size_t i = 0; i < n_banks; ++i)
                if (matrix(i, i) != 1.0)
                    throw ValidationError("correlation.matrix: diagonal must be 1");
            const EigenSym eig = jacobi_eigen(matrix);
            if (!eig.values.empty() && eig.values.front() < -1e-10)
                throw ValidationError("correlation.matrix: not positive semidefinite (eigenvalue " +
                                      std::to_string(eig.values.front()) + ")");
        }
    }

    void hash_into(Hasher& h) const {
        h.add("correlation").add(to_string(kind)).add(effective_rho());
        if (kind == CorrelationKind::explicit_matrix) h.add_range(matrix.data());
    }
};

/// Covariance A of the driving Brownian motion: a_ij = sigma_i sigma_j R_ij.
struct CovarianceMatrix {
    Mat a;
    std::size_t size() const { return a.rows(); }
};

inline CovarianceMatrix build_covariance(const BankParams& params, const CorrelationStructure& corr) {
    params.validate();
    corr.validate(params.size());
    const std::size_t n = params.size();
    Mat a(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) a(i, i) = params.sigma[i] * params.sigma[i];
    const auto fill_pair = [&](std::size_t i, std::size_t j, double r) {
        const double v = params.sigma[i] * params.sigma[j] * r;
        a(i, j) = v;
        a(j, i) = v; // same value both slots: symmetric to the bit
    };
    switch (corr.kind) {
        case CorrelationKind::independent: break;
        case CorrelationKind::one_factor:
        case CorrelationKind::identical:
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = i + 1; j < n; ++j) fill_pair(i, j, corr.effective_rho());
            break;
        case CorrelationKind::explicit_matrix:
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = i + 1; j < n; ++j) fill_pair(i, j, corr.matrix(i, j));
            break;
    }
    return {std::move(a)};
}

enum class ModulationKind { constant, norm_dependent };

/// Optional state dependence of the flow rates: every c_ij is multiplied by
/// f(centered state) = f_floor + f_scale * min(1, |z|). f_floor > 0 keeps the
/// factor bounded away from zero.
struct FlowModulation {
    ModulationKind kind = ModulationKind::constant;
    double f_floor = 1.0;
    double f_scale = 0.0;

    static FlowModulation constant() { return {}; }
    static FlowModulation norm_dependent(double floor, double scale) {
        return {ModulationKind::norm_dependent, floor, scale};
    }

    double factor(double centered_norm) const {
        if (kind == ModulationKind::constant) return 1.0;
        return f_floor + f_scale * std::min(1.0, centered_norm);
    }

    void validate() const {
        if (kind == ModulationKind::norm_dependent) {
            if (!(f_floor > 0.0)) throw ValidationError("flows.modulation.f_floor: must be > 0");
            if (!(f_scale > 0.0)) throw ValidationError("flows.modulation.f_scale: must be > 0");
        }
    }

    void hash_into(Hasher& h) const {
        h.add(kind == ModulationKind::constant ? "constant" : "norm_dependent");
        h.add(f_floor).add(f_scale);
    }
};

/// Symmetric nonnegative interbank flow rates with zero diagonal.
struct FlowRateMatrix {
    Mat c;
    FlowModulation modulation;

    std::size_t size() const { return c.rows(); }

    void hash_into(Hasher& h) const {
        h.add("flows").add_range(c.data());
        modulation.hash_into(h);
    }
};

inline FlowRateMatrix zero_flows(std::size_t n) { return {Mat(n, n, 0.0), {}}; }

inline FlowRateMatrix constant_flows(std::size_t n, double rate) {
    Mat c(n, n, rate);
    for (std::size_t i = 0; i < n; ++i) c(i, i) = 0.0;
    return {std::move(c), {}};
}

struct FlowBlock {
    std::size_t start = 0; // inclusive
    std::size_t end = 0;   // exclusive
    double value = 0.0;
};

/// Block flow pattern: `value` within each block, `background` for every other
/// off-diagonal pair.
inline FlowRateMatrix block_flows(std::size_t n, const std::vector<FlowBlock>& blocks,
                                  double background) {
    Mat c(n, n, background);
    for (std::size_t i = 0; i < n; ++i) c(i, i) = 0.0;
    for (const auto& b : blocks) {
        if (b.start >= b.end || b.end > n)
            throw ValidationError("flows.blocks: block range out of bounds");
        for (std::size_t i = b.start; i < b.end; ++i)
            for (std::size_t j = b.start; j < b.end; ++j)
                if (i != j) c(i, j) = b.value;
    }
    return {std::move(c), {}};
}

struct FlowViolation {
    std::size_t i = 0;
    std::size_t j = 0;
    std::string message;
};

/// Reports every structural defect of a flow matrix; an empty list means the
/// matrix is symmetric, zero-diagonal and nonnegative. Never throws.
inline std::vector<FlowViolation> validate_flows(const FlowRateMatrix& flows) {
    std::vector<FlowViolation> out;
    const Mat& c = flows.c;
    const std::size_t n = c.rows();
    for (std::size_t i = 0; i < n; ++i) {
        if (c(i, i) != 0.0) out.push_back({i, i, "diagonal entry must be 0"});
        for (std::size_t j = 0; j < n; ++j) {
            if (c(i, j) < 0.0 || !std::isfinite(c(i, j)))
                out.push_back({i, j, "entry must be finite and >= 0"});
            if (j > i && c(i, j) != c(j, i)) out.push_back({i, j, "asymmetric pair"});
        }
    }
    return out;
}

enum class RateKind { fixed, policy };

/// Either a user-fixed central-bank rate or a risk-aversion level lambda for
/// which the optimal rate is computed.
struct RateSpec {
    RateKind kind = RateKind::fixed;
    double fixed_r = 0.0;
    double lambda = 0.0;

    static RateSpec fixed(double r) { return {RateKind::fixed, r, 0.0}; }
    static RateSpec policy(double lambda) { return {RateKind::policy, 0.0, lambda}; }

    void validate() const {
        if (kind == RateKind::fixed && !(fixed_r >= 0.0))
            throw ValidationError("rate.fixed: must be >= 0");
        if (kind == RateKind::policy && !(lambda >= 0.0))
            throw ValidationError("rate.lambda: must be >= 0");
    }

    void hash_into(Hasher& h) const {
        h.add(kind == RateKind::fixed ? "fixed" : "policy").add(fixed_r).add(lambda);
    }
};

struct SimulationConfig {
    double horizon = 1.0;
    std::size_t n_steps = 1000;
    std::size_t n_paths = 1000;
    Vec y0; // length N
    double default_threshold = -1.0;
    std::uint64_t base_seed = 42;
    RateSpec rate;

    void validate(std::size_t n_banks) const {
        if (!(horizon > 0.0)) throw ValidationError("simulation.T: must be > 0");
        if (n_steps < 1) throw ValidationError("simulation.n_steps: must be >= 1");
        if (n_paths < 1) throw ValidationError("simulation.n_paths: must be >= 1");
        if (y0.size() != n_banks)
            throw ValidationError("simulation.y0: length must equal the number of banks");
        if (!std::isfinite(default_threshold))
            throw ValidationError("simulation.default_threshold: must be finite");
        rate.validate();
    }

    void hash_into(Hasher& h) const {
        h.add("simulation")
            .add(horizon)
            .add(static_cast<std::uint64_t>(n_steps))
            .add(static_cast<std::uint64_t>(n_paths))
            .add_range(y0)
            .add(default_threshold)
            .add(base_seed);
        rate.hash_into(h);
    }
};

} // namespace sysrisk
