#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <queue>
#include <string>
#include <vector>

#include "sysrisk/control.hpp"
#include "sysrisk/dynamics.hpp"
#include "sysrisk/errors.hpp"
#include "sysrisk/linalg.hpp"
#include "sysrisk/model.hpp"

namespace sysrisk {

/// Symmetric zero-row-sum generator built from the flow rates:
/// m_ij = c_ij off the diagonal, m_ii = -sum_{k != i} c_ik.
struct GeneratorMatrix {
    Mat m;
    std::size_t size() const { return m.rows(); }
};

inline GeneratorMatrix build_generator(const FlowRateMatrix& flows) {
    const std::size_t n = flows.size();
    Mat m(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            m(i, j) = flows.c(i, j);
            row += flows.c(i, j);
        }
        m(i, i) = -row;
    }
    return {std::move(m)};
}

struct Connectivity {
    bool connected = false;
    std::vector<std::vector<std::size_t>> components; // sorted vertex lists
};

/// Components of the graph with edges {i, j : c_ij > 0}, by breadth-first
/// traversal.
inline Connectivity connectivity(const FlowRateMatrix& flows) {
    const std::size_t n = flows.size();
    Connectivity out;
    std::vector<bool> seen(n, false);
    for (std::size_t s = 0; s < n; ++s) {
        if (seen[s]) continue;
        std::vector<std::size_t> comp;
        std::queue<std::size_t> q;
        q.push(s);
        seen[s] = true;
        while (!q.empty()) {
            const std::size_t v = q.front();
            q.pop();
            comp.push_back(v);
            for (std::size_t w = 0; w < n; ++w) {
                if (!seen[w] && flows.c(v, w) > 0.0) {
                    seen[w] = true;
                    q.push(w);
                }
            }
        }
        std::sort(comp.begin(), comp.end());
        out.components.push_back(std::move(comp));
    }
    out.connected = out.components.size() == 1;
    return out;
}

namespace detail {

// |lambda| <= 1e-9 * max|lambda| counts as a zero eigenvalue.
inline std::vector<bool> zero_eigen_flags(const Vec& values) {
    double max_abs_v = 0.0;
    for (double v : values) max_abs_v = std::max(max_abs_v, std::abs(v));
    const double tol = 1e-9 * max_abs_v;
    std::vector<bool> zero(values.size());
    for (std::size_t k = 0; k < values.size(); ++k) zero[k] = std::abs(values[k]) <= tol;
    return zero;
}

} // namespace detail

/// c(M): the smallest |eigenvalue| over the spectrum orthogonal to the
/// all-ones direction; 0 when the flow graph is disconnected (the zero
/// eigenvalue has multiplicity above one).
inline double spectral_gap(const GeneratorMatrix& gen) {
    const std::size_t n = gen.size();
    if (n <= 1) return 0.0;
    const EigenSym eig = jacobi_eigen(gen.m);
    const auto zero = detail::zero_eigen_flags(eig.values);
    std::size_t zeros = 0;
    for (bool z : zero) zeros += z ? 1 : 0;
    if (zeros != 1) return 0.0;
    double gap = 0.0;
    bool found = false;
    for (std::size_t k = 0; k < n; ++k) {
        if (zero[k]) continue;
        const double a = std::abs(eig.values[k]);
        if (!found || a < gap) {
            gap = a;
            found = true;
        }
    }
    return found ? gap : 0.0;
}

struct CenteredMoments {
    Vec mu_tilde; // V mu*, i.e. mu*_i minus the cross-sectional mean
    Mat a_tilde;  // V A* V, annihilated by the all-ones vector
};

inline CenteredMoments centered_moments(const EffectiveMoments& eff) {
    const std::size_t n = eff.mu_star.size();
    CenteredMoments cm;
    cm.mu_tilde.resize(n);
    const double mu_bar = mean(eff.mu_star);
    for (std::size_t i = 0; i < n; ++i) cm.mu_tilde[i] = eff.mu_star[i] - mu_bar;

    Vec row_mean(n, 0.0);
    double grand = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += eff.a_star(i, j);
        row_mean[i] = s / static_cast<double>(n);
        grand += s;
    }
    grand /= static_cast<double>(n) * static_cast<double>(n);
    cm.a_tilde = Mat(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) {
            const double v = eff.a_star(i, j) - row_mean[i] - row_mean[j] + grand;
            cm.a_tilde(i, j) = v;
            cm.a_tilde(j, i) = v;
        }
    return cm;
}

/// Stationary covariance of the centered process: the solution on the zero-sum
/// hyperplane of B S + S B' + A_tilde = 0 with B = M/N, assembled in the
/// eigenbasis of M. Requires a connected flow graph.
inline Mat stationary_covariance(const GeneratorMatrix& gen, const Mat& a_tilde) {
    const std::size_t n = gen.size();
    if (n < 2) throw ValidationError("stationary_covariance: need at least two banks");
    const EigenSym eig = jacobi_eigen(gen.m);
    const auto zero = detail::zero_eigen_flags(eig.values);
    std::size_t zeros = 0;
    for (bool z : zero) zeros += z ? 1 : 0;
    if (zeros != 1)
        throw ValidationError(
            "stationary_covariance: no unique stationary distribution (flow graph disconnected)");

    const Mat qt_a = mat_mul(transpose(eig.vectors), mat_mul(a_tilde, eig.vectors));
    Mat s(n, n, 0.0);
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t l = 0; l < n; ++l) {
            if (zero[k] || zero[l]) continue;
            s(k, l) = qt_a(k, l) * static_cast<double>(n) / (-(eig.values[k] + eig.values[l]));
        }
    return mat_mul(eig.vectors, mat_mul(s, transpose(eig.vectors)));
}

/// Stationary mean of the centered process: the solution on the hyperplane of
/// (M/N) mu + mu_tilde = 0, via the pseudo-inverse in the eigenbasis.
inline Vec stationary_mean(const GeneratorMatrix& gen, const Vec& mu_tilde) {
    const std::size_t n = gen.size();
    const EigenSym eig = jacobi_eigen(gen.m);
    const auto zero = detail::zero_eigen_flags(eig.values);
    Vec out(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        if (zero[k]) continue;
        double proj = 0.0;
        for (std::size_t i = 0; i < n; ++i) proj += eig.vectors(i, k) * mu_tilde[i];
        const double coef = proj * (-static_cast<double>(n) / eig.values[k]);
        for (std::size_t i = 0; i < n; ++i) out[i] += coef * eig.vectors(i, k);
    }
    return out;
}

enum class FunctionalKind { indicator_first_le, bounded_norm_sq };

/// Bounded test functional for the ergodic time-average check.
struct TestFunctional {
    FunctionalKind kind = FunctionalKind::indicator_first_le;
    double param = 0.0; // threshold q, or cap K

    static TestFunctional indicator(double q) { return {FunctionalKind::indicator_first_le, q}; }
    static TestFunctional bounded_norm_sq(double cap) {
        return {FunctionalKind::bounded_norm_sq, cap};
    }

    std::string name() const {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%g", param);
        if (kind == FunctionalKind::indicator_first_le)
            return std::string("indicator_y1_le_") + buf;
        return std::string("min_norm2_") + buf;
    }

    double operator()(const double* y_tilde, std::size_t n) const {
        if (kind == FunctionalKind::indicator_first_le)
            return y_tilde[0] <= param ? 1.0 : 0.0;
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += y_tilde[i] * y_tilde[i];
        return std::min(s, param);
    }

    /// Expectation under the Gaussian stationary law N(mu, sigma). The cap of
    /// the bounded quadratic is ignored, which is negligible whenever the cap
    /// sits far in the tail.
    double stationary_expectation(const Vec& mu, const Mat& sigma) const {
        if (kind == FunctionalKind::indicator_first_le) {
            const double sd = std::sqrt(std::max(sigma(0, 0), 0.0));
            if (sd == 0.0) return mu[0] <= param ? 1.0 : 0.0;
            return norm_cdf((param - mu[0]) / sd);
        }
        double tr = 0.0;
        for (std::size_t i = 0; i < sigma.rows(); ++i) tr += sigma(i, i);
        return tr + dot(mu, mu);
    }
};

struct ErgodicCheck {
    double time_average = 0.0;
    double stationary_value = 0.0;
    double abs_error = 0.0;
};

/// Compares the trapezoidal time average of f over the centered paths (after
/// burn-in, pooled across the ensemble) with the Gaussian stationary
/// expectation.
inline ErgodicCheck ergodic_check(const PathEnsemble& ens, const Mat& sigma, const Vec& stat_mean,
                                  const TestFunctional& f, double burn_in = 0.0) {
    const std::size_t n = ens.n_banks;
    const std::size_t m = ens.n_steps;
    Vec y_tilde(n);
    double total = 0.0;
    double weight_total = 0.0;
    for (std::size_t p = 0; p < ens.n_paths; ++p) {
        for (std::size_t k = 0; k <= m; ++k) {
            const double t = ens.times[k];
            if (t < burn_in) continue;
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s += ens.y(p, k, i);
            const double mean_k = s / static_cast<double>(n);
            for (std::size_t i = 0; i < n; ++i) y_tilde[i] = ens.y(p, k, i) - mean_k;
            const bool interior = (k > 0 && k < m) && (ens.times[k - 1] >= burn_in);
            const double w = interior ? 1.0 : 0.5;
            total += w * f(y_tilde.data(), n);
            weight_total += w;
        }
    }
    ErgodicCheck out;
    out.time_average = total / weight_total;
    out.stationary_value = f.stationary_expectation(stat_mean, sigma);
    out.abs_error = std::abs(out.time_average - out.stationary_value);
    return out;
}

/// Lyapunov drift certificate for the centered process. With c0 = c(M)/N and
/// a0 the top eigenvalue of A_tilde, the drift test function V = exp(l|x|^2/2)
/// with l = c0/a0 satisfies LV <= K(x) V where
///   K(x) = l mu_tilde . x - (c0^2 / 2 a0^2) |x|^2 + (l/2) tr(A_tilde),
/// so K <= -c1 outside the ball of radius c2. c2 is placed at margin theta
/// past the largest zero of the sphere-maximum of K, and c3 bounds
/// max(K + c1) V inside the ball.
struct LyapunovCertificate {
    double lambda = 0.0;
    double c1 = 0.0;
    double c2 = 0.0;
    double c3 = 0.0;
    double c0 = 0.0;
    double a0 = 0.0;
};

inline LyapunovCertificate lyapunov_drift_certificate(const GeneratorMatrix& gen, const Mat& a_tilde,
                                                      const Vec& mu_tilde, double theta = 0.5) {
    if (!(theta > 0.0 && theta < 1.0))
        throw ValidationError("lyapunov_drift_certificate: theta must be in (0, 1)");
    const double gap = spectral_gap(gen);
    if (gap <= 0.0)
        throw ValidationError("lyapunov_drift_certificate: flow graph must be connected");
    const std::size_t n = gen.size();
    LyapunovCertificate cert;
    cert.c0 = gap / static_cast<double>(n);
    const EigenSym eig = jacobi_eigen(a_tilde);
    cert.a0 = eig.values.back();
    if (!(cert.a0 > 0.0))
        throw NumericError("lyapunov_drift_certificate: degenerate centered covariance");
    cert.lambda = cert.c0 / cert.a0;

    const double q = cert.c0 * cert.c0 / (2.0 * cert.a0 * cert.a0);
    double trace = 0.0;
    for (std::size_t i = 0; i < n; ++i) trace += a_tilde(i, i);
    const double constant = 0.5 * cert.lambda * trace;
    const double lin = cert.lambda * norm2(mu_tilde); // max of l mu_tilde . x on the unit sphere

    // Largest zero of the sphere maximum -q r^2 + lin r + constant.
    const double r0 = (lin + std::sqrt(lin * lin + 4.0 * q * constant)) / (2.0 * q);
    cert.c2 = r0 / std::sqrt(1.0 - theta);
    cert.c1 = q * cert.c2 * cert.c2 - lin * cert.c2 - constant;

    const auto sphere_max_k = [&](double r) { return -q * r * r + lin * r + constant; };
    double c3 = 0.0;
    constexpr int kGrid = 2048;
    for (int k = 0; k <= kGrid; ++k) {
        const double r = cert.c2 * static_cast<double>(k) / kGrid;
        const double v = (sphere_max_k(r) + cert.c1) * std::exp(0.5 * cert.lambda * r * r);
        c3 = std::max(c3, v);
    }
    cert.c3 = c3;
    return cert;
}

struct DivergenceDiagnostic {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
};

/// Regression of the cross-replication variance of (group-1 mean minus
/// group-2 mean) on time. A positive slope with high R^2 is the signature of
/// a disconnected flow graph: the two groups drift apart like Brownian
/// motions.
inline DivergenceDiagnostic group_divergence(const PathEnsemble& ens,
                                             const std::vector<std::size_t>& group1,
                                             const std::vector<std::size_t>& group2) {
    if (group1.empty() || group2.empty())
        throw ValidationError("group_divergence: groups must be nonempty");
    if (ens.n_paths < 2)
        throw ValidationError("group_divergence: need at least two replications");
    const std::size_t m = ens.n_steps;
    Vec var(m + 1, 0.0);
    Vec diffs(ens.n_paths);
    for (std::size_t k = 0; k <= m; ++k) {
        for (std::size_t p = 0; p < ens.n_paths; ++p) {
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t i : group1) m1 += ens.y(p, k, i);
            for (std::size_t i : group2) m2 += ens.y(p, k, i);
            diffs[p] = m1 / static_cast<double>(group1.size()) -
                       m2 / static_cast<double>(group2.size());
        }
        const double mu = mean(diffs);
        double s = 0.0;
        for (double d : diffs) s += (d - mu) * (d - mu);
        var[k] = s / static_cast<double>(ens.n_paths - 1);
    }
    const LinearFit fit = linear_fit(ens.times, var);
    return {fit.slope, fit.intercept, fit.r_squared};
}

} // namespace sysrisk
