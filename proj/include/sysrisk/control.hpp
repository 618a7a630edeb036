#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "sysrisk/errors.hpp"
#include "sysrisk/linalg.hpp"
#include "sysrisk/model.hpp"

namespace sysrisk {

/// Per-unit-time log-wealth growth of one bank at leverage alpha and rate r:
/// (1+alpha) mu - (sigma^2/2)(1+alpha)^2 - r max(alpha, 0).
inline double h_of(double alpha, double r, double mu, double sigma) {
    const double x = 1.0 + alpha;
    return x * mu - 0.5 * sigma * sigma * x * x - r * std::max(alpha, 0.0);
}

enum class Regime { borrowing, own_capital_only, cash_reserve };

inline std::string to_string(Regime r) {
    switch (r) {
        case Regime::borrowing: return "borrowing";
        case Regime::own_capital_only: return "own_capital_only";
        case Regime::cash_reserve: return "cash_reserve";
    }
    return "?";
}

struct AlphaChoice {
    double alpha_star = 0.0;
    double h_star = 0.0;
    Regime regime = Regime::own_capital_only;
};

/// Closed-form maximizer of h_of over alpha. Three regimes: an unprofitable
/// portfolio (mu <= sigma^2) gets a cash reserve, a cheap-enough rate
/// (r < mu - sigma^2) triggers borrowing, otherwise the bank invests only its
/// own capital.
inline AlphaChoice optimal_alpha(double mu, double sigma, double r) {
    const double s2 = sigma * sigma;
    if (mu <= s2) {
        return {mu / s2 - 1.0, mu * mu / (2.0 * s2), Regime::cash_reserve};
    }
    if (r < mu - s2) {
        const double d = mu - r;
        return {d / s2 - 1.0, r + d * d / (2.0 * s2), Regime::borrowing};
    }
    return {0.0, mu - 0.5 * s2, Regime::own_capital_only};
}

struct BankPolicy {
    Vec alpha_star;
    Vec h_star;
    std::vector<Regime> regime;

    std::size_t size() const { return alpha_star.size(); }
};

/// Elementwise optimal leverage. Does not take a flow matrix: the optimal
/// controls are independent of the interbank flows.
inline BankPolicy bank_policies(const BankParams& params, double r) {
    BankPolicy p;
    const std::size_t n = params.size();
    p.alpha_star.resize(n);
    p.h_star.resize(n);
    p.regime.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const AlphaChoice c = optimal_alpha(params.mu[i], params.sigma[i], r);
        p.alpha_star[i] = c.alpha_star;
        p.h_star[i] = c.h_star;
        p.regime[i] = c.regime;
    }
    return p;
}

/// Drift of the mean process contributed by one bank, as a function of the
/// rate. Equals the optimal h for that bank.
inline double g_i(double r, double mu, double sigma) {
    const double s2 = sigma * sigma;
    if (mu <= s2) return mu * mu / (2.0 * s2);
    if (r <= mu - s2) {
        const double d = mu - r;
        return d * d / (2.0 * s2) + r;
    }
    return mu - 0.5 * s2;
}

/// Diffusion loading of one bank: 1 + alpha_star.
inline double rho_i(double r, double mu, double sigma) {
    const double s2 = sigma * sigma;
    if (mu <= s2) return mu / s2;
    if (r <= mu - s2) return (mu - r) / s2;
    return 1.0;
}

struct SystemMoments {
    double g = 0.0;    // drift of the mean process
    double rho2 = 0.0; // its squared diffusion
};

/// g(r) = (1/N) sum g_i;  rho^2(r) = (1/N^2) sum_ij a_ij rho_i rho_j.
inline SystemMoments system_moments(const BankParams& params, const CovarianceMatrix& cov, double r) {
    const std::size_t n = params.size();
    double g = 0.0;
    Vec rho(n);
    for (std::size_t i = 0; i < n; ++i) {
        g += g_i(r, params.mu[i], params.sigma[i]);
        rho[i] = rho_i(r, params.mu[i], params.sigma[i]);
    }
    g /= static_cast<double>(n);
    const double rho2 = quad_form(cov.a, rho) / (static_cast<double>(n) * static_cast<double>(n));
    return {g, rho2};
}

/// Central-bank objective w(r, lambda) = g(r) - (lambda/2) rho^2(r).
inline double central_objective(const BankParams& params, const CovarianceMatrix& cov, double r,
                                double lambda) {
    const SystemMoments m = system_moments(params, cov, r);
    return m.g - 0.5 * lambda * m.rho2;
}

struct EffectiveMoments {
    Vec mu_star; // h_i(alpha_i*, r)
    Mat a_star;  // (1+alpha_i*)(1+alpha_j*) a_ij
};

/// Drift and covariance of the optimally controlled log-wealth noise. The
/// covariance is the symmetric sandwich D A D with D = diag(1 + alpha*),
/// which is the covariance induced by the noise terms sigma_i (1+alpha_i*) dW_i.
inline EffectiveMoments effective_moments(const BankParams& params, const CovarianceMatrix& cov,
                                          const BankPolicy& policy) {
    const std::size_t n = params.size();
    EffectiveMoments em;
    em.mu_star = policy.h_star;
    em.a_star = Mat(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        const double li = 1.0 + policy.alpha_star[i];
        for (std::size_t j = i; j < n; ++j) {
            const double v = li * (1.0 + policy.alpha_star[j]) * cov.a(i, j);
            em.a_star(i, j) = v;
            em.a_star(j, i) = v;
        }
    }
    return em;
}

struct PolicyResult {
    double r_star = 0.0;
    double w_star = 0.0;
    std::vector<std::array<double, 4>> curve; // rows (r, w, g, rho2)
    bool liquidity_trap = false;
    Vec breakpoints; // sorted distinct (mu_i - sigma_i^2)_+
};

namespace detail {

/// Quadratic coefficients (w0 + w1 r + w2 r^2) of w on an interval where the
/// set of borrowing banks is fixed; `borrowing[i]` marks banks with
/// r < mu_i - sigma_i^2 throughout the interval.
struct ObjectiveQuadratic {
    double w0 = 0.0, w1 = 0.0, w2 = 0.0;
};

inline ObjectiveQuadratic objective_quadratic(const BankParams& params, const CovarianceMatrix& cov,
                                              double lambda, const std::vector<bool>& borrowing) {
    const std::size_t n = params.size();
    const double dn = static_cast<double>(n);
    double g0 = 0.0, g1 = 0.0, g2 = 0.0;
    Vec u(n), v(n); // rho_i(r) = u_i + v_i r on the interval
    for (std::size_t i = 0; i < n; ++i) {
        const double mu = params.mu[i];
        const double s2 = params.sigma[i] * params.sigma[i];
        if (borrowing[i]) {
            g0 += mu * mu / (2.0 * s2);
            g1 += 1.0 - mu / s2;
            g2 += 1.0 / (2.0 * s2);
            u[i] = mu / s2;
            v[i] = -1.0 / s2;
        } else {
            g0 += (mu <= s2) ? mu * mu / (2.0 * s2) : mu - 0.5 * s2;
            u[i] = (mu <= s2) ? mu / s2 : 1.0;
            v[i] = 0.0;
        }
    }
    double uau = 0.0, uav = 0.0, vav = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double au = 0.0, av = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            au += cov.a(i, j) * u[j];
            av += cov.a(i, j) * v[j];
        }
        uau += u[i] * au;
        uav += u[i] * av;
        vav += v[i] * av;
    }
    const double k = 0.5 * lambda / (dn * dn);
    ObjectiveQuadratic q;
    q.w0 = g0 / dn - k * uau;
    q.w1 = g1 / dn - k * 2.0 * uav;
    q.w2 = g2 / dn - k * vav;
    return q;
}

} // namespace detail

/// Exact maximizer of w over r >= 0. w is piecewise quadratic between the
/// breakpoints (mu_i - sigma_i^2)_+ and constant beyond the largest one, so
/// the candidates are the interval endpoints plus interior quadratic vertices.
/// Plateau ties resolve to the smallest maximizing r.
inline PolicyResult optimal_rate(const BankParams& params, const CovarianceMatrix& cov, double lambda,
                                 std::size_t curve_samples = 512) {
    params.validate();
    if (!(lambda >= 0.0)) throw ValidationError("rate.lambda: must be >= 0");
    curve_samples = std::max<std::size_t>(curve_samples, 2);
    const std::size_t n = params.size();

    Vec breakpoints;
    double r_max = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double b = std::max(params.mu[i] - params.sigma[i] * params.sigma[i], 0.0);
        breakpoints.push_back(b);
        r_max = std::max(r_max, b);
    }
    std::sort(breakpoints.begin(), breakpoints.end());
    breakpoints.erase(std::unique(breakpoints.begin(), breakpoints.end()), breakpoints.end());

    PolicyResult res;
    res.breakpoints = breakpoints;
    res.liquidity_trap = (r_max == 0.0);

    constexpr double kTieTol = 1e-12;
    double best_r = 0.0;
    double best_w = central_objective(params, cov, 0.0, lambda);

    if (!res.liquidity_trap) {
        Vec knots = breakpoints;
        if (knots.empty() || knots.front() > 0.0) knots.insert(knots.begin(), 0.0);
        const auto consider = [&](double r) {
            const double w = central_objective(params, cov, r, lambda);
            if (w > best_w + kTieTol) {
                best_w = w;
                best_r = r;
            }
        };
        for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
            const double a = knots[k];
            const double b = knots[k + 1];
            const double mid = 0.5 * (a + b);
            std::vector<bool> borrowing(n);
            for (std::size_t i = 0; i < n; ++i)
                borrowing[i] = mid < params.mu[i] - params.sigma[i] * params.sigma[i];
            const auto q = detail::objective_quadratic(params, cov, lambda, borrowing);
            consider(a);
            if (q.w2 < 0.0) {
                const double vertex = -q.w1 / (2.0 * q.w2);
                if (vertex > a + kTieTol && vertex < b - kTieTol) consider(vertex);
            }
            consider(b);
        }
    }

    res.r_star = best_r;
    res.w_star = best_w;

    // Sampled objective curve over [0, r_max + 0.05], including the
    // breakpoints and the maximizer itself.
    const double r_hi = r_max + 0.05;
    Vec grid;
    grid.reserve(curve_samples + breakpoints.size() + 1);
    for (std::size_t k = 0; k < curve_samples; ++k)
        grid.push_back(r_hi * static_cast<double>(k) / static_cast<double>(curve_samples - 1));
    grid.insert(grid.end(), breakpoints.begin(), breakpoints.end());
    grid.push_back(best_r);
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    for (double r : grid) {
        const SystemMoments m = system_moments(params, cov, r);
        res.curve.push_back({r, m.g - 0.5 * lambda * m.rho2, m.g, m.rho2});
    }
    return res;
}

/// Resolved controls for a simulation: the rate (fixed or optimal for the
/// configured lambda), the per-bank policy and the effective moments.
struct ResolvedControls {
    double r = 0.0;
    BankPolicy policy;
    EffectiveMoments effective;
};

inline ResolvedControls resolve_controls(const BankParams& params, const CovarianceMatrix& cov,
                                         const RateSpec& rate) {
    rate.validate();
    ResolvedControls rc;
    rc.r = (rate.kind == RateKind::fixed) ? rate.fixed_r : optimal_rate(params, cov, rate.lambda).r_star;
    rc.policy = bank_policies(params, rc.r);
    rc.effective = effective_moments(params, cov, rc.policy);
    return rc;
}

} // namespace sysrisk
