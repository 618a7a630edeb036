#include <catch2/catch_amalgamated.hpp>

#include "support/oracles.hpp"
#include "sysrisk/control.hpp"
#include "sysrisk/model.hpp"
#include "sysrisk/rng.hpp"

using namespace sysrisk;

namespace {

BankParams banks(Vec mu, Vec sigma) { return {std::move(mu), std::move(sigma)}; }

CovarianceMatrix cov_of(const BankParams& p, const CorrelationStructure& c) {
    return build_covariance(p, c);
}

} // namespace

TEST_CASE("h_of reference values") {
    CHECK(h_of(0.0, 0.3, 0.1, 0.1) == Catch::Approx(0.095).margin(1e-15));
    CHECK(h_of(9.0, 0.0, 0.1, 0.1) == Catch::Approx(0.5).margin(1e-15));
    CHECK(h_of(-1.0, 0.0, 0.1, 0.1) == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("optimal_alpha matches the grid oracle on the worked cases") {
    SECTION("borrowing: mu = sigma = 0.1, r = 0") {
        const AlphaChoice c = optimal_alpha(0.1, 0.1, 0.0);
        CHECK(c.alpha_star == Catch::Approx(9.0).margin(1e-12));
        CHECK(c.h_star == Catch::Approx(0.5).margin(1e-12));
        CHECK(c.regime == Regime::borrowing);
        const auto g = oracles::grid_maximize_h(0.1, 0.1, 0.0, -1.0, 50.0, 1e-4);
        CHECK(std::abs(c.alpha_star - g.arg) <= 1e-3);
        CHECK(c.h_star >= g.value - 1e-12);
        CHECK(std::abs(c.h_star - g.value) <= 1e-8);
    }
    SECTION("cash reserve: mu = 0.05, sigma = 0.3") {
        for (double r : {0.0, 0.1, 0.3}) {
            const AlphaChoice c = optimal_alpha(0.05, 0.3, r);
            CHECK(c.alpha_star == Catch::Approx(0.05 / 0.09 - 1.0).margin(1e-12));
            CHECK(c.h_star == Catch::Approx(0.0025 / 0.18).margin(1e-12));
            CHECK(c.regime == Regime::cash_reserve);
        }
        const auto g = oracles::grid_maximize_h(0.05, 0.3, 0.1, -1.0, 50.0, 1e-4);
        CHECK(std::abs(optimal_alpha(0.05, 0.3, 0.1).h_star - g.value) <= 1e-8);
    }
    SECTION("own capital only: mu = sigma = 0.1, r = 0.2") {
        const AlphaChoice c = optimal_alpha(0.1, 0.1, 0.2);
        CHECK(c.alpha_star == 0.0);
        CHECK(c.h_star == Catch::Approx(0.095).margin(1e-12));
        CHECK(c.regime == Regime::own_capital_only);
        const auto g = oracles::grid_maximize_h(0.1, 0.1, 0.2, -1.0, 50.0, 1e-4);
        CHECK(std::abs(c.h_star - g.value) <= 1e-8);
    }
}

TEST_CASE("optimal_alpha dominates a grid on randomized parameters") {
    NormalRng rng(314159);
    for (int it = 0; it < 1000; ++it) {
        const double mu = 0.01 + 0.49 * rng.uniform();
        const double sigma = 0.01 + 0.49 * rng.uniform();
        const double r = 0.3 * rng.uniform();
        const AlphaChoice c = optimal_alpha(mu, sigma, r);
        const auto g = oracles::grid_maximize_h(mu, sigma, r, -1.0, 50.0, 1e-3);
        CHECK(c.h_star >= g.value - 1e-8);
    }
}

TEST_CASE("alpha regimes: continuity and monotonicity in r") {
    const double mu = 0.15, sigma = 0.2;
    const double boundary = mu - sigma * sigma;
    double prev = 1e300;
    for (int k = 0; k <= 200; ++k) {
        const double r = 0.3 * k / 200.0;
        const AlphaChoice c = optimal_alpha(mu, sigma, r);
        CHECK(c.alpha_star <= prev + 1e-15); // nonincreasing
        prev = c.alpha_star;
    }
    const AlphaChoice below = optimal_alpha(mu, sigma, boundary - 1e-9);
    const AlphaChoice at = optimal_alpha(mu, sigma, boundary);
    CHECK(std::abs(below.alpha_star - at.alpha_star) <= 1e-7);
    CHECK(std::abs(below.h_star - at.h_star) <= 1e-9);
    // exactly at the boundary the bank stops borrowing
    CHECK(at.alpha_star == 0.0);
    CHECK(at.regime == Regime::own_capital_only);
}

TEST_CASE("bank_policies applies the closed form per bank") {
    const BankParams p = banks({0.1, 0.05}, {0.1, 0.3});
    const BankPolicy pol = bank_policies(p, 0.0);
    CHECK(pol.alpha_star[0] == Catch::Approx(9.0).margin(1e-12));
    CHECK(pol.alpha_star[1] == Catch::Approx(-0.44444444444).margin(1e-9));
    CHECK(pol.regime[0] == Regime::borrowing);
    CHECK(pol.regime[1] == Regime::cash_reserve);

    const BankPolicy single = bank_policies(banks({0.02}, {0.2}), 0.0);
    CHECK(single.regime[0] == Regime::cash_reserve);
    CHECK(single.alpha_star[0] == Catch::Approx(-0.5).margin(1e-12));
}

TEST_CASE("g_i and rho_i branch values and continuity") {
    CHECK(g_i(0.0, 0.1, 0.1) == Catch::Approx(0.5).margin(1e-12));
    CHECK(rho_i(0.0, 0.1, 0.1) == Catch::Approx(10.0).margin(1e-12));
    // junction r = mu - sigma^2: both branches meet
    CHECK(g_i(0.09, 0.1, 0.1) == Catch::Approx(0.095).margin(1e-12));
    CHECK(rho_i(0.09, 0.1, 0.1) == Catch::Approx(1.0).margin(1e-12));
    CHECK(g_i(0.09 + 1e-12, 0.1, 0.1) == Catch::Approx(0.095).margin(1e-9));
    // unprofitable bank: constant in r
    for (double r : {0.0, 0.05, 0.2}) {
        CHECK(g_i(r, 0.05, 0.3) == Catch::Approx(0.0025 / 0.18).margin(1e-12));
        CHECK(rho_i(r, 0.05, 0.3) == Catch::Approx(0.05 / 0.09).margin(1e-12));
    }
}

TEST_CASE("g_i equals the optimal h and rho_i equals 1 + alpha*") {
    NormalRng rng(777);
    for (int it = 0; it < 200; ++it) {
        const double mu = 0.01 + 0.4 * rng.uniform();
        const double sigma = 0.05 + 0.4 * rng.uniform();
        const double r = 0.3 * rng.uniform();
        const AlphaChoice c = optimal_alpha(mu, sigma, r);
        CHECK(g_i(r, mu, sigma) == Catch::Approx(c.h_star).margin(1e-14));
        CHECK(rho_i(r, mu, sigma) == Catch::Approx(1.0 + c.alpha_star).margin(1e-12));
    }
}

TEST_CASE("system_moments worked examples") {
    SECTION("single bank") {
        const BankParams p = banks({0.1}, {0.1});
        const auto m = system_moments(p, cov_of(p, CorrelationStructure::independent()), 0.0);
        CHECK(m.g == Catch::Approx(0.5).margin(1e-12));
        CHECK(m.rho2 == Catch::Approx(1.0).margin(1e-12));
    }
    SECTION("two independent identical banks halve the variance") {
        const BankParams p = banks({0.1, 0.1}, {0.1, 0.1});
        const auto m = system_moments(p, cov_of(p, CorrelationStructure::independent()), 0.0);
        CHECK(m.g == Catch::Approx(0.5).margin(1e-12));
        CHECK(m.rho2 == Catch::Approx(0.5).margin(1e-12));
    }
    SECTION("two perfectly correlated banks get no diversification") {
        const BankParams p = banks({0.1, 0.1}, {0.1, 0.1});
        const auto m = system_moments(p, cov_of(p, CorrelationStructure::identical()), 0.0);
        CHECK(m.g == Catch::Approx(0.5).margin(1e-12));
        CHECK(m.rho2 == Catch::Approx(1.0).margin(1e-12));
    }
}

TEST_CASE("g averaged from g_i equals the mean of optimal h across a rate grid") {
    NormalRng rng(31337);
    const std::size_t n = 7;
    Vec mu(n), sigma(n);
    for (std::size_t i = 0; i < n; ++i) {
        mu[i] = 0.05 + 0.3 * rng.uniform();
        sigma[i] = 0.05 + 0.4 * rng.uniform();
    }
    const BankParams p = banks(mu, sigma);
    const auto cov = cov_of(p, CorrelationStructure::one_factor(0.4));
    for (int k = 0; k <= 50; ++k) {
        const double r = 0.5 * k / 50.0;
        const auto m = system_moments(p, cov, r);
        CHECK(m.g == Catch::Approx(mean(bank_policies(p, r).h_star)).margin(1e-13));
        CHECK(m.rho2 >= 0.0);
    }
}

TEST_CASE("central_objective worked examples") {
    const BankParams p = banks({0.1}, {0.1});
    const auto cov = cov_of(p, CorrelationStructure::independent());
    CHECK(central_objective(p, cov, 0.0, 1.0) == Catch::Approx(0.0).margin(1e-12));
    CHECK(central_objective(p, cov, 0.09, 1.0) == Catch::Approx(0.09).margin(1e-12));
    CHECK(central_objective(p, cov, 0.03, 0.0) ==
          Catch::Approx(system_moments(p, cov, 0.03).g).margin(1e-15));
}

TEST_CASE("optimal_rate: single-bank thresholds around lambda* = 9/11") {
    const BankParams p = banks({0.1}, {0.1});
    const auto cov = cov_of(p, CorrelationStructure::independent());
    SECTION("below the threshold the rate stays at zero") {
        const PolicyResult res = optimal_rate(p, cov, 0.5);
        CHECK(res.r_star == 0.0);
        CHECK_FALSE(res.liquidity_trap);
        const auto g = oracles::grid_search_w(p, cov, 0.5, 0.14, 1e-5);
        CHECK(g.value - res.w_star <= 1e-9);
    }
    SECTION("above the threshold the smallest maximizer is mu - sigma^2") {
        const PolicyResult res = optimal_rate(p, cov, 0.9);
        CHECK(res.r_star == Catch::Approx(0.09).margin(1e-12));
        const auto g = oracles::grid_search_w(p, cov, 0.9, 0.14, 1e-5);
        CHECK(g.value - res.w_star <= 1e-9);
    }
    SECTION("breakpoints are the positive parts of mu - sigma^2") {
        const PolicyResult res = optimal_rate(p, cov, 0.5);
        REQUIRE(res.breakpoints.size() == 1);
        CHECK(res.breakpoints[0] == Catch::Approx(0.09).margin(1e-15));
    }
}

TEST_CASE("optimal_rate: liquidity trap when no investment beats its risk") {
    const BankParams p = banks({0.02, 0.05}, {0.2, 0.3});
    const auto cov = cov_of(p, CorrelationStructure::independent());
    const PolicyResult res = optimal_rate(p, cov, 1.0);
    CHECK(res.liquidity_trap);
    CHECK(res.r_star == 0.0);
    double w_min = 1e300, w_max = -1e300;
    for (const auto& row : res.curve) {
        w_min = std::min(w_min, row[1]);
        w_max = std::max(w_max, row[1]);
    }
    CHECK(w_max - w_min <= 1e-12);
}

TEST_CASE("optimal_rate beats a fine grid on random scenarios") {
    NormalRng rng(60660);
    for (int it = 0; it < 30; ++it) {
        const std::size_t n = 1 + static_cast<std::size_t>(rng.uniform() * 6);
        Vec mu(n), sigma(n);
        for (std::size_t i = 0; i < n; ++i) {
            mu[i] = 0.05 + 0.45 * rng.uniform();
            sigma[i] = 0.05 + 0.45 * rng.uniform();
        }
        const BankParams p = banks(mu, sigma);
        const auto cov = cov_of(p, CorrelationStructure::one_factor(rng.uniform()));
        const double lambda = 1.5 * static_cast<double>(n) * rng.uniform();
        const PolicyResult res = optimal_rate(p, cov, lambda);
        double r_max = 0.0;
        for (std::size_t i = 0; i < n; ++i) r_max = std::max(r_max, mu[i] - sigma[i] * sigma[i]);
        const auto g = oracles::grid_search_w(p, cov, lambda, std::max(r_max, 0.0) + 0.05, 1e-4);
        CHECK(g.value - res.w_star <= 1e-9);
        // the reported maximum dominates every sampled curve point
        for (const auto& row : res.curve) CHECK(res.w_star >= row[1] - 1e-9);
        // w is constant past the last breakpoint
        const double w_flat = central_objective(p, cov, std::max(r_max, 0.0), lambda);
        for (double dr : {0.01, 0.1, 1.0})
            CHECK(central_objective(p, cov, std::max(r_max, 0.0) + dr, lambda) ==
                  Catch::Approx(w_flat).margin(1e-13));
    }
}

TEST_CASE("interval quadratic assembly reproduces the objective") {
    // On any interval between breakpoints the objective is an exact quadratic
    // in r; the assembled coefficients must match the direct evaluation.
    NormalRng rng(97531);
    for (int it = 0; it < 20; ++it) {
        const std::size_t n = 2 + static_cast<std::size_t>(rng.uniform() * 8);
        Vec mu(n), sigma(n);
        for (std::size_t i = 0; i < n; ++i) {
            mu[i] = 0.05 + 0.4 * rng.uniform();
            sigma[i] = 0.05 + 0.4 * rng.uniform();
        }
        const BankParams p = banks(mu, sigma);
        const auto cov = cov_of(p, CorrelationStructure::one_factor(rng.uniform()));
        const double lambda = 1.5 * static_cast<double>(n) * rng.uniform();

        Vec knots{0.0};
        for (std::size_t i = 0; i < n; ++i)
            knots.push_back(std::max(mu[i] - sigma[i] * sigma[i], 0.0));
        std::sort(knots.begin(), knots.end());
        knots.erase(std::unique(knots.begin(), knots.end()), knots.end());
        for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
            const double a = knots[k], b = knots[k + 1];
            const double mid = 0.5 * (a + b);
            std::vector<bool> borrowing(n);
            for (std::size_t i = 0; i < n; ++i)
                borrowing[i] = mid < mu[i] - sigma[i] * sigma[i];
            const auto q = detail::objective_quadratic(p, cov, lambda, borrowing);
            for (double frac : {0.25, 0.5, 0.75}) {
                const double r = a + frac * (b - a);
                const double direct = central_objective(p, cov, r, lambda);
                const double assembled = q.w0 + q.w1 * r + q.w2 * r * r;
                CHECK(assembled == Catch::Approx(direct).margin(1e-12));
            }
        }
    }
}

TEST_CASE("optimal rate is nondecreasing in risk aversion") {
    NormalRng rng(424242);
    for (int it = 0; it < 10; ++it) {
        const std::size_t n = 2 + static_cast<std::size_t>(rng.uniform() * 5);
        Vec mu(n), sigma(n);
        for (std::size_t i = 0; i < n; ++i) {
            mu[i] = 0.08 + 0.3 * rng.uniform();
            sigma[i] = 0.05 + 0.3 * rng.uniform();
        }
        const BankParams p = banks(mu, sigma);
        const auto cov = cov_of(p, CorrelationStructure::one_factor(rng.uniform()));
        double prev = -1.0;
        for (int k = 0; k <= 40; ++k) {
            const double lambda = 2.0 * static_cast<double>(n) * k / 40.0;
            const double r = optimal_rate(p, cov, lambda, 2).r_star;
            CHECK(r >= prev - 1e-12);
            prev = r;
        }
    }
}

TEST_CASE("policy and optimal rate are independent of the flow matrix") {
    // No flow argument exists, so independence is structural; pin it down by
    // checking bitwise-equal results from scenarios that differ only in flows.
    const BankParams p = banks({0.1, 0.12, 0.05}, {0.1, 0.15, 0.3});
    const auto cov = cov_of(p, CorrelationStructure::one_factor(0.3));
    const PolicyResult a = optimal_rate(p, cov, 0.7);
    const PolicyResult b = optimal_rate(p, cov, 0.7);
    CHECK(a.r_star == b.r_star);
    CHECK(a.w_star == b.w_star);
    const BankPolicy pa = bank_policies(p, a.r_star);
    const BankPolicy pb = bank_policies(p, b.r_star);
    CHECK(pa.alpha_star == pb.alpha_star);
    CHECK(pa.h_star == pb.h_star);
}

TEST_CASE("effective_moments worked examples") {
    SECTION("single leveraged bank") {
        const BankParams p = banks({0.1}, {0.1});
        const auto cov = cov_of(p, CorrelationStructure::independent());
        const auto em = effective_moments(p, cov, bank_policies(p, 0.0));
        CHECK(em.mu_star[0] == Catch::Approx(0.5).margin(1e-12));
        CHECK(em.a_star(0, 0) == Catch::Approx(1.0).margin(1e-12));
    }
    SECTION("zero leverage is the identity map") {
        const BankParams p = banks({0.1, 0.12}, {0.1, 0.15});
        const auto cov = cov_of(p, CorrelationStructure::one_factor(0.4));
        const auto em = effective_moments(p, cov, bank_policies(p, 0.5)); // high rate: alpha* = 0
        CHECK(max_abs_diff(em.a_star, cov.a) == 0.0);
        for (std::size_t i = 0; i < 2; ++i)
            CHECK(em.mu_star[i] ==
                  Catch::Approx(p.mu[i] - 0.5 * p.sigma[i] * p.sigma[i]).margin(1e-14));
    }
    SECTION("diagonal sandwich") {
        const BankParams p = banks({0.1, 0.1}, {0.1, 0.1});
        const auto cov = cov_of(p, CorrelationStructure::independent());
        BankPolicy pol = bank_policies(p, 0.0);
        pol.alpha_star = {9.0, 0.0};
        const auto em = effective_moments(p, cov, pol);
        CHECK(em.a_star(0, 0) == Catch::Approx(1.0).margin(1e-12));
        CHECK(em.a_star(1, 1) == Catch::Approx(0.01).margin(1e-15));
        CHECK(em.a_star(0, 1) == 0.0);
    }
    SECTION("sandwich keeps symmetry and positive semidefiniteness") {
        const BankParams p = banks({0.2, 0.15, 0.1}, {0.1, 0.12, 0.2});
        const auto cov = cov_of(p, CorrelationStructure::one_factor(0.6));
        const auto em = effective_moments(p, cov, bank_policies(p, 0.0));
        CHECK(is_symmetric(em.a_star, 0.0));
        CHECK(jacobi_eigen(em.a_star).values.front() >= -1e-10);
        // rho2 equals the grand mean of A*: both express the mean-process variance
        const auto m = system_moments(p, cov, 0.0);
        double grand = 0.0;
        for (double v : em.a_star.data()) grand += v;
        CHECK(m.rho2 == Catch::Approx(grand / 9.0).margin(1e-12));
    }
}
