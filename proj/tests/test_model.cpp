#include <catch2/catch_amalgamated.hpp>

#include "sysrisk/linalg.hpp"
#include "sysrisk/model.hpp"
#include "sysrisk/rng.hpp"

using namespace sysrisk;

namespace {

BankParams banks(Vec mu, Vec sigma) { return {std::move(mu), std::move(sigma)}; }

} // namespace

TEST_CASE("build_covariance: independent is diagonal") {
    const auto cov = build_covariance(banks({0.1, 0.1}, {0.1, 0.1}), CorrelationStructure::independent());
    CHECK(cov.a(0, 0) == Catch::Approx(0.01).margin(1e-15));
    CHECK(cov.a(1, 1) == Catch::Approx(0.01).margin(1e-15));
    CHECK(cov.a(0, 1) == 0.0);
    CHECK(cov.a(1, 0) == 0.0);
}

TEST_CASE("build_covariance: one-factor cross term sigma_i sigma_j rho") {
    const auto cov =
        build_covariance(banks({0.1, 0.1}, {0.1, 0.2}), CorrelationStructure::one_factor(0.5));
    CHECK(cov.a(0, 0) == Catch::Approx(0.01).margin(1e-15));
    CHECK(cov.a(1, 1) == Catch::Approx(0.04).margin(1e-15));
    CHECK(cov.a(0, 1) == Catch::Approx(0.01).margin(1e-15));
    CHECK(cov.a(0, 1) == cov.a(1, 0));
}

TEST_CASE("build_covariance: identical portfolios give constant matrix") {
    const auto cov =
        build_covariance(banks({0.1, 0.1, 0.1}, {0.1, 0.1, 0.1}), CorrelationStructure::identical());
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) CHECK(cov.a(i, j) == Catch::Approx(0.01).margin(1e-15));
}

TEST_CASE("build_covariance: limiting one-factor cases match the named kinds bitwise") {
    NormalRng rng(5);
    for (int it = 0; it < 20; ++it) {
        const std::size_t n = 2 + static_cast<std::size_t>(rng.uniform() * 6);
        Vec mu(n), sigma(n);
        for (std::size_t i = 0; i < n; ++i) {
            mu[i] = 0.05 + 0.2 * rng.uniform();
            sigma[i] = 0.05 + 0.3 * rng.uniform();
        }
        const BankParams p = banks(mu, sigma);
        CHECK(build_covariance(p, CorrelationStructure::one_factor(0.0)).a ==
              build_covariance(p, CorrelationStructure::independent()).a);
        CHECK(build_covariance(p, CorrelationStructure::one_factor(1.0)).a ==
              build_covariance(p, CorrelationStructure::identical()).a);
    }
}

TEST_CASE("build_covariance output is symmetric bitwise and PSD within the eigen floor") {
    NormalRng rng(17);
    for (int it = 0; it < 20; ++it) {
        const std::size_t n = 2 + static_cast<std::size_t>(rng.uniform() * 6);
        Vec mu(n), sigma(n);
        for (std::size_t i = 0; i < n; ++i) {
            mu[i] = 0.1;
            sigma[i] = 0.05 + 0.3 * rng.uniform();
        }
        const auto cov = build_covariance(banks(mu, sigma),
                                          CorrelationStructure::one_factor(rng.uniform()));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) CHECK(cov.a(i, j) == cov.a(j, i));
        const EigenSym e = jacobi_eigen(cov.a);
        CHECK(e.values.front() >= -1e-10);
    }
}

TEST_CASE("build_covariance: explicit correlation matrix") {
    Mat r(2, 2);
    r(0, 0) = r(1, 1) = 1.0;
    r(0, 1) = r(1, 0) = -0.3;
    const auto cov =
        build_covariance(banks({0.1, 0.1}, {0.1, 0.2}), CorrelationStructure::explicit_matrix(r));
    CHECK(cov.a(0, 1) == Catch::Approx(-0.006).margin(1e-15));
}

TEST_CASE("build_covariance: non-PSD explicit matrix is rejected") {
    Mat r(3, 3, 1.0); // all ones is PSD, so break it
    r(0, 1) = r(1, 0) = 0.9;
    r(0, 2) = r(2, 0) = 0.9;
    r(1, 2) = r(2, 1) = -0.9; // eigenvalue below -1e-10
    CHECK_THROWS_AS(build_covariance(banks({0.1, 0.1, 0.1}, {0.1, 0.1, 0.1}),
                                     CorrelationStructure::explicit_matrix(r)),
                    ValidationError);
}

TEST_CASE("invalid bank parameters are rejected") {
    CHECK_THROWS_AS(banks({0.1}, {-0.1}).validate(), ValidationError);
    CHECK_THROWS_AS(banks({0.1, 0.2}, {0.1}).validate(), ValidationError);
    CHECK_THROWS_AS(banks({}, {}).validate(), ValidationError);
    CHECK_THROWS_AS(CorrelationStructure::one_factor(1.5).validate(2), ValidationError);
}

TEST_CASE("validate_flows: zero matrix passes") {
    CHECK(validate_flows(zero_flows(4)).empty());
}

TEST_CASE("validate_flows: the block example matrix passes") {
    const FlowRateMatrix f = block_flows(30, {{0, 10, 10.0}}, 0.5);
    CHECK(validate_flows(f).empty());
    CHECK(f.c(0, 9) == 10.0);
    CHECK(f.c(0, 10) == 0.5);
    CHECK(f.c(12, 20) == 0.5);
    for (std::size_t i = 0; i < 30; ++i) CHECK(f.c(i, i) == 0.0);
}

TEST_CASE("validate_flows: violations name the offending pair") {
    FlowRateMatrix f = zero_flows(3);
    f.c(0, 1) = 1.0; // asymmetric: c(1,0) still 0
    auto v = validate_flows(f);
    REQUIRE_FALSE(v.empty());
    bool found = false;
    for (const auto& viol : v) found = found || (viol.i == 0 && viol.j == 1);
    CHECK(found);

    FlowRateMatrix g = zero_flows(2);
    g.c(0, 0) = 0.5;
    CHECK_FALSE(validate_flows(g).empty());

    FlowRateMatrix h = zero_flows(2);
    h.c(0, 1) = h.c(1, 0) = -1.0;
    CHECK_FALSE(validate_flows(h).empty());
}

TEST_CASE("flow modulation factor is floored and capped") {
    const FlowModulation m = FlowModulation::norm_dependent(0.5, 2.0);
    CHECK(m.factor(0.0) == Catch::Approx(0.5));
    CHECK(m.factor(0.25) == Catch::Approx(1.0));
    CHECK(m.factor(1.0) == Catch::Approx(2.5));
    CHECK(m.factor(100.0) == Catch::Approx(2.5)); // capped at |z| = 1
    CHECK_THROWS_AS(FlowModulation::norm_dependent(0.0, 1.0).validate(), ValidationError);
    CHECK_THROWS_AS(FlowModulation::norm_dependent(1.0, 0.0).validate(), ValidationError);
}

TEST_CASE("simulation config validation") {
    SimulationConfig c;
    c.y0.assign(2, 0.0);
    CHECK_NOTHROW(c.validate(2));
    c.horizon = 0.0;
    CHECK_THROWS_AS(c.validate(2), ValidationError);
    c.horizon = 1.0;
    c.y0.assign(3, 0.0);
    CHECK_THROWS_AS(c.validate(2), ValidationError);
    c.y0.assign(2, 0.0);
    c.rate = RateSpec::fixed(-0.1);
    CHECK_THROWS_AS(c.validate(2), ValidationError);
}
