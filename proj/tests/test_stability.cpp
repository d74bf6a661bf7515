#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "mfglab/stability.hpp"
#include "mfglab/stationary.hpp"

using namespace mfglab;

namespace {

double discrete_gap(int n) {
    const double h = 1.0 / n;
    return 2.0 / (h * h) * (1.0 - std::cos(2.0 * pi * h));
}

} // namespace

TEST_CASE("poincare constant of the flat density") {
    const double cp = poincare_constant(ScalarField(PeriodicGrid::line(128), 1.0));
    CHECK(std::abs(cp - 1.0 / (4.0 * pi * pi)) <= 0.01 / (4.0 * pi * pi));
    // the discrete pencil reproduces the discrete spectral gap to rounding
    CHECK(cp == Catch::Approx(1.0 / discrete_gap(128)).epsilon(1e-10));
}

TEST_CASE("weighted poincare inequality holds for random mean-free fields") {
    std::mt19937 rng(31);
    const PeriodicGrid gr = PeriodicGrid::line(48);
    ScalarField m_bar(gr, [](double x, double) { return 1.0 + 0.4 * std::cos(2.0 * pi * x); });
    normalize_mass(m_bar);
    const double cp = poincare_constant(m_bar);
    CHECK(cp > 0.0);

    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int rep = 0; rep < 20; ++rep) {
        ScalarField z(gr);
        for (double& x : z.v) x = u(rng);
        // project out the weighted mean so integral of m_bar z vanishes
        const double wmean = inner_product(z, m_bar) / integrate(m_bar);
        for (double& x : z.v) x -= wmean;
        double var = 0.0;
        for (std::size_t i = 0; i < gr.size(); ++i) var += m_bar.v[i] * z.v[i] * z.v[i];
        var *= gr.cell_volume();
        CHECK(var <= cp * dirichlet_weighted(m_bar, z) + 1e-10);
    }
}

TEST_CASE("coercivity of the linear model on the flat state") {
    const ScalarField one(PeriodicGrid::line(64), 1.0);
    for (double c : {0.5, 2.0, 10.0}) {
        const double eta_c = eta_form(one, linear_coupling(c), 0.0, 'c');
        CHECK(std::abs(eta_c - (c + 4.0 * pi * pi)) <= 0.01 * (c + 4.0 * pi * pi));
        CHECK(eta_c == Catch::Approx(c + discrete_gap(64)).epsilon(1e-10));
        // monotone coupling floor
        CHECK(eta_c >= c - 1e-8);
    }
    // zero coupling saturates form 'a' at exactly one
    CHECK(eta_form(one, zero_coupling(), 0.0, 'a') == Catch::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("chain inequalities hold on a nonuniform certified state") {
    const CouplingModel base = potential_plus_saturating_coupling(0.1, -0.5, 0.0);
    const StationarySolution sol = solve_stationary_ergodic(base, PeriodicGrid::line(64));
    const CouplingModel model = stabilize(base, sol.m_bar, 0.3);

    for (double delta : {0.0, 0.2}) {
        const double eta_a = eta_form(sol.m_bar, model, delta, 'a');
        const double eta_b = eta_form(sol.m_bar, model, delta, 'b');
        const double eta_c = eta_form(sol.m_bar, model, delta, 'c');
        const double cp = poincare_constant(sol.m_bar);
        double sup_m = 0.0, c_floc = 0.0;
        const ScalarField fm = model.deriv_m_on(sol.m_bar);
        for (std::size_t i = 0; i < sol.m_bar.size(); ++i) {
            sup_m = std::max(sup_m, sol.m_bar.v[i]);
            c_floc = std::max(c_floc, std::abs(fm.v[i]));
        }
        CHECK(eta_b >= eta_a / cp - 1e-8);
        CHECK(eta_c >= eta_b / sup_m - 1e-8);
        CHECK(eta_a >= eta_c / (eta_c + c_floc) - 1e-8);
    }
}

TEST_CASE("destabilization threshold tracks the spectral gap") {
    const ScalarField one(PeriodicGrid::line(64), 1.0);
    const double gap = discrete_gap(64);
    CHECK(eta_form(one, linear_coupling(-(gap - 5.0)), 0.0, 'b') > 0.0);
    CHECK(eta_form(one, linear_coupling(-(gap + 5.0)), 0.0, 'b') < 0.0);
}

TEST_CASE("principal eigenpair satisfies both characterizations") {
    const CouplingModel base = potential_plus_saturating_coupling(0.1, -0.5, 0.0);
    const StationarySolution sol = solve_stationary_ergodic(base, PeriodicGrid::line(64));
    const CouplingModel model = stabilize(base, sol.m_bar, 0.3);

    const PrincipalEigenpair pp = principal_eigenpair(sol.m_bar, model, 0.0);
    CHECK(pp.residual_rayleigh <= 1e-8);
    CHECK(pp.residual_system <= 1e-8 / poincare_constant(sol.m_bar));
    CHECK(pp.eta1 == Catch::Approx(eta_form(sol.m_bar, model, 0.0, 'b')).margin(1e-10));

    // normalization: integral of mu^2 / m_bar = 1, and mu has zero mass
    double nrm = 0.0;
    for (std::size_t i = 0; i < sol.m_bar.size(); ++i)
        nrm += pp.mu.v[i] * pp.mu.v[i] / sol.m_bar.v[i];
    nrm *= sol.m_bar.grid.cell_volume();
    CHECK(nrm == Catch::Approx(1.0).margin(1e-12));
    CHECK(std::abs(integrate(pp.mu)) <= 1e-12);
}

TEST_CASE("flat-state principal eigenvalue is the coercivity minimum") {
    const ScalarField one(PeriodicGrid::line(64), 1.0);
    const PrincipalEigenpair pp = principal_eigenpair(one, linear_coupling(2.0), 0.0);
    CHECK(pp.eta1 == Catch::Approx(2.0 + discrete_gap(64)).epsilon(1e-10));
    CHECK(pp.residual_rayleigh <= 1e-8);
}

TEST_CASE("predicted rates follow the closed formulas") {
    const PredictedRates r = predicted_rates(0.5, 0.1, 0.02, 3.0, 2.0, 1);
    CHECK(r.sigma == Catch::Approx(0.5 / 3.2).epsilon(1e-14));
    CHECK(r.sigma1 == Catch::Approx((r.sigma - 0.02) / 2.0).epsilon(1e-14));
    CHECK(r.sigma2 == Catch::Approx((r.sigma + 0.02) / 2.0).epsilon(1e-14));
    CHECK(r.theta_cap ==
          Catch::Approx(std::min(0.5 / 16.0, 0.5 / (16.0 * 0.1 * (3.0 * 2.0 + 1.25))))
              .epsilon(1e-14));

    // eta above one is clamped before the formulas are applied
    const PredictedRates clamped = predicted_rates(7.0, 0.1, 0.0, 1.0, 1.0, 1);
    CHECK(clamped.sigma == Catch::Approx(1.0 / 3.2).epsilon(1e-14));

    CHECK_THROWS_AS(predicted_rates(0.0, 0.1, 0.0, 1.0, 1.0, 1), DomainError);
    CHECK_THROWS_AS(predicted_rates(-1.0, 0.1, 0.0, 1.0, 1.0, 1), DomainError);
}

TEST_CASE("full report: satisfied and unsatisfied branches") {
    const ScalarField one(PeriodicGrid::line(64), 1.0);

    const StabilityReport good = analyze_stability(one, linear_coupling(1.0), 0.0);
    CHECK(good.satisfied);
    CHECK(good.sigma > 0.0);
    CHECK(good.sigma1 == Catch::Approx(good.sigma / 2.0).epsilon(1e-14));
    CHECK(good.sigma1 <= good.sigma2);
    CHECK(good.theta_cap > 0.0);
    CHECK(good.eta_b == Catch::Approx(good.eta_principal).margin(1e-10));

    const StabilityReport bad = analyze_stability(one, linear_coupling(-80.0), 0.0);
    CHECK_FALSE(bad.satisfied);
    CHECK(bad.eta_a < 0.0);
    CHECK(std::isnan(bad.sigma));
    CHECK(std::isnan(bad.sigma1));
    CHECK(std::isnan(bad.theta_cap));
}

TEST_CASE("degenerate weights are rejected with diagnostics") {
    ScalarField flat(PeriodicGrid::line(32), 1.0);
    flat.v[3] = -1.0;
    CHECK_THROWS_AS(poincare_constant(flat), DomainError);
    CHECK_THROWS_AS(eta_form(flat, zero_coupling(), 0.0, 'b'), DomainError);

    const ScalarField one(PeriodicGrid::line(32), 1.0);
    CHECK_THROWS_AS(eta_form(one, zero_coupling(), 0.0, 'q'), UsageError);
}
