#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mfglab/coupling.hpp"
#include "mfglab/quadrature.hpp"

using namespace mfglab;

namespace {

/// Fourth-order central differences as the derivative oracle.
double fd_deriv(const CouplingModel& m, std::array<double, 2> x, double at, double h) {
    return (-m.eval(x, at + 2 * h) + 8 * m.eval(x, at + h) - 8 * m.eval(x, at - h) +
            m.eval(x, at - 2 * h)) /
           (12.0 * h);
}

double fd_deriv2(const CouplingModel& m, std::array<double, 2> x, double at, double h) {
    return (-m.eval(x, at + 2 * h) + 16 * m.eval(x, at + h) - 30 * m.eval(x, at) +
            16 * m.eval(x, at - h) - m.eval(x, at - 2 * h)) /
           (12.0 * h * h);
}

void check_consistency(const CouplingModel& m) {
    const double h = 1e-3;
    for (double x = 0.05; x < 1.0; x += 0.23)
        for (double at = 0.3; at <= 3.0; at += 0.45) {
            const std::array<double, 2> p{x, 0.0};
            CHECK(m.deriv_m(p, at) == Catch::Approx(fd_deriv(m, p, at, h)).margin(1e-7));
            CHECK(m.deriv_mm(p, at) == Catch::Approx(fd_deriv2(m, p, at, h)).margin(1e-5));
            // dF/dm = f by the same stencil
            const double dF = (-m.primitive_F(p, at + 2 * h) + 8 * m.primitive_F(p, at + h) -
                               8 * m.primitive_F(p, at - h) + m.primitive_F(p, at - 2 * h)) /
                              (12.0 * h);
            CHECK(dF == Catch::Approx(m.eval(p, at)).margin(1e-7));
            CHECK(std::abs(m.primitive_F(p, 0.0)) <= 1e-14);
        }
}

} // namespace

TEST_CASE("built-in models are internally consistent") {
    check_consistency(linear_coupling(0.8));
    check_consistency(linear_coupling(-2.5));
    check_consistency(potential_plus_saturating_coupling(0.1, -0.5, 0.0));
    check_consistency(potential_plus_saturating_coupling(0.3, 0.7, -0.4));
}

TEST_CASE("C_f bounds the sampled derivative sum") {
    for (const CouplingModel& m :
         {linear_coupling(1.3), potential_plus_saturating_coupling(0.2, -0.8, 0.5)}) {
        double sup = 0.0;
        for (double x = 0.0; x < 1.0; x += 0.11)
            for (double at = 0.0; at <= 4.0; at += 0.07)
                sup = std::max(sup, std::abs(m.deriv_m({x, 0.0}, at)) +
                                        std::abs(m.deriv_mm({x, 0.0}, at)));
        CHECK(sup <= m.C_f + 1e-12);
    }
}

TEST_CASE("builtin factory dispatches and validates") {
    CHECK(builtin("zero").name == "zero");
    CHECK(builtin("linear", {2.0}).eval({0.3, 0.0}, 1.5) == Catch::Approx(3.0));
    const CouplingModel m = builtin("potential_plus_saturating", {0.1, -0.5, 0.2});
    CHECK(m.C_f > 0.0);
    CHECK_THROWS_AS(builtin("linear"), UsageError);
    CHECK_THROWS_AS(builtin("zero", {1.0}), UsageError);
    CHECK_THROWS_AS(builtin("no_such_model"), UsageError);
}

TEST_CASE("stabilize adds a vanishing-at-reference penalty") {
    const PeriodicGrid gr = PeriodicGrid::line(32);
    ScalarField m_bar(gr, [](double x, double) { return 1.0 + 0.2 * std::cos(2.0 * pi * x); });
    normalize_mass(m_bar);
    const CouplingModel base = potential_plus_saturating_coupling(0.1, -0.5, 0.0);
    const CouplingModel stab = stabilize(base, m_bar, 0.3);
    check_consistency(stab);

    for (std::size_t i = 0; i < gr.size(); ++i) {
        const auto x = gr.point(i);
        CHECK(stab.eval(x, m_bar.v[i]) == Catch::Approx(base.eval(x, m_bar.v[i])).margin(1e-14));
        CHECK(stab.deriv_m(x, 1.7) == Catch::Approx(base.deriv_m(x, 1.7) + 0.3).margin(1e-14));
        CHECK(stab.deriv_mm(x, 1.7) == Catch::Approx(base.deriv_mm(x, 1.7)).margin(1e-14));
    }
    CHECK_THROWS_AS(stabilize(base, m_bar, 0.0), DomainError);
}

TEST_CASE("absorbing a constant shifts values but not derivatives") {
    const CouplingModel base = linear_coupling(1.0);
    const CouplingModel shifted = absorb_constant(base, 0.75);
    const std::array<double, 2> x{0.4, 0.0};
    CHECK(shifted.eval(x, 2.0) == Catch::Approx(base.eval(x, 2.0) - 0.75).margin(1e-15));
    CHECK(shifted.deriv_m(x, 2.0) == base.deriv_m(x, 2.0));
    CHECK(shifted.primitive_F(x, 0.0) == 0.0);
    CHECK(shifted.primitive_F(x, 2.0) ==
          Catch::Approx(base.primitive_F(x, 2.0) - 1.5).margin(1e-15));
}

TEST_CASE("coupling increment vanishes at nu = 0 and matches the definition") {
    const PeriodicGrid gr = PeriodicGrid::line(24);
    ScalarField m_bar(gr, [](double x, double) { return 1.0 + 0.3 * std::sin(2.0 * pi * x); });
    normalize_mass(m_bar);
    const ScalarField rho(gr, [](double x, double) { return 0.4 * std::cos(2.0 * pi * x); });
    const CouplingModel m = potential_plus_saturating_coupling(0.1, -0.5, 0.2);

    const ScalarField zero = coupling_increment(m, m_bar, rho, 0.0);
    for (double v : zero.v) CHECK(v == 0.0);

    const ScalarField inc = coupling_increment(m, m_bar, rho, 0.5);
    for (std::size_t i = 0; i < gr.size(); ++i) {
        const auto x = gr.point(i);
        const double expected = m.eval(x, m_bar.v[i] + 0.5 * rho.v[i]) - m.eval(x, m_bar.v[i]);
        CHECK(inc.v[i] == expected);
    }
}

TEST_CASE("point lookup hits grid nodes") {
    const PeriodicGrid gr = PeriodicGrid::line(16);
    ScalarField f(gr);
    for (std::size_t i = 0; i < f.size(); ++i) f.v[i] = static_cast<double>(i);
    CHECK(field_at_point(f, {0.0, 0.0}) == 0.0);
    CHECK(field_at_point(f, gr.point(5)) == 5.0);
    // wraps beyond the last node
    CHECK(field_at_point(f, {1.0, 0.0}) == 0.0);
}
