#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mfglab/heat_kernel.hpp"

using namespace mfglab;

namespace {

/// Direct quadrature oracle for the 1d kernel Lp norm over a wide window.
double kernel_lp_by_quadrature(double p, double t) {
    const double amp = 1.0 / std::sqrt(4.0 * pi * t);
    const double window = 40.0 * std::sqrt(t);
    const double integral = integrate_refining(
        [amp, p, t](double x) { return std::pow(amp * std::exp(-x * x / (4.0 * t)), p); },
        -window, window, 1e-13);
    return std::pow(integral, 1.0 / p);
}

double grad_lp_by_quadrature(double p, double t) {
    const double amp = 1.0 / std::sqrt(4.0 * pi * t);
    const double window = 40.0 * std::sqrt(t);
    const double integral = integrate_refining(
        [amp, p, t](double x) {
            const double g = amp * std::exp(-x * x / (4.0 * t)) * std::abs(x) / (2.0 * t);
            return std::pow(g, p);
        },
        -window, window, 1e-13);
    return std::pow(integral, 1.0 / p);
}

} // namespace

TEST_CASE("unit mass is exact for p = 1") {
    for (double t : {0.25, 1.0, 4.0}) {
        CHECK(heat_kernel_lp_norm(1, 1.0, t) == 1.0);
        CHECK(heat_kernel_lp_norm(2, 1.0, t) == 1.0);
    }
}

TEST_CASE("closed form matches quadrature in 1d") {
    for (double p : {1.0, 2.0, 3.0})
        for (double t : {0.25, 1.0, 4.0}) {
            const double closed = heat_kernel_lp_norm(1, p, t);
            const double quad = kernel_lp_by_quadrature(p, t);
            CHECK(std::abs(closed - quad) <= 1e-8 * quad);
        }
}

TEST_CASE("known values in low dimension") {
    // n = 1, p = 2: (8 pi t)^(-1/4)
    for (double t : {0.5, 1.0, 2.0})
        CHECK(heat_kernel_lp_norm(1, 2.0, t) ==
              Catch::Approx(std::pow(8.0 * pi * t, -0.25)).epsilon(1e-13));
    // n = 2, p = 2: (8 pi t)^(-1/2)
    CHECK(heat_kernel_lp_norm(2, 2.0, 1.0) ==
          Catch::Approx(std::pow(8.0 * pi, -0.5)).epsilon(1e-13));
}

TEST_CASE("time scaling exponent is -n/2p'") {
    for (int n : {1, 2})
        for (double p : {1.5, 2.0, 3.0}) {
            const double expo = -0.5 * n * (1.0 - 1.0 / p);
            const double measured = std::log(heat_kernel_lp_norm(n, p, 4.0) /
                                             heat_kernel_lp_norm(n, p, 1.0)) /
                                    std::log(4.0);
            CHECK(std::abs(measured - expo) <= 1e-10);
        }
}

TEST_CASE("gradient norm matches quadrature and scales with an extra half power") {
    for (double p : {1.0, 2.0, 3.0}) {
        const double closed = heat_kernel_grad_lp_norm(1, p, 1.0);
        const double quad = grad_lp_by_quadrature(p, 1.0);
        CHECK(std::abs(closed - quad) <= 1e-6 * quad);

        const double expo = -0.5 * (1.0 - 1.0 / p) - 0.5;
        const double measured = std::log(heat_kernel_grad_lp_norm(1, p, 4.0) /
                                         heat_kernel_grad_lp_norm(1, p, 1.0)) /
                                std::log(4.0);
        CHECK(std::abs(measured - expo) <= 1e-10);
    }
}

TEST_CASE("cache returns identical values on repeated calls") {
    const double a = heat_kernel_grad_lp_norm(1, 2.0, 0.7);
    const double b = heat_kernel_grad_lp_norm(1, 2.0, 0.7);
    CHECK(a == b);
}

TEST_CASE("domain validation") {
    CHECK_THROWS_AS(heat_kernel_lp_norm(1, 2.0, 0.0), DomainError);
    CHECK_THROWS_AS(heat_kernel_lp_norm(1, 0.5, 1.0), DomainError);
    CHECK_THROWS_AS(heat_kernel_grad_lp_norm(1, 2.0, -1.0), DomainError);
}

TEST_CASE("refining quadrature integrates polynomials exactly") {
    const double s = integrate_refining([](double x) { return 3.0 * x * x; }, 0.0, 2.0);
    CHECK(s == Catch::Approx(8.0).epsilon(1e-12));
}
