#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "mfglab/csv.hpp"
#include "mfglab/diagnostics.hpp"
#include "mfglab/dynamics.hpp"
#include "mfglab/expressions.hpp"
#include "mfglab/heat_kernel.hpp"
#include "mfglab/linearized.hpp"
#include "mfglab/stability.hpp"
#include "mfglab/stationary.hpp"

namespace mfglab {

/// Fast deterministic sanity suite: closed-form examples and the operator
/// identities, the things that must hold on any machine before longer runs
/// are worth trusting. Every check records a measured value and its bound so
/// the emitted CSV doubles as a numerical fingerprint of the build.

struct SelfTestCheck {
    std::string name;
    bool ok = false;
    double measured = 0.0;
    double bound = 0.0;
};

struct SelfTestResult {
    std::vector<SelfTestCheck> checks;
    int failed = 0;
};

namespace detail {

inline ScalarField random_positive_density(const PeriodicGrid& gr, std::mt19937& rng) {
    std::uniform_real_distribution<double> u(0.2, 2.0);
    ScalarField m(gr);
    for (double& x : m.v) x = u(rng);
    normalize_mass(m);
    return m;
}

inline StationarySolution uniform_stationary(const PeriodicGrid& gr) {
    StationarySolution sol;
    sol.m_bar = ScalarField(gr, 1.0);
    sol.u_bar = ScalarField(gr, 0.0);
    sol.lambda = 0.0;
    sol.delta = 0.0;
    return sol;
}

} // namespace detail

inline SelfTestResult run_selftest(const std::string& csv_path = "") {
    SelfTestResult result;
    const auto add = [&result](const std::string& name, double measured, double bound) {
        SelfTestCheck c{name, measured <= bound, measured, bound};
        result.checks.push_back(c);
        if (!c.ok) ++result.failed;
    };
    const auto guard = [&result](const std::string& name, const std::function<void()>& body) {
        try {
            body();
        } catch (const std::exception& e) {
            result.checks.push_back(
                {name + " (threw: " + e.what() + ")", false,
                 std::numeric_limits<double>::quiet_NaN(), 0.0});
            ++result.failed;
        }
    };

    guard("flux divergence telescopes", [&] {
        const PeriodicGrid gr = PeriodicGrid::line(48);
        std::mt19937 rng(101);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        FacetField F(gr);
        for (double& x : F.axis(0)) x = u(rng);
        add("flux divergence telescopes", std::abs(integrate(divergence(F))), 1e-12);
    });

    guard("transport factorization, apply path", [&] {
        const PeriodicGrid gr = PeriodicGrid::line(32);
        std::mt19937 rng(202);
        const ScalarField m = detail::random_positive_density(gr, rng);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        ScalarField f(gr);
        for (double& x : f.v) x = u(rng);
        const ScalarField lhs = apply_BBstar(m, f);
        const ScalarField rhs = apply_A(m, hadamard(m, f));
        double d = 0.0;
        for (std::size_t i = 0; i < f.size(); ++i) d = std::max(d, std::abs(lhs.v[i] + rhs.v[i]));
        add("transport factorization, apply path", d, 1e-12 * norm_linf(f));
    });

    guard("operator identities, stencil matrices", [&] {
        std::mt19937 rng(303);
        double worst = 0.0;
        for (int rep = 0; rep < 2; ++rep) {
            const PeriodicGrid gr = PeriodicGrid::line(32);
            const ScalarField m = detail::random_positive_density(gr, rng);
            const Eigen::MatrixXd A = apply_A_matrix(m, MatrixScale::stencil);
            const Eigen::MatrixXd At = apply_Astar_matrix(m, MatrixScale::stencil);
            const Eigen::MatrixXd S = apply_BBstar_matrix(m, MatrixScale::stencil);
            Eigen::MatrixXd T = Eigen::MatrixXd::Zero(A.rows(), A.cols());
            for (Eigen::Index i = 0; i < A.rows(); ++i)
                T(i, i) = m.v[static_cast<std::size_t>(i)];
            worst = std::max(worst, (S + A * T).cwiseAbs().maxCoeff());
            worst = std::max(worst, (S + T * At).cwiseAbs().maxCoeff());
            worst = std::max(worst, (S * At - A * S).cwiseAbs().maxCoeff());
        }
        add("operator identities, stencil matrices", worst, 1e-12);
    });

    guard("laplacian second-order convergence", [&] {
        const auto err = [](int n) {
            const PeriodicGrid gr = PeriodicGrid::line(n);
            const ScalarField f(gr, [](double x, double) { return std::exp(std::cos(2.0 * pi * x)); });
            const ScalarField lap = laplacian(f);
            double e = 0.0;
            for (std::size_t i = 0; i < f.size(); ++i) {
                const double x = gr.point(i)[0];
                const double c = std::cos(2.0 * pi * x), s = std::sin(2.0 * pi * x);
                const double exact =
                    std::exp(c) * (4.0 * pi * pi) * (s * s - c);
                e = std::max(e, std::abs(lap.v[i] - exact));
            }
            return e;
        };
        const double ratio = err(64) / err(128);
        SelfTestCheck c{"laplacian second-order convergence", ratio >= 3.8, ratio, 3.8};
        result.checks.push_back(c);
        if (!c.ok) ++result.failed;
    });

    guard("heat kernel closed forms", [&] {
        double worst = std::abs(heat_kernel_lp_norm(1, 1.0, 0.7) - 1.0);
        worst = std::max(worst,
                         std::abs(heat_kernel_lp_norm(1, 2.0, 1.0) - std::pow(8.0 * pi, -0.25)));
        const double s4 = heat_kernel_lp_norm(1, 2.0, 4.0) / heat_kernel_lp_norm(1, 2.0, 1.0);
        worst = std::max(worst, std::abs(s4 - std::pow(4.0, -0.25)));
        add("heat kernel closed forms", worst, 1e-12);
    });

    guard("coupling primitives vanish at zero", [&] {
        const CouplingModel m1 = linear_coupling(0.7);
        const CouplingModel m2 = potential_plus_saturating_coupling(0.1, -0.5, 0.2);
        double worst = 0.0;
        for (double x = 0.0; x < 1.0; x += 0.093) {
            worst = std::max(worst, std::abs(m1.primitive_F({x, 0.0}, 0.0)));
            worst = std::max(worst, std::abs(m2.primitive_F({x, 0.0}, 0.0)));
        }
        add("coupling primitives vanish at zero", worst, 1e-14);
    });

    guard("coupling derivative bound C_f", [&] {
        const CouplingModel m = potential_plus_saturating_coupling(0.1, -0.5, 0.2);
        double worst = 0.0;
        for (double x = 0.0; x < 1.0; x += 0.31)
            for (double mm = 0.0; mm <= 5.0; mm += 0.17)
                worst = std::max(worst, std::abs(m.deriv_m({x, 0.0}, mm)) +
                                            std::abs(m.deriv_mm({x, 0.0}, mm)) - m.C_f);
        add("coupling derivative bound C_f", worst, 0.0);
    });

    guard("uniform stationary state, no coupling", [&] {
        const StationarySolution sol =
            solve_stationary_ergodic(zero_coupling(), PeriodicGrid::line(64));
        double worst = std::abs(sol.lambda);
        for (double x : sol.m_bar.v) worst = std::max(worst, std::abs(x - 1.0));
        add("uniform stationary state, no coupling", worst, 1e-10);
    });

    guard("uniform stationary state, linear coupling", [&] {
        const StationarySolution sol =
            solve_stationary_ergodic(linear_coupling(1.0), PeriodicGrid::line(64));
        add("uniform stationary state, linear coupling", std::abs(sol.lambda - 1.0), 1e-9);
    });

    guard("poincare constant on the unit torus", [&] {
        const ScalarField m(PeriodicGrid::line(128), 1.0);
        const double cp = poincare_constant(m);
        add("poincare constant on the unit torus",
            std::abs(cp - 1.0 / (4.0 * pi * pi)) * 4.0 * pi * pi, 0.01);
    });

    guard("quadratic form floor without coupling", [&] {
        const ScalarField m(PeriodicGrid::line(64), 1.0);
        add("quadratic form floor without coupling",
            std::abs(eta_form(m, ScalarField(m.grid, 0.0), 0.0, 'a') - 1.0), 1e-9);
    });

    guard("backward march with zero data stays zero", [&] {
        const PeriodicGrid gr = PeriodicGrid::line(32);
        const StationarySolution sol = detail::uniform_stationary(gr);
        SolveOptions opts;
        FieldPath rho(17, ScalarField(gr, 0.0));
        const FieldPath v = solve_hjb_backward(rho, 1.0, ScalarField(gr, 0.0), sol,
                                               linear_coupling(1.0), 0.0, 1.0, opts);
        double worst = 0.0;
        for (const auto& f : v) worst = std::max(worst, norm_linf(f));
        add("backward march with zero data stays zero", worst, 1e-15);
    });

    guard("forward march conserves mass", [&] {
        const PeriodicGrid gr = PeriodicGrid::line(64);
        const StationarySolution sol = detail::uniform_stationary(gr);
        SolveOptions opts;
        FieldPath v(65, ScalarField(gr));
        for (std::size_t n = 0; n < v.size(); ++n)
            v[n] = ScalarField(gr, [n](double x, double) {
                return 0.05 * std::cos(2.0 * pi * x + 0.01 * static_cast<double>(n));
            });
        const ScalarField mu0(gr, [](double x, double) { return 0.03 * std::sin(2.0 * pi * x); });
        const FieldPath mu = solve_fp_forward(v, mu0, sol, 0.25, opts);
        double worst = 0.0;
        for (const auto& f : mu) worst = std::max(worst, std::abs(integrate(f)));
        add("forward march conserves mass", worst, 1e-12);
    });

    guard("heat semigroup eigenmode decay", [&] {
        const PeriodicGrid gr = PeriodicGrid::line(128);
        const StationarySolution sol = detail::uniform_stationary(gr);
        SolveOptions opts;
        const double T = 0.05;
        const int n_steps = 500;
        FieldPath v(static_cast<std::size_t>(n_steps) + 1, ScalarField(gr, 0.0));
        const ScalarField mu0(gr, [](double x, double) { return std::cos(2.0 * pi * x); });
        const FieldPath mu = solve_fp_forward(v, mu0, sol, T, opts);
        const double decay = std::exp(-4.0 * pi * pi * T);
        double worst = 0.0;
        for (std::size_t i = 0; i < mu0.size(); ++i)
            worst = std::max(worst, std::abs(mu.back().v[i] - decay * mu0.v[i]));
        add("heat semigroup eigenmode decay", worst / decay, 0.01);
    });

    guard("zero boundary data gives the stationary pair", [&] {
        const PeriodicGrid gr = PeriodicGrid::line(32);
        const StationarySolution sol = detail::uniform_stationary(gr);
        SolveOptions opts;
        opts.n_steps = 16;
        opts.nu_schedule = {1.0};
        const DynamicSolution dyn = solve_mfg(ScalarField(gr, 0.0), ScalarField(gr, 0.0), 1.0,
                                              0.0, sol, linear_coupling(1.0), opts);
        double worst = 0.0;
        for (const auto& f : dyn.mu_path) worst = std::max(worst, norm_linf(f));
        for (const auto& f : dyn.v_path) worst = std::max(worst, norm_linf(f));
        add("zero boundary data gives the stationary pair", worst, 1e-15);
        add("zero data converges in one sweep", dyn.trace.size() == 1 ? 0.0 : 1.0, 0.5);
    });

    guard("decoupled linearized blocks", [&] {
        const PeriodicGrid gr = PeriodicGrid::line(32);
        const StationarySolution sol = detail::uniform_stationary(gr);
        const LinearizedSystem sys = assemble(sol, zero_coupling(), 0.0);
        const Eigen::MatrixXd L = laplacian_matrix(gr);
        const Eigen::Index N = static_cast<Eigen::Index>(gr.size());
        double worst = (sys.M.topLeftCorner(N, N) - L).cwiseAbs().maxCoeff();
        worst = std::max(worst, (sys.M.topRightCorner(N, N) - L).cwiseAbs().maxCoeff());
        worst = std::max(worst, sys.M.bottomLeftCorner(N, N).cwiseAbs().maxCoeff());
        worst = std::max(worst, (sys.M.bottomRightCorner(N, N) + L).cwiseAbs().maxCoeff());
        add("decoupled linearized blocks", worst, 1e-12);

        const LinearizedSystem shifted = assemble(sol, zero_coupling(), 0.2);
        double shift = (shifted.M.topLeftCorner(N, N) - (L - 0.1 * Eigen::MatrixXd::Identity(N, N)))
                           .cwiseAbs()
                           .maxCoeff();
        shift = std::max(shift, (shifted.M.bottomRightCorner(N, N) -
                                 (-L + 0.1 * Eigen::MatrixXd::Identity(N, N)))
                                    .cwiseAbs()
                                    .maxCoeff());
        add("discount shifts diagonal blocks by half", shift, 1e-15);
    });

    guard("boundary value problem with zero data", [&] {
        const PeriodicGrid gr = PeriodicGrid::line(32);
        const StationarySolution sol = detail::uniform_stationary(gr);
        const LinearizedSystem sys = assemble(sol, linear_coupling(1.0), 0.0);
        const LinearTpbvp lin =
            solve_linear_tpbvp(sys, ScalarField(gr, 0.0), ScalarField(gr, 0.0), 1.0, 16);
        double worst = 0.0;
        for (const auto& f : lin.mu_path) worst = std::max(worst, norm_linf(f));
        for (const auto& f : lin.v_path) worst = std::max(worst, norm_linf(f));
        add("boundary value problem with zero data", worst, 1e-14);
    });

    guard("lyapunov functional closed forms", [&] {
        const PeriodicGrid gr = PeriodicGrid::line(64);
        const StationarySolution sol = detail::uniform_stationary(gr);
        DynamicSolution dyn;
        dyn.grid = gr;
        dyn.T = 1.0;
        dyn.n_steps = 4;
        dyn.delta = 0.0;
        dyn.mu_path.assign(5, ScalarField(gr, [](double x, double) { return std::cos(2.0 * pi * x); }));
        dyn.v_path.assign(5, ScalarField(gr, 0.0));
        const LyapunovSeries lyap = lyapunov_series(dyn, sol);
        double worst = 0.0;
        for (double p : lyap.phi) worst = std::max(worst, std::abs(p - 0.5));
        add("lyapunov functional closed forms", worst, 1e-12);

        DynamicSolution zero = dyn;
        zero.mu_path.assign(5, ScalarField(gr, 0.0));
        const LyapunovSeries lz = lyapunov_series(zero, sol);
        double z = 0.0;
        for (double p : lz.phi) z = std::max(z, std::abs(p));
        add("lyapunov vanishes on the stationary pair", z, 1e-300);
    });

    guard("envelope fit on a synthetic series", [&] {
        const double T = 10.0;
        std::vector<double> series(401);
        for (std::size_t k = 0; k < series.size(); ++k) {
            const double t = T * static_cast<double>(k) / 400.0;
            series[k] = std::exp(-2.0 * t) + std::exp(-3.0 * (T - t));
        }
        const EnvelopeFit fit = envelope_fit(series, T);
        const double worst =
            std::max(std::abs(fit.rate_left - 2.0) / 2.0, std::abs(fit.rate_right - 3.0) / 3.0);
        add("envelope fit on a synthetic series", worst, 0.02);
    });

    guard("field expression grammar", [&] {
        const PeriodicGrid gr = PeriodicGrid::line(32);
        const ScalarField f =
            FieldExpression::parse("0.25 + 0.5*cos(2*pi*x) - sin(2*pi*2*x)").evaluate(gr);
        double worst = 0.0;
        for (std::size_t i = 0; i < f.size(); ++i) {
            const double x = gr.point(i)[0];
            const double exact =
                0.25 + 0.5 * std::cos(2.0 * pi * x) - std::sin(4.0 * pi * x);
            worst = std::max(worst, std::abs(f.v[i] - exact));
        }
        add("field expression grammar", worst, 1e-15);
    });

    if (!csv_path.empty()) {
        CsvWriter w(csv_path, {"check", "measured", "bound", "ok"});
        for (const auto& c : result.checks)
            w.row(c.name, {c.measured, c.bound, c.ok ? 1.0 : 0.0});
    }
    return result;
}

} // namespace mfglab
