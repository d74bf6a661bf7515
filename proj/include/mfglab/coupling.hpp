#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "mfglab/grid.hpp"

namespace mfglab {

/// Local coupling f(x, m) with bounded first and second m-derivatives.
///
/// A model carries the value, the two derivatives, the primitive
/// F(x, m) = integral of f(x, s) ds from 0 to m (so F(x, 0) = 0), and the
/// bound C_f on sup |deriv_m| + |deriv_mm|. Instances are immutable after
/// construction; the wrappers below return new models.
struct CouplingModel {
    std::string name;
    double C_f = 0.0;

    std::function<double(std::array<double, 2>, double)> eval;
    std::function<double(std::array<double, 2>, double)> deriv_m;
    std::function<double(std::array<double, 2>, double)> deriv_mm;
    std::function<double(std::array<double, 2>, double)> primitive_F;

    /// Samples f(x, m(x)) on the grid of m.
    ScalarField eval_on(const ScalarField& m) const { return sample(eval, m); }
    ScalarField deriv_m_on(const ScalarField& m) const { return sample(deriv_m, m); }
    ScalarField deriv_mm_on(const ScalarField& m) const { return sample(deriv_mm, m); }
    ScalarField primitive_on(const ScalarField& m) const { return sample(primitive_F, m); }

private:
    ScalarField sample(const std::function<double(std::array<double, 2>, double)>& g,
                       const ScalarField& m) const {
        ScalarField out(m.grid);
        for (std::size_t i = 0; i < m.size(); ++i) out.v[i] = g(m.grid.point(i), m.v[i]);
        return out;
    }
};

/// sup of |deriv_m| + |deriv_mm| over an (x, m) lattice with m in [0, m_hi],
/// refined twofold until stable to 1%. A 2% headroom is added so coarser
/// sample grids used elsewhere stay below the reported bound.
inline double estimate_C_f(const CouplingModel& model, double m_hi) {
    double prev = -1.0;
    double sup = 0.0;
    for (int nx = 16, nm = 128; nm <= 65536; nx *= 2, nm *= 2) {
        sup = 0.0;
        for (int i = 0; i < nx; ++i) {
            const std::array<double, 2> x{static_cast<double>(i) / nx, 0.0};
            for (int j = 0; j <= nm; ++j) {
                const double m = m_hi * j / nm;
                sup = std::max(sup, std::abs(model.deriv_m(x, m)) + std::abs(model.deriv_mm(x, m)));
            }
        }
        if (prev >= 0.0 && std::abs(sup - prev) <= 0.01 * std::max(prev, 1e-300)) break;
        prev = sup;
    }
    return 1.02 * sup;
}

inline CouplingModel zero_coupling() {
    CouplingModel m;
    m.name = "zero";
    m.C_f = 0.0;
    m.eval = [](std::array<double, 2>, double) { return 0.0; };
    m.deriv_m = m.eval;
    m.deriv_mm = m.eval;
    m.primitive_F = m.eval;
    return m;
}

inline CouplingModel linear_coupling(double a) {
    CouplingModel m;
    m.name = "linear(" + std::to_string(a) + ")";
    m.C_f = std::abs(a);
    m.eval = [a](std::array<double, 2>, double mm) { return a * mm; };
    m.deriv_m = [a](std::array<double, 2>, double) { return a; };
    m.deriv_mm = [](std::array<double, 2>, double) { return 0.0; };
    m.primitive_F = [a](std::array<double, 2>, double mm) { return 0.5 * a * mm * mm; };
    return m;
}

/// f(x, m) = theta_amp cos(2 pi x) + a m/(1+m^2) + b arctan(m). The nonlinear
/// parts saturate, so both m-derivatives stay globally bounded; a < 0 gives a
/// non-monotone coupling on a band of densities.
inline CouplingModel potential_plus_saturating_coupling(double theta_amp, double a, double b) {
    CouplingModel m;
    m.name = "potential_plus_saturating(" + std::to_string(theta_amp) + "," +
             std::to_string(a) + "," + std::to_string(b) + ")";
    m.eval = [theta_amp, a, b](std::array<double, 2> x, double mm) {
        return theta_amp * std::cos(2.0 * pi * x[0]) + a * mm / (1.0 + mm * mm) +
               b * std::atan(mm);
    };
    m.deriv_m = [a, b](std::array<double, 2>, double mm) {
        const double q = 1.0 + mm * mm;
        return a * (1.0 - mm * mm) / (q * q) + b / q;
    };
    m.deriv_mm = [a, b](std::array<double, 2>, double mm) {
        const double q = 1.0 + mm * mm;
        return -2.0 * a * mm * (3.0 - mm * mm) / (q * q * q) - 2.0 * b * mm / (q * q);
    };
    m.primitive_F = [theta_amp, a, b](std::array<double, 2> x, double mm) {
        const double q = 1.0 + mm * mm;
        return theta_amp * std::cos(2.0 * pi * x[0]) * mm + 0.5 * a * std::log(q) +
               b * (mm * std::atan(mm) - 0.5 * std::log(q));
    };
    m.C_f = estimate_C_f(m, 5.0);
    return m;
}

/// Named factory for the built-in models. `params` is positional:
/// zero takes none, linear takes {a}, potential_plus_saturating takes
/// {theta_amp, a, b}.
inline CouplingModel builtin(const std::string& name, const std::vector<double>& params = {}) {
    const auto want = [&](std::size_t k) {
        if (params.size() != k)
            throw UsageError("builtin coupling '" + name + "' takes " + std::to_string(k) +
                             " parameters, got " + std::to_string(params.size()));
    };
    if (name == "zero") { want(0); return zero_coupling(); }
    if (name == "linear") { want(1); return linear_coupling(params[0]); }
    if (name == "potential_plus_saturating") {
        want(3);
        return potential_plus_saturating_coupling(params[0], params[1], params[2]);
    }
    throw UsageError("unknown coupling model '" + name + "'");
}

/// Looks up a field value at a point that is expected to be a grid node.
inline double field_at_point(const ScalarField& f, std::array<double, 2> x) {
    const auto& gr = f.grid;
    const int ix = gr.wrap(static_cast<int>(std::lround(x[0] / gr.h(0))), 0);
    const int iy = gr.dim == 2 ? gr.wrap(static_cast<int>(std::lround(x[1] / gr.h(1))), 1) : 0;
    return f.v[gr.index(ix, iy)];
}

/// Adds the pointwise penalty eta_add (m - m_bar(x)) to the coupling. The
/// term vanishes at m = m_bar, so a stationary pair of the base model stays
/// stationary, while deriv_m gains the constant eta_add everywhere.
inline CouplingModel stabilize(const CouplingModel& model, const ScalarField& m_bar,
                               double eta_add) {
    if (!(eta_add > 0.0))
        throw DomainError("stabilize: eta_add must be positive");
    if (!m_bar.all_positive())
        throw DomainError("stabilize: reference density must be strictly positive");
    CouplingModel out;
    out.name = model.name + "+stabilize(" + std::to_string(eta_add) + ")";
    const auto base_eval = model.eval;
    const auto base_F = model.primitive_F;
    out.eval = [base_eval, m_bar, eta_add](std::array<double, 2> x, double m) {
        return base_eval(x, m) + eta_add * (m - field_at_point(m_bar, x));
    };
    const auto base_dm = model.deriv_m;
    out.deriv_m = [base_dm, eta_add](std::array<double, 2> x, double m) {
        return base_dm(x, m) + eta_add;
    };
    out.deriv_mm = model.deriv_mm;
    out.primitive_F = [base_F, m_bar, eta_add](std::array<double, 2> x, double m) {
        return base_F(x, m) + eta_add * (0.5 * m * m - field_at_point(m_bar, x) * m);
    };
    double sup_m_bar = 0.0;
    for (double v : m_bar.v) sup_m_bar = std::max(sup_m_bar, v);
    out.C_f = estimate_C_f(out, 5.0 * sup_m_bar);
    return out;
}

/// Folds an additive normalization constant into the coupling: f - lambda.
/// Derivatives and C_f are untouched and F(x, 0) = 0 is preserved.
inline CouplingModel absorb_constant(const CouplingModel& model, double lambda) {
    CouplingModel out = model;
    const auto base_eval = model.eval;
    out.eval = [base_eval, lambda](std::array<double, 2> x, double m) {
        return base_eval(x, m) - lambda;
    };
    const auto base_F = model.primitive_F;
    out.primitive_F = [base_F, lambda](std::array<double, 2> x, double m) {
        return base_F(x, m) - lambda * m;
    };
    return out;
}

/// Scales the density dependence by nu while keeping the x-only part fixed:
/// f_nu(x, m_bar + r) = f(x, m_bar) + nu (f(x, m_bar + r) - f(x, m_bar)).
/// Used by the continuation loop; nu = 1 recovers the model itself.
inline ScalarField coupling_increment(const CouplingModel& model, const ScalarField& m_bar,
                                      const ScalarField& rho, double nu) {
    require_same_grid(m_bar.grid, rho.grid, "coupling_increment");
    ScalarField out(m_bar.grid);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto x = m_bar.grid.point(i);
        out.v[i] = model.eval(x, m_bar.v[i] + nu * rho.v[i]) - model.eval(x, m_bar.v[i]);
    }
    return out;
}

} // namespace mfglab
