#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "mfglab/coupling.hpp"
#include "mfglab/dynamics.hpp"
#include "mfglab/quadrature.hpp"
#include "mfglab/stability.hpp"
#include "mfglab/stationary.hpp"

namespace mfglab {

/// Post-processing of dynamic runs: the Lyapunov functional, its dissipation
/// identity, exponential envelope fits, and the weighted decay inequalities.
/// Everything here is pure arithmetic on finished paths.

struct LyapunovSeries {
    std::vector<double> phi;
    std::vector<double> phi_tilde;
    /// plain pairing integral of mu v, kept for the monotone-case comparison
    std::vector<double> psi;
};

/// Phi(t) = integral of mu v + mu^2 / m_bar, midpoint quadrature per node.
inline LyapunovSeries lyapunov_series(const DynamicSolution& dyn, const StationarySolution& sol) {
    LyapunovSeries out;
    const double dt = dyn.T / dyn.n_steps;
    out.phi.reserve(dyn.mu_path.size());
    for (std::size_t n = 0; n < dyn.mu_path.size(); ++n) {
        const ScalarField& mu = dyn.mu_path[n];
        const ScalarField& v = dyn.v_path[n];
        double p = 0.0, q = 0.0;
        for (std::size_t i = 0; i < mu.size(); ++i) {
            p += mu.v[i] * v.v[i];
            q += mu.v[i] * mu.v[i] / sol.m_bar.v[i];
        }
        const double vol = dyn.grid.cell_volume();
        out.psi.push_back(p * vol);
        out.phi.push_back((p + q) * vol);
        out.phi_tilde.push_back(std::exp(-dyn.delta * (dt * static_cast<double>(n))) *
                                out.phi.back());
    }
    return out;
}

/// Quadratic Taylor remainder weight of the coupling at each cell:
/// integral over [0,1] of (1-s)^2 f_mm(x, m_bar + s mu) ds.
inline ScalarField taylor_remainder_weight(const CouplingModel& model, const ScalarField& m_bar,
                                           const ScalarField& mu) {
    ScalarField out(m_bar.grid);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto x = m_bar.grid.point(i);
        double acc = 0.0;
        for (std::size_t q = 0; q < GaussUnit8::nodes.size(); ++q) {
            const double s = GaussUnit8::nodes[q];
            acc += GaussUnit8::weights[q] * (1.0 - s) * (1.0 - s) *
                   model.deriv_mm(x, m_bar.v[i] + s * mu.v[i]);
        }
        out.v[i] = acc;
    }
    return out;
}

/// Pointwise defect of the dissipation identity for the discounted Lyapunov
/// functional: the centered time derivative of Phi-tilde plus the dissipation
/// integrand, evaluated at interior nodes (endpoints are left at zero).
inline std::vector<double> dissipation_residual_series(const DynamicSolution& dyn,
                                                       const StationarySolution& sol,
                                                       const CouplingModel& model) {
    const std::size_t len = dyn.mu_path.size();
    std::vector<double> residual(len, 0.0);
    if (len < 3) return residual;
    const double dt = dyn.T / dyn.n_steps;
    const LyapunovSeries lyap = lyapunov_series(dyn, sol);
    const ScalarField fm = model.deriv_m_on(sol.m_bar);
    const FacetField mh = face_mean_harmonic(sol.m_bar);

    for (std::size_t n = 1; n + 1 < len; ++n) {
        const ScalarField& mu = dyn.mu_path[n];
        const ScalarField& v = dyn.v_path[n];
        ScalarField z(dyn.grid);
        for (std::size_t i = 0; i < z.size(); ++i) z.v[i] = mu.v[i] / sol.m_bar.v[i];
        const FacetField gv = gradient(v);
        const FacetField gz = gradient(z);
        const FacetField mu_f = face_mean_arithmetic(mu);

        const ScalarField xi = taylor_remainder_weight(model, sol.m_bar, mu);
        double cells = 0.0;
        for (std::size_t i = 0; i < mu.size(); ++i) {
            cells += fm.v[i] * mu.v[i] * mu.v[i];
            cells += xi.v[i] * mu.v[i] * mu.v[i] * mu.v[i];
            cells += dyn.delta * mu.v[i] * mu.v[i] / sol.m_bar.v[i];
        }
        cells *= dyn.grid.cell_volume();
        const double rhs = cells + 0.5 * face_form(mu_f, gv, gv) + face_form(mh, gv, gv) +
                           2.0 * face_form(mh, gz, gz) + 2.0 * face_form(mh, gv, gz) +
                           2.0 * face_form(mu_f, gv, gz);
        const double t = dt * static_cast<double>(n);
        const double dphi = (lyap.phi_tilde[n + 1] - lyap.phi_tilde[n - 1]) / (2.0 * dt);
        residual[n] = std::abs(dphi + std::exp(-dyn.delta * t) * rhs);
    }
    return residual;
}

/// Max of the per-node residual over the middle 80% of the horizon.
inline double dissipation_summary(const std::vector<double>& residual) {
    const std::size_t len = residual.size();
    const std::size_t lo = len / 10;
    const std::size_t hi = len - len / 10;
    double m = 0.0;
    for (std::size_t n = lo; n < hi; ++n) m = std::max(m, residual[n]);
    return m;
}

struct EnvelopeFit {
    double amplitude_left = 0.0;
    double rate_left = std::numeric_limits<double>::quiet_NaN();
    double amplitude_right = 0.0;
    double rate_right = std::numeric_limits<double>::quiet_NaN();
    bool defined = false;
};

namespace detail {

/// Least squares of log(values) against a + b*x over the given index range.
inline void log_linear_fit(const std::vector<double>& x, const std::vector<double>& y,
                           std::size_t lo, std::size_t hi, double& a, double& b) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(hi - lo);
    for (std::size_t k = lo; k < hi; ++k) {
        sx += x[k];
        sy += y[k];
        sxx += x[k] * x[k];
        sxy += x[k] * y[k];
    }
    const double det = n * sxx - sx * sx;
    if (det == 0.0) {
        a = sy / n;
        b = 0.0;
        return;
    }
    b = (n * sxy - sx * sy) / det;
    a = (sy - b * sx) / n;
}

} // namespace detail

/// Fit series(t) ~ A_l e^{-r_l t} + A_r e^{-r_r (T-t)} by alternating
/// log-linear fits on the two half-windows, subtracting the current estimate
/// of the opposite tail. Deterministic: fixed iteration count, no randomness.
inline EnvelopeFit envelope_fit(const std::vector<double>& series, double T) {
    EnvelopeFit fit;
    const std::size_t len = series.size();
    if (len < 4) return fit;
    std::vector<double> t(len), floored(len);
    const double dt = T / static_cast<double>(len - 1);
    bool any = false;
    for (std::size_t k = 0; k < len; ++k) {
        t[k] = dt * static_cast<double>(k);
        floored[k] = std::max(series[k], 1e-300);
        if (series[k] > 1e-299) any = true;
    }
    if (!any) return fit;

    const std::size_t mid = len / 2;
    double al = 0.0, rl = 0.0, ar = 0.0, rr = 0.0;
    std::vector<double> logres(len);
    for (int pass = 0; pass < 20; ++pass) {
        for (std::size_t k = 0; k < len; ++k) {
            const double other = pass == 0 ? 0.0 : ar * std::exp(-rr * (T - t[k]));
            logres[k] = std::log(std::max(floored[k] - other, 1e-300));
        }
        double a, b;
        detail::log_linear_fit(t, logres, 0, mid + 1, a, b);
        al = std::exp(a);
        rl = -b;
        for (std::size_t k = 0; k < len; ++k) {
            const double other = al * std::exp(-rl * t[k]);
            logres[k] = std::log(std::max(floored[k] - other, 1e-300));
        }
        std::vector<double> s(len);
        for (std::size_t k = 0; k < len; ++k) s[k] = T - t[k];
        detail::log_linear_fit(s, logres, mid, len, a, b);
        ar = std::exp(a);
        rr = -b;
    }
    fit.amplitude_left = al;
    fit.rate_left = rl;
    fit.amplitude_right = ar;
    fit.rate_right = rr;
    fit.defined = true;
    return fit;
}

/// Single-exponential fit A e^{-r t} on the index window [k0, k1].
inline void single_rate_fit(const std::vector<double>& series, double dt, std::size_t k0,
                            std::size_t k1, double& amplitude, double& rate) {
    std::vector<double> t(series.size()), logv(series.size());
    for (std::size_t k = 0; k < series.size(); ++k) {
        t[k] = dt * static_cast<double>(k);
        logv[k] = std::log(std::max(series[k], 1e-300));
    }
    double a, b;
    detail::log_linear_fit(t, logv, k0, k1, a, b);
    amplitude = std::exp(a);
    rate = -b;
}

/// Two-sided exponential sandwich for Phi: decay from the left at sigma-delta
/// and growth toward the terminal layer at sigma+delta, with relative slack
/// and an absolute floor against rounding of tiny values.
inline bool phidelta_check(const std::vector<double>& phi, double T, double sigma, double delta,
                           double rel_slack = 0.05) {
    const std::size_t len = phi.size();
    if (len < 2) return true;
    const double dt = T / static_cast<double>(len - 1);
    const double floor_tol = 1e-14 * std::max(1e-300, std::abs(phi.front()));
    for (std::size_t k = 0; k < len; ++k) {
        const double t = dt * static_cast<double>(k);
        const double upper =
            phi.front() * std::exp(-(sigma - delta) * t) * (1.0 + rel_slack) + floor_tol;
        const double lower =
            phi.back() * std::exp(-(sigma + delta) * (T - t)) * (1.0 - rel_slack) - floor_tol;
        if (phi[k] > upper || phi[k] < lower) return false;
    }
    return true;
}

inline std::vector<double> mu_linf_series(const DynamicSolution& dyn) {
    std::vector<double> s;
    s.reserve(dyn.mu_path.size());
    for (const auto& mu : dyn.mu_path) s.push_back(norm_linf(mu));
    return s;
}

/// Squared weighted norms used by the decay inequalities.
inline std::vector<double> mu_l2winv_sq_series(const DynamicSolution& dyn,
                                               const StationarySolution& sol) {
    std::vector<double> s;
    s.reserve(dyn.mu_path.size());
    for (const auto& mu : dyn.mu_path) {
        const double x = norm_l2_weighted_inv(mu, sol.m_bar);
        s.push_back(x * x);
    }
    return s;
}

inline std::vector<double> dv_l2w_sq_series(const DynamicSolution& dyn,
                                            const StationarySolution& sol) {
    std::vector<double> s;
    s.reserve(dyn.v_path.size());
    for (const auto& v : dyn.v_path) s.push_back(dirichlet_weighted(sol.m_bar, v));
    return s;
}

struct WeightedChecks {
    bool applicable = false;
    bool mu_envelope_ok = false;
    bool dv_envelope_ok = false;
    bool phi_boundary_ok = false;
    double A = 0.0;
    double B = 0.0;
    double lambda1 = 0.0, lambda2 = 0.0, lambda3 = 0.0, lambda4 = 0.0;
    double worst_ratio_mu = 0.0;
    double worst_ratio_dv = 0.0;
    double phi_bound_lhs = 0.0;
    double phi_bound_rhs = 0.0;
};

/// Weighted-L2 decay inequalities along a run, with the amplitude constants
/// assembled from the boundary data sizes A and B and a configured envelope
/// constant. Skipped (applicable = false) when no positive rate is certified
/// or the caller knows the data is outside the smallness regime.
inline WeightedChecks weighted_l2_checks(const DynamicSolution& dyn,
                                         const StationarySolution& sol,
                                         const StabilityReport& stab, double C_config = 10.0,
                                         bool smallness_ok = true) {
    WeightedChecks out;
    if (!stab.satisfied || !(stab.sigma > 0.0) || !smallness_ok) return out;
    out.applicable = true;

    out.A = norm_l2_weighted_inv(dyn.mu_path.front(), sol.m_bar);
    out.B = norm_l2_weighted_grad(dyn.v_path.back(), sol.m_bar);
    const double A = out.A, B = out.B;
    const double base = A + A * A + 0.5 * stab.C_P * B * B;
    out.lambda1 = C_config * (A + 2.0 * A * A + 0.5 * stab.C_P * B * B);
    out.lambda2 = C_config * base;
    out.lambda3 = C_config * base;
    out.lambda4 = C_config * (base + B * B);

    const double dt = dyn.T / dyn.n_steps;
    const std::vector<double> mu_sq = mu_l2winv_sq_series(dyn, sol);
    const std::vector<double> dv_sq = dv_l2w_sq_series(dyn, sol);
    double worst_mu = 0.0, worst_dv = 0.0;
    for (std::size_t k = 0; k < mu_sq.size(); ++k) {
        const double t = dt * static_cast<double>(k);
        const double el = std::exp(-(stab.sigma - dyn.delta) * t);
        const double er = std::exp(-(stab.sigma + dyn.delta) * (dyn.T - t));
        const double bound_mu = out.lambda1 * el + out.lambda2 * er;
        const double bound_dv = out.lambda3 * el + out.lambda4 * er;
        if (bound_mu > 0.0) worst_mu = std::max(worst_mu, mu_sq[k] / bound_mu);
        if (bound_dv > 0.0) worst_dv = std::max(worst_dv, dv_sq[k] / bound_dv);
    }
    out.worst_ratio_mu = worst_mu;
    out.worst_ratio_dv = worst_dv;
    out.mu_envelope_ok = worst_mu <= 1.0;
    out.dv_envelope_ok = worst_dv <= 1.0;

    const LyapunovSeries lyap = lyapunov_series(dyn, sol);
    out.phi_bound_lhs = std::abs(lyap.phi.front()) + std::abs(lyap.phi.back());
    out.phi_bound_rhs = A + A * A + 0.5 * stab.C_P * B * B;
    out.phi_boundary_ok = out.phi_bound_lhs <= out.phi_bound_rhs * (1.0 + 1e-12);
    return out;
}

struct SupBoundCheck {
    bool ok = false;
    double lhs = 0.0;
    double rhs = 0.0;
    /// measured sup-norm envelope amplitude of mu
    double eps = 0.0;
};

/// Run-level sup bound on the value perturbation: sup_t |v|_inf stays below
/// |v_T|_inf + 2 eps (1/sigma1 + 1/sigma2) C_f with 10% slack, where eps is
/// the measured envelope amplitude of |mu|_inf.
inline SupBoundCheck sup_v_bound_check(const DynamicSolution& dyn, const StabilityReport& stab,
                                       double C_f) {
    SupBoundCheck out;
    if (!(stab.sigma1 > 0.0) || !(stab.sigma2 > 0.0)) return out;
    const double dt = dyn.T / dyn.n_steps;
    double eps = 0.0;
    for (std::size_t k = 0; k < dyn.mu_path.size(); ++k) {
        const double t = dt * static_cast<double>(k);
        const double w = std::exp(-stab.sigma1 * t) + std::exp(-stab.sigma2 * (dyn.T - t));
        eps = std::max(eps, norm_linf(dyn.mu_path[k]) / w);
    }
    out.eps = eps;
    double sup_v = 0.0;
    for (const auto& v : dyn.v_path) sup_v = std::max(sup_v, norm_linf(v));
    out.lhs = sup_v;
    out.rhs = norm_linf(dyn.v_path.back()) + 2.0 * eps * (1.0 / stab.sigma1 + 1.0 / stab.sigma2) * C_f;
    out.ok = out.lhs <= out.rhs * 1.10;
    return out;
}

struct TurnpikeReport {
    std::vector<double> phi, phi_tilde, psi;
    std::vector<double> dissipation_residual;
    double dissipation_max = 0.0;
    std::vector<double> mu_linf, dv_l2w_sq;
    EnvelopeFit envelope_mu;
    EnvelopeFit envelope_dv_l2;
    bool phidelta_ok = false;
    /// configured/predicted constants echoed for the report consumer
    double sigma = std::numeric_limits<double>::quiet_NaN();
    double sigma1 = std::numeric_limits<double>::quiet_NaN();
    double sigma2 = std::numeric_limits<double>::quiet_NaN();
    double theta_cap = std::numeric_limits<double>::quiet_NaN();
    double eps_bar = std::numeric_limits<double>::quiet_NaN();
    double lambda_bar = std::numeric_limits<double>::quiet_NaN();
    WeightedChecks weighted;
    SupBoundCheck sup_v;
};

inline TurnpikeReport compute_turnpike_report(const DynamicSolution& dyn,
                                              const StationarySolution& sol,
                                              const CouplingModel& model,
                                              const StabilityReport& stab,
                                              double C_config = 10.0, bool smallness_ok = true) {
    TurnpikeReport rep;
    const LyapunovSeries lyap = lyapunov_series(dyn, sol);
    rep.phi = lyap.phi;
    rep.phi_tilde = lyap.phi_tilde;
    rep.psi = lyap.psi;
    rep.dissipation_residual = dissipation_residual_series(dyn, sol, model);
    rep.dissipation_max = dissipation_summary(rep.dissipation_residual);
    rep.mu_linf = mu_linf_series(dyn);
    rep.dv_l2w_sq = dv_l2w_sq_series(dyn, sol);
    rep.envelope_mu = envelope_fit(rep.mu_linf, dyn.T);
    rep.envelope_dv_l2 = envelope_fit(rep.dv_l2w_sq, dyn.T);
    rep.sigma = stab.sigma;
    rep.sigma1 = stab.sigma1;
    rep.sigma2 = stab.sigma2;
    rep.theta_cap = stab.theta_cap;
    rep.phidelta_ok =
        stab.satisfied && stab.sigma > 0.0
            ? phidelta_check(rep.phi, dyn.T, stab.sigma, dyn.delta)
            : false;
    rep.weighted = weighted_l2_checks(dyn, sol, stab, C_config, smallness_ok);
    rep.sup_v = sup_v_bound_check(dyn, stab, model.C_f);
    return rep;
}

} // namespace mfglab
