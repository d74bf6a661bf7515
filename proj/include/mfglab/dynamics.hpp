#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "mfglab/coupling.hpp"
#include "mfglab/operators.hpp"
#include "mfglab/quadrature.hpp"
#include "mfglab/stability.hpp"
#include "mfglab/stationary.hpp"

namespace mfglab {

/// Finite-horizon solver for the perturbation system around a stationary
/// pair, written in the difference variables (mu, v) = (m - m_bar, u - u_bar).
///
/// One application of the map F: first march v backward against a frozen
/// density perturbation rho, then march mu forward driven by v. The outer
/// loop damps F and ramps the coupling strength nu from the schedule up to 1,
/// warm-starting each stage from the previous one. Convergence is measured in
/// a sup norm weighted by the predicted two-sided exponential envelope when
/// the stability analysis certifies one, and in the plain sup norm otherwise.

enum class BackwardScheme { cole_hopf, semi_implicit };

struct SolveOptions {
    /// 0 derives the step count from dt <= h^2/4
    int n_steps = 0;
    double damping = 0.5;
    std::vector<double> nu_schedule{0.25, 0.5, 0.75, 1.0};
    double tol = 1e-9;
    int max_outer = 500;
    BackwardScheme backward_scheme = BackwardScheme::semi_implicit;
};

struct TraceEntry {
    double nu = 0.0;
    double damping = 0.0;
    int iteration = 0;
    double change = 0.0;
};

struct DynamicSolution {
    PeriodicGrid grid;
    double T = 0.0;
    int n_steps = 0;
    double delta = 0.0;
    std::vector<ScalarField> u_path, m_path, mu_path, v_path;
    std::vector<TraceEntry> trace;
    bool converged = false;
    bool positivity_ok = true;
    /// true when the stopping norm used the certified envelope weights
    bool weighted_norm = false;
    double sigma1 = std::numeric_limits<double>::quiet_NaN();
    double sigma2 = std::numeric_limits<double>::quiet_NaN();
};

/// Non-convergence carrying the full outer-iteration trace for reporting.
class MfgConvergenceError : public ConvergenceError {
  public:
    MfgConvergenceError(const std::string& msg, double residual, int iters,
                        std::vector<TraceEntry> tr)
        : ConvergenceError(msg, residual, iters), trace(std::move(tr)) {}
    std::vector<TraceEntry> trace;
};

using FieldPath = std::vector<ScalarField>;

namespace detail {

inline Eigen::VectorXd path_vec(const ScalarField& f) {
    return Eigen::Map<const Eigen::VectorXd>(f.v.data(), static_cast<Eigen::Index>(f.size()));
}

inline void vec_to_field(const Eigen::VectorXd& x, ScalarField& f) {
    for (std::size_t i = 0; i < f.size(); ++i) f.v[i] = x(static_cast<Eigen::Index>(i));
}

/// Backward value march, implicit diffusion, everything else at the known
/// upper time level.
inline FieldPath hjb_backward_si(const Eigen::PartialPivLU<Eigen::MatrixXd>& heat_lu,
                                 const FieldPath& rho_path, double nu, const ScalarField& v_T,
                                 const StationarySolution& sol, const CouplingModel& model,
                                 double delta, double dt) {
    const PeriodicGrid& gr = sol.m_bar.grid;
    const int n_steps = static_cast<int>(rho_path.size()) - 1;
    const FacetField gu = gradient(sol.u_bar);
    FieldPath v(static_cast<std::size_t>(n_steps) + 1, ScalarField(gr));
    v[static_cast<std::size_t>(n_steps)] = v_T;
    for (int n = n_steps - 1; n >= 0; --n) {
        const ScalarField& vup = v[static_cast<std::size_t>(n) + 1];
        const FacetField gv = gradient(vup);
        const ScalarField adv = cell_average_product(gv, gu);
        const ScalarField kin = cell_average_product(gv, gv);
        const ScalarField inc =
            coupling_increment(model, sol.m_bar, rho_path[static_cast<std::size_t>(n) + 1], nu);
        Eigen::VectorXd rhs(static_cast<Eigen::Index>(gr.size()));
        for (std::size_t i = 0; i < gr.size(); ++i) {
            const double b = adv.v[i] + 0.5 * kin.v[i] + delta * vup.v[i] - inc.v[i];
            rhs(static_cast<Eigen::Index>(i)) = vup.v[i] - dt * b;
        }
        vec_to_field(heat_lu.solve(rhs), v[static_cast<std::size_t>(n)]);
        if (!v[static_cast<std::size_t>(n)].all_finite())
            throw NumericError("hjb backward march produced non-finite values");
    }
    return v;
}

/// Backward value march through w = exp(-v/2); the transformed equation is
/// linear in w with a multiplicative source frozen at the upper level.
inline FieldPath hjb_backward_ch(const Eigen::PartialPivLU<Eigen::MatrixXd>& astar_lu,
                                 const FieldPath& rho_path, double nu, const ScalarField& v_T,
                                 const StationarySolution& sol, const CouplingModel& model,
                                 double delta, double dt) {
    const PeriodicGrid& gr = sol.m_bar.grid;
    const int n_steps = static_cast<int>(rho_path.size()) - 1;
    FieldPath v(static_cast<std::size_t>(n_steps) + 1, ScalarField(gr));
    v[static_cast<std::size_t>(n_steps)] = v_T;
    ScalarField w(gr);
    for (std::size_t i = 0; i < gr.size(); ++i) w.v[i] = std::exp(-0.5 * v_T.v[i]);
    for (int n = n_steps - 1; n >= 0; --n) {
        const ScalarField& vup = v[static_cast<std::size_t>(n) + 1];
        const ScalarField inc =
            coupling_increment(model, sol.m_bar, rho_path[static_cast<std::size_t>(n) + 1], nu);
        Eigen::VectorXd rhs(static_cast<Eigen::Index>(gr.size()));
        for (std::size_t i = 0; i < gr.size(); ++i) {
            const double c = inc.v[i] - delta * vup.v[i];
            rhs(static_cast<Eigen::Index>(i)) = w.v[i] * (1.0 - 0.5 * dt * c);
        }
        vec_to_field(astar_lu.solve(rhs), w);
        if (!w.all_finite()) throw NumericError("cole-hopf march produced non-finite values");
        if (!w.all_positive())
            throw NumericError("cole-hopf transform broke down (w <= 0); reduce the time step");
        ScalarField& vn = v[static_cast<std::size_t>(n)];
        for (std::size_t i = 0; i < gr.size(); ++i) vn.v[i] = -2.0 * std::log(w.v[i]);
    }
    return v;
}

/// Forward density march in flux form: the linear transport part is
/// implicit, the value-driven fluxes explicit at the same level the density
/// enters with. The mean is projected out after every step so the discrete
/// mass is conserved to rounding.
inline FieldPath fp_forward(const Eigen::PartialPivLU<Eigen::MatrixXd>& fp_lu,
                            const FieldPath& v_path, const ScalarField& mu_0,
                            const StationarySolution& sol, double dt, bool& positive) {
    const PeriodicGrid& gr = sol.m_bar.grid;
    const int n_steps = static_cast<int>(v_path.size()) - 1;
    const FacetField mh = face_mean_harmonic(sol.m_bar);
    FieldPath mu(static_cast<std::size_t>(n_steps) + 1, ScalarField(gr));
    mu[0] = mu_0;
    positive = true;
    for (std::size_t i = 0; i < gr.size(); ++i)
        if (sol.m_bar.v[i] + mu_0.v[i] <= 0.0) positive = false;
    for (int n = 0; n < n_steps; ++n) {
        const ScalarField& mun = mu[static_cast<std::size_t>(n)];
        const FacetField gv = gradient(v_path[static_cast<std::size_t>(n)]);
        const FacetField ma = face_mean_arithmetic(mun);
        FacetField flux(gr);
        for (int a = 0; a < gr.dim; ++a) {
            auto& fa = flux.axis(a);
            const auto& gva = gv.axis(a);
            const auto& mha = mh.axis(a);
            const auto& maa = ma.axis(a);
            for (std::size_t i = 0; i < fa.size(); ++i)
                fa[i] = (mha[i] + maa[i]) * gva[i];
        }
        const ScalarField drive = divergence(flux);
        Eigen::VectorXd rhs(static_cast<Eigen::Index>(gr.size()));
        for (std::size_t i = 0; i < gr.size(); ++i)
            rhs(static_cast<Eigen::Index>(i)) = mun.v[i] + dt * drive.v[i];
        ScalarField& next = mu[static_cast<std::size_t>(n) + 1];
        vec_to_field(fp_lu.solve(rhs), next);
        if (!next.all_finite()) throw NumericError("fp forward march produced non-finite values");
        set_mean(next, 0.0);
        for (std::size_t i = 0; i < gr.size(); ++i)
            if (sol.m_bar.v[i] + next.v[i] <= 0.0) positive = false;
    }
    return mu;
}

/// sup over time nodes of |a - b|_inf divided by the two-sided envelope.
inline double weighted_path_distance(const FieldPath& a, const FieldPath& b,
                                     const std::vector<double>& inv_weight) {
    double d = 0.0;
    for (std::size_t n = 0; n < a.size(); ++n) {
        double s = 0.0;
        for (std::size_t i = 0; i < a[n].size(); ++i)
            s = std::max(s, std::abs(a[n].v[i] - b[n].v[i]));
        d = std::max(d, s * inv_weight[n]);
    }
    return d;
}

} // namespace detail

inline int default_step_count(const PeriodicGrid& gr, double T) {
    double h2 = std::numeric_limits<double>::infinity();
    for (int a = 0; a < gr.dim; ++a) h2 = std::min(h2, gr.h(a) * gr.h(a));
    return std::max(1, static_cast<int>(std::ceil(T / (0.25 * h2))));
}

/// One backward sweep of the value perturbation against a frozen rho path.
inline FieldPath solve_hjb_backward(const FieldPath& rho_path, double nu, const ScalarField& v_T,
                                    const StationarySolution& sol, const CouplingModel& model,
                                    double delta, double T, const SolveOptions& opts) {
    if (rho_path.size() < 2) throw DomainError("solve_hjb_backward: need at least one time step");
    if (!v_T.all_finite()) throw DomainError("solve_hjb_backward: terminal data not finite");
    const PeriodicGrid& gr = sol.m_bar.grid;
    const double dt = T / (static_cast<int>(rho_path.size()) - 1);
    const Eigen::Index N = static_cast<Eigen::Index>(gr.size());
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(N, N);
    if (opts.backward_scheme == BackwardScheme::semi_implicit) {
        const Eigen::PartialPivLU<Eigen::MatrixXd> lu(I - dt * laplacian_matrix(gr));
        return detail::hjb_backward_si(lu, rho_path, nu, v_T, sol, model, delta, dt);
    }
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(I - dt * apply_Astar_matrix(sol.m_bar));
    return detail::hjb_backward_ch(lu, rho_path, nu, v_T, sol, model, delta, dt);
}

/// One forward sweep of the density perturbation driven by a value path.
inline FieldPath solve_fp_forward(const FieldPath& v_path, const ScalarField& mu_0,
                                  const StationarySolution& sol, double T,
                                  const SolveOptions& opts, bool* positive_out = nullptr) {
    (void)opts;
    if (v_path.size() < 2) throw DomainError("solve_fp_forward: need at least one time step");
    if (std::abs(integrate(mu_0)) > 1e-10)
        throw DomainError("solve_fp_forward: initial perturbation must have zero mass");
    const PeriodicGrid& gr = sol.m_bar.grid;
    const double dt = T / (static_cast<int>(v_path.size()) - 1);
    const Eigen::Index N = static_cast<Eigen::Index>(gr.size());
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(N, N);
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(I - dt * apply_A_matrix(sol.m_bar));
    bool positive = true;
    FieldPath mu = detail::fp_forward(lu, v_path, mu_0, sol, dt, positive);
    if (positive_out) *positive_out = positive;
    return mu;
}

/// Damped continuation fixed point for the full perturbation system.
inline DynamicSolution solve_mfg(const ScalarField& mu_0, const ScalarField& v_T, double T,
                                 double delta, const StationarySolution& sol,
                                 const CouplingModel& model, const SolveOptions& opts = {}) {
    const PeriodicGrid& gr = sol.m_bar.grid;
    require_same_grid(gr, mu_0.grid, "solve_mfg");
    require_same_grid(gr, v_T.grid, "solve_mfg");
    if (!(T > 0.0)) throw DomainError("solve_mfg: horizon must be positive");
    if (!(opts.damping > 0.0) || opts.damping > 1.0)
        throw DomainError("solve_mfg: damping must lie in (0, 1]");
    if (opts.nu_schedule.empty() || opts.nu_schedule.back() != 1.0)
        throw DomainError("solve_mfg: nu schedule must end at 1");
    for (std::size_t k = 0; k < opts.nu_schedule.size(); ++k) {
        const double nu = opts.nu_schedule[k];
        if (nu < 0.0 || nu > 1.0 || (k > 0 && nu < opts.nu_schedule[k - 1]))
            throw DomainError("solve_mfg: nu schedule must be nondecreasing in [0, 1]");
    }
    if (std::abs(integrate(mu_0)) > 1e-10)
        throw DomainError("solve_mfg: initial perturbation must have zero mass");
    if (!mu_0.all_finite() || !v_T.all_finite())
        throw DomainError("solve_mfg: boundary data must be finite");

    const int n_steps = opts.n_steps > 0 ? opts.n_steps : default_step_count(gr, T);
    const double dt = T / n_steps;

    DynamicSolution out;
    out.grid = gr;
    out.T = T;
    out.n_steps = n_steps;
    out.delta = delta;

    const StabilityReport stab = analyze_stability(sol.m_bar, model, delta);
    std::vector<double> inv_weight(static_cast<std::size_t>(n_steps) + 1, 1.0);
    if (stab.satisfied && stab.sigma1 > 0.0) {
        out.weighted_norm = true;
        out.sigma1 = stab.sigma1;
        out.sigma2 = stab.sigma2;
        for (int n = 0; n <= n_steps; ++n) {
            const double t = n * dt;
            inv_weight[static_cast<std::size_t>(n)] =
                1.0 / (std::exp(-stab.sigma1 * t) + std::exp(-stab.sigma2 * (T - t)));
        }
    }

    const Eigen::Index N = static_cast<Eigen::Index>(gr.size());
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(N, N);
    const Eigen::PartialPivLU<Eigen::MatrixXd> fp_lu(I - dt * apply_A_matrix(sol.m_bar));
    const Eigen::PartialPivLU<Eigen::MatrixXd> back_lu(
        opts.backward_scheme == BackwardScheme::semi_implicit
            ? Eigen::MatrixXd(I - dt * laplacian_matrix(gr))
            : Eigen::MatrixXd(I - dt * apply_Astar_matrix(sol.m_bar)));

    FieldPath rho(static_cast<std::size_t>(n_steps) + 1, ScalarField(gr));
    FieldPath v_last, mu_last;
    bool positive = true;

    for (double nu : opts.nu_schedule) {
        ScalarField mu0_nu = mu_0;
        ScalarField vT_nu = v_T;
        for (double& x : mu0_nu.v) x *= nu;
        for (double& x : vT_nu.v) x *= nu;
        bool stage_done = false;
        for (int it = 1; it <= opts.max_outer; ++it) {
            FieldPath v =
                opts.backward_scheme == BackwardScheme::semi_implicit
                    ? detail::hjb_backward_si(back_lu, rho, nu, vT_nu, sol, model, delta, dt)
                    : detail::hjb_backward_ch(back_lu, rho, nu, vT_nu, sol, model, delta, dt);
            FieldPath mu = detail::fp_forward(fp_lu, v, mu0_nu, sol, dt, positive);
            FieldPath next(rho.size(), ScalarField(gr));
            for (std::size_t n = 0; n < rho.size(); ++n)
                for (std::size_t i = 0; i < gr.size(); ++i)
                    next[n].v[i] =
                        (1.0 - opts.damping) * rho[n].v[i] + opts.damping * mu[n].v[i];
            const double change = detail::weighted_path_distance(next, rho, inv_weight);
            out.trace.push_back({nu, opts.damping, it, change});
            rho = std::move(next);
            v_last = std::move(v);
            mu_last = std::move(mu);
            if (change <= opts.tol) {
                stage_done = true;
                break;
            }
        }
        if (!stage_done)
            throw MfgConvergenceError("solve_mfg: outer iteration did not converge at nu = " +
                                          std::to_string(nu),
                                      out.trace.back().change, static_cast<int>(out.trace.size()),
                                      out.trace);
    }

    out.converged = true;
    out.positivity_ok = positive;
    out.mu_path = std::move(mu_last);
    out.v_path = std::move(v_last);
    out.m_path.reserve(out.mu_path.size());
    out.u_path.reserve(out.v_path.size());
    for (std::size_t n = 0; n < out.mu_path.size(); ++n) {
        out.m_path.push_back(out.mu_path[n] + sol.m_bar);
        out.u_path.push_back(out.v_path[n] + sol.u_bar);
    }
    return out;
}

struct InfiniteHorizonSolution {
    /// largest-horizon solution restricted to the first half window
    DynamicSolution window;
    /// sup distance between consecutive-horizon densities on the shared window
    std::vector<double> discrepancies;
    std::vector<double> horizons;
    bool monotone = false;
};

/// Approximate the infinite-horizon equilibrium by solving finite problems
/// with zero terminal data at increasing horizons and comparing consecutive
/// solutions on the first half of the shorter horizon. All horizons share one
/// time step so the comparison nodes align exactly.
inline InfiniteHorizonSolution solve_infinite_horizon(const ScalarField& mu_0, double delta,
                                                      const StationarySolution& sol,
                                                      const CouplingModel& model,
                                                      const std::vector<double>& horizons,
                                                      const SolveOptions& opts = {}) {
    if (horizons.size() < 2)
        throw DomainError("solve_infinite_horizon: need at least two horizons");
    for (std::size_t k = 1; k < horizons.size(); ++k)
        if (horizons[k] <= horizons[k - 1])
            throw DomainError("solve_infinite_horizon: horizons must be strictly increasing");

    const double T_last = horizons.back();
    const int n_last = opts.n_steps > 0 ? opts.n_steps : default_step_count(sol.m_bar.grid, T_last);
    const double dt = T_last / n_last;
    const ScalarField vT_zero(sol.m_bar.grid, 0.0);

    std::vector<DynamicSolution> runs;
    runs.reserve(horizons.size());
    for (double T : horizons) {
        SolveOptions o = opts;
        o.n_steps = std::max(1, static_cast<int>(std::lround(T / dt)));
        runs.push_back(solve_mfg(mu_0, vT_zero, T, delta, sol, model, o));
    }

    InfiniteHorizonSolution out;
    out.horizons = horizons;
    for (std::size_t k = 0; k + 1 < runs.size(); ++k) {
        const int half = runs[k].n_steps / 2;
        double d = 0.0;
        for (int n = 0; n <= half; ++n)
            for (std::size_t i = 0; i < sol.m_bar.size(); ++i)
                d = std::max(d, std::abs(runs[k].m_path[static_cast<std::size_t>(n)].v[i] -
                                         runs[k + 1].m_path[static_cast<std::size_t>(n)].v[i]));
        out.discrepancies.push_back(d);
    }
    out.monotone = true;
    for (std::size_t k = 1; k < out.discrepancies.size(); ++k)
        if (out.discrepancies[k] > out.discrepancies[k - 1]) out.monotone = false;

    DynamicSolution& last = runs.back();
    const int half = last.n_steps / 2;
    out.window.grid = last.grid;
    out.window.T = half * dt;
    out.window.n_steps = half;
    out.window.delta = delta;
    out.window.trace = last.trace;
    out.window.converged = last.converged;
    out.window.positivity_ok = last.positivity_ok;
    out.window.weighted_norm = last.weighted_norm;
    out.window.sigma1 = last.sigma1;
    out.window.sigma2 = last.sigma2;
    const auto take = [half](const std::vector<ScalarField>& p) {
        return std::vector<ScalarField>(p.begin(), p.begin() + half + 1);
    };
    out.window.u_path = take(last.u_path);
    out.window.m_path = take(last.m_path);
    out.window.mu_path = take(last.mu_path);
    out.window.v_path = take(last.v_path);
    return out;
}

} // namespace mfglab
