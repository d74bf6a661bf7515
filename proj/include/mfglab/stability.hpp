#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <string>

#include "mfglab/coupling.hpp"
#include "mfglab/operators.hpp"
#include "mfglab/quadrature.hpp"

namespace mfglab {

/// Certification of the coercivity condition behind the turnpike rates.
///
/// Everything is phrased in the ratio variable z = mu / m_bar, which turns
/// the three equivalent coercivity statements into symmetric-definite matrix
/// pencils built from the exact discrete stiffness. The zero-weighted-mean
/// constraint (integral of m_bar z = 0) is enforced by an explicit
/// orthonormal deflation basis, never by Lagrange bordering, so every pencil
/// handed to the eigensolver stays definite.

/// Orthonormal basis of the Euclidean complement of span{w}: the trailing
/// N-1 columns of the Householder reflector sending w to a multiple of e_1.
inline Eigen::MatrixXd complement_basis(const Eigen::VectorXd& w) {
    const Eigen::Index N = w.size();
    const double nw = w.norm();
    if (!(nw > 0.0))
        throw ContractError("complement_basis: constraint vector is zero");
    Eigen::VectorXd u = w;
    u(0) += (w(0) >= 0.0 ? nw : -nw);
    const double uu = u.squaredNorm();
    Eigen::MatrixXd H = Eigen::MatrixXd::Identity(N, N);
    if (uu > 0.0) H -= (2.0 / uu) * (u * u.transpose());
    return H.rightCols(N - 1);
}

inline Eigen::VectorXd to_vector(const ScalarField& f) {
    return Eigen::Map<const Eigen::VectorXd>(f.v.data(), static_cast<Eigen::Index>(f.size()));
}

inline ScalarField to_field(const PeriodicGrid& grid, const Eigen::VectorXd& v) {
    ScalarField f(grid);
    for (std::size_t i = 0; i < f.size(); ++i) f.v[i] = v(static_cast<Eigen::Index>(i));
    return f;
}

/// Weighted Poincare constant of the density: C_P = 1/theta_1, where theta_1
/// is the smallest eigenvalue of the pencil BB*(m_bar) g = theta (m_bar g)
/// restricted to zero-weighted-mean g.
inline double poincare_constant(const ScalarField& m_bar) {
    if (!m_bar.all_positive())
        throw DomainError("poincare_constant: density must be strictly positive");
    const Eigen::MatrixXd S = apply_BBstar_matrix(m_bar);
    const Eigen::VectorXd w = to_vector(m_bar);
    const Eigen::MatrixXd P = complement_basis(w);
    const Eigen::MatrixXd A = P.transpose() * S * P;
    const Eigen::MatrixXd B = P.transpose() * w.asDiagonal() * P;
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(A, B);
    if (es.info() != Eigen::Success)
        throw NumericError("poincare_constant: generalized eigensolve failed");
    const double theta1 = es.eigenvalues()(0);
    if (theta1 <= 1e-12)
        throw NumericError("poincare_constant: degenerate weight, smallest eigenvalue " +
                           std::to_string(theta1));
    return 1.0 / theta1;
}

/// Euclidean matrix of the coercivity quadratic form in z (volume factor
/// dropped consistently on both sides of every pencil):
///   Q(z) = integral of f_m(x, m_bar) m_bar^2 z^2 + m_bar |Dz|^2 + delta m_bar z^2.
inline Eigen::MatrixXd coercivity_matrix(const ScalarField& m_bar,
                                         const ScalarField& fm_at_mbar, double delta) {
    Eigen::MatrixXd Q = apply_BBstar_matrix(m_bar);
    for (std::size_t i = 0; i < m_bar.size(); ++i) {
        const Eigen::Index k = static_cast<Eigen::Index>(i);
        Q(k, k) += fm_at_mbar.v[i] * m_bar.v[i] * m_bar.v[i] + delta * m_bar.v[i];
    }
    return Q;
}

/// Minimum of Q(z) over the denominators of the three equivalent coercivity
/// statements, on zero-weighted-mean z:
///   form 'a': B = integral of m_bar |Dz|^2     (stiffness itself)
///   form 'b': B = integral of m_bar z^2
///   form 'c': B = integral of m_bar^2 z^2
/// The returned minimum is raw: it may exceed 1 or be negative.
inline double eta_form(const ScalarField& m_bar, const ScalarField& fm_at_mbar, double delta,
                       char form) {
    require_same_grid(m_bar.grid, fm_at_mbar.grid, "eta_form");
    if (!m_bar.all_positive())
        throw DomainError("eta_form: density must be strictly positive");
    if (form != 'a' && form != 'b' && form != 'c')
        throw UsageError(std::string("eta_form: unknown form '") + form + "'");
    const Eigen::MatrixXd Q = coercivity_matrix(m_bar, fm_at_mbar, delta);
    const Eigen::VectorXd w = to_vector(m_bar);
    const Eigen::Index N = w.size();
    Eigen::MatrixXd B;
    if (form == 'a') {
        B = apply_BBstar_matrix(m_bar);
    } else {
        B = Eigen::MatrixXd::Zero(N, N);
        for (Eigen::Index i = 0; i < N; ++i)
            B(i, i) = form == 'b' ? w(i) : w(i) * w(i);
    }
    const Eigen::MatrixXd P = complement_basis(w);
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(P.transpose() * Q * P,
                                                                 P.transpose() * B * P);
    if (es.info() != Eigen::Success)
        throw NumericError("eta_form: generalized eigensolve failed");
    return es.eigenvalues()(0);
}

inline double eta_form(const ScalarField& m_bar, const CouplingModel& model, double delta,
                       char form) {
    return eta_form(m_bar, model.deriv_m_on(m_bar), delta, form);
}

struct PrincipalEigenpair {
    double eta1 = 0.0;
    ScalarField v;
    ScalarField mu;
    double ell = 0.0;
    /// sup residuals of the two characterizations of the pair, for reporting
    double residual_rayleigh = 0.0;
    double residual_system = 0.0;
    /// true when the next eigenvalue sits within 1e-8 of eta1
    bool degenerate = false;
};

/// Principal eigenpair of the linearized stationary system. The minimizer of
/// form 'b' gives mu (normalized so integral of mu^2/m_bar = 1), the value
/// function direction is v = -mu/m_bar, and the Lagrange constant ell is the
/// weighted average that makes the pointwise optimality equation
///   f_m(x, m_bar) mu - div(m_bar D(mu/m_bar))/m_bar + delta mu/m_bar
///     = eta1 mu/m_bar + ell
/// orthogonal to constants. The companion system
///   -Delta v + <Dv, Du_bar> + delta v - f_m mu = eta1 v - ell
///   Delta mu + div(m_bar Dv) + div(mu Du_bar) = 0
/// then holds with the same data; both residuals are evaluated with the
/// field-core operators and reported.
inline PrincipalEigenpair principal_eigenpair(const ScalarField& m_bar,
                                              const ScalarField& fm_at_mbar, double delta) {
    require_same_grid(m_bar.grid, fm_at_mbar.grid, "principal_eigenpair");
    if (!m_bar.all_positive())
        throw DomainError("principal_eigenpair: density must be strictly positive");
    const Eigen::MatrixXd Q = coercivity_matrix(m_bar, fm_at_mbar, delta);
    const Eigen::VectorXd w = to_vector(m_bar);
    const Eigen::MatrixXd P = complement_basis(w);
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(w.size(), w.size());
    for (Eigen::Index i = 0; i < w.size(); ++i) B(i, i) = w(i);
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(P.transpose() * Q * P,
                                                                 P.transpose() * B * P);
    if (es.info() != Eigen::Success)
        throw NumericError("principal_eigenpair: generalized eigensolve failed");

    PrincipalEigenpair out;
    out.eta1 = es.eigenvalues()(0);
    if (es.eigenvalues().size() > 1)
        out.degenerate = es.eigenvalues()(1) - es.eigenvalues()(0) <=
                         1e-8 * std::max(1.0, std::abs(es.eigenvalues()(0)));

    Eigen::VectorXd z = P * es.eigenvectors().col(0);
    // scale to integral of m_bar z^2 = 1 and pin the sign of the largest entry
    const double vol = m_bar.grid.cell_volume();
    double mass = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) mass += w(i) * z(i) * z(i);
    z /= std::sqrt(mass * vol);
    Eigen::Index peak = 0;
    z.cwiseAbs().maxCoeff(&peak);
    if (z(peak) < 0.0) z = -z;

    const ScalarField zf = to_field(m_bar.grid, z);
    out.mu = hadamard(m_bar, zf);
    out.v = -1.0 * zf;
    out.ell = inner_product(hadamard(fm_at_mbar, m_bar), out.mu) / integrate(m_bar);

    // optimality equation residual, assembled from the stiffness action
    const ScalarField Sz = apply_BBstar(m_bar, zf);
    double ray = 0.0;
    for (std::size_t i = 0; i < m_bar.size(); ++i) {
        const double r = fm_at_mbar.v[i] * out.mu.v[i] + Sz.v[i] / m_bar.v[i] +
                         delta * zf.v[i] - out.eta1 * zf.v[i] - out.ell;
        ray = std::max(ray, std::abs(r));
    }
    out.residual_rayleigh = ray;

    // companion system evaluated through the generator and its adjoint
    const ScalarField Astar_v = apply_Astar(m_bar, out.v);
    double sys = 0.0;
    for (std::size_t i = 0; i < m_bar.size(); ++i) {
        const double r = -Astar_v.v[i] + delta * out.v.v[i] - fm_at_mbar.v[i] * out.mu.v[i] -
                         out.eta1 * out.v.v[i] + out.ell;
        sys = std::max(sys, std::abs(r));
    }
    const ScalarField Amu = apply_A(m_bar, out.mu);
    const ScalarField Sv = apply_BBstar(m_bar, out.v);
    for (std::size_t i = 0; i < m_bar.size(); ++i)
        sys = std::max(sys, std::abs(Amu.v[i] - Sv.v[i]));
    out.residual_system = sys;
    return out;
}

inline PrincipalEigenpair principal_eigenpair(const ScalarField& m_bar,
                                              const CouplingModel& model, double delta) {
    return principal_eigenpair(m_bar, model.deriv_m_on(m_bar), delta);
}

struct PredictedRates {
    double sigma = 0.0;
    double sigma1 = 0.0;
    double sigma2 = 0.0;
    double theta_cap = 0.0;
};

/// Decay rates and the smallness cap implied by a positive coercivity
/// constant. eta is clamped to (0, 1] before use.
inline PredictedRates predicted_rates(double eta_a, double C_P, double delta, double C_f,
                                      double sup_m_bar, int dim) {
    if (!(eta_a > 0.0))
        throw DomainError("predicted_rates: coercivity constant must be positive");
    const double eta = std::min(eta_a, 1.0);
    PredictedRates r;
    r.sigma = eta / (32.0 * C_P);
    r.sigma1 = (r.sigma - delta) / (dim + 1);
    r.sigma2 = (r.sigma + delta) / (dim + 1);
    r.theta_cap = std::min(eta / 16.0, eta / (16.0 * C_P * (C_f * sup_m_bar + 1.25)));
    return r;
}

struct StabilityReport {
    double C_P = 0.0;
    double eta_a = 0.0;
    double eta_b = 0.0;
    double eta_c = 0.0;
    double eta_principal = 0.0;
    double ell = 0.0;
    double sigma = std::numeric_limits<double>::quiet_NaN();
    double sigma1 = std::numeric_limits<double>::quiet_NaN();
    double sigma2 = std::numeric_limits<double>::quiet_NaN();
    double theta_cap = std::numeric_limits<double>::quiet_NaN();
    bool satisfied = false;
};

/// Full certification run: Poincare constant, the three coercivity minima,
/// the principal pair, and the predicted rates. When the coercivity fails
/// (eta_a <= 0) the rates stay NaN and satisfied is false; the report is
/// still returned so the failure can be serialized.
inline StabilityReport analyze_stability(const ScalarField& m_bar, const CouplingModel& model,
                                         double delta) {
    const ScalarField fm = model.deriv_m_on(m_bar);
    StabilityReport rep;
    rep.C_P = poincare_constant(m_bar);
    rep.eta_a = eta_form(m_bar, fm, delta, 'a');
    rep.eta_b = eta_form(m_bar, fm, delta, 'b');
    rep.eta_c = eta_form(m_bar, fm, delta, 'c');
    const PrincipalEigenpair pp = principal_eigenpair(m_bar, fm, delta);
    rep.eta_principal = pp.eta1;
    rep.ell = pp.ell;
    rep.satisfied = rep.eta_a > 0.0;
    if (rep.satisfied) {
        double sup_m = 0.0;
        for (double v : m_bar.v) sup_m = std::max(sup_m, v);
        const PredictedRates r =
            predicted_rates(rep.eta_a, rep.C_P, delta, model.C_f, sup_m, m_bar.grid.dim);
        rep.sigma = r.sigma;
        rep.sigma1 = r.sigma1;
        rep.sigma2 = r.sigma2;
        rep.theta_cap = r.theta_cap;
    }
    return rep;
}

} // namespace mfglab
