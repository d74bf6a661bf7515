#pragma once

#include <array>
#include <cmath>
#include <string>

#include "mfglab/grid.hpp"
#include "mfglab/operators.hpp"

namespace mfglab {

/// Cell-sum quadrature and the weighted norms used by the estimates.
///
/// All integrals are midpoint sums: sum of cell values times cell volume.
/// Gradient integrals are face sums with the same volume element, weighted by
/// a face mean of the density where a weight is involved; the harmonic mean
/// keeps them consistent with apply_BBstar (the Dirichlet form below is
/// exactly <BB* g, g> for the stiffness matrix of the same weight).

inline double integrate(const ScalarField& f) {
    double s = 0.0;
    for (double x : f.v) s += x;
    return s * f.grid.cell_volume();
}

inline double mean(const ScalarField& f) {
    return integrate(f) / f.grid.volume();
}

inline double inner_product(const ScalarField& a, const ScalarField& b) {
    require_same_grid(a.grid, b.grid, "inner_product");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a.v[i] * b.v[i];
    return s * a.grid.cell_volume();
}

/// Shifts the field by a constant so its mean becomes exactly the target.
inline void set_mean(ScalarField& f, double target = 0.0) {
    const double shift = target - mean(f);
    for (double& x : f.v) x += shift;
}

/// Scales a positive field so it integrates to one.
inline void normalize_mass(ScalarField& m) {
    const double total = integrate(m);
    if (!(total > 0.0))
        throw NumericError("normalize_mass: field has nonpositive total mass");
    const double inv = 1.0 / total;
    for (double& x : m.v) x *= inv;
}

inline double norm_linf(const ScalarField& f) {
    double s = 0.0;
    for (double x : f.v) s = std::max(s, std::abs(x));
    return s;
}

inline double norm_l2(const ScalarField& f) {
    return std::sqrt(inner_product(f, f));
}

/// sup |f| + sup |grad f| over all faces.
inline double norm_w1inf(const ScalarField& f) {
    double g = 0.0;
    const FacetField grad = gradient(f);
    for (int a = 0; a < f.grid.dim; ++a)
        for (double x : grad.axis(a)) g = std::max(g, std::abs(x));
    return norm_linf(f) + g;
}

/// (integral of f^2 / w)^(1/2); requires w > 0.
inline double norm_l2_weighted_inv(const ScalarField& f, const ScalarField& w) {
    require_same_grid(f.grid, w.grid, "norm_l2_weighted_inv");
    if (!w.all_positive())
        throw DomainError("norm_l2_weighted_inv: weight must be strictly positive");
    double s = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) s += f.v[i] * f.v[i] / w.v[i];
    return std::sqrt(s * f.grid.cell_volume());
}

/// Face-weighted gradient pairing: sum over faces of c * (grad a)(grad b).
inline double face_form(const FacetField& c, const FacetField& ga, const FacetField& gb) {
    require_same_grid(c.grid, ga.grid, "face_form");
    require_same_grid(c.grid, gb.grid, "face_form");
    double s = 0.0;
    for (int a = 0; a < c.grid.dim; ++a) {
        const auto& ca = c.axis(a);
        const auto& xa = ga.axis(a);
        const auto& ya = gb.axis(a);
        for (std::size_t i = 0; i < ca.size(); ++i) s += ca[i] * xa[i] * ya[i];
    }
    return s * c.grid.cell_volume();
}

/// Weighted Dirichlet form: integral of w |grad f|^2 with harmonic face
/// weights, so it equals <apply_BBstar(w, f), f> up to rounding.
inline double dirichlet_weighted(const ScalarField& w, const ScalarField& f) {
    const FacetField c = face_mean_harmonic(w);
    const FacetField g = gradient(f);
    return face_form(c, g, g);
}

/// (integral of w |grad f|^2)^(1/2).
inline double norm_l2_weighted_grad(const ScalarField& f, const ScalarField& w) {
    return std::sqrt(std::max(0.0, dirichlet_weighted(w, f)));
}

/// Named norm dispatch used by reports and stopping rules. The reference
/// density is accepted for every kind and ignored where it plays no role.
///   linf              sup |f|
///   l2_weighted_inv   (integral f^2 / m_bar)^(1/2)
///   l2_weighted       (integral m_bar |grad f|^2)^(1/2)
///   w1inf             sup |f| + sup |grad f|
inline double weighted_norms(const ScalarField& f, const ScalarField& m_bar,
                             const std::string& kind) {
    if (kind == "linf") return norm_linf(f);
    if (kind == "w1inf") return norm_w1inf(f);
    if (kind == "l2_weighted_inv") return norm_l2_weighted_inv(f, m_bar);
    if (kind == "l2_weighted") return norm_l2_weighted_grad(f, m_bar);
    throw UsageError("weighted_norms: unknown kind '" + kind + "'");
}

/// Cell field whose entries average, per axis, the products of the two face
/// values adjacent to each cell. Discretizes <F, G> as a cell quantity; with
/// F = G it gives |grad f|^2 at cells.
inline ScalarField cell_average_product(const FacetField& F, const FacetField& G) {
    require_same_grid(F.grid, G.grid, "cell_average_product");
    ScalarField out(F.grid);
    const auto& gr = F.grid;
    for (int a = 0; a < gr.dim; ++a) {
        const auto& fa = F.axis(a);
        const auto& ga = G.axis(a);
        for (std::size_t i = 0; i < out.size(); ++i) {
            const std::size_t k = gr.neighbor_back(i, a);
            out.v[i] += 0.5 * (fa[i] * ga[i] + fa[k] * ga[k]);
        }
    }
    return out;
}

/// 8-point Gauss-Legendre rule on [0, 1]; exact for polynomials of degree 15.
struct GaussUnit8 {
    static constexpr std::array<double, 8> nodes = {
        0.019855071751231884, 0.10166676129318664, 0.2372337950418355,
        0.40828267875217505,  0.5917173212478249,  0.7627662049581645,
        0.8983332387068134,   0.9801449282487681};
    static constexpr std::array<double, 8> weights = {
        0.05061426814518813, 0.11119051722668724, 0.15685332293894363,
        0.18134189168918097, 0.18134189168918097, 0.15685332293894363,
        0.11119051722668724, 0.05061426814518813};
};

} // namespace mfglab
