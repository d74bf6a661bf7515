#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "mfglab/errors.hpp"

namespace mfglab {

inline constexpr double pi = 3.14159265358979323846;

/// Uniform cell grid on a flat torus in one or two dimensions.
///
/// Cells along axis a sit at coordinates i * h[a], i = 0 .. n[a]-1, and all
/// index arithmetic wraps. Oriented faces live between a cell and its +1
/// neighbour along each axis, so there are exactly as many faces per axis as
/// cells. Two-dimensional data is stored row-major: cell (ix, iy) has flat
/// index iy * n[0] + ix.
struct PeriodicGrid {
    int dim = 1;
    std::array<int, 2> n{8, 1};
    std::array<double, 2> length{1.0, 1.0};

    PeriodicGrid() = default;

    PeriodicGrid(int dim_, std::array<int, 2> n_, std::array<double, 2> length_ = {1.0, 1.0})
        : dim(dim_), n(n_), length(length_) {
        if (dim != 1 && dim != 2)
            throw ContractError("PeriodicGrid: dim must be 1 or 2, got " + std::to_string(dim));
        if (dim == 1) { n[1] = 1; length[1] = 1.0; }
        for (int a = 0; a < dim; ++a) {
            if (n[a] < 8)
                throw ContractError("PeriodicGrid: need at least 8 points per axis, got " +
                                    std::to_string(n[a]));
            if (!(length[a] > 0.0) || !std::isfinite(length[a]))
                throw ContractError("PeriodicGrid: axis length must be positive and finite");
        }
    }

    static PeriodicGrid line(int n_points, double len = 1.0) {
        return PeriodicGrid(1, {n_points, 1}, {len, 1.0});
    }
    static PeriodicGrid square(int n_points, double len = 1.0) {
        return PeriodicGrid(2, {n_points, n_points}, {len, len});
    }

    double h(int axis) const { return length[axis] / n[axis]; }

    /// Cell measure: h in 1d, h_x * h_y in 2d.
    double cell_volume() const {
        double v = 1.0;
        for (int a = 0; a < dim; ++a) v *= h(a);
        return v;
    }

    /// Total measure of the torus: product of axis lengths.
    double volume() const {
        double v = 1.0;
        for (int a = 0; a < dim; ++a) v *= length[a];
        return v;
    }

    std::size_t size() const {
        return static_cast<std::size_t>(n[0]) * static_cast<std::size_t>(dim == 2 ? n[1] : 1);
    }

    int wrap(int i, int axis) const {
        int m = n[axis];
        i %= m;
        return i < 0 ? i + m : i;
    }

    std::size_t index(int ix, int iy = 0) const {
        return static_cast<std::size_t>(wrap(iy, 1)) * n[0] + static_cast<std::size_t>(wrap(ix, 0));
    }

    /// Flat index of the +1 neighbour of flat cell `i` along `axis`.
    std::size_t neighbor(std::size_t i, int axis) const {
        int ix = static_cast<int>(i % n[0]);
        int iy = static_cast<int>(i / n[0]);
        if (axis == 0) ix = (ix + 1 == n[0]) ? 0 : ix + 1;
        else           iy = (iy + 1 == n[1]) ? 0 : iy + 1;
        return static_cast<std::size_t>(iy) * n[0] + ix;
    }

    /// Flat index of the -1 neighbour of flat cell `i` along `axis`.
    std::size_t neighbor_back(std::size_t i, int axis) const {
        int ix = static_cast<int>(i % n[0]);
        int iy = static_cast<int>(i / n[0]);
        if (axis == 0) ix = (ix == 0) ? n[0] - 1 : ix - 1;
        else           iy = (iy == 0) ? n[1] - 1 : iy - 1;
        return static_cast<std::size_t>(iy) * n[0] + ix;
    }

    std::array<double, 2> point(std::size_t i) const {
        int ix = static_cast<int>(i % n[0]);
        int iy = static_cast<int>(i / n[0]);
        return {ix * h(0), dim == 2 ? iy * h(1) : 0.0};
    }

    bool operator==(const PeriodicGrid& o) const {
        if (dim != o.dim) return false;
        for (int a = 0; a < dim; ++a)
            if (n[a] != o.n[a] || length[a] != o.length[a]) return false;
        return true;
    }
    bool operator!=(const PeriodicGrid& o) const { return !(*this == o); }
};

inline void require_same_grid(const PeriodicGrid& a, const PeriodicGrid& b, const char* where) {
    if (a != b)
        throw ContractError(std::string(where) + ": fields live on different grids");
}

/// One sample per cell. Plain value type; copying copies the data.
struct ScalarField {
    PeriodicGrid grid;
    std::vector<double> v;

    ScalarField() = default;
    explicit ScalarField(const PeriodicGrid& g, double fill = 0.0) : grid(g), v(g.size(), fill) {}

    ScalarField(const PeriodicGrid& g, const std::function<double(double, double)>& f) : grid(g), v(g.size()) {
        for (std::size_t i = 0; i < v.size(); ++i) {
            auto p = g.point(i);
            v[i] = f(p[0], p[1]);
        }
    }

    std::size_t size() const { return v.size(); }
    double& operator[](std::size_t i) { return v[i]; }
    double operator[](std::size_t i) const { return v[i]; }

    bool all_finite() const {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }
    bool all_positive() const {
        for (double x : v)
            if (!(x > 0.0)) return false;
        return true;
    }

    ScalarField& operator+=(const ScalarField& o) {
        require_same_grid(grid, o.grid, "ScalarField::operator+=");
        for (std::size_t i = 0; i < v.size(); ++i) v[i] += o.v[i];
        return *this;
    }
    ScalarField& operator-=(const ScalarField& o) {
        require_same_grid(grid, o.grid, "ScalarField::operator-=");
        for (std::size_t i = 0; i < v.size(); ++i) v[i] -= o.v[i];
        return *this;
    }
    ScalarField& operator*=(double c) {
        for (double& x : v) x *= c;
        return *this;
    }

    friend ScalarField operator+(ScalarField a, const ScalarField& b) { return a += b; }
    friend ScalarField operator-(ScalarField a, const ScalarField& b) { return a -= b; }
    friend ScalarField operator*(double c, ScalarField a) { return a *= c; }
};

/// Pointwise product of two cell fields.
inline ScalarField hadamard(const ScalarField& a, const ScalarField& b) {
    require_same_grid(a.grid, b.grid, "hadamard");
    ScalarField out(a.grid);
    for (std::size_t i = 0; i < a.size(); ++i) out.v[i] = a.v[i] * b.v[i];
    return out;
}

/// One value per oriented face, grouped by axis. axis_values[a][i] is the
/// value on the face between cell i and its +1 neighbour along axis a.
struct FacetField {
    PeriodicGrid grid;
    std::array<std::vector<double>, 2> axis_values;

    FacetField() = default;
    explicit FacetField(const PeriodicGrid& g, double fill = 0.0) : grid(g) {
        for (int a = 0; a < g.dim; ++a) axis_values[a].assign(g.size(), fill);
    }

    std::vector<double>& axis(int a) { return axis_values[a]; }
    const std::vector<double>& axis(int a) const { return axis_values[a]; }
};

} // namespace mfglab
