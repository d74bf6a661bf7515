#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "mfglab/grid.hpp"
#include "mfglab/operators.hpp"
#include "mfglab/quadrature.hpp"

using namespace mfglab;

namespace {

ScalarField random_field(const PeriodicGrid& gr, std::mt19937& rng, double lo, double hi) {
    std::uniform_real_distribution<double> u(lo, hi);
    ScalarField f(gr);
    for (double& x : f.v) x = u(rng);
    return f;
}

} // namespace

TEST_CASE("periodic indexing wraps in both directions") {
    const PeriodicGrid gr = PeriodicGrid::line(8);
    CHECK(gr.wrap(-1, 0) == 7);
    CHECK(gr.wrap(8, 0) == 0);
    CHECK(gr.neighbor(7, 0) == 0);
    CHECK(gr.neighbor_back(0, 0) == 7);

    const PeriodicGrid sq = PeriodicGrid::square(8);
    const std::size_t corner = sq.index(7, 7);
    CHECK(sq.neighbor(corner, 0) == sq.index(0, 7));
    CHECK(sq.neighbor(corner, 1) == sq.index(7, 0));
    CHECK(sq.size() == 64);
    CHECK(sq.cell_volume() == Catch::Approx(1.0 / 64.0));
}

TEST_CASE("divergence of any facet field has zero total") {
    std::mt19937 rng(7);
    for (const PeriodicGrid& gr : {PeriodicGrid::line(33), PeriodicGrid::square(12)}) {
        FacetField F(gr);
        std::uniform_real_distribution<double> u(-3.0, 3.0);
        for (int a = 0; a < gr.dim; ++a)
            for (double& x : F.axis(a)) x = u(rng);
        CHECK(std::abs(integrate(divergence(F))) <= 1e-12);
    }
}

TEST_CASE("gradient and minus divergence are adjoint") {
    std::mt19937 rng(11);
    const PeriodicGrid gr = PeriodicGrid::line(40);
    const ScalarField g = random_field(gr, rng, -1.0, 1.0);
    FacetField F(gr);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (double& x : F.axis(0)) x = u(rng);

    // sum_cells g div F = -sum_faces F . grad g, both times cell volume
    const double lhs = inner_product(g, divergence(F));
    const FacetField gg = gradient(g);
    double rhs = 0.0;
    for (std::size_t i = 0; i < gr.size(); ++i) rhs += F.axis(0)[i] * gg.axis(0)[i];
    rhs *= gr.cell_volume();
    CHECK(lhs == Catch::Approx(-rhs).margin(1e-12));
}

TEST_CASE("laplacian converges at second order") {
    const auto err_1d = [](int n) {
        const PeriodicGrid gr = PeriodicGrid::line(n);
        const ScalarField f(gr, [](double x, double) { return std::exp(std::cos(2.0 * pi * x)); });
        const ScalarField lap = laplacian(f);
        double e = 0.0;
        for (std::size_t i = 0; i < f.size(); ++i) {
            const double x = gr.point(i)[0];
            const double c = std::cos(2.0 * pi * x), s = std::sin(2.0 * pi * x);
            const double exact = std::exp(c) * 4.0 * pi * pi * (s * s - c);
            e = std::max(e, std::abs(lap.v[i] - exact));
        }
        return e;
    };
    CHECK(err_1d(64) / err_1d(128) >= 3.8);

    const auto err_2d = [](int n) {
        const PeriodicGrid gr = PeriodicGrid::square(n);
        const ScalarField f(gr, [](double x, double y) {
            return std::cos(2.0 * pi * x) * std::cos(2.0 * pi * y);
        });
        const ScalarField lap = laplacian(f);
        double e = 0.0;
        for (std::size_t i = 0; i < f.size(); ++i) {
            const auto p = gr.point(i);
            const double exact =
                -8.0 * pi * pi * std::cos(2.0 * pi * p[0]) * std::cos(2.0 * pi * p[1]);
            e = std::max(e, std::abs(lap.v[i] - exact));
        }
        return e;
    };
    CHECK(err_2d(24) / err_2d(48) >= 3.8);
}

TEST_CASE("face means preserve constants and order") {
    std::mt19937 rng(13);
    const PeriodicGrid gr = PeriodicGrid::line(32);
    const ScalarField c(gr, 0.7);
    const FacetField ca = face_mean_arithmetic(c);
    const FacetField ch = face_mean_harmonic(c);
    for (std::size_t i = 0; i < gr.size(); ++i) {
        CHECK(ca.axis(0)[i] == 0.7);
        CHECK(ch.axis(0)[i] == Catch::Approx(0.7).margin(1e-15));
    }

    const ScalarField m = random_field(gr, rng, 0.1, 3.0);
    const FacetField ma = face_mean_arithmetic(m);
    const FacetField mh = face_mean_harmonic(m);
    for (std::size_t i = 0; i < gr.size(); ++i)
        CHECK(mh.axis(0)[i] <= ma.axis(0)[i] + 1e-15);

    ScalarField bad = m;
    bad.v[5] = 0.0;
    CHECK_THROWS_AS(face_mean_harmonic(bad), DomainError);
}

TEST_CASE("matrix forms agree with the apply paths") {
    std::mt19937 rng(17);
    const PeriodicGrid gr = PeriodicGrid::line(48);
    ScalarField m = random_field(gr, rng, 0.2, 2.0);
    normalize_mass(m);
    const ScalarField f = random_field(gr, rng, -1.0, 1.0);

    const Eigen::MatrixXd A = apply_A_matrix(m);
    const Eigen::MatrixXd S = apply_BBstar_matrix(m);
    const Eigen::MatrixXd At = apply_Astar_matrix(m);

    Eigen::VectorXd fv(static_cast<Eigen::Index>(f.size()));
    for (std::size_t i = 0; i < f.size(); ++i) fv(static_cast<Eigen::Index>(i)) = f.v[i];

    const ScalarField af = apply_A(m, f);
    const ScalarField sf = apply_BBstar(m, f);
    const ScalarField atf = apply_Astar(m, f);
    const Eigen::VectorXd Afv = A * fv, Sfv = S * fv, Atfv = At * fv;
    const double scale = static_cast<double>(gr.size() * gr.size());
    for (std::size_t i = 0; i < f.size(); ++i) {
        CHECK(std::abs(af.v[i] - Afv(static_cast<Eigen::Index>(i))) <= 1e-12 * scale);
        CHECK(std::abs(sf.v[i] - Sfv(static_cast<Eigen::Index>(i))) <= 1e-12 * scale);
        CHECK(std::abs(atf.v[i] - Atfv(static_cast<Eigen::Index>(i))) <= 1e-12 * scale);
    }
}

TEST_CASE("transport operator annihilates its own density") {
    std::mt19937 rng(19);
    for (int rep = 0; rep < 3; ++rep) {
        const PeriodicGrid gr = PeriodicGrid::line(32 + 16 * rep);
        ScalarField m = random_field(gr, rng, 0.3, 2.5);
        normalize_mass(m);
        const ScalarField r = apply_A(m, m);
        for (double x : r.v) CHECK(x == 0.0);
    }
}

TEST_CASE("adjoint matrix is the exact transpose and BBstar is symmetric") {
    std::mt19937 rng(23);
    const PeriodicGrid gr = PeriodicGrid::line(40);
    ScalarField m = random_field(gr, rng, 0.2, 2.0);
    normalize_mass(m);
    for (MatrixScale scale : {MatrixScale::physical, MatrixScale::stencil}) {
        const Eigen::MatrixXd A = apply_A_matrix(m, scale);
        const Eigen::MatrixXd At = apply_Astar_matrix(m, scale);
        const Eigen::MatrixXd S = apply_BBstar_matrix(m, scale);
        CHECK((At - A.transpose()).cwiseAbs().maxCoeff() == 0.0);
        CHECK((S - S.transpose()).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("quadrature helpers match closed forms") {
    const PeriodicGrid gr = PeriodicGrid::line(64);
    const ScalarField one(gr, 1.0);
    CHECK(integrate(one) == Catch::Approx(1.0).margin(1e-15));

    const ScalarField c(gr, [](double x, double) { return std::cos(2.0 * pi * x); });
    CHECK(std::abs(integrate(c)) <= 1e-14);
    CHECK(inner_product(c, c) == Catch::Approx(0.5).margin(1e-13));
    CHECK(norm_l2(c) == Catch::Approx(std::sqrt(0.5)).margin(1e-13));
    CHECK(norm_linf(c) == Catch::Approx(1.0).margin(1e-15));

    ScalarField shifted = c;
    set_mean(shifted, 0.25);
    CHECK(mean(shifted) == Catch::Approx(0.25).margin(1e-15));

    ScalarField mass = c + one;
    normalize_mass(mass);
    CHECK(integrate(mass) == Catch::Approx(1.0).margin(1e-14));
}

TEST_CASE("weighted norms and the dirichlet form") {
    const PeriodicGrid gr = PeriodicGrid::line(64);
    const ScalarField w(gr, 2.0);
    const ScalarField f(gr, [](double x, double) { return std::sin(2.0 * pi * x); });

    // |f|^2/w integrates to (1/2)/2
    CHECK(norm_l2_weighted_inv(f, w) == Catch::Approx(std::sqrt(0.25)).margin(1e-12));

    // the dirichlet form with constant weight is w int |Df|^2 and matches
    // the quadratic form of BBstar
    const double dir = dirichlet_weighted(w, f);
    Eigen::VectorXd fv(static_cast<Eigen::Index>(f.size()));
    for (std::size_t i = 0; i < f.size(); ++i) fv(static_cast<Eigen::Index>(i)) = f.v[i];
    const Eigen::MatrixXd S = apply_BBstar_matrix(w);
    const double quad = fv.dot(S * fv) * gr.cell_volume();
    CHECK(dir == Catch::Approx(quad).margin(1e-10));
    CHECK(norm_l2_weighted_grad(f, w) == Catch::Approx(std::sqrt(dir)).margin(1e-12));

    CHECK_THROWS_AS(weighted_norms(f, w, "no_such_norm"), UsageError);
}

TEST_CASE("cell averaged gradient products converge to the pointwise product") {
    const auto err = [](int n) {
        const PeriodicGrid gr = PeriodicGrid::line(n);
        const ScalarField f(gr, [](double x, double) { return std::sin(2.0 * pi * x); });
        const ScalarField g(gr, [](double x, double) { return std::cos(4.0 * pi * x); });
        const ScalarField p = cell_average_product(gradient(f), gradient(g));
        double e = 0.0;
        for (std::size_t i = 0; i < gr.size(); ++i) {
            const double x = gr.point(i)[0];
            const double exact =
                (2.0 * pi * std::cos(2.0 * pi * x)) * (-4.0 * pi * std::sin(4.0 * pi * x));
            e = std::max(e, std::abs(p.v[i] - exact));
        }
        return e;
    };
    CHECK(err(64) / err(128) >= 3.5);
}

TEST_CASE("grid mismatch is rejected") {
    const PeriodicGrid a = PeriodicGrid::line(16);
    const PeriodicGrid b = PeriodicGrid::line(32);
    CHECK_THROWS_AS(require_same_grid(a, b, "test"), ContractError);
    const ScalarField fa(a, 1.0), fb(b, 1.0);
    CHECK_THROWS_AS(hadamard(fa, fb), ContractError);
}
