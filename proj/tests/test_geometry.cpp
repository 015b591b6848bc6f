#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "kcc/geometry.hpp"

using namespace kcc;
using testutil::catalog;
using testutil::load;

TEST_CASE("lagrangian vanishes on shell and sums squared residuals off shell") {
    std::mt19937_64 rng(606);
    for (const VectorFieldModel& m : catalog()) {
        const std::size_t n = static_cast<std::size_t>(m.dim());
        const Vec x = random_vec(rng, n);
        const Jet2 jet = jet2(m, x);
        CHECK(lagrangian(jet, jet.value) == 0.0);
    }
    const VectorFieldModel zero = parse_model("dim 1\nx1' = 0");
    CHECK(lagrangian(jet2(zero, Vec{0.3}), Vec{2.0}) == 4.0);
    const VectorFieldModel constant = parse_model("dim 2\nx1' = 1\nx2' = 0");
    CHECK(lagrangian(jet2(constant, Vec{0.0, 0.0}), Vec{0.0, 1.0}) == 2.0);
}

TEST_CASE("semispray of the 1-D contraction") {
    const VectorFieldModel m = load("contract1.kcc");
    const Vec g = semispray(jet2(m, Vec{3.0}), Vec{0.7});
    // Symmetric J kills the first term: G = -1/2 J^T X = -x/2.
    CHECK(g[0] == -1.5);
}

TEST_CASE("semispray vanishes where J is symmetric and X = 0") {
    const VectorFieldModel m = load("gradient2.kcc"); // X = (2 x1 x2, x1^2)
    std::mt19937_64 rng(707);
    const Jet2 jet = jet2(m, Vec{0.0, 0.7}); // X = 0 on the x1 = 0 line
    for (int k = 0; k < 5; ++k) {
        const Vec g = semispray(jet, random_vec(rng, 2));
        CHECK(max_abs(g) == 0.0);
    }
}

TEST_CASE("semispray of the shear field at a worked point") {
    const VectorFieldModel m = load("shear2.kcc");
    // G = (-x2 y2, x2 y1 - x2^3); at x = (0,1), y = (1,0) both components vanish.
    const Vec g = semispray(jet2(m, Vec{0.0, 1.0}), Vec{1.0, 0.0});
    CHECK(g[0] == 0.0);
    CHECK(g[1] == 0.0);
    const Vec g2 = semispray(jet2(m, Vec{0.4, 2.0}), Vec{0.3, -0.5});
    CHECK(g2[0] == Catch::Approx(-2.0 * -0.5).margin(1e-14));       // -x2 y2
    CHECK(g2[1] == Catch::Approx(2.0 * 0.3 - 8.0).margin(1e-14));   // x2 y1 - x2^3
}

TEST_CASE("nonlinear connection is the skew part of the Jacobian") {
    SECTION("gradient fields have N = 0") {
        const VectorFieldModel m = load("gradient2.kcc");
        std::mt19937_64 rng(808);
        for (int k = 0; k < 10; ++k) {
            const Mat nc = nonlinear_connection(jet2(m, random_vec(rng, 2)));
            CHECK(max_abs(nc) == 0.0);
        }
    }
    SECTION("strict upper triangle J") {
        const VectorFieldModel m = parse_model("dim 2\nx1' = x2\nx2' = 0");
        const Mat nc = nonlinear_connection(jet2(m, Vec{0.0, 0.0}));
        CHECK(nc(0, 0) == 0.0);
        CHECK(nc(0, 1) == -0.5);
        CHECK(nc(1, 0) == 0.5);
        CHECK(nc(1, 1) == 0.0);
    }
    SECTION("rotation generator") {
        const VectorFieldModel m = parse_model(
            "dim 2\nparam w 1.7\nx1' = w*x2\nx2' = -w*x1");
        const Mat nc = nonlinear_connection(jet2(m, Vec{0.2, 0.4}));
        CHECK(nc(0, 1) == -1.7);
        CHECK(nc(1, 0) == 1.7);
    }
}

TEST_CASE("connection gradient of the shear field") {
    const VectorFieldModel m = load("shear2.kcc");
    const Ten3 dn = connection_gradient(jet2(m, Vec{0.3, 0.9}));
    // dN(i,j,k) = -1/2 (H^i_jk - H^j_ik); only the x2 derivative survives.
    CHECK(dn(0, 1, 1) == -1.0);
    CHECK(dn(1, 0, 1) == 1.0);
    CHECK(dn(0, 0, 0) == 0.0);
    CHECK(dn(0, 0, 1) == 0.0);
    CHECK(dn(1, 1, 1) == 0.0);
}

TEST_CASE("connection gradient vanishes for linear and gradient fields") {
    std::mt19937_64 rng(909);
    for (const char* name : {"contract3.kcc", "rotation2.kcc", "rigidrot3.kcc",
                             "gradient2.kcc"}) {
        const VectorFieldModel m = load(name);
        const std::size_t n = static_cast<std::size_t>(m.dim());
        for (int k = 0; k < 5; ++k) {
            const Ten3 dn = connection_gradient(jet2(m, random_vec(rng, n)));
            CHECK(max_abs(dn) == 0.0);
        }
    }
}

TEST_CASE("d-torsion antisymmetry and the shear value") {
    const VectorFieldModel m = load("shear2.kcc");
    const Ten3 dn = connection_gradient(jet2(m, Vec{0.1, -2.0}));
    const Ten3 r = d_torsion(dn);
    CHECK(r(1, 0, 1) == 1.0);
    CHECK(r(1, 1, 0) == -1.0);
    std::mt19937_64 rng(111);
    for (const VectorFieldModel& model : catalog()) {
        const std::size_t n = static_cast<std::size_t>(model.dim());
        const Ten3 rr = d_torsion(connection_gradient(jet2(model, random_vec(rng, n))));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                for (std::size_t k = 0; k < n; ++k)
                    REQUIRE(rr(i, j, k) == -rr(i, k, j));
    }
}

TEST_CASE("first invariant worked values") {
    SECTION("symmetric J reduces to -J^T X") {
        const Vec e = first_invariant(jet2(load("contract1.kcc"), Vec{3.0}), Vec{0.4});
        CHECK(e[0] == -3.0);
    }
    SECTION("skew J with X = 0 reduces to -J y") {
        const VectorFieldModel m = load("rotation2.kcc"); // X = 0 at the origin
        const Vec e = first_invariant(jet2(m, Vec{0.0, 0.0}), Vec{1.0, 0.0});
        CHECK(e[0] == 0.0);
        CHECK(e[1] == 1.0);
    }
    SECTION("y = 0 and X = 0 gives zero") {
        const Vec e = first_invariant(jet2(load("contract2.kcc"), Vec{0.0, 0.0}),
                                      Vec{0.0, 0.0});
        CHECK(max_abs(e) == 0.0);
    }
}

TEST_CASE("both first-invariant routes agree") {
    std::mt19937_64 rng(222);
    for (const VectorFieldModel& m : catalog()) {
        const std::size_t n = static_cast<std::size_t>(m.dim());
        for (int k = 0; k < 20; ++k) {
            const Jet2 jet = jet2(m, random_vec(rng, n));
            const Vec y = random_vec(rng, n);
            const Vec a = first_invariant(jet, y);
            const Vec b = first_invariant_expanded(jet, y);
            REQUIRE(max_abs(a - b) <= 1e-12 * (1.0 + max_abs(a)));
        }
    }
}

TEST_CASE("invariant matrix worked values") {
    SECTION("rigid rotations give Emat = 0") {
        std::mt19937_64 rng(333);
        for (int k = 0; k < 5; ++k) {
            const VectorFieldModel m = testutil::random_rigid_rotation(rng);
            const Mat e = invariant_matrix(jet2(m, random_vec(rng, 3)), random_vec(rng, 3));
            REQUIRE(max_abs(e) == 0.0);
        }
    }
    SECTION("n = 1 expansion field") {
        const VectorFieldModel m = parse_model("dim 1\nx1' = x1");
        const Mat e = invariant_matrix(jet2(m, Vec{0.0}), Vec{0.6});
        CHECK(e(0, 0) == -1.0); // -J^T J with J = 1
    }
    SECTION("y = 0, X = 0 leaves the two velocity-free terms") {
        const VectorFieldModel m = parse_model("dim 2\nx1' = x2\nx2' = 0");
        const Jet2 jet = jet2(m, Vec{0.0, 0.0}); // X(0) = 0
        const Mat e = invariant_matrix(jet, Vec{0.0, 0.0});
        // -J^T J - 1/4 (J - J^T)^2 for J = [[0,1],[0,0]]
        const Mat j = jet.jac;
        const Mat jmt = j - transpose(j);
        const Mat expected = (-1.0 * (transpose(j) * j)) - 0.25 * (jmt * jmt);
        CHECK(max_abs(e - expected) <= 1e-15);
    }
}

TEST_CASE("analytic dG/dx matches central differences of the semispray") {
    std::mt19937_64 rng(444);
    for (const VectorFieldModel& m : catalog()) {
        const std::size_t n = static_cast<std::size_t>(m.dim());
        for (int p = 0; p < 5; ++p) {
            const Vec x = random_vec(rng, n);
            const Vec y = random_vec(rng, n);
            const Mat gx = semispray_position_gradient(jet2(m, x), y);
            const double h = 1e-6;
            for (std::size_t j = 0; j < n; ++j) {
                Vec xp = x, xm = x;
                xp[j] += h;
                xm[j] -= h;
                const Vec gp = semispray(jet2(m, xp), y);
                const Vec gm = semispray(jet2(m, xm), y);
                for (std::size_t i = 0; i < n; ++i) {
                    const double fd = (gp[i] - gm[i]) / (2.0 * h);
                    REQUIRE(std::abs(fd - gx(i, j)) <= 1e-6 * (1.0 + std::abs(gx(i, j))));
                }
            }
        }
    }
}

TEST_CASE("dG/dy equals the nonlinear connection") {
    std::mt19937_64 rng(555);
    for (const VectorFieldModel& m : catalog()) {
        const std::size_t n = static_cast<std::size_t>(m.dim());
        const Vec x = random_vec(rng, n);
        const Vec y = random_vec(rng, n);
        const Jet2 jet = jet2(m, x);
        const Mat nc = nonlinear_connection(jet);
        const double h = 1e-6;
        for (std::size_t j = 0; j < n; ++j) {
            Vec yp = y, ym = y;
            yp[j] += h;
            ym[j] -= h;
            const Vec gp = semispray(jet, yp);
            const Vec gm = semispray(jet, ym);
            for (std::size_t i = 0; i < n; ++i) {
                const double fd = (gp[i] - gm[i]) / (2.0 * h);
                REQUIRE(std::abs(fd - nc(i, j)) <= 1e-6);
            }
        }
    }
}

TEST_CASE("deviation tensor closed forms") {
    std::mt19937_64 rng(666);
    SECTION("contractions give P = +I at every phase point") {
        // Verified against the covariant deviation oracle: with N = 0 the
        // linearized dynamics is xi'' = xi, so P must be +I here.
        for (const char* name : {"contract1.kcc", "contract2.kcc", "contract3.kcc"}) {
            const VectorFieldModel m = load(name);
            const std::size_t n = static_cast<std::size_t>(m.dim());
            for (int k = 0; k < 10; ++k) {
                const Mat p = deviation_tensor(jet2(m, random_vec(rng, n)), random_vec(rng, n));
                REQUIRE(max_abs(p - Mat::identity(n)) <= 1e-12);
            }
        }
    }
    SECTION("the planar rotation gives P = 0 everywhere") {
        const VectorFieldModel m = load("rotation2.kcc");
        for (int k = 0; k < 10; ++k) {
            const Mat p = deviation_tensor(jet2(m, random_vec(rng, 2)), random_vec(rng, 2));
            REQUIRE(max_abs(p) <= 1e-15);
        }
    }
    SECTION("shear field closed form") {
        const VectorFieldModel m = load("shear2.kcc");
        for (int k = 0; k < 10; ++k) {
            const Vec x = random_vec(rng, 2, -2.0, 2.0);
            const Vec y = random_vec(rng, 2, -2.0, 2.0);
            const Mat p = deviation_tensor(jet2(m, x), y);
            const double x2 = x[1];
            CHECK(std::abs(p(0, 0) - (-x2 * x2)) <= 1e-12);
            CHECK(std::abs(p(0, 1) - y[1]) <= 1e-12);
            CHECK(std::abs(p(1, 0) - y[1]) <= 1e-12);
            CHECK(std::abs(p(1, 1) - (-2.0 * y[0] + 5.0 * x2 * x2)) <= 1e-12);
        }
    }
}

TEST_CASE("N squared is symmetric") {
    std::mt19937_64 rng(777);
    for (const VectorFieldModel& m : catalog()) {
        const std::size_t n = static_cast<std::size_t>(m.dim());
        const Mat nc = nonlinear_connection(jet2(m, random_vec(rng, n)));
        const Mat n2 = nc * nc;
        REQUIRE(max_abs(n2 - transpose(n2)) <= 1e-12 * (1.0 + max_abs(n2)));
    }
}

TEST_CASE("skew symmetry of N and the dN slices") {
    std::mt19937_64 rng(888);
    for (const VectorFieldModel& m : catalog()) {
        const std::size_t n = static_cast<std::size_t>(m.dim());
        for (int p = 0; p < 20; ++p) {
            const Jet2 jet = jet2(m, random_vec(rng, n));
            const Mat nc = nonlinear_connection(jet);
            const Ten3 dn = connection_gradient(jet);
            REQUIRE(max_abs(nc + transpose(nc)) <= 1e-12 * (1.0 + max_abs(nc)));
            for (std::size_t k = 0; k < n; ++k)
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < n; ++j)
                        REQUIRE(std::abs(dn(i, j, k) + dn(j, i, k)) <=
                                1e-12 * (1.0 + max_abs(dn)));
        }
    }
}

TEST_CASE("decomposition residuals") {
    std::mt19937_64 rng(999);
    SECTION("zero on linear skew fields") {
        for (const char* name : {"rotation2.kcc", "rigidrot3.kcc"}) {
            const VectorFieldModel m = load(name);
            const std::size_t n = static_cast<std::size_t>(m.dim());
            const Vec x = random_vec(rng, n);
            const Vec y = random_vec(rng, n);
            const GeometryFrame f = geometry_frame(m, x, y);
            const DecompositionResidual d = decomposition_residual(f, y);
            CHECK(max_abs(d.d1) <= 1e-12);
            CHECK(max_abs(d.d2) <= 1e-12);
        }
    }
    SECTION("equals -2 Emat identically (P = R.y - Emat)") {
        // The sign-flipped decomposition is an exact identity; it pins the
        // nonzero residual the contraction family produces (D1 = 2I there).
        for (const VectorFieldModel& m : catalog()) {
            const std::size_t n = static_cast<std::size_t>(m.dim());
            for (int k = 0; k < 10; ++k) {
                const Vec x = random_vec(rng, n);
                const Vec y = random_vec(rng, n);
                const GeometryFrame f = geometry_frame(m, x, y);
                const DecompositionResidual d = decomposition_residual(f, y);
                const double scale = 1.0 + max_abs(f.Emat);
                REQUIRE(max_abs(d.d1 + 2.0 * f.Emat) <= 1e-12 * scale);
            }
        }
    }
    SECTION("contractions measure D1 = D2 = 2I") {
        const VectorFieldModel m = load("contract2.kcc");
        const Vec y{0.3, -0.8};
        const GeometryFrame f = geometry_frame(m, Vec{1.0, -0.5}, y);
        const DecompositionResidual d = decomposition_residual(f, y);
        CHECK(max_abs(d.d1 - 2.0 * Mat::identity(2)) <= 1e-14);
        CHECK(max_abs(d.d2 - 2.0 * Mat::identity(2)) <= 1e-14);
    }
}

TEST_CASE("geometry_frame bundles a consistent snapshot") {
    SECTION("contraction at a worked point") {
        const VectorFieldModel m = load("contract2.kcc");
        const GeometryFrame f = geometry_frame(m, Vec{1.0, 1.0}, Vec{0.0, 0.0});
        CHECK(max_abs(f.N) == 0.0);
        CHECK(max_abs(f.P - Mat::identity(2)) <= 1e-14);
        CHECK(f.L == 2.0); // |y - X|^2 = |(1,1)|^2
    }
    SECTION("rotation at a random point") {
        std::mt19937_64 rng(1212);
        const VectorFieldModel m = load("rotation2.kcc");
        const Vec x = random_vec(rng, 2);
        const Vec y = random_vec(rng, 2);
        const GeometryFrame f = geometry_frame(m, x, y);
        CHECK(max_abs(f.P) <= 1e-15);
        const Vec diff = y - m.eval(x);
        CHECK(f.L == Catch::Approx(diff[0] * diff[0] + diff[1] * diff[1]).margin(1e-15));
    }
    SECTION("on-shell fiber zeroes the Lagrangian") {
        const VectorFieldModel m = load("shear2.kcc");
        const Vec x{0.4, -1.2};
        CHECK(geometry_frame(m, x, m.eval(x)).L == 0.0);
    }
}

TEST_CASE("flow states satisfy the Euler-Lagrange equation") {
    // Along solutions of the first-order system, x'' = J X and y = X(x), so
    // the residual J X + 2 G(x, X) must vanish.
    std::mt19937_64 rng(1313);
    for (const VectorFieldModel& m : catalog()) {
        const std::size_t n = static_cast<std::size_t>(m.dim());
        for (int p = 0; p < 20; ++p) {
            const Jet2 jet = jet2(m, random_vec(rng, n));
            const Vec jx = jet.jac * jet.value;
            const Vec g = semispray(jet, jet.value);
            Vec res(n);
            for (std::size_t i = 0; i < n; ++i) res[i] = jx[i] + 2.0 * g[i];
            REQUIRE(max_abs(res) <= 1e-10 * (1.0 + max_abs(jx)));
        }
    }
}
