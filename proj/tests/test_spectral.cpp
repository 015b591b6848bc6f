#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <random>

#include "helpers.hpp"
#include "kcc/spectral.hpp"

using namespace kcc;

namespace {

// Multiset comparison by greedy nearest pairing.
double pairing_distance(std::vector<std::complex<double>> a,
                        std::vector<std::complex<double>> b) {
    double worst = 0.0;
    for (const auto& lambda : a) {
        std::size_t best = 0;
        double dist = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < b.size(); ++i) {
            const double d = std::abs(lambda - b[i]);
            if (d < dist) {
                dist = d;
                best = i;
            }
        }
        worst = std::max(worst, dist);
        b.erase(b.begin() + static_cast<std::ptrdiff_t>(best));
    }
    return worst;
}

Mat diag3(double a, double b, double c) {
    Mat m(3, 3);
    m(0, 0) = a;
    m(1, 1) = b;
    m(2, 2) = c;
    return m;
}

} // namespace

TEST_CASE("diagonal matrices deflate to their diagonal, sorted") {
    const auto eig = eigenvalues(diag3(3.0, -1.0, 2.0));
    REQUIRE(eig.size() == 3);
    CHECK(std::abs(eig[0] - std::complex<double>(3.0, 0.0)) <= 1e-12);
    CHECK(std::abs(eig[1] - std::complex<double>(2.0, 0.0)) <= 1e-12);
    CHECK(std::abs(eig[2] - std::complex<double>(-1.0, 0.0)) <= 1e-12);
}

TEST_CASE("the rotation generator yields a conjugate pair") {
    Mat m(2, 2);
    m(0, 1) = 1.0;
    m(1, 0) = -1.0;
    const auto eig = eigenvalues(m);
    REQUIRE(eig.size() == 2);
    CHECK(std::abs(eig[0] - std::complex<double>(0.0, 1.0)) <= 1e-12);
    CHECK(std::abs(eig[1] - std::complex<double>(0.0, -1.0)) <= 1e-12);
}

TEST_CASE("trace and determinant identities on random matrices") {
    std::mt19937_64 rng(2024);
    for (int rep = 0; rep < 50; ++rep) {
        const std::size_t n = 1 + static_cast<std::size_t>(uniform01(rng) * 7.999);
        const Mat m = testutil::random_matrix(rng, n);
        const auto eig = eigenvalues(m);
        std::complex<double> sum = 0.0, prod = 1.0;
        for (const auto& l : eig) {
            sum += l;
            prod *= l;
        }
        const double tr = trace(m);
        REQUIRE(std::abs(sum.real() - tr) <= 1e-9 * (1.0 + std::abs(tr)));
        REQUIRE(std::abs(sum.imag()) <= 1e-9 * (1.0 + std::abs(tr)));
        const double d = testutil::full_pivot_det(m);
        REQUIRE(std::abs(prod.real() - d) <= 1e-6 * std::max(std::abs(d), 1e-12));
        REQUIRE(std::abs(prod.imag()) <= 1e-6 * std::max(std::abs(d), 1e-12));
    }
}

TEST_CASE("determinant oracles agree with each other") {
    std::mt19937_64 rng(46);
    for (std::size_t n = 1; n <= 5; ++n) {
        const Mat m = testutil::random_matrix(rng, n);
        const double a = testutil::full_pivot_det(m);
        const double b = testutil::cofactor_det(m);
        const double c = det(m);
        CHECK(std::abs(a - b) <= 1e-10 * (1.0 + std::abs(b)));
        CHECK(std::abs(c - b) <= 1e-10 * (1.0 + std::abs(b)));
    }
}

TEST_CASE("report ordering and moment invariants") {
    std::mt19937_64 rng(47);
    const Mat m = testutil::random_matrix(rng, 6);
    const SpectrumReport rep = classify_jacobi(m);
    REQUIRE(rep.eigenvalues.size() == 6);
    for (std::size_t i = 0; i + 1 < rep.eigenvalues.size(); ++i) {
        const auto &a = rep.eigenvalues[i], &b = rep.eigenvalues[i + 1];
        REQUIRE((a.real() > b.real() || (a.real() == b.real() && a.imag() >= b.imag())));
    }
    CHECK(rep.max_re == rep.eigenvalues.front().real());
    const double d = testutil::full_pivot_det(m);
    CHECK(std::abs(rep.det - d) <= 1e-9 * (1.0 + std::abs(d)));
}

TEST_CASE("classification bands") {
    CHECK(classify_jacobi(-1.0 * Mat::identity(2)).classification ==
          Classification::JacobiStable);
    CHECK(classify_jacobi(Mat(2, 2, 0.0)).classification == Classification::Marginal);
    Mat m(2, 2);
    m(0, 0) = 1.0;
    m(1, 1) = -2.0;
    CHECK(classify_jacobi(m).classification == Classification::JacobiUnstable);
    CHECK_THROWS_AS(classify_jacobi(Mat::identity(2), -1.0), std::invalid_argument);
}

TEST_CASE("classification is invariant under positive scaling") {
    std::mt19937_64 rng(48);
    for (int rep = 0; rep < 20; ++rep) {
        Mat m = testutil::random_matrix(rng, 4);
        const double shift = classify_jacobi(m).max_re + 0.5;
        for (std::size_t i = 0; i < 4; ++i) m(i, i) -= shift; // now strictly stable
        REQUIRE(classify_jacobi(m).classification == Classification::JacobiStable);
        for (double c : {0.25, 2.0, 64.0}) {
            REQUIRE(classify_jacobi(c * m).classification == Classification::JacobiStable);
        }
    }
}

TEST_CASE("similarity transforms preserve the spectrum") {
    std::mt19937_64 rng(49);
    for (int rep = 0; rep < 10; ++rep) {
        const std::size_t n = 3 + static_cast<std::size_t>(uniform01(rng) * 3.999);
        const Mat m = testutil::random_matrix(rng, n);
        Mat t = Mat::identity(n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) t(i, j) += 0.2 * uniform(rng, -1.0, 1.0);
        // T^-1 (M T) column by column.
        const Mat mt = m * t;
        const LuFactors lu = lu_factor(t);
        REQUIRE_FALSE(lu.singular);
        Mat sim(n, n);
        for (std::size_t j = 0; j < n; ++j) {
            Vec col(n);
            for (std::size_t i = 0; i < n; ++i) col[i] = mt(i, j);
            REQUIRE(lu_solve(lu, col));
            for (std::size_t i = 0; i < n; ++i) sim(i, j) = col[i];
        }
        double scale = 1.0 + max_abs(m);
        REQUIRE(pairing_distance(eigenvalues(m), eigenvalues(sim)) <= 1e-7 * scale);
    }
}

TEST_CASE("odd-order skew matrices always expose a zero eigenvalue") {
    std::mt19937_64 rng(50);
    for (std::size_t n : {3u, 5u, 7u}) {
        for (int rep = 0; rep < 20; ++rep) {
            const Mat m = testutil::random_skew(rng, n);
            const auto eig = eigenvalues(m);
            double min_abs = std::numeric_limits<double>::infinity();
            for (const auto& l : eig) min_abs = std::min(min_abs, std::abs(l));
            REQUIRE(min_abs <= 1e-9 * max_abs(m));
        }
    }
}

TEST_CASE("odd-skew instability report on the catalog frames") {
    std::mt19937_64 rng(51);
    SECTION("3-D rigid rotation: applies, with a structurally zero spectrum") {
        const VectorFieldModel m = testutil::load("rigidrot3.kcc");
        const GeometryFrame f = geometry_frame(m, random_vec(rng, 3), random_vec(rng, 3));
        const OddSkewInstability r = odd_skew_instability(f);
        CHECK(r.applies);
        CHECK(r.skew_defect <= 1e-12);
        CHECK(std::abs(r.det_p) <= 1e-10);
        CHECK(r.has_zero_eigenvalue);
        CHECK(combined_verdict(classify_jacobi(f.P), r) == Classification::JacobiUnstable);
    }
    SECTION("even dimension never applies") {
        const VectorFieldModel m = testutil::load("rotation2.kcc");
        const GeometryFrame f = geometry_frame(m, random_vec(rng, 2), random_vec(rng, 2));
        CHECK_FALSE(odd_skew_instability(f).applies);
    }
    SECTION("symmetric nonzero Emat never applies") {
        const VectorFieldModel m = testutil::load("contract3.kcc");
        const GeometryFrame f = geometry_frame(m, random_vec(rng, 3), random_vec(rng, 3));
        const OddSkewInstability r = odd_skew_instability(f);
        CHECK_FALSE(r.applies); // Emat = -I is symmetric, not skew
        CHECK(r.skew_defect == 2.0);
    }
}

TEST_CASE("solver rejects malformed input") {
    CHECK_THROWS_AS(eigenvalues(Mat(0, 0)), std::invalid_argument);
    CHECK_THROWS_AS(eigenvalues(Mat(2, 3)), std::invalid_argument);
    Mat bad = Mat::identity(2);
    bad(0, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(eigenvalues(bad), std::invalid_argument);
}

TEST_CASE("single-entry and zero matrices") {
    Mat one(1, 1);
    one(0, 0) = -4.5;
    const auto eig = eigenvalues(one);
    REQUIRE(eig.size() == 1);
    CHECK(eig[0] == std::complex<double>(-4.5, 0.0));
    const auto zeig = eigenvalues(Mat(3, 3, 0.0));
    for (const auto& l : zeig) CHECK(std::abs(l) == 0.0);
}
