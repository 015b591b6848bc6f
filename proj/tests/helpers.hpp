#pragma once

// Shared fixtures for the suites: catalog access, tolerance helpers, and the
// independent oracles (full-pivot LU determinant, cofactor expansion) that
// cross-check the implementation without sharing code paths with it.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "kcc/dynamics.hpp"
#include "kcc/geometry.hpp"
#include "kcc/jet.hpp"
#include "kcc/linalg.hpp"
#include "kcc/model.hpp"
#include "kcc/random.hpp"
#include "kcc/spectral.hpp"

namespace testutil {

inline std::string models_dir() { return KCC_MODELS_DIR; }

inline std::vector<std::string> catalog_names() {
    return {"contract1.kcc", "contract2.kcc", "contract3.kcc", "rotation2.kcc",
            "rigidrot3.kcc", "gradient2.kcc", "shear2.kcc"};
}

inline kcc::VectorFieldModel load(const std::string& name) {
    return kcc::parse_model_file(models_dir() + "/" + name);
}

inline std::vector<kcc::VectorFieldModel> catalog() {
    std::vector<kcc::VectorFieldModel> models;
    for (const auto& name : catalog_names()) models.push_back(load(name));
    return models;
}

inline double rel_gap(double actual, double expected) {
    return std::abs(actual - expected) / (1.0 + std::abs(expected));
}

// Determinant by LU with full pivoting; written against the definition, not
// shared with kcc::det (which uses partial pivoting).
inline double full_pivot_det(kcc::Mat a) {
    const std::size_t n = a.rows();
    double d = 1.0;
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t pi = k, pj = k;
        double best = std::abs(a(k, k));
        for (std::size_t i = k; i < n; ++i)
            for (std::size_t j = k; j < n; ++j)
                if (std::abs(a(i, j)) > best) {
                    best = std::abs(a(i, j));
                    pi = i;
                    pj = j;
                }
        if (best == 0.0) return 0.0;
        if (pi != k) {
            for (std::size_t j = 0; j < n; ++j) std::swap(a(k, j), a(pi, j));
            d = -d;
        }
        if (pj != k) {
            for (std::size_t i = 0; i < n; ++i) std::swap(a(i, k), a(i, pj));
            d = -d;
        }
        d *= a(k, k);
        for (std::size_t i = k + 1; i < n; ++i) {
            const double f = a(i, k) / a(k, k);
            for (std::size_t j = k + 1; j < n; ++j) a(i, j) -= f * a(k, j);
        }
    }
    return d;
}

// Laplace expansion along the first row; exponential, for small n only.
inline double cofactor_det(const kcc::Mat& m) {
    const std::size_t n = m.rows();
    if (n == 1) return m(0, 0);
    double s = 0.0;
    double sign = 1.0;
    for (std::size_t c = 0; c < n; ++c) {
        kcc::Mat minor(n - 1, n - 1);
        for (std::size_t i = 1; i < n; ++i) {
            std::size_t col = 0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == c) continue;
                minor(i - 1, col++) = m(i, j);
            }
        }
        s += sign * m(0, c) * cofactor_det(minor);
        sign = -sign;
    }
    return s;
}

inline kcc::Mat random_matrix(std::mt19937_64& rng, std::size_t n, double lo = -1.0,
                              double hi = 1.0) {
    kcc::Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) m(i, j) = kcc::uniform(rng, lo, hi);
    return m;
}

inline kcc::Mat random_skew(std::mt19937_64& rng, std::size_t n) {
    kcc::Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = kcc::uniform(rng, -1.0, 1.0);
            m(i, j) = v;
            m(j, i) = -v;
        }
    return m;
}

// Rigid-rotation model about a random axis, via the catalog file's params.
inline kcc::VectorFieldModel random_rigid_rotation(std::mt19937_64& rng) {
    static const kcc::VectorFieldModel base = load("rigidrot3.kcc");
    return base.with_params({{"w1", kcc::uniform(rng, -2.0, 2.0)},
                             {"w2", kcc::uniform(rng, -2.0, 2.0)},
                             {"w3", kcc::uniform(rng, -2.0, 2.0)}});
}

} // namespace testutil
