#pragma once

// Second-order jet of a vector field at a point: value X(x), Jacobian
// jac(i,j) = dX^i/dx^j, Hessians hess(i,j,k) = d2X^i/dx^j dx^k. Storage is
// 0-based; jet2 evaluates the model's cached derivative trees (no truncation
// error), jet2_fd is the central-difference oracle used to cross-check it.

#include <cmath>
#include <span>
#include <stdexcept>

#include "kcc/linalg.hpp"
#include "kcc/model.hpp"

namespace kcc {

struct Jet1 {
    Vec value;
    Mat jac;
};

struct Jet2 {
    Vec value;
    Mat jac;
    Ten3 hess;
};

inline Jet1 jet1(const VectorFieldModel& m, const Vec& x) {
    const std::size_t n = static_cast<std::size_t>(m.dim());
    const DerivTables& t = m.derivatives();
    Jet1 jet{Vec(n), Mat(n, n)};
    for (std::size_t i = 0; i < n; ++i) {
        jet.value[i] = m.eval_component(i, x);
        for (std::size_t j = 0; j < n; ++j)
            jet.jac(i, j) = evaluate(t.d1[i][j], x, m.params());
    }
    return jet;
}

namespace detail {

[[noreturn]] inline void jet_eval_fail(const EvalError& e, std::size_t component,
                                       const std::string& derivative) {
    throw EvalError(std::string(e.what()) + " (component " + std::to_string(component + 1) +
                    derivative + ")");
}

} // namespace detail

inline Jet2 jet2(const VectorFieldModel& m, const Vec& x) {
    const std::size_t n = static_cast<std::size_t>(m.dim());
    const DerivTables& t = m.derivatives();
    Jet2 jet{Vec(n), Mat(n, n), Ten3(n, n, n)};
    for (std::size_t i = 0; i < n; ++i) {
        try {
            jet.value[i] = m.eval_component(i, x);
        } catch (const EvalError& e) {
            detail::jet_eval_fail(e, i, "");
        }
        for (std::size_t j = 0; j < n; ++j) {
            try {
                jet.jac(i, j) = evaluate(t.d1[i][j], x, m.params());
            } catch (const EvalError& e) {
                detail::jet_eval_fail(e, i, ", d/dx" + std::to_string(j + 1));
            }
        }
        // j <= k evaluated once and mirrored; hess(i,j,k) == hess(i,k,j) exactly.
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t k = j; k < n; ++k) {
                double h = 0.0;
                try {
                    h = evaluate(t.d2[i][j][k], x, m.params());
                } catch (const EvalError& e) {
                    detail::jet_eval_fail(e, i, ", d2/dx" + std::to_string(j + 1) + "dx" +
                                                    std::to_string(k + 1));
                }
                jet.hess(i, j, k) = h;
                jet.hess(i, k, j) = h;
            }
    }
    return jet;
}

// Central differences: first derivatives with step h, second derivatives with
// the 4-point cross stencil at step 10h (the usual error balance puts the
// second-derivative step an order of magnitude above the first at h = 1e-5).
inline Jet2 jet2_fd(const VectorFieldModel& m, const Vec& x, double h = 1e-5) {
    if (!(h > 0.0)) throw std::invalid_argument("jet2_fd: step h must be positive");
    const std::size_t n = static_cast<std::size_t>(m.dim());
    const double h2 = 10.0 * h;

    Jet2 jet{Vec(n), Mat(n, n), Ten3(n, n, n)};
    jet.value = m.eval(x);

    Vec p(x);
    for (std::size_t j = 0; j < n; ++j) {
        p[j] = x[j] + h;
        const Vec fp = m.eval(p);
        p[j] = x[j] - h;
        const Vec fm = m.eval(p);
        p[j] = x[j];
        for (std::size_t i = 0; i < n; ++i) jet.jac(i, j) = (fp[i] - fm[i]) / (2.0 * h);
    }

    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = j; k < n; ++k) {
            Vec q(x);
            q[j] += h2;
            q[k] += h2;
            const Vec fpp = m.eval(q);
            q = x;
            q[j] += h2;
            q[k] -= h2;
            const Vec fpm = m.eval(q);
            q = x;
            q[j] -= h2;
            q[k] += h2;
            const Vec fmp = m.eval(q);
            q = x;
            q[j] -= h2;
            q[k] -= h2;
            const Vec fmm = m.eval(q);
            for (std::size_t i = 0; i < n; ++i) {
                // The cross stencil is already symmetric in (j,k); averaging
                // keeps the mirrored entry bit-identical.
                const double v = (fpp[i] - fpm[i] - fmp[i] + fmm[i]) / (4.0 * h2 * h2);
                jet.hess(i, j, k) = v;
                jet.hess(i, k, j) = v;
            }
        }
    return jet;
}

} // namespace kcc
