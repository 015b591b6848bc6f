#pragma once

// The Lagrange geometry of an autonomous system x' = X(x) built from the
// least-squares Lagrangian L(x,y) = sum_i (y^i - X^i(x))^2 over the identity
// metric. With J the Jacobian and H the Hessians of X:
//
//   semispray             G   = -1/2 [ (J - J^T) y + J^T X ]
//   nonlinear connection  N   = -1/2 (J - J^T)            (= dG/dy, skew)
//   connection gradient   dN(i,j,k) = dN^i_j/dx^k
//   d-torsion             R(i,j,k)  = dN(i,j,k) - dN(i,k,j)
//   first invariant       E   = 2G - N y
//   invariant gradient    Emat(i,j) = delta E^i / delta x^j
//   deviation curvature   P   = -2 dG/dx + (dN^i_j/dx^l) y^l + N^2
//
// N is independent of y for this Lagrangian class, so the -2 G^l dN^i_j/dy^l
// term of the deviation tensor is identically zero and the delta-derivative
// delta/dx^k = d/dx^k - N^r_k d/dy^r reduces to d/dx^k on y-free objects.
// P governs the covariant deviation dynamics D^2 xi/dt^2 = P xi along
// Euler-Lagrange trajectories; that identity is the end-to-end oracle used by
// the tests. Indices here are 0-based; hess(i,j,k) = d2 X^i / dx^j dx^k.

#include <cmath>
#include <utility>

#include "kcc/jet.hpp"
#include "kcc/linalg.hpp"

namespace kcc {

struct PhaseState {
    Vec x;
    Vec y;
};

struct GeometryFrame {
    Vec G;       // semispray coefficients
    Mat N;       // nonlinear connection
    Ten3 dN;     // dN(i,j,k) = dN^i_j/dx^k
    Ten3 R;      // d-torsion R^i_jk
    Vec E;       // first invariant
    Mat Emat;    // invariant gradient matrix (delta E^i/delta x^j)
    Mat P;       // deviation curvature tensor
    double L;    // Lagrangian value at (x, y)
};

inline double lagrangian(const Jet2& jet, const Vec& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double d = y[i] - jet.value[i];
        s += d * d;
    }
    return s;
}

inline Vec semispray(const Jet2& jet, const Vec& y) {
    const std::size_t n = y.size();
    Vec g(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j)
            s += (jet.jac(i, j) - jet.jac(j, i)) * y[j] + jet.jac(j, i) * jet.value[j];
        g[i] = -0.5 * s;
    }
    return g;
}

inline Mat nonlinear_connection(const Jet2& jet) {
    const std::size_t n = jet.value.size();
    Mat nc(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            nc(i, j) = -0.5 * (jet.jac(i, j) - jet.jac(j, i));
    return nc;
}

inline Ten3 connection_gradient(const Jet2& jet) {
    const std::size_t n = jet.value.size();
    Ten3 dn(n, n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t k = 0; k < n; ++k)
                dn(i, j, k) = -0.5 * (jet.hess(i, j, k) - jet.hess(j, i, k));
    return dn;
}

inline Ten3 d_torsion(const Ten3& dn) {
    const std::size_t n = dn.dim0();
    Ten3 r(n, n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t k = 0; k < n; ++k) r(i, j, k) = dn(i, j, k) - dn(i, k, j);
    return r;
}

// E = 2G - N y. first_invariant_expanded evaluates the same object directly
// as -1/2 (J - J^T) y - J^T X; agreement of the two routes is a tested
// invariant.
inline Vec first_invariant(const Jet2& jet, const Vec& y) {
    const Vec g = semispray(jet, y);
    const Mat nc = nonlinear_connection(jet);
    Vec e(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < y.size(); ++j) s += nc(i, j) * y[j];
        e[i] = 2.0 * g[i] - s;
    }
    return e;
}

inline Vec first_invariant_expanded(const Jet2& jet, const Vec& y) {
    const std::size_t n = y.size();
    Vec e(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j)
            s += -0.5 * (jet.jac(i, j) - jet.jac(j, i)) * y[j] - jet.jac(j, i) * jet.value[j];
        e[i] = s;
    }
    return e;
}

// Emat(i,j) = -1/2 (H^i_jk - H^k_ij) y^k - H^k_ij X^k - (J^T J)_ij
//             - 1/4 (J_kj - J_jk)(J_ik - J_ki), summed over k.
inline Mat invariant_matrix(const Jet2& jet, const Vec& y) {
    const std::size_t n = y.size();
    Mat e(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double t1 = 0.0, t2 = 0.0, t3 = 0.0, t4 = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                t1 += (jet.hess(i, j, k) - jet.hess(k, i, j)) * y[k];
                t2 += jet.hess(k, i, j) * jet.value[k];
                t3 += jet.jac(k, i) * jet.jac(k, j);
                t4 += (jet.jac(k, j) - jet.jac(j, k)) * (jet.jac(i, k) - jet.jac(k, i));
            }
            e(i, j) = -0.5 * t1 - t2 - t3 - 0.25 * t4;
        }
    return e;
}

// dG^i/dx^j, expanded analytically through the jet:
//   dG^i/dx^j = -1/2 [ (H^i_kj - H^k_ij) y^k + H^k_ij X^k + (J^T J)_ij ]
inline Mat semispray_position_gradient(const Jet2& jet, const Vec& y) {
    const std::size_t n = y.size();
    Mat g(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                s += (jet.hess(i, k, j) - jet.hess(k, i, j)) * y[k];
                s += jet.hess(k, i, j) * jet.value[k];
                s += jet.jac(k, i) * jet.jac(k, j);
            }
            g(i, j) = -0.5 * s;
        }
    return g;
}

// P = -2 dG/dx + (dN^i_j/dx^l) y^l + N^i_l N^l_j. The dN/dy term of the
// general deviation tensor is zero here (N does not depend on y).
inline Mat deviation_tensor(const Jet2& jet, const Vec& y) {
    const std::size_t n = y.size();
    const Mat gx = semispray_position_gradient(jet, y);
    const Mat nc = nonlinear_connection(jet);
    const Ten3 dn = connection_gradient(jet);
    Mat p(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = -2.0 * gx(i, j);
            for (std::size_t l = 0; l < n; ++l)
                s += dn(i, j, l) * y[l] + nc(i, l) * nc(l, j);
            p(i, j) = s;
        }
    return p;
}

inline GeometryFrame geometry_frame(const Jet2& jet, const Vec& y) {
    GeometryFrame f;
    f.G = semispray(jet, y);
    f.N = nonlinear_connection(jet);
    f.dN = connection_gradient(jet);
    f.R = d_torsion(f.dN);
    f.E = first_invariant(jet, y);
    f.Emat = invariant_matrix(jet, y);
    f.P = deviation_tensor(jet, y);
    f.L = lagrangian(jet, y);
    return f;
}

inline GeometryFrame geometry_frame(const VectorFieldModel& m, const Vec& x, const Vec& y) {
    return geometry_frame(jet2(m, x), y);
}

// Residuals of the decomposition P = R^i_jk y^k + Emat, in both conventions
// that the torsion carries: D1 contracts the antisymmetrized R, D2 contracts
// the plain connection gradient dN. Purely diagnostic; the two conventions
// disagree with the deviation tensor on generic nonlinear fields, so nothing
// downstream assumes either.
struct DecompositionResidual {
    Mat d1;
    Mat d2;
};

inline DecompositionResidual decomposition_residual(const GeometryFrame& f, const Vec& y) {
    const std::size_t n = y.size();
    DecompositionResidual r{Mat(n, n), Mat(n, n)};
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double ry = 0.0, dny = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                ry += f.R(i, j, k) * y[k];
                dny += f.dN(i, j, k) * y[k];
            }
            r.d1(i, j) = f.P(i, j) - (ry + f.Emat(i, j));
            r.d2(i, j) = f.P(i, j) - (dny + f.Emat(i, j));
        }
    return r;
}

} // namespace kcc
