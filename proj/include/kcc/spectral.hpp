#pragma once

// Eigenvalues of small dense real nonsymmetric matrices and the Jacobi
// stability classification built on them. The solver is the classic chain
// balance -> Householder Hessenberg reduction -> Francis double-shift QR
// (eigenvalues only, after the EISPACK-era HQR routine), restructured with
// 0-based indices. Deterministic for identical input; budget 30n sweeps.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <string>
#include <vector>

#include "kcc/errors.hpp"
#include "kcc/geometry.hpp"
#include "kcc/linalg.hpp"

namespace kcc {

enum class Classification { JacobiStable, JacobiUnstable, Marginal };

inline const char* to_string(Classification c) {
    switch (c) {
        case Classification::JacobiStable: return "JacobiStable";
        case Classification::JacobiUnstable: return "JacobiUnstable";
        case Classification::Marginal: return "Marginal";
    }
    return "?";
}

namespace detail {

// Iterative row/column scaling (radix 2, Parlett-Reinsch). A diagonal
// similarity, so eigenvalues are preserved exactly.
inline void balance_inplace(Mat& a) {
    const std::size_t n = a.rows();
    const double radix = 2.0;
    const double b2 = radix * radix;
    bool noconv = true;
    while (noconv) {
        noconv = false;
        for (std::size_t i = 0; i < n; ++i) {
            double c = 0.0, r = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                c += std::abs(a(j, i));
                r += std::abs(a(i, j));
            }
            if (c == 0.0 || r == 0.0) continue;
            double g = r / radix;
            double f = 1.0;
            const double s = c + r;
            while (c < g) {
                f *= radix;
                c *= b2;
            }
            g = r * radix;
            while (c >= g) {
                f /= radix;
                c /= b2;
            }
            if ((c + r) / f < 0.95 * s) {
                noconv = true;
                const double ginv = 1.0 / f;
                for (std::size_t j = 0; j < n; ++j) a(i, j) *= ginv;
                for (std::size_t j = 0; j < n; ++j) a(j, i) *= f;
            }
        }
    }
}

// Householder similarity reduction to upper Hessenberg form.
inline void hessenberg_inplace(Mat& a) {
    const std::size_t n = a.rows();
    if (n < 3) return;
    Vec v(n, 0.0);
    for (std::size_t k = 0; k + 2 < n; ++k) {
        double scale = 0.0;
        for (std::size_t i = k + 1; i < n; ++i) scale += std::abs(a(i, k));
        if (scale == 0.0) continue;
        double alpha2 = 0.0;
        for (std::size_t i = k + 1; i < n; ++i) {
            v[i] = a(i, k) / scale;
            alpha2 += v[i] * v[i];
        }
        double alpha = std::sqrt(alpha2);
        if (v[k + 1] < 0.0) alpha = -alpha;
        v[k + 1] += alpha;
        const double beta = alpha * v[k + 1]; // = v.v / 2
        if (beta == 0.0) continue;

        // A <- (I - v v^T/beta) A (I - v v^T/beta)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t i = k + 1; i < n; ++i) s += v[i] * a(i, j);
            s /= beta;
            for (std::size_t i = k + 1; i < n; ++i) a(i, j) -= s * v[i];
        }
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t j = k + 1; j < n; ++j) s += a(i, j) * v[j];
            s /= beta;
            for (std::size_t j = k + 1; j < n; ++j) a(i, j) -= s * v[j];
        }
        a(k + 1, k) = -scale * alpha;
        for (std::size_t i = k + 2; i < n; ++i) a(i, k) = 0.0;
    }
}

inline std::vector<std::complex<double>> francis_qr(Mat h) {
    const std::size_t n = h.rows();
    std::vector<std::complex<double>> eig;
    eig.reserve(n);
    if (n == 0) return eig;

    double norm = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = (i == 0 ? 0 : i - 1); j < n; ++j) norm += std::abs(h(i, j));

    long itn = 30 * static_cast<long>(n);
    std::size_t en = n - 1;
    double t = 0.0;
    bool active = true;

    while (active) {
        int its = 0;
        for (;;) {
            // Look for a negligible subdiagonal element splitting off a block.
            std::size_t l = en;
            while (l > 0) {
                double s = std::abs(h(l - 1, l - 1)) + std::abs(h(l, l));
                if (s == 0.0) s = norm;
                if (s + std::abs(h(l, l - 1)) == s) break;
                --l;
            }

            const double x = h(en, en);
            if (l == en) { // one real root
                eig.emplace_back(x + t, 0.0);
                if (en == 0) {
                    active = false;
                    break;
                }
                en -= 1;
                break;
            }

            const double y = h(en - 1, en - 1);
            const double w = h(en, en - 1) * h(en - 1, en);
            if (l + 1 == en) { // a 2x2 block: real pair or complex conjugates
                const double p = (y - x) / 2.0;
                const double q = p * p + w;
                double zz = std::sqrt(std::abs(q));
                const double xx = x + t;
                if (q >= 0.0) {
                    zz = p + (p >= 0.0 ? zz : -zz);
                    const double l1 = xx + zz;
                    const double l2 = (zz != 0.0) ? xx - w / zz : l1;
                    eig.emplace_back(l1, 0.0);
                    eig.emplace_back(l2, 0.0);
                } else {
                    eig.emplace_back(xx + p, zz);
                    eig.emplace_back(xx + p, -zz);
                }
                if (en <= 1) {
                    active = false;
                    break;
                }
                en -= 2;
                break;
            }

            if (itn == 0)
                throw ConvergenceError("eigenvalue iteration exhausted its sweep budget with " +
                                       std::to_string(eig.size()) + " of " + std::to_string(n) +
                                       " eigenvalues isolated");

            double sx = x, sy = y, sw = w;
            if (its == 10 || its == 20) {
                // exceptional shift
                t += sx;
                for (std::size_t i = 0; i <= en; ++i) h(i, i) -= sx;
                const double s = std::abs(h(en, en - 1)) + std::abs(h(en - 1, en - 2));
                sx = 0.75 * s;
                sy = sx;
                sw = -0.4375 * s * s;
            }
            ++its;
            --itn;

            // Find two consecutive small subdiagonal elements.
            std::size_t m = en - 2;
            double p = 0.0, q = 0.0, r = 0.0;
            for (;;) {
                const double zz = h(m, m);
                const double rr = sx - zz;
                const double ss = sy - zz;
                p = (rr * ss - sw) / h(m + 1, m) + h(m, m + 1);
                q = h(m + 1, m + 1) - zz - rr - ss;
                r = h(m + 2, m + 1);
                const double sc = std::abs(p) + std::abs(q) + std::abs(r);
                p /= sc;
                q /= sc;
                r /= sc;
                if (m == l) break;
                const double tst = std::abs(p) * (std::abs(h(m - 1, m - 1)) + std::abs(zz) +
                                                  std::abs(h(m + 1, m + 1)));
                if (tst + std::abs(h(m, m - 1)) * (std::abs(q) + std::abs(r)) == tst) break;
                --m;
            }
            for (std::size_t i = m + 2; i <= en; ++i) {
                h(i, i - 2) = 0.0;
                if (i > m + 2) h(i, i - 3) = 0.0;
            }

            // Double QR sweep on rows l..en, columns m..en.
            for (std::size_t k = m; k < en; ++k) {
                const bool notlast = (k != en - 1);
                double xsc = 0.0;
                if (k != m) {
                    p = h(k, k - 1);
                    q = h(k + 1, k - 1);
                    r = notlast ? h(k + 2, k - 1) : 0.0;
                    xsc = std::abs(p) + std::abs(q) + std::abs(r);
                    if (xsc == 0.0) continue;
                    p /= xsc;
                    q /= xsc;
                    r /= xsc;
                }
                double s = std::sqrt(p * p + q * q + r * r);
                if (p < 0.0) s = -s;
                if (k != m)
                    h(k, k - 1) = -s * xsc;
                else if (l != m)
                    h(k, k - 1) = -h(k, k - 1);
                p += s;
                const double fx = p / s;
                const double fy = q / s;
                const double fz = r / s;
                q /= p;
                r /= p;

                if (notlast) {
                    for (std::size_t j = k; j < n; ++j) {
                        double pp = h(k, j) + q * h(k + 1, j) + r * h(k + 2, j);
                        h(k, j) -= pp * fx;
                        h(k + 1, j) -= pp * fy;
                        h(k + 2, j) -= pp * fz;
                    }
                    const std::size_t imax = std::min(en, k + 3);
                    for (std::size_t i = 0; i <= imax; ++i) {
                        double pp = fx * h(i, k) + fy * h(i, k + 1) + fz * h(i, k + 2);
                        h(i, k) -= pp;
                        h(i, k + 1) -= pp * q;
                        h(i, k + 2) -= pp * r;
                    }
                } else {
                    for (std::size_t j = k; j < n; ++j) {
                        double pp = h(k, j) + q * h(k + 1, j);
                        h(k, j) -= pp * fx;
                        h(k + 1, j) -= pp * fy;
                    }
                    const std::size_t imax = std::min(en, k + 3);
                    for (std::size_t i = 0; i <= imax; ++i) {
                        double pp = fx * h(i, k) + fy * h(i, k + 1);
                        h(i, k) -= pp;
                        h(i, k + 1) -= pp * q;
                    }
                }
            }
        }
    }
    return eig;
}

} // namespace detail

// Eigenvalues sorted by descending real part, ties by descending imaginary
// part, so identical matrices always report in the same order.
inline std::vector<std::complex<double>> eigenvalues(const Mat& m) {
    if (m.rows() != m.cols() || m.rows() == 0)
        throw std::invalid_argument("eigenvalues: matrix must be square and non-empty");
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j)
            if (!std::isfinite(m(i, j)))
                throw std::invalid_argument("eigenvalues: matrix has a non-finite entry");

    Mat h = m;
    detail::balance_inplace(h);

    // Normalize the magnitude by an exact power of two. The Francis shift
    // polynomial forms products of matrix entries, which underflow (zeroing
    // the shifts and stalling convergence) or overflow (poisoning the sweep
    // with NaN) when entries sit near the ends of the double range.
    int mag = 0;
    const double amax = max_abs(h);
    if (amax > 0.0) {
        mag = std::ilogb(amax);
        mag = std::clamp(mag, -1022, 1022);
        for (std::size_t i = 0; i < h.rows(); ++i)
            for (std::size_t j = 0; j < h.cols(); ++j)
                h(i, j) = std::ldexp(h(i, j), -mag);
    }

    detail::hessenberg_inplace(h);
    auto eig = detail::francis_qr(std::move(h));
    for (auto& lambda : eig)
        lambda = {std::ldexp(lambda.real(), mag), std::ldexp(lambda.imag(), mag)};
    std::sort(eig.begin(), eig.end(), [](const auto& a, const auto& b) {
        if (a.real() != b.real()) return a.real() > b.real();
        return a.imag() > b.imag();
    });
    return eig;
}

struct SpectrumReport {
    std::vector<std::complex<double>> eigenvalues;
    double max_re = 0.0;
    Classification classification = Classification::Marginal;
    double det = 0.0;
};

// Pointwise Jacobi test: stable iff every eigenvalue of the deviation tensor
// has strictly negative real part. "Strictly negative" is undecidable at
// floating point, so a tol-wide band around zero reports Marginal.
inline SpectrumReport classify_jacobi(const Mat& m, double tol = 1e-9) {
    if (tol < 0.0) throw std::invalid_argument("classify_jacobi: tol must be >= 0");
    SpectrumReport rep;
    rep.eigenvalues = eigenvalues(m);
    rep.max_re = rep.eigenvalues.front().real();
    rep.det = det(m);
    if (rep.max_re < -tol)
        rep.classification = Classification::JacobiStable;
    else if (rep.max_re > tol)
        rep.classification = Classification::JacobiUnstable;
    else
        rep.classification = Classification::Marginal;
    return rep;
}

// Structural instability test: in odd dimension n >= 3, a skew-symmetric
// invariant gradient matrix forces det P = 0, so lambda = 0 is an eigenvalue
// and strict negativity is impossible. The conclusion (singular P, a zero
// eigenvalue) is checked directly on P rather than inferred.
struct OddSkewInstability {
    bool applies = false;
    double skew_defect = 0.0;
    double det_p = 0.0;
    bool has_zero_eigenvalue = false;
};

inline OddSkewInstability odd_skew_instability(const GeometryFrame& f, double tol = 1e-9) {
    const std::size_t n = f.Emat.rows();
    OddSkewInstability r;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            r.skew_defect = std::max(r.skew_defect, std::abs(f.Emat(i, j) + f.Emat(j, i)));
    const bool odd = (n >= 3) && (n % 2 == 1);
    r.applies = odd && r.skew_defect <= tol * (1.0 + max_abs(f.Emat));
    r.det_p = det(f.P);
    double min_abs = std::numeric_limits<double>::infinity();
    for (const auto& lambda : eigenvalues(f.P)) min_abs = std::min(min_abs, std::abs(lambda));
    r.has_zero_eigenvalue = min_abs <= tol * (1.0 + max_abs(f.P));
    return r;
}

// The overall verdict for a point: the eigenvalue test decides when it can;
// an applicable odd-skew instability upgrades Marginal to JacobiUnstable,
// since a zero eigenvalue rules strict negativity out exactly.
inline Classification combined_verdict(const SpectrumReport& s, const OddSkewInstability& t) {
    if (s.classification == Classification::JacobiUnstable) return Classification::JacobiUnstable;
    if (t.applies && t.has_zero_eigenvalue) return Classification::JacobiUnstable;
    return s.classification;
}

} // namespace kcc
