#pragma once

// Dense row-major containers for the small (n <= 10) vectors, matrices and
// rank-3 tensors this library works with, plus the few operations the
// geometry needs. Indices are 0-based.

#include <cassert>
#include <cmath>
#include <cstddef>
#include <vector>

namespace kcc {

using Vec = std::vector<double>;

class Mat {
public:
    Mat() = default;
    Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), a_(rows * cols, fill) {}

    static Mat identity(std::size_t n) {
        Mat m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    double& operator()(std::size_t i, std::size_t j) {
        assert(i < rows_ && j < cols_);
        return a_[i * cols_ + j];
    }
    double operator()(std::size_t i, std::size_t j) const {
        assert(i < rows_ && j < cols_);
        return a_[i * cols_ + j];
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> a_;
};

class Ten3 {
public:
    Ten3() = default;
    Ten3(std::size_t d0, std::size_t d1, std::size_t d2, double fill = 0.0)
        : d0_(d0), d1_(d1), d2_(d2), a_(d0 * d1 * d2, fill) {}

    double& operator()(std::size_t i, std::size_t j, std::size_t k) {
        assert(i < d0_ && j < d1_ && k < d2_);
        return a_[(i * d1_ + j) * d2_ + k];
    }
    double operator()(std::size_t i, std::size_t j, std::size_t k) const {
        assert(i < d0_ && j < d1_ && k < d2_);
        return a_[(i * d1_ + j) * d2_ + k];
    }

    std::size_t dim0() const noexcept { return d0_; }
    std::size_t dim1() const noexcept { return d1_; }
    std::size_t dim2() const noexcept { return d2_; }

private:
    std::size_t d0_ = 0, d1_ = 0, d2_ = 0;
    std::vector<double> a_;
};

inline Mat transpose(const Mat& m) {
    Mat t(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
    return t;
}

inline Mat operator+(const Mat& a, const Mat& b) {
    assert(a.rows() == b.rows() && a.cols() == b.cols());
    Mat c(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) c(i, j) = a(i, j) + b(i, j);
    return c;
}

inline Mat operator-(const Mat& a, const Mat& b) {
    assert(a.rows() == b.rows() && a.cols() == b.cols());
    Mat c(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) c(i, j) = a(i, j) - b(i, j);
    return c;
}

inline Mat operator*(double s, const Mat& a) {
    Mat c(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) c(i, j) = s * a(i, j);
    return c;
}

inline Mat operator*(const Mat& a, const Mat& b) {
    assert(a.cols() == b.rows());
    Mat c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
        }
    return c;
}

inline Vec operator*(const Mat& a, const Vec& x) {
    assert(a.cols() == x.size());
    Vec y(a.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) y[i] += a(i, j) * x[j];
    return y;
}

inline Vec operator+(const Vec& a, const Vec& b) {
    assert(a.size() == b.size());
    Vec c(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) c[i] = a[i] + b[i];
    return c;
}

inline Vec operator-(const Vec& a, const Vec& b) {
    assert(a.size() == b.size());
    Vec c(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) c[i] = a[i] - b[i];
    return c;
}

inline Vec operator*(double s, const Vec& a) {
    Vec c(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) c[i] = s * a[i];
    return c;
}

inline double max_abs(const Vec& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

inline double max_abs(const Mat& a) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) m = std::max(m, std::abs(a(i, j)));
    return m;
}

inline double max_abs(const Ten3& t) {
    double m = 0.0;
    for (std::size_t i = 0; i < t.dim0(); ++i)
        for (std::size_t j = 0; j < t.dim1(); ++j)
            for (std::size_t k = 0; k < t.dim2(); ++k) m = std::max(m, std::abs(t(i, j, k)));
    return m;
}

inline double trace(const Mat& a) {
    assert(a.rows() == a.cols());
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) s += a(i, i);
    return s;
}

inline bool all_finite(const Vec& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

// LU decomposition with partial pivoting. `singular` is set when a pivot
// vanishes; the factors are still usable for the determinant (which is 0).
struct LuFactors {
    Mat lu;
    std::vector<std::size_t> piv;
    int sign = 1;
    bool singular = false;
};

inline LuFactors lu_factor(Mat a) {
    assert(a.rows() == a.cols());
    const std::size_t n = a.rows();
    LuFactors f;
    f.piv.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t p = k;
        for (std::size_t i = k + 1; i < n; ++i)
            if (std::abs(a(i, k)) > std::abs(a(p, k))) p = i;
        f.piv[k] = p;
        if (p != k) {
            for (std::size_t j = 0; j < n; ++j) std::swap(a(k, j), a(p, j));
            f.sign = -f.sign;
        }
        if (a(k, k) == 0.0) {
            f.singular = true;
            continue;
        }
        for (std::size_t i = k + 1; i < n; ++i) {
            a(i, k) /= a(k, k);
            for (std::size_t j = k + 1; j < n; ++j) a(i, j) -= a(i, k) * a(k, j);
        }
    }
    f.lu = std::move(a);
    return f;
}

inline double lu_det(const LuFactors& f) {
    if (f.singular) return 0.0;
    double d = static_cast<double>(f.sign);
    for (std::size_t i = 0; i < f.lu.rows(); ++i) d *= f.lu(i, i);
    return d;
}

inline double det(const Mat& a) { return lu_det(lu_factor(a)); }

// Solves A x = b in place using precomputed factors. Returns false when A was
// singular to working precision.
inline bool lu_solve(const LuFactors& f, Vec& b) {
    if (f.singular) return false;
    const std::size_t n = f.lu.rows();
    assert(b.size() == n);
    for (std::size_t k = 0; k < n; ++k) {
        std::swap(b[k], b[f.piv[k]]);
        for (std::size_t i = k + 1; i < n; ++i) b[i] -= f.lu(i, k) * b[k];
    }
    for (std::size_t k = n; k-- > 0;) {
        for (std::size_t j = k + 1; j < n; ++j) b[k] -= f.lu(k, j) * b[j];
        b[k] /= f.lu(k, k);
    }
    return true;
}

} // namespace kcc
