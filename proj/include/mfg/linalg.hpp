#ifndef MFG_LINALG_HPP
#define MFG_LINALG_HPP

// Small dense linear algebra kernels. Everything in this project lives at
// desk scale (matrices up to a few hundred rows), so plain O(n^3) dense
// factorizations are used throughout.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfg {

using Vec = std::vector<double>;

/// Error raised when a numerical kernel cannot produce a usable result
/// (singular factorization, non-convergence, NaN states).
class NumericalFailure : public std::runtime_error {
public:
    explicit NumericalFailure(const std::string& what) : std::runtime_error(what) {}
};

/// Dense row-major matrix.
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

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t i, std::size_t j) { return a_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return a_[i * cols_ + j]; }

    const Vec& data() const { return a_; }
    Vec& data() { return a_; }

private:
    std::size_t rows_ = 0, cols_ = 0;
    Vec a_;
};

inline Mat operator*(const Mat& a, const Mat& b) {
    if (a.cols() != b.rows()) throw std::invalid_argument("Mat multiply: shape mismatch");
    Mat c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
        }
    return c;
}

inline Mat operator+(const Mat& a, const Mat& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument("Mat add: shape mismatch");
    Mat c = a;
    for (std::size_t i = 0; i < c.data().size(); ++i) c.data()[i] += b.data()[i];
    return c;
}

inline Mat operator-(const Mat& a, const Mat& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument("Mat subtract: shape mismatch");
    Mat c = a;
    for (std::size_t i = 0; i < c.data().size(); ++i) c.data()[i] -= b.data()[i];
    return c;
}

inline Mat operator*(double s, const Mat& a) {
    Mat c = a;
    for (double& v : c.data()) v *= s;
    return c;
}

inline Vec matvec(const Mat& a, const Vec& x) {
    if (a.cols() != x.size()) throw std::invalid_argument("matvec: shape mismatch");
    Vec y(a.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) s += a(i, j) * x[j];
        y[i] = s;
    }
    return y;
}

inline Mat transpose(const Mat& a) {
    Mat t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

inline double dot(const Vec& x, const Vec& y) {
    if (x.size() != y.size()) throw std::invalid_argument("dot: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
    return s;
}

inline double norm2(const Vec& x) { return std::sqrt(dot(x, x)); }

inline double frobenius_norm(const Mat& a) {
    double s = 0.0;
    for (double v : a.data()) s += v * v;
    return std::sqrt(s);
}

/// LU factorization with partial pivoting, stored in place.
struct LuFactors {
    Mat lu;
    std::vector<std::size_t> perm;
};

inline LuFactors lu_factor(Mat a) {
    const std::size_t n = a.rows();
    if (n != a.cols()) throw std::invalid_argument("lu_factor: square matrix required");
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t p = k;
        double best = std::fabs(a(k, k));
        for (std::size_t i = k + 1; i < n; ++i)
            if (std::fabs(a(i, k)) > best) { best = std::fabs(a(i, k)); p = i; }
        if (best < 1e-300) throw NumericalFailure("lu_factor: singular matrix");
        if (p != k) {
            for (std::size_t j = 0; j < n; ++j) std::swap(a(k, j), a(p, j));
            std::swap(perm[k], perm[p]);
        }
        for (std::size_t i = k + 1; i < n; ++i) {
            a(i, k) /= a(k, k);
            const double lik = a(i, k);
            if (lik == 0.0) continue;
            for (std::size_t j = k + 1; j < n; ++j) a(i, j) -= lik * a(k, j);
        }
    }
    return {std::move(a), std::move(perm)};
}

inline Vec lu_solve(const LuFactors& f, const Vec& b) {
    const std::size_t n = f.lu.rows();
    if (b.size() != n) throw std::invalid_argument("lu_solve: size mismatch");
    Vec x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = b[f.perm[i]];
    for (std::size_t i = 1; i < n; ++i)
        for (std::size_t j = 0; j < i; ++j) x[i] -= f.lu(i, j) * x[j];
    for (std::size_t ii = n; ii-- > 0;) {
        for (std::size_t j = ii + 1; j < n; ++j) x[ii] -= f.lu(ii, j) * x[j];
        x[ii] /= f.lu(ii, ii);
    }
    return x;
}

inline Mat invert(const Mat& a) {
    const std::size_t n = a.rows();
    LuFactors f = lu_factor(a);
    Mat inv(n, n);
    Vec e(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        e.assign(n, 0.0);
        e[j] = 1.0;
        Vec col = lu_solve(f, e);
        for (std::size_t i = 0; i < n; ++i) inv(i, j) = col[i];
    }
    return inv;
}

/// Cholesky factor L with A = L L^T. Throws NumericalFailure if A is not SPD.
inline Mat cholesky(const Mat& a) {
    const std::size_t n = a.rows();
    if (n != a.cols()) throw std::invalid_argument("cholesky: square matrix required");
    Mat l(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = a(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            if (i == j) {
                if (s <= 0.0) throw NumericalFailure("cholesky: matrix not positive definite");
                l(i, i) = std::sqrt(s);
            } else {
                l(i, j) = s / l(j, j);
            }
        }
    }
    return l;
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Eigenvalues come out sorted in decreasing order; eigenvectors are the
/// columns of `vectors` in the matching order.
struct SymEigen {
    Vec values;
    Mat vectors;
};

inline SymEigen jacobi_eigensym(Mat a, int max_sweeps = 64) {
    const std::size_t n = a.rows();
    if (n != a.cols()) throw std::invalid_argument("jacobi_eigensym: square matrix required");
    Mat v = Mat::identity(n);
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (std::sqrt(2.0 * off) <= 1e-14 * (1.0 + frobenius_norm(a))) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (std::fabs(apq) < 1e-300) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    SymEigen out;
    out.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.values[i] = a(i, i);
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t l, std::size_t r) { return out.values[l] > out.values[r]; });
    Vec sorted(n);
    Mat vs(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        sorted[j] = out.values[idx[j]];
        for (std::size_t i = 0; i < n; ++i) vs(i, j) = v(i, idx[j]);
    }
    out.values = std::move(sorted);
    out.vectors = std::move(vs);
    return out;
}

/// Symmetric PSD square root via eigendecomposition.
inline Mat sym_sqrt(const Mat& a) {
    SymEigen eg = jacobi_eigensym(a);
    const std::size_t n = a.rows();
    Mat r(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                const double lam = eg.values[k];
                if (lam <= 0.0) continue;
                s += eg.vectors(i, k) * std::sqrt(lam) * eg.vectors(j, k);
            }
            r(i, j) = s;
        }
    return r;
}

/// Spectral norm estimate by power iteration on A^T A.
inline double spectral_norm(const Mat& a, int iters = 60) {
    if (a.rows() == 0 || a.cols() == 0) return 0.0;
    Vec x(a.cols(), 1.0);
    double nrm = norm2(x);
    for (double& v : x) v /= nrm;
    double est = 0.0;
    const Mat at = transpose(a);
    for (int it = 0; it < iters; ++it) {
        Vec y = matvec(at, matvec(a, x));
        const double ny = norm2(y);
        if (ny == 0.0) return 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) x[i] = y[i] / ny;
        est = std::sqrt(ny);
    }
    return est;
}

} // namespace mfg

#endif
