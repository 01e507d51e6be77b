#pragma once

// Small dense linear algebra: the models here have p <= ~10 parameters, so
// plain O(p^3) kernels on row-major storage are all that is needed.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace dmskew::linalg {

using Vector = std::vector<double>;

class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<double> data_;
};

inline Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw std::invalid_argument("matmul: shape mismatch");
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
        }
    return c;
}

inline Vector matvec(const Matrix& a, const Vector& x) {
    if (a.cols() != x.size()) throw std::invalid_argument("matvec: shape mismatch");
    Vector y(a.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) s += a(i, j) * x[j];
        y[i] = s;
    }
    return y;
}

// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
class Cholesky {
public:
    bool ok = false;
    double jitter = 0.0; // diagonal shift that was required, 0 if none

    static Cholesky factor(const Matrix& a) {
        Cholesky ch;
        ch.decompose(a, 0.0);
        return ch;
    }

    // SPD solve with escalating diagonal jitter on near-singularity.
    static Cholesky factor_jittered(const Matrix& a, int max_tries = 3) {
        Cholesky ch;
        if (ch.decompose(a, 0.0)) return ch;
        double trace = 0.0;
        for (std::size_t i = 0; i < a.rows(); ++i) trace += a(i, i);
        double eps = 1e-10 * trace / static_cast<double>(a.rows());
        for (int t = 0; t < max_tries; ++t, eps *= 1e3) {
            if (ch.decompose(a, eps)) {
                ch.jitter = eps;
                return ch;
            }
        }
        return ch; // ok == false
    }

    Vector solve(const Vector& b) const {
        const std::size_t n = l_.rows();
        if (b.size() != n) throw std::invalid_argument("Cholesky::solve: size mismatch");
        Vector y(n), x(n);
        for (std::size_t i = 0; i < n; ++i) {
            double s = b[i];
            for (std::size_t j = 0; j < i; ++j) s -= l_(i, j) * y[j];
            y[i] = s / l_(i, i);
        }
        for (std::size_t ii = n; ii-- > 0;) {
            double s = y[ii];
            for (std::size_t j = ii + 1; j < n; ++j) s -= l_(j, ii) * x[j];
            x[ii] = s / l_(ii, ii);
        }
        return x;
    }

    Matrix inverse() const {
        const std::size_t n = l_.rows();
        Matrix inv(n, n);
        Vector e(n, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            e[j] = 1.0;
            Vector col = solve(e);
            e[j] = 0.0;
            for (std::size_t i = 0; i < n; ++i) inv(i, j) = col[i];
        }
        return inv;
    }

    // Crude spectral condition estimate from the factor diagonal.
    double condition_estimate() const {
        double dmax = 0.0, dmin = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < l_.rows(); ++i) {
            dmax = std::max(dmax, l_(i, i));
            dmin = std::min(dmin, l_(i, i));
        }
        const double q = dmax / dmin;
        return q * q;
    }

private:
    Matrix l_;

    bool decompose(const Matrix& a, double shift) {
        if (a.rows() != a.cols()) throw std::invalid_argument("Cholesky: matrix not square");
        const std::size_t n = a.rows();
        l_ = Matrix(n, n);
        for (std::size_t j = 0; j < n; ++j) {
            double d = a(j, j) + shift;
            for (std::size_t k = 0; k < j; ++k) d -= l_(j, k) * l_(j, k);
            if (!(d > 0.0) || !std::isfinite(d)) {
                ok = false;
                return false;
            }
            l_(j, j) = std::sqrt(d);
            for (std::size_t i = j + 1; i < n; ++i) {
                double s = a(i, j);
                for (std::size_t k = 0; k < j; ++k) s -= l_(i, k) * l_(j, k);
                l_(i, j) = s / l_(j, j);
            }
        }
        ok = true;
        return true;
    }
};

// Least squares via normal equations; adequate for the small, well-scaled
// initialisation problems it serves.
inline Vector lstsq(const Matrix& a, const Vector& b) {
    const std::size_t p = a.cols();
    Matrix ata(p, p);
    Vector atb(p, 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < p; ++j) {
            atb[j] += a(i, j) * b[i];
            for (std::size_t k = j; k < p; ++k) ata(j, k) += a(i, j) * a(i, k);
        }
    }
    for (std::size_t j = 0; j < p; ++j)
        for (std::size_t k = 0; k < j; ++k) ata(j, k) = ata(k, j);
    Cholesky ch = Cholesky::factor_jittered(ata);
    if (!ch.ok) throw std::runtime_error("lstsq: normal equations not positive definite");
    return ch.solve(atb);
}

} // namespace dmskew::linalg
