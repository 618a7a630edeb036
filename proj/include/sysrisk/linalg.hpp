#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "sysrisk/errors.hpp"

namespace sysrisk {

using Vec = std::vector<double>;

/// Dense row-major matrix of doubles. Small and value-semantic; the sizes in
/// this project are at most a few hundred.
class Mat {
public:
    Mat() = default;
    Mat(std::size_t rows, std::size_t cols, double value = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, value) {}

    static Mat identity(std::size_t n) {
        Mat m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool square() const { return rows_ == cols_; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    const double& operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    bool operator==(const Mat& other) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline double dot(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(const Vec& a) { return std::sqrt(dot(a, a)); }

inline double mean(const Vec& a) {
    return a.empty() ? 0.0 : std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(a.size());
}

inline Vec mat_vec(const Mat& a, const Vec& x) {
    Vec y(a.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) s += a(i, j) * x[j];
        y[i] = s;
    }
    return y;
}

inline Mat mat_mul(const Mat& a, const Mat& b) {
    Mat c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
        }
    return c;
}

inline Mat transpose(const Mat& a) {
    Mat t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

/// x' A x
inline double quad_form(const Mat& a, const Vec& x) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) row += a(i, j) * x[j];
        s += x[i] * row;
    }
    return s;
}

inline double max_abs(const Mat& a) {
    double m = 0.0;
    for (double v : a.data()) m = std::max(m, std::abs(v));
    return m;
}

inline double max_abs_diff(const Mat& a, const Mat& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i)
        m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

inline double frobenius(const Mat& a) {
    double s = 0.0;
    for (double v : a.data()) s += v * v;
    return std::sqrt(s);
}

inline bool is_symmetric(const Mat& a, double tol = 0.0) {
    if (!a.square()) return false;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = i + 1; j < a.cols(); ++j)
            if (std::abs(a(i, j) - a(j, i)) > tol) return false;
    return true;
}

/// Cholesky factor of a symmetric positive semidefinite matrix, in natural
/// order with zero-pivot column handling, so that singular inputs (e.g. a
/// perfectly correlated rank-one covariance) factor exactly. A computed pivot
/// below -pivot_tol means the matrix is indefinite. The factor is verified to
/// reproduce the input: max |LL' - A| <= reconstruction tolerance.
inline Mat cholesky_psd(const Mat& a, double pivot_tol = 1e-10) {
    if (!a.square()) throw ValidationError("cholesky_psd: matrix must be square");
    const std::size_t n = a.rows();
    Mat l(n, n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        double d = a(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
        if (d < -pivot_tol)
            throw NumericError("cholesky_psd: indefinite matrix (pivot " + std::to_string(d) +
                               " at index " + std::to_string(j) + ")");
        if (d <= pivot_tol) {
            l(j, j) = 0.0; // zero pivot: column stays zero, validity checked below
            continue;
        }
        l(j, j) = std::sqrt(d);
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = a(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            l(i, j) = s / l(j, j);
        }
    }
    const double check_tol = std::max(1e-10, 64.0 * 1e-16 * static_cast<double>(n) * max_abs(a));
    Mat llt(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j <= i; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k <= j; ++k) s += l(i, k) * l(j, k);
            llt(i, j) = s;
            llt(j, i) = s;
        }
    if (max_abs_diff(llt, a) > check_tol)
        throw NumericError("cholesky_psd: matrix is not positive semidefinite within tolerance");
    return l;
}

/// Eigen-decomposition of a symmetric matrix.
struct EigenSym {
    Vec values;  // ascending
    Mat vectors; // column k is the eigenvector of values[k]; orthonormal
};

/// Cyclic Jacobi rotations. Converges when the off-diagonal Frobenius norm
/// drops below off_tol scaled by the matrix norm (absolute floor for tiny
/// matrices); throws after max_sweeps sweeps.
inline EigenSym jacobi_eigen(const Mat& input, double off_tol = 1e-12, int max_sweeps = 100) {
    if (!input.square()) throw ValidationError("jacobi_eigen: matrix must be square");
    const std::size_t n = input.rows();
    Mat a = input;
    Mat q = Mat::identity(n);
    const double threshold = off_tol * std::max(1.0, frobenius(input));

    auto off_norm = [&]() {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) s += a(i, j) * a(i, j);
        return std::sqrt(2.0 * s);
    };

    bool converged = (n <= 1) || off_norm() <= threshold;
    for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t qi = p + 1; qi < n; ++qi) {
                const double apq = a(p, qi);
                if (apq == 0.0) continue;
                const double theta = (a(qi, qi) - a(p, p)) / (2.0 * apq);
                double t = 1.0 / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                if (theta < 0.0) t = -t;
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                const double tau = s / (1.0 + c);
                const double h = t * apq;

                a(p, p) -= h;
                a(qi, qi) += h;
                a(p, qi) = 0.0;
                a(qi, p) = 0.0;
                for (std::size_t k = 0; k < n; ++k) {
                    if (k == p || k == qi) continue;
                    const double akp = a(k, p);
                    const double akq = a(k, qi);
                    a(k, p) = akp - s * (akq + tau * akp);
                    a(p, k) = a(k, p);
                    a(k, qi) = akq + s * (akp - tau * akq);
                    a(qi, k) = a(k, qi);
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double qkp = q(k, p);
                    const double qkq = q(k, qi);
                    q(k, p) = qkp - s * (qkq + tau * qkp);
                    q(k, qi) = qkq + s * (qkp - tau * qkq);
                }
            }
        }
        converged = off_norm() <= threshold;
    }
    if (!converged) throw NumericError("jacobi_eigen: no convergence after max sweeps");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t i, std::size_t j) { return a(i, i) < a(j, j); });

    EigenSym out;
    out.values.resize(n);
    out.vectors = Mat(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        out.values[k] = a(order[k], order[k]);
        for (std::size_t i = 0; i < n; ++i) out.vectors(i, k) = q(i, order[k]);
    }
    return out;
}

/// Least-squares line y = slope*x + intercept with coefficient of determination.
struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
};

inline LinearFit linear_fit(const Vec& x, const Vec& y) {
    const std::size_t n = x.size();
    if (n < 2 || y.size() != n) throw ValidationError("linear_fit: need two or more points");
    const double mx = mean(x), my = mean(y);
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    LinearFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    f.r_squared = (syy == 0.0) ? 1.0 : (sxy * sxy) / (sxx * syy);
    return f;
}

/// Standard normal CDF.
inline double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

} // namespace sysrisk
