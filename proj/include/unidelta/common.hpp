#pragma once
// Shared primitives: error taxonomy, small dense vectors/matrices, numeric helpers.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace unidelta {

using Vec = std::vector<double>;

// ---------------------------------------------------------------------------
// Error taxonomy. Every failure mode surfaced by the library derives from
// Error so callers can catch one base; the concrete type encodes the contract
// that was violated.
// ---------------------------------------------------------------------------
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Point lies outside (or on the excluded boundary of) a map's domain.
struct DomainError : Error {
    explicit DomainError(const std::string& msg) : Error(msg) {}
};

/// t and m coincide to within the degeneracy threshold; Delta is 0/0 there.
struct DegenerateError : Error {
    explicit DegenerateError(const std::string& msg) : Error(msg) {}
};

/// A Jacobian row norm fell below the rank floor (not full row rank).
struct RankError : Error {
    explicit RankError(const std::string& msg) : Error(msg) {}
};

struct NotPSDError : Error {
    explicit NotPSDError(const std::string& msg) : Error(msg) {}
};

struct DimensionError : Error {
    explicit DimensionError(const std::string& msg) : Error(msg) {}
};

struct EmptyError : Error {
    explicit EmptyError(const std::string& msg) : Error(msg) {}
};

/// One-dimensional minimization could not produce a finite objective.
struct OptimFail : Error {
    explicit OptimFail(const std::string& msg) : Error(msg) {}
};

/// Second derivative of the minimum-distance objective vanished at the fit.
struct SingularHessian : Error {
    explicit SingularHessian(const std::string& msg) : Error(msg) {}
};

struct UnknownBuiltin : Error {
    explicit UnknownBuiltin(const std::string& msg) : Error(msg) {}
};

/// Configuration/schema problem; `pointer` is a path into the config document.
struct ConfigError : Error {
    std::string pointer;
    ConfigError(const std::string& ptr, const std::string& msg)
        : Error(ptr + ": " + msg), pointer(ptr) {}
};

// ---------------------------------------------------------------------------
// Small dense row-major matrix. Dimensions here are tiny (d <= 4); no BLAS.
// ---------------------------------------------------------------------------
class Mat {
  public:
    Mat() = default;
    Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Mat identity(std::size_t n) {
        Mat m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    const std::vector<double>& data() const { return data_; }

    /// Matrix-vector product.
    Vec mul(const Vec& v) const {
        if (v.size() != cols_) throw DimensionError("Mat::mul: size mismatch");
        Vec out(rows_, 0.0);
        for (std::size_t i = 0; i < rows_; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < cols_; ++j) acc += data_[i * cols_ + j] * v[j];
            out[i] = acc;
        }
        return out;
    }

    Mat mul(const Mat& b) const {
        if (b.rows_ != cols_) throw DimensionError("Mat::mul: shape mismatch");
        Mat out(rows_, b.cols_);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t k = 0; k < cols_; ++k) {
                const double a = data_[i * cols_ + k];
                if (a == 0.0) continue;
                for (std::size_t j = 0; j < b.cols_; ++j) out(i, j) += a * b(k, j);
            }
        return out;
    }

    Mat transpose() const {
        Mat out(cols_, rows_);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < cols_; ++j) out(j, i) = (*this)(i, j);
        return out;
    }

    /// Euclidean norm of row i.
    double row_norm(std::size_t i) const {
        double acc = 0.0;
        for (std::size_t j = 0; j < cols_; ++j) {
            const double x = (*this)(i, j);
            acc += x * x;
        }
        return std::sqrt(acc);
    }

    bool all_finite() const {
        for (double x : data_)
            if (!std::isfinite(x)) return false;
        return true;
    }

  private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Vector helpers.
// ---------------------------------------------------------------------------
inline double norm2(const Vec& v) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return std::sqrt(acc);
}

inline Vec sub(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw DimensionError("sub: size mismatch");
    Vec out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

inline double dot(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw DimensionError("dot: size mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

inline bool all_finite(const Vec& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

/// Standard normal CDF.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Standard normal density.
inline double normal_pdf(double x) {
    static const double inv_sqrt_2pi = 0.3989422804014326779399460599344;
    return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

/// Standard normal quantile (Wichura's AS 241, double precision).
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw DomainError("normal_quantile: p must be in (0,1)");
    const double q = p - 0.5;
    double r, val;
    if (std::fabs(q) <= 0.425) {
        r = 0.180625 - q * q;
        val = q *
              (((((((2509.0809287301226727 * r + 33430.575583588128105) * r + 67265.770927008700853) * r +
                   45921.953931549871457) * r + 13731.693765509461125) * r + 1971.5909503065514427) * r +
                133.14166789178437745) * r + 3.387132872796366608) /
              (((((((5226.495278852545703 * r + 28729.085735721942674) * r + 39307.89580009271061) * r +
                   21213.794301586595867) * r + 5394.1960214247511077) * r + 687.1870074920579083) * r +
                42.313330701600911252) * r + 1.0);
        return val;
    }
    r = q < 0.0 ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    if (r <= 5.0) {
        r -= 1.6;
        val = (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r + 0.24178072517745061177) * r +
                   1.27045825245236838258) * r + 3.64784832476320460504) * r + 5.7694972214606914055) * r +
                4.6303378461565452959) * r + 1.42343711074968357734) /
              (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r + 0.0151986665636164571966) * r +
                   0.14810397642748007459) * r + 0.68976733498510000455) * r + 1.6763848301838038494) * r +
                2.05319162663775882187) * r + 1.0);
    } else {
        r -= 5.0;
        val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r + 0.0012426609473880784386) * r +
                   0.026532189526576123093) * r + 0.29656057182850489123) * r + 1.7848265399172913358) * r +
                5.4637849111641143699) * r + 6.6579046435011037772) /
              (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5) * r +
                   7.868691311456132591e-4) * r + 0.0148753612908506148525) * r + 0.13692988092273580531) * r +
                0.59983220655588793769) * r + 1.0);
    }
    return q < 0.0 ? -val : val;
}

inline constexpr double kCbrtEps = 6.055454452393342e-06;  // cbrt(2^-52)

}  // namespace unidelta
