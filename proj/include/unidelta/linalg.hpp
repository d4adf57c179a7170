#pragma once
// Tiny dense symmetric linear algebra: Jacobi eigendecomposition, PSD
// Cholesky, and the inverse matrix square root used by the studentizer.
// Matrix orders here are the output dimensions of phi maps (1 or 2 in every
// shipped study), so cyclic Jacobi is plenty.

#include <cmath>

#include "common.hpp"

namespace unidelta {

struct SymEigen {
    Vec values;   // ascending
    Mat vectors;  // columns are eigenvectors
};

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
inline SymEigen sym_eigen(const Mat& a_in) {
    const std::size_t n = a_in.rows();
    if (a_in.cols() != n) throw DimensionError("sym_eigen: matrix must be square");
    Mat a = a_in;
    Mat v = Mat::identity(n);
    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
        if (off <= 1e-300) break;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                if (std::fabs(a(p, q)) < 1e-300) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
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
    // sort ascending by eigenvalue (selection sort keeps vectors aligned)
    SymEigen out;
    out.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.values[i] = a(i, i);
    out.vectors = v;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t lo = i;
        for (std::size_t j = i + 1; j < n; ++j)
            if (out.values[j] < out.values[lo]) lo = j;
        if (lo != i) {
            std::swap(out.values[i], out.values[lo]);
            for (std::size_t k = 0; k < n; ++k) {
                const double tmp = out.vectors(k, i);
                out.vectors(k, i) = out.vectors(k, lo);
                out.vectors(k, lo) = tmp;
            }
        }
    }
    return out;
}

/// B with B * B = A^{-1} for symmetric A; eigenvalues below `floor` raise
/// RankError (the studentizer treats that replication as rank-deficient).
inline Mat inv_sqrt_sym(const Mat& a, double floor_ev = 1e-12) {
    const SymEigen eg = sym_eigen(a);
    const std::size_t n = a.rows();
    Mat out(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                const double ev = eg.values[k];
                if (ev < floor_ev) throw RankError("inv_sqrt_sym: eigenvalue below floor");
                acc += eg.vectors(i, k) * eg.vectors(j, k) / std::sqrt(ev);
            }
            out(i, j) = acc;
        }
    return out;
}

/// Lower-triangular L with L L' = A for symmetric PSD A. Semidefinite
/// directions (pivot within tolerance of zero) get a zero column; genuinely
/// negative pivots raise NotPSDError.
inline Mat cholesky_psd(const Mat& a) {
    const std::size_t n = a.rows();
    if (a.cols() != n) throw DimensionError("cholesky_psd: matrix must be square");
    double scale = 0.0;
    for (std::size_t i = 0; i < n; ++i) scale = std::max(scale, std::fabs(a(i, i)));
    const double tol = 1e-12 * std::max(scale, 1.0);
    Mat l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double diag = a(j, j);
        for (std::size_t k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
        if (diag < -tol) throw NotPSDError("cholesky_psd: negative pivot");
        if (diag <= tol) {
            // semidefinite direction: zero column
            for (std::size_t i = j; i < n; ++i) l(i, j) = 0.0;
            continue;
        }
        const double root = std::sqrt(diag);
        l(j, j) = root;
        for (std::size_t i = j + 1; i < n; ++i) {
            double acc = a(i, j);
            for (std::size_t k = 0; k < j; ++k) acc -= l(i, k) * l(j, k);
            l(i, j) = acc / root;
        }
    }
    return l;
}

}  // namespace unidelta
