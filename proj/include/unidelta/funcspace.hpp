#pragma once
// The phi-map abstraction: a map phi: R^{d_in} -> R^{d_out} with a domain
// trichotomy, an optional analytic Jacobian D(m), and the row normalizer
// E(m) = diag(1/||D_k(m)||). Built-in catalog:
//   reciprocal, square, absval, sqrt, iv_ratio, mineq_phi1, mineq_phi2
// (plus "mindist", which is parameterized by a model curve and constructed in
// applications.hpp).

#include <functional>
#include <string>
#include <utility>

#include "common.hpp"

namespace unidelta {

/// Domain classification. `boundary` marks thin strips around analytic
/// singularities/kinks (width 1e-8) so grid scanners can skip them; `outside`
/// is genuinely out of domain.
enum class Region { inside, boundary, outside };

inline const char* region_name(Region r) {
    switch (r) {
        case Region::inside: return "inside";
        case Region::boundary: return "boundary";
        default: return "outside";
    }
}

inline constexpr double kBoundaryStrip = 1e-8;

struct PhiMap {
    std::string name;
    int d_in = 1;
    int d_out = 1;
    std::function<Vec(const Vec&)> eval;
    std::function<Mat(const Vec&)> jacobian_analytic;  // empty => finite differences
    std::function<Region(const Vec&)> domain_pred;

    bool has_analytic_jacobian() const { return static_cast<bool>(jacobian_analytic); }
};

/// D plus its row normalization: E = diag(1/||D_k||), ED has unit rows.
struct NormalizedJacobian {
    Mat D;
    Vec E_diag;  // E_kk = 1 / ||D_k||
    Mat ED;
};

/// Step rule for central differences: h_j = scale * max(1, |m_j|). The default
/// scale cbrt(machine eps) is the optimal-order choice for O(h^2) differencing.
struct StepRule {
    double scale = kCbrtEps;
    double step(double mj) const { return scale * std::max(1.0, std::fabs(mj)); }
};

inline void check_arity(const PhiMap& phi, const Vec& t, const char* what) {
    if (static_cast<int>(t.size()) != phi.d_in)
        throw DimensionError(std::string(what) + ": expected " + std::to_string(phi.d_in) +
                             " coordinates for " + phi.name + ", got " + std::to_string(t.size()));
}

/// Evaluates phi at an inside point; anything else is a DomainError.
inline Vec eval_phi(const PhiMap& phi, const Vec& t) {
    check_arity(phi, t, "eval_phi");
    if (phi.domain_pred(t) != Region::inside)
        throw DomainError("eval_phi: point not inside domain of " + phi.name);
    Vec out = phi.eval(t);
    if (!all_finite(out))
        throw DomainError("eval_phi: non-finite value inside declared domain of " + phi.name);
    return out;
}

/// Jacobian at m: analytic when declared, else central finite differences with
/// per-coordinate steps. Every stencil point must stay inside the domain.
inline Mat jacobian(const PhiMap& phi, const Vec& m, const StepRule& rule = {}) {
    check_arity(phi, m, "jacobian");
    if (phi.domain_pred(m) != Region::inside)
        throw DomainError("jacobian: point not inside domain of " + phi.name);
    if (phi.has_analytic_jacobian()) return phi.jacobian_analytic(m);

    Mat jac(static_cast<std::size_t>(phi.d_out), static_cast<std::size_t>(phi.d_in));
    Vec lo = m, hi = m;
    for (int j = 0; j < phi.d_in; ++j) {
        const double h = rule.step(m[j]);
        hi[j] = m[j] + h;
        lo[j] = m[j] - h;
        if (phi.domain_pred(hi) != Region::inside || phi.domain_pred(lo) != Region::inside)
            throw DomainError("jacobian: finite-difference stencil leaves domain of " + phi.name);
        const Vec fp = phi.eval(hi);
        const Vec fm = phi.eval(lo);
        const double denom = hi[j] - lo[j];  // 2h up to rounding of the abscissae
        for (int k = 0; k < phi.d_out; ++k)
            jac(static_cast<std::size_t>(k), static_cast<std::size_t>(j)) = (fp[k] - fm[k]) / denom;
        hi[j] = m[j];
        lo[j] = m[j];
    }
    return jac;
}

/// Row-normalizes D. A row norm below `floor` means D is not of full row rank
/// for our purposes and raises RankError.
inline NormalizedJacobian normalizer(const Mat& d, double floor = 1e-300) {
    NormalizedJacobian out;
    out.D = d;
    out.E_diag.resize(d.rows());
    out.ED = d;
    for (std::size_t k = 0; k < d.rows(); ++k) {
        const double nrm = d.row_norm(k);
        if (!(nrm >= floor))
            throw RankError("normalizer: row " + std::to_string(k) + " has norm below floor");
        out.E_diag[k] = 1.0 / nrm;
        for (std::size_t j = 0; j < d.cols(); ++j) out.ED(k, j) = d(k, j) * out.E_diag[k];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Built-in catalog.
// ---------------------------------------------------------------------------
namespace detail {

inline Region strip_only(double x) {
    return std::fabs(x) <= kBoundaryStrip ? Region::boundary : Region::inside;
}

inline PhiMap make_reciprocal() {
    PhiMap p;
    p.name = "reciprocal";
    p.d_in = p.d_out = 1;
    p.eval = [](const Vec& t) { return Vec{1.0 / t[0]}; };
    p.jacobian_analytic = [](const Vec& m) {
        Mat j(1, 1);
        j(0, 0) = -1.0 / (m[0] * m[0]);
        return j;
    };
    p.domain_pred = [](const Vec& t) { return strip_only(t[0]); };
    return p;
}

inline PhiMap make_square() {
    PhiMap p;
    p.name = "square";
    p.d_in = p.d_out = 1;
    p.eval = [](const Vec& t) { return Vec{t[0] * t[0]}; };
    p.jacobian_analytic = [](const Vec& m) {
        Mat j(1, 1);
        j(0, 0) = 2.0 * m[0];
        return j;
    };
    p.domain_pred = [](const Vec&) { return Region::inside; };
    return p;
}

inline PhiMap make_absval() {
    PhiMap p;
    p.name = "absval";
    p.d_in = p.d_out = 1;
    p.eval = [](const Vec& t) { return Vec{std::fabs(t[0])}; };
    p.jacobian_analytic = [](const Vec& m) {
        Mat j(1, 1);
        j(0, 0) = m[0] < 0.0 ? -1.0 : 1.0;
        return j;
    };
    // kink at 0: derivative is two-sided only away from the strip
    p.domain_pred = [](const Vec& t) { return strip_only(t[0]); };
    return p;
}

inline PhiMap make_sqrt() {
    PhiMap p;
    p.name = "sqrt";
    p.d_in = p.d_out = 1;
    p.eval = [](const Vec& t) { return Vec{std::sqrt(t[0])}; };
    p.jacobian_analytic = [](const Vec& m) {
        Mat j(1, 1);
        j(0, 0) = 0.5 / std::sqrt(m[0]);
        return j;
    };
    p.domain_pred = [](const Vec& t) {
        if (t[0] < -kBoundaryStrip) return Region::outside;
        if (t[0] <= kBoundaryStrip) return Region::boundary;
        return Region::inside;
    };
    return p;
}

inline PhiMap make_iv_ratio() {
    PhiMap p;
    p.name = "iv_ratio";
    p.d_in = 2;
    p.d_out = 1;
    p.eval = [](const Vec& t) { return Vec{t[0] / t[1]}; };
    p.jacobian_analytic = [](const Vec& m) {
        Mat j(1, 2);
        j(0, 0) = 1.0 / m[1];
        j(0, 1) = -m[0] / (m[1] * m[1]);
        return j;
    };
    p.domain_pred = [](const Vec& t) { return strip_only(t[1]); };
    return p;
}

inline Region mineq_domain(const Vec& t) {
    if (std::fabs(t[0]) <= kBoundaryStrip || std::fabs(t[1]) <= kBoundaryStrip)
        return Region::boundary;
    return Region::inside;
}

inline PhiMap make_mineq_phi1() {
    PhiMap p;
    p.name = "mineq_phi1";
    p.d_in = 2;
    p.d_out = 2;
    p.eval = [](const Vec& t) {
        return Vec{std::max(-t[0], 0.0), std::max(-t[1], 0.0)};
    };
    p.jacobian_analytic = [](const Vec& m) {
        Mat j(2, 2);
        j(0, 0) = m[0] < 0.0 ? -1.0 : 0.0;
        j(1, 1) = m[1] < 0.0 ? -1.0 : 0.0;
        return j;
    };
    p.domain_pred = mineq_domain;
    return p;
}

inline PhiMap make_mineq_phi2() {
    PhiMap p;
    p.name = "mineq_phi2";
    p.d_in = 2;
    p.d_out = 1;
    p.eval = [](const Vec& t) {
        const double a = t[0] <= 0.0 ? t[0] * t[0] : 0.0;
        const double b = t[1] <= 0.0 ? t[1] * t[1] : 0.0;
        return Vec{a + b};
    };
    p.jacobian_analytic = [](const Vec& m) {
        Mat j(1, 2);
        j(0, 0) = m[0] <= 0.0 ? 2.0 * m[0] : 0.0;
        j(0, 1) = m[1] <= 0.0 ? 2.0 * m[1] : 0.0;
        return j;
    };
    p.domain_pred = mineq_domain;
    return p;
}

}  // namespace detail

/// Fixed catalog lookup; throws UnknownBuiltin for anything else. "mindist"
/// requires a model curve and is built via applications.hpp.
inline const PhiMap& builtin(const std::string& name) {
    static const PhiMap reciprocal = detail::make_reciprocal();
    static const PhiMap square = detail::make_square();
    static const PhiMap absval = detail::make_absval();
    static const PhiMap sqrt_map = detail::make_sqrt();
    static const PhiMap iv_ratio = detail::make_iv_ratio();
    static const PhiMap mineq_phi1 = detail::make_mineq_phi1();
    static const PhiMap mineq_phi2 = detail::make_mineq_phi2();
    if (name == "reciprocal") return reciprocal;
    if (name == "square") return square;
    if (name == "absval") return absval;
    if (name == "sqrt") return sqrt_map;
    if (name == "iv_ratio") return iv_ratio;
    if (name == "mineq_phi1") return mineq_phi1;
    if (name == "mineq_phi2") return mineq_phi2;
    throw UnknownBuiltin("unknown builtin phi: " + name);
}

inline bool is_builtin(const std::string& name) {
    try {
        builtin(name);
        return true;
    } catch (const UnknownBuiltin&) {
        return false;
    }
}

}  // namespace unidelta
