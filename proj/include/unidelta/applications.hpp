#pragma once
// Worked applications of the normalized-remainder machinery:
//   * weak-instrument ratio scenarios and their divergence certificate,
//   * moment-inequality statistics phi1/phi2 with the kinked second-order
//     remainder and its limit law,
//   * minimum-distance projection onto a parametric curve, with the implied
//     plug-in map, slope formulas, and a remainder scan over curve catalogs.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "montecarlo.hpp"

namespace unidelta {

// ---------------------------------------------------------------------------
// Weak instruments.
// ---------------------------------------------------------------------------
struct WeakIVScenario {
    std::string label;
    std::function<Vec(long long)> theta_rule;  // n -> (beta, pi, rho, su, sv)

    ParamSeq sequence() const {
        ParamSeq seq;
        seq.family = families::weakiv();
        seq.rule = theta_rule;
        seq.label = label;
        return seq;
    }
};

/// Drifting weak-identification scenario: the first-stage coefficient decays
/// like 1/sqrt(n) while the structural coefficient grows like sqrt(n), so the
/// reduced-form mean stays bounded but the ratio target moves.
inline WeakIVScenario weakiv_drifting(double rho = 0.9, double su = 1.0, double sv = 1.0) {
    WeakIVScenario sc;
    sc.label = "weakiv-drifting";
    sc.theta_rule = [rho, su, sv](long long n) {
        const double root_n = std::sqrt(static_cast<double>(n));
        return Vec{root_n + 0.5, 1.0 / root_n, rho, su, sv};
    };
    return sc;
}

/// Fixed strongly-identified scenario for contrast.
inline WeakIVScenario weakiv_fixed(double beta = 0.5, double pi = 1.0, double rho = 0.9,
                                   double su = 1.0, double sv = 1.0) {
    WeakIVScenario sc;
    sc.label = "weakiv-fixed";
    sc.theta_rule = [=](long long) { return Vec{beta, pi, rho, su, sv}; };
    return sc;
}

/// Divergence certificate for the ratio map at the drifting anchor
/// m_n = (1 + 1/(2 sqrt(n)), 1/sqrt(n)).
inline DivergencePreset iv_delta_certificate(const std::vector<long long>& n_list = {100, 10000,
                                                                                     1000000},
                                             std::size_t grid = 17) {
    return divergence_preset("iv", n_list, grid);
}

// ---------------------------------------------------------------------------
// Moment inequalities. phi1(t) = (max(-t1,0), max(-t2,0)) records the
// violations componentwise; phi2(t) = sum_i max(-t_i,0)^2 aggregates them.
// The naive approximations keep only the first coordinate — the orientation
// convention is an anchor on the kink in coordinate 1 and strictly interior
// in coordinate 2 (the mirrored case is a coordinate swap) — so the
// remainders isolate what the one-sided linearization misses:
//   rem1 = phi1 - phi1_naive = (0, max(-t2, 0)),
//   rem2 = phi2 - phi2_naive = t2^2 1(t2 <= 0).
// ---------------------------------------------------------------------------
struct MineqStats {
    Vec phi1;                  // componentwise violations at t
    double phi2 = 0.0;         // squared aggregate at t
    Vec phi1_naive;            // (max(-t1,0), 0)
    double phi2_naive = 0.0;   // t1^2 1(t1 <= 0)
    Vec rem1;                  // (0, max(-t2,0))
    double rem2 = 0.0;         // t2^2 1(t2 <= 0)
};

inline MineqStats mineq_stats(const Vec& t) {
    if (t.size() != 2) throw DimensionError("mineq_stats: t must be two-dimensional");
    MineqStats s;
    const double v1 = std::max(-t[0], 0.0);
    const double v2 = std::max(-t[1], 0.0);
    s.phi1 = {v1, v2};
    s.phi2 = v1 * v1 + v2 * v2;
    s.phi1_naive = {v1, 0.0};
    s.phi2_naive = v1 * v1;
    s.rem1 = {0.0, v2};
    s.rem2 = v2 * v2;
    return s;
}

/// Distribution of n * rem2 along anchors with the second coordinate drifting
/// toward the kink at rate 1/sqrt(n): m_n = (0, 1/sqrt(n)) and
/// T_n = m_n + W/sqrt(n) with W ~ N(0, I) makes sqrt(n) T_{n,2} = 1 + W_2,
/// so n * rem2 = Z^2 1(Z <= 0) with Z ~ N(1,1) exactly at every n. The study
/// compares those draws to direct draws of the limit by two-sample KS, checks
/// the limit generator against the mean identity E[max(Z,0)] = Phi(1) +
/// phi_pdf(1), and contrasts with a fixed anchor m_2 = 1 where the remainder
/// collapses (P(rem2 != 0) = Phi(-sqrt(n))).
struct MineqLimitRow {
    long long n = 0;
    Vec m_n;
    double ks_to_limit = 0.0;         // two-sample KS( n*rem2 , Z^2 1(Z<=0) )
    double mean_max_z = 0.0;          // mean of max(Z,0) over the limit draws
    double frac_nonzero_drift = 0.0;  // P( rem2 > 0 ) along m_n
    double frac_nonzero_fixed = 0.0;  // P( rem2 > 0 ) at fixed m = (0, 1)
    std::size_t reps = 0;
};

inline std::vector<MineqLimitRow> mineq_limit_study(const std::vector<long long>& n_list,
                                                    std::size_t reps, std::uint64_t seed) {
    if (n_list.empty()) throw EmptyError("mineq_limit_study: empty n list");
    if (reps < 2) throw EmptyError("mineq_limit_study: reps must be at least 2");
    std::vector<MineqLimitRow> rows;
    rows.reserve(n_list.size());
    for (std::size_t ni = 0; ni < n_list.size(); ++ni) {
        const long long n = n_list[ni];
        const double root_n = std::sqrt(static_cast<double>(n));
        MineqLimitRow row;
        row.n = n;
        row.m_n = {0.0, 1.0 / root_n};
        row.reps = reps;
        std::vector<double> scaled(reps), limit(reps), max_z(reps);
        std::vector<std::uint8_t> fixed_nonzero(reps, 0);
        parallel_for(reps, [&](std::size_t r) {
            Rng rng(mix_seed(seed, 0x3E0ULL + ni, r));
            const Vec t = {row.m_n[0] + rng.normal() / root_n,
                           row.m_n[1] + rng.normal() / root_n};
            scaled[r] = static_cast<double>(n) * mineq_stats(t).rem2;
            Rng rng_lim(mix_seed(seed, 0x3F0ULL + ni, r));
            const double z = 1.0 + rng_lim.normal();
            limit[r] = (z <= 0.0) ? z * z : 0.0;
            max_z[r] = std::max(z, 0.0);
            Rng rng_fix(mix_seed(seed, 0x3A0ULL + ni, r));
            const Vec t_fix = {rng_fix.normal() / root_n, 1.0 + rng_fix.normal() / root_n};
            fixed_nonzero[r] = mineq_stats(t_fix).rem2 > 0.0 ? 1 : 0;
        });
        double mean_mz = 0.0;
        std::size_t nz_drift = 0, nz_fixed = 0;
        for (std::size_t r = 0; r < reps; ++r) {
            mean_mz += max_z[r];
            if (scaled[r] > 0.0) ++nz_drift;
            if (fixed_nonzero[r]) ++nz_fixed;
        }
        row.mean_max_z = mean_mz / static_cast<double>(reps);
        row.frac_nonzero_drift = static_cast<double>(nz_drift) / static_cast<double>(reps);
        row.frac_nonzero_fixed = static_cast<double>(nz_fixed) / static_cast<double>(reps);
        row.ks_to_limit = ks_distance(EmpiricalSample::from_column(std::move(scaled)),
                                      EmpiricalSample::from_column(std::move(limit)),
                                      KsOpts{0, seed})
                              .value;
        rows.push_back(std::move(row));
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Minimum distance to a parametric curve. e(x; t) = ||t - m(x)||^2 / 2.
// ---------------------------------------------------------------------------
struct CurvePoint {
    Vec m;    // m(x)
    Vec dm;   // m'(x)
    Vec d2m;  // m''(x)
};

struct MinDistModel {
    std::string name;
    std::function<CurvePoint(double)> curve;
    std::array<double, 2> x_range{-1.0, 1.0};
};

namespace curves {

inline MinDistModel flat() {
    MinDistModel m;
    m.name = "flat";
    m.curve = [](double x) {
        return CurvePoint{{x, 0.0}, {1.0, 0.0}, {0.0, 0.0}};
    };
    m.x_range = {-2.0, 2.0};
    return m;
}

inline MinDistModel parabola() {
    MinDistModel m;
    m.name = "parabola";
    m.curve = [](double x) {
        return CurvePoint{{x, x * x}, {1.0, 2.0 * x}, {0.0, 2.0}};
    };
    m.x_range = {-2.0, 2.0};
    return m;
}

inline MinDistModel sharp_parabola() {
    MinDistModel m;
    m.name = "sharp-parabola";
    m.curve = [](double x) {
        return CurvePoint{{x, 10.0 * x * x}, {1.0, 20.0 * x}, {0.0, 20.0}};
    };
    m.x_range = {-1.0, 1.0};
    return m;
}

inline MinDistModel circle() {
    MinDistModel m;
    m.name = "circle";
    m.curve = [](double x) {
        return CurvePoint{{std::cos(x), std::sin(x)},
                          {-std::sin(x), std::cos(x)},
                          {-std::cos(x), -std::sin(x)}};
    };
    m.x_range = {-3.0, 3.0};
    return m;
}

inline MinDistModel by_name(const std::string& name) {
    if (name == "flat") return flat();
    if (name == "parabola") return parabola();
    if (name == "sharp-parabola") return sharp_parabola();
    if (name == "circle") return circle();
    throw UnknownBuiltin("unknown curve model '" + name + "'");
}

}  // namespace curves

struct MinDistResult {
    double x_hat = 0.0;
    double objective = 0.0;  // e(x_hat; t)
    bool at_boundary = false;
    int newton_steps = 0;
};

namespace mindist_detail {

inline double objective(const MinDistModel& model, double x, const Vec& t) {
    const CurvePoint c = model.curve(x);
    const Vec d = sub(t, c.m);
    return 0.5 * dot(d, d);
}

/// de/dx = -(t - m(x)) . m'(x);  d2e/dx2 = ||m'||^2 - (t - m) . m''.
inline void derivatives(const MinDistModel& model, double x, const Vec& t, double& g, double& h) {
    const CurvePoint c = model.curve(x);
    const Vec d = sub(t, c.m);
    g = -dot(d, c.dm);
    h = dot(c.dm, c.dm) - dot(d, c.d2m);
}

inline double golden_section(const MinDistModel& model, const Vec& t, double lo, double hi,
                             double tol) {
    static const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double c = b - invphi * (b - a);
    double d = a + invphi * (b - a);
    double fc = objective(model, c, t);
    double fd = objective(model, d, t);
    while (b - a > tol) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = objective(model, c, t);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = objective(model, d, t);
        }
    }
    return 0.5 * (a + b);
}

}  // namespace mindist_detail

/// Projection argmin over x_range: multi-start golden-section refinement to
/// 1e-10 followed by up to five guarded Newton polish steps. `starts` is the
/// number of coarse scan cells used to bracket local minima (at least 3).
/// Ties resolve to the lower objective, then to the smaller x. Throws
/// OptimFail if the objective is non-finite everywhere it is probed.
inline MinDistResult mindist_estimate(const MinDistModel& model, const Vec& t, int starts = 64) {
    const double lo = model.x_range[0], hi = model.x_range[1];
    if (!(lo < hi)) throw ConfigError("/x_range", "mindist requires lo < hi");
    if (starts < 3) throw ConfigError("/starts", "mindist requires at least 3 starts");
    if (!all_finite(t)) throw OptimFail("mindist: non-finite observation");

    // Bracket candidate minima on a coarse scan of the objective.
    const int scan = starts;
    std::vector<double> fx(scan + 1), xs(scan + 1);
    bool any_finite = false;
    for (int i = 0; i <= scan; ++i) {
        xs[i] = lo + (hi - lo) * static_cast<double>(i) / scan;
        fx[i] = mindist_detail::objective(model, xs[i], t);
        if (std::isfinite(fx[i])) any_finite = true;
    }
    if (!any_finite) throw OptimFail("mindist: objective non-finite on the whole range");

    std::vector<std::pair<double, double>> brackets;  // local-minimum cells
    for (int i = 0; i <= scan; ++i) {
        const bool left_ok = (i == 0) || !(fx[i - 1] < fx[i]);
        const bool right_ok = (i == scan) || !(fx[i + 1] < fx[i]);
        if (std::isfinite(fx[i]) && left_ok && right_ok)
            brackets.emplace_back(xs[std::max(0, i - 1)], xs[std::min(scan, i + 1)]);
    }
    if (brackets.empty()) brackets.emplace_back(lo, hi);

    MinDistResult best;
    best.objective = std::numeric_limits<double>::infinity();
    for (const auto& [a, b] : brackets) {
        double x = mindist_detail::golden_section(model, t, a, b, 1e-10);
        int steps = 0;
        for (; steps < 5; ++steps) {
            double g, h;
            mindist_detail::derivatives(model, x, t, g, h);
            if (!(std::fabs(h) > 1e-10)) break;  // will not trust Newton here
            const double step = -g / h;
            const double x_new = std::clamp(x + step, lo, hi);
            if (!(mindist_detail::objective(model, x_new, t) <=
                  mindist_detail::objective(model, x, t)))
                break;  // guard: reject non-descending steps
            if (std::fabs(x_new - x) < 1e-14) {
                x = x_new;
                break;
            }
            x = x_new;
        }
        const double f = mindist_detail::objective(model, x, t);
        if (!std::isfinite(f)) continue;
        if (f < best.objective - 1e-15 ||
            (std::fabs(f - best.objective) <= 1e-15 && x < best.x_hat)) {
            best.x_hat = x;
            best.objective = f;
            best.newton_steps = steps;
        }
    }
    if (!std::isfinite(best.objective)) throw OptimFail("mindist: no finite minimum found");
    const double edge_tol = 1e-9 * std::max(1.0, hi - lo);
    best.at_boundary = (best.x_hat - lo <= edge_tol) || (hi - best.x_hat <= edge_tol);
    return best;
}

/// Derivative of the projection x_hat(t) with respect to t at an interior
/// optimum: dx/dt = m'(x) / ( ||m'||^2 - (t - m) . m'' ). Throws
/// SingularHessian when the curvature term vanishes (|d2e/dx2| < 1e-10).
inline Vec mindist_slope(const MinDistModel& model, double x_hat, const Vec& t) {
    const CurvePoint c = model.curve(x_hat);
    const Vec d = sub(t, c.m);
    const double h = dot(c.dm, c.dm) - dot(d, c.d2m);
    if (std::fabs(h) < 1e-10) throw SingularHessian("mindist: flat objective at the optimum");
    Vec out(c.dm.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = c.dm[i] / h;
    return out;
}

/// Same derivative when the observation lies on the curve: dx/dt reduces to
/// m'(x) / ||m'(x)||^2.
inline Vec mindist_slope_on_curve(const MinDistModel& model, double x_hat) {
    const CurvePoint c = model.curve(x_hat);
    const double h = dot(c.dm, c.dm);
    if (h < 1e-10) throw SingularHessian("mindist: stationary curve point");
    Vec out(c.dm.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = c.dm[i] / h;
    return out;
}

/// Plug-in map t -> x_hat(t) wrapped as a PhiMap (scalar output). Points where
/// the optimizer fails or the objective Hessian is singular are reported as
/// outside/boundary so scans can mask them.
inline PhiMap make_mindist_phi(const MinDistModel& model) {
    PhiMap phi;
    phi.name = "mindist-" + model.name;
    phi.d_in = 2;
    phi.d_out = 1;
    phi.eval = [model](const Vec& t) { return Vec{mindist_estimate(model, t).x_hat}; };
    phi.domain_pred = [model](const Vec& t) {
        if (!all_finite(t)) return Region::outside;
        try {
            const MinDistResult r = mindist_estimate(model, t);
            if (r.at_boundary) return Region::boundary;
            double g, h;
            mindist_detail::derivatives(model, r.x_hat, t, g, h);
            if (std::fabs(h) < 1e-10) return Region::boundary;
        } catch (const OptimFail&) {
            return Region::outside;
        } catch (const SingularHessian&) {
            return Region::boundary;
        }
        return Region::inside;
    };
    return phi;
}

/// Remainder scan for the projection map on a grid of observations t against
/// a grid of curve anchors m(x_j): anchors evaluate phi exactly to x_j, the
/// row normalizer is ||dx/dt|| at the anchor, and cells where estimation or
/// curvature fails are masked rather than fatal.
struct MinDistScan {
    MinDistModel model;
    GridSpec t_grid;              // observations in the plane
    std::vector<double> anchors;  // curve parameters x_j
    RemainderField field;
};

inline MinDistScan mindist_delta_scan(const MinDistModel& model, const GridAxis& anchor_axis,
                                      const GridSpec& t_grid) {
    if (t_grid.dim() != 2) throw DimensionError("mindist_delta_scan: t grid must be planar");
    anchor_axis.validate("mindist_delta_scan/m_grid");
    t_grid.validate("mindist_delta_scan/t_grid");
    const double lo = model.x_range[0], hi = model.x_range[1];
    if (anchor_axis.lo < lo || anchor_axis.hi > hi)
        throw ConfigError("/m_grid", "anchor parameters must lie inside the model x range");
    MinDistScan scan;
    scan.model = model;
    scan.t_grid = t_grid;
    for (int j = 0; j < anchor_axis.count; ++j) scan.anchors.push_back(anchor_axis.point(j));

    RemainderField field;
    field.phi_name = "mindist-" + model.name;
    field.t_grid = t_grid;
    field.m_grid = GridSpec{{anchor_axis}};
    field.t_points = t_grid.points();
    for (double x : scan.anchors) field.m_points.push_back({x});
    const std::size_t nt = field.t_points.size(), nm = scan.anchors.size();
    field.values.assign(nt * nm, std::numeric_limits<double>::quiet_NaN());
    field.mask.assign(nt * nm, CellMask::valid);

    parallel_for(nt, [&](std::size_t it) {
        const Vec& t = field.t_points[it];
        for (std::size_t im = 0; im < nm; ++im) {
            const std::size_t cell = it * nm + im;
            const double x_anchor = scan.anchors[im];
            const CurvePoint c = scan.model.curve(x_anchor);
            const Vec diff = sub(t, c.m);
            const double dist = norm2(diff);
            if (dist < kDegenerateThreshold) {
                field.mask[cell] = CellMask::degenerate;
                continue;
            }
            try {
                const MinDistResult r = mindist_estimate(scan.model, t);
                if (r.at_boundary) {
                    field.mask[cell] = CellMask::outside_domain;
                    continue;
                }
                const Vec slope = mindist_slope_on_curve(scan.model, x_anchor);
                const double slope_norm = norm2(slope);
                if (slope_norm < 1e-300) {
                    field.mask[cell] = CellMask::degenerate;
                    continue;
                }
                // linearization of x_hat around the on-curve anchor
                const double lin = x_anchor + dot(slope, diff);
                field.values[cell] = std::fabs(r.x_hat - lin) / (slope_norm * dist);
            } catch (const OptimFail&) {
                field.mask[cell] = CellMask::outside_domain;
            } catch (const SingularHessian&) {
                field.mask[cell] = CellMask::degenerate;
            }
        }
    });
    scan.field = std::move(field);
    return scan;
}

}  // namespace unidelta
