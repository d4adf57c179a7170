#pragma once
// The core diagnostic: the normalized first-order Taylor remainder
//
//     Delta(t, m) = || E(m) * (phi(t) - phi(m) - D(m)*(t - m)) || / ||t - m||,
//
// tabulated over grids, bounded from below via sampling (the envelope), and
// checked against divergence certificates Delta(m_n + s/r_n, m_n) >= eps'_n
// on lattices over a fixed box A.

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "funcspace.hpp"
#include "rng.hpp"
#include "threads.hpp"

namespace unidelta {

// ---------------------------------------------------------------------------
// Grids.
// ---------------------------------------------------------------------------
struct GridAxis {
    double lo = 0.0, hi = 1.0;
    int count = 2;
    enum class Spacing { linear, logarithmic } spacing = Spacing::linear;

    void validate(const std::string& what) const {
        if (!(lo < hi)) throw ConfigError(what, "grid requires lo < hi");
        if (count < 2) throw ConfigError(what, "grid requires count >= 2");
        if (spacing == Spacing::logarithmic && !(lo > 0.0))
            throw ConfigError(what, "log spacing requires lo > 0");
    }

    double point(int k) const {
        const double f = static_cast<double>(k) / static_cast<double>(count - 1);
        if (spacing == Spacing::logarithmic)
            return std::exp(std::log(lo) + f * (std::log(hi) - std::log(lo)));
        return lo + f * (hi - lo);
    }
};

struct GridSpec {
    std::vector<GridAxis> axes;

    int dim() const { return static_cast<int>(axes.size()); }

    std::size_t size() const {
        std::size_t n = 1;
        for (const auto& a : axes) n *= static_cast<std::size_t>(a.count);
        return n;
    }

    void validate(const std::string& what) const {
        if (axes.empty()) throw ConfigError(what, "grid needs at least one axis");
        for (std::size_t i = 0; i < axes.size(); ++i)
            axes[i].validate(what + "/axis" + std::to_string(i));
    }

    /// Flattened product grid, row-major (axis 0 slowest).
    std::vector<Vec> points() const {
        std::vector<Vec> out;
        out.reserve(size());
        Vec cur(axes.size());
        std::vector<int> idx(axes.size(), 0);
        for (;;) {
            for (std::size_t a = 0; a < axes.size(); ++a) cur[a] = axes[a].point(idx[a]);
            out.push_back(cur);
            std::size_t a = axes.size();
            while (a > 0) {
                --a;
                if (++idx[a] < axes[a].count) break;
                idx[a] = 0;
                if (a == 0) return out;
            }
        }
    }
};

enum class CellMask : std::uint8_t { valid = 0, outside_domain = 1, degenerate = 2 };

inline const char* mask_name(CellMask m) {
    switch (m) {
        case CellMask::valid: return "valid";
        case CellMask::outside_domain: return "outside_domain";
        default: return "degenerate";
    }
}

/// Delta(t, m) tabulated over explicit point lists (t-major layout).
struct RemainderField {
    std::string phi_name;
    GridSpec t_grid, m_grid;
    std::vector<Vec> t_points, m_points;
    std::vector<double> values;    // size t_points.size() * m_points.size()
    std::vector<CellMask> mask;

    std::size_t index(std::size_t it, std::size_t im) const { return it * m_points.size() + im; }
    double value(std::size_t it, std::size_t im) const { return values[index(it, im)]; }
    CellMask cell_mask(std::size_t it, std::size_t im) const { return mask[index(it, im)]; }

    std::size_t valid_count() const {
        std::size_t n = 0;
        for (CellMask m : mask)
            if (m == CellMask::valid) ++n;
        return n;
    }

    double max_valid() const {
        double mx = 0.0;
        for (std::size_t i = 0; i < values.size(); ++i)
            if (mask[i] == CellMask::valid && values[i] > mx) mx = values[i];
        return mx;
    }
};

// ---------------------------------------------------------------------------
// Delta evaluation.
// ---------------------------------------------------------------------------
inline constexpr double kDegenerateThreshold = 1e-12;

inline double delta(const PhiMap& phi, const Vec& t, const Vec& m, const StepRule& rule = {}) {
    check_arity(phi, t, "delta(t)");
    check_arity(phi, m, "delta(m)");
    if (phi.domain_pred(t) != Region::inside)
        throw DomainError("delta: t not inside domain of " + phi.name);
    if (phi.domain_pred(m) != Region::inside)
        throw DomainError("delta: m not inside domain of " + phi.name);
    const Vec diff = sub(t, m);
    const double dist = norm2(diff);
    if (dist < kDegenerateThreshold)
        throw DegenerateError("delta: ||t - m|| below degeneracy threshold");
    const Mat d = jacobian(phi, m, rule);
    const NormalizedJacobian nj = normalizer(d);
    const Vec ft = phi.eval(t);
    const Vec fm = phi.eval(m);
    const Vec lin = d.mul(diff);
    double acc = 0.0;
    for (int k = 0; k < phi.d_out; ++k) {
        const double rk = (ft[k] - fm[k] - lin[k]) * nj.E_diag[k];
        acc += rk * rk;
    }
    return std::sqrt(acc) / dist;
}

/// Closed forms for the five scalar/ratio built-ins, exactly as derived:
///   reciprocal  |(t-m)/t|
///   square      |(t-m)/(2m)|
///   absval      1(t*m <= 0) * 2|t| / |t-m|
///   sqrt        |(sqrt(m)-sqrt(t)) / (sqrt(m)+sqrt(t))|
///   iv_ratio    (1/(||m|| ||t-m||)) * |(t2-m2)/t2| * |m2(t1-m1) - m1(t2-m2)|
inline double delta_analytic(const std::string& name, const Vec& t, const Vec& m) {
    const PhiMap& phi = builtin(name);  // UnknownBuiltin for unknown names
    check_arity(phi, t, "delta_analytic(t)");
    check_arity(phi, m, "delta_analytic(m)");
    if (phi.domain_pred(t) != Region::inside)
        throw DomainError("delta_analytic: t not inside domain of " + name);
    if (phi.domain_pred(m) != Region::inside)
        throw DomainError("delta_analytic: m not inside domain of " + name);
    const Vec diff = sub(t, m);
    const double dist = norm2(diff);
    if (dist < kDegenerateThreshold)
        throw DegenerateError("delta_analytic: ||t - m|| below degeneracy threshold");

    if (name == "reciprocal") return std::fabs(diff[0] / t[0]);
    if (name == "square") {
        if (m[0] == 0.0) throw RankError("delta_analytic: square closed form undefined at m = 0");
        return std::fabs(diff[0] / (2.0 * m[0]));
    }
    if (name == "absval") return t[0] * m[0] <= 0.0 ? 2.0 * std::fabs(t[0]) / std::fabs(diff[0]) : 0.0;
    if (name == "sqrt") {
        const double st = std::sqrt(t[0]), sm = std::sqrt(m[0]);
        return std::fabs((sm - st) / (sm + st));
    }
    if (name == "iv_ratio") {
        const double cross = m[1] * diff[0] - m[0] * diff[1];
        return std::fabs(diff[1] / t[1]) * std::fabs(cross) / (norm2(m) * dist);
    }
    throw UnknownBuiltin("delta_analytic: no closed form for builtin " + name);
}

// ---------------------------------------------------------------------------
// Grid scan. Evaluation failures become mask entries, never exceptions.
// ---------------------------------------------------------------------------
inline RemainderField scan(const PhiMap& phi, const GridSpec& t_grid, const GridSpec& m_grid) {
    t_grid.validate("t_grid");
    m_grid.validate("m_grid");
    if (t_grid.dim() != phi.d_in || m_grid.dim() != phi.d_in)
        throw DimensionError("scan: grid dimension must equal phi.d_in");
    RemainderField field;
    field.phi_name = phi.name;
    field.t_grid = t_grid;
    field.m_grid = m_grid;
    field.t_points = t_grid.points();
    field.m_points = m_grid.points();
    const std::size_t nt = field.t_points.size(), nm = field.m_points.size();
    field.values.assign(nt * nm, 0.0);
    field.mask.assign(nt * nm, CellMask::valid);

    std::vector<Region> t_region(nt), m_region(nm);
    for (std::size_t i = 0; i < nt; ++i) t_region[i] = phi.domain_pred(field.t_points[i]);
    for (std::size_t j = 0; j < nm; ++j) m_region[j] = phi.domain_pred(field.m_points[j]);

    parallel_for(nt, [&](std::size_t it) {
        for (std::size_t im = 0; im < nm; ++im) {
            const std::size_t idx = it * nm + im;
            if (t_region[it] != Region::inside || m_region[im] != Region::inside) {
                field.mask[idx] = CellMask::outside_domain;
                continue;
            }
            try {
                field.values[idx] = delta(phi, field.t_points[it], field.m_points[im]);
            } catch (const DomainError&) {
                field.mask[idx] = CellMask::outside_domain;
            } catch (const DegenerateError&) {
                field.mask[idx] = CellMask::degenerate;
            } catch (const RankError&) {
                field.mask[idx] = CellMask::degenerate;
            }
        }
    });
    return field;
}

// ---------------------------------------------------------------------------
// Envelope estimate: delta_hat(eps) = max Delta(t, m) over sampled pairs with
// ||t - m|| <= eps, m in a compact box. A common (m, direction, radius) pool
// serves every eps, so the reported curve is monotone in eps by construction;
// it is a lower bound on the true sup (pool sizes and seed recorded).
// ---------------------------------------------------------------------------
struct EnvelopePoint {
    double eps = 0.0;
    double delta_hat = 0.0;
    std::size_t pairs_used = 0;
};

namespace detail {

/// Halton low-discrepancy sequence, one prime base per dimension.
inline double halton(std::size_t index, int base) {
    double f = 1.0, r = 0.0;
    std::size_t i = index + 1;
    while (i > 0) {
        f /= base;
        r += f * static_cast<double>(i % static_cast<std::size_t>(base));
        i /= static_cast<std::size_t>(base);
    }
    return r;
}

inline Vec sphere_direction(Rng& rng, int d) {
    Vec u(static_cast<std::size_t>(d));
    for (;;) {
        for (auto& x : u) x = rng.normal();
        const double n = norm2(u);
        if (n > 1e-12) {
            for (auto& x : u) x /= n;
            return u;
        }
    }
}

}  // namespace detail

inline std::vector<EnvelopePoint> envelope(const PhiMap& phi,
                                           const std::vector<std::array<double, 2>>& box,
                                           const std::vector<double>& eps_list,
                                           int samples_per_eps, std::uint64_t seed) {
    if (static_cast<int>(box.size()) != phi.d_in)
        throw DimensionError("envelope: box dimension must equal phi.d_in");
    if (eps_list.empty()) throw EmptyError("envelope: empty eps list");
    for (std::size_t i = 0; i + 1 < eps_list.size(); ++i)
        if (!(eps_list[i] > eps_list[i + 1]))
            throw Error("envelope: eps_list must be strictly decreasing");
    for (double e : eps_list)
        if (!(e > 0.0)) throw Error("envelope: eps values must be positive");
    if (samples_per_eps < 1) throw Error("envelope: samples_per_eps must be >= 1");

    const int d = phi.d_in;
    static const int primes[] = {2, 3, 5, 7, 11, 13};

    struct Probe {
        Vec m;
        Vec dir;
        double r;
    };
    std::vector<Probe> pool;
    Rng rng(mix_seed(seed, 0xE57E57ULL));

    auto push_probe = [&](const Vec& m, const Vec& dir, double r) {
        if (r < 10.0 * kDegenerateThreshold) return;
        pool.push_back(Probe{m, dir, r});
    };

    // corners of the box (2^d of them), probed with axis directions and dyadic
    // radii down from each eps: deterministic coverage of the extreme pairs
    std::vector<Vec> corners;
    {
        const std::size_t n_corners = static_cast<std::size_t>(1) << d;
        for (std::size_t c = 0; c < n_corners; ++c) {
            Vec m(static_cast<std::size_t>(d));
            for (int a = 0; a < d; ++a) m[a] = box[a][(c >> a) & 1u];
            corners.push_back(m);
        }
    }
    for (double eps : eps_list)
        for (const Vec& corner : corners)
            for (int j = 0; j <= 20; ++j) {
                const double r = eps * std::ldexp(1.0, -j);
                for (int a = 0; a < d; ++a) {
                    Vec dir(static_cast<std::size_t>(d), 0.0);
                    dir[a] = 1.0;
                    push_probe(corner, dir, r);
                    dir[a] = -1.0;
                    push_probe(corner, dir, r);
                }
            }

    // seeded bulk: low-discrepancy m, random direction, radius mixing exact
    // eps, dyadic fractions and uniform draws
    std::size_t halton_index = 0;
    for (std::size_t k = 0; k < eps_list.size(); ++k) {
        const double eps = eps_list[k];
        for (int s = 0; s < samples_per_eps; ++s) {
            Vec m(static_cast<std::size_t>(d));
            for (int a = 0; a < d; ++a)
                m[a] = box[a][0] + (box[a][1] - box[a][0]) * detail::halton(halton_index, primes[a]);
            ++halton_index;
            Vec dir;
            if (d == 1)
                dir = Vec{(s & 1) == 0 ? 1.0 : -1.0};
            else
                dir = detail::sphere_direction(rng, d);
            double r;
            if (s % 8 < 2)
                r = eps;  // exact radius, hits the ball boundary
            else if (s % 8 < 4)
                r = eps * std::ldexp(1.0, -(s % 20 + 1));
            else
                r = eps * rng.uniform01_open_left();
            push_probe(m, dir, r);
        }
    }

    // every m in the pool must be an interior point of the domain: the box is
    // required to sit inside the domain
    for (const Probe& p : pool)
        if (phi.domain_pred(p.m) != Region::inside)
            throw DomainError("envelope: box exits the domain of " + phi.name);

    std::vector<double> deltas(pool.size(), -1.0);  // -1 marks invalid pairs
    parallel_for(pool.size(), [&](std::size_t i) {
        Vec t = pool[i].m;
        for (int a = 0; a < d; ++a) t[a] += pool[i].r * pool[i].dir[a];
        if (phi.domain_pred(t) != Region::inside) return;
        try {
            deltas[i] = delta(phi, t, pool[i].m);
        } catch (const Error&) {
            // skipped pair; the envelope is a lower bound over valid pairs
        }
    });

    std::vector<EnvelopePoint> out;
    out.reserve(eps_list.size());
    for (double eps : eps_list) {
        EnvelopePoint pt;
        pt.eps = eps;
        const double limit = eps * (1.0 + 1e-12);
        for (std::size_t i = 0; i < pool.size(); ++i) {
            if (pool[i].r > limit || deltas[i] < 0.0) continue;
            ++pt.pairs_used;
            if (deltas[i] > pt.delta_hat) pt.delta_hat = deltas[i];
        }
        out.push_back(pt);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Divergence certificates: check Delta(m_n + s/r_n, m_n) >= eps'_n for every
// lattice point s of a box A bounded away from the origin.
// ---------------------------------------------------------------------------
struct DivergenceCertificate {
    std::string phi_name;
    std::function<double(long long)> r_rule;
    std::function<double(long long)> eps_rule;
    std::function<Vec(long long)> m_rule;
    std::vector<std::array<double, 2>> set_A;  // open box, per axis
    std::vector<long long> n_list;
    int grid_per_axis = 17;

    static DivergenceCertificate make(std::string phi_name,
                                      std::function<double(long long)> r_rule,
                                      std::function<double(long long)> eps_rule,
                                      std::function<Vec(long long)> m_rule,
                                      std::vector<std::array<double, 2>> set_A,
                                      std::vector<long long> n_list, int grid_per_axis = 17) {
        DivergenceCertificate c;
        c.phi_name = std::move(phi_name);
        c.r_rule = std::move(r_rule);
        c.eps_rule = std::move(eps_rule);
        c.m_rule = std::move(m_rule);
        c.set_A = std::move(set_A);
        c.n_list = std::move(n_list);
        c.grid_per_axis = grid_per_axis;
        c.validate();
        return c;
    }

    void validate() const {
        if (set_A.empty()) throw Error("certificate: set A must have at least one axis");
        bool origin_excluded = false;
        for (const auto& ax : set_A) {
            if (!(ax[0] < ax[1])) throw Error("certificate: set A axis needs lo < hi");
            if (ax[0] > 0.0 || ax[1] < 0.0) origin_excluded = true;
        }
        if (!origin_excluded)
            throw Error("certificate: closure of A must exclude the origin");
        if (n_list.empty()) throw Error("certificate: empty n list");
        for (std::size_t i = 0; i + 1 < n_list.size(); ++i)
            if (!(n_list[i] < n_list[i + 1]))
                throw Error("certificate: n list must be strictly increasing");
        double prev = -1.0;
        for (long long n : n_list) {
            const double e = eps_rule(n);
            if (!(e > prev)) throw Error("certificate: eps' rule must diverge along n list");
            prev = e;
        }
        if (grid_per_axis < 1) throw Error("certificate: grid_per_axis must be >= 1");
    }

    /// Interior lattice of the open box A: per axis, the points
    /// lo + k*(hi-lo)/(G+1) for k = 1..G (never the endpoints).
    std::vector<Vec> lattice() const {
        const int d = static_cast<int>(set_A.size());
        const int g = grid_per_axis;
        std::vector<Vec> pts;
        std::vector<int> idx(static_cast<std::size_t>(d), 1);
        Vec cur(static_cast<std::size_t>(d));
        for (;;) {
            for (int a = 0; a < d; ++a) {
                const double lo = set_A[static_cast<std::size_t>(a)][0];
                const double hi = set_A[static_cast<std::size_t>(a)][1];
                cur[static_cast<std::size_t>(a)] =
                    lo + (hi - lo) * static_cast<double>(idx[static_cast<std::size_t>(a)]) /
                             static_cast<double>(g + 1);
            }
            pts.push_back(cur);
            int a = d;
            bool done = false;
            while (a > 0) {
                --a;
                if (++idx[static_cast<std::size_t>(a)] <= g) break;
                idx[static_cast<std::size_t>(a)] = 1;
                if (a == 0) done = true;
            }
            if (done) break;
        }
        return pts;
    }
};

struct DivergenceVerdict {
    long long n = 0;
    bool holds = false;
    double eps_required = 0.0;
    double min_delta = std::numeric_limits<double>::infinity();
    Vec min_s;                 // lattice point attaining min_delta
    Vec witness;               // first failing lattice point (empty if holds)
    std::string fail_reason;   // "below bound" or a domain/evaluation problem
    std::size_t lattice_points = 0;
    std::size_t failing_points = 0;
};

inline std::vector<DivergenceVerdict> check_divergence(const DivergenceCertificate& cert,
                                                       const PhiMap& phi) {
    cert.validate();
    if (static_cast<int>(cert.set_A.size()) != phi.d_in)
        throw DimensionError("check_divergence: set A dimension must equal phi.d_in");
    const std::vector<Vec> lattice = cert.lattice();
    std::vector<DivergenceVerdict> verdicts;
    verdicts.reserve(cert.n_list.size());
    for (long long n : cert.n_list) {
        DivergenceVerdict v;
        v.n = n;
        v.eps_required = cert.eps_rule(n);
        v.lattice_points = lattice.size();
        const double r_n = cert.r_rule(n);
        const Vec m_n = cert.m_rule(n);
        bool all_ok = true;
        for (const Vec& s : lattice) {
            Vec t = m_n;
            for (std::size_t a = 0; a < t.size(); ++a) t[a] += s[a] / r_n;
            double dval = std::numeric_limits<double>::quiet_NaN();
            std::string reason;
            try {
                dval = delta(phi, t, m_n);
            } catch (const Error& e) {
                reason = e.what();
            }
            if (reason.empty()) {
                if (dval < v.min_delta) {
                    v.min_delta = dval;
                    v.min_s = s;
                }
                if (!(dval >= v.eps_required)) {
                    ++v.failing_points;
                    if (all_ok) {
                        v.witness = s;
                        v.fail_reason = "below bound";
                        all_ok = false;
                    }
                }
            } else {
                ++v.failing_points;
                if (all_ok) {
                    v.witness = s;
                    v.fail_reason = reason;
                    all_ok = false;
                }
            }
        }
        v.holds = all_ok;
        verdicts.push_back(std::move(v));
    }
    return verdicts;
}

// ---------------------------------------------------------------------------
// Shipped certificate presets. The square preset satisfies its bound; the
// reciprocal and iv presets do not (their advertised growth cancels out of
// the algebra — see the README's divergence notes), and check_divergence
// reports that honestly.
// ---------------------------------------------------------------------------
struct DivergencePreset {
    DivergenceCertificate cert;
    const PhiMap* phi;
};

inline DivergencePreset divergence_preset(const std::string& name,
                                          std::vector<long long> n_list = {100, 10000, 1000000},
                                          int grid_per_axis = 17) {
    auto sqrt_rule = [](long long n) { return std::sqrt(static_cast<double>(n)); };
    if (name == "reciprocal") {
        return DivergencePreset{
            DivergenceCertificate::make(
                "reciprocal", sqrt_rule, sqrt_rule,
                [](long long n) {
                    const double dn = static_cast<double>(n);
                    return Vec{1.0 / std::sqrt(dn) + 1.0 / dn};
                },
                {{{-2.0, -1.0}}}, std::move(n_list), grid_per_axis),
            &builtin("reciprocal")};
    }
    if (name == "square") {
        return DivergencePreset{
            DivergenceCertificate::make(
                "square", sqrt_rule,
                [](long long n) { return 0.5 * std::sqrt(static_cast<double>(n)); },
                [](long long n) { return Vec{1.0 / static_cast<double>(n)}; },
                {{{1.0, 2.0}}}, std::move(n_list), grid_per_axis),
            &builtin("square")};
    }
    if (name == "iv") {
        return DivergencePreset{
            DivergenceCertificate::make(
                "iv_ratio", sqrt_rule,
                // includes the advertised 3/2 margin factor
                [](long long n) { return 1.5 * std::sqrt(static_cast<double>(n)); },
                [](long long n) {
                    const double rn = std::sqrt(static_cast<double>(n));
                    return Vec{1.0 + 0.5 / rn, 1.0 / rn};
                },
                {{{-0.5, 0.5}, {-2.0, -1.0}}}, std::move(n_list), grid_per_axis),
            &builtin("iv_ratio")};
    }
    throw UnknownBuiltin("unknown divergence preset: " + name);
}

}  // namespace unidelta
