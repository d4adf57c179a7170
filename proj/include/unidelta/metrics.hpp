#pragma once
// Distributional distance estimators and coverage tallies.
//
// dudley_1d computes the exact bounded-Lipschitz (Dudley) distance between two
// one-dimensional empirical measures: the optimizer h lives on the sorted
// union support x_1 < ... < x_K with box constraints |h_i| <= 1 and the chain
// constraints |h_{i+1} - h_i| <= x_{i+1} - x_i, so the LP
//     max sum_i w_i h_i
// is solved exactly by a forward dynamic program whose value function is a
// concave piecewise-linear function of the current h — an exact LP routine
// specialized to the chain constraint graph.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "common.hpp"
#include "rng.hpp"
#include "threads.hpp"

namespace unidelta {

// ---------------------------------------------------------------------------
// Samples.
// ---------------------------------------------------------------------------
class EmpiricalSample {
  public:
    EmpiricalSample() = default;

    EmpiricalSample(std::vector<double> data, std::size_t d) : d_(d), data_(std::move(data)) {
        if (d_ == 0) throw DimensionError("EmpiricalSample: d must be positive");
        if (data_.size() % d_ != 0) throw DimensionError("EmpiricalSample: ragged data");
        n_ = data_.size() / d_;
        if (n_ < 2) throw EmptyError("EmpiricalSample: needs at least 2 draws");
        for (double x : data_)
            if (!std::isfinite(x)) throw Error("EmpiricalSample: non-finite entry");
    }

    static EmpiricalSample from_column(std::vector<double> values) {
        return EmpiricalSample(std::move(values), 1);
    }

    std::size_t size() const { return n_; }
    std::size_t dim() const { return d_; }
    double at(std::size_t i, std::size_t j) const { return data_[i * d_ + j]; }
    const std::vector<double>& raw() const { return data_; }

    std::vector<double> column(std::size_t j) const {
        if (j >= d_) throw DimensionError("EmpiricalSample::column: index out of range");
        std::vector<double> out(n_);
        for (std::size_t i = 0; i < n_; ++i) out[i] = data_[i * d_ + j];
        return out;
    }

    std::vector<double> sorted_column(std::size_t j) const {
        std::vector<double> out = column(j);
        std::sort(out.begin(), out.end());
        return out;
    }

    std::vector<double> project(const Vec& dir) const {
        if (dir.size() != d_) throw DimensionError("EmpiricalSample::project: bad direction");
        std::vector<double> out(n_, 0.0);
        for (std::size_t i = 0; i < n_; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < d_; ++j) acc += data_[i * d_ + j] * dir[j];
            out[i] = acc;
        }
        return out;
    }

  private:
    std::size_t n_ = 0, d_ = 1;
    std::vector<double> data_;
};

/// Ordered key/value metadata attached to reports (serialized as-is).
struct Meta {
    std::vector<std::pair<std::string, std::string>> items;

    void add(const std::string& k, const std::string& v) { items.emplace_back(k, v); }
    void add(const std::string& k, double v) {
        char buf[40];
        auto res = std::to_chars(buf, buf + sizeof(buf), v);
        items.emplace_back(k, std::string(buf, res.ptr));
    }
    void add(const std::string& k, std::size_t v) { items.emplace_back(k, std::to_string(v)); }
    void add(const std::string& k, long long v) { items.emplace_back(k, std::to_string(v)); }
};

struct DistanceReport {
    std::string metric;      // "dudley_1d" | "ks" | "sliced_bl"
    double value = 0.0;
    double mc_stderr = 0.0;  // bootstrap
    Meta meta;
};

struct CoverageReport {
    std::size_t reps = 0;
    std::size_t covered = 0;
    double rate = 0.0;
    double stderr_ = 0.0;  // binomial sqrt(p(1-p)/reps)
    std::size_t rejections = 0;
    Meta meta;
};

// ---------------------------------------------------------------------------
// Exact chain-LP solver for the 1-D Dudley metric.
// ---------------------------------------------------------------------------
namespace dudley_detail {

/// Concave piecewise-linear function on [-1, 1], stored as breakpoints with
/// linear interpolation in between.
struct Pwl {
    std::vector<double> x, v;

    double eval(double h) const {
        if (h <= x.front()) return v.front();
        if (h >= x.back()) return v.back();
        const auto it = std::upper_bound(x.begin(), x.end(), h);
        const std::size_t j = static_cast<std::size_t>(it - x.begin());
        const double x0 = x[j - 1], x1 = x[j];
        const double f = (h - x0) / (x1 - x0);
        return v[j - 1] + f * (v[j] - v[j - 1]);
    }

    std::size_t argmax() const {
        std::size_t best = 0;
        for (std::size_t i = 1; i < v.size(); ++i)
            if (v[i] > v[best]) best = i;
        return best;
    }

    void push(double px, double pv) {
        if (!x.empty() && px == x.back()) {
            v.back() = std::max(v.back(), pv);
            return;
        }
        x.push_back(px);
        v.push_back(pv);
    }
};

/// Exact optimum of max sum w_i h_i over |h_i| <= 1, |h_{i+1}-h_i| <= gaps[i].
inline double solve_chain(const std::vector<double>& w, const std::vector<double>& gaps) {
    const std::size_t k = w.size();
    Pwl cur;
    cur.x = {-1.0, 1.0};
    cur.v = {-w[0], w[0]};
    Pwl next;
    for (std::size_t i = 1; i < k; ++i) {
        const double d = gaps[i - 1];
        const std::size_t p = cur.argmax();
        const double px = cur.x[p], pv = cur.v[p];
        next.x.clear();
        next.v.clear();
        // left branch: h in [-1, px - d] where the window maximum is cur(h + d)
        if (px - d > -1.0) {
            next.push(-1.0, cur.eval(-1.0 + d));
            for (std::size_t j = 0; j < cur.x.size(); ++j)
                if (cur.x[j] > -1.0 + d && cur.x[j] < px) next.push(cur.x[j] - d, cur.v[j]);
        }
        // plateau around the argmax
        next.push(std::max(-1.0, px - d), pv);
        next.push(std::min(1.0, px + d), pv);
        // right branch: h in [px + d, 1] where the window maximum is cur(h - d)
        if (px + d < 1.0) {
            for (std::size_t j = 0; j < cur.x.size(); ++j)
                if (cur.x[j] > px && cur.x[j] < 1.0 - d) next.push(cur.x[j] + d, cur.v[j]);
            next.push(1.0, cur.eval(1.0 - d));
        }
        for (std::size_t j = 0; j < next.x.size(); ++j) next.v[j] += w[i] * next.x[j];
        std::swap(cur, next);
    }
    double best = cur.v[0];
    for (double val : cur.v) best = std::max(best, val);
    return best;
}

/// Merges two sorted 1-D samples into unique support points with signed
/// weights count_p/Np - count_q/Nq, then solves the chain LP. The weight sign
/// is canonicalized (first nonzero weight positive) so the result is
/// bit-identical under argument swap.
inline double dudley_sorted(const std::vector<double>& ps, const std::vector<double>& qs) {
    const double wp = 1.0 / static_cast<double>(ps.size());
    const double wq = 1.0 / static_cast<double>(qs.size());
    std::vector<double> support, weights;
    support.reserve(ps.size() + qs.size());
    weights.reserve(ps.size() + qs.size());
    std::size_t i = 0, j = 0;
    while (i < ps.size() || j < qs.size()) {
        double x;
        if (j >= qs.size() || (i < ps.size() && ps[i] <= qs[j])) x = ps[i];
        else x = qs[j];
        double w = 0.0;
        while (i < ps.size() && ps[i] == x) {
            w += wp;
            ++i;
        }
        while (j < qs.size() && qs[j] == x) {
            w -= wq;
            ++j;
        }
        if (w != 0.0) {
            support.push_back(x);
            weights.push_back(w);
        }
    }
    if (weights.empty()) return 0.0;
    if (weights.front() < 0.0)
        for (double& w : weights) w = -w;
    std::vector<double> gaps(support.size() - 1);
    for (std::size_t g = 0; g + 1 < support.size(); ++g) gaps[g] = support[g + 1] - support[g];
    return solve_chain(weights, gaps);
}

/// Uniform subsample without replacement (partial Fisher-Yates), sorted.
inline std::vector<double> capped_sorted(const std::vector<double>& xs, std::size_t cap,
                                         std::uint64_t seed) {
    if (xs.size() <= cap) {
        std::vector<double> out = xs;
        std::sort(out.begin(), out.end());
        return out;
    }
    std::vector<double> pool = xs;
    Rng rng(seed);
    std::vector<double> out(cap);
    for (std::size_t i = 0; i < cap; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.next_u64() % (pool.size() - i));
        std::swap(pool[i], pool[j]);
        out[i] = pool[i];
    }
    std::sort(out.begin(), out.end());
    return out;
}

inline std::vector<double> resample_sorted(const std::vector<double>& xs, Rng& rng) {
    std::vector<double> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i)
        out[i] = xs[static_cast<std::size_t>(rng.next_u64() % xs.size())];
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace dudley_detail

struct DudleyOpts {
    std::size_t cap = 512;        // subsample cap per sample (seeded, recorded)
    std::uint64_t seed = 0x5EEDULL;
    int bootstrap = 200;          // resamples for mc_stderr (0 disables)
};

inline DistanceReport dudley_1d(const EmpiricalSample& p, const EmpiricalSample& q,
                                const DudleyOpts& opts = {}) {
    if (p.dim() != 1 || q.dim() != 1)
        throw DimensionError("dudley_1d: samples must be one-dimensional");
    const auto ps = dudley_detail::capped_sorted(p.column(0), opts.cap, mix_seed(opts.seed, 0xD01ULL));
    const auto qs = dudley_detail::capped_sorted(q.column(0), opts.cap, mix_seed(opts.seed, 0xD02ULL));

    DistanceReport rep;
    rep.metric = "dudley_1d";
    rep.value = dudley_detail::dudley_sorted(ps, qs);
    if (opts.bootstrap > 0) {
        const std::size_t b_count = static_cast<std::size_t>(opts.bootstrap);
        std::vector<double> boot(b_count, 0.0);
        parallel_for(b_count, [&](std::size_t b) {
            Rng rng(mix_seed(opts.seed, 0xB007ULL, b));
            const auto pb = dudley_detail::resample_sorted(ps, rng);
            const auto qb = dudley_detail::resample_sorted(qs, rng);
            boot[b] = dudley_detail::dudley_sorted(pb, qb);
        });
        double mean = 0.0;
        for (double x : boot) mean += x;
        mean /= static_cast<double>(b_count);
        double var = 0.0;
        for (double x : boot) var += (x - mean) * (x - mean);
        rep.mc_stderr = std::sqrt(var / static_cast<double>(b_count > 1 ? b_count - 1 : 1));
    }
    rep.meta.add("n_p", p.size());
    rep.meta.add("n_q", q.size());
    rep.meta.add("cap", opts.cap);
    rep.meta.add("subsampled", static_cast<std::size_t>((p.size() > opts.cap) || (q.size() > opts.cap) ? 1 : 0));
    rep.meta.add("seed", static_cast<long long>(opts.seed));
    rep.meta.add("bootstrap", static_cast<std::size_t>(opts.bootstrap));
    return rep;
}

// ---------------------------------------------------------------------------
// Kolmogorov-Smirnov.
// ---------------------------------------------------------------------------
namespace ks_detail {

inline double ks_two_sample(const std::vector<double>& a, const std::vector<double>& b) {
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() || j < b.size()) {
        double x;
        if (j >= b.size() || (i < a.size() && a[i] <= b[j])) x = a[i];
        else x = b[j];
        while (i < a.size() && a[i] == x) ++i;
        while (j < b.size() && b[j] == x) ++j;
        d = std::max(d, std::fabs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    return d;
}

inline double ks_vs_cdf(const std::vector<double>& xs, const std::function<double(double)>& cdf) {
    const double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double f = cdf(xs[i]);
        d = std::max(d, std::fabs(f - static_cast<double>(i) / n));
        d = std::max(d, std::fabs(static_cast<double>(i + 1) / n - f));
    }
    return d;
}

}  // namespace ks_detail

struct KsOpts {
    int bootstrap = 200;
    std::uint64_t seed = 0x5EEDULL;
};

inline DistanceReport ks_distance(const EmpiricalSample& p, const EmpiricalSample& q,
                                  const KsOpts& opts = {}) {
    if (p.dim() != 1 || q.dim() != 1)
        throw DimensionError("ks_distance: samples must be one-dimensional");
    const auto ps = p.sorted_column(0);
    const auto qs = q.sorted_column(0);
    DistanceReport rep;
    rep.metric = "ks";
    rep.value = ks_detail::ks_two_sample(ps, qs);
    if (opts.bootstrap > 0) {
        const std::size_t b_count = static_cast<std::size_t>(opts.bootstrap);
        std::vector<double> boot(b_count, 0.0);
        parallel_for(b_count, [&](std::size_t b) {
            Rng rng(mix_seed(opts.seed, 0xCAFEULL, b));
            const auto pb = dudley_detail::resample_sorted(ps, rng);
            const auto qb = dudley_detail::resample_sorted(qs, rng);
            boot[b] = ks_detail::ks_two_sample(pb, qb);
        });
        double mean = 0.0;
        for (double x : boot) mean += x;
        mean /= static_cast<double>(b_count);
        double var = 0.0;
        for (double x : boot) var += (x - mean) * (x - mean);
        rep.mc_stderr = std::sqrt(var / static_cast<double>(b_count > 1 ? b_count - 1 : 1));
    }
    rep.meta.add("n_p", p.size());
    rep.meta.add("n_q", q.size());
    rep.meta.add("variant", std::string("two_sample"));
    return rep;
}

inline DistanceReport ks_distance(const EmpiricalSample& p, const std::function<double(double)>& cdf,
                                  const KsOpts& opts = {}) {
    if (p.dim() != 1) throw DimensionError("ks_distance: sample must be one-dimensional");
    const auto ps = p.sorted_column(0);
    DistanceReport rep;
    rep.metric = "ks";
    rep.value = ks_detail::ks_vs_cdf(ps, cdf);
    if (opts.bootstrap > 0) {
        const std::size_t b_count = static_cast<std::size_t>(opts.bootstrap);
        std::vector<double> boot(b_count, 0.0);
        parallel_for(b_count, [&](std::size_t b) {
            Rng rng(mix_seed(opts.seed, 0xCAFEULL, b));
            const auto pb = dudley_detail::resample_sorted(ps, rng);
            boot[b] = ks_detail::ks_vs_cdf(pb, cdf);
        });
        double mean = 0.0;
        for (double x : boot) mean += x;
        mean /= static_cast<double>(b_count);
        double var = 0.0;
        for (double x : boot) var += (x - mean) * (x - mean);
        rep.mc_stderr = std::sqrt(var / static_cast<double>(b_count > 1 ? b_count - 1 : 1));
    }
    rep.meta.add("n_p", p.size());
    rep.meta.add("variant", std::string("vs_cdf"));
    return rep;
}

// ---------------------------------------------------------------------------
// Sliced bounded-Lipschitz lower bound for d >= 2: max over random unit
// directions u of dudley_1d(p*u, q*u). Valid lower bound on d_BL because
// x -> h(u.x) is itself bounded 1-Lipschitz whenever h is.
// ---------------------------------------------------------------------------
inline DistanceReport sliced_bl(const EmpiricalSample& p, const EmpiricalSample& q,
                                int n_projections, std::uint64_t seed,
                                const DudleyOpts& opts = {}) {
    if (p.dim() != q.dim()) throw DimensionError("sliced_bl: dimension mismatch");
    if (p.dim() < 2) throw DimensionError("sliced_bl: use dudley_1d for 1-D samples");
    DistanceReport rep;
    rep.metric = "sliced_bl";
    rep.meta.add("n_projections", static_cast<std::size_t>(n_projections < 0 ? 0 : n_projections));
    rep.meta.add("seed", static_cast<long long>(seed));
    if (n_projections <= 0) {
        rep.meta.add("warning", std::string("no projections; reported 0 by convention"));
        return rep;
    }
    const std::size_t np = static_cast<std::size_t>(n_projections);
    std::vector<double> values(np, 0.0), errs(np, 0.0);
    parallel_for(np, [&](std::size_t k) {
        Rng rng(mix_seed(seed, 0x51BULL + k));
        Vec u(p.dim());
        double nrm = 0.0;
        do {
            for (auto& x : u) x = rng.normal();
            nrm = norm2(u);
        } while (nrm < 1e-12);
        for (auto& x : u) x /= nrm;
        DudleyOpts local = opts;
        local.seed = mix_seed(opts.seed, k);
        const auto dp = EmpiricalSample::from_column(p.project(u));
        const auto dq = EmpiricalSample::from_column(q.project(u));
        const DistanceReport r = dudley_1d(dp, dq, local);
        values[k] = r.value;
        errs[k] = r.mc_stderr;
    });
    std::size_t best = 0;
    for (std::size_t k = 1; k < np; ++k)
        if (values[k] > values[best]) best = k;
    rep.value = values[best];
    rep.mc_stderr = errs[best];
    rep.meta.add("argmax_projection", best);
    rep.meta.add("lower_bound", std::string("sliced value is a lower bound on d_BL"));
    return rep;
}

// ---------------------------------------------------------------------------
// Coverage tally.
// ---------------------------------------------------------------------------
inline CoverageReport coverage(const std::vector<std::pair<double, double>>& intervals,
                               double truth) {
    if (intervals.empty()) throw EmptyError("coverage: no intervals");
    CoverageReport rep;
    rep.reps = intervals.size();
    for (const auto& [lo, hi] : intervals) {
        if (!(lo <= hi)) throw Error("coverage: interval with lo > hi");
        if (lo <= truth && truth <= hi) ++rep.covered;
    }
    rep.rate = static_cast<double>(rep.covered) / static_cast<double>(rep.reps);
    rep.stderr_ = std::sqrt(rep.rate * (1.0 - rep.rate) / static_cast<double>(rep.reps));
    return rep;
}

}  // namespace unidelta
