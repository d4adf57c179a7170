#pragma once
// Simulation engine: triangular-array sampling of T_n, construction of
// X_n = r_n E(mu)(phi(T_n) - phi(mu)), the limit X = E(mu) D(mu) S, the
// studentized pivot Z_n, sequence studies along drifting theta_n, coverage
// experiments, and the deterministic continuous-mapping counterexample.
//
// Determinism: every replication draws from its own SplitMix64 substream
// keyed by (seed, stream tag, replication index), and workers write only
// pre-assigned slots, so results are bit-identical for any worker count.

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "linalg.hpp"
#include "metrics.hpp"
#include "remainder.hpp"

namespace unidelta {

// ---------------------------------------------------------------------------
// Families and sequences.
// ---------------------------------------------------------------------------
struct TnSample {
    EmpiricalSample T;
    std::vector<double> sigma_hat;  // per-rep primitive-sd estimate (may be empty)
    std::size_t rejections = 0;
};

struct ParamFamily {
    std::string name;
    int d = 1;  // dimension of T
    std::vector<std::array<double, 2>> theta_box;
    std::function<Vec(const Vec&)> mu;
    std::function<Mat(const Vec&)> sigma;
    std::function<TnSample(const Vec& theta, long long n, std::size_t reps, std::uint64_t seed)>
        sampler;
    /// Draws of the limit deviation S (the weak limit of r_n (T_n - mu)).
    std::function<EmpiricalSample(const Vec& theta, std::size_t reps, std::uint64_t seed)>
        limit_s_sampler;
    double tightness_bound = 8.0;  // cap for the 0.999 quantile of ||S_n|| on test grids
    bool exact_shortcut = false;   // sampler draws T_n from its exact law

    void check_theta(const Vec& theta) const {
        if (theta.size() != theta_box.size())
            throw DimensionError("family " + name + ": theta has wrong dimension");
        for (std::size_t i = 0; i < theta.size(); ++i)
            if (!(theta[i] >= theta_box[i][0] && theta[i] <= theta_box[i][1]))
                throw DomainError("family " + name + ": theta coordinate " + std::to_string(i) +
                                  " outside box");
    }
};

struct ParamSeq {
    ParamFamily family;
    std::function<Vec(long long)> rule;  // n -> theta_n
    std::string label;
};

struct SimConfig {
    std::uint64_t master_seed = 20260814ULL;
    std::size_t reps = 100000;
    std::vector<long long> n_list;
    std::function<double(long long)> r_rule = [](long long n) {
        return std::sqrt(static_cast<double>(n));
    };

    void validate() const {
        if (reps < 2) throw EmptyError("SimConfig: reps must be at least 2");
        if (n_list.empty()) throw EmptyError("SimConfig: empty n list");
        for (std::size_t i = 0; i + 1 < n_list.size(); ++i)
            if (!(n_list[i] < n_list[i + 1]))
                throw Error("SimConfig: n list must be strictly increasing");
    }
};

// ---------------------------------------------------------------------------
// Built-in families.
// ---------------------------------------------------------------------------
namespace families {

/// Scalar i.i.d.-normal mean: theta = (mu, sd). T_n ~ N(mu, sd^2/n) exactly;
/// sigma_hat is the exact law of the sample sd, sd * sqrt(chi2_{n-1}/(n-1)).
inline ParamFamily normal1() {
    ParamFamily f;
    f.name = "normal";
    f.d = 1;
    f.theta_box = {{{-1e12, 1e12}}, {{0.0, 1e6}}};
    f.mu = [](const Vec& th) { return Vec{th[0]}; };
    f.sigma = [](const Vec& th) {
        Mat s(1, 1);
        s(0, 0) = th[1] * th[1];
        return s;
    };
    f.sampler = [](const Vec& th, long long n, std::size_t reps, std::uint64_t seed) {
        const double mean = th[0], sd = th[1];
        const double root_n = std::sqrt(static_cast<double>(n));
        std::vector<double> t(reps), s_hat(reps);
        parallel_for(reps, [&](std::size_t r) {
            Rng rng(mix_seed(seed, 0x401ULL, r));
            t[r] = mean + sd * rng.normal() / root_n;
            if (n >= 2) {
                const double k = static_cast<double>(n - 1);
                s_hat[r] = sd * std::sqrt(rng.chi2(k) / k);
            } else {
                s_hat[r] = sd;
            }
        });
        TnSample out{EmpiricalSample(std::move(t), 1), std::move(s_hat), 0};
        return out;
    };
    f.limit_s_sampler = [](const Vec& th, std::size_t reps, std::uint64_t seed) {
        const double sd = th[1];
        std::vector<double> s(reps);
        parallel_for(reps, [&](std::size_t r) {
            Rng rng(mix_seed(seed, 0x402ULL, r));
            s[r] = sd * rng.normal();
        });
        return EmpiricalSample(std::move(s), 1);
    };
    f.tightness_bound = 8.0;
    f.exact_shortcut = true;
    return f;
}

/// Bivariate normal mean with identity covariance: theta = (m1, m2).
inline ParamFamily normal2() {
    ParamFamily f;
    f.name = "normal2";
    f.d = 2;
    f.theta_box = {{{-1e12, 1e12}}, {{-1e12, 1e12}}};
    f.mu = [](const Vec& th) { return th; };
    f.sigma = [](const Vec&) { return Mat::identity(2); };
    f.sampler = [](const Vec& th, long long n, std::size_t reps, std::uint64_t seed) {
        const double root_n = std::sqrt(static_cast<double>(n));
        std::vector<double> t(reps * 2);
        parallel_for(reps, [&](std::size_t r) {
            Rng rng(mix_seed(seed, 0x403ULL, r));
            t[2 * r] = th[0] + rng.normal() / root_n;
            t[2 * r + 1] = th[1] + rng.normal() / root_n;
        });
        return TnSample{EmpiricalSample(std::move(t), 2), {}, 0};
    };
    f.limit_s_sampler = [](const Vec&, std::size_t reps, std::uint64_t seed) {
        std::vector<double> s(reps * 2);
        parallel_for(reps, [&](std::size_t r) {
            Rng rng(mix_seed(seed, 0x404ULL, r));
            s[2 * r] = rng.normal();
            s[2 * r + 1] = rng.normal();
        });
        return EmpiricalSample(std::move(s), 2);
    };
    f.tightness_bound = 5.0;
    f.exact_shortcut = true;
    return f;
}

/// Bernoulli mean: theta = (p); T_n = Binomial(n, p)/n exactly.
inline ParamFamily bernoulli() {
    ParamFamily f;
    f.name = "bernoulli";
    f.d = 1;
    f.theta_box = {{{0.0, 1.0}}};
    f.mu = [](const Vec& th) { return Vec{th[0]}; };
    f.sigma = [](const Vec& th) {
        Mat s(1, 1);
        s(0, 0) = th[0] * (1.0 - th[0]);
        return s;
    };
    f.sampler = [](const Vec& th, long long n, std::size_t reps, std::uint64_t seed) {
        const double p = th[0];
        std::vector<double> t(reps), s_hat(reps);
        parallel_for(reps, [&](std::size_t r) {
            Rng rng(mix_seed(seed, 0x405ULL, r));
            const double mean = static_cast<double>(rng.binomial(n, p)) / static_cast<double>(n);
            t[r] = mean;
            s_hat[r] = std::sqrt(std::max(mean * (1.0 - mean), 0.0));
        });
        return TnSample{EmpiricalSample(std::move(t), 1), std::move(s_hat), 0};
    };
    f.limit_s_sampler = [](const Vec& th, std::size_t reps, std::uint64_t seed) {
        const double sd = std::sqrt(th[0] * (1.0 - th[0]));
        std::vector<double> s(reps);
        parallel_for(reps, [&](std::size_t r) {
            Rng rng(mix_seed(seed, 0x406ULL, r));
            s[r] = sd * rng.normal();
        });
        return EmpiricalSample(std::move(s), 1);
    };
    f.tightness_bound = 2.0;
    f.exact_shortcut = true;
    return f;
}

/// Nonnegative-deviation family anchored at theta = (mu):
/// T_n = mu + S/r_n with S ~ chi-squared(1). Keeps T_n inside the domain of
/// sqrt-like maps; the limit deviation S is chi-squared(1), not normal.
inline ParamFamily chi2_mean() {
    ParamFamily f;
    f.name = "chi2-mean";
    f.d = 1;
    f.theta_box = {{{0.0, 1e12}}};
    f.mu = [](const Vec& th) { return Vec{th[0]}; };
    f.sigma = [](const Vec&) {
        Mat s(1, 1);
        s(0, 0) = 2.0;  // Var(chi2_1)
        return s;
    };
    f.sampler = [](const Vec& th, long long n, std::size_t reps, std::uint64_t seed) {
        const double root_n = std::sqrt(static_cast<double>(n));
        std::vector<double> t(reps);
        parallel_for(reps, [&](std::size_t r) {
            Rng rng(mix_seed(seed, 0x407ULL, r));
            const double z = rng.normal();
            t[r] = th[0] + z * z / root_n;
        });
        return TnSample{EmpiricalSample(std::move(t), 1), {}, 0};
    };
    f.limit_s_sampler = [](const Vec&, std::size_t reps, std::uint64_t seed) {
        std::vector<double> s(reps);
        parallel_for(reps, [&](std::size_t r) {
            Rng rng(mix_seed(seed, 0x408ULL, r));
            const double z = rng.normal();
            s[r] = z * z;
        });
        return EmpiricalSample(std::move(s), 1);
    };
    f.tightness_bound = 12.0;
    f.exact_shortcut = true;
    return f;
}

inline Mat weakiv_sigma(double beta, double pi, double rho, double su, double sv) {
    const double var_zd = 2.0 * pi * pi + sv * sv;
    const double cov = beta * var_zd + rho * su * sv;
    const double var_zy = beta * beta * var_zd + su * su + 2.0 * beta * rho * su * sv;
    Mat s(2, 2);
    s(0, 0) = var_zy;
    s(0, 1) = s(1, 0) = cov;
    s(1, 1) = var_zd;
    return s;
}

/// Weak-instrument reduced-form family: theta = (beta, pi, rho, sigma_u,
/// sigma_v); T_n = mean of (Z_i Y_i, Z_i D_i) with primitives Z ~ N(0,1),
/// D = pi Z + v, Y = beta D + u, corr(u, v) = rho. mu = (beta*pi, pi) and
/// Sigma = Var((ZY, ZD)) in closed form; the default sampler uses the exact
/// reduced-form law T_n ~ N(mu, Sigma/n).
inline ParamFamily weakiv() {
    ParamFamily f;
    f.name = "weakiv";
    f.d = 2;
    f.theta_box = {{{-1e9, 1e9}}, {{-1e6, 1e6}}, {{-0.999, 0.999}}, {{1e-9, 1e6}}, {{1e-9, 1e6}}};
    f.mu = [](const Vec& th) { return Vec{th[0] * th[1], th[1]}; };
    f.sigma = [](const Vec& th) { return weakiv_sigma(th[0], th[1], th[2], th[3], th[4]); };
    f.sampler = [f_sigma = f.sigma, f_mu = f.mu](const Vec& th, long long n, std::size_t reps,
                                                 std::uint64_t seed) {
        const Mat l = cholesky_psd(f_sigma(th));
        const Vec mean = f_mu(th);
        const double root_n = std::sqrt(static_cast<double>(n));
        std::vector<double> t(reps * 2);
        parallel_for(reps, [&](std::size_t r) {
            Rng rng(mix_seed(seed, 0x409ULL, r));
            const double z1 = rng.normal(), z2 = rng.normal();
            t[2 * r] = mean[0] + (l(0, 0) * z1 + l(0, 1) * z2) / root_n;
            t[2 * r + 1] = mean[1] + (l(1, 0) * z1 + l(1, 1) * z2) / root_n;
        });
        return TnSample{EmpiricalSample(std::move(t), 2), {}, 0};
    };
    f.limit_s_sampler = [f_sigma = f.sigma](const Vec& th, std::size_t reps, std::uint64_t seed) {
        const Mat l = cholesky_psd(f_sigma(th));
        std::vector<double> s(reps * 2);
        parallel_for(reps, [&](std::size_t r) {
            Rng rng(mix_seed(seed, 0x40AULL, r));
            const double z1 = rng.normal(), z2 = rng.normal();
            s[2 * r] = l(0, 0) * z1 + l(0, 1) * z2;
            s[2 * r + 1] = l(1, 0) * z1 + l(1, 1) * z2;
        });
        return EmpiricalSample(std::move(s), 2);
    };
    f.tightness_bound = 40.0;
    f.exact_shortcut = true;
    return f;
}

/// Same family drawn honestly from n primitive triples per replication
/// (used to validate the reduced-form shortcut).
inline ParamFamily weakiv_primitive() {
    ParamFamily f = weakiv();
    f.name = "weakiv-primitive";
    f.exact_shortcut = false;
    f.sampler = [](const Vec& th, long long n, std::size_t reps, std::uint64_t seed) {
        const double beta = th[0], pi = th[1], rho = th[2], su = th[3], sv = th[4];
        const double rho_c = std::sqrt(std::max(0.0, 1.0 - rho * rho));
        std::vector<double> t(reps * 2);
        parallel_for(reps, [&](std::size_t r) {
            Rng rng(mix_seed(seed, 0x40BULL, r));
            double zy = 0.0, zd = 0.0;
            for (long long i = 0; i < n; ++i) {
                const double z = rng.normal();
                const double a = rng.normal(), b = rng.normal();
                const double u = su * a;
                const double v = sv * (rho * a + rho_c * b);
                const double d0 = pi * z + v;
                const double y = beta * d0 + u;
                zy += z * y;
                zd += z * d0;
            }
            t[2 * r] = zy / static_cast<double>(n);
            t[2 * r + 1] = zd / static_cast<double>(n);
        });
        return TnSample{EmpiricalSample(std::move(t), 2), {}, 0};
    };
    return f;
}

}  // namespace families

// ---------------------------------------------------------------------------
// Core operations.
// ---------------------------------------------------------------------------
inline TnSample sample_Tn_full(const ParamFamily& family, const Vec& theta, long long n,
                               std::size_t reps, std::uint64_t seed) {
    if (reps < 2) throw EmptyError("sample_Tn: reps must be at least 2");
    if (n < 1) throw Error("sample_Tn: n must be at least 1");
    family.check_theta(theta);
    return family.sampler(theta, n, reps, seed);
}

inline EmpiricalSample sample_Tn(const ParamFamily& family, const Vec& theta, long long n,
                                 std::size_t reps, std::uint64_t seed) {
    return sample_Tn_full(family, theta, n, reps, seed).T;
}

namespace detail {

inline void assert_unit_rows(const NormalizedJacobian& nj, const char* where) {
    for (std::size_t k = 0; k < nj.ED.rows(); ++k)
        if (std::fabs(nj.ED.row_norm(k) - 1.0) > 1e-12)
            throw Error(std::string(where) + ": ED row norm deviates from 1");
}

}  // namespace detail

struct XnSample {
    EmpiricalSample X;
    std::size_t rejections = 0;
};

/// X_n = r_n * E(mu) * (phi(T_n) - phi(mu)) per draw. Draws with T_n outside
/// the domain are excluded and counted.
inline XnSample build_Xn(const PhiMap& phi, const EmpiricalSample& tn, const Vec& mu, double r_n) {
    if (static_cast<int>(tn.dim()) != phi.d_in)
        throw DimensionError("build_Xn: sample dimension must equal phi.d_in");
    const NormalizedJacobian nj = normalizer(jacobian(phi, mu));
    detail::assert_unit_rows(nj, "build_Xn");
    const Vec phi_mu = eval_phi(phi, mu);
    const std::size_t d_out = static_cast<std::size_t>(phi.d_out);

    std::vector<double> rows(tn.size() * d_out, 0.0);
    std::vector<std::uint8_t> keep(tn.size(), 0);
    parallel_for(tn.size(), [&](std::size_t i) {
        Vec t(tn.dim());
        for (std::size_t j = 0; j < tn.dim(); ++j) t[j] = tn.at(i, j);
        if (phi.domain_pred(t) != Region::inside) return;
        const Vec ft = phi.eval(t);
        if (!all_finite(ft)) return;
        for (std::size_t k = 0; k < d_out; ++k)
            rows[i * d_out + k] = r_n * nj.E_diag[k] * (ft[k] - phi_mu[k]);
        keep[i] = 1;
    });

    std::vector<double> packed;
    packed.reserve(rows.size());
    std::size_t rejections = 0;
    for (std::size_t i = 0; i < tn.size(); ++i) {
        if (!keep[i]) {
            ++rejections;
            continue;
        }
        for (std::size_t k = 0; k < d_out; ++k) packed.push_back(rows[i * d_out + k]);
    }
    return XnSample{EmpiricalSample(std::move(packed), d_out), rejections};
}

/// Draws of the limit X = E(mu) D(mu) S with S ~ N(0, Sigma).
inline EmpiricalSample sample_limit_X(const PhiMap& phi, const Vec& mu, const Mat& sigma,
                                      std::size_t reps, std::uint64_t seed) {
    if (reps == 0) throw EmptyError("sample_limit_X: reps must be positive");
    const NormalizedJacobian nj = normalizer(jacobian(phi, mu));
    detail::assert_unit_rows(nj, "sample_limit_X");
    const Mat l = cholesky_psd(sigma);  // NotPSDError on negative pivots
    const std::size_t d_in = static_cast<std::size_t>(phi.d_in);
    const std::size_t d_out = static_cast<std::size_t>(phi.d_out);
    std::vector<double> rows(reps * d_out);
    parallel_for(reps, [&](std::size_t r) {
        Rng rng(mix_seed(seed, 0x11FULL, r));
        Vec z(d_in), s(d_in, 0.0);
        for (auto& x : z) x = rng.normal();
        for (std::size_t i = 0; i < d_in; ++i)
            for (std::size_t j = 0; j <= i; ++j) s[i] += l(i, j) * z[j];
        const Vec x = nj.ED.mul(s);
        for (std::size_t k = 0; k < d_out; ++k) rows[r * d_out + k] = x[k];
    });
    return EmpiricalSample(std::move(rows), d_out);
}

/// Limit X built from a family's own limit deviation law (normal or not).
inline EmpiricalSample limit_X_from_family(const PhiMap& phi, const ParamFamily& family,
                                           const Vec& theta, std::size_t reps,
                                           std::uint64_t seed) {
    family.check_theta(theta);
    const Vec mu = family.mu(theta);
    const NormalizedJacobian nj = normalizer(jacobian(phi, mu));
    detail::assert_unit_rows(nj, "limit_X_from_family");
    const EmpiricalSample s_draws = family.limit_s_sampler(theta, reps, seed);
    if (static_cast<int>(s_draws.dim()) != phi.d_in)
        throw DimensionError("limit_X_from_family: deviation dimension mismatch");
    const std::size_t d_out = static_cast<std::size_t>(phi.d_out);
    std::vector<double> rows(reps * d_out);
    parallel_for(reps, [&](std::size_t r) {
        Vec s(s_draws.dim());
        for (std::size_t j = 0; j < s_draws.dim(); ++j) s[j] = s_draws.at(r, j);
        const Vec x = nj.ED.mul(s);
        for (std::size_t k = 0; k < d_out; ++k) rows[r * d_out + k] = x[k];
    });
    return EmpiricalSample(std::move(rows), d_out);
}

// ---------------------------------------------------------------------------
// Studentized pivot.
// ---------------------------------------------------------------------------
struct SigmaHat {
    std::optional<Mat> pooled;
    std::vector<Mat> per_draw;        // aligned with the T_n draws
    std::vector<double> per_draw_sd;  // scalar shortcut: Sigma_hat = sd^2

    static SigmaHat Pooled(Mat m) {
        SigmaHat s;
        s.pooled = std::move(m);
        return s;
    }
    static SigmaHat PerDraw(std::vector<Mat> ms) {
        SigmaHat s;
        s.per_draw = std::move(ms);
        return s;
    }
    static SigmaHat PerDrawSd(std::vector<double> sds) {
        SigmaHat s;
        s.per_draw_sd = std::move(sds);
        return s;
    }
};

struct PivotSample {
    EmpiricalSample Z;
    std::size_t rank_rejections = 0;
    std::size_t domain_rejections = 0;
};

/// Z_n per draw: bracket = E(mu) * J(T_n) * Sigma_hat * J(T_n)' * E(mu),
/// Z_n = bracket^{-1/2} * X_n. Xn must have been built from tn (same order);
/// rank-deficient brackets (eigenvalue < 1e-12) are counted and skipped.
inline PivotSample pivot_Zn(const PhiMap& phi, const EmpiricalSample& tn, const SigmaHat& sig,
                            const EmpiricalSample& xn, const Vec& mu) {
    if (static_cast<int>(tn.dim()) != phi.d_in)
        throw DimensionError("pivot_Zn: sample dimension must equal phi.d_in");
    if (static_cast<int>(xn.dim()) != phi.d_out)
        throw DimensionError("pivot_Zn: X_n dimension must equal phi.d_out");
    if (!sig.per_draw.empty() && sig.per_draw.size() != tn.size())
        throw DimensionError("pivot_Zn: per-draw Sigma_hat misaligned");
    if (!sig.per_draw_sd.empty() && sig.per_draw_sd.size() != tn.size())
        throw DimensionError("pivot_Zn: per-draw sd misaligned");
    if (sig.per_draw.empty() && sig.per_draw_sd.empty() && !sig.pooled)
        throw Error("pivot_Zn: no Sigma_hat provided");

    const NormalizedJacobian nj = normalizer(jacobian(phi, mu));
    const std::size_t d_out = static_cast<std::size_t>(phi.d_out);
    std::vector<double> rows;
    rows.reserve(xn.size() * d_out);
    std::size_t rank_rej = 0, domain_rej = 0, xi = 0;
    Vec t(tn.dim()), x(d_out);
    for (std::size_t i = 0; i < tn.size(); ++i) {
        for (std::size_t j = 0; j < tn.dim(); ++j) t[j] = tn.at(i, j);
        if (phi.domain_pred(t) != Region::inside) {
            ++domain_rej;
            continue;  // build_Xn dropped this draw as well
        }
        if (xi >= xn.size()) throw DimensionError("pivot_Zn: X_n has fewer rows than expected");
        for (std::size_t k = 0; k < d_out; ++k) x[k] = xn.at(xi, k);
        ++xi;
        try {
            const Mat j_t = jacobian(phi, t);
            Mat sigma_hat;
            if (!sig.per_draw.empty()) sigma_hat = sig.per_draw[i];
            else if (!sig.per_draw_sd.empty()) {
                sigma_hat = Mat(tn.dim(), tn.dim());
                sigma_hat(0, 0) = sig.per_draw_sd[i] * sig.per_draw_sd[i];
            } else {
                sigma_hat = *sig.pooled;
            }
            // bracket = (E J) Sigma (E J)'
            Mat ej = j_t;
            for (std::size_t k = 0; k < d_out; ++k)
                for (std::size_t c = 0; c < tn.dim(); ++c) ej(k, c) *= nj.E_diag[k];
            const Mat bracket = ej.mul(sigma_hat).mul(ej.transpose());
            if (d_out == 1) {
                const double b = bracket(0, 0);
                if (!(b >= 1e-12)) throw RankError("pivot bracket below floor");
                rows.push_back(x[0] / std::sqrt(b));
            } else {
                const Mat w = inv_sqrt_sym(bracket);
                const Vec z = w.mul(x);
                for (std::size_t k = 0; k < d_out; ++k) rows.push_back(z[k]);
            }
        } catch (const RankError&) {
            ++rank_rej;
        } catch (const DomainError&) {
            ++domain_rej;
        }
    }
    if (xi != xn.size()) throw DimensionError("pivot_Zn: X_n has more rows than expected");
    return PivotSample{EmpiricalSample(std::move(rows), d_out), rank_rej, domain_rej};
}

// ---------------------------------------------------------------------------
// Sequence study: distances between X_n and the limit X along theta_n.
// ---------------------------------------------------------------------------
struct SequenceRow {
    long long n = 0;
    Vec theta;
    std::size_t reps_used = 0;
    std::size_t rejections = 0;
    DistanceReport dist;  // dudley_1d for scalar outputs, sliced_bl otherwise
    DistanceReport ks;
    Vec xn_quantiles;     // 1%, 5%, 25%, 50%, 75%, 95%, 99% of the first coordinate
};

inline Vec summary_quantiles(const EmpiricalSample& s) {
    const std::vector<double> xs = s.sorted_column(0);
    static const double qs[] = {0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99};
    Vec out;
    out.reserve(7);
    for (double q : qs) {
        const double pos = q * static_cast<double>(xs.size() - 1);
        const std::size_t lo = static_cast<std::size_t>(pos);
        const std::size_t hi = std::min(lo + 1, xs.size() - 1);
        const double f = pos - static_cast<double>(lo);
        out.push_back(xs[lo] + f * (xs[hi] - xs[lo]));
    }
    return out;
}

inline std::vector<SequenceRow> sequence_study(const PhiMap& phi, const ParamSeq& seq,
                                               const SimConfig& cfg,
                                               const DudleyOpts& dudley_opts = {}) {
    cfg.validate();
    std::vector<SequenceRow> rows;
    rows.reserve(cfg.n_list.size());
    for (std::size_t ni = 0; ni < cfg.n_list.size(); ++ni) {
        const long long n = cfg.n_list[ni];
        SequenceRow row;
        row.n = n;
        row.theta = seq.rule(n);
        const Vec mu = seq.family.mu(row.theta);
        const std::uint64_t seed_n = mix_seed(cfg.master_seed, 0x5E9ULL, ni);
        const EmpiricalSample tn = sample_Tn(seq.family, row.theta, n, cfg.reps, seed_n);
        const XnSample xn = build_Xn(phi, tn, mu, cfg.r_rule(n));
        row.rejections = xn.rejections;
        row.reps_used = xn.X.size();
        const EmpiricalSample x_lim = limit_X_from_family(
            phi, seq.family, row.theta, cfg.reps, mix_seed(cfg.master_seed, 0x11FULL, ni));
        if (phi.d_out == 1) {
            DudleyOpts opts = dudley_opts;
            opts.seed = mix_seed(dudley_opts.seed, 0xDD1ULL, ni);
            row.dist = dudley_1d(xn.X, x_lim, opts);
            row.ks = ks_distance(xn.X, x_lim, KsOpts{0, opts.seed});
        } else {
            row.dist = sliced_bl(xn.X, x_lim, 32, mix_seed(cfg.master_seed, 0x5CEULL, ni),
                                 dudley_opts);
            row.ks = ks_distance(EmpiricalSample::from_column(xn.X.column(0)),
                                 EmpiricalSample::from_column(x_lim.column(0)), KsOpts{0, seed_n});
        }
        row.xn_quantiles = summary_quantiles(xn.X);
        rows.push_back(std::move(row));
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Continuous-mapping counterexample (deterministic). psi(x) = 1/x applied to
// X_n = theta and Y_n = X_n + 1/n; values are reported relative to psi(theta)
// (the scale of the limit), where the drifting case theta_n = 1/n pins the
// renormalized images at 1 and 1/2 and the gap at exactly 0.5 for every n.
// ---------------------------------------------------------------------------
struct CmtRow {
    long long n = 0;
    double theta = 0.0;
    double x_n = 0.0, y_n = 0.0;
    double psi_x_rel = 0.0, psi_y_rel = 0.0;
    double gap = 0.0;
};

inline std::vector<CmtRow> cmt_counterexample(const std::vector<long long>& n_list,
                                              std::optional<double> fixed_theta = std::nullopt) {
    if (n_list.empty()) throw EmptyError("cmt_counterexample: empty n list");
    std::vector<CmtRow> rows;
    rows.reserve(n_list.size());
    for (long long n : n_list) {
        if (n < 1) throw Error("cmt_counterexample: n must be at least 1");
        CmtRow r;
        r.n = n;
        const double inv_n = 1.0 / static_cast<double>(n);
        r.theta = fixed_theta ? *fixed_theta : inv_n;
        r.x_n = r.theta;
        r.y_n = r.x_n + inv_n;
        r.psi_x_rel = r.theta / r.x_n;  // psi(X_n) / psi(theta)
        r.psi_y_rel = r.theta / r.y_n;
        r.gap = std::fabs(r.psi_x_rel - r.psi_y_rel);
        rows.push_back(r);
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Confidence-interval study (scalar outputs): per replication,
// CI = phi(T) +- z_{1-alpha/2} |phi'(T)| sigma_hat / sqrt(n), coverage of
// phi(mu(theta_n)) tallied; domain rejections counted.
// ---------------------------------------------------------------------------
struct CiRow {
    long long n = 0;
    Vec theta;
    CoverageReport report;
};

inline std::vector<CiRow> ci_study(const PhiMap& phi, const ParamSeq& seq, const SimConfig& cfg,
                                   double alpha) {
    cfg.validate();
    if (phi.d_out != 1) throw DimensionError("ci_study: requires a scalar phi");
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error("ci_study: alpha must be in (0,1)");
    const double z = normal_quantile(1.0 - alpha / 2.0);
    std::vector<CiRow> rows;
    rows.reserve(cfg.n_list.size());
    for (std::size_t ni = 0; ni < cfg.n_list.size(); ++ni) {
        const long long n = cfg.n_list[ni];
        CiRow row;
        row.n = n;
        row.theta = seq.rule(n);
        const Vec mu = seq.family.mu(row.theta);
        const double truth = eval_phi(phi, mu)[0];
        const TnSample tn =
            sample_Tn_full(seq.family, row.theta, n, cfg.reps, mix_seed(cfg.master_seed, 0xC1ULL, ni));
        if (tn.sigma_hat.size() != tn.T.size())
            throw Error("ci_study: family '" + seq.family.name + "' provides no sigma_hat");
        const double root_n = std::sqrt(static_cast<double>(n));
        std::vector<std::pair<double, double>> intervals;
        intervals.reserve(tn.T.size());
        std::size_t rejections = 0;
        Vec t(tn.T.dim());
        for (std::size_t i = 0; i < tn.T.size(); ++i) {
            for (std::size_t j = 0; j < tn.T.dim(); ++j) t[j] = tn.T.at(i, j);
            if (phi.domain_pred(t) != Region::inside) {
                ++rejections;
                continue;
            }
            try {
                const double center = phi.eval(t)[0];
                const Mat j_t = jacobian(phi, t);
                const double half = z * j_t.row_norm(0) * tn.sigma_hat[i] / root_n;
                intervals.emplace_back(center - half, center + half);
            } catch (const Error&) {
                ++rejections;
            }
        }
        row.report = coverage(intervals, truth);
        row.report.rejections = rejections;
        row.report.meta.add("n", static_cast<long long>(n));
        row.report.meta.add("alpha", alpha);
        row.report.meta.add("z", z);
        row.report.meta.add("truth", truth);
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace unidelta
