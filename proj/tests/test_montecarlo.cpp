// Unit tests for the simulation layer: exact family samplers, deviation
// construction, limit draws, studentized pivots, sequence studies, the
// continuous-mapping counterexample, and interval coverage.

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "unidelta/exprlang.hpp"
#include "unidelta/montecarlo.hpp"

using namespace unidelta;
using Catch::Approx;

namespace {

double sample_mean(const std::vector<double>& xs) {
    double acc = 0.0;
    for (double x : xs) acc += x;
    return acc / static_cast<double>(xs.size());
}

double sample_sd(const std::vector<double>& xs) {
    const double m = sample_mean(xs);
    double acc = 0.0;
    for (double x : xs) acc += (x - m) * (x - m);
    return std::sqrt(acc / static_cast<double>(xs.size() - 1));
}

double quantile_of(std::vector<double> xs, double q) {
    std::sort(xs.begin(), xs.end());
    const double pos = q * static_cast<double>(xs.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, xs.size() - 1);
    return xs[lo] + (pos - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

double ks_to_normal(const EmpiricalSample& s, double mean, double sd) {
    return ks_distance(s, [=](double x) { return normal_cdf((x - mean) / sd); }, KsOpts{0, 1})
        .value;
}

double chi2_1_cdf(double x) { return x <= 0.0 ? 0.0 : std::erf(std::sqrt(0.5 * x)); }

}  // namespace

TEST_CASE("sampler input validation", "[montecarlo]") {
    const ParamFamily f = families::normal1();
    REQUIRE_THROWS_AS(sample_Tn(f, {0.0, 1.0}, 10, 1, 1), EmptyError);    // reps < 2
    REQUIRE_THROWS_AS(sample_Tn(f, {0.0, 1.0}, 0, 100, 1), Error);        // n < 1
    REQUIRE_THROWS_AS(sample_Tn(f, {0.0}, 10, 100, 1), DimensionError);   // theta dim
    REQUIRE_THROWS_AS(sample_Tn(f, {0.0, -1.0}, 10, 100, 1), DomainError);

    const ParamFamily iv = families::weakiv();
    REQUIRE_THROWS_AS(sample_Tn(iv, {0.5, 1.0, 2.0, 1.0, 1.0}, 10, 100, 1), DomainError);

    SimConfig cfg;
    cfg.n_list = {};
    REQUIRE_THROWS_AS(cfg.validate(), EmptyError);
    cfg.n_list = {100, 100};
    REQUIRE_THROWS_AS(cfg.validate(), Error);
    cfg.n_list = {100, 1000};
    cfg.reps = 1;
    REQUIRE_THROWS_AS(cfg.validate(), EmptyError);
    cfg.reps = 100;
    REQUIRE_NOTHROW(cfg.validate());
    REQUIRE(cfg.r_rule(25) == Approx(5.0));  // default rate sqrt(n)
}

TEST_CASE("scalar normal family draws its exact law", "[montecarlo]") {
    const ParamFamily f = families::normal1();
    REQUIRE(f.exact_shortcut);
    const TnSample full = sample_Tn_full(f, {0.3, 2.0}, 16, 20000, 42);
    REQUIRE(full.rejections == 0);
    REQUIRE(full.T.size() == 20000);
    REQUIRE(full.sigma_hat.size() == 20000);

    const auto t = full.T.column(0);
    REQUIRE(sample_mean(t) == Approx(0.3).margin(0.015));  // sd/sqrt(reps) = 0.0035
    REQUIRE(sample_sd(t) == Approx(0.5).epsilon(0.05));    // sd 2 / sqrt(n=16)
    REQUIRE(ks_to_normal(full.T, 0.3, 0.5) < 0.02);

    // sample-sd draws follow sd * sqrt(chi2_{15}/15): mean ~ 2 (1 - 1/60)
    REQUIRE(sample_mean(full.sigma_hat) == Approx(2.0 * (1.0 - 1.0 / 60.0)).margin(0.02));
    for (double s : full.sigma_hat) REQUIRE(s > 0.0);
}

TEST_CASE("bernoulli mean lives on the lattice and normalizes", "[montecarlo]") {
    const ParamFamily f = families::bernoulli();
    const long long n = 10000;
    const TnSample full = sample_Tn_full(f, {0.3}, n, 20000, 43);
    const auto t = full.T.column(0);
    for (std::size_t i = 0; i < 100; ++i) {
        const double scaled = t[i] * static_cast<double>(n);
        REQUIRE(std::fabs(scaled - std::round(scaled)) < 1e-9);
    }
    // standardized draws approach the normal limit
    std::vector<double> z(t.size());
    const double sd = std::sqrt(0.3 * 0.7 / static_cast<double>(n));
    for (std::size_t i = 0; i < t.size(); ++i) z[i] = (t[i] - 0.3) / sd;
    REQUIRE(ks_to_normal(EmpiricalSample::from_column(z), 0.0, 1.0) < 0.02);
    // per-draw plug-in sd
    REQUIRE(full.sigma_hat[0] == Approx(std::sqrt(t[0] * (1.0 - t[0]))));
}

TEST_CASE("chi-squared location family has a non-normal limit deviation", "[montecarlo]") {
    const ParamFamily f = families::chi2_mean();
    const TnSample full = sample_Tn_full(f, {2.0}, 25, 20000, 44);
    const auto t = full.T.column(0);
    for (double x : t) REQUIRE(x >= 2.0);  // mu + chi2/sqrt(n) never undershoots
    REQUIRE(sample_mean(t) == Approx(2.0 + 1.0 / 5.0).margin(0.01));

    const EmpiricalSample s = f.limit_s_sampler({2.0}, 20000, 45);
    REQUIRE(ks_distance(s, chi2_1_cdf, KsOpts{0, 1}).value < 0.02);
}

TEST_CASE("weak-instrument reduced form matches its moment algebra", "[montecarlo]") {
    // Var(ZD) = 2 pi^2 + sv^2, Cov = beta Var(ZD) + rho su sv,
    // Var(ZY) = beta^2 Var(ZD) + su^2 + 2 beta rho su sv
    const Mat sigma = families::weakiv_sigma(0.5, 1.0, 0.9, 1.0, 1.0);
    REQUIRE(sigma(1, 1) == Approx(3.0));
    REQUIRE(sigma(0, 1) == Approx(0.5 * 3.0 + 0.9));
    REQUIRE(sigma(1, 0) == Approx(sigma(0, 1)));
    REQUIRE(sigma(0, 0) == Approx(0.25 * 3.0 + 1.0 + 2.0 * 0.5 * 0.9));

    const Vec theta = {0.5, 1.0, 0.9, 1.0, 1.0};
    const ParamFamily exact = families::weakiv();
    const ParamFamily prim = families::weakiv_primitive();
    REQUIRE(exact.exact_shortcut);
    REQUIRE_FALSE(prim.exact_shortcut);
    const Vec mu = exact.mu(theta);
    REQUIRE(mu[0] == Approx(0.5));  // beta * pi
    REQUIRE(mu[1] == Approx(1.0));  // pi

    const long long n = 300;
    const std::size_t reps = 6000;
    const EmpiricalSample a = sample_Tn(exact, theta, n, reps, 46);
    const EmpiricalSample b = sample_Tn(prim, theta, n, reps, 47);
    const double root_n = std::sqrt(static_cast<double>(n));
    for (int k = 0; k < 2; ++k) {
        const double sd_k = std::sqrt(sigma(static_cast<std::size_t>(k),
                                            static_cast<std::size_t>(k))) / root_n;
        const double tol = 5.0 * sd_k / std::sqrt(static_cast<double>(reps));
        REQUIRE(sample_mean(a.column(static_cast<std::size_t>(k))) ==
                Approx(mu[static_cast<std::size_t>(k)]).margin(tol));
        REQUIRE(sample_mean(b.column(static_cast<std::size_t>(k))) ==
                Approx(mu[static_cast<std::size_t>(k)]).margin(3.0 * tol));
    }
    // scaled covariances agree with the closed form for both samplers
    const auto cov_entry = [&](const EmpiricalSample& s, int i, int j) {
        const auto ci = s.column(static_cast<std::size_t>(i));
        const auto cj = s.column(static_cast<std::size_t>(j));
        const double mi = sample_mean(ci), mj = sample_mean(cj);
        double acc = 0.0;
        for (std::size_t r = 0; r < ci.size(); ++r) acc += (ci[r] - mi) * (cj[r] - mj);
        return acc / static_cast<double>(ci.size() - 1) * static_cast<double>(n);
    };
    for (const auto* s : {&a, &b}) {
        REQUIRE(cov_entry(*s, 0, 0) == Approx(sigma(0, 0)).epsilon(0.15));
        REQUIRE(cov_entry(*s, 1, 1) == Approx(sigma(1, 1)).epsilon(0.15));
        REQUIRE(cov_entry(*s, 0, 1) == Approx(sigma(0, 1)).epsilon(0.25));
    }
}

TEST_CASE("deviation construction is the advertised formula per draw", "[montecarlo]") {
    const ParamFamily f = families::normal1();
    const EmpiricalSample tn = sample_Tn(f, {1.0, 1.0}, 100, 1000, 48);
    const XnSample xn = build_Xn(builtin("reciprocal"), tn, {1.0}, 10.0);
    REQUIRE(xn.rejections == 0);
    REQUIRE(xn.X.size() == 1000);
    for (std::size_t i = 0; i < 50; ++i) {
        const double t = tn.at(i, 0);
        // E(mu) = 1/|D(mu)| = 1 at mu = 1, so X = r (phi(T) - phi(mu))
        REQUIRE(xn.X.at(i, 0) == Approx(10.0 * (1.0 / t - 1.0)).margin(1e-12));
    }
}

TEST_CASE("deviation construction drops and counts out-of-domain draws", "[montecarlo]") {
    const ParamFamily f = families::normal1();
    const std::size_t reps = 20000;
    const EmpiricalSample tn = sample_Tn(f, {0.25, 1.0}, 4, reps, 49);
    const XnSample xn = build_Xn(builtin("sqrt"), tn, {0.25}, 2.0);
    REQUIRE(xn.X.size() + xn.rejections == reps);
    // P(T <= 0) = Phi(-0.5) ~ 0.3085 at T ~ N(0.25, 0.25)
    const double frac = static_cast<double>(xn.rejections) / static_cast<double>(reps);
    REQUIRE(frac == Approx(normal_cdf(-0.5)).margin(0.02));

    REQUIRE_THROWS_AS(build_Xn(builtin("iv_ratio"), tn, {1.0, 1.0}, 2.0), DimensionError);
}

TEST_CASE("limit draws flow through the normalized Jacobian", "[montecarlo]") {
    // square at mu = 2: D = 4, E = 1/4, ED = 1, so X ~ N(0, sigma(0,0))
    Mat sigma(1, 1);
    sigma(0, 0) = 4.0;
    const EmpiricalSample x = sample_limit_X(builtin("square"), {2.0}, sigma, 20000, 50);
    REQUIRE(ks_to_normal(x, 0.0, 2.0) < 0.02);

    Mat zero(1, 1);
    const EmpiricalSample at_zero = sample_limit_X(builtin("square"), {2.0}, zero, 100, 51);
    for (std::size_t i = 0; i < at_zero.size(); ++i) REQUIRE(at_zero.at(i, 0) == 0.0);

    Mat neg(1, 1);
    neg(0, 0) = -1.0;
    REQUIRE_THROWS_AS(sample_limit_X(builtin("square"), {2.0}, neg, 100, 52), NotPSDError);
    REQUIRE_THROWS_AS(sample_limit_X(builtin("square"), {2.0}, sigma, 0, 53), EmptyError);

    // ratio at mu = (0, 1): the first limit coordinate passes through untouched
    const EmpiricalSample r =
        sample_limit_X(builtin("iv_ratio"), {0.0, 1.0}, Mat::identity(2), 20000, 54);
    REQUIRE(ks_to_normal(r, 0.0, 1.0) < 0.02);

    // a non-normal family limit survives the plumbing: chi2 deviation through
    // the square root at mu = 1 has ED = 1, so X ~ chi2_1
    const EmpiricalSample c = limit_X_from_family(builtin("sqrt"), families::chi2_mean(),
                                                  {1.0}, 20000, 55);
    REQUIRE(ks_distance(c, chi2_1_cdf, KsOpts{0, 1}).value < 0.02);
}

TEST_CASE("studentized pivot with the true variance is standard normal", "[montecarlo]") {
    const PhiMap affine = compile_phi({"1 + 2*t1"});
    const ParamFamily f = families::normal1();
    const Vec theta = {0.5, 1.3};
    const long long n = 64;
    const std::size_t reps = 20000;
    const TnSample full = sample_Tn_full(f, theta, n, reps, 56);
    const double r_n = std::sqrt(static_cast<double>(n));
    const XnSample xn = build_Xn(affine, full.T, {0.5}, r_n);

    Mat pooled(1, 1);
    pooled(0, 0) = 1.3 * 1.3;
    const PivotSample exact = pivot_Zn(affine, full.T, SigmaHat::Pooled(pooled), xn.X, {0.5});
    REQUIRE(exact.rank_rejections == 0);
    REQUIRE(exact.domain_rejections == 0);
    REQUIRE(exact.Z.size() == reps);
    REQUIRE(ks_to_normal(exact.Z, 0.0, 1.0) < 0.02);

    // plugging the per-draw sample sd thickens the tails (a t distribution),
    // still within a loose band at n = 64
    const PivotSample studentized =
        pivot_Zn(affine, full.T, SigmaHat::PerDrawSd(full.sigma_hat), xn.X, {0.5});
    REQUIRE(ks_to_normal(studentized.Z, 0.0, 1.0) < 0.03);

    SigmaHat empty;
    REQUIRE_THROWS_AS(pivot_Zn(affine, full.T, empty, xn.X, {0.5}), Error);
    std::vector<double> short_sd(reps - 1, 1.0);
    REQUIRE_THROWS_AS(
        pivot_Zn(affine, full.T, SigmaHat::PerDrawSd(short_sd), xn.X, {0.5}),
        DimensionError);
}

TEST_CASE("studentized pivot detects the drifting anchor", "[montecarlo]") {
    // reciprocal at mu_n = 1/sqrt(n): the pivot converges to -Z(1+Z), not N(0,1)
    const ParamFamily f = families::normal1();
    const long long n = 100;
    const std::size_t reps = 20000;
    const Vec theta = {0.1, 1.0};
    const EmpiricalSample tn = sample_Tn(f, theta, n, reps, 57);
    const XnSample xn = build_Xn(builtin("reciprocal"), tn, {0.1}, 10.0);
    Mat pooled(1, 1);
    pooled(0, 0) = 1.0;
    const PivotSample drift =
        pivot_Zn(builtin("reciprocal"), tn, SigmaHat::Pooled(pooled), xn.X, {0.1});
    REQUIRE(ks_to_normal(drift.Z, 0.0, 1.0) > 0.1);

    // sanity: the same machinery at a fixed anchor mu = 1 is nearly normal
    const EmpiricalSample tn_fix = sample_Tn(f, {1.0, 1.0}, 10000, reps, 58);
    const XnSample xn_fix = build_Xn(builtin("reciprocal"), tn_fix, {1.0}, 100.0);
    const PivotSample fixed =
        pivot_Zn(builtin("reciprocal"), tn_fix, SigmaHat::Pooled(pooled), xn_fix.X, {1.0});
    REQUIRE(ks_to_normal(fixed.Z, 0.0, 1.0) < 0.02);
}

TEST_CASE("sequence study rows are structurally consistent", "[montecarlo]") {
    ParamSeq seq;
    seq.family = families::normal1();
    seq.rule = [](long long n) {
        const double dn = static_cast<double>(n);
        return Vec{1.0 / std::sqrt(dn) + 1.0 / dn, 1.0};
    };
    seq.label = "reciprocal-drift";
    SimConfig cfg;
    cfg.master_seed = 314159;
    cfg.reps = 5000;
    cfg.n_list = {100, 10000};
    const auto rows = sequence_study(builtin("reciprocal"), seq, cfg);
    REQUIRE(rows.size() == 2);
    for (const auto& row : rows) {
        INFO("n=" << row.n);
        REQUIRE(row.reps_used + row.rejections == cfg.reps);
        REQUIRE(row.dist.metric == "dudley_1d");
        REQUIRE(row.ks.metric == "ks");
        REQUIRE(row.xn_quantiles.size() == 7);
        REQUIRE(std::is_sorted(row.xn_quantiles.begin(), row.xn_quantiles.end()));
        // the drifting anchor keeps X_n bounded away from its naive limit
        REQUIRE(row.dist.value >= 0.05);
    }

    // identical configuration reproduces identical numbers
    const auto again = sequence_study(builtin("reciprocal"), seq, cfg);
    REQUIRE(again[0].dist.value == rows[0].dist.value);
    REQUIRE(again[1].ks.value == rows[1].ks.value);
}

TEST_CASE("square transform under a 1/n anchor also refuses to settle", "[montecarlo]") {
    ParamSeq seq;
    seq.family = families::normal1();
    seq.rule = [](long long n) { return Vec{1.0 / static_cast<double>(n), 1.0}; };
    seq.label = "square-drift";
    SimConfig cfg;
    cfg.master_seed = 271828;
    cfg.reps = 5000;
    cfg.n_list = {100, 10000};
    const auto rows = sequence_study(builtin("square"), seq, cfg);
    REQUIRE(rows[0].dist.value >= 0.05);
    REQUIRE(rows[1].dist.value >= 0.05);
    REQUIRE(rows[1].dist.value >= rows[0].dist.value);  // the gap widens with n
}

TEST_CASE("fixed anchors let the deviation law converge", "[montecarlo]") {
    ParamSeq seq;
    seq.family = families::normal1();
    seq.rule = [](long long) { return Vec{1.0, 1.0}; };
    seq.label = "reciprocal-fixed";

    // two-sample KS against the limit shrinks from n = 100 to n = 10000
    SimConfig cfg;
    cfg.master_seed = 161803;
    cfg.reps = 20000;
    cfg.n_list = {100, 10000};
    const auto rows = sequence_study(builtin("reciprocal"), seq, cfg);
    REQUIRE(rows[1].ks.value < rows[0].ks.value);
    REQUIRE(rows[1].ks.value < 0.03);

    // the bounded-Lipschitz distance needs a higher subsample cap before its
    // own noise floor stops masking the decrease; compare seed-wise medians
    DudleyOpts wide;
    wide.cap = 4096;
    wide.bootstrap = 0;
    SimConfig small = cfg;
    small.reps = 4000;
    std::vector<double> at_small, at_large;
    for (std::uint64_t s = 0; s < 10; ++s) {
        small.master_seed = mix_seed(1000, s);
        const auto r = sequence_study(builtin("reciprocal"), seq, small, wide);
        at_small.push_back(r[0].dist.value);
        at_large.push_back(r[1].dist.value);
    }
    std::sort(at_small.begin(), at_small.end());
    std::sort(at_large.begin(), at_large.end());
    REQUIRE(at_large[5] < at_small[5]);
}

TEST_CASE("deviation scale stays tight across the catalog", "[montecarlo]") {
    struct Probe {
        ParamFamily family;
        Vec theta;
    };
    const std::vector<Probe> probes = {
        {families::normal1(), {0.0, 1.0}},
        {families::normal2(), {0.5, -0.5}},
        {families::bernoulli(), {0.5}},
        {families::chi2_mean(), {1.0}},
        {families::weakiv(), {2.0, 0.5, -0.5, 1.0, 2.0}},
    };
    const long long n = 400;
    for (const auto& probe : probes) {
        INFO(probe.family.name);
        const EmpiricalSample t = sample_Tn(probe.family, probe.theta, n, 20000, 59);
        const Vec mu = probe.family.mu(probe.theta);
        std::vector<double> norms(t.size());
        for (std::size_t i = 0; i < t.size(); ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < t.dim(); ++j) {
                const double s = std::sqrt(static_cast<double>(n)) * (t.at(i, j) - mu[j]);
                acc += s * s;
            }
            norms[i] = std::sqrt(acc);
        }
        REQUIRE(quantile_of(norms, 0.999) <= probe.family.tightness_bound);
    }
}

TEST_CASE("continuous-mapping counterexample table", "[montecarlo]") {
    const auto rows = cmt_counterexample({1, 10, 100, 1000000});
    REQUIRE(rows.size() == 4);
    for (const auto& r : rows) {
        INFO("n=" << r.n);
        REQUIRE(r.psi_x_rel == 1.0);   // exact: theta / theta
        REQUIRE(r.psi_y_rel == 0.5);   // exact: theta / (2 theta)
        REQUIRE(r.gap == 0.5);         // the gap never closes
        REQUIRE(r.y_n == Approx(2.0 * r.theta));
    }

    const auto fixed = cmt_counterexample({10, 100, 1000}, 3.0);
    for (std::size_t i = 0; i < fixed.size(); ++i) {
        const double n = static_cast<double>(fixed[i].n);
        REQUIRE(fixed[i].gap == Approx((1.0 / n) / (3.0 + 1.0 / n)));
        if (i > 0) REQUIRE(fixed[i].gap < fixed[i - 1].gap);
    }

    REQUIRE_THROWS_AS(cmt_counterexample({}), EmptyError);
    REQUIRE_THROWS_AS(cmt_counterexample({0}), Error);
}

TEST_CASE("interval coverage through a smooth affine image", "[montecarlo]") {
    const PhiMap affine = compile_phi({"1 + 2*t1"});
    ParamSeq seq;
    seq.family = families::normal1();
    seq.rule = [](long long) { return Vec{0.5, 1.0}; };
    seq.label = "affine-fixed";
    SimConfig cfg;
    cfg.master_seed = 112358;
    cfg.reps = 20000;
    cfg.n_list = {100};
    const auto rows = ci_study(affine, seq, cfg, 0.05);
    REQUIRE(rows.size() == 1);
    REQUIRE(rows[0].n == 100);
    const CoverageReport& rep = rows[0].report;
    REQUIRE(rep.reps == 20000);
    REQUIRE(rep.rejections == 0);
    // sample-sd intervals at n = 100 sit slightly below the nominal level
    REQUIRE(rep.rate > 0.93);
    REQUIRE(rep.rate < 0.962);
    REQUIRE(rep.stderr_ > 0.0);

    REQUIRE_THROWS_AS(ci_study(affine, seq, cfg, 1.5), Error);
    const PhiMap two = compile_phi({"t1", "t1*2"});
    REQUIRE_THROWS_AS(ci_study(two, seq, cfg, 0.05), DimensionError);
}

TEST_CASE("summary quantiles interpolate the sorted draws", "[montecarlo]") {
    std::vector<double> xs(101);
    for (std::size_t i = 0; i < xs.size(); ++i) xs[i] = static_cast<double>(i + 1);
    const Vec q = summary_quantiles(EmpiricalSample::from_column(xs));
    REQUIRE(q.size() == 7);
    REQUIRE(q[0] == Approx(2.0));    // 1% of 1..101
    REQUIRE(q[3] == Approx(51.0));   // median
    REQUIRE(q[6] == Approx(100.0));  // 99%
    REQUIRE(std::is_sorted(q.begin(), q.end()));
}
