#pragma once
// Self-contained deterministic RNG.
//
// Monte Carlo runs must be byte-reproducible across runs and across worker
// counts, so we avoid std::<random> distributions (their algorithms are
// implementation-defined) and derive an independent SplitMix64 substream per
// replication from (master seed, stream tag, replication index).

#include <cmath>
#include <cstdint>

#include "common.hpp"

namespace unidelta {

/// Murmur3 64-bit finalizer; bijective mixing of a 64-bit word.
inline std::uint64_t fmix64(std::uint64_t x) {
    x ^= x >> 33;
    x *= 0xff51afd7ed558ccdULL;
    x ^= x >> 33;
    x *= 0xc4ceb9fe1a85ec53ULL;
    x ^= x >> 33;
    return x;
}

/// Stable combination of seed material into a substream seed.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    return fmix64(a ^ (fmix64(b) + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2)));
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    return mix_seed(mix_seed(a, b), c);
}

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform on [0, 1) with 53-bit resolution.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform on (0, 1]; safe as a log() argument.
    double uniform01_open_left() {
        return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Standard normal via Box-Muller; the second deviate of each pair is cached.
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        const double u1 = uniform01_open_left();
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        has_cached_ = true;
        return r * std::cos(a);
    }

    /// Gamma(alpha, 1) via Marsaglia-Tsang squeeze (alpha >= 1), with the
    /// standard boost for alpha < 1.
    double gamma(double alpha) {
        if (!(alpha > 0.0)) throw DomainError("Rng::gamma: alpha must be positive");
        if (alpha < 1.0) {
            const double u = uniform01_open_left();
            return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
        }
        const double d = alpha - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform01_open_left();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    /// Chi-squared with k degrees of freedom (k = 1 uses the exact Z^2 form).
    double chi2(double k) {
        if (k == 1.0) {
            const double z = normal();
            return z * z;
        }
        return 2.0 * gamma(0.5 * k);
    }

    /// Binomial(n, p) by direct bit counting: exact and branch-simple. p = 1/2
    /// reduces to popcount over words; other p compare each 64-bit draw to a
    /// fixed threshold. Cost is O(n/64) resp. O(n) per draw.
    long long binomial(long long n, double p) {
        if (n < 0 || !(p >= 0.0 && p <= 1.0)) throw DomainError("Rng::binomial: bad arguments");
        if (p == 0.0) return 0;
        if (p == 1.0) return n;
        long long count = 0;
        if (p == 0.5) {
            long long full = n / 64, rest = n % 64;
            for (long long w = 0; w < full; ++w) count += __builtin_popcountll(next_u64());
            if (rest > 0) count += __builtin_popcountll(next_u64() >> (64 - rest));
            return count;
        }
        // threshold = floor(p * 2^64) without overflow at p = 1 (excluded above)
        const double scaled = p * 18446744073709551616.0;
        const std::uint64_t threshold =
            scaled >= 18446744073709551615.0 ? ~0ULL : static_cast<std::uint64_t>(scaled);
        for (long long i = 0; i < n; ++i)
            if (next_u64() < threshold) ++count;
        return count;
    }

  private:
    std::uint64_t state_;
    bool has_cached_ = false;
    double cached_ = 0.0;
};

}  // namespace unidelta
