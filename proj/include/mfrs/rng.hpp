#pragma once

// Seeded random streams with pinned-down sampling algorithms.
//
// <random>'s distribution objects are implementation-defined (libstdc++ and
// libc++ produce different draws from the same engine state), which would
// break frozen expected values in tests and cross-build reproducibility of
// generated datasets. Raw bits come from std::mt19937_64; the uniform/normal/
// Poisson transforms on top are fixed here:
//   uniform  - 53-bit mantissa mapping, [0, 1)
//   normal   - Box-Muller with a cached second value
//   poisson  - CDF inversion from the uniform stream

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

namespace mfrs {

// SplitMix64 step; used to derive decorrelated substream seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed) : gen_(seed) {}

    // Deterministic (seed, index) -> substream derivation, e.g. one stream
    // per channel so channel generation order is immaterial.
    static RandomStream substream(std::uint64_t seed, std::uint64_t index) {
        std::uint64_t s = seed;
        std::uint64_t mixed = splitmix64(s);
        s = mixed ^ (index + 0x165667b19e3779f9ULL);
        return RandomStream(splitmix64(s));
    }

    std::uint64_t bits() { return gen_(); }

    // Uniform on [0, 1) with 53 random mantissa bits.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; generates pairs, caches the second.
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log1p(-u1));  // log(1-u1), u1 < 1
        const double theta = 2.0 * M_PI * u2;
        cached_ = r * std::sin(theta);
        has_cached_ = true;
        return r * std::cos(theta);
    }

    double normal(double mu, double sigma) { return mu + sigma * normal(); }

    // Poisson via CDF inversion; exact for the moderate intensities used here.
    long long poisson(double lambda) {
        if (lambda < 0.0 || !std::isfinite(lambda)) throw std::invalid_argument("poisson: lambda must be >= 0");
        if (lambda == 0.0) return 0;  // point mass at zero
        if (lambda > 500.0) throw std::invalid_argument("poisson: inversion sampler capped at lambda <= 500");
        const double u = uniform();
        double p = std::exp(-lambda);
        double cdf = p;
        long long k = 0;
        while (u >= cdf) {
            ++k;
            p *= lambda / static_cast<double>(k);
            cdf += p;
            if (k > 100000) break;  // unreachable for sane lambda; guards FP stalls
        }
        return k;
    }

private:
    std::mt19937_64 gen_;
    double cached_{0.0};
    bool has_cached_{false};
};

}  // namespace mfrs
