#pragma once

// Compose synthetic benchmarks: a deterministic sum of sinusoids plus a
// stationary random signal with known parameters, so forecasts can be
// compared against closed-form optimal metrics.

#include "mfrs/rng.hpp"
#include "mfrs/series.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfrs {

enum class NoiseFamily { gaussian, poisson };

struct NoiseSpec {
    NoiseFamily family{NoiseFamily::gaussian};
    double mu{0.0};      // gaussian mean
    double sigma{1.0};   // gaussian standard deviation, >= 0
    double lambda{1.0};  // poisson intensity, > 0

    static NoiseSpec gaussian(double mu, double sigma) { return {NoiseFamily::gaussian, mu, sigma, 1.0}; }
    static NoiseSpec poisson(double lambda) { return {NoiseFamily::poisson, 0.0, 1.0, lambda}; }
};

inline void validate_noise(const NoiseSpec& n) {
    if (n.family == NoiseFamily::gaussian) {
        if (!std::isfinite(n.mu) || !std::isfinite(n.sigma) || n.sigma < 0.0)
            throw std::invalid_argument("noise: gaussian needs finite mu and sigma >= 0");
    } else {
        if (!std::isfinite(n.lambda) || n.lambda <= 0.0)
            throw std::invalid_argument("noise: poisson needs lambda > 0");
    }
}

struct ComposeSpec {
    std::vector<Index> periods{72, 36, 24, 18};
    Index channels{4};
    Index length{-1};  // -1: 20 * lcm(periods), capped at 100000
    NoiseSpec noise;
    std::uint64_t seed{0};
    // Optional explicit amplitudes, one row per channel, one entry per
    // period. Empty: drawn per channel from seeded uniform [0.5, 2].
    std::vector<std::vector<double>> amplitudes;
};

inline Index periods_lcm(const std::vector<Index>& periods) {
    Index l = 1;
    for (Index p : periods) l = std::lcm(l, p);
    return l;
}

inline Index resolve_length(const ComposeSpec& spec) {
    if (spec.length >= 0) return spec.length;
    return std::min<Index>(20 * periods_lcm(spec.periods), 100000);
}

inline void validate_compose_spec(const ComposeSpec& spec) {
    if (spec.periods.empty()) throw std::invalid_argument("compose spec: need at least one period");
    for (Index p : spec.periods)
        if (p < 1) throw std::invalid_argument("compose spec: periods must be positive integers");
    if (spec.channels < 1) throw std::invalid_argument("compose spec: need at least one channel");
    if (resolve_length(spec) < 2) throw std::invalid_argument("compose spec: length must be >= 2");
    validate_noise(spec.noise);
    if (!spec.amplitudes.empty()) {
        if (static_cast<Index>(spec.amplitudes.size()) != spec.channels)
            throw std::invalid_argument("compose spec: amplitudes need one row per channel");
        for (const auto& row : spec.amplitudes) {
            if (row.size() != spec.periods.size())
                throw std::invalid_argument("compose spec: each amplitude row needs one entry per period");
            for (double a : row)
                if (!std::isfinite(a)) throw std::invalid_argument("compose spec: amplitudes must be finite");
        }
    }
}

struct ComposeResult {
    MultiSeries x;  // z + u
    MultiSeries z;  // deterministic sum of sinusoids
    MultiSeries u;  // random signal
    std::vector<std::vector<double>> amplitudes;  // as used, per channel
};

// X = Z + U elementwise. Sinusoid phases are computed from t mod T so Z is
// bit-exactly periodic with period lcm(periods). Each channel draws its
// amplitudes and noise from its own derived substreams, so the result does
// not depend on channel evaluation order.
inline ComposeResult generate_compose(const ComposeSpec& spec) {
    validate_compose_spec(spec);
    const Index L = resolve_length(spec);
    const Index C = spec.channels;
    const size_t K = spec.periods.size();

    ComposeResult out;
    out.z.values.resize(L, C);
    out.u.values.resize(L, C);
    out.amplitudes.resize(static_cast<size_t>(C));

    for (Index c = 0; c < C; ++c) {
        auto& amps = out.amplitudes[static_cast<size_t>(c)];
        if (spec.amplitudes.empty()) {
            RandomStream amp_rng = RandomStream::substream(spec.seed, 2 * static_cast<std::uint64_t>(c));
            amps.resize(K);
            for (double& a : amps) a = amp_rng.uniform(0.5, 2.0);
        } else {
            amps = spec.amplitudes[static_cast<size_t>(c)];
        }

        for (Index t = 0; t < L; ++t) {
            double z = 0.0;
            for (size_t k = 0; k < K; ++k) {
                const Index T = spec.periods[k];
                const double phase =
                    2.0 * std::numbers::pi * static_cast<double>(t % T) / static_cast<double>(T);
                z += amps[k] * std::sin(phase);
            }
            out.z.values(t, c) = z;
        }

        RandomStream noise_rng = RandomStream::substream(spec.seed, 2 * static_cast<std::uint64_t>(c) + 1);
        if (spec.noise.family == NoiseFamily::gaussian) {
            for (Index t = 0; t < L; ++t)
                out.u.values(t, c) = spec.noise.sigma * noise_rng.normal() + spec.noise.mu;
        } else {
            for (Index t = 0; t < L; ++t)
                out.u.values(t, c) = static_cast<double>(noise_rng.poisson(spec.noise.lambda));
        }
    }

    out.x.values = out.z.values + out.u.values;
    for (auto* s : {&out.x, &out.z, &out.u}) {
        s->channel_names.resize(static_cast<size_t>(C));
        for (Index c = 0; c < C; ++c) s->channel_names[static_cast<size_t>(c)] = "ch" + std::to_string(c);
    }
    return out;
}

// Named presets: 1 = short periods + gaussian, 2 = long periods + gaussian,
// 3 = short periods + poisson, 4 = long periods + poisson. The source table
// for family 4 lists the noise term twice; it is read as the deterministic
// long-period signal plus poisson noise, completing the 2x2 grid.
inline ComposeSpec compose_preset(int family, const NoiseSpec& noise, std::uint64_t seed) {
    if (family < 1 || family > 4) throw std::invalid_argument("compose family must be 1..4");
    ComposeSpec spec;
    spec.periods = (family == 1 || family == 3) ? std::vector<Index>{72, 36, 24, 18}
                                                : std::vector<Index>{720, 360, 240, 180};
    const bool wants_gaussian = (family <= 2);
    if (wants_gaussian != (noise.family == NoiseFamily::gaussian))
        throw std::invalid_argument(std::string("compose") + std::to_string(family) + " takes " +
                                    (wants_gaussian ? "gaussian" : "poisson") + " noise");
    spec.noise = noise;
    spec.seed = seed;
    return spec;
}

// ---------------------------------------------------------------------------
// Closed-form optimal metrics

struct OptimalMetrics {
    NoiseFamily family{NoiseFamily::gaussian};
    double mse_opt{0.0};
    double mae_opt{0.0};
    // Set when the closed form does not apply (non-integer poisson
    // intensity) and mae_opt was estimated by Monte-Carlo instead.
    bool monte_carlo{false};
    long long mc_samples{0};
    double mc_tolerance{0.0};  // three standard errors of the estimate
};

// The best possible forecaster predicts Z + E(U); its residual is U - E(U).
//   gaussian: mse = sigma^2, mae = sqrt(2/pi) * sigma
//   poisson (integer lambda): mse = lambda,
//       mae = 2 e^{-lambda} * sum_{k=0}^{lambda-1} (lambda - k) lambda^k / k!
inline OptimalMetrics optimal_metrics(const NoiseSpec& noise, std::uint64_t mc_seed = 0x6f7074) {
    validate_noise(noise);
    OptimalMetrics m;
    m.family = noise.family;
    if (noise.family == NoiseFamily::gaussian) {
        m.mse_opt = noise.sigma * noise.sigma;
        m.mae_opt = std::sqrt(2.0 / std::numbers::pi) * noise.sigma;
        return m;
    }
    m.mse_opt = noise.lambda;
    const double rounded = std::round(noise.lambda);
    if (std::abs(noise.lambda - rounded) < 1e-12 && rounded >= 1.0) {
        const auto lam_int = static_cast<long long>(rounded);
        const double lam = noise.lambda;
        double sum = 0.0, pow_term = 1.0, fact = 1.0;  // lambda^k / k!, k = 0 upward
        for (long long k = 0; k < lam_int; ++k) {
            if (k > 0) {
                pow_term *= lam;
                fact *= static_cast<double>(k);
            }
            sum += (lam - static_cast<double>(k)) * pow_term / fact;
        }
        m.mae_opt = 2.0 * std::exp(-lam) * sum;
        return m;
    }
    // Non-integer intensity: Monte-Carlo estimate of E|U - lambda|.
    constexpr long long n = 1000000;
    RandomStream rng = RandomStream::substream(mc_seed, 0x6d6165);
    double acc = 0.0, acc2 = 0.0;
    for (long long i = 0; i < n; ++i) {
        const double dev = std::abs(static_cast<double>(rng.poisson(noise.lambda)) - noise.lambda);
        acc += dev;
        acc2 += dev * dev;
    }
    const double mean = acc / static_cast<double>(n);
    const double var = std::max(0.0, acc2 / static_cast<double>(n) - mean * mean);
    m.mae_opt = mean;
    m.monte_carlo = true;
    m.mc_samples = n;
    m.mc_tolerance = 3.0 * std::sqrt(var / static_cast<double>(n));
    return m;
}

// ---------------------------------------------------------------------------
// Optimal-prediction oracle

struct PredictionCheckPoint {
    double offset{0.0};  // prediction = E(U) + offset
    double mse{0.0};
};

struct PredictionCheckReport {
    std::vector<PredictionCheckPoint> grid;
    double best_offset{0.0};       // grid argmin
    double grid_step{0.0};
    double mse_at_mean{0.0};       // empirical MSE when predicting E(U)
    double variance{0.0};          // Var(U) from the noise parameters
    double three_se{0.0};          // 3 standard errors of mse_at_mean
    bool mean_is_best{false};      // argmin lands on offset 0
    bool mse_matches_variance{false};
};

// Empirically verifies that predicting the expectation minimizes MSE: draws
// `samples` values of U and scans a symmetric grid of constant predictions
// E(U) + offset. The MSE at offset zero must match Var(U) within three
// standard errors, and no other grid point may beat it.
inline PredictionCheckReport optimal_prediction_check(const NoiseSpec& noise, long long samples,
                                                      std::uint64_t seed = 0x636865) {
    validate_noise(noise);
    if (samples < 10000) throw std::invalid_argument("optimal_prediction_check: need at least 10^4 samples");

    double mean_true, var_true;
    if (noise.family == NoiseFamily::gaussian) {
        mean_true = noise.mu;
        var_true = noise.sigma * noise.sigma;
    } else {
        mean_true = noise.lambda;
        var_true = noise.lambda;
    }

    std::vector<double> u(static_cast<size_t>(samples));
    RandomStream rng = RandomStream::substream(seed, 0x752d753);
    if (noise.family == NoiseFamily::gaussian)
        for (auto& v : u) v = noise.sigma * rng.normal() + noise.mu;
    else
        for (auto& v : u) v = static_cast<double>(rng.poisson(noise.lambda));

    PredictionCheckReport report;
    report.variance = var_true;
    report.grid_step = 0.25 * std::max(1.0, std::sqrt(var_true));
    double best = std::numeric_limits<double>::infinity();
    for (int i = -8; i <= 8; ++i) {
        const double offset = static_cast<double>(i) * report.grid_step;
        const double pred = mean_true + offset;
        double acc = 0.0;
        for (double v : u) acc += (v - pred) * (v - pred);
        const double mse = acc / static_cast<double>(samples);
        report.grid.push_back({offset, mse});
        if (mse < best) {
            best = mse;
            report.best_offset = offset;
        }
        if (i == 0) {
            report.mse_at_mean = mse;
            double acc2 = 0.0;
            for (double v : u) {
                const double sq = (v - pred) * (v - pred);
                acc2 += (sq - mse) * (sq - mse);
            }
            report.three_se = 3.0 * std::sqrt(acc2 / static_cast<double>(samples) / static_cast<double>(samples));
        }
    }
    report.mean_is_best = (report.best_offset == 0.0);
    report.mse_matches_variance = std::abs(report.mse_at_mean - var_true) <= report.three_se;
    return report;
}

}  // namespace mfrs
