#include <doctest.h>

#include "mfrs/rng.hpp"
#include "mfrs/spectral.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

using namespace mfrs;

namespace {

// O(L^2) reference DFT on the mean-subtracted signal; returns |X_l| for all
// l in [0, L-1]. Slow but independent of any FFT library.
std::vector<double> direct_dft_magnitudes(const Eigen::VectorXd& x) {
    const Eigen::Index L = x.size();
    const double mean = x.mean();
    std::vector<double> mags(static_cast<size_t>(L));
    for (Eigen::Index l = 0; l < L; ++l) {
        std::complex<double> acc(0.0, 0.0);
        for (Eigen::Index t = 0; t < L; ++t) {
            const double angle = -2.0 * std::numbers::pi * static_cast<double>(l) * static_cast<double>(t) /
                                 static_cast<double>(L);
            acc += (x(t) - mean) * std::complex<double>(std::cos(angle), std::sin(angle));
        }
        mags[static_cast<size_t>(l)] = std::abs(acc);
    }
    return mags;
}

Eigen::VectorXd random_signal(Eigen::Index L, std::uint64_t seed) {
    RandomStream rng(seed);
    Eigen::VectorXd x(L);
    for (Eigen::Index t = 0; t < L; ++t) x(t) = rng.uniform(-2.0, 2.0) + 0.3 * rng.normal();
    return x;
}

}  // namespace

TEST_CASE("fft magnitudes match the direct dft elementwise") {
    for (Eigen::Index L : {16, 127, 480, 1024, 2048}) {
        Eigen::VectorXd x = random_signal(L, 1000 + static_cast<std::uint64_t>(L));
        auto oracle = direct_dft_magnitudes(x);
        SpectrumView s = magnitude_spectrum<double>(x);
        REQUIRE(s.length_L == L);
        REQUIRE(s.num_bins() == L / 2 - 1);
        for (Eigen::Index l = 1; l <= s.num_bins(); ++l) {
            const double want = oracle[static_cast<size_t>(l)];
            CHECK(std::abs(s.magnitude(l) - want) <= 1e-8 * (1.0 + want));
        }
    }
}

TEST_CASE("parseval energy identity holds for the direct dft oracle") {
    const Eigen::Index L = 512;
    Eigen::VectorXd x = random_signal(L, 7);
    const double mean = x.mean();
    double time_energy = 0.0;
    for (Eigen::Index t = 0; t < L; ++t) time_energy += (x(t) - mean) * (x(t) - mean);
    auto mags = direct_dft_magnitudes(x);
    double freq_energy = 0.0;
    for (double m : mags) freq_energy += m * m;
    freq_energy /= static_cast<double>(L);
    CHECK(time_energy == doctest::Approx(freq_energy).epsilon(1e-9));
}

TEST_CASE("pure sinusoid concentrates at its bin with magnitude A*L/2") {
    const Eigen::Index L = 1200;
    const Eigen::Index k = 25;  // 25 full cycles -> period 48
    const double A = 1.7;
    Eigen::VectorXd x(L);
    for (Eigen::Index t = 0; t < L; ++t)
        x(t) = 5.0 + A * std::sin(2.0 * std::numbers::pi * static_cast<double>(k) * static_cast<double>(t) /
                                  static_cast<double>(L));
    SpectrumView s = magnitude_spectrum<double>(x);
    CHECK(s.magnitude(k) == doctest::Approx(A * static_cast<double>(L) / 2.0).epsilon(1e-9));
    for (Eigen::Index l = 1; l <= s.num_bins(); ++l) {
        if (l == k) continue;
        CHECK(s.magnitude(l) <= 1e-7 * A * static_cast<double>(L));
    }
}

TEST_CASE("mean subtraction removes the dc component from every view") {
    const Eigen::Index L = 256;
    Eigen::VectorXd x = Eigen::VectorXd::Constant(L, 42.0);
    x(0) = 42.0;  // perfectly constant signal
    SpectrumView s = magnitude_spectrum<double>(x);
    for (Eigen::Index l = 1; l <= s.num_bins(); ++l) CHECK(s.magnitude(l) <= 1e-10);
}

TEST_CASE("period view maps periods onto rounded bins") {
    const Eigen::Index L = 1440;
    Eigen::VectorXd x = random_signal(L, 99);
    SpectrumView s = magnitude_spectrum<double>(x);
    PeriodView p = to_period_domain(s);
    CHECK(p.conversion_length == L);
    CHECK(p.max_period() == 360);  // min(5000, 1440/4)

    // Exact divisor: period 72 -> bin 20.
    CHECK(p(72) == doctest::Approx(s.magnitude(20)));
    // Non-divisor: period 7 -> round(1440/7) = round(205.714...) = 206.
    CHECK(p(7) == doctest::Approx(s.magnitude(206)));
    // Periods 1 and 2 always read zero (bins at/above Nyquist are dropped).
    CHECK(p(1) == 0.0);
    CHECK(p(2) == 0.0);
    CHECK(p(3) == doctest::Approx(s.magnitude(480)));
}

TEST_CASE("period view honors an explicit cap and validates it") {
    const Eigen::Index L = 64;
    Eigen::VectorXd x = random_signal(L, 5);
    SpectrumView s = magnitude_spectrum<double>(x);

    PeriodView p = to_period_domain(s, 16);
    CHECK(p.max_period() == 16);
    CHECK_THROWS_AS(p(17), std::out_of_range);
    CHECK_THROWS_AS(p(0), std::out_of_range);

    CHECK_THROWS_AS(to_period_domain(s, 32), std::invalid_argument);  // not < L/2
    CHECK_THROWS_AS(to_period_domain(s, 40), std::invalid_argument);
    CHECK_THROWS_AS(to_period_domain(s, 1), std::invalid_argument);
    CHECK_NOTHROW(to_period_domain(s, 31));
}

TEST_CASE("default period cap clamps at 5000 for long series") {
    Eigen::VectorXd x = random_signal(24000, 3);
    SpectrumView s = magnitude_spectrum<double>(x);
    PeriodView p = to_period_domain(s);
    CHECK(p.max_period() == 5000);
}

TEST_CASE("spectrum input validation") {
    Eigen::VectorXd tiny(3);
    tiny << 1, 2, 3;
    CHECK_THROWS_AS(magnitude_spectrum<double>(tiny), std::invalid_argument);

    Eigen::VectorXd bad(8);
    bad.setOnes();
    bad(3) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(magnitude_spectrum<double>(bad), std::invalid_argument);

    Eigen::MatrixXd m(16, 2);
    m.setRandom();
    CHECK_THROWS_AS(magnitude_spectrum<double>(m, 2), std::out_of_range);
    CHECK_NOTHROW(magnitude_spectrum<double>(m, 1));
}

TEST_CASE("sinusoid with non-divisor period still peaks at the rounded bin") {
    // Period 7 over L=1440: 1440/7 is not an integer, so leakage occurs, but
    // the rounded bin must still dominate.
    const Eigen::Index L = 1440;
    Eigen::VectorXd x(L);
    for (Eigen::Index t = 0; t < L; ++t)
        x(t) = std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / 7.0);
    SpectrumView s = magnitude_spectrum<double>(x);
    PeriodView p = to_period_domain(s);
    Eigen::Index argmax = 0;
    double best = -1.0;
    for (Eigen::Index l = 1; l <= s.num_bins(); ++l)
        if (s.magnitude(l) > best) { best = s.magnitude(l); argmax = l; }
    CHECK(argmax == 206);
    CHECK(p(7) == doctest::Approx(best));
}
