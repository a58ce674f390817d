#include <doctest.h>

#include "mfrs/basepatterns.hpp"
#include "mfrs/rng.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <set>
#include <vector>

using namespace mfrs;

namespace {

Eigen::VectorXd multi_sine(Index L, const std::vector<std::pair<Index, double>>& components,
                           double noise_sigma = 0.0, std::uint64_t seed = 0) {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(L);
    for (auto [T, A] : components)
        for (Index t = 0; t < L; ++t)
            x(t) += A * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / static_cast<double>(T));
    if (noise_sigma > 0.0) {
        RandomStream rng(seed);
        for (Index t = 0; t < L; ++t) x(t) += rng.normal(0.0, noise_sigma);
    }
    return x;
}

PeriodView period_view_of(const Eigen::VectorXd& x, Index cap = -1) {
    return to_period_domain(magnitude_spectrum<double>(x), cap);
}

// Single-pass transcription of the ascending-window extraction: walk T over
// 2..floor(L_p/2), extract T when it is the argmax of psi[1..2T] (ties to the
// smaller period), then zero that prefix. No significance floor beyond a
// numerical-dust cutoff, no repeat rounds. Used as an independent cross-check
// where a single pass suffices.
std::vector<Index> single_pass_reference(const PeriodView& pv) {
    Eigen::VectorXd psi = pv.psi;
    const Index L_p = psi.size();
    const Index L = pv.conversion_length;
    const double dust = 1e-9 * psi.maxCoeff();
    auto bin_of = [&](Index T) { return static_cast<Index>(std::llround(double(L) / double(T))); };
    std::vector<Index> out;
    for (Index T = 2; T <= L_p / 2; ++T) {
        Index arg = 1;
        double best = psi(0);
        for (Index u = 2; u <= 2 * T; ++u)
            if (bin_of(bin_of(u)) == u && psi(u - 1) > best) { best = psi(u - 1); arg = u; }
        if (arg == T && best > dust) {
            out.push_back(T);
            psi.head(2 * T).setZero();
        }
    }
    return out;
}

}  // namespace

TEST_CASE("well separated periods match the single pass reference") {
    // 24 and 168: the larger period lies outside the smaller one's window, so
    // one pass is enough and both implementations must agree.
    const Index L = 40 * 168;
    auto x = multi_sine(L, {{24, 1.0}, {168, 0.8}});
    PeriodView pv = period_view_of(x);
    auto ours = extract_pbp(pv);
    auto ref = single_pass_reference(pv);
    CHECK(ours == std::vector<Index>{24, 168});
    CHECK(ref == ours);
}

TEST_CASE("nested periods are all recovered across rounds") {
    const Index L = 40 * 72;
    const std::vector<Index> want{18, 24, 36, 72};

    // Several adversarial amplitude orderings, including ones where the
    // largest peak sits in the middle of the nest.
    const std::vector<std::vector<double>> amp_sets = {
        {1.0, 1.0, 1.0, 1.0}, {2.0, 0.5, 0.6, 1.8}, {0.5, 2.0, 0.5, 0.5},
        {0.5, 0.6, 2.0, 0.7}, {0.5, 0.7, 0.9, 2.0}, {1.9, 1.7, 0.5, 0.8},
    };
    for (const auto& amps : amp_sets) {
        std::vector<std::pair<Index, double>> comps;
        for (size_t i = 0; i < want.size(); ++i) comps.emplace_back(want[i], amps[i]);
        auto got = extract_pbp(period_view_of(multi_sine(L, comps)));
        CHECK(got == want);
    }

    // The single pass alone cannot see through the nest: whichever window
    // winner it zeroes first erases siblings. Documents why rounds exist.
    auto ref = single_pass_reference(period_view_of(multi_sine(L, {{18, 1.0}, {24, 0.9}, {36, 0.8}, {72, 0.7}})));
    CHECK(ref.size() < want.size());
}

TEST_CASE("nested periods survive gaussian noise") {
    const Index L = 14400;
    const std::vector<Index> want{18, 24, 36, 72};
    for (std::uint64_t seed : {11u, 22u, 33u}) {
        auto x = multi_sine(L, {{18, 1.2}, {24, 0.8}, {36, 1.9}, {72, 0.6}}, 1.0, seed);
        CHECK(extract_pbp(period_view_of(x)) == want);
    }
}

TEST_CASE("pure noise yields no periods") {
    RandomStream rng(5150);
    Eigen::VectorXd x(4096);
    for (Index t = 0; t < x.size(); ++t) x(t) = rng.normal();
    CHECK(extract_pbp(period_view_of(x)).empty());
}

TEST_CASE("zero spectrum yields no periods") {
    PeriodView pv;
    pv.psi = Eigen::VectorXd::Zero(100);
    pv.conversion_length = 1000;
    CHECK(extract_pbp(pv).empty());
    CHECK(single_pass_reference(pv).empty());
}

TEST_CASE("extraction exhausts: re-running on the residual finds nothing") {
    const Index L = 14400;
    auto noisy = multi_sine(L, {{18, 1.0}, {24, 1.4}, {36, 0.7}, {72, 2.0}}, 1.0, 99);
    auto r = extract_pbp_with_state(period_view_of(noisy));
    REQUIRE(r.periods == std::vector<Index>{18, 24, 36, 72});
    CHECK(extract_pbp(r.residual).empty());

    auto clean = multi_sine(40 * 72, {{18, 0.5}, {72, 2.0}});
    auto r2 = extract_pbp_with_state(period_view_of(clean));
    REQUIRE(r2.periods == std::vector<Index>{18, 72});
    CHECK(extract_pbp(r2.residual).empty());
    CHECK(r2.residual.psi.maxCoeff() <= 1e-6);  // noiseless divisors leave nothing behind
}

TEST_CASE("property: random divisor subsets are recovered exactly") {
    // Periods are drawn from divisors of a composite base so the joint cycle
    // stays small; L is 40 cycles, making every planted peak land on an exact
    // bin at least 40 bins away from its neighbors.
    const std::vector<Index> bases{360, 720, 2520, 5040, 10080, 15120, 20160};
    RandomStream rng(424242);
    for (int trial = 0; trial < 25; ++trial) {
        const Index base = bases[static_cast<size_t>(rng.bits() % bases.size())];
        std::vector<Index> divisors;
        for (Index d = 3; d <= 100; ++d)
            if (base % d == 0) divisors.push_back(d);
        REQUIRE(divisors.size() >= 6);

        const size_t count = 1 + static_cast<size_t>(rng.bits() % 6);
        std::set<Index> chosen;
        while (chosen.size() < count) chosen.insert(divisors[static_cast<size_t>(rng.bits() % divisors.size())]);

        std::vector<std::pair<Index, double>> comps;
        for (Index T : chosen) comps.emplace_back(T, rng.uniform(0.5, 2.0));

        const Index L = 40 * base;
        auto got = extract_pbp(period_view_of(multi_sine(L, comps)));
        std::vector<Index> want(chosen.begin(), chosen.end());
        CHECK(got == want);
    }
}

TEST_CASE("scale invariance of primary extraction") {
    const Index L = 40 * 72;
    auto x = multi_sine(L, {{18, 0.7}, {24, 1.1}, {72, 1.9}});
    auto base = extract_pbp(period_view_of(x));
    Eigen::VectorXd scaled = 1234.5 * x;
    CHECK(extract_pbp(period_view_of(scaled)) == base);
}

TEST_CASE("harmonic candidate enumeration follows the K windows") {
    auto freqs = [](const std::vector<Rational>& v) {
        return std::set<Rational>(v.begin(), v.end());
    };

    // Two patterns: k = 2..12 over 24, then k = 2..3 over 168.
    auto c = enumerate_harmonic_candidates({24, 168});
    std::set<Rational> want;
    for (Index k = 2; k <= 12; ++k) want.insert(Rational(k, 24));
    want.insert(Rational(2, 168));
    want.insert(Rational(3, 168));
    CHECK(freqs(c) == want);
    CHECK(c.size() == 13);

    // Tight nest: only the fastest pattern has room for harmonics.
    auto c2 = enumerate_harmonic_candidates({18, 24, 36, 72});
    std::set<Rational> want2;
    for (Index k = 2; k <= 9; ++k) want2.insert(Rational(k, 18));
    CHECK(freqs(c2) == want2);

    // Single short pattern.
    auto c3 = enumerate_harmonic_candidates({4});
    CHECK(c3 == std::vector<Rational>{Rational(1, 2)});

    // K < 2 contributes nothing but is not an error.
    auto c4 = enumerate_harmonic_candidates({3});
    CHECK(c4.empty());

    CHECK_THROWS_AS(enumerate_harmonic_candidates({}), std::invalid_argument);
    CHECK_THROWS_AS(enumerate_harmonic_candidates({24, 24}), std::invalid_argument);
    CHECK_THROWS_AS(enumerate_harmonic_candidates({1, 24}), std::invalid_argument);
}

TEST_CASE("harmonic scoring ranks present harmonics and drops absent ones") {
    const Index L = 40 * 24;
    // Channel 0: fundamental plus strong 2nd and weaker 3rd harmonic.
    // Channel 1: fundamental plus 3rd harmonic only.
    auto ch0 = multi_sine(L, {{24, 1.0}, {12, 0.6}, {8, 0.3}});
    auto ch1 = multi_sine(L, {{24, 2.0}, {8, 1.0}});
    std::vector<SpectrumView> spectra{magnitude_spectrum<double>(ch0), magnitude_spectrum<double>(ch1)};

    auto hbp = extract_hbp(spectra, {24}, ExtractionConfig{});
    REQUIRE(hbp.size() == 2);
    // Scores: 2/24 -> 0.6/1.0 + 0 = 0.6; 3/24 -> 0.3/1.0 + 1.0/2.0 = 0.8.
    CHECK(hbp[0].frequency == Rational(3, 24));
    CHECK(hbp[0].score == doctest::Approx(0.8).epsilon(1e-6));
    CHECK(hbp[1].frequency == Rational(2, 24));
    CHECK(hbp[1].score == doctest::Approx(0.6).epsilon(1e-6));
    // k = 4..12 have no content and fall under the floor.
    for (const auto& h : hbp) CHECK(h.score >= 0.0);

    // Q truncation and Q = 0.
    ExtractionConfig q1;
    q1.Q = 1;
    auto top1 = extract_hbp(spectra, {24}, q1);
    REQUIRE(top1.size() == 1);
    CHECK(top1[0].frequency == Rational(3, 24));
    ExtractionConfig q0;
    q0.Q = 0;
    CHECK(extract_hbp(spectra, {24}, q0).empty());

    // Scale invariance: common positive rescale leaves scores unchanged.
    Eigen::VectorXd s0 = 17.0 * ch0, s1 = 17.0 * ch1;
    std::vector<SpectrumView> scaled{magnitude_spectrum<double>(s0), magnitude_spectrum<double>(s1)};
    auto hbp2 = extract_hbp(scaled, {24}, ExtractionConfig{});
    REQUIRE(hbp2.size() == hbp.size());
    for (size_t i = 0; i < hbp.size(); ++i) {
        CHECK(hbp2[i].frequency == hbp[i].frequency);
        CHECK(hbp2[i].score == doctest::Approx(hbp[i].score).epsilon(1e-9));
    }

    CHECK_THROWS_AS(extract_hbp(std::vector<SpectrumView>{}, {24}, ExtractionConfig{}), std::invalid_argument);
    CHECK_THROWS_AS(extract_hbp(spectra, {}, ExtractionConfig{}), std::invalid_argument);
}

TEST_CASE("min_channels limits scoring to leading channels") {
    const Index L = 40 * 24;
    auto ch0 = multi_sine(L, {{24, 1.0}, {12, 0.5}});
    auto ch1 = multi_sine(L, {{24, 1.0}, {8, 0.9}});
    std::vector<SpectrumView> spectra{magnitude_spectrum<double>(ch0), magnitude_spectrum<double>(ch1)};
    ExtractionConfig cfg;
    cfg.min_channels = 1;  // only channel 0 scanned
    auto hbp = extract_hbp(spectra, {24}, cfg);
    REQUIRE(hbp.size() == 1);
    CHECK(hbp[0].frequency == Rational(2, 24));
    CHECK(hbp[0].score == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("merge_manual dedupes and validates") {
    BasePatternSet set;
    set.primary_periods = {24, 168};
    set.harmonic_freqs = {{Rational(2, 24), 0.5}};

    auto merged = merge_manual(set, {8760});
    CHECK(merged.manual_periods == std::vector<Index>{8760});

    // Duplicate of an existing primary: no change.
    auto dup = merge_manual(merged, {24});
    CHECK(dup.manual_periods == std::vector<Index>{8760});

    // Duplicate of an existing harmonic frequency (1/12 == 2/24): no change.
    auto dup2 = merge_manual(merged, {12});
    CHECK(dup2.manual_periods == std::vector<Index>{8760});

    // Duplicate within the manual list itself.
    auto dup3 = merge_manual(merged, {8760, 48, 48});
    CHECK(dup3.manual_periods == std::vector<Index>{48, 8760});

    CHECK_THROWS_AS(merge_manual(set, {1}), std::invalid_argument);
}

TEST_CASE("all_frequencies unions, dedupes, and sorts ascending") {
    BasePatternSet set;
    set.primary_periods = {24, 168};
    set.harmonic_freqs = {{Rational(2, 24), 0.9}, {Rational(3, 24), 0.4}};
    auto f = all_frequencies(set);
    REQUIRE(f.size() == 4);
    CHECK(f[0] == Rational(1, 168));
    CHECK(f[1] == Rational(1, 24));
    CHECK(f[2] == Rational(2, 24));
    CHECK(f[3] == Rational(3, 24));
    CHECK(max_period(set) == 168);

    BasePatternSet single;
    single.primary_periods = {24};
    auto f1 = all_frequencies(single);
    REQUIRE(f1.size() == 1);
    CHECK(f1[0] == Rational(1, 24));

    auto with_manual = merge_manual(set, {8760});
    auto f2 = all_frequencies(with_manual);
    CHECK(f2.front() == Rational(1, 8760));
    CHECK(max_period(with_manual) == 8760);

    BasePatternSet empty;
    CHECK_THROWS_AS(all_frequencies(empty), std::invalid_argument);
}

TEST_CASE("analyze_series unions per-channel periods") {
    const Index L = 40 * 72;
    auto a = multi_sine(L, {{24, 1.0}});
    auto b = multi_sine(L, {{36, 1.0}});
    MultiSeries s;
    s.values.resize(L, 2);
    s.values.col(0) = a;
    s.values.col(1) = b;
    auto set = analyze_series(s);
    CHECK(set.primary_periods == std::vector<Index>{24, 36});
    // Pure tones carry no harmonic content; the floor keeps the list empty.
    CHECK(set.harmonic_freqs.empty());

    auto with_manual = analyze_series(s, ExtractionConfig{}, std::vector<Index>{144});
    CHECK(with_manual.manual_periods == std::vector<Index>{144});
}
