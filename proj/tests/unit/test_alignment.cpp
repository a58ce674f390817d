#include <doctest.h>

#include "mfrs/alignment.hpp"
#include "mfrs/rng.hpp"

#include <cmath>
#include <numbers>

using namespace mfrs;

namespace {

Eigen::MatrixXd periodic_panel(Index L, Index C, std::uint64_t seed = 0, double noise = 0.0) {
    RandomStream rng(seed);
    Eigen::MatrixXd m(L, C);
    for (Index c = 0; c < C; ++c)
        for (Index t = 0; t < L; ++t) {
            const double tt = static_cast<double>(t);
            m(t, c) = std::sin(2.0 * std::numbers::pi * tt / 24.0 + 0.7 * static_cast<double>(c)) +
                      0.5 * std::sin(2.0 * std::numbers::pi * tt / 12.0) +
                      (noise > 0.0 ? rng.normal(0.0, noise) : 0.0);
        }
    return m;
}

}  // namespace

TEST_CASE("pearson closed-form values") {
    Eigen::VectorXd a(4), b(4);
    a << 1, 2, 3, 4;
    b << 1, 2, 3, 5;
    CHECK(pearson<double>(a, b) == doctest::Approx(0.9827076298239908).epsilon(1e-12));

    CHECK(pearson<double>(a, a) == doctest::Approx(1.0));
    Eigen::VectorXd neg = -a;
    CHECK(pearson<double>(a, neg) == doctest::Approx(-1.0));

    Eigen::VectorXd flat = Eigen::VectorXd::Constant(4, 3.0);
    CHECK(pearson<double>(a, flat) == 0.0);
    CHECK(pearson<double>(flat, a) == 0.0);

    Eigen::VectorXd shorter(3);
    shorter << 1, 2, 3;
    CHECK_THROWS_AS(pearson<double>(a, shorter), std::invalid_argument);
    Eigen::VectorXd one(1), one2(1);
    one << 1;
    one2 << 2;
    CHECK_THROWS_AS(pearson<double>(one, one2), std::invalid_argument);
}

TEST_CASE("pearson is invariant to positive affine maps") {
    RandomStream rng(8);
    Eigen::VectorXd a(50), b(50);
    for (Index i = 0; i < 50; ++i) {
        a(i) = rng.normal();
        b(i) = rng.normal();
    }
    const double base = pearson<double>(a, b);
    Eigen::VectorXd a2 = 3.7 * a.array() + 11.0;
    CHECK(pearson<double>(a2, b) == doctest::Approx(base).epsilon(1e-12));
    Eigen::VectorXd a3 = -2.0 * a;
    CHECK(pearson<double>(a3, b) == doctest::Approx(-base).epsilon(1e-12));
}

TEST_CASE("exact self-slice aligns with score = channel count") {
    const Index S = 96, T_M = 100, C = 3;
    Eigen::MatrixXd intercepted = periodic_panel(T_M + S, C, 5, 0.3);
    Eigen::MatrixXd obs = intercepted.middleRows(37, S);
    auto r = align<double>(obs, intercepted, {0, 1, 2});
    CHECK(r.xi == 37);
    CHECK(r.score == doctest::Approx(3.0).epsilon(1e-9));
    CHECK(r.scores.size() == T_M);
    CHECK(r.used_channels == std::vector<Index>{0, 1, 2});
    CHECK(r.dropped_channels.empty());
}

TEST_CASE("anti-phase sine aligns half a period away") {
    const Index S = 96, T = 24;
    Eigen::MatrixXd intercepted(T + S, 1);
    for (Index t = 0; t < T + S; ++t)
        intercepted(t, 0) = std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / static_cast<double>(T));
    Eigen::MatrixXd obs = -intercepted.topRows(S);
    auto r = align<double>(obs, intercepted, {0});
    CHECK(r.xi == T / 2);
    CHECK(r.score == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("alignment recovers the cut offset modulo the fundamental period") {
    // Noiseless 24-periodic signal; intercepted stretch starts at an absolute
    // multiple of 24, so a window cut at absolute offset o aligns at o mod 24.
    const Index S = 96, T_M = 24;
    Eigen::MatrixXd timeline = periodic_panel(480, 2);
    Eigen::MatrixXd intercepted = timeline.middleRows(240, T_M + S);
    for (Index o : {0, 7, 23, 55, 100}) {
        Eigen::MatrixXd obs = timeline.middleRows(o, S);
        auto r = align<double>(obs, intercepted, {0, 1});
        CHECK(r.xi == o % 24);
        CHECK(r.score == doctest::Approx(2.0).epsilon(1e-9));
    }
}

TEST_CASE("score vector is affine-invariant in the observation") {
    const Index S = 48, T_M = 30;
    Eigen::MatrixXd intercepted = periodic_panel(T_M + S, 2, 3, 0.2);
    Eigen::MatrixXd obs = periodic_panel(S, 2, 9, 0.4);
    auto base = align<double>(obs, intercepted, {0, 1});
    Eigen::MatrixXd scaled = 3.5 * obs.array() + 11.0;
    auto shifted = align<double>(scaled, intercepted, {0, 1});
    CHECK(shifted.xi == base.xi);
    for (Index t = 0; t < T_M; ++t) CHECK(shifted.scores(t) == doctest::Approx(base.scores(t)).epsilon(1e-12));
}

TEST_CASE("multi-channel score is the sum of single-channel scores") {
    const Index S = 48, T_M = 30;
    Eigen::MatrixXd intercepted = periodic_panel(T_M + S, 3, 21, 0.5);
    Eigen::MatrixXd obs = periodic_panel(S, 3, 22, 0.5);
    auto all = align<double>(obs, intercepted, {0, 1, 2});
    auto c0 = align<double>(obs, intercepted, {0});
    auto c1 = align<double>(obs, intercepted, {1});
    auto c2 = align<double>(obs, intercepted, {2});
    for (Index t = 0; t < T_M; ++t) CHECK(all.scores(t) == c0.scores(t) + c1.scores(t) + c2.scores(t));
}

TEST_CASE("zero-variance observation channels are dropped, all-flat errors") {
    const Index S = 48, T_M = 20;
    Eigen::MatrixXd intercepted = periodic_panel(T_M + S, 2, 4, 0.1);
    Eigen::MatrixXd obs = periodic_panel(S, 2, 6, 0.1);
    obs.col(1).setConstant(5.0);
    auto r = align<double>(obs, intercepted, {0, 1});
    CHECK(r.used_channels == std::vector<Index>{0});
    CHECK(r.dropped_channels == std::vector<Index>{1});
    // Dropped channel contributes nothing: equal to aligning channel 0 alone.
    auto only0 = align<double>(obs, intercepted, {0});
    CHECK(r.xi == only0.xi);
    for (Index t = 0; t < T_M; ++t) CHECK(r.scores(t) == only0.scores(t));

    Eigen::MatrixXd flat = Eigen::MatrixXd::Constant(S, 2, 1.0);
    CHECK_THROWS_AS(align<double>(flat, intercepted, {0, 1}), std::runtime_error);
}

TEST_CASE("zero-variance intercepted windows contribute zero") {
    const Index S = 10, T_M = 8;
    Eigen::MatrixXd intercepted(T_M + S, 1);
    intercepted.setConstant(2.0);
    // Only rows 12.. carry signal; windows fully inside the flat stretch score 0.
    for (Index t = 12; t < T_M + S; ++t) intercepted(t, 0) = std::sin(0.9 * static_cast<double>(t));
    Eigen::MatrixXd obs(S, 1);
    for (Index t = 0; t < S; ++t) obs(t, 0) = std::cos(0.3 * static_cast<double>(t));
    auto r = align<double>(obs, intercepted, {0});
    CHECK(r.scores(0) == 0.0);  // window [0,10) is entirely flat
    CHECK(r.scores.size() == T_M);
}

TEST_CASE("alignment validates shapes and channel selections") {
    Eigen::MatrixXd intercepted = periodic_panel(60, 2);
    Eigen::MatrixXd obs = periodic_panel(48, 2);
    CHECK_THROWS_AS(align<double>(obs, periodic_panel(60, 3), {0}), std::invalid_argument);
    CHECK_THROWS_AS(align<double>(obs, periodic_panel(48, 2), {0}), std::invalid_argument);  // T_M = 0
    CHECK_THROWS_AS(align<double>(obs, intercepted, {}), std::invalid_argument);
    CHECK_THROWS_AS(align<double>(obs, intercepted, {2}), std::out_of_range);
    CHECK_THROWS_AS(align<double>(obs, intercepted, {-1}), std::out_of_range);
    Eigen::MatrixXd tiny = periodic_panel(1, 2);
    CHECK_THROWS_AS(align<double>(tiny, intercepted, {0}), std::invalid_argument);

    // Duplicate channel selections collapse.
    auto r = align<double>(obs, intercepted, {0, 0, 1, 1});
    CHECK(r.used_channels == std::vector<Index>{0, 1});
    CHECK(r.score <= 2.0 + 1e-12);
}
