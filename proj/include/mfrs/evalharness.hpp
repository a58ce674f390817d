#pragma once

// Evaluation harness: window-swept MSE/MAE metrics, naive baselines, the
// channel-independence check, and optimal-gap reporting for synthetic data.

#include "mfrs/forecaster.hpp"
#include "mfrs/series.hpp"
#include "mfrs/synthbench.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfrs {

struct HorizonMetrics {
    Index step{0};  // 1-based horizon step
    double mse{0.0};
    double mae{0.0};
};

struct EvalReport {
    double mse{0.0};
    double mae{0.0};
    Index windows{0};
    std::vector<HorizonMetrics> per_horizon;      // empty unless requested
    std::optional<OptimalMetrics> optimal;        // attached for synthetic data
    std::optional<double> gap_ratio;              // mse / optimal mse, when defined
};

// Sweeps every stride-1 window of `values` that fits S lookback rows plus T
// target rows, asks `predict_fn(start, lookback)` for a T x C prediction,
// and averages squared and absolute errors over windows, horizons, and
// channels. Metrics are computed on raw values.
template <class Scalar, class PredictFn>
EvalReport evaluate_windows(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& values, Index S, Index T,
                            PredictFn&& predict_fn, bool per_horizon = true) {
    using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    if (S < 1 || T < 1) throw std::invalid_argument("evaluate: lookback and horizon must be positive");
    const Index L = values.rows(), C = values.cols();
    const Index num_windows = L - S - T + 1;
    if (num_windows < 1)
        throw std::invalid_argument("evaluate: no window fits (need " + std::to_string(S + T) + " rows, have " +
                                    std::to_string(L) + ")");

    EvalReport report;
    report.windows = num_windows;
    std::vector<double> sq_by_step(static_cast<size_t>(T), 0.0), abs_by_step(static_cast<size_t>(T), 0.0);
    for (Index s = 0; s < num_windows; ++s) {
        const Mat lookback = values.middleRows(s, S);
        const Mat target = values.middleRows(s + S, T);
        const Mat pred = predict_fn(s, lookback);
        if (pred.rows() != T || pred.cols() != C)
            throw std::runtime_error("evaluate: prediction shape " + std::to_string(pred.rows()) + "x" +
                                     std::to_string(pred.cols()) + " does not match target " + std::to_string(T) +
                                     "x" + std::to_string(C));
        for (Index t = 0; t < T; ++t) {
            const auto diff = (pred.row(t) - target.row(t)).array().template cast<double>();
            sq_by_step[static_cast<size_t>(t)] += diff.square().sum();
            abs_by_step[static_cast<size_t>(t)] += diff.abs().sum();
        }
    }
    const double denom_step = static_cast<double>(num_windows) * static_cast<double>(C);
    double sq_total = 0.0, abs_total = 0.0;
    for (Index t = 0; t < T; ++t) {
        sq_total += sq_by_step[static_cast<size_t>(t)];
        abs_total += abs_by_step[static_cast<size_t>(t)];
        if (per_horizon)
            report.per_horizon.push_back(
                {t + 1, sq_by_step[static_cast<size_t>(t)] / denom_step, abs_by_step[static_cast<size_t>(t)] / denom_step});
    }
    report.mse = sq_total / (denom_step * static_cast<double>(T));
    report.mae = abs_total / (denom_step * static_cast<double>(T));
    return report;
}

// Model evaluation over a test series. `absolute_start` is the timeline
// step of the series' first row so reference banks are sliced in phase.
template <class Scalar>
EvalReport evaluate(const ForecastModelT<Scalar>& model, const MultiSeriesT<Scalar>& test,
                    const ReferenceSeriesT<Scalar>& rs, Index absolute_start = 0, bool per_horizon = true) {
    const ModelConfig& cfg = model.config;
    const Index P = cfg.P();
    if (absolute_start < 0) throw std::invalid_argument("evaluate: absolute_start must be >= 0");
    const Index last_start = test.length() - cfg.S() - cfg.T();
    if (last_start >= 0 && absolute_start + last_start + P > rs.length())
        throw std::invalid_argument("evaluate: reference bank too short (needs " +
                                    std::to_string(absolute_start + last_start + P) + " rows, has " +
                                    std::to_string(rs.length()) + ")");
    return evaluate_windows<Scalar>(
        test.values, cfg.S(), cfg.T(),
        [&](Index s, const auto& lookback) { return forward(model, lookback, slice_rs(rs, absolute_start + s, P)); },
        per_horizon);
}

// Attaches the closed-form optimum; the gap ratio is only defined for a
// nonzero optimal mse (noiseless data has optimum zero).
inline void attach_optimal(EvalReport& report, const OptimalMetrics& opt) {
    report.optimal = opt;
    if (opt.mse_opt > 0.0) report.gap_ratio = report.mse / opt.mse_opt;
}

// ---------------------------------------------------------------------------
// Naive baselines

struct BaselineReports {
    EvalReport repeat_last;
    std::optional<EvalReport> seasonal;  // skipped when lag > lookback
    Index seasonal_lag{0};
    std::string notice;
};

// (a) repeat-last-value and (b) seasonal-naive copy at the given lag
// (normally the largest primary base pattern). The seasonal baseline needs
// lag <= S so the copied values exist inside the lookback window.
template <class Scalar>
BaselineReports naive_baselines(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& values, Index S, Index T,
                                Index seasonal_lag) {
    using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    BaselineReports out;
    out.seasonal_lag = seasonal_lag;
    out.repeat_last = evaluate_windows<Scalar>(values, S, T, [&](Index, const Mat& lookback) {
        Mat pred(T, lookback.cols());
        for (Index t = 0; t < T; ++t) pred.row(t) = lookback.row(S - 1);
        return pred;
    });
    if (seasonal_lag < 1) {
        out.notice = "seasonal baseline skipped: no seasonal lag available";
        return out;
    }
    if (seasonal_lag > S) {
        out.notice = "seasonal baseline skipped: lag " + std::to_string(seasonal_lag) + " exceeds lookback " +
                     std::to_string(S);
        return out;
    }
    out.seasonal = evaluate_windows<Scalar>(values, S, T, [&](Index, const Mat& lookback) {
        Mat pred(T, lookback.cols());
        for (Index t = 0; t < T; ++t) {
            Index idx = S + t;
            while (idx >= S) idx -= seasonal_lag;  // latest in-window value one whole lag behind
            pred.row(t) = lookback.row(idx);
        }
        return pred;
    });
    return out;
}

// ---------------------------------------------------------------------------
// Channel independence

struct ChannelIndependenceReport {
    bool pass{false};
    double max_deviation{0.0};
    Index windows_checked{0};
};

inline constexpr double kChannelIndependenceTol = 1e-9;

// Generic harness: `forward_fn(lookback, window_start)` must produce one
// prediction column per lookback column. Joint multi-channel calls are
// compared against single-channel calls; any coupling between channels
// shows up as a deviation.
template <class Scalar, class ForwardFn>
ChannelIndependenceReport channel_independence_check(ForwardFn&& forward_fn,
                                                     const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& values,
                                                     Index S, Index max_windows = 8) {
    using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    const Index L = values.rows(), C = values.cols();
    if (C < 2) throw std::invalid_argument("channel independence: need at least 2 channels");
    const Index span = L - S;
    if (span < 0) throw std::invalid_argument("channel independence: series shorter than the lookback");

    std::vector<Index> starts;
    const Index n = std::min<Index>(max_windows, span + 1);
    for (Index i = 0; i < n; ++i) starts.push_back(span == 0 ? 0 : i * span / std::max<Index>(1, n - 1));
    starts.erase(std::unique(starts.begin(), starts.end()), starts.end());

    ChannelIndependenceReport report;
    for (Index s : starts) {
        const Mat lookback = values.middleRows(s, S);
        const Mat joint = forward_fn(lookback, s);
        for (Index c = 0; c < C; ++c) {
            const Mat single = forward_fn(Mat(lookback.col(c)), s);
            const double dev = (joint.col(c) - single.col(0)).cwiseAbs().maxCoeff();
            report.max_deviation = std::max(report.max_deviation, dev);
        }
        ++report.windows_checked;
    }
    report.pass = report.max_deviation < kChannelIndependenceTol;
    return report;
}

template <class Scalar>
ChannelIndependenceReport channel_independence_test(const ForecastModelT<Scalar>& model,
                                                    const MultiSeriesT<Scalar>& series,
                                                    const ReferenceSeriesT<Scalar>& rs, Index absolute_start = 0) {
    const Index P = model.config.P();
    return channel_independence_check<Scalar>(
        [&](const auto& lookback, Index s) { return forward(model, lookback, slice_rs(rs, absolute_start + s, P)); },
        series.values, model.config.S());
}

}  // namespace mfrs
