#pragma once

// Core data model: multichannel time series, windows, chronological splits.
// Time indices are 0-based throughout the library.

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

namespace mfrs {

using Eigen::Index;

template <class Scalar = double>
struct MultiSeriesT {
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

    Matrix values;                            // L rows (time) x C columns (channels)
    std::string step_hint;                    // optional sampling-interval label, e.g. "hourly"
    std::vector<std::string> channel_names;   // optional, size C when present
    std::vector<std::string> timestamps;      // optional, size L when present

    Index length() const { return values.rows(); }
    Index channels() const { return values.cols(); }
};

using MultiSeries = MultiSeriesT<double>;

template <class Scalar>
void validate_series(const MultiSeriesT<Scalar>& s) {
    if (s.length() < 2) throw std::invalid_argument("series must have at least 2 time steps, got " + std::to_string(s.length()));
    if (s.channels() < 1) throw std::invalid_argument("series must have at least 1 channel");
    if (!s.values.allFinite()) throw std::invalid_argument("series contains non-finite values");
    if (!s.channel_names.empty() && static_cast<Index>(s.channel_names.size()) != s.channels())
        throw std::invalid_argument("channel_names size mismatch");
    if (!s.timestamps.empty() && static_cast<Index>(s.timestamps.size()) != s.length())
        throw std::invalid_argument("timestamps size mismatch");
}

struct Window {
    Index start{0};
    Index lookback{1};  // S
    Index horizon{1};   // T
};

inline void validate_window(const Window& w, Index series_length) {
    if (w.lookback < 1) throw std::invalid_argument("window lookback must be >= 1, got " + std::to_string(w.lookback));
    if (w.horizon < 1) throw std::invalid_argument("window horizon must be >= 1, got " + std::to_string(w.horizon));
    if (w.start < 0) throw std::out_of_range("window start " + std::to_string(w.start) + " is negative");
    const Index end = w.start + w.lookback + w.horizon;
    if (end > series_length)
        throw std::out_of_range("window end " + std::to_string(end) + " exceeds series length " +
                                std::to_string(series_length) + " (start " + std::to_string(w.start) + ")");
}

// Copies of the lookback block (S x C) and horizon block (T x C).
template <class Scalar>
std::pair<typename MultiSeriesT<Scalar>::Matrix, typename MultiSeriesT<Scalar>::Matrix>
slice_window(const MultiSeriesT<Scalar>& series, const Window& w) {
    validate_window(w, series.length());
    typename MultiSeriesT<Scalar>::Matrix lookback =
        series.values.middleRows(w.start, w.lookback);
    typename MultiSeriesT<Scalar>::Matrix horizon =
        series.values.middleRows(w.start + w.lookback, w.horizon);
    return {std::move(lookback), std::move(horizon)};
}

struct SplitSpec {
    double train_frac{0.7};
    double val_frac{0.1};
    double test_frac{0.2};
};

inline void validate_split_spec(const SplitSpec& s) {
    auto in_unit = [](double f) { return f > 0.0 && f < 1.0; };
    if (!in_unit(s.train_frac) || !in_unit(s.val_frac) || !in_unit(s.test_frac))
        throw std::invalid_argument("split fractions must each lie in (0,1)");
    if (std::abs(s.train_frac + s.val_frac + s.test_frac - 1.0) > 1e-9)
        throw std::invalid_argument("split fractions must sum to 1");
}

// Contiguous chronological segments; lengths floor(frac*L) with the remainder
// assigned to test. Start offsets are kept so downstream consumers can slice
// timeline-synchronized companions (e.g. the reference bank) at absolute steps.
template <class Scalar>
struct SplitResultT {
    MultiSeriesT<Scalar> train, val, test;
    Index train_start{0}, val_start{0}, test_start{0};
};

using SplitResult = SplitResultT<double>;

template <class Scalar>
SplitResultT<Scalar> chronological_split(const MultiSeriesT<Scalar>& series, const SplitSpec& spec) {
    validate_split_spec(spec);
    const Index L = series.length();
    const Index n_train = static_cast<Index>(std::floor(spec.train_frac * static_cast<double>(L)));
    const Index n_val = static_cast<Index>(std::floor(spec.val_frac * static_cast<double>(L)));
    const Index n_test = L - n_train - n_val;  // remainder goes to test
    if (n_train < 2 || n_val < 2 || n_test < 2)
        throw std::invalid_argument("degenerate split: segment lengths (" + std::to_string(n_train) + "," +
                                    std::to_string(n_val) + "," + std::to_string(n_test) + ") must each be >= 2");

    auto take = [&](Index start, Index len) {
        MultiSeriesT<Scalar> out;
        out.values = series.values.middleRows(start, len);
        out.step_hint = series.step_hint;
        out.channel_names = series.channel_names;
        if (!series.timestamps.empty())
            out.timestamps.assign(series.timestamps.begin() + start, series.timestamps.begin() + start + len);
        return out;
    };

    SplitResultT<Scalar> r;
    r.train = take(0, n_train);
    r.val = take(n_train, n_val);
    r.test = take(n_train + n_val, n_test);
    r.train_start = 0;
    r.val_start = n_train;
    r.test_start = n_train + n_val;
    return r;
}

}  // namespace mfrs
