#pragma once

// Phase alignment: recover the time-step offset of an unlabeled observation
// window by sliding Pearson correlation over an intercepted stretch of the
// training timeline.

#include "mfrs/series.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfrs {

// Population-normalized Pearson correlation; 0 when either side has zero
// variance (the least-commitment score for a degenerate window).
template <class Scalar>
double pearson(const Eigen::Vector<Scalar, Eigen::Dynamic>& a, const Eigen::Vector<Scalar, Eigen::Dynamic>& b) {
    if (a.size() != b.size())
        throw std::invalid_argument("pearson: length mismatch (" + std::to_string(a.size()) + " vs " +
                                    std::to_string(b.size()) + ")");
    const Index S = a.size();
    if (S < 2) throw std::invalid_argument("pearson: need at least 2 samples");
    const double inv = 1.0 / static_cast<double>(S);
    const double ma = static_cast<double>(a.sum()) * inv;
    const double mb = static_cast<double>(b.sum()) * inv;
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (Index i = 0; i < S; ++i) {
        const double da = static_cast<double>(a(i)) - ma;
        const double db = static_cast<double>(b(i)) - mb;
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    if (va <= 0.0 || vb <= 0.0) return 0.0;
    const double r = (cov * inv) / (std::sqrt(va * inv) * std::sqrt(vb * inv));
    return std::clamp(r, -1.0, 1.0);
}

struct AlignmentResult {
    Index xi{0};             // argmax of scores, ties toward the smaller step
    double score{0.0};       // scores(xi)
    Eigen::VectorXd scores;  // P_t for t = 0..T_M-1
    std::vector<Index> used_channels;     // channels that actually contributed
    std::vector<Index> dropped_channels;  // zero-variance observation channels
};

// Slide the S-row observation over the first T_M positions of the
// intercepted data (T_M = intercepted rows - S). P_t sums the per-channel
// correlations of the observation with rows [t, t+S). Zero-variance
// observation channels are dropped (reported in dropped_channels); a
// zero-variance intercepted window contributes 0 for that (t, channel).
template <class Scalar>
AlignmentResult align(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& observation,
                      const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& intercepted,
                      const std::vector<Index>& channels_to_use) {
    const Index S = observation.rows();
    const Index C = observation.cols();
    if (S < 2) throw std::invalid_argument("align: observation needs at least 2 rows");
    if (intercepted.cols() != C)
        throw std::invalid_argument("align: channel mismatch (" + std::to_string(intercepted.cols()) + " vs " +
                                    std::to_string(C) + ")");
    const Index T_M = intercepted.rows() - S;
    if (T_M < 1)
        throw std::invalid_argument("align: intercepted data must be longer than the observation (have " +
                                    std::to_string(intercepted.rows()) + " rows for span " + std::to_string(S) + ")");
    if (channels_to_use.empty()) throw std::invalid_argument("align: no channels selected");

    std::vector<Index> channels;
    for (Index c : channels_to_use) {
        if (c < 0 || c >= C)
            throw std::out_of_range("align: channel " + std::to_string(c) + " outside [0, " + std::to_string(C) + ")");
        if (std::find(channels.begin(), channels.end(), c) == channels.end()) channels.push_back(c);
    }
    std::sort(channels.begin(), channels.end());

    AlignmentResult result;
    std::vector<Index> usable;
    for (Index c : channels) {
        const Eigen::Vector<Scalar, Eigen::Dynamic> col = observation.col(c);
        const double mean = static_cast<double>(col.sum()) / static_cast<double>(S);
        double var = 0.0;
        for (Index i = 0; i < S; ++i) {
            const double d = static_cast<double>(col(i)) - mean;
            var += d * d;
        }
        if (var <= 0.0)
            result.dropped_channels.push_back(c);
        else
            usable.push_back(c);
    }
    if (usable.empty()) throw std::runtime_error("align: every selected observation channel has zero variance");

    result.scores.resize(T_M);
    for (Index t = 0; t < T_M; ++t) {
        double p = 0.0;
        for (Index c : usable) {
            const Eigen::Vector<Scalar, Eigen::Dynamic> obs_col = observation.col(c);
            const Eigen::Vector<Scalar, Eigen::Dynamic> win = intercepted.col(c).segment(t, S);
            p += pearson<Scalar>(obs_col, win);
        }
        result.scores(t) = p;
    }

    Index best = 0;
    for (Index t = 1; t < T_M; ++t)
        if (result.scores(t) > result.scores(best)) best = t;
    result.xi = best;
    result.score = result.scores(best);
    result.used_channels = std::move(usable);
    return result;
}

}  // namespace mfrs
