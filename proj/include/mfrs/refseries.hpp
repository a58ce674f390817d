#pragma once

// Reference-series bank: one deterministic single-frequency column per base
// pattern, over the dataset timeline, in one of four waveforms. All modulo
// and floor forms are evaluated in exact integer arithmetic on the reduced
// k/T pair, so columns are reproducible bit for bit.

#include "mfrs/rational.hpp"
#include "mfrs/series.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfrs {

enum class Waveform { sine, sawtooth, rectangle, pulse };

inline const char* waveform_name(Waveform w) {
    switch (w) {
        case Waveform::sine: return "sine";
        case Waveform::sawtooth: return "sawtooth";
        case Waveform::rectangle: return "rectangle";
        case Waveform::pulse: return "pulse";
    }
    throw std::invalid_argument("unknown waveform");
}

inline Waveform waveform_from_name(const std::string& name) {
    if (name == "sine") return Waveform::sine;
    if (name == "sawtooth") return Waveform::sawtooth;
    if (name == "rectangle") return Waveform::rectangle;
    if (name == "pulse") return Waveform::pulse;
    throw std::invalid_argument("unknown waveform '" + name + "' (expected sine|sawtooth|rectangle|pulse)");
}

template <class Scalar = double>
struct ReferenceSeriesT {
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> values;  // L x N
    std::vector<Rational> frequencies;                             // column-aligned
    Waveform waveform{Waveform::sine};

    Index length() const { return values.rows(); }
    Index count() const { return values.cols(); }
};

using ReferenceSeries = ReferenceSeriesT<double>;

template <class Scalar = double>
ReferenceSeriesT<Scalar> generate(const std::vector<Rational>& frequencies, Index L, Waveform waveform) {
    if (L < 1) throw std::invalid_argument("reference series length must be >= 1, got " + std::to_string(L));
    if (frequencies.empty()) throw std::invalid_argument("reference series need at least one frequency");
    for (const Rational& f : frequencies) {
        if (f.num < 1) throw std::invalid_argument("frequency numerator must be >= 1, got " + f.str());
        if (f.den < 2) throw std::invalid_argument("frequency " + f.str() + " has period < 2");
    }

    ReferenceSeriesT<Scalar> rs;
    rs.waveform = waveform;
    rs.frequencies = frequencies;
    rs.values.resize(L, static_cast<Index>(frequencies.size()));

    for (Index j = 0; j < rs.values.cols(); ++j) {
        const std::int64_t k = frequencies[static_cast<size_t>(j)].num;
        const std::int64_t T = frequencies[static_cast<size_t>(j)].den;
        for (Index t = 0; t < L; ++t) {
            const std::int64_t phase = (static_cast<std::int64_t>(t) * k) % T;
            Scalar v;
            switch (waveform) {
                case Waveform::sine:
                    v = static_cast<Scalar>(
                        std::sin(2.0 * std::numbers::pi * static_cast<double>(phase) / static_cast<double>(T)));
                    break;
                case Waveform::sawtooth:
                    v = static_cast<Scalar>(phase);
                    break;
                case Waveform::rectangle:
                    v = static_cast<Scalar>((2 * static_cast<std::int64_t>(t) * k / T) % 2);
                    break;
                case Waveform::pulse:
                    v = static_cast<Scalar>(phase == 0 ? 1 : 0);
                    break;
                default:
                    throw std::invalid_argument("unknown waveform");
            }
            rs.values(t, j) = v;
        }
    }
    return rs;
}

// Rows [xi, xi + span) of the bank.
template <class Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> slice_rs(const ReferenceSeriesT<Scalar>& rs, Index xi,
                                                               Index span) {
    if (span < 1) throw std::invalid_argument("slice span must be >= 1, got " + std::to_string(span));
    if (xi < 0 || xi + span > rs.length())
        throw std::out_of_range("reference slice [" + std::to_string(xi) + ", " + std::to_string(xi + span) +
                                ") exceeds bank length " + std::to_string(rs.length()));
    return rs.values.middleRows(xi, span);
}

// Column header used by the CSV bank format: "rs_<k>_over_<T>", reduced.
inline std::string rs_column_name(const Rational& f) {
    return "rs_" + std::to_string(f.num) + "_over_" + std::to_string(f.den);
}

}  // namespace mfrs
