#pragma once

// Frequency-domain analysis: magnitude spectra and the period-domain view
// used by base-pattern extraction.
//
// Conventions:
//  - The input channel is mean-subtracted before the transform.
//  - Magnitudes are the unnormalized |DFT| at bins l = 1 .. floor(L/2)-1;
//    the DC bin and (for even L) the Nyquist bin are excluded.
//  - The period-domain view maps period T to bin round(L/T); periods whose
//    bin falls outside the kept range read as zero. In particular psi(1) and
//    psi(2) are always zero.

#include "mfrs/series.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

namespace mfrs {

template <class Scalar = double>
struct SpectrumViewT {
    Eigen::Vector<Scalar, Eigen::Dynamic> magnitudes;  // element i holds bin i+1
    Index length_L{0};

    Index num_bins() const { return magnitudes.size(); }

    Scalar magnitude(Index bin) const {
        if (bin < 1 || bin > num_bins())
            throw std::out_of_range("spectrum bin " + std::to_string(bin) + " outside [1, " +
                                    std::to_string(num_bins()) + "]");
        return magnitudes(bin - 1);
    }
};

using SpectrumView = SpectrumViewT<double>;

template <class Scalar>
SpectrumViewT<Scalar> magnitude_spectrum(const Eigen::Vector<Scalar, Eigen::Dynamic>& channel) {
    const Index L = channel.size();
    if (L < 4) throw std::invalid_argument("magnitude_spectrum: need at least 4 samples, got " + std::to_string(L));
    if (!channel.allFinite()) throw std::invalid_argument("magnitude_spectrum: non-finite input");

    std::vector<Scalar> centered(static_cast<size_t>(L));
    const Scalar mean = channel.mean();
    for (Index t = 0; t < L; ++t) centered[static_cast<size_t>(t)] = channel(t) - mean;

    Eigen::FFT<Scalar> fft;
    std::vector<std::complex<Scalar>> freq;
    fft.fwd(freq, centered);

    SpectrumViewT<Scalar> out;
    out.length_L = L;
    const Index n_bins = L / 2 - 1;  // bins 1 .. floor(L/2)-1
    out.magnitudes.resize(n_bins);
    for (Index l = 1; l <= n_bins; ++l) out.magnitudes(l - 1) = std::abs(freq[static_cast<size_t>(l)]);
    return out;
}

// Convenience overload for one column of a series matrix.
template <class Scalar>
SpectrumViewT<Scalar> magnitude_spectrum(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& values,
                                         Index channel) {
    if (channel < 0 || channel >= values.cols())
        throw std::out_of_range("magnitude_spectrum: channel " + std::to_string(channel) + " outside [0, " +
                                std::to_string(values.cols()) + ")");
    Eigen::Vector<Scalar, Eigen::Dynamic> col = values.col(channel);
    return magnitude_spectrum(col);
}

template <class Scalar = double>
struct PeriodViewT {
    Eigen::Vector<Scalar, Eigen::Dynamic> psi;  // element i holds period i+1
    Index conversion_length{0};                 // L of the originating spectrum

    Index max_period() const { return psi.size(); }

    Scalar operator()(Index period) const {
        if (period < 1 || period > max_period())
            throw std::out_of_range("period " + std::to_string(period) + " outside [1, " +
                                    std::to_string(max_period()) + "]");
        return psi(period - 1);
    }
};

using PeriodView = PeriodViewT<double>;

inline Index default_period_cap(Index L) { return std::min<Index>(5000, L / 4); }

// Map the spectrum into the period domain up to period_cap (L_p). A cap of
// -1 selects min(5000, L/4). The cap must satisfy 2 <= L_p < L/2.
template <class Scalar>
PeriodViewT<Scalar> to_period_domain(const SpectrumViewT<Scalar>& spectrum, Index period_cap = -1) {
    const Index L = spectrum.length_L;
    if (L < 4) throw std::invalid_argument("to_period_domain: spectrum length too small");
    if (period_cap < 0) period_cap = default_period_cap(L);
    if (period_cap < 2) throw std::invalid_argument("to_period_domain: period cap must be >= 2");
    if (2 * period_cap >= L)
        throw std::invalid_argument("to_period_domain: period cap " + std::to_string(period_cap) +
                                    " must be < L/2 = " + std::to_string(L) + "/2");

    PeriodViewT<Scalar> out;
    out.conversion_length = L;
    out.psi = Eigen::Vector<Scalar, Eigen::Dynamic>::Zero(period_cap);
    for (Index T = 1; T <= period_cap; ++T) {
        const Index bin = static_cast<Index>(std::llround(static_cast<double>(L) / static_cast<double>(T)));
        if (bin >= 1 && bin <= spectrum.num_bins()) out.psi(T - 1) = spectrum.magnitudes(bin - 1);
    }
    return out;
}

}  // namespace mfrs
