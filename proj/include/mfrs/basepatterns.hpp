#pragma once

// Base-pattern extraction: primary periods from the period-domain spectrum,
// harmonic frequencies from per-channel magnitude spectra, plus manual
// overrides and the combined frequency inventory.

#include "mfrs/rational.hpp"
#include "mfrs/series.hpp"
#include "mfrs/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfrs {

struct HarmonicEntry {
    Rational frequency;  // k / T, stored reduced
    double score{0.0};
};

struct BasePatternSet {
    std::vector<Index> primary_periods;        // strictly ascending, each >= 2
    std::vector<HarmonicEntry> harmonic_freqs; // descending score, <= Q entries
    std::vector<Index> manual_periods;         // user-injected, ascending

    bool empty() const {
        return primary_periods.empty() && harmonic_freqs.empty() && manual_periods.empty();
    }
};

struct ExtractionConfig {
    Index L_p{-1};                    // period-domain cap; -1 -> min(5000, L/4)
    Index Q{8};                       // max harmonic count
    Index min_channels{-1};           // leading channels scanned for harmonic scoring; -1 -> all
    double min_harmonic_score{-1.0};  // floor on accumulated score; -1 -> 0.1 * scanned channels
};

// Knobs of the iterated peak-extraction loop. The defaults are part of the
// library's contract; tests may tighten or loosen them.
struct PbpOptions {
    double median_floor{10.0};    // significance = median_floor * median(psi)
    double relative_floor{0.15};  // ... or relative_floor * max(psi), whichever larger
    Index sidelobe_bins{3};       // persistent zeroing half-width around extracted bins
    Index max_rounds{64};
};

template <class Scalar>
struct PbpResult {
    std::vector<Index> periods;       // ascending
    PeriodViewT<Scalar> residual;     // final working copy after exhaustion
};

// Primary-period extraction. Each round sweeps T = 2..floor(L_p/2) over a
// pass-local copy of the residual: T is extracted when it is the argmax of
// the window psi[1..2T] (ties toward the smaller period) and rises above the
// round's significance floor; the window is then zeroed for the rest of the
// pass so nested periods defer to later rounds. Extracted peaks are erased
// from the persistent residual together with their +-sidelobe_bins bin
// neighborhood, and rounds repeat until one extracts nothing. The floor is
// recomputed from the residual each round, which makes exhaustion exact:
// re-running on the final residual extracts nothing.
template <class Scalar>
PbpResult<Scalar> extract_pbp_with_state(const PeriodViewT<Scalar>& pv, const PbpOptions& opt = {}) {
    const Index L_p = pv.max_period();
    const Index L = pv.conversion_length;
    if (L_p < 2) throw std::invalid_argument("extract_pbp: period view must cover periods up to at least 2");
    if (L < 4) throw std::invalid_argument("extract_pbp: invalid conversion length");

    using Vec = Eigen::Vector<Scalar, Eigen::Dynamic>;
    Vec W = pv.psi;  // persistent residual; W(i) holds period i+1

    // Everything below this is numerical dust (transform round-off), not
    // signal; it must never win an argmax round.
    const Scalar zero_floor = Scalar(1e-9) * W.maxCoeff();

    auto bin_of = [&](Index T) {
        return static_cast<Index>(std::llround(static_cast<double>(L) / static_cast<double>(T)));
    };

    // For long periods several T share one bin (a plateau); only the
    // bin-canonical representative T == round(L/bin) may claim an argmax,
    // since its aliases are quantization artifacts of the same spectral line.
    std::vector<bool> canonical(static_cast<size_t>(L_p) + 1, false);
    for (Index T = 1; T <= L_p; ++T) canonical[static_cast<size_t>(T)] = (bin_of(bin_of(T)) == T);

    std::vector<Index> extracted;
    std::vector<Scalar> scratch;
    for (Index round = 0; round < opt.max_rounds; ++round) {
        // Significance floor from the current residual (period 1 excluded).
        scratch.assign(W.data() + 1, W.data() + L_p);
        Scalar med = 0;
        if (!scratch.empty()) {
            auto mid = scratch.begin() + static_cast<std::ptrdiff_t>(scratch.size() / 2);
            std::nth_element(scratch.begin(), mid, scratch.end());
            med = *mid;
            if (scratch.size() % 2 == 0) {
                auto lo = std::max_element(scratch.begin(), mid);
                med = (*lo + med) / Scalar(2);
            }
        }
        const Scalar theta =
            std::max({Scalar(opt.median_floor) * med, Scalar(opt.relative_floor) * W.maxCoeff(), zero_floor});

        Vec P = W;  // pass-local copy: prefix zeroing lives only inside this round
        std::vector<Index> this_round;
        for (Index T = 2; T <= L_p / 2; ++T) {
            const Index win = 2 * T;  // window covers periods 1..2T
            Index arg = 1;
            Scalar best = P(0);
            for (Index u = 2; u <= win; ++u) {
                if (canonical[static_cast<size_t>(u)] && P(u - 1) > best) { best = P(u - 1); arg = u; }
            }
            if (arg == T && best > theta) {
                this_round.push_back(T);
                P.head(win).setZero();
            }
        }
        if (this_round.empty()) break;

        for (Index T : this_round) {
            extracted.push_back(T);
            const Index b = bin_of(T);
            for (Index u = 1; u <= L_p; ++u)
                if (std::abs(bin_of(u) - b) <= opt.sidelobe_bins) W(u - 1) = Scalar(0);
        }
    }

    std::sort(extracted.begin(), extracted.end());
    for (Index i = 0; i < L_p; ++i)
        if (W(i) <= zero_floor) W(i) = Scalar(0);  // sweep out the dust
    PbpResult<Scalar> out;
    out.periods = std::move(extracted);
    out.residual.psi = std::move(W);
    out.residual.conversion_length = L;
    return out;
}

template <class Scalar>
std::vector<Index> extract_pbp(const PeriodViewT<Scalar>& pv, const PbpOptions& opt = {}) {
    return extract_pbp_with_state(pv, opt).periods;
}

// Candidate harmonics for ascending primary periods T_1 < T_2 < ... The
// frequencies f^m = 1/T_m descend; the harmonic range for pattern m keeps
// k*f^m below half the previous frequency: K = floor(T_1/2) for m = 1 and
// K = floor(T_m / (2*T_{m-1})) for m >= 2. Candidates are k/T_m for
// k = 2..K, deduplicated by reduced value, enumeration order preserved.
inline std::vector<Rational> enumerate_harmonic_candidates(const std::vector<Index>& primaries) {
    if (primaries.empty()) throw std::invalid_argument("harmonic candidates: no primary periods");
    for (size_t m = 0; m < primaries.size(); ++m) {
        if (primaries[m] < 2) throw std::invalid_argument("harmonic candidates: period must be >= 2");
        if (m > 0 && primaries[m] <= primaries[m - 1])
            throw std::invalid_argument("harmonic candidates: periods must be strictly ascending");
    }
    std::vector<Rational> out;
    for (size_t m = 0; m < primaries.size(); ++m) {
        const Index T = primaries[m];
        const Index K = (m == 0) ? T / 2 : T / (2 * primaries[m - 1]);
        for (Index k = 2; k <= K; ++k) {
            Rational q(k, T);
            if (std::find(out.begin(), out.end(), q) == out.end()) out.push_back(q);
        }
    }
    return out;
}

// Score candidates against per-channel spectra and keep the best Q. Each
// scanned channel adds Phi_c(candidate)/Phi_c(f^1), both read at the nearest
// bin; channels whose normalizer bin is empty contribute nothing. Entries
// below the score floor are dropped; survivors are ranked by descending
// score with ties toward the lower frequency.
template <class Scalar>
std::vector<HarmonicEntry> extract_hbp(const std::vector<SpectrumViewT<Scalar>>& spectra,
                                       const std::vector<Index>& primaries,
                                       const ExtractionConfig& cfg = {}) {
    if (spectra.empty()) throw std::invalid_argument("extract_hbp: no spectra");
    if (primaries.empty()) throw std::invalid_argument("extract_hbp: no primary periods");
    if (cfg.Q < 0) throw std::invalid_argument("extract_hbp: Q must be >= 0");
    const Index L = spectra[0].length_L;
    for (const auto& s : spectra)
        if (s.length_L != L) throw std::invalid_argument("extract_hbp: spectra disagree on series length");

    const Index total_channels = static_cast<Index>(spectra.size());
    Index scanned = cfg.min_channels;
    if (scanned <= 0 || scanned > total_channels) scanned = total_channels;
    const double score_floor =
        cfg.min_harmonic_score >= 0.0 ? cfg.min_harmonic_score : 0.1 * static_cast<double>(scanned);

    const std::vector<Rational> candidates = enumerate_harmonic_candidates(primaries);
    if (candidates.empty() || cfg.Q == 0) return {};

    auto read_bin = [&](const SpectrumViewT<Scalar>& s, Index bin) -> double {
        if (bin < 1 || bin > s.num_bins()) return 0.0;
        return static_cast<double>(s.magnitudes(bin - 1));
    };
    auto bin_of = [&](const Rational& q) {
        return static_cast<Index>(std::llround(static_cast<double>(L) * static_cast<double>(q.num) /
                                               static_cast<double>(q.den)));
    };

    const Index norm_bin =
        static_cast<Index>(std::llround(static_cast<double>(L) / static_cast<double>(primaries.front())));

    // A channel only contributes when its normalizer line rises above the
    // channel's numerical dust; otherwise dust/dust ratios explode.
    std::vector<double> norm_value(static_cast<size_t>(scanned), 0.0);
    for (Index c = 0; c < scanned; ++c) {
        const auto& s = spectra[static_cast<size_t>(c)];
        const double dust = 1e-9 * static_cast<double>(s.magnitudes.maxCoeff());
        const double v = read_bin(s, norm_bin);
        norm_value[static_cast<size_t>(c)] = (v > dust && v > 0.0) ? v : 0.0;
    }

    std::vector<HarmonicEntry> scored;
    scored.reserve(candidates.size());
    for (const Rational& q : candidates) {
        const Index b = bin_of(q);
        double score = 0.0;
        for (Index c = 0; c < scanned; ++c) {
            const double denom = norm_value[static_cast<size_t>(c)];
            if (denom <= 0.0) continue;
            score += read_bin(spectra[static_cast<size_t>(c)], b) / denom;
        }
        if (score >= score_floor) scored.push_back(HarmonicEntry{q, score});
    }

    std::stable_sort(scored.begin(), scored.end(), [](const HarmonicEntry& a, const HarmonicEntry& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.frequency < b.frequency;
    });
    if (static_cast<Index>(scored.size()) > cfg.Q) scored.resize(static_cast<size_t>(cfg.Q));
    return scored;
}

namespace detail {

inline bool frequency_present(const BasePatternSet& set, const Rational& q) {
    for (Index T : set.primary_periods)
        if (Rational(1, T) == q) return true;
    for (Index T : set.manual_periods)
        if (Rational(1, T) == q) return true;
    for (const auto& h : set.harmonic_freqs)
        if (h.frequency == q) return true;
    return false;
}

}  // namespace detail

// Insert user-chosen periods; duplicates of existing frequencies are ignored.
inline BasePatternSet merge_manual(BasePatternSet set, const std::vector<Index>& manual) {
    for (Index T : manual) {
        if (T < 2) throw std::invalid_argument("manual period must be >= 2, got " + std::to_string(T));
        if (detail::frequency_present(set, Rational(1, T))) continue;
        set.manual_periods.push_back(T);
    }
    std::sort(set.manual_periods.begin(), set.manual_periods.end());
    set.manual_periods.erase(std::unique(set.manual_periods.begin(), set.manual_periods.end()),
                             set.manual_periods.end());
    return set;
}

// Full frequency inventory f_1 < f_2 < ... < f_N: reciprocals of primary and
// manual periods plus harmonic frequencies, deduplicated, ascending.
inline std::vector<Rational> all_frequencies(const BasePatternSet& set) {
    if (set.empty()) throw std::invalid_argument("all_frequencies: base-pattern set is empty");
    std::vector<Rational> out;
    for (Index T : set.primary_periods) out.emplace_back(1, T);
    for (Index T : set.manual_periods) out.emplace_back(1, T);
    for (const auto& h : set.harmonic_freqs) out.push_back(h.frequency);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

// Largest period in the inventory (the slowest base-pattern's T).
inline Index max_period(const BasePatternSet& set) {
    Index best = 0;
    for (const Rational& q : all_frequencies(set)) best = std::max(best, static_cast<Index>(q.period()));
    return best;
}

// End-to-end analysis of a multichannel series: per-channel primary
// extraction (results unioned across channels), harmonic scoring over all
// channel spectra, then manual merges.
template <class Scalar>
BasePatternSet analyze_series(const MultiSeriesT<Scalar>& series, const ExtractionConfig& cfg = {},
                              const std::vector<Index>& manual = {}) {
    validate_series(series);
    const Index C = series.channels();

    std::vector<SpectrumViewT<Scalar>> spectra;
    spectra.reserve(static_cast<size_t>(C));
    for (Index c = 0; c < C; ++c) spectra.push_back(magnitude_spectrum<Scalar>(series.values, c));

    std::vector<Index> primaries;
    for (Index c = 0; c < C; ++c) {
        PeriodViewT<Scalar> pv = to_period_domain(spectra[static_cast<size_t>(c)], cfg.L_p);
        for (Index T : extract_pbp(pv)) primaries.push_back(T);
    }
    std::sort(primaries.begin(), primaries.end());
    primaries.erase(std::unique(primaries.begin(), primaries.end()), primaries.end());

    BasePatternSet set;
    set.primary_periods = primaries;
    if (!primaries.empty()) set.harmonic_freqs = extract_hbp(spectra, primaries, cfg);
    if (!manual.empty()) set = merge_manual(std::move(set), manual);
    return set;
}

}  // namespace mfrs
