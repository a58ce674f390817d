#pragma once

// Exact rational frequencies k/T. Harmonic frequencies are integer multiples
// of 1/T and are generally not unit fractions; carrying them as reduced
// integer ratios keeps the waveform formulas in exact integer arithmetic and
// makes frequency-set comparisons drift-free.

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>

namespace mfrs {

struct Rational {
    // Canonical form: reduced, den >= 1. Frequencies used here are positive.
    std::int64_t num{0};
    std::int64_t den{1};

    Rational() = default;
    Rational(std::int64_t k, std::int64_t t) : num(k), den(t) { reduce(); }

    void reduce() {
        if (den == 0) throw std::invalid_argument("Rational: zero denominator");
        if (den < 0) { num = -num; den = -den; }
        const std::int64_t g = std::gcd(num < 0 ? -num : num, den);
        if (g > 1) { num /= g; den /= g; }
        if (num == 0) den = 1;
    }

    double value() const { return static_cast<double>(num) / static_cast<double>(den); }

    // The fundamental period of a waveform at frequency num/den, in steps.
    std::int64_t period() const { return den; }

    std::string str() const { return std::to_string(num) + "/" + std::to_string(den); }

    friend bool operator==(const Rational& a, const Rational& b) {
        return a.num == b.num && a.den == b.den;
    }
    friend bool operator!=(const Rational& a, const Rational& b) { return !(a == b); }
    friend bool operator<(const Rational& a, const Rational& b) {
        // Denominators here are period-sized (<= ~1e5), so the cross product
        // stays far inside the int64 range.
        return a.num * b.den < b.num * a.den;
    }
    friend bool operator>(const Rational& a, const Rational& b) { return b < a; }
    friend bool operator<=(const Rational& a, const Rational& b) { return !(b < a); }
    friend bool operator>=(const Rational& a, const Rational& b) { return !(a < b); }
};

}  // namespace mfrs
