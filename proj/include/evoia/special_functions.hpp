#pragma once
// Digamma and trigamma with absolute error below 1e-10 on the ranges the
// evidential math touches. Both use upward recurrence to shift the argument
// past a cutoff, then the Bernoulli asymptotic series. lgamma comes from
// <cmath>; it already meets the accuracy requirement.

#include <cmath>
#include <stdexcept>
#include <string>

namespace evoia {

namespace detail {
inline void require_positive_finite(double x, const char* fn) {
    if (!(x > 0.0) || !std::isfinite(x)) {
        throw std::domain_error(std::string(fn) + ": argument must be positive and finite, got " +
                                std::to_string(x));
    }
}
}  // namespace detail

// psi(x) = d/dx ln Gamma(x)
inline double digamma(double x) {
    detail::require_positive_finite(x, "digamma");
    double result = 0.0;
    while (x < 6.0) {  // psi(x) = psi(x+1) - 1/x
        result -= 1.0 / x;
        x += 1.0;
    }
    // psi(x) ~ ln x - 1/(2x) - sum B_{2n} / (2n x^{2n})
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    double series = inv2 * (1.0 / 12.0 -
                    inv2 * (1.0 / 120.0 -
                    inv2 * (1.0 / 252.0 -
                    inv2 * (1.0 / 240.0 -
                    inv2 * (1.0 / 132.0 -
                    inv2 * (691.0 / 32760.0 -
                    inv2 * (1.0 / 12.0)))))));
    return result + std::log(x) - 0.5 * inv - series;
}

// psi'(x), the first derivative of digamma
inline double trigamma(double x) {
    detail::require_positive_finite(x, "trigamma");
    double result = 0.0;
    while (x < 8.0) {  // psi'(x) = psi'(x+1) + 1/x^2
        result += 1.0 / (x * x);
        x += 1.0;
    }
    // psi'(x) ~ 1/x + 1/(2x^2) + sum B_{2n} / x^{2n+1}
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    double series = inv * inv2 * (1.0 / 6.0 -
                    inv2 * (1.0 / 30.0 -
                    inv2 * (1.0 / 42.0 -
                    inv2 * (1.0 / 30.0 -
                    inv2 * (5.0 / 66.0 -
                    inv2 * (691.0 / 2730.0))))));
    return result + inv + 0.5 * inv2 + series;
}

inline double log_gamma(double x) {
    detail::require_positive_finite(x, "log_gamma");
    return std::lgamma(x);
}

}  // namespace evoia
