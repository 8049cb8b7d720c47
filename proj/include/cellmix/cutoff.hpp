#pragma once

#include <cmath>

namespace cellmix {

// Smooth non-decreasing profile with f(s) = 5s on [0, 1/10] and f(s) = 1 on
// [1/5, inf).  On (1/10, 1/5) the two branches are blended with a C-infinity
// step built from exponential bump quotients; the blend is monotone because
// 5w + (5s - 1) w' >= 0 there (w' <= 0 and 5s - 1 < 0).
namespace detail {
inline double bump(double t) { return t > 0.0 ? std::exp(-1.0 / t) : 0.0; }
inline double bump_deriv(double t) {
    if (t <= 0.0) return 0.0;
    const double e = std::exp(-1.0 / t);
    return e / (t * t);
}
} // namespace detail

struct CutoffValue {
    double f;
    double df;
};

inline CutoffValue cutoff_with_deriv(double s) {
    if (s <= 0.1) return {5.0 * s, 5.0};
    if (s >= 0.2) return {1.0, 0.0};
    const double u = (s - 0.1) / 0.1;
    const double v = (0.2 - s) / 0.1;
    const double bu = detail::bump(u);
    const double bv = detail::bump(v);
    const double w = bv / (bv + bu);
    // dw/ds = -10 (B'(v) B(u) + B(v) B'(u)) / (B(v) + B(u))^2
    const double dw = -10.0 * (detail::bump_deriv(v) * bu + bv * detail::bump_deriv(u)) /
                      ((bv + bu) * (bv + bu));
    const double f = 5.0 * s * w + (1.0 - w);
    const double df = 5.0 * w + (5.0 * s - 1.0) * dw;
    return {f, df};
}

inline double cutoff(double s) { return cutoff_with_deriv(s).f; }
inline double cutoff_deriv(double s) { return cutoff_with_deriv(s).df; }

} // namespace cellmix
