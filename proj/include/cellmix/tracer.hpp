#pragma once

#include "cellmix/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace cellmix {

// Classical RK4 with step-doubling error control.  The half-step solution is
// kept with the Richardson correction, so accepted steps are locally 5th
// order.  Error budget is per unit time: a step of size h may contribute at
// most tol * h.
struct StepControl {
    double tol_per_unit_time = 1e-8;
    double h_init = 1e-2;
    double h_min = 1e-13;
    double h_max = 5e-2;
};

template <typename Rhs>
inline Vec2 rk4_step(const Rhs& rhs, const Vec2& y, double t, double h) {
    const Vec2 k1 = rhs(y, t);
    const Vec2 k2 = rhs(y + (h / 2) * k1, t + h / 2);
    const Vec2 k3 = rhs(y + (h / 2) * k2, t + h / 2);
    const Vec2 k4 = rhs(y + h * k3, t + h);
    return y + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4);
}

// Advance by exactly dt.  Returns false if the step size underflowed (the
// caller decides how to treat the frozen state).  step_cap, when set, bounds
// h from above as a function of the current position (used to resolve motion
// near stagnation points).
template <typename Rhs>
bool integrate_fixed_time(const Rhs& rhs, Vec2& y, double t0, double dt, const StepControl& ctl,
                          const std::function<double(const Vec2&)>& step_cap = nullptr) {
    if (dt == 0.0) return true;
    const double dir = dt > 0 ? 1.0 : -1.0;
    double t = 0.0;
    double h = std::min(ctl.h_init, std::abs(dt));
    while (t < std::abs(dt)) {
        h = std::min(h, std::abs(dt) - t);
        if (step_cap) h = std::min(h, std::max(step_cap(y), ctl.h_min));
        const double hs = dir * h;
        const Vec2 full = rk4_step(rhs, y, t0 + dir * t, hs);
        const Vec2 half = rk4_step(rhs, y, t0 + dir * t, hs / 2);
        const Vec2 fine = rk4_step(rhs, half, t0 + dir * (t + h / 2), hs / 2);
        const Vec2 diff = fine - full;
        const double err = diff.norm() / 15.0;
        const double allowed = ctl.tol_per_unit_time * h;
        if (err <= allowed || h <= ctl.h_min * 1.0001) {
            y = fine + (1.0 / 15.0) * diff;
            t += h;
            const double grow = err > 0 ? 0.9 * std::pow(allowed / err, 0.25) : 5.0;
            h = std::min(ctl.h_max, h * std::clamp(grow, 0.2, 5.0));
            if (h < ctl.h_min) return false;
        } else {
            h = std::max(ctl.h_min, 0.5 * h);
            if (h <= ctl.h_min && err > 100 * allowed) return false;
        }
    }
    return true;
}

// First-return time to the Poincare section {x = x_sec, y < y_lim} crossed
// with dx/dt < 0.  Starts from a point assumed on or near the section and
// integrates the autonomous field until the next such crossing.
struct ReturnResult {
    double time = 0.0;
    bool ok = false;
};

template <typename Rhs>
ReturnResult first_return_time(const Rhs& rhs, Vec2 start, double x_sec, double y_lim,
                               double time_cap, const StepControl& ctl) {
    auto rhs_t = [&](const Vec2& y, double) { return rhs(y); };
    double t = 0.0;
    double h = ctl.h_init;
    Vec2 y = start;
    const double min_time = 1e-3; // ignore the launch crossing itself
    while (t < time_cap) {
        Vec2 ynew = y;
        const double hs = std::min(h, time_cap - t);
        const Vec2 full = rk4_step(rhs_t, y, t, hs);
        const Vec2 halfp = rk4_step(rhs_t, y, t, hs / 2);
        const Vec2 fine = rk4_step(rhs_t, halfp, t + hs / 2, hs / 2);
        const Vec2 diff = fine - full;
        const double err = diff.norm() / 15.0;
        const double allowed = ctl.tol_per_unit_time * hs;
        if (err > allowed && hs > ctl.h_min * 1.0001) {
            h = std::max(ctl.h_min, 0.5 * hs);
            continue;
        }
        ynew = fine + (1.0 / 15.0) * diff;
        const double tnew = t + hs;
        // Crossing test on the accepted step.
        if (tnew > min_time && (y.x - x_sec) > 0.0 && (ynew.x - x_sec) <= 0.0 &&
            std::min(y.y, ynew.y) < y_lim) {
            // Bisect the step for the crossing instant.
            double lo = 0.0, hi = hs;
            Vec2 ylo = y;
            for (int it = 0; it < 60 && (hi - lo) > 1e-15 * std::max(1.0, tnew); ++it) {
                const double mid = 0.5 * (lo + hi);
                Vec2 ym = ylo;
                integrate_fixed_time(rhs_t, ym, t + lo, mid - lo, ctl);
                if (ym.x - x_sec > 0.0) {
                    lo = mid;
                    ylo = ym;
                } else {
                    hi = mid;
                }
            }
            return {t + 0.5 * (lo + hi), true};
        }
        y = ynew;
        t = tnew;
        const double grow = err > 0 ? 0.9 * std::pow(allowed / err, 0.25) : 5.0;
        h = std::min(ctl.h_max, hs * std::clamp(grow, 0.2, 5.0));
        if (h < ctl.h_min) break;
    }
    return {time_cap, false};
}

} // namespace cellmix
