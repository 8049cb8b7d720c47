#pragma once

#include "cellmix/geometry.hpp"

#include <cmath>

namespace cellmix {

// Cellular generator on the closed unit square:
//   phi(x, y) = (4/pi) sin(pi x) sin(pi y) / (sin(pi x) + sin(pi y)),
// extended by 0 at the four corners.  Level sets are nested simple closed
// curves around (1/2, 1/2); max value is 2/pi at the center.  The closed-form
// first and second derivatives below blow up like 1/d near the corners.
struct BaseEval {
    double value = 0.0;
    Vec2 grad{};
    double hxx = 0.0, hxy = 0.0, hyy = 0.0;
    bool singular = false; // exactly at a corner: hessian undefined
};

inline constexpr double kBaseMax = 2.0 / M_PI; // phi(1/2, 1/2)

inline BaseEval eval_base(const Vec2& q) {
    BaseEval out;
    const double sx = std::sin(M_PI * q.x);
    const double sy = std::sin(M_PI * q.y);
    const double sum = sx + sy;
    if (sum <= 0.0) {
        // Corner: value 0; gradient by convention -4 times the outward
        // diagonal direction (one-sided limits along the two edges disagree,
        // so a convention is required); hessian flagged singular.
        out.singular = true;
        const double gx = (q.x < 0.5 ? 1.0 : -1.0) * 4.0 / std::sqrt(2.0);
        const double gy = (q.y < 0.5 ? 1.0 : -1.0) * 4.0 / std::sqrt(2.0);
        out.grad = {gx, gy};
        return out;
    }
    const double cx = std::cos(M_PI * q.x);
    const double cy = std::cos(M_PI * q.y);
    const double inv = 1.0 / sum;
    const double inv2 = inv * inv;
    out.value = (4.0 / M_PI) * sx * sy * inv;
    out.grad = {4.0 * cx * sy * sy * inv2, 4.0 * cy * sx * sx * inv2};
    out.hxx = -4.0 * M_PI * sx * sy * sy * inv2 - 8.0 * M_PI * cx * cx * sy * sy * inv2 * inv;
    out.hyy = -4.0 * M_PI * sy * sx * sx * inv2 - 8.0 * M_PI * cy * cy * sx * sx * inv2 * inv;
    out.hxy = 8.0 * M_PI * cx * cy * sx * sy * inv2 * inv;
    return out;
}

inline double base_value(const Vec2& q) {
    const double sx = std::sin(M_PI * q.x);
    const double sy = std::sin(M_PI * q.y);
    const double sum = sx + sy;
    return sum > 0.0 ? (4.0 / M_PI) * sx * sy / sum : 0.0;
}

} // namespace cellmix
