#pragma once

#include <array>
#include <cmath>
#include <cstddef>

namespace cellmix {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2() = default;
    Vec2(double x_, double y_) : x(x_), y(y_) {}

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    Vec2& operator+=(const Vec2& o) { x += o.x; y += o.y; return *this; }
    double norm() const { return std::hypot(x, y); }
    double norm2() const { return x * x + y * y; }
};

inline Vec2 operator*(double s, const Vec2& v) { return {v.x * s, v.y * s}; }

// Rotate by +90 degrees: maps a gradient to the induced velocity (-g_y, g_x).
inline Vec2 perp(const Vec2& g) { return {-g.y, g.x}; }

struct Rect {
    double x0 = 0.0, y0 = 0.0, w = 1.0, h = 1.0;

    bool contains(const Vec2& q) const {
        return q.x >= x0 && q.x <= x0 + w && q.y >= y0 && q.y <= y0 + h;
    }
    Vec2 to_local(const Vec2& q) const { return {(q.x - x0) / w, (q.y - y0) / h}; }
    Vec2 to_global(const Vec2& u) const { return {x0 + u.x * w, y0 + u.y * h}; }
    double area() const { return w * h; }
    Vec2 center() const { return {x0 + 0.5 * w, y0 + 0.5 * h}; }
};

// Corners and side midpoints of the unit square: the stagnation set of the
// regularized cellular streams.  With the center added, these are the nine
// points where stream hessians may blow up.
inline const std::array<Vec2, 8>& stagnation_points() {
    static const std::array<Vec2, 8> pts = {{{0.0, 0.0},
                                             {1.0, 0.0},
                                             {0.0, 1.0},
                                             {1.0, 1.0},
                                             {0.5, 0.0},
                                             {0.5, 1.0},
                                             {0.0, 0.5},
                                             {1.0, 0.5}}};
    return pts;
}

inline const std::array<Vec2, 9>& special_points() {
    static const std::array<Vec2, 9> pts = {{{0.0, 0.0},
                                             {1.0, 0.0},
                                             {0.0, 1.0},
                                             {1.0, 1.0},
                                             {0.5, 0.0},
                                             {0.5, 1.0},
                                             {0.0, 0.5},
                                             {1.0, 0.5},
                                             {0.5, 0.5}}};
    return pts;
}

// Distance to the nearest corner / side-midpoint, and its gradient (unit
// vector pointing away from that point).  The gradient is undefined on the
// equidistance lines; ties resolve to the first nearest point in the fixed
// order above, which is enough for the measure-zero set involved.
struct PointDistance {
    double d;
    Vec2 grad;
};

inline PointDistance dist_stagnation(const Vec2& q) {
    double best = 1e300;
    Vec2 dir{1.0, 0.0};
    for (const Vec2& p : stagnation_points()) {
        const Vec2 r = q - p;
        const double d = r.norm();
        if (d < best) {
            best = d;
            dir = d > 0 ? r * (1.0 / d) : Vec2{1.0, 0.0};
        }
    }
    return {best, dir};
}

inline PointDistance dist_special(const Vec2& q) {
    double best = 1e300;
    Vec2 dir{1.0, 0.0};
    for (const Vec2& p : special_points()) {
        const Vec2 r = q - p;
        const double d = r.norm();
        if (d < best) {
            best = d;
            dir = d > 0 ? r * (1.0 / d) : Vec2{1.0, 0.0};
        }
    }
    return {best, dir};
}

inline double dist_to_boundary(const Vec2& q) {
    return std::min(std::min(q.x, 1.0 - q.x), std::min(q.y, 1.0 - q.y));
}

inline bool is_corner(const Vec2& q, double tol = 0.0) {
    const bool cx = std::abs(q.x) <= tol || std::abs(q.x - 1.0) <= tol;
    const bool cy = std::abs(q.y) <= tol || std::abs(q.y - 1.0) <= tol;
    return cx && cy;
}

} // namespace cellmix
