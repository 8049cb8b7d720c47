#include "cellmix/field.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cellmix {

ScalarField ScalarField::stratified(int level_n0, int per_cell_m,
                                    const std::function<double(Vec2)>& rho0,
                                    std::uint64_t seed) {
    const int k = static_cast<int>(std::lround(std::sqrt(static_cast<double>(per_cell_m))));
    if (k * k != per_cell_m || k < 1)
        throw std::invalid_argument("per-cell particle count must be a square");
    const int cells = 1 << level_n0;
    const int side = cells * k; // jitter sub-lattice resolution
    ScalarField f;
    f.init_level = level_n0;
    f.per_cell = per_cell_m;
    const std::size_t n = static_cast<std::size_t>(side) * side;
    f.x.resize(n);
    f.y.resize(n);
    f.value.resize(n);
    Rng root(seed);
    const double h = 1.0 / side;
    for (int j = 0; j < side; ++j) {
        Rng row = root.fork(static_cast<std::uint64_t>(j));
        for (int i = 0; i < side; ++i) {
            const std::size_t idx = static_cast<std::size_t>(j) * side + i;
            const double px = (i + row.uniform()) * h;
            const double py = (j + row.uniform()) * h;
            f.x[idx] = px;
            f.y[idx] = py;
            f.value[idx] = rho0({px, py});
        }
    }
    for (double v : f.value) f.bound = std::max(f.bound, std::abs(v));
    return f;
}

double ScalarField::mean() const {
    double s = 0.0;
    for (double v : value) s += v;
    return size() ? s / static_cast<double>(size()) : 0.0;
}

double ScalarField::mean_stderr() const {
    if (size() < 2) return 0.0;
    const double m = mean();
    double ss = 0.0;
    for (double v : value) ss += (v - m) * (v - m);
    const double var = ss / static_cast<double>(size() - 1);
    return std::sqrt(var / static_cast<double>(size()));
}

TracerCloud TracerCloud::polygon_disc(Vec2 center, double radius, int vertices) {
    TracerCloud c;
    c.x.resize(vertices);
    c.y.resize(vertices);
    for (int i = 0; i < vertices; ++i) {
        const double th = 2.0 * M_PI * i / vertices;
        c.x[static_cast<std::size_t>(i)] = center.x + radius * std::cos(th);
        c.y[static_cast<std::size_t>(i)] = center.y + radius * std::sin(th);
    }
    return c;
}

TracerCloud TracerCloud::regular_grid(int per_side) {
    TracerCloud c;
    for (int j = 0; j < per_side; ++j)
        for (int i = 0; i < per_side; ++i) {
            c.x.push_back((i + 0.5) / per_side);
            c.y.push_back((j + 0.5) / per_side);
        }
    return c;
}

double TracerCloud::polygon_area() const {
    double a = 0.0;
    const std::size_t n = size();
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = (i + 1) % n;
        a += x[i] * y[j] - x[j] * y[i];
    }
    return 0.5 * std::abs(a);
}

bool TracerCloud::self_intersects() const {
    const std::size_t n = size();
    auto seg_cross = [&](std::size_t i, std::size_t j) {
        const Vec2 p1{x[i], y[i]}, p2{x[(i + 1) % n], y[(i + 1) % n]};
        const Vec2 q1{x[j], y[j]}, q2{x[(j + 1) % n], y[(j + 1) % n]};
        auto orient = [](const Vec2& a, const Vec2& b, const Vec2& c) {
            return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
        };
        return orient(p1, p2, q1) * orient(p1, p2, q2) < 0 &&
               orient(q1, q2, p1) * orient(q1, q2, p2) < 0;
    };
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 2; j < n; ++j) {
            if (i == 0 && j == n - 1) continue; // shared vertex
            if (seg_cross(i, j)) return true;
        }
    return false;
}

CellIntegral cell_integral(const ScalarField& field, const Rect& cell, RegionPart part) {
    Rect region = cell;
    switch (part) {
        case RegionPart::Full: break;
        case RegionPart::Left: region.w *= 0.5; break;
        case RegionPart::Right: region.x0 += 0.5 * cell.w; region.w *= 0.5; break;
        case RegionPart::Lower: region.h *= 0.5; break;
        case RegionPart::Upper: region.y0 += 0.5 * cell.h; region.h *= 0.5; break;
    }
    CellIntegral out;
    double sum = 0.0, ss = 0.0;
    for (std::size_t i = 0; i < field.size(); ++i) {
        const double px = field.x[i], py = field.y[i];
        if (px < region.x0 || px >= region.x0 + region.w || py < region.y0 ||
            py >= region.y0 + region.h)
            continue;
        sum += field.value[i];
        ss += field.value[i] * field.value[i];
        ++out.count;
    }
    out.integral = sum * field.weight();
    if (out.count > 0) {
        out.mean = sum / static_cast<double>(out.count);
        if (out.count > 1) {
            const double var =
                std::max(0.0, (ss - sum * sum / static_cast<double>(out.count))) /
                static_cast<double>(out.count - 1);
            out.std_error = std::sqrt(var / static_cast<double>(out.count));
        }
    }
    out.undersampled = out.count < 16;
    return out;
}

double half_split(Vec2 q) { return q.x < 0.5 ? 1.0 : -1.0; }

std::function<double(Vec2)> checkerboard(int n) {
    return [n](Vec2 q) {
        const int cells = 1 << n;
        const int i = std::min(cells - 1, static_cast<int>(q.x * cells));
        const int j = std::min(cells - 1, static_cast<int>(q.y * cells));
        return ((i + j) % 2 == 0) ? 1.0 : -1.0;
    };
}

std::function<double(Vec2)> random_cell_signs(int n, std::uint64_t seed) {
    const int cells = 1 << n;
    std::vector<double> signs(static_cast<std::size_t>(cells) * cells);
    Rng rng(seed);
    for (double& s : signs) s = rng.uniform() < 0.5 ? -1.0 : 1.0;
    return [cells, signs = std::move(signs)](Vec2 q) {
        const int i = std::min(cells - 1, static_cast<int>(q.x * cells));
        const int j = std::min(cells - 1, static_cast<int>(q.y * cells));
        return signs[static_cast<std::size_t>(j) * cells + i];
    };
}

} // namespace cellmix
