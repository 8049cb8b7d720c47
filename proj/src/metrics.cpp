#include "cellmix/metrics.hpp"

#include "cellmix/fft.hpp"
#include "cellmix/parallel.hpp"
#include "cellmix/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace cellmix {

namespace {

struct BucketGrid {
    int n = 1;
    std::vector<std::uint32_t> offsets;
    std::vector<std::uint32_t> indices;

    static BucketGrid build(const ScalarField& field, int n_buckets) {
        BucketGrid g;
        g.n = n_buckets;
        const std::size_t cells = static_cast<std::size_t>(g.n) * g.n;
        std::vector<std::uint32_t> counts(cells, 0);
        std::vector<std::uint32_t> of(field.size());
        for (std::size_t i = 0; i < field.size(); ++i) {
            const int ix = std::clamp(static_cast<int>(field.x[i] * g.n), 0, g.n - 1);
            const int iy = std::clamp(static_cast<int>(field.y[i] * g.n), 0, g.n - 1);
            const std::uint32_t c = static_cast<std::uint32_t>(iy) * g.n + ix;
            of[i] = c;
            ++counts[c];
        }
        g.offsets.assign(cells + 1, 0);
        for (std::size_t c = 0; c < cells; ++c) g.offsets[c + 1] = g.offsets[c] + counts[c];
        g.indices.resize(field.size());
        std::vector<std::uint32_t> cursor(g.offsets.begin(), g.offsets.end() - 1);
        for (std::size_t i = 0; i < field.size(); ++i)
            g.indices[cursor[of[i]]++] = static_cast<std::uint32_t>(i);
        return g;
    }
};

} // namespace

MixReport is_kappa_mixed(const ScalarField& field, double kappa, double eps) {
    if (!(kappa > 0.0 && eps > 0.0)) throw std::invalid_argument("kappa, eps must be positive");
    MixReport rep;
    rep.kappa = kappa;
    rep.radius = eps;
    if (field.bound == 0.0 || field.size() == 0) {
        rep.is_mixed = true;
        return rep;
    }
    const int lattice = static_cast<int>(std::ceil(8.0 / eps));
    const double spacing = 1.0 / lattice;
    rep.lattice_points = static_cast<std::size_t>(lattice + 1) * (lattice + 1);

    const int nb = std::min(1024, std::max(4, static_cast<int>(std::ceil(2.0 / eps))));
    const BucketGrid grid = BucketGrid::build(field, nb);
    const double eps2 = eps * eps;

    struct RowResult {
        double worst = -1.0;
        Vec2 center{};
        std::size_t undersampled = 0;
    };
    std::vector<RowResult> rows(static_cast<std::size_t>(lattice + 1));
    parallel_for(
        static_cast<std::size_t>(lattice + 1),
        [&](std::size_t j) {
            RowResult& rr = rows[j];
            const double cy = std::min(1.0, static_cast<double>(j) * spacing);
            const int by_lo = std::max(0, static_cast<int>((cy - eps) * nb));
            const int by_hi = std::min(nb - 1, static_cast<int>((cy + eps) * nb));
            for (int i = 0; i <= lattice; ++i) {
                const double cx = std::min(1.0, static_cast<double>(i) * spacing);
                const int bx_lo = std::max(0, static_cast<int>((cx - eps) * nb));
                const int bx_hi = std::min(nb - 1, static_cast<int>((cx + eps) * nb));
                double sum = 0.0;
                std::size_t count = 0;
                for (int by = by_lo; by <= by_hi; ++by)
                    for (int bx = bx_lo; bx <= bx_hi; ++bx) {
                        const std::size_t c = static_cast<std::size_t>(by) * nb + bx;
                        for (std::uint32_t k = grid.offsets[c]; k < grid.offsets[c + 1]; ++k) {
                            const std::uint32_t idx = grid.indices[k];
                            const double dx = field.x[idx] - cx;
                            const double dy = field.y[idx] - cy;
                            if (dx * dx + dy * dy <= eps2) {
                                sum += field.value[idx];
                                ++count;
                            }
                        }
                    }
                if (count < 16) {
                    ++rr.undersampled;
                    continue;
                }
                const double ratio = std::abs(sum / static_cast<double>(count)) / field.bound;
                if (ratio > rr.worst) {
                    rr.worst = ratio;
                    rr.center = {cx, cy};
                }
            }
        },
        1);
    for (const RowResult& rr : rows) {
        rep.undersampled_balls += rr.undersampled;
        if (rr.worst > rep.worst_ratio) {
            rep.worst_ratio = rr.worst;
            rep.worst_center = rr.center;
        }
    }
    rep.is_mixed = rep.worst_ratio <= kappa;
    return rep;
}

CellMeanSup cell_mean_sup(const ScalarField& field, int level) {
    CellMeanSup out;
    if (field.size() == 0 || field.bound == 0.0) return out;
    const int n = 1 << level;
    std::vector<double> sums(static_cast<std::size_t>(n) * n, 0.0);
    std::vector<std::uint32_t> counts(static_cast<std::size_t>(n) * n, 0);
    for (std::size_t i = 0; i < field.size(); ++i) {
        const int ix = std::clamp(static_cast<int>(field.x[i] * n), 0, n - 1);
        const int iy = std::clamp(static_cast<int>(field.y[i] * n), 0, n - 1);
        const std::size_t c = static_cast<std::size_t>(iy) * n + ix;
        sums[c] += field.value[i];
        ++counts[c];
    }
    for (std::size_t c = 0; c < sums.size(); ++c) {
        if (counts[c] < 16) {
            ++out.undersampled_cells;
        }
        if (counts[c] > 0)
            out.value = std::max(out.value, std::abs(sums[c] / counts[c]) / field.bound);
    }
    return out;
}

double mix_norm(const Raster& raster, double s, bool periodic) {
    const int w = raster.width, h = raster.height;
    const double mean = raster.mean();
    std::size_t nx = static_cast<std::size_t>(w), ny = static_cast<std::size_t>(h);
    std::vector<std::complex<double>> a;
    double domain = 1.0;
    if (periodic) {
        a.resize(nx * ny);
        for (int j = 0; j < h; ++j)
            for (int i = 0; i < w; ++i)
                a[static_cast<std::size_t>(j) * nx + i] = raster.at(i, j) - mean;
    } else {
        // Even reflection onto the 2x2 torus.
        nx = 2 * nx;
        ny = 2 * ny;
        domain = 2.0;
        a.resize(nx * ny);
        for (std::size_t j = 0; j < ny; ++j) {
            const int sj = j < static_cast<std::size_t>(h) ? static_cast<int>(j)
                                                           : static_cast<int>(ny - 1 - j);
            for (std::size_t i = 0; i < nx; ++i) {
                const int si = i < static_cast<std::size_t>(w) ? static_cast<int>(i)
                                                               : static_cast<int>(nx - 1 - i);
                a[j * nx + i] = raster.at(si, sj) - mean;
            }
        }
    }
    fft2_inplace(a, nx, ny);
    const double norm = 1.0 / (static_cast<double>(nx) * static_cast<double>(ny));
    double total = 0.0;
    for (std::size_t j = 0; j < ny; ++j) {
        const double kj = j <= ny / 2 ? static_cast<double>(j) : static_cast<double>(j) - ny;
        for (std::size_t i = 0; i < nx; ++i) {
            const double ki = i <= nx / 2 ? static_cast<double>(i) : static_cast<double>(i) - nx;
            const double c2 = std::norm(a[j * nx + i] * norm);
            const double xi2 =
                (2.0 * M_PI / domain) * (2.0 * M_PI / domain) * (ki * ki + kj * kj);
            total += c2 * std::pow(1.0 + xi2, -s);
        }
    }
    return std::sqrt(total);
}

double mix_norm(const ScalarField& field, double s, int level, bool periodic) {
    if (level < 8) throw std::invalid_argument("mix_norm raster level must be >= 8");
    const BinnedRaster binned = bin_particles(field, level);
    return mix_norm(binned.raster, s, periodic);
}

// ---------------------------------------------------------------------------
// Adaptive L^p of the velocity Jacobian

namespace {

struct RingTotals {
    static constexpr int kMax = 26;
    std::array<double, kMax> mass{};
    double far = 0.0;
    double max_seen = 0.0;

    void add(double d, double contrib, double val) {
        max_seen = std::max(max_seen, val);
        if (d >= 0.125) {
            far += contrib;
            return;
        }
        int k = static_cast<int>(std::floor(-std::log2(std::max(d, 1e-7))));
        k = std::clamp(k, 3, kMax - 1);
        mass[static_cast<std::size_t>(k)] += contrib;
    }
};

double jacobian_frobenius(const std::function<Vec2(Vec2)>& vel, const Vec2& q, double d) {
    const double h = std::min(1e-6, std::max(1e-8, d / 8.0));
    const Vec2 xp = vel({q.x + h, q.y});
    const Vec2 xm = vel({q.x - h, q.y});
    const Vec2 yp = vel({q.x, q.y + h});
    const Vec2 ym = vel({q.x, q.y - h});
    const double uxx = (xp.x - xm.x) / (2 * h);
    const double uxy = (yp.x - ym.x) / (2 * h);
    const double uyx = (xp.y - xm.y) / (2 * h);
    const double uyy = (yp.y - ym.y) / (2 * h);
    return std::sqrt(uxx * uxx + uxy * uxy + uyx * uyx + uyy * uyy);
}

void grad_region(const std::function<Vec2(Vec2)>& vel, const std::function<double(Vec2)>& dist,
                 double p, double x0, double y0, double size, RingTotals& acc, int depth) {
    const Vec2 c{x0 + 0.5 * size, y0 + 0.5 * size};
    const double d = dist ? dist(c) : 1.0;
    if (dist && size > 0.5 * d && size > 4e-5 && depth < 22) {
        const double half = 0.5 * size;
        grad_region(vel, dist, p, x0, y0, half, acc, depth + 1);
        grad_region(vel, dist, p, x0 + half, y0, half, acc, depth + 1);
        grad_region(vel, dist, p, x0, y0 + half, half, acc, depth + 1);
        grad_region(vel, dist, p, x0 + half, y0 + half, half, acc, depth + 1);
        return;
    }
    if (d < 6e-5) return;
    const double val = jacobian_frobenius(vel, c, d);
    acc.add(d, std::isfinite(p) ? std::pow(val, p) * size * size : 0.0, val);
}

} // namespace

GradLpResult grad_lp(const std::function<Vec2(Vec2)>& velocity, double p,
                     const std::function<double(Vec2)>& dist_fn, int base_resolution) {
    if (!(p >= 1.0)) throw std::invalid_argument("p must be >= 1");
    RingTotals acc;
    const int n0 = base_resolution;
    for (int i = 0; i < n0; ++i)
        for (int j = 0; j < n0; ++j)
            grad_region(velocity, dist_fn, p, static_cast<double>(i) / n0,
                        static_cast<double>(j) / n0, 1.0 / n0, acc, 0);
    if (!std::isfinite(p)) return {acc.max_seen, false, 0.0};

    std::vector<double> ks, logs;
    for (int k = 5; k < RingTotals::kMax; ++k) {
        const double m = acc.mass[static_cast<std::size_t>(k)];
        if (m > 0.0) {
            ks.push_back(k);
            logs.push_back(std::log2(m));
        }
    }
    double total = acc.far;
    for (double m : acc.mass) total += m;
    if (ks.size() >= 3) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        const double n = static_cast<double>(ks.size());
        for (std::size_t i = 0; i < ks.size(); ++i) {
            sx += ks[i];
            sy += logs[i];
            sxx += ks[i] * ks[i];
            sxy += ks[i] * logs[i];
        }
        const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        if (slope >= -0.1) return {0.0, true, slope};
        double last = 0.0;
        for (int k = RingTotals::kMax - 1; k >= 0; --k)
            if (acc.mass[static_cast<std::size_t>(k)] > 0.0) {
                last = acc.mass[static_cast<std::size_t>(k)];
                break;
            }
        const double ratio = std::pow(2.0, slope);
        total += last * ratio / (1.0 - ratio);
    }
    return {std::pow(total, 1.0 / p), false, 0.0};
}

GagliardoResult gagliardo(const std::function<double(Vec2)>& f, double s, double p,
                          std::size_t pairs, std::uint64_t seed) {
    if (!(s > 0.0 && s < 1.0) || !(p >= 1.0)) throw std::invalid_argument("need s in (0,1), p >= 1");
    if (s * p >= 2.0) throw std::invalid_argument("sp >= 2: seminorm not defined for bounded f");
    const double rmin = 1e-6, rmax = 1.5;
    const double L = std::log(rmax / rmin);
    const double rmin2 = 64.0 * rmin;
    const double L2 = std::log(rmax / rmin2);

    double sum = 0.0, sum_sq = 0.0, sum_trunc = 0.0;
    std::size_t n_trunc = 0;
    Rng rng(seed);
    for (std::size_t i = 0; i < pairs; ++i) {
        const Vec2 x{rng.uniform(), rng.uniform()};
        const double r = rmin * std::exp(L * rng.uniform());
        const double th = 2.0 * M_PI * rng.uniform();
        const Vec2 y{x.x + r * std::cos(th), x.y + r * std::sin(th)};
        double term = 0.0;
        const bool inside = y.x > 0.0 && y.x < 1.0 && y.y > 0.0 && y.y < 1.0;
        if (inside) {
            const double diff = std::abs(f(x) - f(y));
            term = std::pow(diff, p) * std::pow(r, -s * p) * 2.0 * M_PI * L;
        }
        sum += term;
        sum_sq += term * term;
        if (r >= rmin2) {
            ++n_trunc;
            sum_trunc += inside ? term * (L2 / L) : 0.0;
        }
    }
    const double n = static_cast<double>(pairs);
    const double mean = sum / n;
    const double var = std::max(0.0, sum_sq / n - mean * mean) / n;
    GagliardoResult out;
    out.value = std::pow(std::max(mean, 0.0), 1.0 / p);
    out.std_error = mean > 0.0 ? out.value / (p * mean) * std::sqrt(var) : 0.0;
    if (n_trunc > 0) {
        const double mean_trunc = sum_trunc / static_cast<double>(n_trunc);
        const double rel = std::abs(mean - mean_trunc) / std::max(mean, 1e-300);
        // Truncation sensitivity: the small-separation band carries a
        // non-vanishing share of the integral.
        out.slow_convergence = rel > 0.1 && s * p >= 1.0;
    }
    return out;
}

FitResult fit_scaling(const std::vector<std::pair<double, double>>& series, FitModel model) {
    if (series.size() < 3) throw std::invalid_argument("fit needs at least 3 points");
    std::vector<double> xs, ys;
    for (const auto& [x, y] : series) {
        if (model == FitModel::LogLog) {
            if (!(x > 0.0 && y > 0.0))
                throw std::invalid_argument("log-log fit needs positive data");
            xs.push_back(std::log(x));
            ys.push_back(std::log(y));
        } else {
            xs.push_back(x);
            ys.push_back(y);
        }
    }
    const double n = static_cast<double>(xs.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sx += xs[i];
        sy += ys[i];
        sxx += xs[i] * xs[i];
        sxy += xs[i] * ys[i];
    }
    const double denom = n * sxx - sx * sx;
    if (std::abs(denom) < 1e-12 * std::max(1.0, sxx))
        throw std::invalid_argument("degenerate x-range in fit");
    FitResult fit;
    fit.slope = (n * sxy - sx * sy) / denom;
    fit.intercept = (sy - fit.slope * sx) / n;
    double ss_res = 0.0, ss_tot = 0.0;
    const double ymean = sy / n;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double pred = fit.slope * xs[i] + fit.intercept;
        ss_res += (ys[i] - pred) * (ys[i] - pred);
        ss_tot += (ys[i] - ymean) * (ys[i] - ymean);
    }
    fit.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
    return fit;
}

} // namespace cellmix
