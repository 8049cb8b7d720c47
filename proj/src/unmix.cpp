#include "cellmix/unmix.hpp"

#include "cellmix/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cellmix {

double ThetaGrid::total_measure() const {
    double s = 0.0;
    for (double t : theta) s += t;
    return s / std::ldexp(1.0, 2 * level);
}

double ThetaGrid::theta0() const {
    const int n = 1 << level;
    double s = 0.0;
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n / 2; ++i) s += at(i, j);
    return s / std::ldexp(1.0, 2 * level);
}

double ThetaGrid::theta1() const {
    const int n = 1 << level;
    double s = 0.0;
    for (int j = 0; j < n; ++j)
        for (int i = n / 2; i < n; ++i) s += at(i, j);
    return s / std::ldexp(1.0, 2 * level);
}

std::size_t ThetaGrid::count_intermediate(double kappa) const {
    std::size_t c = 0;
    for (double t : theta)
        if (t > kappa && t < 1.0 - kappa) ++c;
    return c;
}

ThetaGrid compute_theta(const Raster& mask, int n) {
    const int cells = 1 << n;
    if (mask.width != mask.height) throw std::invalid_argument("mask must be square");
    if (mask.width < (8 << n))
        throw std::invalid_argument("mask resolution too low: need at least 2^(n+3) per side");
    if (mask.width % cells != 0)
        throw std::invalid_argument("mask resolution must be divisible by 2^n");
    const int block = mask.width / cells;
    ThetaGrid g;
    g.level = n;
    g.theta.assign(static_cast<std::size_t>(cells) * cells, 0.0);
    for (int j = 0; j < cells; ++j)
        for (int i = 0; i < cells; ++i) {
            int inside = 0;
            for (int bj = 0; bj < block; ++bj)
                for (int bi = 0; bi < block; ++bi)
                    if (mask.at(i * block + bi, j * block + bj) >= 0.5) ++inside;
            g.theta[static_cast<std::size_t>(j) * cells + i] =
                static_cast<double>(inside) / (static_cast<double>(block) * block);
        }
    return g;
}

FlowProgram build_sorting_program(const ThetaGrid& theta, double delta) {
    if (delta < 0.0 || delta > 1.0) throw std::invalid_argument("delta must lie in [0, 1]");
    std::shared_ptr<const StreamField> stream = make_stream_field(StreamSpec::base());
    if (delta > 0.0) stream = apply_boundary_factor(stream, delta);

    const int n = theta.level;
    FlowProgram program;
    for (int k = 0; k < n; ++k) {
        const int cells = 1 << k;
        const int m = n - k; // theta sub-block is 2^m x 2^m
        const double w = 1.0 / cells;
        Stage stA = Stage::tiled(k + 0.00, k + 0.25, k);
        Stage stB = Stage::tiled(k + 0.25, k + 0.50, k);
        Stage stC = Stage::tiled(k + 0.50, k + 0.75, k);
        Stage stD = Stage::tiled(k + 0.75, k + 1.00, k);
        for (int cj = 0; cj < cells; ++cj)
            for (int ci = 0; ci < cells; ++ci) {
                const int half = 1 << (m - 1);
                const double norm = std::ldexp(1.0, -2 * m);
                // Cell-local aggregates: th0 = left-half mass, a/b = mass of
                // the two lower quadrants (the upper strips follow from the
                // rotations by measure preservation).
                double th0 = 0.0, a = 0.0, b = 0.0, total = 0.0;
                for (int j = 0; j < (1 << m); ++j)
                    for (int i = 0; i < (1 << m); ++i) {
                        const double t = theta.at(ci * (1 << m) + i, cj * (1 << m) + j);
                        total += t * norm;
                        if (i < half) th0 += t * norm;
                        if (i < half && j < half) a += 2 * t * norm;
                        if (i >= half && j < half) b += 2 * t * norm;
                    }
                if (total <= 0.0) continue; // no mass: cell stays still
                const double x0 = ci * w, y0 = cj * w;
                auto entry = [&](Rect r, double sign, double speed) {
                    CellEntry e;
                    e.rect = r;
                    e.pre = stream;
                    e.post = stream;
                    e.switch_time = 1e300; // no switch
                    e.sign = sign;
                    e.speed = speed;
                    return e;
                };
                // 180-degree sort in x of the part right of the theta0 offset.
                stA.add_entry(entry({x0 + th0 * w, y0, (1.0 - th0) * w, w}, 1.0, 2.0));
                // Counter-rotating quarter turns of the two half-columns.
                stB.add_entry(entry({x0, y0, 0.5 * w, w}, -1.0, 1.0));
                stB.add_entry(entry({x0 + 0.5 * w, y0, 0.5 * w, w}, 1.0, 1.0));
                // Same pair rotated: y-sort within each half-column...
                stC.add_entry(entry({x0, y0 + a * w, 0.5 * w, (1.0 - a) * w}, 1.0, 2.0));
                stC.add_entry(entry({x0 + 0.5 * w, y0 + b * w, 0.5 * w, (1.0 - b) * w}, 1.0, 2.0));
                // ...then quarter turns of the four quadrants (clockwise on
                // the bottom row, counter-clockwise on the top).
                stD.add_entry(entry({x0, y0, 0.5 * w, 0.5 * w}, 1.0, 1.0));
                stD.add_entry(entry({x0 + 0.5 * w, y0, 0.5 * w, 0.5 * w}, 1.0, 1.0));
                stD.add_entry(entry({x0, y0 + 0.5 * w, 0.5 * w, 0.5 * w}, -1.0, 1.0));
                stD.add_entry(entry({x0 + 0.5 * w, y0 + 0.5 * w, 0.5 * w, 0.5 * w}, -1.0, 1.0));
            }
        program.stages.push_back(std::move(stA));
        program.stages.push_back(std::move(stB));
        program.stages.push_back(std::move(stC));
        program.stages.push_back(std::move(stD));
    }
    return program;
}

namespace {

int auto_occupancy_level(std::size_t particles, int n) {
    int level = n + 2;
    while (level > 2 &&
           static_cast<double>(particles) / std::ldexp(1.0, 2 * level) < 8.0)
        --level;
    return level;
}

} // namespace

UnmixResult run_unmix(const Raster& mask, int n, double kappa, const Calibration& cal,
                      const UnmixOptions& opts) {
    if (!(kappa > 0.0 && kappa <= 0.5)) throw std::invalid_argument("kappa must be in (0, 1/2]");
    UnmixResult out;
    out.kappa = kappa;
    out.theta = compute_theta(mask, n);
    out.measure_A = out.theta.total_measure();
    out.hypothesis_violations = out.theta.count_intermediate(kappa);
    out.hypothesis_warning =
        static_cast<double>(out.hypothesis_violations) > kappa * std::ldexp(1.0, 2 * n);
    out.delta = kappa / (cal.unmix_C * std::max(1, n));

    const FlowProgram forward = build_sorting_program(out.theta, out.delta);
    const FlowProgram rev = reverse_program(forward);

    ScalarField field = ScalarField::stratified(
        opts.particle_level, opts.per_cell,
        [&mask](Vec2 q) { return mask.value_at(q) >= 0.5 ? 1.0 : 0.0; }, opts.seed);

    AdvectOptions aopts;
    aopts.ode = opts.ode;
    out.transport = advect(rev, field, 0.0, static_cast<double>(n), aopts);

    std::size_t carriers = 0, inside = 0;
    for (std::size_t i = 0; i < field.size(); ++i) {
        if (field.value[i] <= 0.5) continue;
        ++carriers;
        if (field.x[i] < out.measure_A) ++inside;
    }
    out.overlap_fraction =
        carriers ? static_cast<double>(inside) / static_cast<double>(carriers) : 1.0;
    out.overlap = out.overlap_fraction * out.measure_A;
    out.passed = out.overlap_fraction >= 1.0 - 2.0 * kappa;

    const int lv = opts.occupancy_level > 0 ? opts.occupancy_level
                                            : auto_occupancy_level(field.size(), n);
    out.occupancy = Raster::occupancy(field, lv);
    const double measure_B = out.occupancy.mean();
    out.measure_drift = out.measure_A > 0.0
                            ? std::abs(measure_B - out.measure_A) / out.measure_A
                            : 0.0;

    if (opts.record_grad) {
        for (const Stage& st : rev.stages) {
            auto vel = [&st](Vec2 q) { return st.velocity(q, 0.5 * (st.t0 + st.t1)); };
            const int lvl = st.lookup_level;
            auto dist = [lvl](Vec2 q) {
                const double cells = std::ldexp(1.0, lvl);
                Vec2 local{q.x * cells - std::floor(q.x * cells),
                           q.y * cells - std::floor(q.y * cells)};
                return dist_special(local).d / cells;
            };
            out.grad_per_stage.push_back(grad_lp(vel, opts.grad_p, dist, 32).value);
        }
    }
    return out;
}

double forward_sort_error(const ThetaGrid& theta, double delta, const UnmixOptions& opts) {
    const double measure = theta.total_measure();
    const FlowProgram forward = build_sorting_program(theta, delta);
    ScalarField field = ScalarField::stratified(
        opts.particle_level, opts.per_cell,
        [measure](Vec2 q) { return q.x < measure ? 1.0 : 0.0; }, opts.seed);
    AdvectOptions aopts;
    aopts.ode = opts.ode;
    advect(forward, field, 0.0, static_cast<double>(theta.level), aopts);

    // Target: within each cell, the left strip of width theta_{ij} (in cell
    // units).  L1 error = 2 x measure of carriers outside their strip.
    const int cells = 1 << theta.level;
    std::size_t wrong = 0, carriers = 0;
    for (std::size_t k = 0; k < field.size(); ++k) {
        if (field.value[k] <= 0.5) continue;
        ++carriers;
        const int i = std::clamp(static_cast<int>(field.x[k] * cells), 0, cells - 1);
        const int j = std::clamp(static_cast<int>(field.y[k] * cells), 0, cells - 1);
        const double local_x = field.x[k] * cells - i;
        if (local_x >= theta.at(i, j)) ++wrong;
    }
    return carriers ? 2.0 * static_cast<double>(wrong) * field.weight() : 0.0;
}

} // namespace cellmix
