#include "cellmix/transport.hpp"

#include "cellmix/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>

namespace cellmix {

namespace {

double wrap01(double v) {
    v -= std::floor(v);
    if (v >= 1.0) v -= 1.0;
    return v;
}

// Integrate one particle through a tiled stage segment [ta, tb] in the local
// coordinates of its entry rectangle.  RHS is autonomous on either side of
// the switch instant, so the segment is split there.
struct ParticleOutcome {
    bool degenerate = false;
    bool violated = false;
};

ParticleOutcome advance_in_entry(const CellEntry& e, Vec2& pos_global, double ta, double tb,
                                 const StepControl& ctl) {
    ParticleOutcome out;
    Vec2 local = e.rect.to_local(pos_global);
    auto cap = [&](const Vec2& q) { return 0.1 * dist_special(q).d / std::max(1.0, e.speed); };

    auto run_piece = [&](const StreamField* field, double dt) {
        if (field == nullptr || dt <= 0.0) return true;
        if (e.boundary_scale <= 0.0) {
            auto rhs = [&](const Vec2& q, double) {
                return (e.sign * e.speed) * field->velocity(q);
            };
            return integrate_fixed_time(rhs, local, 0.0, dt, ctl, cap);
        }
        // No-slip wrapped: compose in global coordinates, map back to local.
        auto rhs = [&](const Vec2& q, double) {
            const Vec2 g = e.rect.to_global(q);
            const Vec2 vu = field->velocity(q);
            Vec2 u{e.sign * e.speed * e.rect.w * vu.x, e.sign * e.speed * e.rect.h * vu.y};
            const CutoffValue fx = cutoff_with_deriv(g.x * (1.0 - g.x) / e.boundary_scale);
            const CutoffValue fy = cutoff_with_deriv(g.y * (1.0 - g.y) / e.boundary_scale);
            const double gval = fx.f * fy.f;
            const Vec2 ggrad{fx.df * (1.0 - 2.0 * g.x) / e.boundary_scale * fy.f,
                             fx.f * fy.df * (1.0 - 2.0 * g.y) / e.boundary_scale};
            const double sval = e.sign * e.speed * e.rect.w * e.rect.h * field->value(q);
            u = gval * u + sval * perp(ggrad);
            return Vec2{u.x / e.rect.w, u.y / e.rect.h};
        };
        return integrate_fixed_time(rhs, local, 0.0, dt, ctl, cap);
    };

    const double cut = std::clamp(e.switch_time, ta, tb);
    bool ok = run_piece(e.pre.get(), cut - ta);
    if (ok) ok = run_piece(e.post.get(), tb - cut);
    if (!ok) out.degenerate = true;

    // Rectangles are invariant under their flows; snap numerical drift back.
    const double tol = 1e-6;
    if (local.x < -tol || local.x > 1.0 + tol || local.y < -tol || local.y > 1.0 + tol)
        out.violated = true;
    local.x = std::clamp(local.x, 0.0, 1.0);
    local.y = std::clamp(local.y, 0.0, 1.0);
    pos_global = e.rect.to_global(local);
    return out;
}

AdvectStats advect_positions(const FlowProgram& program, std::vector<double>& xs,
                             std::vector<double>& ys, double t0, double t1,
                             const AdvectOptions& opts) {
    if (t1 < t0) throw std::invalid_argument("advect: t1 < t0");
    AdvectStats stats;
    for (const Stage& stage : program.stages) {
        const double ta = std::max(t0, stage.t0);
        const double tb = std::min(t1, stage.t1);
        if (tb - ta <= 1e-15) continue;
        if (stage.is_shift) {
            const double dx = stage.shift_vel.x * (tb - ta);
            const double dy = stage.shift_vel.y * (tb - ta);
            for (std::size_t i = 0; i < xs.size(); ++i) {
                xs[i] = opts.periodic_wrap ? wrap01(xs[i] + dx) : std::clamp(xs[i] + dx, 0.0, 1.0);
                ys[i] = opts.periodic_wrap ? wrap01(ys[i] + dy) : std::clamp(ys[i] + dy, 0.0, 1.0);
            }
            continue;
        }
        std::atomic<std::size_t> degenerate{0}, violated{0};
        parallel_for(xs.size(), [&](std::size_t i) {
            Vec2 pos{xs[i], ys[i]};
            const CellEntry* e = stage.entry_at(pos);
            if (e == nullptr) return; // frozen region
            const ParticleOutcome r = advance_in_entry(*e, pos, ta, tb, opts.ode);
            if (r.degenerate) degenerate.fetch_add(1);
            if (r.violated) violated.fetch_add(1);
            xs[i] = pos.x;
            ys[i] = pos.y;
        });
        stats.degenerate += degenerate.load();
        stats.boundary_violations += violated.load();
    }
    return stats;
}

} // namespace

AdvectStats advect(const FlowProgram& program, ScalarField& field, double t0, double t1,
                   const AdvectOptions& opts) {
    return advect_positions(program, field.x, field.y, t0, t1, opts);
}

AdvectStats advect(const FlowProgram& program, TracerCloud& cloud, double t0, double t1,
                   const AdvectOptions& opts) {
    return advect_positions(program, cloud.x, cloud.y, t0, t1, opts);
}

CellBuckets bucket_particles(const ScalarField& field, int level, bool split_x) {
    CellBuckets b;
    b.nx = 1 << (split_x ? level + 1 : level);
    b.ny = 1 << level;
    const std::size_t ncells = static_cast<std::size_t>(b.nx) * b.ny;
    std::vector<std::uint32_t> counts(ncells, 0);
    std::vector<std::uint32_t> cell_of(field.size());
    for (std::size_t i = 0; i < field.size(); ++i) {
        const int ix = std::clamp(static_cast<int>(field.x[i] * b.nx), 0, b.nx - 1);
        const int iy = std::clamp(static_cast<int>(field.y[i] * b.ny), 0, b.ny - 1);
        const std::uint32_t c = static_cast<std::uint32_t>(iy) * b.nx + ix;
        cell_of[i] = c;
        ++counts[c];
    }
    b.offsets.assign(ncells + 1, 0);
    for (std::size_t c = 0; c < ncells; ++c) b.offsets[c + 1] = b.offsets[c] + counts[c];
    b.indices.resize(field.size());
    std::vector<std::uint32_t> cursor(b.offsets.begin(), b.offsets.end() - 1);
    for (std::size_t i = 0; i < field.size(); ++i)
        b.indices[cursor[cell_of[i]]++] = static_cast<std::uint32_t>(i);
    return b;
}

namespace {

struct SwitchState {
    std::vector<Vec2> pos; // local coordinates
    std::vector<double> val;
    std::vector<bool> masked;
};

double half_difference(const SwitchState& st, RegionPart first) {
    double h = 0.0;
    const bool axis_x = first == RegionPart::Left || first == RegionPart::Right;
    const bool low_first = first == RegionPart::Left || first == RegionPart::Lower;
    for (std::size_t i = 0; i < st.pos.size(); ++i) {
        if (!st.masked[i]) continue;
        const double c = axis_x ? st.pos[i].x : st.pos[i].y;
        const double s = (c < 0.5) == low_first ? 1.0 : -1.0;
        h += s * st.val[i];
    }
    return h;
}

void advance_state(SwitchState& st, const SwitchQuery& q, double dt) {
    if (dt <= 0.0) return;
    auto rhs = [&](const Vec2& p, double) { return (q.sign * q.speed) * q.rotate->velocity(p); };
    auto cap = [&](const Vec2& p) { return 0.1 * dist_special(p).d / std::max(1.0, q.speed); };
    auto body = [&](std::size_t i) {
        Vec2 p = st.pos[i];
        integrate_fixed_time(rhs, p, 0.0, dt, q.ode, cap);
        p.x = std::clamp(p.x, 0.0, 1.0);
        p.y = std::clamp(p.y, 0.0, 1.0);
        st.pos[i] = p;
    };
    if (q.parallel_inner) {
        parallel_for(st.pos.size(), body, 512);
    } else {
        for (std::size_t i = 0; i < st.pos.size(); ++i) body(i);
    }
}

} // namespace

SwitchResult find_switch_time(const ScalarField& field, const std::uint32_t* begin,
                              const std::uint32_t* end, const SwitchQuery& query,
                              double field_bound) {
    SwitchResult out;
    SwitchState state;
    const std::size_t n = static_cast<std::size_t>(end - begin);
    state.pos.reserve(n);
    state.val.reserve(n);
    state.masked.reserve(n);
    for (const std::uint32_t* it = begin; it != end; ++it) {
        const Vec2 g{field.x[*it], field.y[*it]};
        if (!query.rect.contains(g)) continue;
        const Vec2 local = query.rect.to_local(g);
        state.pos.push_back(local);
        state.val.push_back(field.value[*it]);
        state.masked.push_back(!query.mask || query.mask(local));
    }
    out.count = state.pos.size();
    // Residual target in count units: tol * area * bound corresponds to
    // tol * area * bound / weight summed values.
    const double weight = field.weight();
    const double target =
        query.tol * query.rect.area() * std::max(field_bound, 1e-300) / std::max(weight, 1e-300);

    double h_lo = half_difference(state, query.first);
    if (std::abs(h_lo) <= target || state.pos.empty()) {
        out.time = query.t0;
        out.residual = std::abs(h_lo) * weight;
        return out;
    }

    double t_lo = query.t0;
    double t_hi = query.t1;
    SwitchState hi_state = state;
    advance_state(hi_state, query, t_hi - t_lo);
    const double h_hi = half_difference(hi_state, query.first);
    if (h_lo * h_hi > 0.0) {
        // Possible only from sampling noise: h(t1) = -h(t0) under the exact
        // half rotation.  Coarse scan for the smallest |h|.
        out.no_sign_change = true;
        double best_t = query.t0, best_h = std::abs(h_lo);
        SwitchState scan = state;
        const int steps = 32;
        for (int k = 1; k <= steps; ++k) {
            const double tk = query.t0 + (query.t1 - query.t0) * k / steps;
            advance_state(scan, query, (query.t1 - query.t0) / steps);
            const double hk = std::abs(half_difference(scan, query.first));
            if (hk < best_h) {
                best_h = hk;
                best_t = tk;
            }
        }
        out.time = best_t;
        out.residual = best_h * weight;
        return out;
    }

    // Bisection keeping the state at the moving lower bound: each probe
    // advances at most (t_hi - t_lo), so total re-integration stays below
    // two window lengths.
    for (int it = 0; it < 20; ++it) {
        const double t_mid = 0.5 * (t_lo + t_hi);
        SwitchState mid_state = state;
        advance_state(mid_state, query, t_mid - t_lo);
        const double h_mid = half_difference(mid_state, query.first);
        if (std::abs(h_mid) <= target) {
            out.time = t_mid;
            out.residual = std::abs(h_mid) * weight;
            return out;
        }
        if (h_mid * h_lo > 0.0) {
            state = std::move(mid_state);
            t_lo = t_mid;
            h_lo = h_mid;
        } else {
            t_hi = t_mid;
        }
    }
    const double t_star = 0.5 * (t_lo + t_hi);
    SwitchState final_state = state;
    advance_state(final_state, query, t_star - t_lo);
    out.time = t_star;
    out.residual = std::abs(half_difference(final_state, query.first)) * weight;
    return out;
}

SwitchResult find_switch_time(const ScalarField& field, const SwitchQuery& query) {
    std::vector<std::uint32_t> idx;
    for (std::size_t i = 0; i < field.size(); ++i) {
        if (query.rect.contains({field.x[i], field.y[i]}))
            idx.push_back(static_cast<std::uint32_t>(i));
    }
    return find_switch_time(field, idx.data(), idx.data() + idx.size(), query, field.bound);
}

FlowMapCheck flow_map_check(const FlowProgram& program, const TracerCloud& seed, double t0,
                            double t1, const AdvectOptions& opts) {
    FlowMapCheck out;
    TracerCloud moved = seed;
    advect(program, moved, t0, t1, opts);
    const double a0 = seed.polygon_area();
    const double a1 = moved.polygon_area();
    out.area_drift = a0 > 0 ? std::abs(a1 - a0) / a0 : 0.0;
    for (std::size_t i = 0; i < seed.size(); ++i) {
        const double dx = moved.x[i] - seed.x[i];
        const double dy = moved.y[i] - seed.y[i];
        out.max_displacement = std::max(out.max_displacement, std::hypot(dx, dy));
    }
    out.self_intersected = moved.self_intersects();
    return out;
}

} // namespace cellmix
