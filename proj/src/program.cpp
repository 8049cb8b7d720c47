#include "cellmix/program.hpp"

#include "cellmix/cutoff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cellmix {

namespace {

struct Factor {
    double value;
    Vec2 grad;
};

Factor boundary_factor(const Vec2& q, double scale) {
    const CutoffValue fx = cutoff_with_deriv(q.x * (1.0 - q.x) / scale);
    const CutoffValue fy = cutoff_with_deriv(q.y * (1.0 - q.y) / scale);
    return {fx.f * fy.f,
            {fx.df * (1.0 - 2.0 * q.x) / scale * fy.f, fx.f * fy.df * (1.0 - 2.0 * q.y) / scale}};
}

} // namespace

Vec2 CellEntry::velocity(const Vec2& q, double t) const {
    const StreamField* field = (t <= switch_time ? pre : post).get();
    if (field == nullptr) return {0.0, 0.0};
    const Vec2 local = rect.to_local(q);
    const Vec2 vu = field->velocity(local); // (-d_eta psi, d_xi psi)
    Vec2 u{sign * speed * rect.w * vu.x, sign * speed * rect.h * vu.y};
    if (boundary_scale > 0.0) {
        const Factor g = boundary_factor(q, boundary_scale);
        const double sval = sign * speed * rect.w * rect.h * field->value(local);
        u = g.value * u + sval * perp(g.grad);
    }
    return u;
}

double CellEntry::stream_value(const Vec2& q, double t) const {
    const StreamField* field = (t <= switch_time ? pre : post).get();
    if (field == nullptr) return 0.0;
    const Vec2 local = rect.to_local(q);
    double sval = sign * speed * rect.w * rect.h * field->value(local);
    if (boundary_scale > 0.0) sval *= boundary_factor(q, boundary_scale).value;
    return sval;
}

Stage Stage::shift(double t0, double t1, Vec2 vel) {
    Stage s;
    s.t0 = t0;
    s.t1 = t1;
    s.is_shift = true;
    s.shift_vel = vel;
    return s;
}

Stage Stage::tiled(double t0, double t1, int lookup_level) {
    Stage s;
    s.t0 = t0;
    s.t1 = t1;
    s.lookup_level = lookup_level;
    s.cells.resize(static_cast<std::size_t>(1) << (2 * lookup_level));
    return s;
}

void Stage::add_entry(const CellEntry& entry) {
    const int n = 1 << lookup_level;
    const double eps = 1e-12;
    const int i0 = std::clamp(static_cast<int>((entry.rect.x0 + eps) * n), 0, n - 1);
    const int i1 = std::clamp(static_cast<int>((entry.rect.x0 + entry.rect.w - eps) * n), 0, n - 1);
    const int j0 = std::clamp(static_cast<int>((entry.rect.y0 + eps) * n), 0, n - 1);
    const int j1 = std::clamp(static_cast<int>((entry.rect.y0 + entry.rect.h - eps) * n), 0, n - 1);
    for (int j = j0; j <= j1; ++j)
        for (int i = i0; i <= i1; ++i)
            cells[static_cast<std::size_t>(j) * n + i].push_back(entry);
}

const CellEntry* Stage::entry_at(const Vec2& q) const {
    if (is_shift || cells.empty()) return nullptr;
    const int n = 1 << lookup_level;
    const int i = std::clamp(static_cast<int>(q.x * n), 0, n - 1);
    const int j = std::clamp(static_cast<int>(q.y * n), 0, n - 1);
    for (const CellEntry& e : cells[static_cast<std::size_t>(j) * n + i]) {
        if (e.rect.contains(q)) return &e;
    }
    return nullptr;
}

Vec2 Stage::velocity(const Vec2& q, double t) const {
    if (is_shift) return shift_vel;
    const CellEntry* e = entry_at(q);
    return e ? e->velocity(q, t) : Vec2{0.0, 0.0};
}

const Stage* FlowProgram::stage_at(double t) const {
    for (const Stage& s : stages) {
        if (t > s.t0 - 1e-12 && t <= s.t1 + 1e-12) return &s;
    }
    return nullptr;
}

Vec2 FlowProgram::velocity(const Vec2& q, double t) const {
    const Stage* s = stage_at(t);
    return s ? s->velocity(q, t) : Vec2{0.0, 0.0};
}

void FlowProgram::append(const FlowProgram& other) {
    for (const Stage& s : other.stages) {
        if (!stages.empty() && s.t0 < stages.back().t1 - 1e-12)
            throw std::invalid_argument("appended stages overlap in time");
        stages.push_back(s);
    }
}

FlowProgram reverse_program(const FlowProgram& program) {
    const double t_total = program.t_end() + program.t_begin();
    FlowProgram rev;
    for (auto it = program.stages.rbegin(); it != program.stages.rend(); ++it) {
        Stage s;
        s.t0 = t_total - it->t1;
        s.t1 = t_total - it->t0;
        s.is_shift = it->is_shift;
        s.shift_vel = -1.0 * it->shift_vel;
        s.lookup_level = it->lookup_level;
        s.cells.resize(it->cells.size());
        for (std::size_t c = 0; c < it->cells.size(); ++c) {
            for (const CellEntry& e : it->cells[c]) {
                CellEntry r = e;
                r.sign = -e.sign;
                // pre/post swap around the mirrored switch instant
                r.pre = e.post;
                r.post = e.pre;
                r.switch_time = t_total - e.switch_time;
                s.cells[c].push_back(r);
            }
        }
        rev.stages.push_back(std::move(s));
    }
    return rev;
}

} // namespace cellmix
