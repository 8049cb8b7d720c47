#pragma once

#include "cellmix/geometry.hpp"
#include "cellmix/stream.hpp"

#include <memory>
#include <vector>

namespace cellmix {

// One rectangle's flow assignment within a stage.  The unit-square stream is
// mapped affinely into rect; the induced motion in rect-local coordinates is
// sign * speed * perp(grad psi_unit), so a speed-1 entry completes a half
// rotation in time 1/2 and a speed-2 entry in time 1/4.  An optional global
// boundary factor g(x) = f(x(1-x)/scale) f(y(1-y)/scale) multiplies the
// composed stream (no-slip wrapping).
struct CellEntry {
    Rect rect;
    std::shared_ptr<const StreamField> pre;  // flow before switch_time (null = frozen)
    std::shared_ptr<const StreamField> post; // flow after switch_time (null = frozen)
    double switch_time = 0.0;                // absolute; >= stage end means no switch
    double sign = 1.0;
    double speed = 1.0;
    double boundary_scale = 0.0; // 0 = no boundary factor

    Vec2 velocity(const Vec2& q, double t) const;
    double stream_value(const Vec2& q, double t) const; // composed global stream
};

struct Stage {
    double t0 = 0.0;
    double t1 = 0.0;
    bool is_shift = false;
    Vec2 shift_vel{}; // constant velocity with periodic wrap

    // Entries are grouped by the dyadic cell (at lookup_level) that contains
    // their rectangle; each group holds at most a few rectangles.
    int lookup_level = 0;
    std::vector<std::vector<CellEntry>> cells; // size 4^lookup_level

    static Stage shift(double t0, double t1, Vec2 vel);
    static Stage tiled(double t0, double t1, int lookup_level);

    void add_entry(const CellEntry& entry); // files under every cell the rect meets
    const CellEntry* entry_at(const Vec2& q) const;
    Vec2 velocity(const Vec2& q, double t) const;
};

struct FlowProgram {
    std::vector<Stage> stages;

    double t_begin() const { return stages.empty() ? 0.0 : stages.front().t0; }
    double t_end() const { return stages.empty() ? 0.0 : stages.back().t1; }
    const Stage* stage_at(double t) const; // stage with t in (t0, t1]
    Vec2 velocity(const Vec2& q, double t) const;

    void append(const FlowProgram& other); // stages must continue in time
};

// Time-reversed, velocity-negated program: advecting forward under the
// original and then under the reverse returns tracers to their start.
FlowProgram reverse_program(const FlowProgram& program);

} // namespace cellmix
