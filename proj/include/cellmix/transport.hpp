#pragma once

#include "cellmix/field.hpp"
#include "cellmix/program.hpp"
#include "cellmix/tracer.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace cellmix {

struct AdvectStats {
    std::size_t degenerate = 0;          // step-underflow freezes
    std::size_t boundary_violations = 0; // snapped back from > 1e-6 outside
    void merge(const AdvectStats& o) {
        degenerate += o.degenerate;
        boundary_violations += o.boundary_violations;
    }
    double degenerate_fraction(std::size_t n) const {
        return n ? static_cast<double>(degenerate) / static_cast<double>(n) : 0.0;
    }
};

struct AdvectOptions {
    StepControl ode{};
    bool periodic_wrap = true; // wrap shift stages onto the torus
};

// Advect positions along the program over [t0, t1].  Particles are assigned
// to their stage entry once per stage (cellular stages keep their rectangles
// invariant); positions that drift outside the rectangle are snapped back
// and counted when the excursion exceeds 1e-6.
AdvectStats advect(const FlowProgram& program, ScalarField& field, double t0, double t1,
                   const AdvectOptions& opts = {});
AdvectStats advect(const FlowProgram& program, TracerCloud& cloud, double t0, double t1,
                   const AdvectOptions& opts = {});

// CSR buckets of particle indices by dyadic cell (or by the half-cell
// rectangle grid when split_x is true: 2^{level+1} x 2^{level} rectangles).
struct CellBuckets {
    int nx = 1, ny = 1;
    std::vector<std::uint32_t> offsets; // size nx*ny + 1
    std::vector<std::uint32_t> indices;

    std::pair<const std::uint32_t*, const std::uint32_t*> cell(int ix, int iy) const {
        const std::size_t c = static_cast<std::size_t>(iy) * nx + ix;
        return {indices.data() + offsets[c], indices.data() + offsets[c + 1]};
    }
};

CellBuckets bucket_particles(const ScalarField& field, int level, bool split_x);

// ---------------------------------------------------------------------------
// Data-dependent switch times: the first instant in the window at which the
// two half-integrals of the advected scalar agree, found by bisection on the
// continuous difference h(t).  The search advects a scratch copy of the
// cell's particles under the given rotation flow (which need not be the flow
// later applied: truncated regimes search under the fully normalized twin).
struct SwitchQuery {
    Rect rect;
    std::shared_ptr<const StreamField> rotate;
    double sign = 1.0;
    double speed = 1.0;
    double t0 = 0.0;
    double t1 = 0.5;
    RegionPart first = RegionPart::Left; // Left/Right or Lower/Upper split
    std::function<bool(const Vec2&)> mask; // local-coords restriction (D sets)
    double tol = 1e-3;                     // residual <= tol * area * bound
    StepControl ode{};
    bool parallel_inner = true; // off when the caller parallelizes over cells
};

struct SwitchResult {
    double time = 0.0;
    double residual = 0.0; // |h| at the returned time, in integral units
    bool no_sign_change = false;
    std::size_t count = 0;
};

SwitchResult find_switch_time(const ScalarField& field, const std::uint32_t* begin,
                              const std::uint32_t* end, const SwitchQuery& query,
                              double field_bound);

// Convenience overload scanning the whole field for particles in the rect.
SwitchResult find_switch_time(const ScalarField& field, const SwitchQuery& query);

// ---------------------------------------------------------------------------
// Flow-map diagnostics on an advected convex polygon seed.
struct FlowMapCheck {
    double area_drift = 0.0;   // |area_1 - area_0| / area_0
    double max_displacement = 0.0;
    bool self_intersected = false;
};

FlowMapCheck flow_map_check(const FlowProgram& program, const TracerCloud& seed, double t0,
                            double t1, const AdvectOptions& opts = {});

} // namespace cellmix
