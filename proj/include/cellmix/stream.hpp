#pragma once

#include "cellmix/base_stream.hpp"
#include "cellmix/cutoff.hpp"
#include "cellmix/geometry.hpp"
#include "cellmix/period_table.hpp"

#include <memory>
#include <stdexcept>
#include <string>

namespace cellmix {

// The stream-function zoo.  Base is the raw cellular generator phi; the
// Regularized/Truncated families multiply in stagnation-point cutoffs so the
// induced velocities have better Sobolev regularity; the TimeWaste kinds are
// the half-cell-invariant parking flows matched to them; SimpleCutoff damps
// the base stream by level (psi f(psi/delta)), vanishing at the boundary.
enum class StreamKind {
    Base,
    TimeWaste,
    Regularized,
    TimeWasteRegularized,
    Truncated,
    TruncatedP,
    TimeWasteTruncated,
    SimpleCutoff,
};

const char* to_string(StreamKind kind);
StreamKind stream_kind_from_string(const std::string& name);

// Exponent threshold (3 + sqrt 5)/2 separating the perfectly mixing regime
// from the truncated one.
inline double regularity_threshold() { return 0.5 * (3.0 + std::sqrt(5.0)); }

struct StreamSpec {
    StreamKind kind = StreamKind::Base;
    double a = 0.0;     // regularization exponent in (0, 1]
    double delta = 0.0; // truncation / cutoff scale in (0, 1/10)
    double p = 0.0;     // TruncatedP only, >= (3 + sqrt 5)/2
    int orientation_sign = 1;

    static StreamSpec base(int sign = 1);
    static StreamSpec time_waste(int sign = 1);
    static StreamSpec regularized(double a, int sign = 1);
    static StreamSpec time_waste_regularized(double a, int sign = 1);
    static StreamSpec truncated(double a, double delta, int sign = 1);
    // p = 0 matches the plain truncated family; p >= (3+sqrt5)/2 matches the
    // p-truncated one (same boundary speeds as truncated_p(p, delta)).
    static StreamSpec time_waste_truncated(double a, double delta, int sign = 1, double p = 0.0);
    static StreamSpec truncated_p(double p, double delta, int sign = 1);
    static StreamSpec simple_cutoff(double delta, int sign = 1);

    void validate() const; // throws std::invalid_argument

    bool has_generator() const {
        return kind == StreamKind::Base || kind == StreamKind::Regularized ||
               kind == StreamKind::Truncated || kind == StreamKind::TruncatedP;
    }
    bool is_time_waste() const {
        return kind == StreamKind::TimeWaste || kind == StreamKind::TimeWasteRegularized ||
               kind == StreamKind::TimeWasteTruncated;
    }
    bool is_truncated_family() const {
        return kind == StreamKind::Truncated || kind == StreamKind::TruncatedP ||
               kind == StreamKind::TimeWasteTruncated;
    }

    // Key-value text form, e.g. "kind=truncated a=0.333 delta=0.01 sign=1".
    std::string to_text() const;
    static StreamSpec from_text(const std::string& text);
};

bool operator==(const StreamSpec& lhs, const StreamSpec& rhs);

struct GeneratorEval {
    double value = 0.0;
    Vec2 grad{};
};

// Value and gradient of the generator (phi, phi_a, phi_{a,delta} or
// phi_{a,delta,p}).  Throws std::invalid_argument for kinds that have no
// generator (the time-wasting streams and SimpleCutoff).
GeneratorEval eval_generator(const StreamSpec& spec, const Vec2& q);

// Calibrated coefficient c of the truncation radius d_{a,delta} =
// c delta^{1/(a+1)}: the largest c (with a small safety margin) such that
// every point with phi_a > delta/2 keeps distance >= c delta^{1/(a+1)} from
// the stagnation set, probed at delta = 1e-2 by radial bisection around the
// stagnation points.
double stagnation_clearance_coeff(double a);
double truncation_radius(const StreamSpec& spec);

// Boundary limit T_{phi_a}(0) = 4 int_0^{1/4} f(r)^{-a} dr of the raw
// streamline periods (equals 1 for the base kind).
double boundary_period_limit(double a);

// Return time of a tracer launched on the level set {generator = level},
// integrated under the raw generator flow until first return to the Poincare
// section {x = 1/2, y < 1/2}.  For SimpleCutoff the level is measured in
// base-psi units and the traced flow is the damped one.
double trace_period(const StreamSpec& spec, double level, double time_cap = 100.0);

// Return time under the induced (normalized) stream velocity, launched on
// the generator level set; equals 1 wherever the table normalizes.
double trace_stream_period(const StreamSpec& spec, const PeriodTable& table, double level,
                           double time_cap = 100.0);

// Period table of the flow the spec denotes.  For Truncated kinds this is
// the blended table: constant T_{phi_a}(delta) on [0, delta/2], the raw
// periods above delta, and a monotonicity-controlled Hermite blend between.
PeriodTable build_period_table(const StreamSpec& spec);

// Fully normalized twin: periods of the truncated generator itself are used
// everywhere, so the induced stream has unit periods on every streamline.
// Identical to build_period_table for non-truncated kinds.
PeriodTable build_virtual_table(const StreamSpec& spec);

// Cached access (tables are immutable once built; independent specs build
// independently).
const PeriodTable& period_table(const StreamSpec& spec);
const PeriodTable& virtual_period_table(const StreamSpec& spec);

// psi-value at q: F(generator value), via the table interpolant.
double eval_stream(const StreamSpec& spec, const PeriodTable& table, const Vec2& q);

// Induced velocity sign * T(g) * perp(grad g); bounded by ||grad psi||_inf.
Vec2 eval_velocity(const StreamSpec& spec, const PeriodTable& table, const Vec2& q);

struct EtaEval {
    double value = 0.0;
    Vec2 velocity{};
    bool on_seam = false; // on one of the six-region boundary lines
};

// Time-wasting stream value and velocity.  Requires a TimeWaste* kind.
EtaEval eval_eta(const StreamSpec& spec, const Vec2& q);

// ---------------------------------------------------------------------------
// Unit-square stream fields for program composition.  velocity() is the
// orientation-free perp-gradient; cell entries apply sign and scaling.
class StreamField {
  public:
    virtual ~StreamField() = default;
    virtual double value(const Vec2& q) const = 0;
    virtual Vec2 velocity(const Vec2& q) const = 0;
};

std::shared_ptr<const StreamField> make_stream_field(const StreamSpec& spec);
std::shared_ptr<const StreamField> make_virtual_stream_field(const StreamSpec& spec);

// Boundary factor f(x(1-x)/scale) f(y(1-y)/scale) wrapped around a stream:
// the wrapped value and velocity vanish on the square boundary.  scale is
// delta for the simple mode and beta 2^{-n} for the no-slip mode at level n.
std::shared_ptr<const StreamField> apply_boundary_factor(
    std::shared_ptr<const StreamField> base, double scale);
inline double noslip_scale(double beta, int level) { return beta * std::ldexp(1.0, -level); }

// ---------------------------------------------------------------------------
// L^p norm of the stream hessian, estimated from finite differences of
// eval_stream on a grid refined dyadically toward the special points.
// p = infinity returns the sampled maximum.  Divergence under refinement is
// reported instead of a value, with the measured ring-mass growth exponent.
struct HessianNorm {
    double value = 0.0;
    bool diverged = false;
    double growth_exponent = 0.0;
};

HessianNorm norm_hessian(const StreamSpec& spec, const PeriodTable& table, double p);

} // namespace cellmix
