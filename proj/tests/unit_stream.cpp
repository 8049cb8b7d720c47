/// @file unit_stream.cpp
/// @brief Stream-function zoo: closed forms, cutoffs, periods, velocities.

#include <doctest.h>

#include "cellmix/rng.hpp"
#include "cellmix/stream.hpp"
#include "cellmix/tracer.hpp"

#include <cmath>

using namespace cellmix;

namespace {

double stream_trace_period(const StreamSpec& spec, const PeriodTable& table, double level,
                           double cap = 50.0) {
    // Return time under the normalized stream velocity, launched on the
    // generator level set at the Poincare section.
    auto rhs = [&](const Vec2& q) { return eval_velocity(spec, table, q); };
    double lo = 0.0, hi = 0.5;
    for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double v = spec.kind == StreamKind::SimpleCutoff
                             ? period_table(StreamSpec::base()).F_of(base_value({0.5, mid}))
                             : eval_generator(spec, {0.5, mid}).value;
        (v < level ? lo : hi) = mid;
    }
    StepControl ctl;
    ctl.tol_per_unit_time = 1e-9;
    ctl.h_init = 1e-3;
    ctl.h_max = 2e-2;
    const ReturnResult rr = first_return_time(rhs, {0.5, 0.5 * (lo + hi)}, 0.5, 0.5, cap, ctl);
    REQUIRE(rr.ok);
    return rr.time;
}

double on_seam_distance(const Vec2& p) {
    const double s = std::sqrt(0.5);
    double d = std::min(std::abs(p.x - 0.5), std::abs(p.y - 0.5));
    d = std::min(d, std::abs(p.x + p.y - 0.5) * s);
    d = std::min(d, std::abs(p.x + p.y - 1.5) * s);
    return std::min(d, dist_special(p).d);
}

} // namespace

TEST_CASE("base stream closed forms") {
    const BaseEval c = eval_base({0.5, 0.5});
    CHECK(c.value == doctest::Approx(2.0 / M_PI).epsilon(1e-14));
    CHECK(std::abs(c.grad.x) < 1e-12);
    CHECK(std::abs(c.grad.y) < 1e-12);

    // Boundary: value 0 and inward normal derivative 4.
    for (double x : {0.1, 0.37, 0.5, 0.93}) {
        const BaseEval b = eval_base({x, 0.0});
        CHECK(std::abs(b.value) < 1e-13);
        CHECK(std::abs(b.grad.x) < 1e-13);
        CHECK(b.grad.y == doctest::Approx(4.0).epsilon(1e-12));
    }

    const BaseEval q = eval_base({0.25, 0.25});
    CHECK(q.value == doctest::Approx(std::sqrt(2.0) / M_PI).epsilon(1e-14));

    // Corner: flagged singular, value 0, gradient magnitude 4 by convention.
    const BaseEval corner = eval_base({0.0, 0.0});
    CHECK(corner.singular);
    CHECK(corner.value == 0.0);
    CHECK(corner.grad.norm() == doctest::Approx(4.0));

    // Gradient and hessian against centered differences at interior points.
    Rng rng(7);
    for (int k = 0; k < 50; ++k) {
        const Vec2 p{rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)};
        const double h = 1e-6;
        const BaseEval e = eval_base(p);
        const double fx =
            (base_value({p.x + h, p.y}) - base_value({p.x - h, p.y})) / (2 * h);
        const double fy =
            (base_value({p.x, p.y + h}) - base_value({p.x, p.y - h})) / (2 * h);
        CHECK(e.grad.x == doctest::Approx(fx).epsilon(1e-6));
        CHECK(e.grad.y == doctest::Approx(fy).epsilon(1e-6));
        const double hxx = (base_value({p.x + h, p.y}) - 2 * base_value(p) +
                            base_value({p.x - h, p.y})) /
                           (h * h);
        CHECK(e.hxx == doctest::Approx(hxx).epsilon(2e-3));
    }

    // Hessian magnitude bound 70 / d_corner.
    for (int k = 0; k < 400; ++k) {
        Rng r2(k + 100);
        const Vec2 p{r2.uniform(0.002, 0.998), r2.uniform(0.002, 0.998)};
        const BaseEval e = eval_base(p);
        const double frob =
            std::sqrt(e.hxx * e.hxx + 2 * e.hxy * e.hxy + e.hyy * e.hyy);
        const double dc = std::min(std::min(p.norm(), (p - Vec2{1, 0}).norm()),
                                   std::min((p - Vec2{0, 1}).norm(), (p - Vec2{1, 1}).norm()));
        CHECK(frob <= 70.0 / dc);
    }
}

TEST_CASE("cutoff profile") {
    CHECK(cutoff(0.05) == doctest::Approx(0.25));
    CHECK(cutoff(0.5) == doctest::Approx(1.0));
    CHECK(cutoff(0.1) == doctest::Approx(0.5));
    CHECK(cutoff(0.2) == doctest::Approx(1.0));
    // Monotone across the blend at 1e-4 resolution.
    double prev = cutoff(0.1);
    for (int k = 1; k <= 1000; ++k) {
        const double s = 0.1 + 1e-4 * k;
        const double f = cutoff(s);
        CHECK(f >= prev - 1e-14);
        prev = f;
    }
    // Derivative consistency with finite differences.
    for (double s : {0.02, 0.11, 0.15, 0.19, 0.25}) {
        const double h = 1e-7;
        const double fd = (cutoff(s + h) - cutoff(s - h)) / (2 * h);
        CHECK(cutoff_deriv(s) == doctest::Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("spec validation and serialization") {
    CHECK_THROWS_AS(StreamSpec::regularized(0.0), std::invalid_argument);
    CHECK_THROWS_AS(StreamSpec::regularized(1.5), std::invalid_argument);
    CHECK_THROWS_AS(StreamSpec::truncated(0.5, 0.2), std::invalid_argument);
    CHECK_THROWS_AS(StreamSpec::truncated_p(2.0, 0.01), std::invalid_argument);

    const StreamSpec s = StreamSpec::truncated_p(4.0, 0.01, -1);
    CHECK(s.a == doctest::Approx(3.0 / 11.0));
    const StreamSpec back = StreamSpec::from_text(s.to_text());
    CHECK(back == s);
}

TEST_CASE("generator values and cutoff plateau") {
    const double a = std::sqrt(5.0) - 2.0;
    const GeneratorEval g = eval_generator(StreamSpec::regularized(a), {0.25, 0.25});
    // d_P(1/4,1/4) = sqrt(2)/4 > 1/5, so the cutoff sits on its plateau.
    CHECK(g.value == doctest::Approx(std::sqrt(2.0) / M_PI).epsilon(1e-13));

    for (double x : {0.0, 0.3, 1.0}) {
        CHECK(eval_generator(StreamSpec::regularized(a), {x, 0.0}).value == 0.0);
    }

    const StreamSpec tr = StreamSpec::truncated(1.0 / 3.0, 0.01);
    const double dad = truncation_radius(tr);
    CHECK(dad > 0.0);
    CHECK(dad < 0.5);
    // Where d_P >= d_{a,delta}/5 the truncated generator equals the
    // regularized one.
    const Vec2 far{0.3, 0.4};
    CHECK(eval_generator(tr, far).value ==
          doctest::Approx(eval_generator(StreamSpec::regularized(1.0 / 3.0), far).value));

    CHECK_THROWS_AS(eval_generator(StreamSpec::time_waste(), {0.5, 0.25}),
                    std::invalid_argument);

    // Gradients against centered differences, including near the cutoff.
    Rng rng(11);
    for (const StreamSpec& spec :
         {StreamSpec::regularized(a), tr, StreamSpec::truncated_p(4.0, 0.01)}) {
        for (int k = 0; k < 40; ++k) {
            const Vec2 p{rng.uniform(0.01, 0.99), rng.uniform(0.01, 0.99)};
            const double h = 1e-7;
            const GeneratorEval e = eval_generator(spec, p);
            const double fx = (eval_generator(spec, {p.x + h, p.y}).value -
                               eval_generator(spec, {p.x - h, p.y}).value) /
                              (2 * h);
            const double fy = (eval_generator(spec, {p.x, p.y + h}).value -
                               eval_generator(spec, {p.x, p.y - h}).value) /
                              (2 * h);
            CHECK(e.grad.x == doctest::Approx(fx).epsilon(5e-4));
            CHECK(e.grad.y == doctest::Approx(fy).epsilon(5e-4));
        }
    }

    // Sampled gradient bound |grad phi_a| <= C d_P^a (C frozen from a fit).
    const double frozen_C = 9.0;
    Rng rb(23);
    for (int k = 0; k < 2000; ++k) {
        const Vec2 p{rb.uniform(), rb.uniform()};
        const PointDistance pd = dist_stagnation(p);
        if (pd.d < 1e-6) continue;
        const GeneratorEval e = eval_generator(StreamSpec::regularized(a), p);
        CHECK(e.grad.norm() <= frozen_C * std::pow(pd.d, a));
    }
}

TEST_CASE("trace_period base limits") {
    CHECK(trace_period(StreamSpec::base(), 1e-5) == doctest::Approx(1.0).epsilon(1e-3));
    const double t_center = trace_period(StreamSpec::base(), 2.0 / M_PI - 1e-6);
    CHECK(t_center > 1.0);
    CHECK(t_center < 10.0);
    CHECK(t_center == doctest::Approx(2.0).epsilon(0.05));
    CHECK_THROWS_AS(trace_period(StreamSpec::base(), -0.1), std::domain_error);
    CHECK_THROWS_AS(trace_period(StreamSpec::base(), 1.0), std::domain_error);
}

TEST_CASE("period table: base normalization") {
    const StreamSpec spec = StreamSpec::base();
    const PeriodTable& table = period_table(spec);
    CHECK(table.s_trunc == 0.0);
    CHECK(table.F_total() > 0.0);
    CHECK(table.T_of(0.0) == doctest::Approx(1.0).epsilon(1e-6));
    for (std::size_t i = 1; i < table.F.size(); ++i) CHECK(table.F[i] > table.F[i - 1]);

    // Normalized stream has unit periods (spot check; acceptance runs 50).
    for (double frac : {0.02, 0.2, 0.5, 0.8, 0.98}) {
        const double level = table.level_at_fraction(frac);
        const double t = stream_trace_period(spec, table, level);
        CHECK(t == doctest::Approx(1.0).epsilon(1e-3));
    }
}

TEST_CASE("period table: truncated blend") {
    const double delta = 0.01;
    const StreamSpec spec = StreamSpec::truncated(1.0 / 3.0, delta);
    const PeriodTable& table = period_table(spec);
    CHECK(table.blend_lo == doctest::Approx(delta / 2));
    CHECK(table.blend_hi == doctest::Approx(delta));
    CHECK(table.s_trunc == doctest::Approx(table.F_of(delta)));
    // Constant below delta/2.
    const double t_ref = table.T_of(0.25 * delta);
    CHECK(table.T_of(1e-6) == doctest::Approx(t_ref).epsilon(1e-12));
    CHECK(table.T_of(0.5 * delta) == doctest::Approx(t_ref).epsilon(1e-12));
    // Equals the raw regularized periods above delta.
    const PeriodTable& raw = period_table(StreamSpec::regularized(1.0 / 3.0));
    for (double s : {2 * delta, 0.1, 0.3}) {
        CHECK(table.T_of(s) == doctest::Approx(raw.T_of(s)).epsilon(1e-9));
    }
    // Normalized periods above the truncation level.
    for (double frac : {0.3, 0.7}) {
        const double level = table.level_at_fraction(frac);
        if (level < delta) continue;
        CHECK(stream_trace_period(spec, table, level) == doctest::Approx(1.0).epsilon(1e-3));
    }
}

TEST_CASE("virtual table normalizes everywhere") {
    const double delta = 0.01;
    const StreamSpec spec = StreamSpec::truncated(1.0 / 3.0, delta);
    const PeriodTable& virt = virtual_period_table(spec);
    // Under the fully normalized twin even deep streamlines have period 1.
    auto rhs = [&](const Vec2& q) {
        const GeneratorEval g = eval_generator(spec, q);
        return virt.T_of(g.value) * perp(g.grad);
    };
    for (double level : {delta / 4, delta / 16}) {
        double lo = 0.0, hi = 0.5;
        for (int it = 0; it < 100; ++it) {
            const double mid = 0.5 * (lo + hi);
            (eval_generator(spec, {0.5, mid}).value < level ? lo : hi) = mid;
        }
        StepControl ctl;
        ctl.tol_per_unit_time = 1e-9;
        ctl.h_init = 1e-4;
        const ReturnResult rr = first_return_time(rhs, {0.5, 0.5 * (lo + hi)}, 0.5, 0.5, 50.0, ctl);
        REQUIRE(rr.ok);
        CHECK(rr.time == doctest::Approx(1.0).epsilon(2e-3));
    }
}

TEST_CASE("stream values and symmetry") {
    const StreamSpec spec = StreamSpec::base();
    const PeriodTable& table = period_table(spec);
    CHECK(eval_stream(spec, table, {0.5, 0.0}) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(eval_stream(spec, table, {0.5, 0.5}) == doctest::Approx(table.F_total()));
    Rng rng(3);
    for (int k = 0; k < 30; ++k) {
        const Vec2 p{rng.uniform(), rng.uniform()};
        const double v = eval_stream(spec, table, p);
        CHECK(eval_stream(spec, table, {p.y, p.x}) == doctest::Approx(v).epsilon(1e-10));
        CHECK(eval_stream(spec, table, {1 - p.x, 1 - p.y}) == doctest::Approx(v).epsilon(1e-10));
    }
}

TEST_CASE("velocity: boundary speed, center, incompressibility") {
    const StreamSpec spec = StreamSpec::base();
    const PeriodTable& table = period_table(spec);
    const Vec2 u_edge = eval_velocity(spec, table, {0.3, 0.0});
    CHECK(u_edge.norm() == doctest::Approx(4.0).epsilon(1e-10));
    CHECK(std::abs(u_edge.y) < 1e-10); // tangential
    CHECK(eval_velocity(spec, table, {0.5, 0.5}).norm() < 1e-9);

    Rng rng(5);
    int checked = 0;
    for (int k = 0; k < 200 && checked < 100; ++k) {
        const Vec2 p{rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95)};
        if (dist_special(p).d < 0.05) continue;
        ++checked;
        const double h = 1e-5;
        const double div =
            (eval_velocity(spec, table, {p.x + h, p.y}).x -
             eval_velocity(spec, table, {p.x - h, p.y}).x) /
                (2 * h) +
            (eval_velocity(spec, table, {p.x, p.y + h}).y -
             eval_velocity(spec, table, {p.x, p.y - h}).y) /
                (2 * h);
        CHECK(std::abs(div) < 1e-6);
    }
    CHECK(checked == 100);
}

TEST_CASE("time-wasting stream: zeros, boundary speed, signs") {
    const StreamSpec tw = StreamSpec::time_waste();
    // Zero on the half-cell separatrices.
    for (double y : {0.1, 0.4, 0.77}) {
        CHECK(std::abs(eval_eta(tw, {0.5, y}).value) < 1e-12);
        CHECK(std::abs(eval_eta(tw, {y, 0.5}).value) < 1e-12);
    }
    // Outer boundary speed 4, tangential (off the special points).
    for (double x : {0.1, 0.3, 0.65, 0.9}) {
        const EtaEval e = eval_eta(tw, {x, 0.0});
        CHECK(e.velocity.norm() == doctest::Approx(4.0).epsilon(1e-9));
        CHECK(std::abs(e.velocity.y) < 1e-9);
    }
    // Sign pattern: positive in the squares, negative in the inner triangles.
    CHECK(eval_eta(tw, {0.25, 0.625}).value > 0.0);
    CHECK(eval_eta(tw, {1.0 / 3.0, 1.0 / 3.0}).value < 0.0);
    CHECK(eval_eta(tw, {0.6, 0.6}).value < 0.0);
    CHECK(eval_eta(tw, {0.1, 0.1}).value > 0.0);

    // Continuity across the seams.
    for (double t : {1e-8, 1e-9}) {
        const double a1 = eval_eta(tw, {0.3, 0.2 - t}).value;
        const double a2 = eval_eta(tw, {0.3, 0.2 + t}).value;
        CHECK(a1 == doctest::Approx(a2).epsilon(1e-4));
    }
    CHECK(eval_eta(tw, {0.5, 0.25}).on_seam);
    CHECK(!eval_eta(tw, {0.49, 0.25}).on_seam);

    // Value + velocity consistency: velocity is perp(grad value).
    Rng rng(17);
    for (int k = 0; k < 40; ++k) {
        const Vec2 p{rng.uniform(0.02, 0.98), rng.uniform(0.02, 0.98)};
        if (on_seam_distance(p) < 1e-3) continue;
        const double h = 1e-7;
        const Vec2 fd{-(eval_eta(tw, {p.x, p.y + h}).value - eval_eta(tw, {p.x, p.y - h}).value) /
                          (2 * h),
                      (eval_eta(tw, {p.x + h, p.y}).value - eval_eta(tw, {p.x - h, p.y}).value) /
                          (2 * h)};
        const EtaEval e = eval_eta(tw, p);
        CHECK(e.velocity.x == doctest::Approx(fd.x).epsilon(2e-4));
        CHECK(e.velocity.y == doctest::Approx(fd.y).epsilon(2e-4));
    }
}

TEST_CASE("matching boundary speeds across kinds") {
    const double a = std::sqrt(5.0) - 2.0;
    const double delta = 0.01;
    struct Pair {
        StreamSpec cell;
        StreamSpec waste;
    };
    const Pair pairs[] = {
        {StreamSpec::base(), StreamSpec::time_waste()},
        {StreamSpec::regularized(a), StreamSpec::time_waste_regularized(a)},
        {StreamSpec::truncated(1.0 / 3.0, delta),
         StreamSpec::time_waste_truncated(1.0 / 3.0, delta)},
        {StreamSpec::truncated_p(4.0, delta),
         StreamSpec::time_waste_truncated(3.0 / 11.0, delta, 1, 4.0)},
    };
    for (const Pair& pr : pairs) {
        const PeriodTable& table = period_table(pr.cell);
        for (double x : {0.06, 0.3, 0.44, 0.81}) {
            const double speed_cell = eval_velocity(pr.cell, table, {x, 0.0}).norm();
            const double speed_waste = eval_eta(pr.waste, {x, 0.0}).velocity.norm();
            CHECK(speed_cell == doctest::Approx(speed_waste).epsilon(1e-6));
        }
    }
}

TEST_CASE("boundary factor wrap") {
    auto base = make_stream_field(StreamSpec::base());
    auto wrapped = apply_boundary_factor(base, 0.05);
    for (const Vec2 p : {Vec2{0.3, 0.0}, Vec2{0.0, 0.7}, Vec2{1.0, 0.2}}) {
        CHECK(wrapped->velocity(p).norm() < 1e-9);
        CHECK(std::abs(wrapped->value(p)) < 1e-12);
    }
    // Unchanged well inside.
    for (const Vec2 p : {Vec2{0.3, 0.4}, Vec2{0.5, 0.72}}) {
        CHECK((wrapped->velocity(p) - base->velocity(p)).norm() < 1e-12);
    }
    // Area of affected streamlines is O(delta).
    const double delta = 0.05;
    auto w2 = apply_boundary_factor(base, delta);
    Rng rng(29);
    int affected = 0;
    const int samples = 20000;
    for (int k = 0; k < samples; ++k) {
        const Vec2 p{rng.uniform(), rng.uniform()};
        if ((w2->velocity(p) - base->velocity(p)).norm() > 1e-11) ++affected;
    }
    CHECK(static_cast<double>(affected) / samples <= 3.0 * delta);
}

TEST_CASE("hessian norms: base integrability split") {
    const StreamSpec spec = StreamSpec::base();
    const PeriodTable& table = period_table(spec);
    const HessianNorm low = norm_hessian(spec, table, 1.5);
    CHECK(!low.diverged);
    CHECK(low.value > 0.0);
    CHECK(std::isfinite(low.value));
    const HessianNorm two = norm_hessian(spec, table, 2.0);
    CHECK(two.diverged);
}
