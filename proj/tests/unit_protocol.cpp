/// @file unit_protocol.cpp
/// @brief Mixing plans, stage construction, the periodic prelude, full runs.

#include <doctest.h>

#include "cellmix/metrics.hpp"
#include "cellmix/protocol.hpp"

#include <cmath>

using namespace cellmix;

TEST_CASE("plan arithmetic") {
    const Calibration cal = Calibration::builtin();

    const MixPlan low = plan_mixing(BoundaryCondition::NoFlow, 1.5, 0.25, 0.25, false, cal);
    CHECK(low.regime == MixRegime::PerfectLow);
    CHECK(low.a == doctest::Approx(std::sqrt(5.0) - 2.0));
    CHECK(low.horizon == 6);
    CHECK(low.delta_seq.empty());
    CHECK(low.nu_p == 0.0);

    const MixPlan inf =
        plan_mixing(BoundaryCondition::NoFlow, INFINITY, 0.25, 0.25, false, cal);
    CHECK(inf.regime == MixRegime::TruncatedInfty);
    CHECK(inf.a == doctest::Approx(1.0 / 3.0));
    CHECK(inf.horizon == 7);
    CHECK(inf.nu_p == doctest::Approx(1.0 / 3.0));
    REQUIRE(inf.delta_seq.size() == 7);
    // Epsilon-dependent schedule is constant in the stage.
    CHECK(inf.delta_seq.front() == doctest::Approx(inf.delta_seq.back()));

    const MixPlan p4 = plan_mixing(BoundaryCondition::NoFlow, 4.0, 0.25, 0.25, false, cal);
    CHECK(p4.regime == MixRegime::TruncatedP);
    CHECK(p4.a == doctest::Approx(3.0 / 11.0));
    CHECK(p4.nu_p == doctest::Approx(5.0 / 44.0));

    // p = 2 (bounded enstrophy) routes to the perfectly mixing regime.
    CHECK(plan_mixing(BoundaryCondition::NoFlow, 2.0, 0.25, 0.25, false, cal).regime ==
          MixRegime::PerfectLow);

    const MixPlan ns =
        plan_mixing(BoundaryCondition::NoSlip, 1.5, 0.25, 0.25, false, cal);
    REQUIRE(ns.beta_seq.size() == static_cast<std::size_t>(ns.horizon));
    double sum_beta = 0.0;
    for (double b : ns.beta_seq) sum_beta += b;
    CHECK(sum_beta < 0.25); // schedule stays summable below kappa

    const MixPlan indep =
        plan_mixing(BoundaryCondition::NoFlow, INFINITY, 0.25, 0.25, true, cal);
    CHECK(indep.delta_seq.front() > indep.delta_seq.back()); // decaying schedule

    CHECK_THROWS_AS(plan_mixing(BoundaryCondition::NoFlow, 2.0, 0.7, 0.25, false, cal),
                    std::invalid_argument);
}

TEST_CASE("perfect stage zeroes the level-1 cell means") {
    const Calibration cal = Calibration::builtin();
    const MixPlan plan = plan_mixing(BoundaryCondition::NoFlow, 1.5, 0.25, 0.25, false, cal);
    ScalarField field = ScalarField::stratified(6, 4, half_split, 101);
    MixTrajectory traj;
    traj.plan = plan;
    RunOptions opts;
    opts.record_mix_norm = false;
    build_stage(plan, 0, field, traj, opts);
    const CellMeanSup sup = cell_mean_sup(field, 1);
    CHECK(sup.value < 0.01); // exact zeros at sampling precision
    CHECK(traj.half_stages.at(0).max_switch_residual <= 1.1e-3);
}

TEST_CASE("checkerboard data needs no rotation: switches at window start") {
    const Calibration cal = Calibration::builtin();
    const MixPlan plan = plan_mixing(BoundaryCondition::NoFlow, 1.5, 0.25, 0.25, false, cal);
    ScalarField field = ScalarField::stratified(6, 4, checkerboard(3), 55);
    MixTrajectory traj;
    traj.plan = plan;
    RunOptions opts;
    opts.record_mix_norm = false;
    build_stage(plan, 0, field, traj, opts);
    for (double t : traj.switch_times.at(0)) CHECK(t == doctest::Approx(0.0));
}

TEST_CASE("periodic prelude balances the level-1 cells") {
    const Calibration cal = Calibration::builtin();
    const MixPlan plan =
        plan_mixing(BoundaryCondition::Periodic, 1.5, 0.25, 0.25, false, cal);
    ScalarField field = ScalarField::stratified(6, 4, half_split, 77);
    MixTrajectory traj;
    traj.plan = plan;
    RunOptions opts;
    opts.record_mix_norm = false;
    periodic_prelude(plan, field, traj, opts);
    // Half-split data balances after a shift by 1/4, i.e. t0 = 1/8.
    REQUIRE(!traj.program.stages.empty());
    CHECK(traj.program.stages.front().is_shift);
    CHECK(traj.program.stages.front().t1 == doctest::Approx(0.125).epsilon(2e-2));
    CHECK(cell_mean_sup(field, 1).value < 0.015);
}

TEST_CASE("prelude shift is skipped for already balanced data") {
    const Calibration cal = Calibration::builtin();
    const MixPlan plan =
        plan_mixing(BoundaryCondition::Periodic, 1.5, 0.25, 0.25, false, cal);
    // Left-half integral already vanishes.
    ScalarField field = ScalarField::stratified(
        6, 4, [](Vec2 q) { return std::sin(4 * M_PI * q.x); }, 31);
    MixTrajectory traj;
    traj.plan = plan;
    RunOptions opts;
    opts.record_mix_norm = false;
    periodic_prelude(plan, field, traj, opts);
    CHECK(!traj.program.stages.front().is_shift); // t0 = 0
}

TEST_CASE("run_mixing reaches the target on the perfect regime") {
    const Calibration cal = Calibration::builtin();
    const MixPlan plan = plan_mixing(BoundaryCondition::NoFlow, 1.5, 0.25, 0.25, false, cal);
    ScalarField field = ScalarField::stratified(6, 4, half_split, 1234);
    RunOptions opts;
    opts.record_mix_norm = true;
    opts.allow_sparse_cells = true; // horizon 6 at 16k particles
    const MixTrajectory traj = run_mixing(plan, field, opts);
    CHECK(traj.final_report.is_mixed);
    CHECK(!traj.missed_target);
    CHECK(traj.first_mixed.at(0.25) >= 1.0);
    CHECK(traj.first_mixed.at(0.25) <= 6.0);
    // Mix norm decays along the trajectory.
    const double first = traj.half_stages.front().mix_norm_h1;
    const double last = traj.half_stages.back().mix_norm_h1;
    CHECK(last < first);
    CHECK(traj.transport.degenerate_fraction(field.size()) < 1e-5);
}

TEST_CASE("zero data mixes trivially with no stages") {
    const Calibration cal = Calibration::builtin();
    const MixPlan plan = plan_mixing(BoundaryCondition::NoFlow, 1.5, 0.25, 0.25, false, cal);
    ScalarField field = ScalarField::stratified(5, 4, [](Vec2) { return 0.0; }, 5);
    const MixTrajectory traj = run_mixing(plan, field, {});
    CHECK(traj.final_report.is_mixed);
    CHECK(traj.half_stages.empty());
}

TEST_CASE("non-mean-zero data is rejected") {
    const Calibration cal = Calibration::builtin();
    const MixPlan plan = plan_mixing(BoundaryCondition::NoFlow, 1.5, 0.25, 0.25, false, cal);
    ScalarField field = ScalarField::stratified(5, 4, [](Vec2) { return 1.0; }, 5);
    CHECK_THROWS_AS(run_mixing(plan, field, {}), std::invalid_argument);
}

TEST_CASE("stage velocity is self-similar across levels") {
    const Calibration cal = Calibration::builtin();
    const MixPlan plan = plan_mixing(BoundaryCondition::NoFlow, 1.5, 0.25, 0.25, false, cal);
    const StreamSpec spec = StreamSpec::regularized(plan.a);
    auto fieldp = make_stream_field(spec);

    // Entry velocity at level n, rescaled by (2^n space, 2^-n amplitude) and
    // the checkerboard sign, matches the unit-cell field.
    for (int n : {1, 3}) {
        const int cells = 1 << n;
        Rng rng(static_cast<std::uint64_t>(n));
        for (int k = 0; k < 25; ++k) {
            const int i = static_cast<int>(rng.uniform_index(cells));
            const int j = static_cast<int>(rng.uniform_index(cells));
            CellEntry e;
            e.rect = {static_cast<double>(i) / cells, static_cast<double>(j) / cells,
                      1.0 / cells, 1.0 / cells};
            e.pre = fieldp;
            e.post = fieldp;
            e.switch_time = 1.0;
            e.sign = ((i + j) % 2 == 0) ? 1.0 : -1.0;
            const Vec2 local{rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95)};
            const Vec2 global = e.rect.to_global(local);
            const Vec2 u = e.velocity(global, 0.0);
            const Vec2 unit = fieldp->velocity(local);
            CHECK(std::abs(u.x * cells * e.sign - unit.x) < 1e-9);
            CHECK(std::abs(u.y * cells * e.sign - unit.y) < 1e-9);
        }
    }
}

TEST_CASE("velocity budget is level-independent at stage start") {
    const Calibration cal = Calibration::builtin();
    const MixPlan plan = plan_mixing(BoundaryCondition::NoFlow, 1.5, 0.25, 0.25, false, cal);
    const StreamSpec spec = StreamSpec::regularized(plan.a);
    auto fieldp = make_stream_field(spec);
    std::vector<double> norms;
    for (int n : {0, 1, 2}) {
        Stage st = Stage::tiled(0.0, 0.5, n);
        const int cells = 1 << n;
        for (int j = 0; j < cells; ++j)
            for (int i = 0; i < cells; ++i) {
                CellEntry e;
                e.rect = {static_cast<double>(i) / cells, static_cast<double>(j) / cells,
                          1.0 / cells, 1.0 / cells};
                e.pre = fieldp;
                e.post = fieldp;
                e.switch_time = 1.0;
                e.sign = ((i + j) % 2 == 0) ? 1.0 : -1.0;
                st.add_entry(e);
            }
        auto vel = [&st](Vec2 q) { return st.velocity(q, 0.1); };
        auto dist = [n](Vec2 q) {
            const double c = std::ldexp(1.0, n);
            Vec2 local{q.x * c - std::floor(q.x * c), q.y * c - std::floor(q.y * c)};
            return dist_special(local).d / c;
        };
        norms.push_back(grad_lp(vel, 1.5, dist, 64).value);
    }
    for (double v : norms) {
        CHECK(v == doctest::Approx(norms.front()).epsilon(0.10));
    }
}
