/// @file unit_unmix.cpp
/// @brief Occupation grids, sorting programs, and un-mixing runs.

#include <doctest.h>

#include "cellmix/unmix.hpp"

#include <cmath>

using namespace cellmix;

namespace {

Raster left_half_mask(int per_side) {
    return Raster::from_function(per_side, [](Vec2 q) { return q.x < 0.5 ? 1.0 : 0.0; });
}

Raster random_cells_mask(int n, int per_side, std::uint64_t seed) {
    const int cells = 1 << n;
    std::vector<int> on(static_cast<std::size_t>(cells) * cells);
    Rng rng(seed);
    for (auto& v : on) v = rng.uniform() < 0.5 ? 1 : 0;
    return Raster::from_function(per_side, [cells, on](Vec2 q) {
        const int i = std::min(cells - 1, static_cast<int>(q.x * cells));
        const int j = std::min(cells - 1, static_cast<int>(q.y * cells));
        return static_cast<double>(on[static_cast<std::size_t>(j) * cells + i]);
    });
}

} // namespace

TEST_CASE("compute_theta basics") {
    const ThetaGrid half = compute_theta(left_half_mask(64), 1);
    CHECK(half.at(0, 0) == doctest::Approx(1.0));
    CHECK(half.at(0, 1) == doctest::Approx(1.0));
    CHECK(half.at(1, 0) == doctest::Approx(0.0));
    CHECK(half.theta0() == doctest::Approx(0.5));
    CHECK(half.theta1() == doctest::Approx(0.0));
    CHECK(half.total_measure() == doctest::Approx(0.5));

    const ThetaGrid empty =
        compute_theta(Raster::from_function(64, [](Vec2) { return 0.0; }), 2);
    for (double t : empty.theta) CHECK(t == 0.0);

    const ThetaGrid rc = compute_theta(random_cells_mask(4, 256, 9), 4);
    CHECK(rc.count_intermediate(0.1) == 0); // all cells full or empty

    CHECK_THROWS_AS(compute_theta(left_half_mask(8), 2), std::invalid_argument);
    CHECK_THROWS_AS(compute_theta(left_half_mask(100), 3), std::invalid_argument);

    // Aggregates always sit at or below one half.
    const ThetaGrid any = compute_theta(random_cells_mask(3, 128, 4), 3);
    CHECK(any.theta0() <= 0.5 + 1e-12);
    CHECK(any.theta1() <= 0.5 + 1e-12);
}

TEST_CASE("quadrant aggregates tie out: a + c = 2 theta0") {
    const ThetaGrid g = compute_theta(random_cells_mask(3, 128, 21), 3);
    const int n = 1 << g.level;
    double a = 0, b = 0, c = 0, d = 0;
    const double norm = 2.0 / std::ldexp(1.0, 2 * g.level);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            const double t = g.at(i, j);
            if (i < n / 2 && j < n / 2) a += t * norm;
            if (i >= n / 2 && j < n / 2) b += t * norm;
            if (i < n / 2 && j >= n / 2) c += t * norm;
            if (i >= n / 2 && j >= n / 2) d += t * norm;
        }
    CHECK(a + c == doctest::Approx(2.0 * g.theta0()).epsilon(1e-12));
    CHECK(b + d == doctest::Approx(2.0 * g.theta1()).epsilon(1e-12));
}

TEST_CASE("left-column theta keeps the half split fixed up to O(delta)") {
    const ThetaGrid g = compute_theta(left_half_mask(64), 1);
    UnmixOptions opts;
    opts.particle_level = 6;
    const double delta = 1.0 / 64.0;
    const double err = forward_sort_error(g, delta, opts);
    CHECK(err <= 12.0 * delta); // one super-stage, O(delta) boundary damage
}

TEST_CASE("no-flow variant sorts exactly") {
    const ThetaGrid g = compute_theta(random_cells_mask(3, 128, 33), 3);
    UnmixOptions opts;
    opts.particle_level = 6;
    const double err = forward_sort_error(g, 0.0, opts);
    CHECK(err <= 2e-3); // ODE tolerance and particle quantization only
}

TEST_CASE("run_unmix: rectangle is a fixed point up to raster error") {
    const Raster mask =
        Raster::from_function(128, [](Vec2 q) { return q.x < 0.3 ? 1.0 : 0.0; });
    UnmixOptions opts;
    opts.particle_level = 6;
    const UnmixResult r = run_unmix(mask, 2, 0.2, Calibration::builtin(), opts);
    CHECK(r.measure_A == doctest::Approx(0.3).epsilon(0.02));
    CHECK(r.overlap_fraction >= 1.0 - 2.0 * 0.2);
    CHECK(r.passed);
}

TEST_CASE("run_unmix on random cell unions") {
    const Raster mask = random_cells_mask(3, 128, 77);
    UnmixOptions opts;
    opts.particle_level = 7;
    const UnmixResult r = run_unmix(mask, 3, 0.15, Calibration::builtin(), opts);
    CHECK(!r.hypothesis_warning); // cells are full or empty
    CHECK(r.overlap_fraction >= 1.0 - 2.0 * 0.15);
    CHECK(r.measure_drift <= 0.03);
    CHECK(r.transport.degenerate == 0);
}

TEST_CASE("hypothesis warning fires for half-filled cells") {
    // Left half-strips of every level-4 cell: theta identically 1/2.
    const Raster mask = Raster::from_function(256, [](Vec2 q) {
        const double lx = q.x * 16 - std::floor(q.x * 16);
        return lx < 0.5 ? 1.0 : 0.0;
    });
    const ThetaGrid g = compute_theta(mask, 4);
    CHECK(g.count_intermediate(0.2) == 256);
    UnmixOptions opts;
    opts.particle_level = 6;
    const UnmixResult r = run_unmix(mask, 4, 0.2, Calibration::builtin(), opts);
    CHECK(r.hypothesis_warning);
}
