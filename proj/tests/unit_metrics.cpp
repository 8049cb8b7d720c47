/// @file unit_metrics.cpp
/// @brief Mixedness verdicts, spectral mix norms, gradient norms, fits.

#include <doctest.h>

#include "cellmix/metrics.hpp"
#include "cellmix/stream.hpp"

#include <cmath>

using namespace cellmix;

TEST_CASE("is_kappa_mixed basics") {
    ScalarField zero = ScalarField::stratified(5, 4, [](Vec2) { return 0.0; }, 1);
    CHECK(is_kappa_mixed(zero, 0.1, 0.1).is_mixed);

    ScalarField split = ScalarField::stratified(7, 4, half_split, 2);
    const MixReport rep = is_kappa_mixed(split, 1.0 / 3.0, 0.25);
    CHECK(!rep.is_mixed);
    CHECK(rep.worst_ratio == doctest::Approx(1.0).epsilon(0.02));
    // A ball centered deep inside the left half sees average 1.
    CHECK(rep.worst_ratio >= 0.95);

    ScalarField checker = ScalarField::stratified(7, 4, checkerboard(3), 3);
    CHECK(is_kappa_mixed(checker, 0.5, 0.5).is_mixed);
}

TEST_CASE("mixedness is monotone in kappa") {
    ScalarField f = ScalarField::stratified(7, 4, checkerboard(2), 4);
    const MixReport tight = is_kappa_mixed(f, 0.05, 0.3);
    const MixReport loose = is_kappa_mixed(f, 0.4, 0.3);
    // Same worst ratio; only the verdict threshold moves.
    CHECK(tight.worst_ratio == doctest::Approx(loose.worst_ratio));
    if (tight.is_mixed) CHECK(loose.is_mixed);
}

TEST_CASE("cell_mean_sup") {
    ScalarField f = ScalarField::stratified(6, 4, half_split, 5);
    CHECK(cell_mean_sup(f, 0).value < 3e-3);
    CHECK(cell_mean_sup(f, 1).value == doctest::Approx(1.0).epsilon(1e-2));
}

TEST_CASE("mix_norm single-mode oracle") {
    // cos(2 pi x) on the torus: |c_{(1,0)}| = |c_{(-1,0)}| = 1/2, so the
    // H^{-1} norm is (1/sqrt2)(1 + 4 pi^2)^{-1/2}.
    const Raster r = Raster::from_function(256, [](Vec2 q) { return std::cos(2 * M_PI * q.x); });
    const double expect = (1.0 / std::sqrt(2.0)) / std::sqrt(1.0 + 4.0 * M_PI * M_PI);
    CHECK(mix_norm(r, 1.0, true) == doctest::Approx(expect).epsilon(1e-3));

    const Raster z = Raster::zeros(256, 256);
    CHECK(mix_norm(z, 1.0, true) == 0.0);
    CHECK(mix_norm(z, 0.5, false) == 0.0);

    // Reflected (wall-bounded) route agrees on an even-symmetric mode.
    const Raster even =
        Raster::from_function(256, [](Vec2 q) { return std::cos(M_PI * q.x); });
    const double direct = mix_norm(even, 1.0, false);
    CHECK(direct > 0.0);

    // Particle route approximates the raster route.
    ScalarField f = ScalarField::stratified(
        8, 4, [](Vec2 q) { return std::cos(2 * M_PI * q.x); }, 6);
    CHECK(mix_norm(f, 1.0, 8, true) == doctest::Approx(expect).epsilon(0.02));
}

TEST_CASE("grad_lp: shifts, divergence detection") {
    auto shift = [](Vec2) { return Vec2{2.0, 0.0}; };
    CHECK(grad_lp(shift, 1.0).value == doctest::Approx(0.0));

    const StreamSpec spec = StreamSpec::base();
    const PeriodTable& table = period_table(spec);
    auto vel = [&](Vec2 q) { return eval_velocity(spec, table, q); };
    auto dist = [](Vec2 q) { return dist_special(q).d; };
    const GradLpResult low = grad_lp(vel, 1.5, dist);
    CHECK(!low.diverged);
    CHECK(low.value > 0.0);
    const GradLpResult two = grad_lp(vel, 2.0, dist);
    CHECK(two.diverged);
}

TEST_CASE("gagliardo seminorm") {
    const GagliardoResult c = gagliardo([](Vec2) { return 1.0; }, 0.5, 1.0, 50000, 1);
    CHECK(c.value == doctest::Approx(0.0));

    // Jump function: finite for s p < 1, truncation-sensitive for s p > 1.
    const GagliardoResult ok =
        gagliardo([](Vec2 q) { return q.x < 0.5 ? 1.0 : 0.0; }, 0.4, 1.0, 200000, 2);
    CHECK(ok.value > 0.0);
    CHECK(std::isfinite(ok.value));
    CHECK(!ok.slow_convergence);

    const GagliardoResult bad =
        gagliardo([](Vec2 q) { return q.x < 0.5 ? 1.0 : 0.0; }, 0.6, 2.0, 200000, 3);
    CHECK(bad.slow_convergence);

    CHECK_THROWS_AS(gagliardo([](Vec2) { return 0.0; }, 1.2, 2.0), std::invalid_argument);
}

TEST_CASE("tiled-field scaling oracle") {
    // Smooth bump tiled at level n with checkerboard signs and amplitude
    // 2^{-n}: consecutive-level seminorm ratio approaches 2^{-(1-s)}.
    auto bump = [](double t) {
        return t > 0.0 && t < 1.0 ? std::exp(-1.0 / (t * (1.0 - t))) : 0.0;
    };
    auto tiled = [&](int n) {
        return [n, bump](Vec2 q) {
            const int cells = 1 << n;
            const int i = std::min(cells - 1, static_cast<int>(q.x * cells));
            const int j = std::min(cells - 1, static_cast<int>(q.y * cells));
            const double lx = q.x * cells - i;
            const double ly = q.y * cells - j;
            const double sign = ((i + j) % 2 == 0) ? 1.0 : -1.0;
            return sign * std::ldexp(1.0, -n) * 256.0 * bump(lx) * bump(ly);
        };
    };
    const double s = 0.5, p = 1.0;
    const double n2 = gagliardo(tiled(2), s, p, 400000, 11).value;
    const double n3 = gagliardo(tiled(3), s, p, 400000, 11).value;
    const double expect = std::pow(2.0, -(1.0 - s));
    CHECK(n3 / n2 == doctest::Approx(expect).epsilon(0.15));
}

TEST_CASE("fit_scaling") {
    std::vector<std::pair<double, double>> line;
    for (double x : {1.0, 2.0, 3.0, 4.0}) line.push_back({x, 2 * x + 1});
    const FitResult f = fit_scaling(line, FitModel::Linear);
    CHECK(f.slope == doctest::Approx(2.0));
    CHECK(f.intercept == doctest::Approx(1.0));
    CHECK(f.r_squared == doctest::Approx(1.0));

    std::vector<std::pair<double, double>> quad;
    for (double x : {0.5, 1.0, 2.0, 4.0}) quad.push_back({x, x * x});
    CHECK(fit_scaling(quad, FitModel::LogLog).slope == doctest::Approx(2.0));

    std::vector<std::pair<double, double>> degenerate = {{1, 1}, {1, 2}, {1, 3}};
    CHECK_THROWS_AS(fit_scaling(degenerate, FitModel::Linear), std::invalid_argument);
    CHECK_THROWS_AS(fit_scaling({{1, 1}, {2, 2}}, FitModel::Linear), std::invalid_argument);
}

TEST_CASE("estimator convergence under refinement") {
    ScalarField f = ScalarField::stratified(7, 4, checkerboard(2), 8);
    const double m8 = mix_norm(f, 1.0, 8, false);
    const double m9 = mix_norm(f, 1.0, 9, false);
    CHECK(std::abs(m9 - m8) / m8 < 0.02);
}
