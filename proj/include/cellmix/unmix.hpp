#pragma once

#include "cellmix/calibration.hpp"
#include "cellmix/program.hpp"
#include "cellmix/raster.hpp"
#include "cellmix/transport.hpp"

#include <cstdint>
#include <vector>

namespace cellmix {

// Dyadic occupation fractions theta_{ij} = 2^{2n} |A cap Q_{nij}| of a
// measurable set, with the half/quadrant aggregates the sorting recursion
// divides mass by.
struct ThetaGrid {
    int level = 0;
    std::vector<double> theta; // row-major, i = x index, j = y index

    double at(int i, int j) const {
        return theta[static_cast<std::size_t>(j) * (1 << level) + i];
    }
    double total_measure() const; // |S| = 2^{-2n} sum theta
    double theta0() const;        // left-half aggregate, always <= 1/2
    double theta1() const;
    std::size_t count_intermediate(double kappa) const; // theta in (kappa, 1-kappa)
};

// Exact cell fractions by pixel counting; the mask resolution must be at
// least 2^{n+3} per side and divisible by 2^n.
ThetaGrid compute_theta(const Raster& mask, int n);

// Sorting transport on (0, n]: super-stage k sorts within every level-k cell
// by four quarter-stages (180-degree sort in x, counter-rotating 90-degree
// half-column turns, then the same pair rotated).  delta > 0 wraps the base
// stream with the boundary factor (no-slip); delta = 0 is the no-flow
// variant with exact sorting.  Cells carrying no mass are left still.
FlowProgram build_sorting_program(const ThetaGrid& theta, double delta);

struct UnmixOptions {
    int particle_level = 8; // stratified n0
    int per_cell = 4;
    std::uint64_t seed = 1;
    StepControl ode{};
    double grad_p = 1.0; // exponent for the per-stage velocity-gradient report
    bool record_grad = false;
    int occupancy_level = -1; // -1 = auto from particle density
};

struct UnmixResult {
    ThetaGrid theta;
    double kappa = 0.0;
    double delta = 0.0;
    double measure_A = 0.0;
    double overlap = 0.0;          // |B cap (0,|A|) x (0,1)|
    double overlap_fraction = 0.0; // overlap / |A|
    double measure_drift = 0.0;    // occupancy-raster |B| vs |A|
    std::size_t hypothesis_violations = 0;
    bool hypothesis_warning = false;
    bool passed = false; // overlap_fraction >= 1 - 2 kappa
    std::vector<double> grad_per_stage;
    Raster occupancy;
    AdvectStats transport;
};

// Time-reversed sorting applied to chi_A: the final set B should fill the
// rectangle (0, |A|) x (0, 1) up to 2 kappa.
UnmixResult run_unmix(const Raster& mask, int n, double kappa, const Calibration& cal,
                      const UnmixOptions& opts = {});

// Forward diagnostic: transport chi_{x < |S|} through the sorting program
// and return the L1 distance to the target union of per-cell strips.
double forward_sort_error(const ThetaGrid& theta, double delta, const UnmixOptions& opts = {});

} // namespace cellmix
