#pragma once

#include "cellmix/field.hpp"
#include "cellmix/raster.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace cellmix {

// Mixedness verdict: every epsilon-ball average of f must be at most
// kappa ||f||_inf in magnitude.  Ball averages are taken over the particle
// ensemble on a lattice of centers with spacing eps/8 (ball averages of
// bounded f are 2||f||_inf/eps-Lipschitz in the center, so the lattice
// controls the continuum sup).
struct MixReport {
    bool is_mixed = false;
    Vec2 worst_center{};
    double radius = 0.0;
    double worst_ratio = 0.0; // |ball average| / bound
    double kappa = 0.0;
    std::size_t undersampled_balls = 0; // fewer than 16 particles
    std::size_t lattice_points = 0;
};

MixReport is_kappa_mixed(const ScalarField& field, double kappa, double eps);

struct CellMeanSup {
    double value = 0.0; // max |cell mean| / bound
    std::size_t undersampled_cells = 0;
};

CellMeanSup cell_mean_sup(const ScalarField& field, int level);

// Spectral negative-Sobolev mix norm of order s in (0, 1]: even reflection
// onto a 2x2 torus for wall-bounded fields (pure Fourier for periodic ones),
// then (sum |c_k|^2 (1 + |xi_k|^2)^{-s})^{1/2} with angular wavenumbers xi.
double mix_norm(const ScalarField& field, double s, int level = 8, bool periodic = false);
double mix_norm(const Raster& raster, double s, bool periodic = false);

// L^p norm of the velocity Jacobian (Frobenius pointwise), by central
// differences on an adaptive grid refined toward the singular set described
// by dist_fn (distance from a point to the nearest singularity).
struct GradLpResult {
    double value = 0.0;
    bool diverged = false;
    double growth_exponent = 0.0;
};

GradLpResult grad_lp(const std::function<Vec2(Vec2)>& velocity, double p,
                     const std::function<double(Vec2)>& dist_fn = nullptr,
                     int base_resolution = 48);

// Gagliardo seminorm (int int |f(x)-f(y)|^p / |x-y|^{2+sp})^{1/p} by Monte
// Carlo with pair density proportional to |x-y|^{-2}.
struct GagliardoResult {
    double value = 0.0;
    double std_error = 0.0;
    bool slow_convergence = false; // truncation-sensitive (sp >= 1 with jumps)
};

GagliardoResult gagliardo(const std::function<double(Vec2)>& f, double s, double p,
                          std::size_t pairs = 400000, std::uint64_t seed = 20140714);

// Least-squares fit y = slope*x + intercept with R^2; models: raw pairs,
// log-log, or affine in |log eps| (caller transforms x accordingly).
struct FitResult {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
};

enum class FitModel { Linear, LogLog };

FitResult fit_scaling(const std::vector<std::pair<double, double>>& series, FitModel model);

} // namespace cellmix
