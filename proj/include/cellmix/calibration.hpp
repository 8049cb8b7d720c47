#pragma once

#include <optional>
#include <string>

namespace cellmix {

// Measured constants the schedules depend on.  The underlying results only
// prove these exist; the values here come from the calibrate tool (see the
// cli), are stored in a versioned file, and are compiled in as defaults so
// library behavior does not depend on the working directory.
struct Calibration {
    int version = 1;
    // Per-stage cell-mean drift constant of the truncated regime:
    // drift <= 8 cprime delta^{2/(a+1)} ||rho0||_inf.
    double cprime = 0.05;
    // No-slip per-stage drift constant: drift <= noslip_C beta ||rho0||_inf.
    double noslip_C = 1.0;
    // Un-mixing cutoff: delta = kappa / (unmix_C n).
    double unmix_C = 6.0;
    // Small mix-norm implies kappa-mixed: ||f||_{H^-1} <= lemma_a2_c
    // kappa^{3/2} eps^2 ||f||_inf forces the mixed verdict.
    double lemma_a2_c = 0.05;
    // Mixed implies small mix-norm: ||f||_{H^-1/2} <= defn_mixnorm_C
    // sqrt(eps + kappa^2) ||f||_inf.
    double defn_mixnorm_C = 1.0;
    // Uniform bound on |T_raw(s) - T_raw(delta)| / (delta^{1/2} log(2 delta/s))
    // for the a = 1/3 truncated family.
    double period_discrepancy_K = 10.0;

    static Calibration builtin();
    static Calibration load(const std::string& path);
    void save(const std::string& path) const;

    // Environment override CELLMIX_CALIBRATION, else the given path, else
    // builtin values (identifier reports which source was used).
    static Calibration resolve(const std::optional<std::string>& path, std::string* source = nullptr);
};

} // namespace cellmix
