#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace cellmix {

// Tabulated streamline periods T(s) of a generator, together with the
// cumulative integral F(s) = int_0^s T.  T is stored as an exact piecewise
// cubic (natural spline through traced nodes; truncated kinds keep their
// constant and blend segments as exact pieces), and F is its exact
// antiderivative, so F' == T to roundoff and the induced velocity is C^1:
// finite-difference divergences stay at discretization noise.
struct PeriodTable {
    std::vector<double> s;                     // nodes, ascending, s.front() == 0
    std::vector<double> T;                     // nodal values, all > 0
    std::vector<double> F;                     // exact cumulative at nodes, F[0] = 0
    std::vector<std::array<double, 4>> coef;   // cubic coeffs of T on [s_i, s_{i+1}]

    double blend_lo = 0.0; // (delta/2, delta) blend window for truncated kinds
    double blend_hi = 0.0;
    double s_trunc = 0.0; // stream level below which periods are not normalized
    double s_max = 0.0;   // generator maximum (2/pi for base-derived kinds)

    // Natural cubic spline through (s, T); throws if any piece dips <= 0.
    static PeriodTable from_spline(std::vector<double> s, std::vector<double> T);
    // Piecewise assembly from explicit segments (used by truncated kinds).
    void finalize(); // recompute F from coef and validate positivity

    double F_of(double level) const;
    double T_of(double level) const;
    double F_total() const { return F.empty() ? 0.0 : F.back(); }

    // Generator level at a given fraction of total F-measure (inverse of F).
    double level_at_fraction(double frac) const;

    void write_csv(const std::string& path, const std::string& header_comment = "") const;

  private:
    std::size_t interval(double level) const;
};

// Cubic-spline coefficient solve shared with table assembly: natural right
// end; left end natural, or clamped to a given first derivative.
std::vector<std::array<double, 4>> spline_coeffs(const std::vector<double>& x,
                                                 const std::vector<double>& y,
                                                 const double* left_slope);
std::vector<std::array<double, 4>> natural_spline_coeffs(const std::vector<double>& x,
                                                         const std::vector<double>& y);

} // namespace cellmix
