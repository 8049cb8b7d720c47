#pragma once

#include "cellmix/geometry.hpp"
#include "cellmix/rng.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace cellmix {

// Particle-backed scalar: positions move along characteristics, carried
// values never change (pure transport has zero numerical diffusion, which is
// the point of the construction).  Initialization is a jittered sub-lattice,
// m = k^2 particles per dyadic cell at level n0, so cell integrals are
// stratified estimates whose error comes only from interface-straddling
// jitter cells.
struct ScalarField {
    std::vector<double> x;
    std::vector<double> y;
    std::vector<double> value;
    double bound = 0.0; // sup |rho_0|
    int init_level = 0; // n0
    int per_cell = 0;   // m

    std::size_t size() const { return x.size(); }
    double weight() const { return size() ? 1.0 / static_cast<double>(size()) : 0.0; }

    static ScalarField stratified(int level_n0, int per_cell_m,
                                  const std::function<double(Vec2)>& rho0, std::uint64_t seed);

    double mean() const;
    // Standard error of the full-square mean under the stratified design
    // (between-particle variance over sqrt N; conservative).
    double mean_stderr() const;
};

// Position-only cloud for flow-map diagnostics.
struct TracerCloud {
    std::vector<double> x;
    std::vector<double> y;

    std::size_t size() const { return x.size(); }
    static TracerCloud polygon_disc(Vec2 center, double radius, int vertices);
    static TracerCloud regular_grid(int per_side);

    double polygon_area() const; // shoelace over the vertex ordering
    bool self_intersects() const;
};

enum class RegionPart { Full, Left, Right, Lower, Upper };

struct CellIntegral {
    double integral = 0.0; // sum of value * particle weight
    double mean = 0.0;     // average of values in the region
    double std_error = 0.0;
    std::size_t count = 0;
    bool undersampled = false; // fewer than 16 particles
};

CellIntegral cell_integral(const ScalarField& field, const Rect& cell, RegionPart part);

// Common initial data.
double half_split(Vec2 q);                       // chi_{x<1/2} - chi_{x>1/2}
std::function<double(Vec2)> checkerboard(int n); // +-1 on level-n cells
std::function<double(Vec2)> random_cell_signs(int n, std::uint64_t seed);

} // namespace cellmix
