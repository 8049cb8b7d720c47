#pragma once

#include "cellmix/field.hpp"

#include <string>
#include <vector>

namespace cellmix {

// Row-major scalar raster on the unit square (row 0 = bottom).  The native
// file format is a plain-text header line "CMRASTER 1 <w> <h> <level>"
// followed by row-major little-endian float64 payload.
struct Raster {
    int width = 0;
    int height = 0;
    int level = 0; // dyadic level when the raster is a 2^n x 2^n binning
    std::vector<double> data;

    double& at(int ix, int iy) { return data[static_cast<std::size_t>(iy) * width + ix]; }
    double at(int ix, int iy) const { return data[static_cast<std::size_t>(iy) * width + ix]; }
    double value_at(Vec2 q) const; // nearest-pixel lookup
    double mean() const;
    double max_abs() const;

    static Raster zeros(int width, int height, int level = 0);
    static Raster from_function(int per_side, const std::function<double(Vec2)>& fn);
    // Occupancy of value-carrying particles: 1 where the local density of
    // particles with value > 0.5 exceeds half the global expectation.
    static Raster occupancy(const ScalarField& field, int level);

    void write(const std::string& path) const;
    static Raster read(const std::string& path);
    void write_pgm(const std::string& path) const; // preview, min/max scaled
    void write_csv(const std::string& path) const;
    static Raster read_csv(const std::string& path);
    static Raster read_pgm(const std::string& path);

    // Dispatch by extension: .cmr native, .pgm, .csv.
    static Raster load(const std::string& path);
};

// Per-pixel particle-value means; empty pixels get 0 and are counted.
struct BinnedRaster {
    Raster raster;
    std::size_t empty_pixels = 0;
};
BinnedRaster bin_particles(const ScalarField& field, int level);

} // namespace cellmix
