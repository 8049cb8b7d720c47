/// @file unit_cli_formats.cpp
/// @brief File formats: rasters, calibration files, spec text.

#include <doctest.h>

#include "cellmix/calibration.hpp"
#include "cellmix/raster.hpp"
#include "cellmix/stream.hpp"

#include <cstdio>
#include <fstream>

using namespace cellmix;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

} // namespace

TEST_CASE("native raster round trip is byte exact") {
    Raster r = Raster::from_function(32, [](Vec2 q) { return q.x * q.y - 0.3; });
    r.level = 5;
    const std::string p1 = "/tmp/cellmix_r1.cmr";
    const std::string p2 = "/tmp/cellmix_r2.cmr";
    r.write(p1);
    const Raster back = Raster::read(p1);
    CHECK(back.width == r.width);
    CHECK(back.level == 5);
    CHECK(back.data == r.data);
    back.write(p2);
    CHECK(slurp(p1) == slurp(p2));
    std::remove(p1.c_str());
    std::remove(p2.c_str());
}

TEST_CASE("pgm and csv rasters") {
    Raster r = Raster::from_function(16, [](Vec2 q) { return q.x < 0.5 ? 1.0 : 0.0; });
    const std::string pgm = "/tmp/cellmix_mask.pgm";
    const std::string csv = "/tmp/cellmix_mask.csv";
    r.write_pgm(pgm);
    r.write_csv(csv);
    const Raster from_pgm = Raster::load(pgm);
    const Raster from_csv = Raster::load(csv);
    CHECK(from_pgm.width == 16);
    CHECK(from_csv.width == 16);
    for (int j = 0; j < 16; ++j)
        for (int i = 0; i < 16; ++i) {
            CHECK((from_pgm.at(i, j) >= 0.5) == (r.at(i, j) >= 0.5));
            CHECK(from_csv.at(i, j) == doctest::Approx(r.at(i, j)));
        }
    std::remove(pgm.c_str());
    std::remove(csv.c_str());
}

TEST_CASE("calibration file round trip and env override") {
    Calibration c = Calibration::builtin();
    c.cprime = 0.123;
    c.unmix_C = 7.5;
    const std::string path = "/tmp/cellmix_cal.txt";
    c.save(path);
    const Calibration back = Calibration::load(path);
    CHECK(back.cprime == doctest::Approx(0.123));
    CHECK(back.unmix_C == doctest::Approx(7.5));

    setenv("CELLMIX_CALIBRATION", path.c_str(), 1);
    std::string source;
    const Calibration via_env = Calibration::resolve(std::nullopt, &source);
    CHECK(source == path);
    CHECK(via_env.cprime == doctest::Approx(0.123));
    unsetenv("CELLMIX_CALIBRATION");
    std::remove(path.c_str());

    const Calibration fallback = Calibration::resolve(std::nullopt, &source);
    CHECK(source == "builtin");
    CHECK(fallback.cprime == Calibration::builtin().cprime);
}

TEST_CASE("stream spec text covers every kind") {
    const StreamSpec specs[] = {
        StreamSpec::base(-1),
        StreamSpec::time_waste(),
        StreamSpec::regularized(0.3),
        StreamSpec::time_waste_regularized(0.3),
        StreamSpec::truncated(1.0 / 3.0, 0.02),
        StreamSpec::time_waste_truncated(1.0 / 3.0, 0.02),
        StreamSpec::truncated_p(5.0, 0.03),
        StreamSpec::simple_cutoff(0.04),
    };
    for (const StreamSpec& s : specs) {
        CHECK(StreamSpec::from_text(s.to_text()) == s);
    }
}
