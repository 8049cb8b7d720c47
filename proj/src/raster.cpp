#include "cellmix/raster.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cellmix {

double Raster::value_at(Vec2 q) const {
    const int ix = std::clamp(static_cast<int>(q.x * width), 0, width - 1);
    const int iy = std::clamp(static_cast<int>(q.y * height), 0, height - 1);
    return at(ix, iy);
}

double Raster::mean() const {
    double s = 0.0;
    for (double v : data) s += v;
    return data.empty() ? 0.0 : s / static_cast<double>(data.size());
}

double Raster::max_abs() const {
    double m = 0.0;
    for (double v : data) m = std::max(m, std::abs(v));
    return m;
}

Raster Raster::zeros(int width, int height, int level) {
    Raster r;
    r.width = width;
    r.height = height;
    r.level = level;
    r.data.assign(static_cast<std::size_t>(width) * height, 0.0);
    return r;
}

Raster Raster::from_function(int per_side, const std::function<double(Vec2)>& fn) {
    Raster r = zeros(per_side, per_side);
    for (int j = 0; j < per_side; ++j)
        for (int i = 0; i < per_side; ++i)
            r.at(i, j) = fn({(i + 0.5) / per_side, (j + 0.5) / per_side});
    return r;
}

BinnedRaster bin_particles(const ScalarField& field, int level) {
    const int n = 1 << level;
    BinnedRaster out;
    out.raster = Raster::zeros(n, n, level);
    std::vector<std::uint32_t> counts(static_cast<std::size_t>(n) * n, 0);
    for (std::size_t k = 0; k < field.size(); ++k) {
        const int ix = std::clamp(static_cast<int>(field.x[k] * n), 0, n - 1);
        const int iy = std::clamp(static_cast<int>(field.y[k] * n), 0, n - 1);
        out.raster.at(ix, iy) += field.value[k];
        ++counts[static_cast<std::size_t>(iy) * n + ix];
    }
    for (std::size_t c = 0; c < counts.size(); ++c) {
        if (counts[c] > 0) {
            out.raster.data[c] /= counts[c];
        } else {
            ++out.empty_pixels;
        }
    }
    return out;
}

Raster Raster::occupancy(const ScalarField& field, int level) {
    const int n = 1 << level;
    Raster r = zeros(n, n, level);
    std::vector<std::uint32_t> hits(static_cast<std::size_t>(n) * n, 0);
    for (std::size_t k = 0; k < field.size(); ++k) {
        if (field.value[k] <= 0.5) continue;
        const int ix = std::clamp(static_cast<int>(field.x[k] * n), 0, n - 1);
        const int iy = std::clamp(static_cast<int>(field.y[k] * n), 0, n - 1);
        ++hits[static_cast<std::size_t>(iy) * n + ix];
    }
    // Under incompressible transport the carrier density stays near its
    // initial level; half the expectation separates occupied from empty.
    const double expect =
        static_cast<double>(field.size()) / (static_cast<double>(n) * n);
    for (std::size_t c = 0; c < hits.size(); ++c) r.data[c] = hits[c] >= 0.5 * expect ? 1.0 : 0.0;
    return r;
}

void Raster::write(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << "CMRASTER 1 " << width << ' ' << height << ' ' << level << '\n';
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(double)));
}

Raster Raster::read(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string magic;
    int version = 0;
    Raster r;
    in >> magic >> version >> r.width >> r.height >> r.level;
    if (magic != "CMRASTER" || version != 1) throw std::runtime_error("bad raster header");
    in.get(); // newline
    r.data.resize(static_cast<std::size_t>(r.width) * r.height);
    in.read(reinterpret_cast<char*>(r.data.data()),
            static_cast<std::streamsize>(r.data.size() * sizeof(double)));
    if (!in) throw std::runtime_error("truncated raster payload");
    return r;
}

void Raster::write_pgm(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path);
    double lo = data.empty() ? 0.0 : data[0], hi = lo;
    for (double v : data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double span = hi > lo ? hi - lo : 1.0;
    out << "P5\n" << width << ' ' << height << "\n255\n";
    // PGM rows go top to bottom.
    for (int j = height - 1; j >= 0; --j)
        for (int i = 0; i < width; ++i) {
            const double v = (at(i, j) - lo) / span;
            out.put(static_cast<char>(std::clamp(static_cast<int>(v * 255.0 + 0.5), 0, 255)));
        }
}

void Raster::write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out.precision(17);
    for (int j = 0; j < height; ++j) {
        for (int i = 0; i < width; ++i) out << (i ? "," : "") << at(i, j);
        out << '\n';
    }
}

Raster Raster::read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, ',')) row.push_back(std::stod(tok));
        if (!row.empty()) rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::runtime_error("empty csv raster");
    Raster r;
    r.height = static_cast<int>(rows.size());
    r.width = static_cast<int>(rows[0].size());
    r.data.reserve(static_cast<std::size_t>(r.width) * r.height);
    for (const auto& row : rows) {
        if (static_cast<int>(row.size()) != r.width) throw std::runtime_error("ragged csv raster");
        for (double v : row) r.data.push_back(v);
    }
    return r;
}

Raster Raster::read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string magic;
    in >> magic;
    if (magic != "P5" && magic != "P2") throw std::runtime_error("unsupported pgm flavor");
    auto next_int = [&in]() {
        int v;
        while (!(in >> v)) throw std::runtime_error("bad pgm header");
        return v;
    };
    Raster r;
    r.width = next_int();
    r.height = next_int();
    const int maxval = next_int();
    r.data.resize(static_cast<std::size_t>(r.width) * r.height);
    if (magic == "P5") {
        in.get();
        for (int j = r.height - 1; j >= 0; --j)
            for (int i = 0; i < r.width; ++i) {
                const int c = in.get();
                if (c < 0) throw std::runtime_error("truncated pgm");
                r.at(i, j) = static_cast<double>(c) / maxval;
            }
    } else {
        for (int j = r.height - 1; j >= 0; --j)
            for (int i = 0; i < r.width; ++i) {
                int c;
                in >> c;
                r.at(i, j) = static_cast<double>(c) / maxval;
            }
    }
    return r;
}

Raster Raster::load(const std::string& path) {
    const auto dot = path.rfind('.');
    const std::string ext = dot == std::string::npos ? "" : path.substr(dot);
    if (ext == ".pgm") return read_pgm(path);
    if (ext == ".csv") return read_csv(path);
    return read(path);
}

} // namespace cellmix
