#include "cellmix/calibration.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cellmix {

Calibration Calibration::builtin() { return Calibration{}; }

Calibration Calibration::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open calibration file " + path);
    Calibration c;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::string key;
        double value;
        if (!(ss >> key >> value)) throw std::runtime_error("bad calibration line: " + line);
        if (key == "version") c.version = static_cast<int>(value);
        else if (key == "cprime") c.cprime = value;
        else if (key == "noslip_C") c.noslip_C = value;
        else if (key == "unmix_C") c.unmix_C = value;
        else if (key == "lemma_a2_c") c.lemma_a2_c = value;
        else if (key == "defn_mixnorm_C") c.defn_mixnorm_C = value;
        else if (key == "period_discrepancy_K") c.period_discrepancy_K = value;
        else throw std::runtime_error("unknown calibration key: " + key);
    }
    return c;
}

void Calibration::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << "# cellmix calibration (measured constants; regenerate with `cellmix calibrate`)\n";
    out.precision(17);
    out << "version " << version << '\n';
    out << "cprime " << cprime << '\n';
    out << "noslip_C " << noslip_C << '\n';
    out << "unmix_C " << unmix_C << '\n';
    out << "lemma_a2_c " << lemma_a2_c << '\n';
    out << "defn_mixnorm_C " << defn_mixnorm_C << '\n';
    out << "period_discrepancy_K " << period_discrepancy_K << '\n';
}

Calibration Calibration::resolve(const std::optional<std::string>& path, std::string* source) {
    if (const char* env = std::getenv("CELLMIX_CALIBRATION")) {
        if (source) *source = env;
        return load(env);
    }
    if (path) {
        if (source) *source = *path;
        return load(*path);
    }
    if (source) *source = "builtin";
    return builtin();
}

} // namespace cellmix
