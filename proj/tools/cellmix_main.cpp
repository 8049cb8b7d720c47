/// @file cellmix_main.cpp
/// @brief CLI: mix / unmix / norms / periods / report / calibrate.
///
/// Exit codes: 0 success, 1 predicate failure, 2 usage or I/O error.

#include "cellmix/calibration.hpp"
#include "cellmix/metrics.hpp"
#include "cellmix/parallel.hpp"
#include "cellmix/protocol.hpp"
#include "cellmix/raster.hpp"
#include "cellmix/stream.hpp"
#include "cellmix/unmix.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace cellmix;

namespace {

struct Args {
    std::map<std::string, std::string> kv;
    std::string command;

    bool has(const std::string& k) const { return kv.count(k) > 0; }
    std::string get(const std::string& k, const std::string& fallback = "") const {
        auto it = kv.find(k);
        return it == kv.end() ? fallback : it->second;
    }
    double num(const std::string& k, double fallback) const {
        auto it = kv.find(k);
        if (it == kv.end()) return fallback;
        if (it->second == "inf" || it->second == "infinity") return INFINITY;
        return std::stod(it->second);
    }
    int integer(const std::string& k, int fallback) const {
        auto it = kv.find(k);
        return it == kv.end() ? fallback : std::stoi(it->second);
    }
};

Args parse_args(int argc, char** argv) {
    Args a;
    if (argc < 2) throw std::invalid_argument("missing command");
    a.command = argv[1];
    for (int i = 2; i < argc; ++i) {
        std::string tok = argv[i];
        if (tok.rfind("--", 0) != 0) throw std::invalid_argument("expected --flag, got " + tok);
        tok = tok.substr(2);
        const auto eq = tok.find('=');
        if (eq != std::string::npos) {
            a.kv[tok.substr(0, eq)] = tok.substr(eq + 1);
        } else if (i + 1 < argc && std::string(argv[i + 1]).rfind("--", 0) != 0) {
            a.kv[tok] = argv[++i];
        } else {
            a.kv[tok] = "1"; // bare flag
        }
    }
    return a;
}

// FNV-1a of the canonical run configuration.  Worker count and output paths
// are excluded: they must not affect results, and the hash lands in every
// CSV header.
std::uint64_t config_hash(const Args& a) {
    std::string canon = a.command;
    for (const auto& [k, v] : a.kv) {
        if (k == "workers" || k == "out" || k == "calibration") continue;
        canon += "|" + k + "=" + v;
    }
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : canon) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string csv_header(const Args& a, const std::string& cal_source) {
    std::ostringstream out;
    out << "config_hash=" << std::hex << config_hash(a) << std::dec
        << " calibration=" << cal_source;
    return out.str();
}

Calibration load_calibration(const Args& a, std::string* source) {
    std::optional<std::string> path;
    if (a.has("calibration")) path = a.get("calibration");
    else if (fs::exists("data/calibration.txt")) path = "data/calibration.txt";
    return Calibration::resolve(path, source);
}

std::vector<double> parse_list(const std::string& text) {
    std::vector<double> v;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) v.push_back(std::stod(tok));
    return v;
}

std::function<double(Vec2)> initial_data(const Args& a, std::uint64_t seed) {
    const std::string sel = a.get("rho0", "half-split");
    if (sel == "half-split") return half_split;
    if (sel.rfind("random-cells:", 0) == 0) {
        const int n = std::stoi(sel.substr(13));
        return random_cell_signs(n, seed ^ 0x5eedULL);
    }
    if (sel.rfind("raster:", 0) == 0) {
        Raster r = Raster::load(sel.substr(7));
        const double mean = r.mean();
        return [r = std::move(r), mean](Vec2 q) { return r.value_at(q) - mean; };
    }
    throw std::invalid_argument("unknown rho0 selector: " + sel);
}

StreamSpec spec_from_args(const Args& a) {
    const std::string kind = a.get("kind", "base");
    const double aa = a.num("a", std::sqrt(5.0) - 2.0);
    const double delta = a.num("delta", 0.01);
    const double p = a.num("p-spec", 4.0);
    if (kind == "base") return StreamSpec::base();
    if (kind == "regularized") return StreamSpec::regularized(aa);
    if (kind == "truncated") return StreamSpec::truncated(aa, delta);
    if (kind == "truncated-p") return StreamSpec::truncated_p(p, delta);
    if (kind == "simple-cutoff") return StreamSpec::simple_cutoff(delta);
    if (kind == "time-waste") return StreamSpec::time_waste();
    if (kind == "time-waste-regularized") return StreamSpec::time_waste_regularized(aa);
    if (kind == "time-waste-truncated") return StreamSpec::time_waste_truncated(aa, delta);
    throw std::invalid_argument("unknown kind: " + kind);
}

void write_snapshot(const ScalarField& field, double t, const fs::path& dir, int level) {
    const BinnedRaster b = bin_particles(field, level);
    std::ostringstream name;
    name << "snapshot_t" << std::fixed;
    name.precision(1);
    name << t;
    Raster r = b.raster;
    r.write((dir / (name.str() + ".cmr")).string());
    r.write_pgm((dir / (name.str() + ".pgm")).string());
}

// ---------------------------------------------------------------------------

int cmd_mix(const Args& a) {
    std::string cal_source;
    const Calibration cal = load_calibration(a, &cal_source);
    const BoundaryCondition bc = bc_from_string(a.get("bc", "no-flow"));
    const double p = a.num("p", 2.0);
    const double kappa = a.num("kappa", 0.25);
    const double eps = a.num("eps", 0.25);
    std::optional<MixRegime> regime;
    if (a.has("simple-cutoff")) regime = MixRegime::SimpleCutoff;
    const MixPlan plan =
        plan_mixing(bc, p, kappa, eps, a.has("eps-independent"), cal, regime);

    const fs::path out = a.get("out", "mix_out");
    fs::create_directories(out);
    {
        std::ofstream f(out / "plan.txt");
        f << "# " << csv_header(a, cal_source) << "\n" << plan.summary() << "\n";
    }

    const std::uint64_t seed = static_cast<std::uint64_t>(a.integer("seed", 1));
    const std::vector<double> particles =
        a.has("particles") ? parse_list(a.get("particles")) : std::vector<double>{9, 4};
    if (particles.size() != 2) throw std::invalid_argument("--particles n0,m");
    ScalarField field = ScalarField::stratified(static_cast<int>(particles[0]),
                                                static_cast<int>(particles[1]),
                                                initial_data(a, seed), seed);

    RunOptions opts;
    opts.record_mix_norm = true;
    opts.record_grad_lp = a.has("record-grad");
    opts.allow_sparse_cells = a.has("allow-sparse");
    if (a.has("max-stages")) opts.max_stages = a.integer("max-stages", -1);
    const int snap_level = a.integer("snapshot-level", 7);
    opts.snapshot_hook = [&](const ScalarField& f, double t) {
        write_snapshot(f, t, out, snap_level);
    };

    if (field.bound == 0.0) {
        std::cout << "rho0 is identically zero: trivially mixed, 0 stages run\n";
        std::ofstream f(out / "report.txt");
        f << "mixed: true\nstages_run: 0\n";
        return 0;
    }

    const MixTrajectory traj = run_mixing(plan, field, opts);
    traj.write_metrics_csv((out / "trajectory.csv").string(), csv_header(a, cal_source));

    std::ofstream rep(out / "report.txt");
    rep << "# " << csv_header(a, cal_source) << "\n";
    rep << "mixed: " << (traj.final_report.is_mixed ? "true" : "false") << "\n";
    rep << "worst_ball_center: " << traj.final_report.worst_center.x << ' '
        << traj.final_report.worst_center.y << "\n";
    rep << "worst_ball_ratio: " << traj.final_report.worst_ratio << "\n";
    rep << "predicted_horizon: " << plan.horizon << "\n";
    for (const auto& [e, t] : traj.first_mixed)
        rep << "first_mixed_eps_" << e << ": " << t << "\n";
    rep << "degenerate_tracers: " << traj.transport.degenerate << "\n";

    std::cout << plan.summary() << "\n";
    std::cout << "final mixed: " << (traj.final_report.is_mixed ? "true" : "false")
              << " (worst ball ratio " << traj.final_report.worst_ratio << " vs kappa "
              << kappa << ")\n";
    return traj.final_report.is_mixed ? 0 : 1;
}

int cmd_unmix(const Args& a) {
    std::string cal_source;
    const Calibration cal = load_calibration(a, &cal_source);
    if (!a.has("mask")) throw std::invalid_argument("unmix needs --mask");
    const Raster mask = Raster::load(a.get("mask"));
    const int n = a.integer("n", 4);
    const double kappa = a.num("kappa", 0.1);

    UnmixOptions opts;
    opts.seed = static_cast<std::uint64_t>(a.integer("seed", 1));
    if (a.has("particles")) {
        const auto pl = parse_list(a.get("particles"));
        opts.particle_level = static_cast<int>(pl.at(0));
        opts.per_cell = static_cast<int>(pl.at(1));
    }
    opts.record_grad = true;
    opts.grad_p = a.num("grad-p", 1.0);

    const fs::path out = a.get("out", "unmix_out");
    fs::create_directories(out);
    mask.write((out / "before.cmr").string());

    const UnmixResult r = run_unmix(mask, n, kappa, cal, opts);
    r.occupancy.write((out / "after.cmr").string());
    r.occupancy.write_pgm((out / "after.pgm").string());

    // Symmetric difference against the target rectangle.
    Raster sym = r.occupancy;
    for (int j = 0; j < sym.height; ++j)
        for (int i = 0; i < sym.width; ++i) {
            const double target = ((i + 0.5) / sym.width < r.measure_A) ? 1.0 : 0.0;
            sym.at(i, j) = std::abs(sym.at(i, j) - target);
        }
    sym.write_pgm((out / "symdiff.pgm").string());

    std::ofstream rep(out / "report.csv");
    rep << "# " << csv_header(a, cal_source) << "\n";
    rep.precision(17);
    rep << "key,value\n";
    rep << "measure_A," << r.measure_A << "\n";
    rep << "overlap," << r.overlap << "\n";
    rep << "overlap_fraction," << r.overlap_fraction << "\n";
    rep << "measure_drift," << r.measure_drift << "\n";
    rep << "delta," << r.delta << "\n";
    rep << "hypothesis_violations," << r.hypothesis_violations << "\n";
    rep << "hypothesis_warning," << (r.hypothesis_warning ? 1 : 0) << "\n";
    rep << "passed," << (r.passed ? 1 : 0) << "\n";
    // Per-stage gradient norms against the kappa^{-1+1/p} n^{2-1/p} shape
    // (after rescaling the unit-time program onto (0, tau)).
    const double pp = opts.grad_p;
    const double shape = std::pow(kappa, -1.0 + 1.0 / pp) *
                         std::pow(static_cast<double>(n), 2.0 - 1.0 / pp);
    rep << "shape_kappa_n," << shape << "\n";
    for (std::size_t i = 0; i < r.grad_per_stage.size(); ++i)
        rep << "grad_lp_stage_" << i << "," << r.grad_per_stage[i] << "\n";

    if (r.hypothesis_warning)
        std::cout << "warning: theta hypothesis violated in " << r.hypothesis_violations
                  << " cells\n";
    std::cout << "overlap fraction " << r.overlap_fraction << " (target >= "
              << 1.0 - 2.0 * kappa << "), measure drift " << r.measure_drift << "\n";
    return r.passed ? 0 : 1;
}

int cmd_norms(const Args& a) {
    std::string cal_source;
    load_calibration(a, &cal_source);
    const fs::path out = a.get("out", "norms_out");
    fs::create_directories(out);
    std::ofstream csv(out / "norms.csv");
    csv << "# " << csv_header(a, cal_source) << "\n";
    csv.precision(17);
    csv << "kind,a,delta,p_norm,value,diverged,growth_exponent\n";

    const double p_norm = a.num("p-norm", INFINITY);
    const std::string kind = a.get("kind", "truncated");
    std::vector<std::pair<double, double>> sweep;
    for (double delta : parse_list(a.get("deltas", "0.1,0.01,0.001"))) {
        Args one = a;
        one.kv["delta"] = std::to_string(delta);
        const StreamSpec spec = spec_from_args(one);
        const HessianNorm h = norm_hessian(spec, period_table(spec), p_norm);
        csv << kind << ',' << spec.a << ',' << delta << ',' << p_norm << ',' << h.value << ','
            << (h.diverged ? 1 : 0) << ',' << h.growth_exponent << "\n";
        if (!h.diverged && h.value > 0.0) sweep.push_back({delta, h.value});
        std::cout << "delta=" << delta << " -> " << (h.diverged ? "diverges" : "finite")
                  << " value=" << h.value << "\n";
    }
    if (sweep.size() >= 3) {
        const FitResult fit = fit_scaling(sweep, FitModel::LogLog);
        csv << "# loglog_slope=" << fit.slope << " r_squared=" << fit.r_squared << "\n";
        std::cout << "log-log slope " << fit.slope << " (R^2 " << fit.r_squared << ")\n";
    }
    return 0;
}

int cmd_periods(const Args& a) {
    std::string cal_source;
    load_calibration(a, &cal_source);
    const StreamSpec spec = spec_from_args(a);
    const PeriodTable& table = period_table(spec);
    const int levels = a.integer("levels", 50);
    const fs::path out = a.get("out", "periods_out");
    fs::create_directories(out);
    std::ofstream csv(out / "periods.csv");
    csv << "# " << csv_header(a, cal_source) << "\n";
    csv.precision(17);
    csv << "s,T_raw,T_normalized\n";
    for (int k = 1; k <= levels; ++k) {
        const double frac = static_cast<double>(k) / (levels + 1);
        const double s = table.level_at_fraction(frac);
        const double t_raw = trace_period(spec, s);
        const double t_norm = trace_stream_period(spec, table, s);
        csv << s << ',' << t_raw << ',' << t_norm << "\n";
    }
    table.write_csv((out / "table.csv").string(), csv_header(a, cal_source));
    std::cout << "wrote " << levels << " levels to " << (out / "periods.csv") << "\n";
    return 0;
}

int cmd_report(const Args& a) {
    const fs::path dir = a.get("dir", "mix_out");
    for (const char* name : {"plan.txt", "report.txt", "report.csv"}) {
        const fs::path p = dir / name;
        if (fs::exists(p)) {
            std::cout << "==== " << p.string() << " ====\n";
            std::ifstream in(p);
            std::cout << in.rdbuf() << "\n";
        }
    }
    const fs::path traj = dir / "trajectory.csv";
    if (fs::exists(traj)) {
        std::ifstream in(traj);
        std::string line;
        std::vector<std::pair<double, double>> decay;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#' || line[0] == 's') continue;
            std::stringstream ss(line);
            std::string tok;
            std::vector<double> row;
            while (std::getline(ss, tok, ',')) row.push_back(std::stod(tok));
            if (row.size() >= 4 && row[3] > 0) decay.push_back({row[1], row[3]});
        }
        if (decay.size() >= 3) {
            std::vector<std::pair<double, double>> logd;
            for (auto& [t, v] : decay) logd.push_back({t, std::log(v)});
            const FitResult fit = fit_scaling(logd, FitModel::Linear);
            std::cout << "mix-norm decay rate per unit time: " << std::exp(fit.slope)
                      << " (R^2 " << fit.r_squared << ")\n";
        }
    }
    return 0;
}

// Measured constants: see the calibration header for what each one feeds.
int cmd_calibrate(const Args& a) {
    Calibration cal = Calibration::builtin();
    const int n0 = a.integer("particle-level", 7);
    std::cout << "calibrating (particle level " << n0 << ")\n";

    // Stage-drift constant of the truncated regime: one stage on half-split
    // data, drift fitted against 8 delta^{3/2}.
    {
        double worst = 0.0;
        for (double delta : {0.099, 0.01}) {
            MixPlan plan;
            plan.bc = BoundaryCondition::NoFlow;
            plan.regime = MixRegime::TruncatedInfty;
            plan.p = INFINITY;
            plan.kappa = plan.eps = 0.25;
            plan.a = 1.0 / 3.0;
            plan.horizon = 1;
            plan.delta_seq = {delta};
            ScalarField field = ScalarField::stratified(n0, 4, half_split, 2024);
            MixTrajectory traj;
            traj.plan = plan;
            RunOptions opts;
            opts.record_mix_norm = false;
            build_stage(plan, 0, field, traj, opts);
            const double drift = cell_mean_sup(field, 1).value;
            const double c = drift / (8.0 * std::pow(delta, 1.5));
            std::cout << "  truncated stage drift delta=" << delta << ": " << drift
                      << " (c' estimate " << c << ")\n";
            worst = std::max(worst, c);
        }
        cal.cprime = 1.5 * worst;
    }

    // No-slip drift constant: drift <= C beta per stage.
    {
        double worst = 0.0;
        for (double beta : {0.05, 0.02}) {
            MixPlan plan;
            plan.bc = BoundaryCondition::NoSlip;
            plan.regime = MixRegime::PerfectLow;
            plan.p = 1.5;
            plan.kappa = plan.eps = 0.25;
            plan.a = std::sqrt(5.0) - 2.0;
            plan.horizon = 1;
            plan.beta_seq = {beta};
            ScalarField field = ScalarField::stratified(n0, 4, half_split, 2025);
            MixTrajectory traj;
            traj.plan = plan;
            RunOptions opts;
            opts.record_mix_norm = false;
            build_stage(plan, 0, field, traj, opts);
            const double drift = cell_mean_sup(field, 1).value;
            std::cout << "  no-slip stage drift beta=" << beta << ": " << drift << "\n";
            worst = std::max(worst, drift / beta);
        }
        cal.noslip_C = 1.5 * worst;
    }

    // Un-mixing cutoff constant: forward L1 error ~ E n delta, so delta =
    // kappa / (C n) with C = 1.5 E keeps the total below kappa.
    {
        const int n = 3;
        Raster mask = Raster::from_function(128, [](Vec2 q) {
            const int i = std::min(7, static_cast<int>(q.x * 8));
            const int j = std::min(7, static_cast<int>(q.y * 8));
            return ((i * 5 + j * 3) % 7) < 3 ? 1.0 : 0.0;
        });
        const ThetaGrid g = compute_theta(mask, n);
        double worst = 0.0;
        for (double delta : {0.02, 0.01}) {
            UnmixOptions opts;
            opts.particle_level = n0;
            const double err = forward_sort_error(g, delta, opts);
            std::cout << "  forward sort error delta=" << delta << ": " << err << "\n";
            worst = std::max(worst, err / (n * delta));
        }
        cal.unmix_C = 1.5 * worst;
    }

    // Mix-norm cross-check constants over the synthetic corpus.
    {
        double c_low = 1e300;  // premise threshold for "small norm => mixed"
        double c_high = 0.0;   // bound for "mixed => small norm"
        const auto corpus = [](int idx) -> std::function<double(Vec2)> {
            if (idx < 6) return checkerboard(idx + 1);
            if (idx < 16) return random_cell_signs(2 + (idx - 6) % 5, 1000 + idx);
            if (idx == 16) return half_split;
            if (idx < 25) {
                const int k = 1 + (idx - 17) % 4;
                const int l = 1 + (idx - 17) / 4;
                return [k, l](Vec2 q) {
                    return std::cos(2 * M_PI * k * q.x) * std::cos(2 * M_PI * l * q.y);
                };
            }
            if (idx < 30) {
                const double r = 0.1 + 0.05 * (idx - 25);
                return [r](Vec2 q) {
                    const double inside =
                        std::hypot(q.x - 0.5, q.y - 0.5) < r ? 1.0 : 0.0;
                    return inside - M_PI * r * r;
                };
            }
            if (idx < 35) {
                const int k = idx - 28;
                return [k](Vec2 q) { return std::sin(2 * M_PI * k * q.x); };
            }
            Rng rng(5000 + idx);
            std::vector<double> amp;
            std::vector<int> ks, ls;
            for (int m = 0; m < 5; ++m) {
                amp.push_back(rng.uniform(-1, 1));
                ks.push_back(1 + static_cast<int>(rng.uniform_index(6)));
                ls.push_back(1 + static_cast<int>(rng.uniform_index(6)));
            }
            return [amp, ks, ls](Vec2 q) {
                double v = 0.0;
                for (std::size_t m = 0; m < amp.size(); ++m)
                    v += amp[m] * std::sin(2 * M_PI * ks[m] * q.x) *
                         std::sin(2 * M_PI * ls[m] * q.y);
                return v;
            };
        };
        for (int idx = 0; idx < 50; ++idx) {
            ScalarField f = ScalarField::stratified(8, 1, corpus(idx), 4321 + idx);
            if (f.bound == 0.0) continue;
            const double h1 = mix_norm(f, 1.0, 8, false);
            const double hhalf = mix_norm(f, 0.5, 8, false);
            for (double kappa : {0.1, 0.25, 0.4}) {
                for (double eps : {0.25, 0.125, 0.0625}) {
                    const MixReport rep = is_kappa_mixed(f, kappa, eps);
                    const double premise =
                        h1 / (std::pow(kappa, 1.5) * eps * eps * f.bound);
                    if (!rep.is_mixed) c_low = std::min(c_low, premise);
                    if (rep.is_mixed)
                        c_high = std::max(
                            c_high, hhalf / (std::sqrt(eps + kappa * kappa) * f.bound));
                }
            }
        }
        cal.lemma_a2_c = 0.9 * c_low;
        cal.defn_mixnorm_C = 1.1 * c_high;
        std::cout << "  lemma_a2_c=" << cal.lemma_a2_c
                  << " defn_mixnorm_C=" << cal.defn_mixnorm_C << "\n";
    }

    // Uniform period-discrepancy bound for the a = 1/3 family.
    {
        double worst = 0.0;
        const double aa = 1.0 / 3.0;
        const PeriodTable& raw = period_table(StreamSpec::regularized(aa));
        for (double delta : {1e-2, 1e-3}) {
            const StreamSpec spec = StreamSpec::truncated(aa, delta);
            const double t_delta = raw.T_of(delta);
            for (int k = 1; k <= 6; ++k) {
                const double s = delta / std::pow(2.0, k);
                const double t_raw = trace_period(spec, s);
                const double ratio = std::abs(t_raw - t_delta) /
                                     (std::sqrt(delta) * std::log(2.0 * delta / s));
                worst = std::max(worst, ratio);
            }
        }
        cal.period_discrepancy_K = 1.3 * worst;
        std::cout << "  period_discrepancy_K=" << cal.period_discrepancy_K << "\n";
    }

    const std::string out = a.get("out", "data/calibration.txt");
    cal.save(out);
    std::cout << "wrote " << out << "\n";
    return 0;
}

int usage() {
    std::cerr << "usage: cellmix <command> [--flag value ...]\n"
              << "commands:\n"
              << "  mix       --bc no-flow|periodic|no-slip --p <p|inf> --kappa K --eps E\n"
              << "            [--rho0 half-split|random-cells:N|raster:PATH] [--particles n0,m]\n"
              << "            [--seed S] [--out DIR] [--eps-independent] [--simple-cutoff]\n"
              << "            [--workers N] [--max-stages N] [--snapshot-level L]\n"
              << "  unmix     --mask PATH --n N --kappa K [--particles n0,m] [--seed S]\n"
              << "            [--out DIR] [--grad-p P]\n"
              << "  norms     --kind KIND [--a A] [--p-spec P] --deltas d1,d2,... --p-norm p|inf\n"
              << "  periods   --kind KIND [--a A] [--delta D] [--levels N] [--out DIR]\n"
              << "  report    --dir DIR\n"
              << "  calibrate [--out PATH] [--particle-level N]\n"
              << "env: CELLMIX_CALIBRATION overrides the calibration file path\n";
    return 2;
}

} // namespace

int main(int argc, char** argv) {
    try {
        const Args a = parse_args(argc, argv);
        if (a.has("workers")) set_worker_count(a.integer("workers", 0));
        if (a.command == "mix") return cmd_mix(a);
        if (a.command == "unmix") return cmd_unmix(a);
        if (a.command == "norms") return cmd_norms(a);
        if (a.command == "periods") return cmd_periods(a);
        if (a.command == "report") return cmd_report(a);
        if (a.command == "calibrate") return cmd_calibrate(a);
        return usage();
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
