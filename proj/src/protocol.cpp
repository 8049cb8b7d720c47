#include "cellmix/protocol.hpp"

#include "cellmix/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cellmix {

const char* to_string(BoundaryCondition bc) {
    switch (bc) {
        case BoundaryCondition::NoFlow: return "no-flow";
        case BoundaryCondition::Periodic: return "periodic";
        case BoundaryCondition::NoSlip: return "no-slip";
    }
    return "?";
}

const char* to_string(MixRegime regime) {
    switch (regime) {
        case MixRegime::PerfectLow: return "perfect-low";
        case MixRegime::TruncatedInfty: return "truncated-infty";
        case MixRegime::TruncatedP: return "truncated-p";
        case MixRegime::SimpleCutoff: return "simple-cutoff";
    }
    return "?";
}

BoundaryCondition bc_from_string(const std::string& s) {
    if (s == "no-flow") return BoundaryCondition::NoFlow;
    if (s == "periodic") return BoundaryCondition::Periodic;
    if (s == "no-slip") return BoundaryCondition::NoSlip;
    throw std::invalid_argument("unknown boundary condition: " + s);
}

namespace {

// Sum_{k>=2} 1/(k ln^2 k), with the integral tail.
double summable_series() {
    static const double value = [] {
        double s = 0.0;
        const int cap = 200000;
        for (int k = 2; k <= cap; ++k) {
            const double l = std::log(static_cast<double>(k));
            s += 1.0 / (k * l * l);
        }
        return s + 1.0 / std::log(static_cast<double>(cap));
    }();
    return value;
}

double summable_term(int stage, double kappa, double big_m) {
    const double k = static_cast<double>(stage + 2);
    const double l = std::log(k);
    return kappa / (big_m * k * l * l);
}

double clamp_delta(double d) { return std::min(d, 0.099); }

} // namespace

MixPlan plan_mixing(BoundaryCondition bc, double p, double kappa, double eps,
                    bool eps_independent, const Calibration& cal,
                    std::optional<MixRegime> regime_override) {
    if (!(kappa > 0.0 && kappa <= 0.5) || !(eps > 0.0 && eps <= 0.5))
        throw std::invalid_argument("kappa and eps must lie in (0, 1/2]");
    if (!(p >= 1.0)) throw std::invalid_argument("p must be >= 1 (or infinity)");

    MixPlan plan;
    plan.bc = bc;
    plan.p = p;
    plan.kappa = kappa;
    plan.eps = eps;
    plan.eps_independent = eps_independent;

    const double thr = regularity_threshold();
    if (regime_override) {
        plan.regime = *regime_override;
    } else if (!std::isfinite(p)) {
        plan.regime = MixRegime::TruncatedInfty;
    } else if (p < thr) {
        plan.regime = MixRegime::PerfectLow;
    } else {
        plan.regime = MixRegime::TruncatedP;
    }

    switch (plan.regime) {
        case MixRegime::PerfectLow: plan.a = std::sqrt(5.0) - 2.0; break;
        case MixRegime::TruncatedInfty: plan.a = 1.0 / 3.0; break;
        case MixRegime::TruncatedP:
            if (!std::isfinite(p)) throw std::invalid_argument("TruncatedP needs finite p");
            plan.a = (p - 1.0) / (3.0 * p - 1.0);
            break;
        case MixRegime::SimpleCutoff: plan.a = 0.0; break;
    }
    if (std::isfinite(p) && p >= thr) plan.nu_p = (p * p - 3.0 * p + 1.0) / (3.0 * p * p - p);
    if (!std::isfinite(p)) plan.nu_p = 1.0 / 3.0;

    const bool perfect = plan.regime == MixRegime::PerfectLow;
    const double arg = perfect ? kappa * eps : 0.5 * kappa * eps;
    plan.horizon = static_cast<int>(std::ceil(std::abs(std::log2(arg)))) + 2;

    const int tau = plan.horizon;
    const double series = summable_series();
    auto delta_exponent = [&]() {
        if (plan.regime == MixRegime::TruncatedInfty) return (plan.a + 1.0) / 2.0; // = 2/3
        return (2.0 * p - 1.0) / (3.0 * p - 1.0);
    };

    if (plan.regime == MixRegime::TruncatedInfty || plan.regime == MixRegime::TruncatedP) {
        const double expo = delta_exponent();
        const double cm = bc == BoundaryCondition::NoSlip ? 4.0 * cal.noslip_C : 16.0 * cal.cprime;
        for (int k = 0; k < tau; ++k) {
            const double base = eps_independent ? summable_term(k, kappa, cm * series)
                                                : kappa / (cm * tau);
            plan.delta_seq.push_back(clamp_delta(std::pow(base, expo)));
        }
    } else if (plan.regime == MixRegime::SimpleCutoff) {
        for (int k = 0; k < tau; ++k) {
            const double d = eps_independent ? summable_term(k, kappa, 8.0 * series)
                                             : kappa / (8.0 * tau);
            plan.delta_seq.push_back(clamp_delta(d));
        }
    }

    if (bc == BoundaryCondition::NoSlip && plan.regime != MixRegime::SimpleCutoff) {
        for (int k = 0; k < tau; ++k) {
            double b;
            if (plan.regime == MixRegime::PerfectLow || eps_independent) {
                const double m = (perfect ? 2.0 : 4.0) * cal.noslip_C * series;
                b = summable_term(k, kappa, m);
            } else {
                b = kappa / (4.0 * cal.noslip_C * tau);
            }
            plan.beta_seq.push_back(std::min(b, 0.45));
        }
    }
    return plan;
}

std::string MixPlan::summary() const {
    std::ostringstream out;
    out << "bc=" << to_string(bc) << " regime=" << to_string(regime) << " p=" << p
        << " kappa=" << kappa << " eps=" << eps << " a=" << a << " tau=" << horizon
        << " nu_p=" << nu_p << " eps_independent=" << (eps_independent ? 1 : 0);
    if (!delta_seq.empty()) {
        out << " delta=[";
        for (std::size_t i = 0; i < delta_seq.size(); ++i) out << (i ? "," : "") << delta_seq[i];
        out << "]";
    }
    if (!beta_seq.empty()) {
        out << " beta=[";
        for (std::size_t i = 0; i < beta_seq.size(); ++i) out << (i ? "," : "") << beta_seq[i];
        out << "]";
    }
    return out.str();
}

namespace {

struct StageStreams {
    std::shared_ptr<const StreamField> cell;
    std::shared_ptr<const StreamField> waste;  // null = frozen after switch
    std::shared_ptr<const StreamField> search; // rotation used by the switch search
    std::function<bool(const Vec2&)> mask;     // local-coords D restriction
};

StageStreams make_streams(const MixPlan& plan, int stage) {
    StageStreams s;
    switch (plan.regime) {
        case MixRegime::PerfectLow: {
            const StreamSpec cell = StreamSpec::regularized(plan.a);
            s.cell = make_stream_field(cell);
            s.waste = make_stream_field(StreamSpec::time_waste_regularized(plan.a));
            s.search = s.cell;
            break;
        }
        case MixRegime::TruncatedInfty: {
            const double d = plan.delta_seq.at(static_cast<std::size_t>(stage));
            const StreamSpec cell = StreamSpec::truncated(plan.a, d);
            s.cell = make_stream_field(cell);
            s.waste = make_stream_field(StreamSpec::time_waste_truncated(plan.a, d));
            s.search = make_virtual_stream_field(cell);
            break;
        }
        case MixRegime::TruncatedP: {
            const double d = plan.delta_seq.at(static_cast<std::size_t>(stage));
            const StreamSpec cell = StreamSpec::truncated_p(plan.p, d);
            s.cell = make_stream_field(cell);
            s.waste =
                make_stream_field(StreamSpec::time_waste_truncated(plan.a, d, 1, plan.p));
            s.search = make_virtual_stream_field(cell);
            break;
        }
        case MixRegime::SimpleCutoff: {
            const double d = plan.delta_seq.at(static_cast<std::size_t>(stage));
            const StreamSpec cell = StreamSpec::simple_cutoff(d);
            s.cell = make_stream_field(cell);
            s.waste = nullptr;
            s.search = s.cell;
            const PeriodTable& base = period_table(StreamSpec::base());
            s.mask = [&base, d](const Vec2& q) { return base.F_of(base_value(q)) > d; };
            break;
        }
    }
    return s;
}

struct HalfStageOutcome {
    Stage stage;
    double max_residual = 0.0;
    std::size_t undersampled = 0;
    std::vector<double> switch_times;
};

// Per-cell (or per-rectangle) switch search followed by entry assembly.
HalfStageOutcome build_half_stage(const StageStreams& streams,
                                  const ScalarField& field, int level, bool split_x, double t0,
                                  double t1, RegionPart first, double beta_scale,
                                  const RunOptions& opts) {
    HalfStageOutcome out;
    const CellBuckets buckets = bucket_particles(field, level, split_x);
    const int nx = buckets.nx, ny = buckets.ny;
    const std::size_t ncells = static_cast<std::size_t>(nx) * ny;
    std::vector<SwitchResult> results(ncells);
    const bool parallel_cells = ncells >= 8;
    parallel_for(
        ncells,
        [&](std::size_t c) {
            const int ix = static_cast<int>(c) % nx;
            const int iy = static_cast<int>(c) / nx;
            SwitchQuery q;
            q.rect = {static_cast<double>(ix) / nx, static_cast<double>(iy) / ny, 1.0 / nx,
                      1.0 / ny};
            q.rotate = streams.search;
            q.sign = ((ix + iy) % 2 == 0) ? 1.0 : -1.0;
            q.speed = 1.0;
            q.t0 = t0;
            q.t1 = t1;
            q.first = first;
            q.mask = streams.mask;
            q.tol = opts.switch_tol;
            q.ode = opts.ode;
            q.parallel_inner = !parallel_cells;
            auto [beg, end] = buckets.cell(ix, iy);
            results[c] = find_switch_time(field, beg, end, q, field.bound);
        },
        1);

    out.stage = Stage::tiled(t0, t1, split_x ? level + 1 : level);
    out.switch_times.reserve(ncells);
    for (std::size_t c = 0; c < ncells; ++c) {
        const int ix = static_cast<int>(c) % nx;
        const int iy = static_cast<int>(c) / nx;
        CellEntry e;
        e.rect = {static_cast<double>(ix) / nx, static_cast<double>(iy) / ny, 1.0 / nx, 1.0 / ny};
        e.pre = streams.cell;
        e.post = streams.waste;
        e.switch_time = results[c].time;
        e.sign = ((ix + iy) % 2 == 0) ? 1.0 : -1.0;
        e.speed = 1.0;
        e.boundary_scale = beta_scale;
        out.stage.add_entry(e);
        out.max_residual = std::max(out.max_residual, results[c].residual);
        out.switch_times.push_back(results[c].time);
        if (results[c].count < 16) ++out.undersampled;
    }
    return out;
}

void record_half_stage(const MixPlan& plan, MixTrajectory& traj, const ScalarField& field,
                       int stage_index, double t, int cell_level, double max_residual,
                       std::size_t undersampled, const RunOptions& opts,
                       const Stage* stage_for_grad) {
    StageMetrics m;
    m.stage = stage_index;
    m.t = t;
    m.cell_mean_sup = cell_mean_sup(field, cell_level).value;
    m.undersampled_cells = undersampled;
    m.max_switch_residual = max_residual;
    if (opts.record_mix_norm)
        m.mix_norm_h1 = mix_norm(field, 1.0, opts.metrics_level,
                                 plan.bc == BoundaryCondition::Periodic);
    if (opts.record_grad_lp && stage_for_grad != nullptr) {
        const Stage& st = *stage_for_grad;
        auto vel = [&st](Vec2 q) { return st.velocity(q, st.t0 + 1e-9); };
        const int lv = st.lookup_level;
        auto dist = [lv](Vec2 q) {
            const double n = std::ldexp(1.0, lv);
            Vec2 local{q.x * n - std::floor(q.x * n), q.y * n - std::floor(q.y * n)};
            return dist_special(local).d / n;
        };
        m.grad_lp = grad_lp(vel, plan.p, dist, 32).value;
    }
    traj.half_stages.push_back(m);
}

void guardrail(const ScalarField& field, int level, const RunOptions& opts) {
    const double per_cell =
        static_cast<double>(field.size()) / std::ldexp(1.0, 2 * level);
    if (per_cell < 16.0 && !opts.allow_sparse_cells)
        throw std::runtime_error(
            "stage level " + std::to_string(level) +
            " undersampled (< 16 particles/cell); raise the particle count");
}

} // namespace

void build_stage(const MixPlan& plan, int stage, ScalarField& field, MixTrajectory& traj,
                 const RunOptions& opts) {
    guardrail(field, stage, opts);
    const StageStreams streams = make_streams(plan, stage);
    const double beta_scale =
        (plan.bc == BoundaryCondition::NoSlip && !plan.beta_seq.empty())
            ? noslip_scale(plan.beta_seq.at(static_cast<std::size_t>(stage)), stage)
            : 0.0;
    const double t0 = static_cast<double>(stage);

    AdvectOptions aopts;
    aopts.ode = opts.ode;

    HalfStageOutcome first =
        build_half_stage(streams, field, stage, false, t0, t0 + 0.5, RegionPart::Left,
                         beta_scale, opts);
    FlowProgram frag;
    frag.stages.push_back(first.stage);
    traj.transport.merge(advect(frag, field, t0, t0 + 0.5, aopts));
    traj.switch_times.push_back(std::move(first.switch_times));
    record_half_stage(plan, traj, field, stage, t0 + 0.5, stage + 1, first.max_residual,
                      first.undersampled, opts, &frag.stages.back());
    if (opts.snapshot_hook) opts.snapshot_hook(field, t0 + 0.5);

    HalfStageOutcome second =
        build_half_stage(streams, field, stage, true, t0 + 0.5, t0 + 1.0,
                         RegionPart::Lower, beta_scale, opts);
    FlowProgram frag2;
    frag2.stages.push_back(second.stage);
    traj.transport.merge(advect(frag2, field, t0 + 0.5, t0 + 1.0, aopts));
    traj.switch_times.push_back(std::move(second.switch_times));
    record_half_stage(plan, traj, field, stage, t0 + 1.0, stage + 1, second.max_residual,
                      second.undersampled, opts, &frag2.stages.back());
    if (opts.snapshot_hook) opts.snapshot_hook(field, t0 + 1.0);

    traj.program.append(frag);
    traj.program.append(frag2);
}

void periodic_prelude(const MixPlan& plan, ScalarField& field, MixTrajectory& traj,
                      const RunOptions& opts) {
    // Horizontal shift (speed 2) until the left-half integral vanishes: the
    // halves would be fully swapped by t = 1/4, so the balancing instant is
    // found by bisection on the wrapped-shift integral.
    auto left_integral_after = [&field](double shift) {
        double sum = 0.0;
        for (std::size_t i = 0; i < field.size(); ++i) {
            double xx = field.x[i] + shift;
            xx -= std::floor(xx);
            if (xx < 0.5) sum += field.value[i];
        }
        return sum * field.weight();
    };
    const double h0 = left_integral_after(0.0);
    double t_shift = 0.0;
    if (std::abs(h0) > 1e-15) {
        double lo = 0.0, hi = 0.5;
        const double hlo = h0;
        for (int it = 0; it < 60; ++it) {
            const double mid = 0.5 * (lo + hi);
            const double hm = left_integral_after(mid);
            if (hm * hlo > 0.0) lo = mid;
            else hi = mid;
        }
        t_shift = 0.25 * (lo + hi); // shift distance = 2 t
    }

    FlowProgram frag;
    if (t_shift > 0.0) frag.stages.push_back(Stage::shift(0.0, t_shift, {2.0, 0.0}));
    if (t_shift < 0.25) frag.stages.push_back(Stage::tiled(t_shift, 0.25, 0));
    AdvectOptions aopts;
    aopts.ode = opts.ode;
    advect(frag, field, 0.0, 0.25, aopts);

    // Level-1 cell stages on (1/4, 3/4], balancing lower/upper halves.
    const StageStreams streams = make_streams(plan, 0);
    HalfStageOutcome cells = build_half_stage(streams, field, 1, false, 0.25, 0.75,
                                              RegionPart::Lower, 0.0, opts);
    FlowProgram frag2;
    frag2.stages.push_back(cells.stage);
    traj.transport.merge(advect(frag2, field, 0.25, 0.75, aopts));
    traj.switch_times.push_back(std::move(cells.switch_times));

    // Vertical quarter shift on (3/4, 1].
    FlowProgram frag3;
    frag3.stages.push_back(Stage::shift(0.75, 1.0, {0.0, 1.0}));
    advect(frag3, field, 0.75, 1.0, aopts);

    traj.program.append(frag);
    traj.program.append(frag2);
    traj.program.append(frag3);
    record_half_stage(plan, traj, field, 0, 1.0, 1, cells.max_residual, cells.undersampled,
                      opts, nullptr);
    if (opts.snapshot_hook) opts.snapshot_hook(field, 1.0);
}

MixTrajectory run_mixing(const MixPlan& plan, ScalarField& field, const RunOptions& opts) {
    MixTrajectory traj;
    traj.plan = plan;
    if (field.bound == 0.0) {
        traj.final_report = is_kappa_mixed(field, plan.kappa, plan.eps);
        return traj;
    }
    const double mean = field.mean();
    const double tol = std::max(5.0 * field.mean_stderr(), 1e-9 * field.bound);
    if (std::abs(mean) > tol)
        throw std::invalid_argument("initial data is not mean-zero within sampling error");

    std::vector<double> tracked{plan.eps};
    for (double e : opts.extra_eps)
        if (std::find(tracked.begin(), tracked.end(), e) == tracked.end()) tracked.push_back(e);
    for (double e : tracked) traj.first_mixed[e] = -1.0;

    auto check_mixed = [&](double t) {
        bool all = true;
        for (double e : tracked) {
            if (traj.first_mixed[e] >= 0.0) continue;
            const MixReport rep = is_kappa_mixed(field, plan.kappa, e);
            if (rep.is_mixed) traj.first_mixed[e] = t;
            else all = false;
        }
        return all;
    };

    int start_stage = 0;
    if (plan.bc == BoundaryCondition::Periodic) {
        periodic_prelude(plan, field, traj, opts);
        check_mixed(1.0);
        start_stage = 1;
    }
    const int last = opts.max_stages >= 0 ? std::min(opts.max_stages, plan.horizon)
                                          : plan.horizon;
    for (int n = start_stage; n < last; ++n) {
        build_stage(plan, n, field, traj, opts);
        const bool all = check_mixed(static_cast<double>(n + 1));
        if (opts.stop_when_mixed && all) break;
    }
    traj.final_report = is_kappa_mixed(field, plan.kappa, plan.eps);
    traj.missed_target = !traj.final_report.is_mixed;
    return traj;
}

void MixTrajectory::write_metrics_csv(const std::string& path, const std::string& header) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    if (!header.empty()) out << "# " << header << '\n';
    out << "stage,t,cell_mean_sup,mix_norm_h1,grad_lp,max_switch_residual,undersampled_cells\n";
    out.precision(17);
    for (const StageMetrics& m : half_stages) {
        out << m.stage << ',' << m.t << ',' << m.cell_mean_sup << ',' << m.mix_norm_h1 << ','
            << m.grad_lp << ',' << m.max_switch_residual << ',' << m.undersampled_cells << '\n';
    }
}

} // namespace cellmix
