#pragma once

#include "cellmix/calibration.hpp"
#include "cellmix/metrics.hpp"
#include "cellmix/program.hpp"
#include "cellmix/transport.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace cellmix {

enum class BoundaryCondition { NoFlow, Periodic, NoSlip };
enum class MixRegime { PerfectLow, TruncatedInfty, TruncatedP, SimpleCutoff };

const char* to_string(BoundaryCondition bc);
const char* to_string(MixRegime regime);
BoundaryCondition bc_from_string(const std::string& s);

// Fully resolved schedule for one mixing run.  The regime follows the
// gradient-integrability exponent p: below (3+sqrt5)/2 the perfectly mixing
// streams apply; at or above it (and at p = infinity) the delta-truncated
// families with their stage schedules take over.  SimpleCutoff is a
// cross-validation regime using the level-damped base stream and no
// time-wasting flow.
struct MixPlan {
    BoundaryCondition bc = BoundaryCondition::NoFlow;
    MixRegime regime = MixRegime::PerfectLow;
    double p = 2.0; // INFINITY allowed
    double kappa = 0.25;
    double eps = 0.25;
    double a = 0.0;
    int horizon = 0;               // tau, number of unit-time stages
    std::vector<double> delta_seq; // per stage; empty for PerfectLow
    std::vector<double> beta_seq;  // NoSlip only
    bool eps_independent = false;
    double nu_p = 0.0; // reported metadata

    std::string summary() const;
};

MixPlan plan_mixing(BoundaryCondition bc, double p, double kappa, double eps,
                    bool eps_independent, const Calibration& cal,
                    std::optional<MixRegime> regime_override = std::nullopt);

struct RunOptions {
    StepControl ode{};
    double switch_tol = 1e-3;
    bool record_mix_norm = true;
    bool record_grad_lp = false;
    int metrics_level = 8;
    bool allow_sparse_cells = false; // override the particles-per-cell guardrail
    std::vector<double> extra_eps;   // additional scales tracked for first-mixed times
    int max_stages = -1;             // cap stages (-1 = plan horizon)
    bool stop_when_mixed = false;    // stop once every tracked scale is mixed
    // Invoked after each half stage with the advanced field (snapshots).
    std::function<void(const ScalarField&, double t)> snapshot_hook;
};

struct StageMetrics {
    int stage = 0;
    double t = 0.0;
    double cell_mean_sup = 0.0; // at level = stage + 1
    double mix_norm_h1 = -1.0;
    double grad_lp = -1.0;
    double max_switch_residual = 0.0;
    std::size_t undersampled_cells = 0;
};

struct MixTrajectory {
    MixPlan plan;
    std::vector<StageMetrics> half_stages;
    std::vector<std::vector<double>> switch_times; // per half-stage
    FlowProgram program;
    AdvectStats transport;
    MixReport final_report;
    bool missed_target = false;
    std::map<double, double> first_mixed; // eps -> first integer time mixed (-1 if never)

    void write_metrics_csv(const std::string& path, const std::string& header) const;
};

// One unit-time stage [n, n+1]: per-cell rotation until the data-dependent
// switch time, then the time-wasting flow; the same on half-cell rectangles
// in the second half.  The field is advanced to time n+1 in the process and
// the program fragment is appended to traj.program.
void build_stage(const MixPlan& plan, int stage, ScalarField& field, MixTrajectory& traj,
                 const RunOptions& opts);

// Periodic prelude on [0, 1]: horizontal shift balancing the left-half
// integral, level-1 cell stages balancing lower/upper halves, then a
// vertical quarter shift.
void periodic_prelude(const MixPlan& plan, ScalarField& field, MixTrajectory& traj,
                      const RunOptions& opts);

MixTrajectory run_mixing(const MixPlan& plan, ScalarField& field, const RunOptions& opts = {});

} // namespace cellmix
