#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "amsa/operator_system.hpp"
#include "amsa/schedule.hpp"
#include "amsa/solver.hpp"

namespace amsa {

// Log-log least-squares fit of a decay curve.
struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  long t_lo = 0;
  long t_hi = 0;
  int n_points = 0;
  bool ok = false;
  std::string note;
};

// OLS of log(value) on log(t+1) over t in [t_lo, t_hi]. Non-positive
// values are floored at 1e-300 with a note; a window of fewer than 5
// usable points is not a reportable fit.
RateFit fit_rate(const std::vector<long>& ts, const std::vector<double>& values,
                 long t_lo, long t_hi);

struct AggregatedCurve {
  std::vector<long> t;
  std::vector<double> mean;
  std::vector<double> sem;  // standard error of the mean
  int n_trials = 0;
};

using CurveMap = std::map<std::string, AggregatedCurve>;

// Per-quantity series of one trajectory: norm curves, diagnostics, and
// problem metrics, keyed "theta_norm_1", "x_norm_2", "V", "grad_norm", ...
std::map<std::string, std::vector<std::pair<long, double>>> extract_series(
    const Trajectory& trajectory);

// Pointwise mean and standard error across trajectories. All inputs must
// share the record grid and config hash.
CurveMap aggregate_trials(const std::vector<Trajectory>& trajectories);

struct SolverSetup {
  std::string label;
  SolverKind kind = SolverKind::amsa;
  StepSchedule schedule;
};

struct FitSpec {
  double window_decades = 1.5;
  bool skip_transient = true;  // drop t < max(10 h, 10 tau(lambda(0)))
  std::vector<std::string> quantities;  // defaults to {"V"}
};

struct ExperimentConfig {
  std::shared_ptr<const OperatorSystem> system;
  nlohmann::json source;  // canonical config document; hashed into outputs
  std::vector<SolverSetup> solvers;
  long horizon = 10000;
  int seed_count = 1;
  std::uint64_t base_seed = 1;
  RecordPlan plan = RecordPlan::log_spaced();
  bool diagnostics = true;
  bool metrics = true;
  InitSpec init;
  FitSpec fit;
  std::string out_dir;
  int threads = 0;  // 0: hardware concurrency
  double divergence_cap = 1e12;
};

struct SolverResult {
  std::string label;
  SolverKind kind = SolverKind::amsa;
  int n_trials = 0;
  int n_diverged = 0;
  CurveMap curves;
  std::map<std::string, RateFit> fits;
  std::map<std::string, double> predicted_slope;
};

struct ExperimentReport {
  std::string config_hash;
  std::vector<SolverResult> solvers;
  bool ok = true;
  std::string status = "ok";
};

// Executes all (solver, seed) trials — seeds in parallel, reduction in
// fixed seed order so thread count never affects any numeric output —
// aggregates, and fits rates. More than 20% diverged trials fails the
// experiment (ok = false).
ExperimentReport run_experiment(const ExperimentConfig& config);

// Emits curves.csv, summary.json and plot_<quantity>.svg under out_dir.
void write_report_bundle(const ExperimentReport& report,
                         const ExperimentConfig& config,
                         const std::string& out_dir);

nlohmann::json summary_json(const ExperimentReport& report,
                            const ExperimentConfig& config);

// Per-trajectory dump: CSV rows `t,level,quantity,value` (level 0 for
// stack-level quantities) plus a JSON sidecar with seed / solver /
// config hash / diverged flag.
void dump_trajectory_csv(const Trajectory& trajectory,
                         const std::string& csv_path,
                         const std::string& sidecar_path);

// Config documents (schema "config_version": 1).
ExperimentConfig experiment_config_from_json(const nlohmann::json& doc,
                                             const std::string& base_dir);

// Entry point behind the command-line tool. Returns the process exit code
// (0 success, 1 validation failure, 2 runtime/usage error).
int cli(const std::vector<std::string>& args);

}  // namespace amsa
