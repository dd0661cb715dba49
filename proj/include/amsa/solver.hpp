#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "amsa/diagnostics_record.hpp"
#include "amsa/operator_system.hpp"
#include "amsa/parameter_stack.hpp"
#include "amsa/rng.hpp"
#include "amsa/schedule.hpp"

namespace amsa {

enum class SolverKind { amsa, msa };

std::string to_string(SolverKind kind);
SolverKind solver_kind_from_string(const std::string& name);

// Full iteration state. f is the averaged operator estimate (zero-filled
// and untouched for msa runs).
struct SolverState {
  long t = 0;
  ParameterStack theta;
  ParameterStack f;
  int x_state = 0;
  Rng rng{0};
};

// Which iterations get a snapshot (and diagnostics, when enabled).
struct RecordPlan {
  enum class Mode { log_spaced, dense_prefix, all, none };

  Mode mode = Mode::log_spaced;
  int per_decade = 60;
  int cap = 512;
  long dense_until = 0;  // dense_prefix only

  static RecordPlan log_spaced(int per_decade = 60, int cap = 512);
  static RecordPlan dense_prefix(long until);
  static RecordPlan all();
  static RecordPlan none();

  // Sorted, unique iteration indices, always containing 0 and T.
  std::vector<long> record_times(long T) const;
};

struct TrajectoryRecord {
  long t = 0;
  ParameterStack theta;
  ParameterStack f;
  int x_state = 0;
  std::optional<DiagnosticsRecord> diag;
  std::vector<std::pair<std::string, double>> metrics;
};

struct Trajectory {
  std::uint64_t seed = 0;
  SolverKind solver = SolverKind::amsa;
  std::string config_hash;
  bool diverged = false;
  std::string divergence_message;
  std::vector<TrajectoryRecord> records;
  SolverState terminal;
};

struct InitSpec {
  std::optional<ParameterStack> theta0;  // default: system.default_init()
  enum class FInit { from_operator, zero } f_init = FInit::from_operator;
  std::optional<int> x0;  // default: drawn uniformly from the trajectory rng
};

struct RunOptions {
  double divergence_cap = 1e12;
  bool with_metrics = true;
};

// Builds the t = 0 state: seeds the generator, places theta, draws (or
// pins) the initial chain state, and initializes f. amsa default is one
// free operator evaluation f_i = F_i(theta0, X0); msa always zero-fills f.
SolverState make_initial_state(const OperatorSystem& system,
                               SolverKind kind, std::uint64_t seed,
                               const InitSpec& init = {});

// One accelerated iteration:
//   theta_i <- theta_i - alpha_i(t) f_i
//   f_i     <- (1 - lambda(t)) f_i + lambda(t) F_i(theta^[t], X^[t])
//   X       <- next state under the kernel at theta^[t]
// F_i and the kernel row are read at the pre-update theta. Throws
// DivergenceError on non-finite iterates or norms above the cap.
void amsa_step(SolverState& state, const OperatorSystem& system,
               const StepSchedule& schedule, const RunOptions& options = {});

// One standard iteration: theta_i <- theta_i - alpha_i(t) F_i(theta, X),
// every level from the same theta and the same single sample; then the
// state advances under the kernel at the pre-update theta.
void msa_step(SolverState& state, const OperatorSystem& system,
              const StepSchedule& schedule, const RunOptions& options = {});

// Runs T iterations from a fresh initial state. Deterministic in all
// arguments. On divergence the partial trajectory is returned with the
// diverged flag set.
Trajectory run(const OperatorSystem& system, const StepSchedule& schedule,
               SolverKind kind, long horizon, std::uint64_t seed,
               const InitSpec& init = {},
               const RecordPlan& plan = RecordPlan::log_spaced(),
               const RunOptions& options = {});

}  // namespace amsa
