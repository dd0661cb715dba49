#include "amsa/solver.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace amsa {

namespace {

void check_iterate(const ParameterStack& stack, long t, double cap,
                   const char* what) {
  for (int i = 1; i <= stack.n_levels(); ++i) {
    const auto& b = stack.block(i);
    if (!b.allFinite()) {
      std::ostringstream os;
      os << what << " became non-finite at t=" << t << ", level " << i;
      throw DivergenceError(os.str(), t, i);
    }
    if (b.norm() > cap) {
      std::ostringstream os;
      os << what << " norm exceeded cap " << cap << " at t=" << t
         << ", level " << i;
      throw DivergenceError(os.str(), t, i);
    }
  }
}

void check_schedule(const StepSchedule& schedule, StepSchedule::Kind kind,
                    const OperatorSystem& system) {
  if (schedule.kind() != kind)
    throw UsageError("solver: schedule kind does not match the solver");
  if (schedule.n_levels() != system.n_levels())
    throw UsageError("solver: schedule has " +
                     std::to_string(schedule.n_levels()) +
                     " levels, system has " +
                     std::to_string(system.n_levels()));
}

}  // namespace

std::string to_string(SolverKind kind) {
  return kind == SolverKind::amsa ? "amsa" : "msa";
}

SolverKind solver_kind_from_string(const std::string& name) {
  if (name == "amsa") return SolverKind::amsa;
  if (name == "msa") return SolverKind::msa;
  throw UsageError("unknown solver kind '" + name + "'");
}

RecordPlan RecordPlan::log_spaced(int per_decade, int cap) {
  RecordPlan p;
  p.mode = Mode::log_spaced;
  p.per_decade = per_decade;
  p.cap = cap;
  return p;
}

RecordPlan RecordPlan::dense_prefix(long until) {
  RecordPlan p;
  p.mode = Mode::dense_prefix;
  p.dense_until = until;
  return p;
}

RecordPlan RecordPlan::all() {
  RecordPlan p;
  p.mode = Mode::all;
  return p;
}

RecordPlan RecordPlan::none() {
  RecordPlan p;
  p.mode = Mode::none;
  return p;
}

std::vector<long> RecordPlan::record_times(long T) const {
  std::set<long> ts{0, T};
  switch (mode) {
    case Mode::none:
      break;
    case Mode::all:
      for (long t = 0; t <= T; ++t) ts.insert(t);
      break;
    case Mode::dense_prefix:
      for (long t = 0; t <= std::min(T, dense_until); ++t) ts.insert(t);
      break;
    case Mode::log_spaced: {
      const double step = std::pow(10.0, 1.0 / per_decade);
      for (double x = 1.0; x <= static_cast<double>(T); x *= step) {
        const long t = std::llround(x);
        if (t <= T) ts.insert(t);
      }
      if (static_cast<int>(ts.size()) > cap) {
        std::vector<long> all_ts(ts.begin(), ts.end());
        std::set<long> thinned{0, T};
        for (int k = 0; k < cap; ++k) {
          const std::size_t idx =
              static_cast<std::size_t>(static_cast<double>(k) *
                                       (all_ts.size() - 1) / (cap - 1));
          thinned.insert(all_ts[idx]);
        }
        return {thinned.begin(), thinned.end()};
      }
      break;
    }
  }
  return {ts.begin(), ts.end()};
}

SolverState make_initial_state(const OperatorSystem& system, SolverKind kind,
                               std::uint64_t seed, const InitSpec& init) {
  SolverState state;
  state.t = 0;
  state.rng = Rng(seed);
  state.theta = init.theta0 ? *init.theta0 : system.default_init();
  system.check_theta(state.theta);
  state.x_state =
      init.x0 ? *init.x0 : state.rng.next_int(system.sample_space_size());
  system.check_state(state.x_state);

  state.f = ParameterStack::zeros(system.dims());
  if (kind == SolverKind::amsa &&
      init.f_init == InitSpec::FInit::from_operator) {
    const Sample x = system.expand_sample(state.theta, state.x_state, state.rng);
    for (int i = 1; i <= system.n_levels(); ++i)
      state.f.block(i) = system.evaluate(i, state.theta, x);
  }
  return state;
}

void amsa_step(SolverState& state, const OperatorSystem& system,
               const StepSchedule& schedule, const RunOptions& options) {
  check_schedule(schedule, StepSchedule::Kind::amsa, system);
  const long t = state.t;
  const double lambda = schedule.lambda(t);
  const int n = system.n_levels();

  // All reads of theta^[t] happen before the decision update: the operator
  // samples, and the kernel row for the next chain state.
  const Sample x = system.expand_sample(state.theta, state.x_state, state.rng);
  std::vector<Eigen::VectorXd> F(n);
  for (int i = 1; i <= n; ++i) F[i - 1] = system.evaluate(i, state.theta, x);
  const int next_state =
      x.next_state >= 0
          ? x.next_state
          : draw_next(system.kernel(), state.theta, state.x_state, state.rng);

  for (int i = 1; i <= n; ++i) {
    state.theta.block(i) -= schedule.alpha(i, t) * state.f.block(i);
    system.project(i, state.theta.block(i));
  }
  for (int i = 1; i <= n; ++i)
    state.f.block(i) = (1.0 - lambda) * state.f.block(i) + lambda * F[i - 1];

  check_iterate(state.theta, t, options.divergence_cap, "theta");
  check_iterate(state.f, t, options.divergence_cap, "f");

  state.x_state = next_state;
  state.t = t + 1;
}

void msa_step(SolverState& state, const OperatorSystem& system,
              const StepSchedule& schedule, const RunOptions& options) {
  check_schedule(schedule, StepSchedule::Kind::msa, system);
  const long t = state.t;
  const int n = system.n_levels();

  // Every level reads the same theta^[t] and the same single sample.
  const Sample x = system.expand_sample(state.theta, state.x_state, state.rng);
  std::vector<Eigen::VectorXd> F(n);
  for (int i = 1; i <= n; ++i) F[i - 1] = system.evaluate(i, state.theta, x);
  const int next_state =
      x.next_state >= 0
          ? x.next_state
          : draw_next(system.kernel(), state.theta, state.x_state, state.rng);

  for (int i = 1; i <= n; ++i) {
    state.theta.block(i) -= schedule.alpha(i, t) * F[i - 1];
    system.project(i, state.theta.block(i));
  }

  check_iterate(state.theta, t, options.divergence_cap, "theta");

  state.x_state = next_state;
  state.t = t + 1;
}

Trajectory run(const OperatorSystem& system, const StepSchedule& schedule,
               SolverKind kind, long horizon, std::uint64_t seed,
               const InitSpec& init, const RecordPlan& plan,
               const RunOptions& options) {
  if (horizon < 1) throw UsageError("run: horizon must be >= 1");
  check_schedule(schedule,
                 kind == SolverKind::amsa ? StepSchedule::Kind::amsa
                                          : StepSchedule::Kind::msa,
                 system);

  Trajectory traj;
  traj.seed = seed;
  traj.solver = kind;

  SolverState state = make_initial_state(system, kind, seed, init);
  const std::vector<long> times = plan.record_times(horizon);
  std::size_t next_record = 0;

  auto record = [&](const SolverState& s) {
    TrajectoryRecord rec;
    rec.t = s.t;
    rec.theta = s.theta;
    rec.f = s.f;
    rec.x_state = s.x_state;
    if (options.with_metrics) rec.metrics = system.trajectory_metrics(s.theta);
    traj.records.push_back(std::move(rec));
  };

  try {
    for (long t = 0; t < horizon; ++t) {
      if (next_record < times.size() && times[next_record] == t) {
        record(state);
        ++next_record;
      }
      if (kind == SolverKind::amsa)
        amsa_step(state, system, schedule, options);
      else
        msa_step(state, system, schedule, options);
    }
    record(state);  // terminal, t == horizon
  } catch (const DivergenceError& e) {
    traj.diverged = true;
    traj.divergence_message = e.what();
  }
  traj.terminal = std::move(state);
  return traj;
}

}  // namespace amsa
