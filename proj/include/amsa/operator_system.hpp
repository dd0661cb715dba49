#pragma once

#include <Eigen/Core>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "amsa/kernel.hpp"
#include "amsa/parameter_stack.hpp"
#include "amsa/rng.hpp"

namespace amsa {

// Per-level evaluation result.
struct LevelVector {
  int level = 0;
  Eigen::VectorXd values;
};

// One fully expanded noise sample. The chain lives on `state`; systems
// whose operators need auxiliary draws (action, successor state) fill the
// remaining fields in expand_sample().
struct Sample {
  int state = 0;
  int action = -1;
  int next_state = -1;
};

// Known constants attached to generated benchmark systems.
struct SystemMetadata {
  std::optional<double> delta;         // nested strong-monotonicity modulus
  std::optional<double> lipschitz;     // operator/target Lipschitz constant
  std::optional<double> target_bound;  // bound on nested target norms
  std::optional<double> noise_scale;
  std::optional<ParameterStack> solution;
  bool mean_consistent = false;
};

// Dense affine structure F_bar_i(theta) = sum_j A[i][j] theta_j + b[i],
// exposed by systems whose mean operators are affine. Blocks are 0-based.
struct AffineView {
  std::vector<std::vector<Eigen::MatrixXd>> A;
  std::vector<Eigen::VectorXd> b;
};

// A coupled system of N stochastic operators over a finite sample space,
// together with the Markov kernel generating the noise. Immutable after
// construction; safe to share read-only across workers.
class OperatorSystem {
 public:
  OperatorSystem(std::vector<int> dims, FiniteKernel kernel,
                 SystemMetadata metadata = {});
  virtual ~OperatorSystem() = default;

  int n_levels() const { return static_cast<int>(dims_.size()); }
  const std::vector<int>& dims() const { return dims_; }
  int sample_space_size() const { return kernel_.size(); }
  const FiniteKernel& kernel() const { return kernel_; }
  const SystemMetadata& metadata() const { return metadata_; }

  // F_i(theta, x). Deterministic: identical (level, theta, x) must give
  // identical output.
  virtual Eigen::VectorXd evaluate(int level, const ParameterStack& theta,
                                   const Sample& x) const = 0;

  // Expands a chain state into the sample consumed by evaluate(). The
  // default sample is the state itself; systems that draw auxiliary
  // variables (e.g. action and successor) override this. When the expanded
  // sample fixes next_state, the solver uses it as the next chain state.
  virtual Sample expand_sample(const ParameterStack& theta, int state,
                               Rng& rng) const;

  // Exact mean operator under the stationary distribution of the kernel at
  // theta. The default sums evaluate() over all states weighted by the
  // stationary distribution; systems with inner expectations override it.
  virtual Eigen::VectorXd mean_operator(int level,
                                        const ParameterStack& theta) const;

  // Affine structure of the mean operators, when available.
  virtual std::optional<AffineView> affine_view() const { return std::nullopt; }

  // Representative samples for grid-based validators: bare chain states by
  // default, the full (state, action, successor) product for systems whose
  // operators need the extra draws.
  virtual std::vector<Sample> sample_grid() const;

  // Canonical initial decision variable (zeros unless overridden).
  virtual ParameterStack default_init() const;

  // Feasibility hook applied by solvers after each level update.
  virtual void project(int /*level*/, Eigen::VectorXd& /*values*/) const {}

  // Problem-specific scalar metrics recorded along trajectories.
  virtual std::vector<std::pair<std::string, double>> trajectory_metrics(
      const ParameterStack& /*theta*/) const {
    return {};
  }

  virtual std::string kind() const = 0;

  // Validates theta shape against the system, naming the offending level.
  void check_theta(const ParameterStack& theta) const;
  void check_level(int level) const;
  void check_state(int state) const;

 private:
  std::vector<int> dims_;
  FiniteKernel kernel_;
  SystemMetadata metadata_;
};

// F_i(theta, X) for a bare chain state (no auxiliary draws).
LevelVector evaluate_operator(const OperatorSystem& system, int level,
                              const ParameterStack& theta, int state);

// Exact F_bar_i(theta) under the stationary distribution at theta.
LevelVector evaluate_mean_operator(const OperatorSystem& system, int level,
                                   const ParameterStack& theta);

struct AffineBoundReport {
  // ok[i][x]: ||F_{i+1}(theta, X=x)|| <= L (sum_j ||theta_j|| + 1)
  std::vector<std::vector<bool>> ok;
  bool all_ok = false;
};

// Checks the affine growth bound per (level, state) at the given theta.
AffineBoundReport check_affine_bound(const OperatorSystem& system,
                                     const ParameterStack& theta, double L);

}  // namespace amsa
