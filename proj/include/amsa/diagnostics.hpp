#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "amsa/diagnostics_record.hpp"
#include "amsa/operator_system.hpp"
#include "amsa/schedule.hpp"
#include "amsa/solver.hpp"

namespace amsa {

// Learning targets y_i..y_N solving the bottom equations with the top
// i-1 variables frozen.
struct NestedTargets {
  int given_prefix_len = 0;                 // i - 1
  std::vector<Eigen::VectorXd> targets;     // y_i .. y_N
  std::vector<double> residual_norms;       // ||F_bar_j(prefix, y)||, j = i..N
};

enum class TargetMode { auto_detect, affine_direct, fixed_point };

// Solves F_bar_j(prefix, y_{i:N}) = 0 for all j in [i, N]. affine_direct
// assembles and solves the stacked linear system; fixed_point runs damped
// iteration y <- y - eta * F_bar (eta tuned from the system constants,
// halved on residual increase).
NestedTargets solve_nested_targets(const OperatorSystem& system,
                                   const std::vector<Eigen::VectorXd>& prefix,
                                   double tol = 1e-9,
                                   TargetMode mode = TargetMode::auto_detect);

// Checks y_j(prefix) == y_j(prefix, y_{i:j-1}(prefix)) within tol, both
// sides computed by independent solves. Levels i < j <= N, prefix length
// i - 1.
bool verify_target_identity(const OperatorSystem& system,
                            const std::vector<Eigen::VectorXd>& prefix, int i,
                            int j, double tol);

// Residuals and Lyapunov value at the given solver state.
DiagnosticsRecord residuals(const SolverState& state,
                            const OperatorSystem& system, SolverKind kind,
                            double tol = 1e-9);

// Weighted three-level Lyapunov value
//   ||x_1||^2 + v2(t) ||x_2||^2 + v3(t) ||x_3||^2
// with weights from msa_lyapunov_weights.
double weighted_msa_lyapunov(const DiagnosticsRecord& record, long t,
                             const StepSchedule& schedule, double delta,
                             double L);

// Fills record.diag (and weighted_V for msa N=3 when constants given) for
// every record of the trajectory.
struct AnnotateOptions {
  double tol = 1e-9;
  const StepSchedule* schedule = nullptr;  // for weighted_V
  double delta = 0.0;
  double L = 0.0;
};
void annotate_trajectory(Trajectory& trajectory, const OperatorSystem& system,
                         const AnnotateOptions& options = {});

// Smallest nested strong-monotonicity modulus. Affine systems get the
// exact value: the minimum eigenvalue over levels of the symmetrized
// effective matrix A_ii - A_{i,low} A_low^{-1} A_{low,i}. Otherwise the
// minimum sampled Rayleigh quotient over pair_count random pairs per level
// around each supplied sample. Negative output means the assumption fails.
double estimate_nested_delta(const OperatorSystem& system,
                             const std::vector<ParameterStack>& theta_samples,
                             int pair_count = 32, double tol = 1e-9);

struct GridSpec {
  int points = 24;
  double radius = 2.0;
  std::uint64_t seed = 1;
};

struct AssumptionEstimates {
  double delta_hat = 0.0;
  double L_hat = 0.0;
  double B_hat = 0.0;
  double D_bound = 0.0;
  std::string sampled_region;  // the estimates hold on this region only
};

// Sampled Lipschitz / boundedness constants:
//   L_hat   max ratio over operator pairs and over target pairs
//   B_hat   max sampled target norm
//   D_bound max sampled ||F_i(theta, X)|| over the grid and all states
AssumptionEstimates estimate_lipschitz_bounds(const OperatorSystem& system,
                                              const GridSpec& grid = {});

struct LemmaViolation {
  long t = 0;
  int level = 0;
  double lhs = 0.0;
  double rhs = 0.0;
};

struct LemmaCheckReport {
  long pairs_checked = 0;
  std::vector<LemmaViolation> violations;
  bool preconditions_ok = true;
  std::string note;
};

// Per-iteration descent inequality on the optimal residuals, evaluated at
// every consecutive recorded pair:
//   ||x_i'||^2 <= ||x_i||^2 - (delta a_i/4)||x_i||^2
//                 + sum_{j<i} (delta a_j/(8N)) ||x_j||^2
//                 + (9N^3L^6/delta + 8N^2L^3) a_i sum_{j>i} ||x_j||^2
//                 + (3/delta + L) a_i sum_j ||df_j||^2
// Requires densely recorded consecutive iterations. preconditions_ok
// reflects check_amsa_conditions on the supplied constants; when it is
// false, violations are informational.
LemmaCheckReport check_lemma_bound_x(const Trajectory& trajectory,
                                     const OperatorSystem& system,
                                     const StepSchedule& schedule,
                                     const AmsaConditionConstants& constants,
                                     double tol = 1e-9);

// Pathwise step bound ||theta_i' - theta_i|| <=
// alpha_i(t) (||df_i|| + N L^2 sum_{j>=i} ||x_j||) at every consecutive
// recorded pair.
LemmaCheckReport check_lemma_lipschitz(const Trajectory& trajectory,
                                       const OperatorSystem& system,
                                       const StepSchedule& schedule, double L,
                                       double tol = 1e-9);

}  // namespace amsa
