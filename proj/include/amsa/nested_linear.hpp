#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "amsa/operator_system.hpp"

namespace amsa {

// Benchmark family: F_i(theta, X) = sum_j A[i][j] theta_j + b[i] + g_i(X)
// with symmetric positive definite diagonal blocks, bounded cross-level
// coupling, and noise vectors with exact zero mean under the stationary
// distribution.
struct NestedLinearSpec {
  int n_levels = 0;
  std::vector<int> dims;
  std::vector<std::vector<Eigen::MatrixXd>> A;  // A[i][j]: d_i x d_j
  std::vector<Eigen::VectorXd> b;
  std::vector<Eigen::MatrixXd> noise;  // per level: m x d_i, one row per state
  double coupling_scale = 0.0;
  double noise_scale = 0.0;
};

class NestedLinearSystem : public OperatorSystem {
 public:
  NestedLinearSystem(NestedLinearSpec spec, FiniteKernel kernel,
                     SystemMetadata metadata);

  Eigen::VectorXd evaluate(int level, const ParameterStack& theta,
                           const Sample& x) const override;
  Eigen::VectorXd mean_operator(int level,
                                const ParameterStack& theta) const override;
  std::optional<AffineView> affine_view() const override;
  std::string kind() const override { return "nested_linear"; }

  const NestedLinearSpec& spec() const { return spec_; }

 private:
  NestedLinearSpec spec_;
  bool noise_mean_free_;  // exact zero noise mean at every theta
};

struct NestedLinearConfig {
  int n_levels = 2;
  std::vector<int> dims;  // defaults to all 3s when empty
  double delta_target = 0.5;
  double coupling_scale = 0.1;
  double sigma = 0.5;
  std::string kernel_kind = "fixed";  // fixed | iid | mixture
  int kernel_states = 5;
  double kernel_floor = 0.1;
  std::uint64_t seed = 0;
};

// Generates a benchmark system with analytically known constants in its
// metadata (solution, delta, lipschitz, target_bound, noise_scale).
// Regenerates (seed-advanced, at most 20 attempts) until the measured
// nested modulus is at least delta_target / 2.
std::shared_ptr<const NestedLinearSystem> make_nested_linear(
    const NestedLinearConfig& config);

}  // namespace amsa
