#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "amsa/operator_system.hpp"

namespace amsa {

// Tabular average-reward mean-field game. Transitions carry an ergodicity
// floor so every policy-induced chain mixes.
struct MfgSpec {
  int n_states = 0;
  int n_actions = 0;
  std::vector<Eigen::MatrixXd> transition;  // per action: S x S, rows s -> s'
  Eigen::MatrixXd reward;                   // S x A, values in [0, 1]
  double ergodicity_floor = 0.05;
  double u_coupling = 0.0;  // weight of the linear-in-u kernel perturbation
  std::uint64_t seed = 0;
};

// Random instance: transition rows drawn from a symmetric simplex
// distribution then mixed with uniform at weight `floor`; rewards uniform
// in [0, 1]. Deterministic in the seed.
MfgSpec make_random_mfg(int n_states, int n_actions, std::uint64_t seed,
                        double ergodicity_floor = 0.05);

// Row-wise softmax with max subtraction.
Eigen::MatrixXd softmax_policy(const Eigen::MatrixXd& theta);

// Three-level operator system for the game:
//   level 1  policy logits theta in R^{S x A} (flattened row-major);
//            F_1 = -(r(s,a) - Jhat + V(s') - V(s)) grad log pi(a|s)
//   level 2  mean-field estimate u in R^S; F_2 = u - e_s
//   level 3  differential value V in R^S and average-reward tracker Jhat;
//            F_3 = ( -(r - Jhat + V(s') - V(s)) e_s , Jhat - r(s,a) )
// The chain lives on s; the action and successor are drawn inside
// expand_sample from pi_theta and the transition tensor, and the successor
// doubles as the next chain state. u is projected onto the probability
// simplex after each level-2 update.
class MfgSystem : public OperatorSystem {
 public:
  explicit MfgSystem(MfgSpec spec);

  Eigen::VectorXd evaluate(int level, const ParameterStack& theta,
                           const Sample& x) const override;
  Sample expand_sample(const ParameterStack& theta, int state,
                       Rng& rng) const override;
  Eigen::VectorXd mean_operator(int level,
                                const ParameterStack& theta) const override;
  std::vector<Sample> sample_grid() const override;
  ParameterStack default_init() const override;
  void project(int level, Eigen::VectorXd& values) const override;
  std::vector<std::pair<std::string, double>> trajectory_metrics(
      const ParameterStack& theta) const override;
  std::string kind() const override { return "mfg"; }

  const MfgSpec& spec() const { return spec_; }

  // P_u(s'|s,a) after the optional mean-field perturbation.
  Eigen::VectorXd transition_row(int state, int action,
                                 const Eigen::VectorXd& u) const;
  // Policy-induced state kernel P^{pi,u}.
  Eigen::MatrixXd induced_kernel(const Eigen::MatrixXd& policy,
                                 const Eigen::VectorXd& u) const;

 private:
  MfgSpec spec_;
};

std::shared_ptr<const MfgSystem> mfg_operator_system(const MfgSpec& spec);

// Exact convergence metrics at (theta, u):
//   grad_norm     ||grad_theta J(pi_theta, u)||  (exact policy gradient)
//   meanfield_gap ||u - v^{pi_theta, u}||, v the stationary distribution
//                 of the induced kernel
// The differential value function is obtained from a linear solve with the
// average-reward normalization.
std::pair<double, double> mfg_metrics(const Eigen::MatrixXd& theta_logits,
                                      const Eigen::VectorXd& u,
                                      const MfgSpec& spec);

// Euclidean projection onto the probability simplex.
void project_to_simplex(Eigen::VectorXd& v);

}  // namespace amsa
