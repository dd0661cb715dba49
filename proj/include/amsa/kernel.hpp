#pragma once

#include <Eigen/Core>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "amsa/errors.hpp"
#include "amsa/parameter_stack.hpp"
#include "amsa/rng.hpp"

namespace amsa {

// Half the L1 distance between two distributions on a finite space.
// Inputs must sum to 1 within 1e-9 with non-negative entries.
double tv_distance(const Eigen::VectorXd& u1, const Eigen::VectorXd& u2);

// theta-parameterized row-stochastic transition kernel over m states.
//
// Families:
//   fixed          P(theta) == P for all theta.
//   theta_mixture  P(theta) = (1 - eps*c(theta)) P_a + eps*c(theta) P_b,
//                  c(theta) = clamp(w . flatten(theta) + bias, 0, 1).
//   custom         arbitrary builder (used by problem generators).
class FiniteKernel {
 public:
  enum class Family { fixed, theta_mixture, custom };

  static FiniteKernel fixed(Eigen::MatrixXd P);

  static FiniteKernel theta_mixture(Eigen::MatrixXd P_a, Eigen::MatrixXd P_b,
                                    double epsilon,
                                    Eigen::VectorXd clamp_weights,
                                    double clamp_bias);

  // row_builder is optional; when absent rows come from builder(theta).
  static FiniteKernel custom(
      int m, std::function<Eigen::MatrixXd(const ParameterStack&)> builder,
      std::function<Eigen::VectorXd(const ParameterStack&, int)> row_builder =
          nullptr);

  int size() const { return m_; }
  Family family() const { return family_; }
  bool theta_independent() const { return family_ == Family::fixed; }

  // Full transition matrix at theta. Rows are validated to be stochastic.
  Eigen::MatrixXd matrix(const ParameterStack& theta) const;

  // Single row (the transition distribution out of `state`).
  Eigen::VectorXd row(const ParameterStack& theta, int state) const;

  // Mixture coefficient c(theta); only valid for theta_mixture kernels.
  double mixture_coefficient(const ParameterStack& theta) const;

  // Serialization accessors (fixed / theta_mixture only).
  const Eigen::MatrixXd& base_matrix() const { return P_a_; }
  const Eigen::MatrixXd& alt_matrix() const { return P_b_; }
  double epsilon() const { return epsilon_; }
  const Eigen::VectorXd& clamp_weights() const { return clamp_weights_; }
  double clamp_bias() const { return clamp_bias_; }

 private:
  FiniteKernel() = default;

  int m_ = 0;
  Family family_ = Family::fixed;
  Eigen::MatrixXd P_a_;
  Eigen::MatrixXd P_b_;
  double epsilon_ = 0.0;
  Eigen::VectorXd clamp_weights_;
  double clamp_bias_ = 0.0;
  std::function<Eigen::MatrixXd(const ParameterStack&)> builder_;
  std::function<Eigen::VectorXd(const ParameterStack&, int)> row_builder_;
};

// Numeric witness of geometric ergodicity:
//   sup-over-start TV(P^t delta_x, mu) <= m_const * rho^t, and
//   tau(a) <= ceil(c_mixing * log(m_const / a)).
struct ErgodicityCertificate {
  double m_const = 1.0;
  double rho = 0.0;
  double c_mixing = 0.0;

  long tau(double a) const;
};

// Unique stationary distribution of kernel at theta, with
// ||mu P - mu||_1 <= 1e-10. Throws ErgodicityError when the stationary
// distribution is not unique or the residual target cannot be met.
Eigen::VectorXd stationary_distribution(const FiniteKernel& kernel,
                                        const ParameterStack& theta);

// Smallest t such that max over start states x of
// TV(row x of P^t, mu) <= a, by exact dense matrix powering.
long mixing_time(const FiniteKernel& kernel, const ParameterStack& theta,
                 double a);

// Worst-case-start TV to stationarity for t = 0..T, by matrix powering.
std::vector<double> sup_tv_curve(const FiniteKernel& kernel,
                                 const ParameterStack& theta, long T);

// Fits a geometric ergodicity certificate: rho from the second-largest
// eigenvalue modulus (plus a 1e-6 safety margin), m_const the smallest
// constant dominating the measured sup-TV curve on 0..T_check, c_mixing
// scaled so the tau formula dominates measured mixing times at levels
// 2^-1 .. 2^-20. Throws NonGeometricError when rho >= 1 after the margin.
ErgodicityCertificate fit_ergodicity(const FiniteKernel& kernel,
                                     const ParameterStack& theta,
                                     long T_check);

// True when the certificate dominates the measured curve:
// curve[t] <= m_const * rho^t + atol for all t.
bool certificate_dominates(const ErgodicityCertificate& cert,
                           const std::vector<double>& sup_tv,
                           double atol = 1e-12);

struct KernelLipschitzPairResult {
  bool stationary_ok = false;    // TV(mu, mu') <= L ||theta - theta'||
  bool composition_ok = false;   // TV(dP, d'P') <= TV(d, d') + L ||...||
  double worst_margin = 0.0;     // min over checks of rhs - lhs
};

struct KernelLipschitzReport {
  std::vector<KernelLipschitzPairResult> pairs;
  bool all_pass = false;
  double worst_margin = 0.0;
};

// Checks Lipschitz regularity of the kernel in theta on the given pairs.
// Start distributions for the composition check are all point masses plus
// the uniform distribution; point masses suffice because TV is contracted
// by any fixed stochastic matrix and is convex in the start distribution.
KernelLipschitzReport validate_kernel_lipschitz(
    const FiniteKernel& kernel,
    const std::vector<std::pair<ParameterStack, ParameterStack>>& theta_pairs,
    double L_claim);

// Inverse-CDF draw over row `state` of the kernel at theta.
int draw_next(const FiniteKernel& kernel, const ParameterStack& theta,
              int state, Rng& rng);

}  // namespace amsa
