#include "amsa/kernel.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>

namespace amsa {

namespace {

constexpr double kRowSumTol = 1e-12;
constexpr double kDistSumTol = 1e-9;
constexpr double kStationaryResidual = 1e-10;
constexpr long kMixingCap = 1000000;
constexpr int kDensePowerLimit = 200;
// Sup-TV values below this are indistinguishable from accumulated
// round-off in the matrix powers.
constexpr double kTvNoiseFloor = 1e-13;

void check_distribution(const Eigen::VectorXd& u, const char* name) {
  for (int i = 0; i < u.size(); ++i) {
    if (!(u(i) >= 0.0)) {
      std::ostringstream os;
      os << "tv_distance: " << name << "[" << i << "] = " << u(i)
         << " is negative or NaN";
      throw ValidationError(os.str());
    }
  }
  const double sum = u.sum();
  if (std::abs(sum - 1.0) > kDistSumTol) {
    std::ostringstream os;
    os << "tv_distance: " << name << " sums to " << sum << ", expected 1";
    throw ValidationError(os.str());
  }
}

void check_stochastic_rows(const Eigen::MatrixXd& P, const char* what) {
  for (int i = 0; i < P.rows(); ++i) {
    double sum = 0.0;
    for (int j = 0; j < P.cols(); ++j) {
      if (!(P(i, j) >= 0.0)) {
        std::ostringstream os;
        os << what << ": row " << i << " has negative or NaN entry at column "
           << j << " (" << P(i, j) << ")";
        throw ValidationError(os.str());
      }
      sum += P(i, j);
    }
    if (std::abs(sum - 1.0) > kRowSumTol) {
      std::ostringstream os;
      os << what << ": row " << i << " sums to " << sum << ", expected 1";
      throw ValidationError(os.str());
    }
  }
}

void check_row_stochastic(const Eigen::VectorXd& row, int state) {
  double sum = 0.0;
  for (int j = 0; j < row.size(); ++j) {
    if (!(row(j) >= 0.0)) {
      std::ostringstream os;
      os << "kernel row " << state << ": negative or NaN entry at column " << j;
      throw ValidationError(os.str());
    }
    sum += row(j);
  }
  if (std::abs(sum - 1.0) > kRowSumTol) {
    std::ostringstream os;
    os << "kernel row " << state << " sums to " << sum << ", expected 1";
    throw ValidationError(os.str());
  }
}

double clamp01(double x) { return std::min(1.0, std::max(0.0, x)); }

}  // namespace

double tv_distance(const Eigen::VectorXd& u1, const Eigen::VectorXd& u2) {
  if (u1.size() != u2.size())
    throw DimensionError("tv_distance: distributions of different size");
  check_distribution(u1, "u1");
  check_distribution(u2, "u2");
  return 0.5 * (u1 - u2).cwiseAbs().sum();
}

FiniteKernel FiniteKernel::fixed(Eigen::MatrixXd P) {
  if (P.rows() != P.cols() || P.rows() < 1)
    throw DimensionError("FiniteKernel::fixed: matrix must be square");
  check_stochastic_rows(P, "FiniteKernel::fixed");
  FiniteKernel k;
  k.m_ = static_cast<int>(P.rows());
  k.family_ = Family::fixed;
  k.P_a_ = std::move(P);
  return k;
}

FiniteKernel FiniteKernel::theta_mixture(Eigen::MatrixXd P_a,
                                         Eigen::MatrixXd P_b, double epsilon,
                                         Eigen::VectorXd clamp_weights,
                                         double clamp_bias) {
  if (P_a.rows() != P_a.cols() || P_a.rows() < 1 || P_b.rows() != P_a.rows() ||
      P_b.cols() != P_a.cols())
    throw DimensionError("FiniteKernel::theta_mixture: base matrices must be "
                         "square and equally sized");
  if (epsilon < 0.0 || epsilon > 1.0)
    throw ValidationError("FiniteKernel::theta_mixture: epsilon must be in [0,1]");
  check_stochastic_rows(P_a, "FiniteKernel::theta_mixture (P_a)");
  check_stochastic_rows(P_b, "FiniteKernel::theta_mixture (P_b)");
  FiniteKernel k;
  k.m_ = static_cast<int>(P_a.rows());
  k.family_ = Family::theta_mixture;
  k.P_a_ = std::move(P_a);
  k.P_b_ = std::move(P_b);
  k.epsilon_ = epsilon;
  k.clamp_weights_ = std::move(clamp_weights);
  k.clamp_bias_ = clamp_bias;
  return k;
}

FiniteKernel FiniteKernel::custom(
    int m, std::function<Eigen::MatrixXd(const ParameterStack&)> builder,
    std::function<Eigen::VectorXd(const ParameterStack&, int)> row_builder) {
  if (m < 1) throw DimensionError("FiniteKernel::custom: m must be >= 1");
  if (!builder) throw UsageError("FiniteKernel::custom: builder required");
  FiniteKernel k;
  k.m_ = m;
  k.family_ = Family::custom;
  k.builder_ = std::move(builder);
  k.row_builder_ = std::move(row_builder);
  return k;
}

double FiniteKernel::mixture_coefficient(const ParameterStack& theta) const {
  if (family_ != Family::theta_mixture)
    throw UsageError("mixture_coefficient: kernel is not a theta mixture");
  const Eigen::VectorXd flat = theta.flatten();
  if (flat.size() != clamp_weights_.size())
    throw DimensionError("mixture_coefficient: clamp weights expect dim " +
                         std::to_string(clamp_weights_.size()) + ", got " +
                         std::to_string(flat.size()));
  return clamp01(clamp_weights_.dot(flat) + clamp_bias_);
}

Eigen::MatrixXd FiniteKernel::matrix(const ParameterStack& theta) const {
  switch (family_) {
    case Family::fixed:
      return P_a_;
    case Family::theta_mixture: {
      const double w = epsilon_ * mixture_coefficient(theta);
      return (1.0 - w) * P_a_ + w * P_b_;
    }
    case Family::custom: {
      Eigen::MatrixXd P = builder_(theta);
      if (P.rows() != m_ || P.cols() != m_)
        throw DimensionError("custom kernel builder returned wrong shape");
      check_stochastic_rows(P, "custom kernel");
      return P;
    }
  }
  throw UsageError("FiniteKernel: unknown family");
}

Eigen::VectorXd FiniteKernel::row(const ParameterStack& theta,
                                  int state) const {
  if (state < 0 || state >= m_)
    throw RangeError("FiniteKernel::row: state " + std::to_string(state) +
                     " outside 0.." + std::to_string(m_ - 1));
  switch (family_) {
    case Family::fixed:
      return P_a_.row(state);
    case Family::theta_mixture: {
      const double w = epsilon_ * mixture_coefficient(theta);
      return ((1.0 - w) * P_a_.row(state) + w * P_b_.row(state)).transpose();
    }
    case Family::custom: {
      Eigen::VectorXd r = row_builder_ ? row_builder_(theta, state)
                                       : Eigen::VectorXd(builder_(theta).row(state));
      if (r.size() != m_)
        throw DimensionError("custom kernel row builder returned wrong size");
      check_row_stochastic(r, state);
      return r;
    }
  }
  throw UsageError("FiniteKernel: unknown family");
}

long ErgodicityCertificate::tau(double a) const {
  if (!(a > 0.0)) throw RangeError("ErgodicityCertificate::tau: level must be > 0");
  const double v = c_mixing * std::log(m_const / a);
  if (!(v > 0.0)) return 0;
  return static_cast<long>(std::ceil(v));
}

Eigen::VectorXd stationary_distribution(const FiniteKernel& kernel,
                                        const ParameterStack& theta) {
  const Eigen::MatrixXd P = kernel.matrix(theta);
  const int m = kernel.size();

  // Unique stationary distribution requires rank(P^T - I) == m - 1.
  Eigen::MatrixXd A = P.transpose() - Eigen::MatrixXd::Identity(m, m);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
  lu.setThreshold(1e-10);
  if (lu.rank() < m - 1)
    throw ErgodicityError(
        "stationary_distribution: stationary distribution is not unique "
        "(rank deficiency " + std::to_string(m - lu.rank()) + ")");

  // Solve [P^T - I; 1^T] mu = [0; 1] in the least-squares sense.
  Eigen::MatrixXd M(m + 1, m);
  M.topRows(m) = A;
  M.row(m).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m + 1);
  rhs(m) = 1.0;
  Eigen::VectorXd mu = M.colPivHouseholderQr().solve(rhs);

  mu = mu.cwiseMax(0.0);
  const double sum = mu.sum();
  if (sum <= 0.0)
    throw ErgodicityError("stationary_distribution: solver returned a "
                          "non-positive vector");
  mu /= sum;

  double residual = ((mu.transpose() * P).transpose() - mu).cwiseAbs().sum();
  long iters = 0;
  while (residual > kStationaryResidual && iters < 100000) {
    mu = (mu.transpose() * P).transpose();
    mu = mu.cwiseMax(0.0);
    mu /= mu.sum();
    residual = ((mu.transpose() * P).transpose() - mu).cwiseAbs().sum();
    ++iters;
  }
  if (residual > kStationaryResidual) {
    std::ostringstream os;
    os << "stationary_distribution: residual " << residual
       << " above 1e-10 after refinement cap";
    throw ErgodicityError(os.str());
  }
  return mu;
}

std::vector<double> sup_tv_curve(const FiniteKernel& kernel,
                                 const ParameterStack& theta, long T) {
  const int m = kernel.size();
  if (m > kDensePowerLimit)
    throw UsageError("sup_tv_curve: dense powering limited to m <= 200");
  const Eigen::MatrixXd P = kernel.matrix(theta);
  const Eigen::VectorXd mu = stationary_distribution(kernel, theta);

  std::vector<double> curve;
  curve.reserve(T + 1);
  Eigen::MatrixXd D = Eigen::MatrixXd::Identity(m, m);
  for (long t = 0; t <= T; ++t) {
    double sup = 0.0;
    for (int x = 0; x < m; ++x)
      sup = std::max(sup, 0.5 * (D.row(x).transpose() - mu).cwiseAbs().sum());
    curve.push_back(sup);
    if (t < T) D = D * P;
  }
  return curve;
}

long mixing_time(const FiniteKernel& kernel, const ParameterStack& theta,
                 double a) {
  if (!(a > 0.0 && a < 1.0))
    throw RangeError("mixing_time: level a must be in (0,1)");
  const int m = kernel.size();
  if (m > kDensePowerLimit)
    throw UsageError("mixing_time: dense powering limited to m <= 200");
  const Eigen::MatrixXd P = kernel.matrix(theta);
  const Eigen::VectorXd mu = stationary_distribution(kernel, theta);

  Eigen::MatrixXd D = Eigen::MatrixXd::Identity(m, m);
  double sup = 0.0;
  for (long t = 0; t <= kMixingCap; ++t) {
    sup = 0.0;
    for (int x = 0; x < m; ++x)
      sup = std::max(sup, 0.5 * (D.row(x).transpose() - mu).cwiseAbs().sum());
    if (sup <= a) return t;
    D = D * P;
  }
  std::ostringstream os;
  os << "mixing_time: cap " << kMixingCap << " exceeded, last sup-TV " << sup;
  throw NonConvergenceError(os.str());
}

ErgodicityCertificate fit_ergodicity(const FiniteKernel& kernel,
                                     const ParameterStack& theta,
                                     long T_check) {
  const int m = kernel.size();
  if (m > kDensePowerLimit)
    throw UsageError("fit_ergodicity: dense powering limited to m <= 200");
  if (T_check < 1) throw UsageError("fit_ergodicity: T_check must be >= 1");

  const Eigen::MatrixXd P = kernel.matrix(theta);
  // Second-largest eigenvalue modulus, plus a margin keeping the
  // certificate strictly geometric under floating-point error.
  Eigen::EigenSolver<Eigen::MatrixXd> es(P, /*computeEigenvectors=*/false);
  std::vector<double> moduli(m);
  for (int i = 0; i < m; ++i) moduli[i] = std::abs(es.eigenvalues()(i));
  std::sort(moduli.begin(), moduli.end(), std::greater<double>());
  double rho = (m >= 2 ? moduli[1] : 0.0) + 1e-6;
  if (rho >= 1.0)
    throw NonGeometricError(
        "fit_ergodicity: second eigenvalue modulus is 1 within margin; "
        "the chain does not mix geometrically");

  const std::vector<double> curve = sup_tv_curve(kernel, theta, T_check);

  double m_const = 1.0;
  double decay = 1.0;  // rho^t
  for (long t = 0; t <= T_check; ++t) {
    if (curve[t] > kTvNoiseFloor && decay > 0.0)
      m_const = std::max(m_const, curve[t] / decay);
    decay *= rho;
  }

  ErgodicityCertificate cert{m_const, rho, 1.0 / std::log(1.0 / rho)};

  // Scale c_mixing until the tau formula dominates measured mixing times
  // at levels 2^-1 .. 2^-20. The geometric bound already implies this;
  // the loop only absorbs rounding at the boundaries.
  std::vector<std::pair<double, long>> measured;
  for (int k = 1; k <= 20; ++k) {
    const double a = std::ldexp(1.0, -k);
    measured.emplace_back(a, mixing_time(kernel, theta, a));
  }
  for (int guard = 0; guard < 200; ++guard) {
    bool dominated = true;
    for (const auto& [a, tau_meas] : measured) {
      if (cert.tau(a) < tau_meas) {
        dominated = false;
        break;
      }
    }
    if (dominated) break;
    cert.c_mixing *= 1.1;
  }
  return cert;
}

bool certificate_dominates(const ErgodicityCertificate& cert,
                           const std::vector<double>& sup_tv, double atol) {
  double decay = 1.0;
  for (std::size_t t = 0; t < sup_tv.size(); ++t) {
    if (sup_tv[t] > cert.m_const * decay + atol) return false;
    decay *= cert.rho;
  }
  return true;
}

KernelLipschitzReport validate_kernel_lipschitz(
    const FiniteKernel& kernel,
    const std::vector<std::pair<ParameterStack, ParameterStack>>& theta_pairs,
    double L_claim) {
  if (theta_pairs.empty())
    throw UsageError("validate_kernel_lipschitz: need at least one pair");
  const int m = kernel.size();

  // Canonical start distributions: all point masses plus uniform.
  std::vector<Eigen::VectorXd> starts;
  for (int x = 0; x < m; ++x) {
    Eigen::VectorXd d = Eigen::VectorXd::Zero(m);
    d(x) = 1.0;
    starts.push_back(std::move(d));
  }
  starts.push_back(Eigen::VectorXd::Constant(m, 1.0 / m));

  KernelLipschitzReport report;
  report.worst_margin = std::numeric_limits<double>::infinity();
  report.all_pass = true;

  for (const auto& [theta, theta_p] : theta_pairs) {
    const double dist = std::sqrt(
        std::inner_product(theta.blocks().begin(), theta.blocks().end(),
                           theta_p.blocks().begin(), 0.0,
                           std::plus<>(),
                           [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
                             return (a - b).squaredNorm();
                           }));
    const double budget = L_claim * dist;

    KernelLipschitzPairResult r;
    double margin = std::numeric_limits<double>::infinity();

    const Eigen::VectorXd mu1 = stationary_distribution(kernel, theta);
    const Eigen::VectorXd mu2 = stationary_distribution(kernel, theta_p);
    const double tv_mu = tv_distance(mu1, mu2);
    r.stationary_ok = tv_mu <= budget + 1e-12;
    margin = std::min(margin, budget - tv_mu);

    const Eigen::MatrixXd P1 = kernel.matrix(theta);
    const Eigen::MatrixXd P2 = kernel.matrix(theta_p);
    r.composition_ok = true;
    for (const auto& d : starts) {
      for (const auto& dh : starts) {
        const double lhs =
            0.5 * ((d.transpose() * P1) - (dh.transpose() * P2)).cwiseAbs().sum();
        const double rhs = tv_distance(d, dh) + budget;
        if (lhs > rhs + 1e-12) r.composition_ok = false;
        margin = std::min(margin, rhs - lhs);
      }
    }

    r.worst_margin = margin;
    report.worst_margin = std::min(report.worst_margin, margin);
    report.all_pass = report.all_pass && r.stationary_ok && r.composition_ok;
    report.pairs.push_back(r);
  }
  return report;
}

int draw_next(const FiniteKernel& kernel, const ParameterStack& theta,
              int state, Rng& rng) {
  const Eigen::VectorXd row = kernel.row(theta, state);
  check_row_stochastic(row, state);
  const double u = rng.next_double();
  double cum = 0.0;
  for (int j = 0; j < row.size(); ++j) {
    cum += row(j);
    if (u < cum) return j;
  }
  return static_cast<int>(row.size()) - 1;
}

}  // namespace amsa
