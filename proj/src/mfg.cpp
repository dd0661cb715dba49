#include "amsa/mfg.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "amsa/kernel.hpp"

namespace amsa {

namespace {

Eigen::VectorXd simplex_row(Rng& rng, int m, double floor_weight) {
  Eigen::VectorXd row(m);
  for (int j = 0; j < m; ++j)
    row(j) = -std::log(std::max(rng.next_double(), 1e-300));
  row /= row.sum();
  return (1.0 - floor_weight) * row +
         floor_weight * Eigen::VectorXd::Constant(m, 1.0 / m);
}

int inverse_cdf_draw(const Eigen::VectorXd& dist, Rng& rng) {
  const double u = rng.next_double();
  double cum = 0.0;
  for (int j = 0; j < dist.size(); ++j) {
    cum += dist(j);
    if (u < cum) return j;
  }
  return static_cast<int>(dist.size()) - 1;
}

// theta layout: block 1 = logits (S*A, row-major), block 2 = u (S),
// block 3 = (V, Jhat) (S+1).
Eigen::MatrixXd logits_of(const ParameterStack& theta, int S, int A) {
  Eigen::MatrixXd m(S, A);
  const Eigen::VectorXd& v = theta.block(1);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) m(s, a) = v(s * A + a);
  return m;
}

Eigen::VectorXd softmax_row(const Eigen::VectorXd& logits) {
  const double mx = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - mx).exp();
  return e / e.sum();
}

}  // namespace

void project_to_simplex(Eigen::VectorXd& v) {
  const int n = static_cast<int>(v.size());
  std::vector<double> sorted(v.data(), v.data() + n);
  std::sort(sorted.begin(), sorted.end(), std::greater<double>());
  double cum = 0.0;
  double tau = 0.0;
  int rho = 0;
  for (int k = 0; k < n; ++k) {
    cum += sorted[k];
    const double candidate = (cum - 1.0) / (k + 1);
    if (sorted[k] - candidate > 0.0) {
      rho = k + 1;
      tau = candidate;
    }
  }
  (void)rho;
  for (int k = 0; k < n; ++k) v(k) = std::max(v(k) - tau, 0.0);
}

MfgSpec make_random_mfg(int n_states, int n_actions, std::uint64_t seed,
                        double ergodicity_floor) {
  if (n_states < 1 || n_actions < 1)
    throw UsageError("make_random_mfg: need S >= 1 and A >= 1");
  if (!(ergodicity_floor >= 0.0 && ergodicity_floor <= 1.0))
    throw UsageError("make_random_mfg: floor must lie in [0, 1]");
  MfgSpec spec;
  spec.n_states = n_states;
  spec.n_actions = n_actions;
  spec.ergodicity_floor = ergodicity_floor;
  spec.seed = seed;

  Rng rng(seed);
  spec.transition.resize(n_actions);
  for (int a = 0; a < n_actions; ++a) {
    spec.transition[a].resize(n_states, n_states);
    for (int s = 0; s < n_states; ++s)
      spec.transition[a].row(s) =
          simplex_row(rng, n_states, ergodicity_floor).transpose();
  }
  spec.reward.resize(n_states, n_actions);
  for (int s = 0; s < n_states; ++s)
    for (int a = 0; a < n_actions; ++a)
      spec.reward(s, a) = rng.next_double();
  return spec;
}

Eigen::MatrixXd softmax_policy(const Eigen::MatrixXd& theta) {
  if (!theta.allFinite())
    throw ValidationError("softmax_policy: non-finite logits");
  Eigen::MatrixXd pi(theta.rows(), theta.cols());
  for (int s = 0; s < theta.rows(); ++s)
    pi.row(s) = softmax_row(theta.row(s).transpose()).transpose();
  return pi;
}

MfgSystem::MfgSystem(MfgSpec spec)
    : OperatorSystem(
          {spec.n_states * spec.n_actions, spec.n_states, spec.n_states + 1},
          FiniteKernel::custom(
              spec.n_states,
              // Both builders close over a copy of the tensor; the system's
              // own spec_ is moved into place afterwards.
              [spec](const ParameterStack& theta) {
                const int S = spec.n_states;
                const int A = spec.n_actions;
                const Eigen::MatrixXd pi =
                    softmax_policy(logits_of(theta, S, A));
                const Eigen::VectorXd& u = theta.block(2);
                Eigen::MatrixXd P = Eigen::MatrixXd::Zero(S, S);
                for (int s = 0; s < S; ++s)
                  for (int a = 0; a < A; ++a) {
                    Eigen::VectorXd row = spec.transition[a].row(s).transpose();
                    if (spec.u_coupling > 0.0)
                      row = (1.0 - spec.u_coupling) * row + spec.u_coupling * u;
                    P.row(s) += pi(s, a) * row.transpose();
                  }
                return P;
              },
              [spec](const ParameterStack& theta, int s) {
                const int S = spec.n_states;
                const int A = spec.n_actions;
                Eigen::VectorXd logit_row(A);
                for (int a = 0; a < A; ++a)
                  logit_row(a) = theta.block(1)(s * A + a);
                const Eigen::VectorXd pi_row = softmax_row(logit_row);
                const Eigen::VectorXd& u = theta.block(2);
                Eigen::VectorXd row = Eigen::VectorXd::Zero(S);
                for (int a = 0; a < A; ++a) {
                  Eigen::VectorXd pa = spec.transition[a].row(s).transpose();
                  if (spec.u_coupling > 0.0)
                    pa = (1.0 - spec.u_coupling) * pa + spec.u_coupling * u;
                  row += pi_row(a) * pa;
                }
                return row;
              })),
      spec_(std::move(spec)) {
  if (spec_.reward.minCoeff() < 0.0 || spec_.reward.maxCoeff() > 1.0)
    throw ValidationError("MfgSystem: rewards must lie in [0, 1]");
}

Eigen::VectorXd MfgSystem::transition_row(int state, int action,
                                          const Eigen::VectorXd& u) const {
  Eigen::VectorXd row = spec_.transition[action].row(state).transpose();
  if (spec_.u_coupling > 0.0)
    row = (1.0 - spec_.u_coupling) * row + spec_.u_coupling * u;
  return row;
}

Eigen::MatrixXd MfgSystem::induced_kernel(const Eigen::MatrixXd& policy,
                                          const Eigen::VectorXd& u) const {
  const int S = spec_.n_states;
  const int A = spec_.n_actions;
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(S, S);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a)
      P.row(s) += policy(s, a) * transition_row(s, a, u).transpose();
  return P;
}

Sample MfgSystem::expand_sample(const ParameterStack& theta, int state,
                                Rng& rng) const {
  check_state(state);
  const int A = spec_.n_actions;
  Eigen::VectorXd logit_row(A);
  for (int a = 0; a < A; ++a) logit_row(a) = theta.block(1)(state * A + a);
  const int action = inverse_cdf_draw(softmax_row(logit_row), rng);
  const int next =
      inverse_cdf_draw(transition_row(state, action, theta.block(2)), rng);
  return Sample{state, action, next};
}

Eigen::VectorXd MfgSystem::evaluate(int level, const ParameterStack& theta,
                                    const Sample& x) const {
  check_level(level);
  check_state(x.state);
  if (x.action < 0 || x.next_state < 0)
    throw UsageError("MfgSystem::evaluate: sample must carry (state, action, "
                     "next_state); use expand_sample or sample_support");
  const int S = spec_.n_states;
  const int A = spec_.n_actions;
  const int s = x.state, a = x.action, sn = x.next_state;
  const Eigen::VectorXd& u = theta.block(2);
  const Eigen::VectorXd& vj = theta.block(3);
  const double jhat = vj(S);
  const double td = spec_.reward(s, a) - jhat + vj(sn) - vj(s);

  switch (level) {
    case 1: {
      Eigen::VectorXd logit_row(A);
      for (int k = 0; k < A; ++k) logit_row(k) = theta.block(1)(s * A + k);
      const Eigen::VectorXd pi_row = softmax_row(logit_row);
      Eigen::VectorXd g = Eigen::VectorXd::Zero(S * A);
      for (int k = 0; k < A; ++k)
        g(s * A + k) = -td * ((k == a ? 1.0 : 0.0) - pi_row(k));
      return g;
    }
    case 2: {
      Eigen::VectorXd g = u;
      g(s) -= 1.0;
      return g;
    }
    case 3: {
      Eigen::VectorXd g = Eigen::VectorXd::Zero(S + 1);
      g(s) = -td;
      g(S) = jhat - spec_.reward(s, a);
      return g;
    }
    default:
      throw RangeError("MfgSystem: level outside 1..3");
  }
}

Eigen::VectorXd MfgSystem::mean_operator(int level,
                                         const ParameterStack& theta) const {
  check_level(level);
  check_theta(theta);
  const int S = spec_.n_states;
  const int A = spec_.n_actions;
  const Eigen::MatrixXd pi = softmax_policy(logits_of(theta, S, A));
  const Eigen::VectorXd& u = theta.block(2);
  const Eigen::VectorXd& vj = theta.block(3);
  const double jhat = vj(S);
  const Eigen::VectorXd v = stationary_distribution(kernel(), theta);

  switch (level) {
    case 1: {
      Eigen::VectorXd g = Eigen::VectorXd::Zero(S * A);
      for (int s = 0; s < S; ++s) {
        for (int a = 0; a < A; ++a) {
          const Eigen::VectorXd row = transition_row(s, a, u);
          const double td =
              spec_.reward(s, a) - jhat + row.dot(vj.head(S)) - vj(s);
          const double w = v(s) * pi(s, a) * td;
          for (int k = 0; k < A; ++k)
            g(s * A + k) -= w * ((k == a ? 1.0 : 0.0) - pi(s, k));
        }
      }
      return g;
    }
    case 2:
      return u - v;
    case 3: {
      Eigen::VectorXd g = Eigen::VectorXd::Zero(S + 1);
      double avg_reward = 0.0;
      for (int s = 0; s < S; ++s) {
        double td_bar = 0.0;
        for (int a = 0; a < A; ++a) {
          const Eigen::VectorXd row = transition_row(s, a, u);
          td_bar += pi(s, a) * (spec_.reward(s, a) - jhat +
                                row.dot(vj.head(S)) - vj(s));
          avg_reward += v(s) * pi(s, a) * spec_.reward(s, a);
        }
        g(s) = -v(s) * td_bar;
      }
      g(S) = jhat - avg_reward;
      return g;
    }
    default:
      throw RangeError("MfgSystem: level outside 1..3");
  }
}

std::vector<Sample> MfgSystem::sample_grid() const {
  std::vector<Sample> grid;
  grid.reserve(static_cast<std::size_t>(spec_.n_states) * spec_.n_actions *
               spec_.n_states);
  for (int s = 0; s < spec_.n_states; ++s)
    for (int a = 0; a < spec_.n_actions; ++a)
      for (int sn = 0; sn < spec_.n_states; ++sn)
        grid.push_back(Sample{s, a, sn});
  return grid;
}

ParameterStack MfgSystem::default_init() const {
  const int S = spec_.n_states;
  std::vector<Eigen::VectorXd> blocks;
  blocks.push_back(Eigen::VectorXd::Zero(S * spec_.n_actions));
  blocks.push_back(Eigen::VectorXd::Constant(S, 1.0 / S));
  blocks.push_back(Eigen::VectorXd::Zero(S + 1));
  return ParameterStack(std::move(blocks));
}

void MfgSystem::project(int level, Eigen::VectorXd& values) const {
  if (level == 2) project_to_simplex(values);
}

std::vector<std::pair<std::string, double>> MfgSystem::trajectory_metrics(
    const ParameterStack& theta) const {
  Eigen::VectorXd u = theta.block(2);
  project_to_simplex(u);
  const auto [grad_norm, gap] =
      mfg_metrics(logits_of(theta, spec_.n_states, spec_.n_actions), u, spec_);
  return {{"grad_norm", grad_norm}, {"meanfield_gap", gap}};
}

std::shared_ptr<const MfgSystem> mfg_operator_system(const MfgSpec& spec) {
  return std::make_shared<MfgSystem>(spec);
}

std::pair<double, double> mfg_metrics(const Eigen::MatrixXd& theta_logits,
                                      const Eigen::VectorXd& u,
                                      const MfgSpec& spec) {
  const int S = spec.n_states;
  const int A = spec.n_actions;
  if (theta_logits.rows() != S || theta_logits.cols() != A)
    throw DimensionError("mfg_metrics: logits must be S x A");
  if (u.size() != S) throw DimensionError("mfg_metrics: u must have S entries");
  const double u_sum_err = std::abs(u.sum() - 1.0);
  if (u.minCoeff() < -1e-9 || u_sum_err > 1e-6)
    throw ValidationError("mfg_metrics: u must lie on the probability simplex");

  const MfgSystem sys(spec);
  const Eigen::MatrixXd pi = softmax_policy(theta_logits);
  const Eigen::MatrixXd P = sys.induced_kernel(pi, u);
  const FiniteKernel chain = FiniteKernel::fixed(P);
  const Eigen::VectorXd v =
      stationary_distribution(chain, ParameterStack::zeros({1}));

  Eigen::VectorXd r_bar(S);
  for (int s = 0; s < S; ++s) {
    double acc = 0.0;
    for (int a = 0; a < A; ++a) acc += pi(s, a) * spec.reward(s, a);
    r_bar(s) = acc;
  }
  const double J = v.dot(r_bar);

  // Differential value function: (I - P + 1 v^T) V = r_bar - J 1 yields the
  // unique solution with v . V = 0.
  Eigen::MatrixXd M = Eigen::MatrixXd::Identity(S, S) - P;
  M.rowwise() += v.transpose();
  Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
  lu.setThreshold(1e-12);
  if (!lu.isInvertible())
    throw DegeneracyError("mfg_metrics: value-function system is singular");
  const Eigen::VectorXd V =
      lu.solve(r_bar - Eigen::VectorXd::Constant(S, J));

  double grad_sq = 0.0;
  for (int s = 0; s < S; ++s) {
    Eigen::VectorXd q(A);
    for (int a = 0; a < A; ++a) {
      const Eigen::VectorXd row = sys.transition_row(s, a, u);
      q(a) = spec.reward(s, a) - J + row.dot(V) - V(s);
    }
    const double mixed = pi.row(s).dot(q);
    for (int a = 0; a < A; ++a) {
      const double g = v(s) * pi(s, a) * (q(a) - mixed);
      grad_sq += g * g;
    }
  }
  return {std::sqrt(grad_sq), (u - v).norm()};
}

}  // namespace amsa
