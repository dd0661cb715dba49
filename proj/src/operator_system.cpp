#include "amsa/operator_system.hpp"

#include <sstream>

namespace amsa {

OperatorSystem::OperatorSystem(std::vector<int> dims, FiniteKernel kernel,
                               SystemMetadata metadata)
    : dims_(std::move(dims)),
      kernel_(std::move(kernel)),
      metadata_(std::move(metadata)) {
  if (dims_.empty())
    throw DimensionError("OperatorSystem: need at least one level");
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (dims_[i] <= 0)
      throw DimensionError("OperatorSystem: dims[" + std::to_string(i + 1) +
                           "] must be positive");
  }
}

Sample OperatorSystem::expand_sample(const ParameterStack& /*theta*/,
                                     int state, Rng& /*rng*/) const {
  return Sample{state, -1, -1};
}

Eigen::VectorXd OperatorSystem::mean_operator(
    int level, const ParameterStack& theta) const {
  check_level(level);
  check_theta(theta);
  const Eigen::VectorXd mu = stationary_distribution(kernel_, theta);
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(dims_[level - 1]);
  for (int x = 0; x < sample_space_size(); ++x)
    acc += mu(x) * evaluate(level, theta, Sample{x, -1, -1});
  return acc;
}

std::vector<Sample> OperatorSystem::sample_grid() const {
  std::vector<Sample> grid;
  grid.reserve(sample_space_size());
  for (int x = 0; x < sample_space_size(); ++x)
    grid.push_back(Sample{x, -1, -1});
  return grid;
}

ParameterStack OperatorSystem::default_init() const {
  return ParameterStack::zeros(dims_);
}

void OperatorSystem::check_theta(const ParameterStack& theta) const {
  if (theta.n_levels() != n_levels())
    throw DimensionError("theta has " + std::to_string(theta.n_levels()) +
                         " levels, system expects " +
                         std::to_string(n_levels()));
  for (int i = 1; i <= n_levels(); ++i) {
    const int got = static_cast<int>(theta.block(i).size());
    if (got != dims_[i - 1]) {
      std::ostringstream os;
      os << "theta level " << i << " has dim " << got << ", expected "
         << dims_[i - 1];
      throw DimensionError(os.str());
    }
  }
}

void OperatorSystem::check_level(int level) const {
  if (level < 1 || level > n_levels())
    throw RangeError("level " + std::to_string(level) + " outside 1.." +
                     std::to_string(n_levels()));
}

void OperatorSystem::check_state(int state) const {
  if (state < 0 || state >= sample_space_size())
    throw RangeError("state " + std::to_string(state) + " outside 0.." +
                     std::to_string(sample_space_size() - 1));
}

LevelVector evaluate_operator(const OperatorSystem& system, int level,
                              const ParameterStack& theta, int state) {
  system.check_level(level);
  system.check_state(state);
  system.check_theta(theta);
  return LevelVector{level, system.evaluate(level, theta, Sample{state, -1, -1})};
}

LevelVector evaluate_mean_operator(const OperatorSystem& system, int level,
                                   const ParameterStack& theta) {
  system.check_level(level);
  system.check_theta(theta);
  return LevelVector{level, system.mean_operator(level, theta)};
}

AffineBoundReport check_affine_bound(const OperatorSystem& system,
                                     const ParameterStack& theta, double L) {
  if (!(L > 0.0)) throw UsageError("check_affine_bound: L must be positive");
  system.check_theta(theta);

  double theta_norm_sum = 0.0;
  for (const auto& b : theta.blocks()) theta_norm_sum += b.norm();
  const double rhs = L * (theta_norm_sum + 1.0);

  const std::vector<Sample> grid = system.sample_grid();
  AffineBoundReport report;
  report.all_ok = true;
  report.ok.resize(system.n_levels());
  for (int i = 1; i <= system.n_levels(); ++i) {
    report.ok[i - 1].resize(grid.size());
    for (std::size_t x = 0; x < grid.size(); ++x) {
      const bool ok = system.evaluate(i, theta, grid[x]).norm() <= rhs;
      report.ok[i - 1][x] = ok;
      report.all_ok = report.all_ok && ok;
    }
  }
  return report;
}

}  // namespace amsa
