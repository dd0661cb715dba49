#include "amsa/parameter_stack.hpp"

#include <cmath>

namespace amsa {

std::vector<double> stack_norms(const ParameterStack& theta) {
  std::vector<double> out;
  out.reserve(theta.n_levels());
  for (const auto& b : theta.blocks()) out.push_back(b.norm());
  return out;
}

double stack_norm(const ParameterStack& theta) {
  double sq = 0.0;
  for (const auto& b : theta.blocks()) sq += b.squaredNorm();
  return std::sqrt(sq);
}

ParameterStack stack_axpy(double a, const ParameterStack& x,
                          const ParameterStack& y) {
  if (!x.same_shape(y))
    throw DimensionError("stack_axpy: x and y have different shapes");
  std::vector<Eigen::VectorXd> blocks;
  blocks.reserve(y.n_levels());
  for (int i = 0; i < y.n_levels(); ++i)
    blocks.push_back(y.blocks()[i] + a * x.blocks()[i]);
  return ParameterStack(std::move(blocks));
}

}  // namespace amsa
