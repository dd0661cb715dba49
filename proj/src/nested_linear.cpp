#include "amsa/nested_linear.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <sstream>

#include "amsa/diagnostics.hpp"

namespace amsa {

namespace {

Eigen::MatrixXd random_gaussian(Rng& rng, int rows, int cols) {
  Eigen::MatrixXd G(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) G(i, j) = rng.next_gaussian();
  return G;
}

// Haar-ish orthogonal matrix: QR of a Gaussian with positive R diagonal.
Eigen::MatrixXd random_orthogonal(Rng& rng, int d) {
  const Eigen::MatrixXd G = random_gaussian(rng, d, d);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(G);
  Eigen::MatrixXd Q = qr.householderQ();
  const Eigen::MatrixXd R = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < d; ++j)
    if (R(j, j) < 0.0) Q.col(j) = -Q.col(j);
  return Q;
}

Eigen::VectorXd random_simplex_row(Rng& rng, int m, double floor_weight) {
  Eigen::VectorXd row(m);
  for (int j = 0; j < m; ++j)
    row(j) = -std::log(std::max(rng.next_double(), 1e-300));
  row /= row.sum();
  return (1.0 - floor_weight) * row +
         floor_weight * Eigen::VectorXd::Constant(m, 1.0 / m);
}

Eigen::MatrixXd random_ergodic_matrix(Rng& rng, int m, double floor_weight) {
  Eigen::MatrixXd P(m, m);
  for (int i = 0; i < m; ++i)
    P.row(i) = random_simplex_row(rng, m, floor_weight).transpose();
  return P;
}

FiniteKernel build_kernel(const NestedLinearConfig& config,
                          const std::vector<int>& dims, Rng& rng) {
  const int m = config.kernel_states;
  if (m < 1) throw UsageError("make_nested_linear: kernel_states must be >= 1");
  if (config.kernel_kind == "fixed")
    return FiniteKernel::fixed(random_ergodic_matrix(rng, m, config.kernel_floor));
  if (config.kernel_kind == "iid") {
    const Eigen::VectorXd mu = random_simplex_row(rng, m, config.kernel_floor);
    Eigen::MatrixXd P(m, m);
    for (int i = 0; i < m; ++i) P.row(i) = mu.transpose();
    return FiniteKernel::fixed(P);
  }
  if (config.kernel_kind == "mixture") {
    const Eigen::MatrixXd P_a = random_ergodic_matrix(rng, m, config.kernel_floor);
    const Eigen::MatrixXd P_b = random_ergodic_matrix(rng, m, config.kernel_floor);
    int total = 0;
    for (int d : dims) total += d;
    Eigen::VectorXd w(total);
    for (int k = 0; k < total; ++k) w(k) = rng.next_gaussian();
    w /= w.norm();  // 1-Lipschitz clamp argument
    return FiniteKernel::theta_mixture(P_a, P_b, /*epsilon=*/0.1, w,
                                       /*bias=*/0.5);
  }
  throw UsageError("make_nested_linear: kernel_kind must be fixed, iid or "
                   "mixture (got '" + config.kernel_kind + "')");
}

double spectral_norm(const Eigen::MatrixXd& M) {
  return M.jacobiSvd().singularValues()(0);
}

}  // namespace

NestedLinearSystem::NestedLinearSystem(NestedLinearSpec spec,
                                       FiniteKernel kernel,
                                       SystemMetadata metadata)
    : OperatorSystem(spec.dims, std::move(kernel), std::move(metadata)),
      spec_(std::move(spec)) {
  noise_mean_free_ =
      this->kernel().theta_independent() || spec_.noise_scale == 0.0;
}

Eigen::VectorXd NestedLinearSystem::evaluate(int level,
                                             const ParameterStack& theta,
                                             const Sample& x) const {
  check_level(level);
  check_state(x.state);
  Eigen::VectorXd out = spec_.b[level - 1];
  for (int j = 0; j < n_levels(); ++j)
    out += spec_.A[level - 1][j] * theta.block(j + 1);
  out += spec_.noise[level - 1].row(x.state).transpose();
  return out;
}

Eigen::VectorXd NestedLinearSystem::mean_operator(
    int level, const ParameterStack& theta) const {
  if (!noise_mean_free_) return OperatorSystem::mean_operator(level, theta);
  check_level(level);
  check_theta(theta);
  Eigen::VectorXd out = spec_.b[level - 1];
  for (int j = 0; j < n_levels(); ++j)
    out += spec_.A[level - 1][j] * theta.block(j + 1);
  return out;
}

std::optional<AffineView> NestedLinearSystem::affine_view() const {
  if (!noise_mean_free_) return std::nullopt;
  return AffineView{spec_.A, spec_.b};
}

std::shared_ptr<const NestedLinearSystem> make_nested_linear(
    const NestedLinearConfig& config) {
  if (!(config.delta_target > 0.0 && config.delta_target <= 1.0))
    throw UsageError("make_nested_linear: delta_target must lie in (0, 1]");
  if (config.coupling_scale < 0.0)
    throw UsageError("make_nested_linear: coupling_scale must be >= 0");
  if (config.sigma < 0.0)
    throw UsageError("make_nested_linear: sigma must be >= 0");
  const int n = config.n_levels;
  if (n < 1) throw UsageError("make_nested_linear: need N >= 1");
  std::vector<int> dims = config.dims;
  if (dims.empty()) dims.assign(n, 3);
  if (static_cast<int>(dims.size()) != n)
    throw DimensionError("make_nested_linear: dims must have N entries");
  for (int d : dims)
    if (d < 1) throw DimensionError("make_nested_linear: dims must be positive");

  Rng rng(config.seed);
  std::string last_reason;
  for (int attempt = 0; attempt < 20; ++attempt) {
    NestedLinearSpec spec;
    spec.n_levels = n;
    spec.dims = dims;
    spec.coupling_scale = config.coupling_scale;
    spec.noise_scale = config.sigma;

    spec.A.resize(n);
    for (int i = 0; i < n; ++i) {
      spec.A[i].resize(n);
      for (int j = 0; j < n; ++j) {
        if (i == j) {
          const Eigen::MatrixXd Q = random_orthogonal(rng, dims[i]);
          Eigen::VectorXd eigs(dims[i]);
          for (int k = 0; k < dims[i]; ++k)
            eigs(k) = rng.next_uniform(config.delta_target,
                                       2.0 * config.delta_target);
          spec.A[i][j] = Q.transpose() * eigs.asDiagonal() * Q;
        } else if (config.coupling_scale > 0.0) {
          Eigen::MatrixXd G = random_gaussian(rng, dims[i], dims[j]);
          spec.A[i][j] = G * (config.coupling_scale / spectral_norm(G));
        } else {
          spec.A[i][j] = Eigen::MatrixXd::Zero(dims[i], dims[j]);
        }
      }
    }

    spec.b.resize(n);
    for (int i = 0; i < n; ++i) {
      spec.b[i].resize(dims[i]);
      for (int k = 0; k < dims[i]; ++k)
        spec.b[i](k) = rng.next_uniform(-1.0, 1.0);
    }

    FiniteKernel kernel = build_kernel(config, dims, rng);

    // Noise rows with exact zero mean under the stationary distribution of
    // the kernel at theta = 0, scaled so the largest row norm equals sigma.
    const Eigen::VectorXd mu0 =
        stationary_distribution(kernel, ParameterStack::zeros(dims));
    spec.noise.resize(n);
    for (int i = 0; i < n; ++i) {
      Eigen::MatrixXd G = random_gaussian(rng, kernel.size(), dims[i]);
      if (config.sigma == 0.0) {
        spec.noise[i] = Eigen::MatrixXd::Zero(kernel.size(), dims[i]);
        continue;
      }
      const Eigen::RowVectorXd mean = mu0.transpose() * G;
      G.rowwise() -= mean;
      double worst = 0.0;
      for (int x = 0; x < kernel.size(); ++x)
        worst = std::max(worst, G.row(x).norm());
      if (worst > 0.0) G *= config.sigma / worst;
      spec.noise[i] = std::move(G);
    }

    auto probe = std::make_shared<NestedLinearSystem>(spec, kernel,
                                                      SystemMetadata{});

    // Solution of the full noiseless system.
    ParameterStack solution = ParameterStack::zeros(dims);
    double delta_hat = 0.0;
    try {
      const NestedTargets root = solve_nested_targets(*probe, {}, 1e-11);
      solution = ParameterStack(root.targets);
      delta_hat = probe->affine_view()
                      ? estimate_nested_delta(*probe, {})
                      : estimate_nested_delta(*probe, {solution}, 8);
    } catch (const Error& e) {
      last_reason = e.what();
      continue;
    }
    if (delta_hat < config.delta_target / 2.0) {
      std::ostringstream os;
      os << "nested modulus " << delta_hat << " below target/2";
      last_reason = os.str();
      continue;
    }

    // Exact constants of the affine family:
    //   operator Lipschitz   max block spectral norm
    //   target Lipschitz     max block of -A_low^{-1} A_cross per prefix
    //   zero-point bound     max_X ||b_i + g_i(X)||
    double L = 1.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        L = std::max(L, spectral_norm(spec.A[i][j]));
    for (int first = 2; first <= n; ++first) {
      int low_total = 0, head_total = 0;
      for (int k = first - 1; k < n; ++k) low_total += dims[k];
      for (int k = 0; k < first - 1; ++k) head_total += dims[k];
      Eigen::MatrixXd low(low_total, low_total), cross(low_total, head_total);
      int row = 0;
      for (int j = first - 1; j < n; ++j) {
        int col = 0;
        for (int k = first - 1; k < n; ++k) {
          low.block(row, col, dims[j], dims[k]) = spec.A[j][k];
          col += dims[k];
        }
        col = 0;
        for (int k = 0; k < first - 1; ++k) {
          cross.block(row, col, dims[j], dims[k]) = spec.A[j][k];
          col += dims[k];
        }
        row += dims[j];
      }
      const Eigen::MatrixXd J = -low.fullPivLu().solve(cross);
      row = 0;
      for (int j = first - 1; j < n; ++j) {
        int col = 0;
        for (int k = 0; k < first - 1; ++k) {
          L = std::max(L, spectral_norm(J.block(row, col, dims[j], dims[k])));
          col += dims[k];
        }
        row += dims[j];
      }
    }
    for (int i = 0; i < n; ++i)
      for (int x = 0; x < kernel.size(); ++x)
        L = std::max(L, (spec.b[i] + spec.noise[i].row(x).transpose()).norm());

    double B = 0.0;
    for (int i = 1; i <= n; ++i) B = std::max(B, solution.block(i).norm());
    const AssumptionEstimates sampled = estimate_lipschitz_bounds(
        *probe, GridSpec{12, 2.0, config.seed + 1});
    B = std::max(B, sampled.B_hat);

    SystemMetadata meta;
    meta.delta = delta_hat;
    meta.lipschitz = L;
    meta.target_bound = B;
    meta.noise_scale = config.sigma;
    meta.solution = solution;
    meta.mean_consistent = true;
    return std::make_shared<NestedLinearSystem>(std::move(spec),
                                                std::move(kernel),
                                                std::move(meta));
  }
  throw GenerationError(
      "make_nested_linear: 20 attempts rejected (" + last_reason +
      "); try a smaller coupling_scale");
}

}  // namespace amsa
