#include "amsa/diagnostics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace amsa {

namespace {

int prefix_level(const OperatorSystem& system,
                 const std::vector<Eigen::VectorXd>& prefix) {
  const int p = static_cast<int>(prefix.size());
  if (p >= system.n_levels())
    throw UsageError("nested targets: prefix covers every level");
  for (int k = 0; k < p; ++k) {
    if (prefix[k].size() != system.dims()[k])
      throw DimensionError("nested targets: prefix block " +
                           std::to_string(k + 1) + " has dim " +
                           std::to_string(prefix[k].size()) + ", expected " +
                           std::to_string(system.dims()[k]));
  }
  return p + 1;  // first free level
}

ParameterStack assemble(const OperatorSystem& system,
                        const std::vector<Eigen::VectorXd>& prefix,
                        const std::vector<Eigen::VectorXd>& tail) {
  std::vector<Eigen::VectorXd> blocks = prefix;
  blocks.insert(blocks.end(), tail.begin(), tail.end());
  ParameterStack theta{std::move(blocks)};
  system.check_theta(theta);
  return theta;
}

// Stacked linear system over levels i..N of an affine view.
struct AffineSubsystem {
  int first_level = 1;  // i
  std::vector<int> tail_dims;
  int tail_total = 0;
  Eigen::MatrixXd M;     // [A_jk], j,k >= i
  Eigen::MatrixXd cross;  // [A_jk], j >= i, k < i
  Eigen::VectorXd b_tail;
  Eigen::FullPivLU<Eigen::MatrixXd> lu;

  AffineSubsystem(const AffineView& view, const std::vector<int>& dims,
                  int first) {
    first_level = first;
    const int n = static_cast<int>(dims.size());
    int head_total = 0;
    for (int k = 0; k < first - 1; ++k) head_total += dims[k];
    for (int k = first - 1; k < n; ++k) {
      tail_dims.push_back(dims[k]);
      tail_total += dims[k];
    }
    M.resize(tail_total, tail_total);
    cross.resize(tail_total, head_total);
    b_tail.resize(tail_total);
    int row = 0;
    for (int j = first - 1; j < n; ++j) {
      int col = 0;
      for (int k = first - 1; k < n; ++k) {
        M.block(row, col, dims[j], dims[k]) = view.A[j][k];
        col += dims[k];
      }
      col = 0;
      for (int k = 0; k < first - 1; ++k) {
        cross.block(row, col, dims[j], dims[k]) = view.A[j][k];
        col += dims[k];
      }
      b_tail.segment(row, dims[j]) = view.b[j];
      row += dims[j];
    }
    lu.compute(M);
    lu.setThreshold(1e-12);
    if (!lu.isInvertible())
      throw DegeneracyError(
          "nested targets: stacked matrix over levels " +
          std::to_string(first) + ".. is singular");
  }

  std::vector<Eigen::VectorXd> solve(
      const std::vector<Eigen::VectorXd>& prefix) const {
    Eigen::VectorXd head(cross.cols());
    int at = 0;
    for (const auto& p : prefix) {
      head.segment(at, p.size()) = p;
      at += static_cast<int>(p.size());
    }
    const Eigen::VectorXd rhs = -(b_tail + cross * head);
    const Eigen::VectorXd y = lu.solve(rhs);
    std::vector<Eigen::VectorXd> out;
    at = 0;
    for (int d : tail_dims) {
      out.push_back(y.segment(at, d));
      at += d;
    }
    return out;
  }
};

std::vector<double> tail_residual_norms(
    const OperatorSystem& system, const std::vector<Eigen::VectorXd>& prefix,
    const std::vector<Eigen::VectorXd>& tail) {
  const ParameterStack theta = assemble(system, prefix, tail);
  const int first = static_cast<int>(prefix.size()) + 1;
  std::vector<double> norms;
  for (int j = first; j <= system.n_levels(); ++j)
    norms.push_back(system.mean_operator(j, theta).norm());
  return norms;
}

NestedTargets solve_affine_direct(const OperatorSystem& system,
                                  const std::vector<Eigen::VectorXd>& prefix,
                                  double tol) {
  const auto view = system.affine_view();
  if (!view)
    throw UsageError("solve_nested_targets: affine_direct requires an "
                     "affine mean operator");
  const int first = prefix_level(system, prefix);
  AffineSubsystem sub(*view, system.dims(), first);
  NestedTargets result;
  result.given_prefix_len = first - 1;
  result.targets = sub.solve(prefix);
  result.residual_norms = tail_residual_norms(system, prefix, result.targets);
  for (double r : result.residual_norms) {
    if (!(r <= std::max(tol, 1e-8))) {
      std::ostringstream os;
      os << "solve_nested_targets: affine solve residual " << r
         << " above tolerance (ill-conditioned system)";
      throw NonConvergenceError(os.str());
    }
  }
  return result;
}

NestedTargets solve_fixed_point(const OperatorSystem& system,
                                const std::vector<Eigen::VectorXd>& prefix,
                                double tol) {
  const int first = prefix_level(system, prefix);
  const int n = system.n_levels();

  std::vector<Eigen::VectorXd> y;
  const auto& meta = system.metadata();
  for (int j = first; j <= n; ++j) {
    if (meta.solution)
      y.push_back(meta.solution->block(j));
    else {
      Eigen::VectorXd v = Eigen::VectorXd::Zero(system.dims()[j - 1]);
      system.project(j, v);
      y.push_back(std::move(v));
    }
  }

  const int levels = n - first + 1;
  double eta = 0.5;
  if (meta.delta && meta.lipschitz && *meta.lipschitz > 0.0)
    eta = std::min(1.0, *meta.delta / (*meta.lipschitz * *meta.lipschitz *
                                       levels));

  auto residuals_of = [&](const std::vector<Eigen::VectorXd>& cand)
      -> std::pair<std::vector<Eigen::VectorXd>, double> {
    const ParameterStack theta = assemble(system, prefix, cand);
    std::vector<Eigen::VectorXd> F;
    double worst = 0.0;
    for (int j = first; j <= n; ++j) {
      F.push_back(system.mean_operator(j, theta));
      worst = std::max(worst, F.back().norm());
    }
    return {std::move(F), worst};
  };

  auto [F, worst] = residuals_of(y);
  const long cap = 200000;
  for (long it = 0; it < cap; ++it) {
    if (worst <= tol) {
      NestedTargets result;
      result.given_prefix_len = first - 1;
      result.targets = std::move(y);
      for (const auto& f : F) result.residual_norms.push_back(f.norm());
      return result;
    }
    std::vector<Eigen::VectorXd> cand = y;
    for (int k = 0; k < levels; ++k) {
      cand[k] -= eta * F[k];
      system.project(first + k, cand[k]);
    }
    auto [F_cand, worst_cand] = residuals_of(cand);
    if (worst_cand > worst && eta > 1e-12) {
      eta *= 0.5;  // overshoot; retry from the same point
      continue;
    }
    y = std::move(cand);
    F = std::move(F_cand);
    worst = worst_cand;
    eta = std::min(eta * 1.02, 1.0);
  }
  std::ostringstream os;
  os << "solve_nested_targets: fixed-point iteration cap reached, worst "
        "residual "
     << worst;
  throw NonConvergenceError(os.str());
}

}  // namespace

NestedTargets solve_nested_targets(const OperatorSystem& system,
                                   const std::vector<Eigen::VectorXd>& prefix,
                                   double tol, TargetMode mode) {
  if (mode == TargetMode::auto_detect)
    mode = system.affine_view() ? TargetMode::affine_direct
                                : TargetMode::fixed_point;
  return mode == TargetMode::affine_direct
             ? solve_affine_direct(system, prefix, tol)
             : solve_fixed_point(system, prefix, tol);
}

bool verify_target_identity(const OperatorSystem& system,
                            const std::vector<Eigen::VectorXd>& prefix, int i,
                            int j, double tol) {
  const int n = system.n_levels();
  if (!(i >= 1 && i < j && j <= n))
    throw UsageError("verify_target_identity: need 1 <= i < j <= N");
  if (static_cast<int>(prefix.size()) != i - 1)
    throw UsageError("verify_target_identity: prefix length must be i-1");

  // Solve both sides well below the comparison tolerance, which must
  // absorb the residual error of two independent solves.
  const double solve_tol = std::max(tol * 1e-2, 1e-12);
  const NestedTargets from_i = solve_nested_targets(system, prefix, solve_tol);
  const Eigen::VectorXd lhs = from_i.targets[j - i];

  std::vector<Eigen::VectorXd> extended = prefix;
  for (int k = i; k <= j - 1; ++k)
    extended.push_back(from_i.targets[k - i]);
  const NestedTargets from_j =
      solve_nested_targets(system, extended, solve_tol);
  const Eigen::VectorXd rhs = from_j.targets[0];

  return (lhs - rhs).norm() <= tol;
}

DiagnosticsRecord residuals(const SolverState& state,
                            const OperatorSystem& system, SolverKind kind,
                            double tol) {
  system.check_theta(state.theta);
  const int n = system.n_levels();

  DiagnosticsRecord rec;
  rec.t = state.t;
  rec.x_norms.resize(n);
  rec.df_norms.resize(n);

  const auto view = system.affine_view();
  for (int i = 1; i <= n; ++i) {
    std::vector<Eigen::VectorXd> prefix(state.theta.blocks().begin(),
                                        state.theta.blocks().begin() + (i - 1));
    const NestedTargets targets = solve_nested_targets(system, prefix, tol);
    rec.x_norms[i - 1] = (state.theta.block(i) - targets.targets[0]).norm();

    Eigen::VectorXd mean;
    if (view) {
      mean = view->b[i - 1];
      for (int jj = 0; jj < n; ++jj)
        mean += view->A[i - 1][jj] * state.theta.block(jj + 1);
    } else {
      mean = system.mean_operator(i, state.theta);
    }
    rec.df_norms[i - 1] = (state.f.block(i) - mean).norm();
  }

  rec.V = 0.0;
  for (int i = 0; i < n; ++i) {
    rec.V += rec.x_norms[i] * rec.x_norms[i];
    if (kind == SolverKind::amsa)
      rec.V += rec.df_norms[i] * rec.df_norms[i];
  }
  return rec;
}

double weighted_msa_lyapunov(const DiagnosticsRecord& record, long t,
                             const StepSchedule& schedule, double delta,
                             double L) {
  if (schedule.n_levels() != 3 || record.x_norms.size() != 3)
    throw UsageError("weighted_msa_lyapunov: defined only for N = 3");
  const auto [v2, v3] = msa_lyapunov_weights(schedule, t, delta, L);
  return record.x_norms[0] * record.x_norms[0] +
         v2 * record.x_norms[1] * record.x_norms[1] +
         v3 * record.x_norms[2] * record.x_norms[2];
}

void annotate_trajectory(Trajectory& trajectory, const OperatorSystem& system,
                         const AnnotateOptions& options) {
  const bool weighted = options.schedule != nullptr &&
                        trajectory.solver == SolverKind::msa &&
                        system.n_levels() == 3;
  for (auto& rec : trajectory.records) {
    SolverState state;
    state.t = rec.t;
    state.theta = rec.theta;
    state.f = rec.f;
    state.x_state = rec.x_state;
    DiagnosticsRecord diag =
        residuals(state, system, trajectory.solver, options.tol);
    if (weighted)
      diag.weighted_V = weighted_msa_lyapunov(diag, rec.t, *options.schedule,
                                              options.delta, options.L);
    rec.diag = std::move(diag);
  }
}

double estimate_nested_delta(const OperatorSystem& system,
                             const std::vector<ParameterStack>& theta_samples,
                             int pair_count, double tol) {
  const int n = system.n_levels();
  const auto view = system.affine_view();

  if (view) {
    // Effective per-level matrix by block elimination:
    //   M_i = A_ii - A_{i,low} A_{low,low}^{-1} A_{low,i}.
    double worst = std::numeric_limits<double>::infinity();
    for (int i = 1; i <= n; ++i) {
      const int d = system.dims()[i - 1];
      Eigen::MatrixXd M = view->A[i - 1][i - 1];
      if (i < n) {
        int low_total = 0;
        for (int k = i; k < n; ++k) low_total += system.dims()[k];
        Eigen::MatrixXd low_low(low_total, low_total);
        Eigen::MatrixXd low_i(low_total, d);
        Eigen::MatrixXd i_low(d, low_total);
        int row = 0;
        for (int j = i; j < n; ++j) {
          int col = 0;
          for (int k = i; k < n; ++k) {
            low_low.block(row, col, system.dims()[j], system.dims()[k]) =
                view->A[j][k];
            col += system.dims()[k];
          }
          low_i.block(row, 0, system.dims()[j], d) = view->A[j][i - 1];
          i_low.block(0, row, d, system.dims()[j]) = view->A[i - 1][j];
          row += system.dims()[j];
        }
        Eigen::FullPivLU<Eigen::MatrixXd> lu(low_low);
        lu.setThreshold(1e-12);
        if (!lu.isInvertible())
          throw DegeneracyError(
              "estimate_nested_delta: lower-level block is singular below "
              "level " + std::to_string(i));
        M -= i_low * lu.solve(low_i);
      }
      const Eigen::MatrixXd sym = 0.5 * (M + M.transpose());
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
      worst = std::min(worst, es.eigenvalues().minCoeff());
    }
    return worst;
  }

  if (theta_samples.empty())
    throw UsageError("estimate_nested_delta: need at least one theta sample "
                     "for non-affine systems");
  if (pair_count < 1)
    throw UsageError("estimate_nested_delta: pair_count must be >= 1");

  Rng rng(0x5eed0d31ULL);
  double worst = std::numeric_limits<double>::infinity();
  for (const auto& base : theta_samples) {
    system.check_theta(base);
    for (int i = 1; i <= n; ++i) {
      const std::vector<Eigen::VectorXd> prefix(
          base.blocks().begin(), base.blocks().begin() + (i - 1));
      const int d = system.dims()[i - 1];
      for (int p = 0; p < pair_count; ++p) {
        Eigen::VectorXd a(d), b(d);
        for (int k = 0; k < d; ++k) {
          a(k) = base.block(i)(k) + rng.next_gaussian();
          b(k) = base.block(i)(k) + rng.next_gaussian();
        }
        if ((a - b).norm() < 1e-9) continue;

        auto value_at = [&](const Eigen::VectorXd& ti) {
          std::vector<Eigen::VectorXd> with_i = prefix;
          with_i.push_back(ti);
          std::vector<Eigen::VectorXd> tail;
          if (i < n)
            tail = solve_nested_targets(system, with_i, tol).targets;
          std::vector<Eigen::VectorXd> full = with_i;
          full.insert(full.end(), tail.begin(), tail.end());
          const ParameterStack theta = assemble(system, {}, full);
          return system.mean_operator(i, theta);
        };
        const Eigen::VectorXd Fa = value_at(a);
        const Eigen::VectorXd Fb = value_at(b);
        const double quotient =
            (Fa - Fb).dot(a - b) / (a - b).squaredNorm();
        worst = std::min(worst, quotient);
      }
    }
  }
  return worst;
}

AssumptionEstimates estimate_lipschitz_bounds(const OperatorSystem& system,
                                              const GridSpec& grid) {
  if (grid.points < 2)
    throw UsageError("estimate_lipschitz_bounds: need at least 2 grid points");
  const int n = system.n_levels();

  Rng rng(grid.seed);
  std::vector<ParameterStack> points;
  for (int p = 0; p < grid.points; ++p) {
    std::vector<Eigen::VectorXd> blocks;
    for (int d : system.dims()) {
      Eigen::VectorXd v(d);
      for (int k = 0; k < d; ++k)
        v(k) = grid.radius * rng.next_gaussian();
      blocks.push_back(std::move(v));
    }
    points.emplace_back(std::move(blocks));
  }

  AssumptionEstimates est;
  {
    std::ostringstream os;
    os << grid.points << " Gaussian points of scale " << grid.radius
       << ", seed " << grid.seed << "; no global claim outside this region";
    est.sampled_region = os.str();
  }

  // Operator Lipschitz ratios and the uniform bound, over a capped,
  // deterministically strided slice of the sample grid.
  std::vector<Sample> samples = system.sample_grid();
  if (samples.size() > 512) {
    std::vector<Sample> strided;
    const std::size_t stride = samples.size() / 512 + 1;
    for (std::size_t k = 0; k < samples.size(); k += stride)
      strided.push_back(samples[k]);
    samples = std::move(strided);
  }
  for (std::size_t a = 0; a < points.size(); ++a) {
    for (int i = 1; i <= n; ++i) {
      for (const Sample& x : samples) {
        const double norm_a = system.evaluate(i, points[a], x).norm();
        est.D_bound = std::max(est.D_bound, norm_a);
        for (std::size_t b = a + 1; b < points.size(); ++b) {
          double dist = 0.0;
          for (int k = 1; k <= n; ++k)
            dist += (points[a].block(k) - points[b].block(k)).norm();
          if (dist < 1e-12) continue;
          const double diff = (system.evaluate(i, points[a], x) -
                               system.evaluate(i, points[b], x))
                                  .norm();
          est.L_hat = std::max(est.L_hat, diff / dist);
        }
      }
    }
  }

  // Target Lipschitz ratios and target norms over sampled prefixes.
  const int prefix_samples = std::min<int>(grid.points, 8);
  for (int i = 2; i <= n; ++i) {
    std::vector<std::vector<Eigen::VectorXd>> prefixes;
    for (int p = 0; p < prefix_samples; ++p)
      prefixes.emplace_back(points[p].blocks().begin(),
                            points[p].blocks().begin() + (i - 1));
    std::vector<NestedTargets> solved;
    for (const auto& pre : prefixes)
      solved.push_back(solve_nested_targets(system, pre));
    for (std::size_t a = 0; a < solved.size(); ++a) {
      for (const auto& y : solved[a].targets)
        est.B_hat = std::max(est.B_hat, y.norm());
      for (std::size_t b = a + 1; b < solved.size(); ++b) {
        double dist = 0.0;
        for (int k = 0; k < i - 1; ++k)
          dist += (prefixes[a][k] - prefixes[b][k]).norm();
        if (dist < 1e-12) continue;
        for (std::size_t j = 0; j < solved[a].targets.size(); ++j) {
          const double diff =
              (solved[a].targets[j] - solved[b].targets[j]).norm();
          est.L_hat = std::max(est.L_hat, diff / dist);
        }
      }
    }
  }
  if (n == 1) {
    const NestedTargets root = solve_nested_targets(system, {});
    est.B_hat = std::max(est.B_hat, root.targets[0].norm());
  }
  return est;
}

namespace {

const DiagnosticsRecord& diag_or_throw(const TrajectoryRecord& rec) {
  if (!rec.diag)
    throw UsageError("lemma check: records are missing diagnostics; run "
                     "annotate_trajectory first");
  return *rec.diag;
}

}  // namespace

LemmaCheckReport check_lemma_bound_x(const Trajectory& trajectory,
                                     const OperatorSystem& system,
                                     const StepSchedule& schedule,
                                     const AmsaConditionConstants& constants,
                                     double /*tol*/) {
  const int n = system.n_levels();
  const double delta = constants.delta;
  const double L = constants.L;
  const double N = static_cast<double>(n);
  const double coeff_low =
      9.0 * N * N * N * std::pow(L, 6) / delta + 8.0 * N * N * L * L * L;
  const double coeff_df = 3.0 / delta + L;

  LemmaCheckReport report;

  long horizon = 1;
  for (const auto& rec : trajectory.records)
    horizon = std::max(horizon, rec.t);
  const ConditionReport conditions =
      check_amsa_conditions(schedule, constants, horizon);
  report.preconditions_ok = conditions.all_pass;
  if (!conditions.all_pass) {
    std::ostringstream os;
    os << "step-size conditions failed:";
    for (const auto& row : conditions.rows)
      if (!row.pass) os << ' ' << row.name;
    os << "; violations below are informational";
    report.note = os.str();
  }

  for (std::size_t k = 0; k + 1 < trajectory.records.size(); ++k) {
    const auto& cur = trajectory.records[k];
    const auto& nxt = trajectory.records[k + 1];
    if (nxt.t != cur.t + 1) continue;
    const auto& d0 = diag_or_throw(cur);
    const auto& d1 = diag_or_throw(nxt);
    ++report.pairs_checked;

    double df_sum_sq = 0.0;
    for (double df : d0.df_norms) df_sum_sq += df * df;

    for (int i = 1; i <= n; ++i) {
      const double ai = schedule.alpha(i, cur.t);
      const double xi = d0.x_norms[i - 1];
      double rhs = xi * xi - delta * ai / 4.0 * xi * xi;
      for (int j = 1; j < i; ++j) {
        const double xj = d0.x_norms[j - 1];
        rhs += delta * schedule.alpha(j, cur.t) / (8.0 * N) * xj * xj;
      }
      double low_sq = 0.0;
      for (int j = i + 1; j <= n; ++j)
        low_sq += d0.x_norms[j - 1] * d0.x_norms[j - 1];
      rhs += coeff_low * ai * low_sq;
      rhs += coeff_df * ai * df_sum_sq;

      const double lhs = d1.x_norms[i - 1] * d1.x_norms[i - 1];
      if (lhs > rhs + 1e-12 * std::max(1.0, std::abs(rhs)))
        report.violations.push_back(LemmaViolation{cur.t, i, lhs, rhs});
    }
  }
  if (report.pairs_checked == 0)
    throw UsageError("check_lemma_bound_x: no consecutive recorded "
                     "iterations; use a dense record plan");
  return report;
}

LemmaCheckReport check_lemma_lipschitz(const Trajectory& trajectory,
                                       const OperatorSystem& system,
                                       const StepSchedule& schedule, double L,
                                       double /*tol*/) {
  const int n = system.n_levels();
  const double NL2 = static_cast<double>(n) * L * L;

  LemmaCheckReport report;
  for (std::size_t k = 0; k + 1 < trajectory.records.size(); ++k) {
    const auto& cur = trajectory.records[k];
    const auto& nxt = trajectory.records[k + 1];
    if (nxt.t != cur.t + 1) continue;
    const auto& d0 = diag_or_throw(cur);
    ++report.pairs_checked;

    for (int i = 1; i <= n; ++i) {
      double x_tail = 0.0;
      for (int j = i; j <= n; ++j) x_tail += d0.x_norms[j - 1];
      const double rhs = schedule.alpha(i, cur.t) *
                         (d0.df_norms[i - 1] + NL2 * x_tail);
      const double lhs = (nxt.theta.block(i) - cur.theta.block(i)).norm();
      if (lhs > rhs + 1e-12 * std::max(1.0, std::abs(rhs)))
        report.violations.push_back(LemmaViolation{cur.t, i, lhs, rhs});
    }
  }
  if (report.pairs_checked == 0)
    throw UsageError("check_lemma_lipschitz: no consecutive recorded "
                     "iterations; use a dense record plan");
  return report;
}

}  // namespace amsa
