#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "amsa/diagnostics.hpp"
#include "amsa/nested_linear.hpp"
#include "amsa/solver.hpp"
#include "test_systems.hpp"

using namespace amsa;
using namespace amsa::testing;

namespace {

std::shared_ptr<const NestedLinearSystem> benchmark(std::uint64_t seed,
                                                    int n = 2,
                                                    double coupling = 0.1) {
  NestedLinearConfig config;
  config.n_levels = n;
  config.dims.assign(n, 3);
  config.delta_target = 0.5;
  config.coupling_scale = coupling;
  config.sigma = 0.5;
  config.kernel_kind = "fixed";
  config.kernel_states = 5;
  config.seed = seed;
  return make_nested_linear(config);
}

// Delegates to an affine system while hiding its affine structure, to
// exercise the generic (sampled / fixed-point) code paths.
class NonAffineFacade : public OperatorSystem {
 public:
  explicit NonAffineFacade(std::shared_ptr<const OperatorSystem> inner)
      : OperatorSystem(inner->dims(), inner->kernel(), facade_meta(*inner)),
        inner_(std::move(inner)) {}
  Eigen::VectorXd evaluate(int level, const ParameterStack& theta,
                           const Sample& x) const override {
    return inner_->evaluate(level, theta, x);
  }
  std::string kind() const override { return "facade"; }

 private:
  static SystemMetadata facade_meta(const OperatorSystem& inner) {
    SystemMetadata meta;
    meta.delta = inner.metadata().delta;
    meta.lipschitz = inner.metadata().lipschitz;
    return meta;
  }
  std::shared_ptr<const OperatorSystem> inner_;
};

std::vector<Eigen::VectorXd> prefix_of(const ParameterStack& stack, int len) {
  return {stack.blocks().begin(), stack.blocks().begin() + len};
}

}  // namespace

TEST_CASE("targets at solution prefixes reproduce the solution") {
  for (std::uint64_t seed : {3ULL, 8ULL}) {
    const auto system = benchmark(seed, 3);
    const ParameterStack& star = *system->metadata().solution;
    for (int i = 1; i <= 3; ++i) {
      const auto targets =
          solve_nested_targets(*system, prefix_of(star, i - 1));
      REQUIRE(targets.given_prefix_len == i - 1);
      REQUIRE(static_cast<int>(targets.targets.size()) == 3 - i + 1);
      for (int j = i; j <= 3; ++j)
        CHECK((targets.targets[j - i] - star.block(j)).norm() <= 1e-8);
      for (double r : targets.residual_norms) CHECK(r <= 1e-9);
    }
  }
}

TEST_CASE("single-level system: empty prefix returns the solution") {
  const auto system = benchmark(4, 1);
  const auto targets = solve_nested_targets(*system, {});
  CHECK((targets.targets[0] - system->metadata().solution->block(1)).norm() <=
        1e-9);
}

TEST_CASE("decoupled targets are prefix-independent per-block solves") {
  const auto system = benchmark(6, 3, /*coupling=*/0.0);
  const auto& spec = system->spec();
  Rng rng(1);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Eigen::VectorXd> prefix;
    for (int k = 0; k < 2; ++k) {
      Eigen::VectorXd v(3);
      for (int j = 0; j < 3; ++j) v(j) = rng.next_gaussian();
      prefix.push_back(v);
    }
    const auto targets = solve_nested_targets(*system, prefix);
    CHECK((targets.targets[0] +
           spec.A[2][2].fullPivLu().solve(spec.b[2]))
              .norm() <= 1e-9);
  }
}

TEST_CASE("affine-direct and fixed-point modes agree") {
  const auto system = benchmark(12, 2);
  Rng rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::VectorXd p(3);
    for (int j = 0; j < 3; ++j) p(j) = rng.next_gaussian();
    const auto direct = solve_nested_targets(*system, {p}, 1e-10,
                                             TargetMode::affine_direct);
    const auto fixed = solve_nested_targets(*system, {p}, 1e-10,
                                            TargetMode::fixed_point);
    CHECK((direct.targets[0] - fixed.targets[0]).norm() <= 1e-6);
  }
}

TEST_CASE("target identity holds across levels and prefixes") {
  const auto system = benchmark(15, 3);
  const ParameterStack& star = *system->metadata().solution;

  CHECK(verify_target_identity(*system, prefix_of(star, 1), 2, 3, 1e-7));
  CHECK(verify_target_identity(*system, {}, 1, 3, 1e-7));

  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd p(3);
    for (int j = 0; j < 3; ++j) p(j) = 2.0 * rng.next_gaussian();
    CHECK(verify_target_identity(*system, {p}, 2, 3, 1e-7));
  }

  // Decoupled: trivially true.
  const auto decoupled = benchmark(16, 3, 0.0);
  CHECK(verify_target_identity(*decoupled, prefix_of(
      *decoupled->metadata().solution, 1), 2, 3, 1e-9));

  CHECK_THROWS_AS(verify_target_identity(*system, {}, 2, 2, 1e-7), UsageError);
}

TEST_CASE("residuals vanish at the solution and follow definitions") {
  const auto system = benchmark(21, 2);
  const ParameterStack& star = *system->metadata().solution;

  SolverState at_star;
  at_star.t = 0;
  at_star.theta = star;
  at_star.f = ParameterStack::zeros(system->dims());
  for (int i = 1; i <= 2; ++i)
    at_star.f.block(i) = system->mean_operator(i, star);
  at_star.x_state = 0;

  const auto rec = residuals(at_star, *system, SolverKind::amsa);
  for (int i = 0; i < 2; ++i) {
    CHECK(rec.x_norms[i] <= 1e-8);
    CHECK(rec.df_norms[i] <= 1e-8);
  }
  CHECK(rec.V <= 1e-14);

  // f = 0: the estimation residual is exactly the mean operator norm.
  SolverState zero_f = at_star;
  Rng rng(4);
  for (int i = 1; i <= 2; ++i) {
    for (int k = 0; k < 3; ++k)
      zero_f.theta.block(i)(k) = rng.next_gaussian();
    zero_f.f.block(i).setZero();
  }
  const auto rec2 = residuals(zero_f, *system, SolverKind::amsa);
  for (int i = 1; i <= 2; ++i)
    CHECK(rec2.df_norms[i - 1] ==
          system->mean_operator(i, zero_f.theta).norm());

  // Scalar identity map: theta = 2 has optimal residual 2.
  auto scalar = scalar_system(1.0, 0.0, {0.0}, uniform_kernel(1));
  SolverState s;
  s.theta = ParameterStack({Eigen::VectorXd::Constant(1, 2.0)});
  s.f = ParameterStack::zeros({1});
  s.x_state = 0;
  const auto rec3 = residuals(s, *scalar, SolverKind::msa);
  CHECK(rec3.x_norms[0] == doctest::Approx(2.0).epsilon(1e-12));
  // msa Lyapunov excludes estimation residuals.
  CHECK(rec3.V == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("residual-zero characterization") {
  const auto system = benchmark(22, 3);
  const ParameterStack& star = *system->metadata().solution;
  SolverState state;
  state.theta = star;
  state.f = ParameterStack::zeros(system->dims());
  const auto rec = residuals(state, *system, SolverKind::msa);
  const double x_total =
      std::sqrt(rec.x_norms[0] * rec.x_norms[0] +
                rec.x_norms[1] * rec.x_norms[1] +
                rec.x_norms[2] * rec.x_norms[2]);
  REQUIRE(x_total <= 1e-8);
  for (int i = 1; i <= 3; ++i)
    CHECK(system->mean_operator(i, state.theta).norm() <= 1e-7);
}

TEST_CASE("weighted three-level Lyapunov value") {
  const auto schedule = practical_msa_schedule(3, 0.5);
  DiagnosticsRecord rec;
  rec.t = 100;
  rec.x_norms = {0.0, 0.0, 0.0};
  rec.df_norms = {0.0, 0.0, 0.0};
  CHECK(weighted_msa_lyapunov(rec, 100, schedule, 0.5, 1.2) == 0.0);

  rec.x_norms = {1.0, 1.0, 1.0};
  const auto [v2, v3] = msa_lyapunov_weights(schedule, 100, 0.5, 1.2);
  CHECK(weighted_msa_lyapunov(rec, 100, schedule, 0.5, 1.2) ==
        doctest::Approx(1.0 + v2 + v3).epsilon(1e-15));

  rec.x_norms = {2.0, 1.0, 0.5};
  CHECK(weighted_msa_lyapunov(rec, 100, schedule, 0.5, 1.2) ==
        doctest::Approx(4.0 + v2 + 0.25 * v3).epsilon(1e-15));

  DiagnosticsRecord two;
  two.x_norms = {1.0, 1.0};
  CHECK_THROWS_AS(
      weighted_msa_lyapunov(two, 0, practical_msa_schedule(3, 0.5), 0.5, 1.2),
      UsageError);
}

TEST_CASE("nested modulus: exact affine values") {
  // Decoupled blocks with spectrum [delta0, 2 delta0]: the modulus is the
  // smallest diagonal-block eigenvalue.
  const auto decoupled = benchmark(31, 3, 0.0);
  double min_eig = 1e300;
  for (int i = 0; i < 3; ++i) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
        decoupled->spec().A[i][i]);
    min_eig = std::min(min_eig, es.eigenvalues().minCoeff());
  }
  CHECK(estimate_nested_delta(*decoupled, {}) ==
        doctest::Approx(min_eig).epsilon(1e-9));

  // Sign violation is reported, not thrown.
  auto negated = scalar_system(-1.0, 0.0, {0.0}, uniform_kernel(1));
  CHECK(estimate_nested_delta(*negated, {}) <= -1.0 + 1e-12);

  // Benchmark family: target 0.5, coupling 0.1.
  const auto system = benchmark(32, 2);
  const double delta_hat = estimate_nested_delta(*system, {});
  CHECK(delta_hat >= 0.3);
  CHECK(delta_hat <= 0.6);
}

TEST_CASE("nested modulus: affine effective matrices are prefix-independent") {
  const auto system = benchmark(34, 3);
  Rng rng(11);
  auto sample_set = [&](int count) {
    std::vector<ParameterStack> set;
    for (int k = 0; k < count; ++k) {
      std::vector<Eigen::VectorXd> blocks;
      for (int d : system->dims()) {
        Eigen::VectorXd v(d);
        for (int j = 0; j < d; ++j) v(j) = rng.next_gaussian();
        blocks.push_back(v);
      }
      set.emplace_back(std::move(blocks));
    }
    return set;
  };
  const double a = estimate_nested_delta(*system, sample_set(4));
  const double b = estimate_nested_delta(*system, sample_set(4));
  CHECK(std::abs(a - b) <= 1e-9);
}

TEST_CASE("nested modulus: sampled path agrees with the affine value") {
  const auto system = benchmark(33, 2);
  const double exact = estimate_nested_delta(*system, {});
  const NonAffineFacade facade(system);
  const double sampled = estimate_nested_delta(
      facade, {*system->metadata().solution, ParameterStack::zeros(system->dims())},
      16);
  // Sampled Rayleigh quotients of an affine map can only overestimate the
  // minimum; they must stay consistent within solver tolerance.
  CHECK(sampled >= exact - 1e-6);
  CHECK(sampled <= exact + 0.2);
}

TEST_CASE("lipschitz and boundedness estimates") {
  ZeroSystem zero({2, 2}, 3);
  const auto z = estimate_lipschitz_bounds(zero, GridSpec{8, 1.0, 3});
  CHECK(z.L_hat == 0.0);
  CHECK(z.D_bound == 0.0);
  CHECK(z.B_hat == 0.0);

  const auto decoupled = benchmark(41, 2, 0.0);
  const auto est = estimate_lipschitz_bounds(*decoupled, GridSpec{12, 2.0, 4});
  double expect_B = 0.0;
  for (int i = 0; i < 2; ++i)
    expect_B = std::max(expect_B, decoupled->spec()
                                      .A[i][i]
                                      .fullPivLu()
                                      .solve(decoupled->spec().b[i])
                                      .norm());
  CHECK(est.B_hat == doctest::Approx(expect_B).epsilon(1e-9));
  REQUIRE(decoupled->metadata().lipschitz.has_value());
  CHECK(est.L_hat <= *decoupled->metadata().lipschitz + 1e-9);
}

TEST_CASE("pathwise lemmas hold on a condition-compliant run") {
  const auto system = benchmark(51, 2);
  const double delta = std::min(1.0, *system->metadata().delta);
  const double L = *system->metadata().lipschitz;
  const auto cert = fit_ergodicity(system->kernel(),
                                   system->default_init(), 300);
  const auto schedule = compliant_amsa_schedule(2, delta, L, 1.0, cert, 4000);

  AmsaConditionConstants constants;
  constants.delta = delta;
  constants.L = L;
  constants.D = 1.0;
  constants.tau_of = make_tau_fn(cert);

  InitSpec init;
  init.x0 = 0;
  Trajectory traj = run(*system, schedule, SolverKind::amsa, 300, 5, init,
                        RecordPlan::all());
  REQUIRE_FALSE(traj.diverged);
  annotate_trajectory(traj, *system);

  const auto bound_x = check_lemma_bound_x(traj, *system, schedule, constants);
  CHECK(bound_x.preconditions_ok);
  CHECK(bound_x.pairs_checked == 300);
  CHECK(bound_x.violations.empty());

  const auto lips = check_lemma_lipschitz(traj, *system, schedule, L);
  CHECK(lips.pairs_checked == 300);
  CHECK(lips.violations.empty());
}

TEST_CASE("lemma checks report failed preconditions instead of asserting") {
  const auto system = benchmark(52, 2);
  const double delta = std::min(1.0, *system->metadata().delta);
  const auto schedule = practical_amsa_schedule(2, delta);
  const auto cert = fit_ergodicity(system->kernel(),
                                   system->default_init(), 200);

  AmsaConditionConstants constants;
  constants.delta = delta;
  constants.L = *system->metadata().lipschitz;
  constants.tau_of = make_tau_fn(cert);

  Trajectory traj = run(*system, schedule, SolverKind::amsa, 100, 5, {},
                        RecordPlan::all());
  annotate_trajectory(traj, *system);
  const auto report = check_lemma_bound_x(traj, *system, schedule, constants);
  CHECK_FALSE(report.preconditions_ok);
  CHECK(report.note.find("step-size conditions failed") != std::string::npos);

  // No consecutive records: usage error.
  Trajectory sparse = run(*system, schedule, SolverKind::amsa, 100, 5, {},
                          RecordPlan::none());
  annotate_trajectory(sparse, *system);
  CHECK_THROWS_AS(check_lemma_bound_x(sparse, *system, schedule, constants),
                  UsageError);
}

TEST_CASE("all-zero residual state satisfies the descent bound tightly") {
  // Noiseless system started exactly at the solution with f = mean
  // operator: every residual stays zero and the inequality is 0 <= 0.
  NestedLinearConfig config;
  config.n_levels = 2;
  config.dims = {2, 2};
  config.delta_target = 0.5;
  config.coupling_scale = 0.1;
  config.sigma = 0.0;
  config.kernel_kind = "fixed";
  config.kernel_states = 3;
  config.seed = 53;
  const auto system = make_nested_linear(config);
  const double delta = std::min(1.0, *system->metadata().delta);
  const double L = *system->metadata().lipschitz;
  const auto cert = fit_ergodicity(system->kernel(),
                                   system->default_init(), 200);
  const auto schedule = compliant_amsa_schedule(2, delta, L, 1.0, cert, 200);

  InitSpec init;
  init.theta0 = *system->metadata().solution;
  init.x0 = 0;
  Trajectory traj = run(*system, schedule, SolverKind::amsa, 50, 1, init,
                        RecordPlan::all());
  annotate_trajectory(traj, *system);
  for (const auto& rec : traj.records) {
    REQUIRE(rec.diag.has_value());
    CHECK(rec.diag->V <= 1e-16);
  }
  AmsaConditionConstants constants;
  constants.delta = delta;
  constants.L = L;
  constants.tau_of = make_tau_fn(cert);
  const auto report = check_lemma_bound_x(traj, *system, schedule, constants);
  CHECK(report.violations.empty());
}
