#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "amsa/kernel.hpp"
#include "amsa/schedule.hpp"
#include "test_systems.hpp"

using namespace amsa;
using namespace amsa::testing;

namespace {

ErgodicityCertificate fast_mixer_certificate() {
  return fit_ergodicity(two_state_kernel(0.5, 0.5),
                        ParameterStack::zeros({1}), 50);
}

AmsaConditionConstants constants_for(double delta, double L,
                                     const ErgodicityCertificate& cert,
                                     double D = 1.0) {
  AmsaConditionConstants c;
  c.delta = delta;
  c.L = L;
  c.D = D;
  c.tau_of = make_tau_fn(cert);
  return c;
}

const ConditionRow& row_named(const ConditionReport& report,
                              const std::string& name) {
  for (const auto& row : report.rows)
    if (row.name == name) return row;
  REQUIRE_MESSAGE(false, "row not found: " << name);
  static ConditionRow dummy;
  return dummy;
}

}  // namespace

TEST_CASE("amsa step sizes") {
  const auto s = StepSchedule::amsa(1, 1e-12, 1.0, {1.0});
  CHECK(amsa_stepsizes(s, 0).first == doctest::Approx(1.0).epsilon(1e-9));

  // c_1 = 32/delta with delta = 1, h = 127: alpha_1(0) = 32/128.
  const auto s2 = StepSchedule::amsa(1, 127.0, 64.0, {32.0});
  CHECK(amsa_stepsizes(s2, 0).second[0] == doctest::Approx(0.25).epsilon(1e-15));

  for (long t = 0; t < 64; ++t) {
    CHECK(s2.lambda(t + 1) < s2.lambda(t));
    CHECK(s2.alpha(1, t + 1) < s2.alpha(1, t));
  }

  const auto msa = StepSchedule::msa(2, 10.0, {1.0, 1.0}, {1.0, 2.0 / 3.0});
  CHECK_THROWS_AS(amsa_stepsizes(msa, 0), UsageError);
  CHECK_THROWS_AS(msa.lambda(0), UsageError);
}

TEST_CASE("schedule validation") {
  CHECK_THROWS_AS(StepSchedule::amsa(2, 10.0, 1.0, {1.0}), DimensionError);
  CHECK_THROWS_AS(StepSchedule::amsa(1, 0.0, 1.0, {1.0}), ValidationError);
  CHECK_THROWS_AS(StepSchedule::amsa(1, 1.0, -1.0, {1.0}), ValidationError);
  CHECK_THROWS_AS(StepSchedule::msa(2, 1.0, {1.0, 1.0}, {0.5, 1.0}),
                  ValidationError);  // increasing exponents
  CHECK_THROWS_AS(StepSchedule::msa(1, 1.0, {1.0}, {1.5}), ValidationError);
}

TEST_CASE("condition block: c1 row") {
  const auto cert = fast_mixer_certificate();
  // c_1 = 32/delta passes; c_1 = 16 fails the equality row.
  const auto pass_schedule = StepSchedule::amsa(1, 1e9, 64.0, {32.0});
  const auto report =
      check_amsa_conditions(pass_schedule, constants_for(1.0, 1.0, cert), 1000);
  CHECK(row_named(report, "c1_equals_32_over_delta").pass);

  const auto fail_schedule = StepSchedule::amsa(1, 1e9, 64.0, {16.0});
  const auto report2 =
      check_amsa_conditions(fail_schedule, constants_for(1.0, 1.0, cert), 1000);
  CHECK_FALSE(row_named(report2, "c1_equals_32_over_delta").pass);
}

TEST_CASE("condition block: lambda cap") {
  const auto cert = fast_mixer_certificate();
  // lambda(0) = 0.3 > 1/4.
  const auto schedule = StepSchedule::amsa(1, 9.0, 3.0, {32.0});
  const auto report =
      check_amsa_conditions(schedule, constants_for(1.0, 1.0, cert), 1000);
  const auto& row = row_named(report, "lambda_leq_one_fourth");
  CHECK_FALSE(row.pass);
  CHECK(row.lhs == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("condition block: equal c_i fail the ratio row") {
  const auto cert = fast_mixer_certificate();
  const auto schedule = StepSchedule::amsa(2, 1e9, 64.0, {32.0, 32.0});
  const auto report =
      check_amsa_conditions(schedule, constants_for(1.0, 1.0, cert), 1000);
  const auto& row = row_named(report, "alpha_ratio_1_over_2");
  CHECK_FALSE(row.pass);
  CHECK(row.lhs == doctest::Approx(1.0).epsilon(1e-15));
  // With N = 2, L = 1, delta = 1 the cap is (1/16) / (36 + 256).
  CHECK(row.rhs == doctest::Approx(1.0 / (16.0 * 292.0)).epsilon(1e-12));
  CHECK_FALSE(report.all_pass);
}

TEST_CASE("compliant schedule passes the whole block") {
  const auto cert = fast_mixer_certificate();
  for (int n : {1, 2, 3}) {
    const double delta = 0.5;
    const double L = 1.25;
    const auto schedule =
        compliant_amsa_schedule(n, delta, L, 1.0, cert, 100000);
    const auto report = check_amsa_conditions(
        schedule, constants_for(delta, L, cert), 100000);
    for (const auto& row : report.rows)
      CHECK_MESSAGE(row.pass, "failed row: " << row.name << " lhs=" << row.lhs
                                             << " rhs=" << row.rhs);
    CHECK(report.all_pass);
    // The operator-estimate scale stays faster than every decision scale.
    for (int i = 1; i <= n; ++i) CHECK(schedule.lambda(0) >= schedule.alpha(i, 0));
  }
}

TEST_CASE("practical schedules keep the hard constraints") {
  for (int n : {1, 2, 3}) {
    const double delta = 0.5;
    const auto amsa = practical_amsa_schedule(n, delta);
    CHECK(amsa.c()[0] == doctest::Approx(32.0 / delta).epsilon(1e-15));
    CHECK(amsa.lambda(0) < 0.25);
    for (int i = 1; i <= n; ++i)
      CHECK(amsa.c_lambda() / amsa.c()[i - 1] >= 2.0);

    const auto msa = practical_msa_schedule(n, delta);
    CHECK(msa.c()[0] == doctest::Approx(32.0 / delta).epsilon(1e-15));
    // Equal starting steps across levels.
    for (int i = 2; i <= n; ++i)
      CHECK(msa.alpha(i, 0) == doctest::Approx(msa.alpha(1, 0)).epsilon(1e-12));
  }
}

TEST_CASE("optimal msa exponents are exact rationals") {
  const auto e3 = optimal_msa_exponents(3);
  CHECK(e3[0] == Rational(1, 1));
  CHECK(e3[1] == Rational(3, 4));
  CHECK(e3[2] == Rational(1, 2));

  const auto e2 = optimal_msa_exponents(2);
  CHECK(e2[0] == Rational(1, 1));
  CHECK(e2[1] == Rational(2, 3));

  const auto e5 = optimal_msa_exponents(5);
  CHECK(e5[0] == Rational(1, 1));
  CHECK(e5[1] == Rational(5, 6));
  CHECK(e5[2] == Rational(4, 6));
  CHECK(e5[3] == Rational(3, 6));
  CHECK(e5[4] == Rational(2, 6));

  for (int n : {1, 2, 3, 4, 5, 8}) {
    const auto exps = optimal_msa_exponents(n);
    CHECK(exps.front() == Rational(1, 1));
    for (int i = 1; i < n; ++i) {
      CHECK(exps[i].value() < exps[i - 1].value());
      // Exact equalization: 2 (a_{i-1} - a_i) = a_N in rational arithmetic.
      CHECK((exps[i - 1] - exps[i]) * 2 == exps.back());
    }
  }
  CHECK_THROWS_AS(optimal_msa_exponents(0), UsageError);
}

TEST_CASE("predicted rates match the complexity table") {
  CHECK(predict_msa_rate(2) == Rational(2, 3));
  CHECK(predict_msa_rate(3) == Rational(1, 2));
  CHECK(predict_msa_rate(4) == Rational(2, 5));
  CHECK(predict_msa_rate(2).value() == 2.0 / 3.0);
  for (int n : {1, 2, 3, 4, 7}) CHECK(predict_amsa_rate(n) == Rational(1, 1));
  CHECK_THROWS_AS(predict_msa_rate(0), UsageError);
}

TEST_CASE("msa lyapunov weights") {
  // Direct formula evaluation at alpha_1 = 0.001, alpha_2 = 0.01.
  // Using c = (0.001, 0.01, 0.01) with unit exponents at h such that
  // t + h + 1 = 1 is impossible, so evaluate at t with base 1 via h ~ 0.
  const auto schedule = StepSchedule::msa(3, 1e-12, {0.001, 0.01, 0.01},
                                          {1.0, 1.0, 1.0});
  const auto [v2, v3] = msa_lyapunov_weights(schedule, 0, 1.0, 1.0);
  CHECK(v2 == doctest::Approx(172.8).epsilon(1e-12));
  // v3 = (8 * 0.001 / 0.01) * (216 + 373248) = 0.8 * 373464.
  CHECK(v3 == doctest::Approx(0.8 * 373464.0).epsilon(1e-12));

  // Equal alphas: v2 = 1728 L^6 / delta^2.
  const auto equal = StepSchedule::msa(3, 1.0, {1.0, 1.0, 1.0},
                                       {1.0, 1.0, 1.0});
  CHECK(msa_lyapunov_weights(equal, 5, 1.0, 1.0).first ==
        doctest::Approx(1728.0).epsilon(1e-12));

  // Monotone non-increasing along t for the optimal exponents.
  const auto practical = practical_msa_schedule(3, 0.5);
  double prev_v2 = 1e300, prev_v3 = 1e300;
  for (long t = 0; t <= 100000; t = t * 2 + 1) {
    const auto [w2, w3] = msa_lyapunov_weights(practical, t, 0.5, 1.2);
    CHECK(w2 <= prev_v2);
    CHECK(w3 <= prev_v3);
    prev_v2 = w2;
    prev_v3 = w3;
  }

  const auto two = StepSchedule::msa(2, 1.0, {1.0, 1.0}, {1.0, 0.5});
  CHECK_THROWS_AS(msa_lyapunov_weights(two, 0, 1.0, 1.0), UsageError);
}

TEST_CASE("schedules are positive and non-increasing on a log grid") {
  const auto amsa = practical_amsa_schedule(3, 0.7);
  const auto msa = practical_msa_schedule(3, 0.7);
  double prev_lambda = 1e300;
  std::vector<double> prev_alpha(3, 1e300), prev_msa(3, 1e300);
  for (long t = 0; t <= 10000000; t = t * 2 + 1) {
    CHECK(amsa.lambda(t) > 0.0);
    CHECK(amsa.lambda(t) <= prev_lambda);
    prev_lambda = amsa.lambda(t);
    for (int i = 1; i <= 3; ++i) {
      CHECK(amsa.alpha(i, t) > 0.0);
      CHECK(amsa.alpha(i, t) <= prev_alpha[i - 1]);
      prev_alpha[i - 1] = amsa.alpha(i, t);
      CHECK(msa.alpha(i, t) > 0.0);
      CHECK(msa.alpha(i, t) <= prev_msa[i - 1]);
      prev_msa[i - 1] = msa.alpha(i, t);
    }
    // Ratio invariance for the single-exponent schedule.
    CHECK(amsa.alpha(1, t) / amsa.lambda(t) ==
          amsa.c()[0] / amsa.c_lambda());
  }
}
