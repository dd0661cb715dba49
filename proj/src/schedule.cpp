#include "amsa/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

namespace amsa {

namespace {

long long gcd_ll(long long a, long long b) {
  while (b != 0) {
    const long long r = a % b;
    a = b;
    b = r;
  }
  return a < 0 ? -a : a;
}

// Log-spaced check grid: t = 0 plus ~12 points per decade up to T.
std::vector<long> check_grid(long T) {
  std::set<long> ts{0, T};
  for (double x = 1.0; x <= static_cast<double>(T); x *= std::pow(10.0, 1.0 / 12.0))
    ts.insert(static_cast<long>(x));
  return {ts.begin(), ts.end()};
}

}  // namespace

Rational::Rational(long long n, long long d) : num(n), den(d) {
  if (den == 0) throw UsageError("Rational: zero denominator");
  if (den < 0) {
    num = -num;
    den = -den;
  }
  const long long g = gcd_ll(num == 0 ? den : num, den);
  if (g > 1) {
    num /= g;
    den /= g;
  }
  if (num == 0) den = 1;
}

Rational Rational::operator-(const Rational& o) const {
  return Rational(num * o.den - o.num * den, den * o.den);
}

Rational Rational::operator*(long long k) const { return Rational(num * k, den); }

StepSchedule StepSchedule::amsa(int n_levels, double h, double c_lambda,
                                std::vector<double> c) {
  if (n_levels < 1) throw UsageError("StepSchedule::amsa: need N >= 1");
  if (static_cast<int>(c.size()) != n_levels)
    throw DimensionError("StepSchedule::amsa: need one c per level");
  if (!(h > 0.0)) throw ValidationError("StepSchedule::amsa: h must be positive");
  if (!(c_lambda > 0.0))
    throw ValidationError("StepSchedule::amsa: c_lambda must be positive");
  for (double ci : c)
    if (!(ci > 0.0))
      throw ValidationError("StepSchedule::amsa: c_i must be positive");
  StepSchedule s;
  s.kind_ = Kind::amsa;
  s.n_levels_ = n_levels;
  s.h_ = h;
  s.c_lambda_ = c_lambda;
  s.c_ = std::move(c);
  return s;
}

StepSchedule StepSchedule::msa(int n_levels, double h, std::vector<double> c,
                               std::vector<double> exponents) {
  if (n_levels < 1) throw UsageError("StepSchedule::msa: need N >= 1");
  if (static_cast<int>(c.size()) != n_levels ||
      static_cast<int>(exponents.size()) != n_levels)
    throw DimensionError("StepSchedule::msa: need one c and one exponent per level");
  if (!(h > 0.0)) throw ValidationError("StepSchedule::msa: h must be positive");
  for (double ci : c)
    if (!(ci > 0.0))
      throw ValidationError("StepSchedule::msa: c_i must be positive");
  for (std::size_t i = 0; i < exponents.size(); ++i) {
    if (!(exponents[i] > 0.0 && exponents[i] <= 1.0))
      throw ValidationError("StepSchedule::msa: exponents must lie in (0,1]");
    if (i > 0 && exponents[i] > exponents[i - 1] + 1e-15)
      throw ValidationError(
          "StepSchedule::msa: exponents must be non-increasing "
          "(faster time scales at lower levels)");
  }
  StepSchedule s;
  s.kind_ = Kind::msa;
  s.n_levels_ = n_levels;
  s.h_ = h;
  s.c_ = std::move(c);
  s.exponents_ = std::move(exponents);
  return s;
}

double StepSchedule::lambda(long t) const {
  if (kind_ != Kind::amsa)
    throw UsageError("StepSchedule::lambda: msa schedules have no lambda");
  return c_lambda_ / (static_cast<double>(t) + h_ + 1.0);
}

double StepSchedule::alpha(int level, long t) const {
  if (level < 1 || level > n_levels_)
    throw RangeError("StepSchedule::alpha: level outside 1..N");
  const double base = static_cast<double>(t) + h_ + 1.0;
  if (kind_ == Kind::amsa) return c_[level - 1] / base;
  return c_[level - 1] / std::pow(base, exponents_[level - 1]);
}

std::pair<double, std::vector<double>> amsa_stepsizes(
    const StepSchedule& schedule, long t) {
  if (schedule.kind() != StepSchedule::Kind::amsa)
    throw UsageError("amsa_stepsizes: schedule kind must be amsa");
  std::vector<double> alphas(schedule.n_levels());
  for (int i = 1; i <= schedule.n_levels(); ++i)
    alphas[i - 1] = schedule.alpha(i, t);
  return {schedule.lambda(t), std::move(alphas)};
}

ConditionReport check_amsa_conditions(const StepSchedule& schedule,
                                      const AmsaConditionConstants& constants,
                                      long T) {
  if (schedule.kind() != StepSchedule::Kind::amsa)
    throw UsageError("check_amsa_conditions: schedule kind must be amsa");
  if (!(constants.delta > 0.0 && constants.delta <= 1.0))
    throw UsageError("check_amsa_conditions: delta must lie in (0, 1]");
  if (T < 1) throw UsageError("check_amsa_conditions: T must be >= 1");
  if (!constants.tau_of)
    throw UsageError("check_amsa_conditions: tau function required "
                     "(build one from an ergodicity certificate)");

  const double delta = constants.delta;
  const double L = constants.L;
  const double D = constants.D;
  const double N = static_cast<double>(schedule.n_levels());
  const int n = schedule.n_levels();
  const auto& c = schedule.c();

  ConditionReport report;
  report.caveat =
      "D has no closed form and is caller-supplied (default 1); rows "
      "involving D are only as tight as that choice.";
  if (L < 1.0)
    report.caveat += " L < 1 supplied; the bounds assume L >= 1.";

  const std::vector<long> grid = check_grid(T);

  auto add_row = [&report](std::string name, long worst_t, double lhs,
                           double rhs, long first_pass) {
    report.rows.push_back(ConditionRow{std::move(name), worst_t, lhs, rhs,
                                       lhs <= rhs, first_pass});
  };
  // t = 0 is the worst case for the monotone rows; the grid spot-check
  // guards against a mistyped schedule form all the same.
  auto add_monotone_row = [&](std::string name,
                              const std::function<double(long)>& lhs_at,
                              double rhs) {
    double worst_lhs = -std::numeric_limits<double>::infinity();
    long worst_t = 0;
    long first_pass = -1;
    for (long t : grid) {
      const double lhs = lhs_at(t);
      if (lhs > worst_lhs) {
        worst_lhs = lhs;
        worst_t = t;
      }
      if (first_pass < 0 && lhs <= rhs) first_pass = t;
    }
    add_row(std::move(name), worst_t, worst_lhs, rhs,
            worst_lhs <= rhs ? first_pass : -1);
  };

  // c_1 = 32 / delta, exact up to rounding.
  {
    const double target = 32.0 / delta;
    const bool ok = std::abs(c[0] - target) <= 1e-9 * target;
    report.rows.push_back(
        ConditionRow{"c1_equals_32_over_delta", 0, c[0], target, ok, ok ? 0 : -1});
  }

  add_monotone_row("lambda_leq_one_fourth",
                   [&](long t) { return schedule.lambda(t); }, 0.25);

  // tau_t^2 lambda_{t - tau_t} <= 1 / (8 D N^3) on the grid.
  {
    const double rhs = 1.0 / (8.0 * D * N * N * N);
    double worst_lhs = -1.0;
    long worst_t = 0;
    long first_pass = -1;
    bool all_ok = true;
    for (long t : grid) {
      const long tau_t = constants.tau_of(schedule.lambda(t));
      const double lam_back = schedule.lambda(std::max<long>(0, t - tau_t));
      const double lhs = static_cast<double>(tau_t) * static_cast<double>(tau_t) *
                         lam_back;
      if (lhs > worst_lhs) {
        worst_lhs = lhs;
        worst_t = t;
      }
      if (lhs <= rhs) {
        if (first_pass < 0) first_pass = t;
      } else {
        all_ok = false;
      }
    }
    report.rows.push_back(ConditionRow{"tau_sq_lambda_leq_1_over_8DN3", worst_t,
                                       worst_lhs, rhs, all_ok, first_pass});
  }

  // alpha_i <= min{delta^2/80N^8L^6, delta/40N^5L^6, 2/5NL^2, 1/delta}.
  {
    const double L2 = L * L;
    const double L6 = L2 * L2 * L2;
    const double cap = std::min(
        std::min(delta * delta / (80.0 * std::pow(N, 8) * L6),
                 delta / (40.0 * std::pow(N, 5) * L6)),
        std::min(2.0 / (5.0 * N * L2), 1.0 / delta));
    for (int i = 1; i <= n; ++i) {
      add_monotone_row("alpha_cap_level_" + std::to_string(i),
                       [&, i](long t) { return schedule.alpha(i, t); }, cap);
    }
  }

  // alpha_i / lambda (t-independent ratio c_i / c_lambda).
  {
    const double L2 = L * L;
    const double L3 = L2 * L;
    const double L6 = L3 * L3;
    const double N3 = N * N * N;
    const double N4 = N3 * N;
    const double cap = std::min(
        std::min(1.0 / (8.0 * (D * N3 + 3.0 / delta + L)),
                 delta / (32.0 * D * N3)),
        std::min(delta / (32.0 * (9.0 * N4 * L6 / delta + 8.0 * N3 * L3)),
                 16.0 / delta));
    for (int i = 1; i <= n; ++i) {
      const double lhs = c[i - 1] / schedule.c_lambda();
      add_row("alpha_over_lambda_level_" + std::to_string(i), 0, lhs, cap,
              lhs <= cap ? 0 : -1);
    }
  }

  // alpha_{i-1} / alpha_i (t-independent ratio).
  {
    const double L3 = L * L * L;
    const double L6 = L3 * L3;
    const double N3 = N * N * N;
    const double N6 = N3 * N3;
    const double cap =
        (delta / 16.0) / (9.0 * N3 * L3 / 2.0 + 4.0 * N6 * L6 / delta);
    for (int i = 2; i <= n; ++i) {
      const double lhs = c[i - 2] / c[i - 1];
      add_row("alpha_ratio_" + std::to_string(i - 1) + "_over_" +
                  std::to_string(i),
              0, lhs, cap, lhs <= cap ? 0 : -1);
    }
  }

  // alpha_i^2 / alpha_1, decreasing in t.
  {
    const double L3 = L * L * L;
    const double cap = std::min(std::pow(delta, 1.5) / (64.0 * std::pow(N, 7)),
                                8.0 / (5.0 * N * N * N * L3));
    for (int i = 1; i <= n; ++i) {
      add_monotone_row("alpha_sq_over_alpha1_level_" + std::to_string(i),
                       [&, i](long t) {
                         const double a = schedule.alpha(i, t);
                         return a * a / schedule.alpha(1, t);
                       },
                       cap);
    }
  }

  report.all_pass = std::all_of(report.rows.begin(), report.rows.end(),
                                [](const ConditionRow& r) { return r.pass; });
  return report;
}

std::function<long(double)> make_tau_fn(const ErgodicityCertificate& cert) {
  return [cert](double a) { return cert.tau(a); };
}

std::vector<Rational> optimal_msa_exponents(int n) {
  if (n < 1) throw UsageError("optimal_msa_exponents: need N >= 1");
  std::vector<Rational> a;
  a.reserve(n);
  for (int i = 1; i <= n; ++i) a.emplace_back(n + 2 - i, n + 1);
  return a;
}

Rational predict_msa_rate(int n) {
  if (n < 1) throw UsageError("predict_msa_rate: need N >= 1");
  return Rational(2, n + 1);
}

Rational predict_amsa_rate(int n) {
  if (n < 1) throw UsageError("predict_amsa_rate: need N >= 1");
  return Rational(1, 1);
}

std::pair<double, double> msa_lyapunov_weights(const StepSchedule& schedule,
                                               long t, double delta,
                                               double L) {
  if (schedule.kind() != StepSchedule::Kind::msa)
    throw UsageError("msa_lyapunov_weights: schedule kind must be msa");
  if (schedule.n_levels() != 3)
    throw UsageError("msa_lyapunov_weights: defined only for N = 3");
  const double a1 = schedule.alpha(1, t);
  const double a2 = schedule.alpha(2, t);
  const double a3 = schedule.alpha(3, t);
  const double L6 = std::pow(L, 6);
  const double L12 = L6 * L6;
  const double v2 = 1728.0 * L6 * a1 / (delta * delta * a2);
  const double v3 = (8.0 * a1 / (delta * a3)) *
                    (216.0 * L6 / delta +
                     373248.0 * L12 / (delta * delta * delta));
  return {v2, v3};
}

StepSchedule practical_amsa_schedule(int n_levels, double delta) {
  if (!(delta > 0.0 && delta <= 1.0))
    throw UsageError("practical_amsa_schedule: delta must lie in (0, 1]");
  const double c1 = 32.0 / delta;
  const double c_lambda = 2.0 * c1;
  const double h = 8.0 * c1;  // lambda(0) = 2 c1 / (8 c1 + 1) < 1/4
  return StepSchedule::amsa(n_levels, h, c_lambda,
                            std::vector<double>(n_levels, c1));
}

StepSchedule practical_msa_schedule(int n_levels, double delta) {
  if (!(delta > 0.0 && delta <= 1.0))
    throw UsageError("practical_msa_schedule: delta must lie in (0, 1]");
  const double c1 = 32.0 / delta;
  const double h = 8.0 * c1;
  const std::vector<Rational> exps = optimal_msa_exponents(n_levels);
  std::vector<double> c(n_levels), exponents(n_levels);
  for (int i = 0; i < n_levels; ++i) {
    exponents[i] = exps[i].value();
    // Equal steps at t = 0 across levels; lower levels then decay slower.
    c[i] = c1 * std::pow(h + 1.0, exponents[i] - 1.0);
  }
  return StepSchedule::msa(n_levels, h, std::move(c), std::move(exponents));
}

StepSchedule compliant_amsa_schedule(int n_levels, double delta, double L,
                                     double D,
                                     const ErgodicityCertificate& cert,
                                     long T_plan) {
  if (!(delta > 0.0 && delta <= 1.0))
    throw UsageError("compliant_amsa_schedule: delta must lie in (0, 1]");
  const double N = static_cast<double>(n_levels);
  const double L2 = L * L;
  const double L3 = L2 * L;
  const double L6 = L3 * L3;
  const double N3 = N * N * N;
  const double N4 = N3 * N;
  const double N6 = N3 * N3;

  // Level constants from the ratio chain, starting at c_1 = 32/delta. A
  // small multiplicative margin keeps every row strictly inside its cap;
  // exact boundary values round past the cap once h grows beyond 2^53.
  const double margin = 1.01;
  const double ratio_cap =
      (delta / 16.0) / (9.0 * N3 * L3 / 2.0 + 4.0 * N6 * L6 / delta);
  std::vector<double> c(n_levels);
  c[0] = 32.0 / delta;
  for (int i = 1; i < n_levels; ++i) c[i] = c[i - 1] / ratio_cap * margin;

  const double lam_ratio_cap = std::min(
      std::min(1.0 / (8.0 * (D * N3 + 3.0 / delta + L)),
               delta / (32.0 * D * N3)),
      std::min(delta / (32.0 * (9.0 * N4 * L6 / delta + 8.0 * N3 * L3)),
               16.0 / delta));
  const double c_lambda = c[n_levels - 1] / lam_ratio_cap * margin;

  const double alpha_cap = std::min(
      std::min(delta * delta / (80.0 * std::pow(N, 8) * L6),
               delta / (40.0 * std::pow(N, 5) * L6)),
      std::min(2.0 / (5.0 * N * L2), 1.0 / delta));
  const double sq_cap = std::min(std::pow(delta, 1.5) / (64.0 * std::pow(N, 7)),
                                 8.0 / (5.0 * N3 * L3));

  double h = 1.0;
  for (int i = 0; i < n_levels; ++i) {
    h = std::max(h, c[i] / alpha_cap);
    h = std::max(h, c[i] * c[i] / (c[0] * sq_cap));
  }
  h *= margin;

  // Shrink lambda(0) until the tau row holds along the whole plan horizon.
  const double tau_rhs = 1.0 / (8.0 * D * N3);
  double lambda0 = 0.2;
  for (int guard = 0; guard < 200; ++guard) {
    const double h_try = std::max(h, c_lambda / lambda0);
    const StepSchedule trial =
        StepSchedule::amsa(n_levels, h_try, c_lambda, c);
    bool ok = true;
    for (long t : check_grid(std::max<long>(1, T_plan))) {
      const long tau_t = cert.tau(trial.lambda(t));
      const double lhs = static_cast<double>(tau_t) * static_cast<double>(tau_t) *
                         trial.lambda(std::max<long>(0, t - tau_t));
      if (lhs > tau_rhs) {
        ok = false;
        break;
      }
    }
    if (ok) return trial;
    lambda0 *= 0.5;
  }
  throw NonConvergenceError(
      "compliant_amsa_schedule: could not satisfy the mixing-time row; "
      "the chain mixes too slowly for these constants");
}

}  // namespace amsa
