#pragma once

#include <functional>
#include <string>
#include <vector>

#include "amsa/errors.hpp"
#include "amsa/kernel.hpp"

namespace amsa {

// Exact rational, used where theory values must be reproduced without
// floating-point error.
struct Rational {
  long long num = 0;
  long long den = 1;

  Rational() = default;
  Rational(long long n, long long d);

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  bool operator==(const Rational& o) const { return num == o.num && den == o.den; }
  Rational operator-(const Rational& o) const;
  Rational operator*(long long k) const;
};

// Step-size schedule for either solver:
//   amsa: alpha_i(t) = c_i / (t+h+1),        lambda(t) = c_lambda / (t+h+1)
//   msa:  alpha_i(t) = c_i / (t+h+1)^{a_i},  a_1 >= a_2 >= ... >= a_N
class StepSchedule {
 public:
  enum class Kind { amsa, msa };

  // An empty schedule (0 levels); every evaluation throws until one of the
  // factories below replaces it.
  StepSchedule() = default;

  static StepSchedule amsa(int n_levels, double h, double c_lambda,
                           std::vector<double> c);
  static StepSchedule msa(int n_levels, double h, std::vector<double> c,
                          std::vector<double> exponents);

  Kind kind() const { return kind_; }
  int n_levels() const { return n_levels_; }
  double h() const { return h_; }
  double c_lambda() const { return c_lambda_; }
  const std::vector<double>& c() const { return c_; }
  const std::vector<double>& exponents() const { return exponents_; }

  double lambda(long t) const;             // amsa only
  double alpha(int level, long t) const;   // level is 1-based

 private:
  Kind kind_ = Kind::amsa;
  int n_levels_ = 0;
  double h_ = 0.0;
  double c_lambda_ = 0.0;
  std::vector<double> c_;
  std::vector<double> exponents_;
};

// (lambda, all alphas) at iteration t for an amsa schedule.
std::pair<double, std::vector<double>> amsa_stepsizes(
    const StepSchedule& schedule, long t);

struct ConditionRow {
  std::string name;
  long worst_t = 0;
  double lhs = 0.0;
  double rhs = 0.0;
  bool pass = false;
  long first_pass_t = -1;  // smallest checked t where the row holds
};

struct ConditionReport {
  std::vector<ConditionRow> rows;
  bool all_pass = false;
  std::string caveat;
};

// Problem constants feeding the step-size condition block.
struct AmsaConditionConstants {
  double delta = 1.0;  // must be in (0, 1]
  double L = 1.0;
  double D = 1.0;  // no closed form exists; caller-supplied, defaults to 1
  std::function<long(double)> tau_of;  // mixing time at a given level
};

// Checks the full step-size condition block at t = 0 and on a log-spaced
// grid up to T. Ratio conditions are t-independent for the amsa form and
// are checked exactly. Failures are reported, never thrown.
ConditionReport check_amsa_conditions(const StepSchedule& schedule,
                                      const AmsaConditionConstants& constants,
                                      long T);

// Mixing-time callback backed by an ergodicity certificate.
std::function<long(double)> make_tau_fn(const ErgodicityCertificate& cert);

// Exponents a_i = (N+2-i)/(N+1): a_1 = 1 and every ratio-squared term
// (a_{i-1} - a_i) decays at half the rate of a_N.
std::vector<Rational> optimal_msa_exponents(int n);

// Decay exponent of the Lyapunov function: 2/(N+1) for msa, 1 for amsa.
Rational predict_msa_rate(int n);
Rational predict_amsa_rate(int n);

// Weights of the three-level msa Lyapunov function:
//   v2 = 1728 L^6 alpha_1 / (delta^2 alpha_2)
//   v3 = (8 alpha_1 / (delta alpha_3)) (216 L^6/delta + 373248 L^12/delta^3)
std::pair<double, double> msa_lyapunov_weights(const StepSchedule& schedule,
                                               long t, double delta, double L);

// Desk-scale schedules: c_1 = 32/delta kept exact, lambda/alpha >= 2,
// h sized so lambda(0) < 1/4. These do not satisfy the full condition
// block (fully compliant constants are far too small to measure rates).
StepSchedule practical_amsa_schedule(int n_levels, double delta);
StepSchedule practical_msa_schedule(int n_levels, double delta);

// Fully condition-compliant schedule, built constructively from the
// constants; check_amsa_conditions passes on the result.
StepSchedule compliant_amsa_schedule(int n_levels, double delta, double L,
                                     double D,
                                     const ErgodicityCertificate& cert,
                                     long T_plan);

}  // namespace amsa
