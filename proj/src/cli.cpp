#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "amsa/diagnostics.hpp"
#include "amsa/experiment.hpp"
#include "amsa/json_io.hpp"
#include "amsa/mfg.hpp"
#include "amsa/nested_linear.hpp"

namespace amsa {

namespace {

struct CliOutput {
  bool quiet = false;
  template <typename T>
  void line(const T& value) const {
    if (!quiet) std::cout << value << std::endl;
  }
};

int run_generate(const std::string& family, const nlohmann::json& params,
                 const std::string& out_path, const CliOutput& out) {
  std::shared_ptr<const OperatorSystem> system;
  if (family == "nested-linear" || family == "nested_linear") {
    NestedLinearConfig config;
    config.n_levels = params.value("n", 2);
    if (params.contains("dims"))
      config.dims = params["dims"].get<std::vector<int>>();
    config.delta_target = params.value("delta", 0.5);
    config.coupling_scale = params.value("coupling", 0.1);
    config.sigma = params.value("sigma", 0.5);
    config.kernel_kind = params.value("kernel", std::string("fixed"));
    config.kernel_states = params.value("m", 5);
    config.seed = params.value("seed", 0ULL);
    system = make_nested_linear(config);
  } else if (family == "mfg") {
    MfgSpec spec =
        make_random_mfg(params.value("S", 30), params.value("A", 10),
                        params.value("seed", 0ULL), params.value("floor", 0.05));
    spec.u_coupling = params.value("u_coupling", 0.0);
    system = mfg_operator_system(spec);
  } else {
    std::cerr << "unknown family '" << family << "'\n";
    return 2;
  }
  save_json_file(system_to_json(*system), out_path);
  out.line("wrote " + out_path);
  return 0;
}

int run_validate(const std::string& problem_path,
                 const std::string& schedule_path, double D,
                 const std::string& report_path, const CliOutput& out) {
  const auto system = system_from_json(load_json_file(problem_path));
  nlohmann::json report;
  bool ok = true;

  const ParameterStack theta0 = system->default_init();
  const ErgodicityCertificate cert =
      fit_ergodicity(system->kernel(), theta0, 200);
  report["ergodicity"] = {{"rho", cert.rho},
                          {"m_const", cert.m_const},
                          {"c_mixing", cert.c_mixing}};

  AssumptionEstimates estimates;
  if (system->affine_view()) {
    estimates = estimate_lipschitz_bounds(*system, GridSpec{16, 2.0, 1});
    estimates.delta_hat = estimate_nested_delta(*system, {});
  } else {
    estimates = estimate_lipschitz_bounds(*system, GridSpec{4, 1.0, 1});
    estimates.delta_hat = estimate_nested_delta(*system, {theta0}, 4);
  }
  report["assumptions"] = assumption_report_to_json(estimates);

  if (system->metadata().delta) {
    // Benchmark systems promise a positive nested modulus.
    ok = ok && estimates.delta_hat > 0.0;
    report["delta_positive"] = estimates.delta_hat > 0.0;
  } else {
    report["delta_note"] =
        "no stored modulus; delta_hat is informational for this problem kind";
  }
  if (system->metadata().lipschitz) {
    const bool bound_ok =
        check_affine_bound(*system, theta0, *system->metadata().lipschitz)
            .all_ok;
    report["affine_bound_ok"] = bound_ok;
    ok = ok && bound_ok;
  }
  if (system->metadata().solution) {
    double worst = 0.0;
    for (int i = 1; i <= system->n_levels(); ++i)
      worst = std::max(
          worst,
          system->mean_operator(i, *system->metadata().solution).norm());
    report["solution_residual"] = worst;
    ok = ok && worst <= 1e-8;
  }

  if (!schedule_path.empty()) {
    const StepSchedule schedule =
        schedule_from_json(load_json_file(schedule_path));
    if (schedule.kind() == StepSchedule::Kind::amsa) {
      AmsaConditionConstants constants;
      constants.delta = system->metadata().delta
                            ? std::min(1.0, *system->metadata().delta)
                            : 1.0;
      constants.L = system->metadata().lipschitz.value_or(1.0);
      constants.D = D;
      constants.tau_of = make_tau_fn(cert);
      const ConditionReport conditions =
          check_amsa_conditions(schedule, constants, 1000000);
      report["step_size_conditions"] = condition_report_to_json(conditions);
      out.line(std::string("step-size condition block: ") +
               (conditions.all_pass ? "pass" : "fail (reported, not fatal)"));
    } else {
      report["step_size_conditions"] = "msa schedule: no condition block";
    }
  }

  report["ok"] = ok;
  if (!report_path.empty()) save_json_file(report, report_path);
  out.line("delta_hat = " + std::to_string(estimates.delta_hat) +
           ", L_hat = " + std::to_string(estimates.L_hat) +
           ", B_hat = " + std::to_string(estimates.B_hat) +
           ", D_bound = " + std::to_string(estimates.D_bound));
  out.line(ok ? "validation OK" : "validation FAILED");
  return ok ? 0 : 1;
}

int run_run(const std::string& config_path, const std::string& out_dir,
            int seeds_override, int threads_override, const CliOutput& out) {
  nlohmann::json doc = load_json_file(config_path);
  if (seeds_override > 0) doc["seeds"]["count"] = seeds_override;
  if (threads_override > 0) doc["threads"] = threads_override;
  if (!out_dir.empty()) doc["out"] = out_dir;
  const std::string base_dir =
      std::filesystem::path(config_path).parent_path().string();
  ExperimentConfig config = experiment_config_from_json(doc, base_dir);
  if (config.out_dir.empty())
    throw UsageError("run: no output directory (config \"out\" or --out)");

  const ExperimentReport report = run_experiment(config);
  write_report_bundle(report, config, config.out_dir);
  for (const auto& result : report.solvers) {
    for (const auto& [quantity, fit] : result.fits) {
      std::ostringstream os;
      os << result.label << ' ' << quantity << ": slope " << fit.slope
         << " (r2 " << fit.r_squared << ", n " << fit.n_points << ')';
      if (result.predicted_slope.count(quantity))
        os << ", theory " << result.predicted_slope.at(quantity);
      out.line(os.str());
    }
  }
  out.line("wrote " + config.out_dir);
  if (!report.ok) {
    out.line("experiment FAILED: " + report.status);
    return 1;
  }
  return 0;
}

int run_analyze(const std::string& dir, const CliOutput& out) {
  const nlohmann::json summary = load_json_file(dir + "/summary.json");

  std::ifstream in(dir + "/curves.csv");
  if (!in) throw UsageError("analyze: cannot open " + dir + "/curves.csv");
  std::string header;
  std::getline(in, header);
  std::map<std::pair<std::string, std::string>,
           std::pair<std::vector<long>, std::vector<double>>>
      curves;
  std::string line;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string t_s, solver, quantity, mean_s, sem_s;
    std::getline(ss, t_s, ',');
    std::getline(ss, solver, ',');
    std::getline(ss, quantity, ',');
    std::getline(ss, mean_s, ',');
    std::getline(ss, sem_s, ',');
    auto& curve = curves[{solver, quantity}];
    curve.first.push_back(std::stol(t_s));
    curve.second.push_back(std::stod(mean_s));
  }

  nlohmann::json refit;
  bool matches = true;
  for (const auto& [key, curve] : curves) {
    const auto& [solver, quantity] = key;
    if (!summary.contains(solver) || !summary[solver]["fits"].contains(quantity))
      continue;
    const nlohmann::json& original = summary[solver]["fits"][quantity];
    const RateFit fit = fit_rate(curve.first, curve.second,
                                 original["t_lo"].get<long>(),
                                 original["t_hi"].get<long>());
    refit[solver][quantity] = {{"slope", fit.slope},
                               {"intercept", fit.intercept},
                               {"r_squared", fit.r_squared},
                               {"n_points", fit.n_points}};
    const double gap =
        std::abs(fit.slope - original["slope"].get<double>());
    matches = matches && gap <= 1e-12;
    std::ostringstream os;
    os << solver << ' ' << quantity << ": slope " << fit.slope
       << " (original " << original["slope"].get<double>() << ')';
    out.line(os.str());
  }
  save_json_file(refit, dir + "/summary_refit.json");
  out.line(matches ? "refit matches in-run fits" : "refit DIFFERS");
  return matches ? 0 : 1;
}

nlohmann::json mfg_experiment_doc(int S, int A, std::uint64_t seed, int trials,
                                  long horizon, int threads,
                                  const std::string& out_dir) {
  // Schedule constants for the game experiment; the source text gives
  // none, so these are tuned defaults. The policy level runs above the
  // averaging weight (softmax gradients carry a 1/(S A) occupancy factor
  // and need large steps to move at desk scale); both solvers share the
  // same starting steps, the msa side on its optimal exponents.
  const double h = 100.0;
  const double c1 = 2.5 * (h + 1.0);
  nlohmann::json amsa_schedule = {
      {"kind", "amsa"},
      {"n_levels", 3},
      {"h", h},
      {"c_lambda", 0.25 * (h + 1.0)},
      {"c", {c1, 0.5 * (h + 1.0), 0.5 * (h + 1.0)}}};
  nlohmann::json msa_schedule = {
      {"kind", "msa"},
      {"n_levels", 3},
      {"h", h},
      {"c", {c1, 0.5 * std::pow(h + 1.0, 0.75), 0.5 * std::sqrt(h + 1.0)}},
      {"exponents", {1.0, 0.75, 0.5}}};

  nlohmann::json doc;
  doc["config_version"] = 1;
  doc["problem"] = {{"generator",
                     {{"family", "mfg"}, {"S", S}, {"A", A}, {"seed", seed}}}};
  doc["solvers"] = {{{"kind", "amsa"}, {"schedule", amsa_schedule}},
                    {{"kind", "msa"}, {"schedule", msa_schedule}}};
  doc["horizon"] = horizon;
  doc["seeds"] = {{"count", trials}, {"base", 1}};
  doc["record"] = {{"plan", "log"}, {"per_decade", 30}, {"cap", 256}};
  doc["diagnostics"] = false;
  doc["metrics"] = true;
  doc["fit"] = {{"quantities", {"grad_norm", "meanfield_gap"}}};
  doc["threads"] = threads;
  doc["out"] = out_dir;
  return doc;
}

int run_mfg(int S, int A, std::uint64_t seed, int trials, long horizon,
            const std::string& out_dir, int threads, const CliOutput& out) {
  const nlohmann::json doc =
      mfg_experiment_doc(S, A, seed, trials, horizon, threads, out_dir);
  ExperimentConfig config = experiment_config_from_json(doc, "");
  const ExperimentReport report = run_experiment(config);
  if (!out_dir.empty()) write_report_bundle(report, config, out_dir);
  if (!report.ok) {
    out.line("experiment FAILED: " + report.status);
    return 1;
  }

  // Ordinal criteria: both trial-averaged metrics decrease from t = 100 to
  // the horizon, and the amsa endpoint is no worse than the msa endpoint.
  auto value_at = [](const AggregatedCurve& curve, long t_min) {
    for (std::size_t k = 0; k < curve.t.size(); ++k)
      if (curve.t[k] >= t_min) return curve.mean[k];
    return curve.mean.back();
  };
  bool pass = true;
  std::map<std::string, std::map<std::string, double>> finals;
  for (const auto& result : report.solvers) {
    for (const std::string metric : {"grad_norm", "meanfield_gap"}) {
      const auto it = result.curves.find(metric);
      if (it == result.curves.end()) {
        pass = false;
        continue;
      }
      const double early = value_at(it->second, 100);
      const double final = it->second.mean.back();
      finals[metric][result.label] = final;
      const bool decreased = final < early;
      pass = pass && decreased;
      std::ostringstream os;
      os << result.label << ' ' << metric << ": " << early << " at t>=100 -> "
         << final << " at horizon " << (decreased ? "(decreasing)" : "(NOT "
         "decreasing)");
      out.line(os.str());
    }
  }
  for (const auto& [metric, by_solver] : finals) {
    if (by_solver.count("amsa") && by_solver.count("msa")) {
      const bool ahead = by_solver.at("amsa") <= by_solver.at("msa");
      pass = pass && ahead;
      std::ostringstream os;
      os << metric << ": amsa " << by_solver.at("amsa") << " vs msa "
         << by_solver.at("msa") << (ahead ? " (amsa <= msa)" : " (amsa behind)");
      out.line(os.str());
    }
  }
  out.line(pass ? "mfg comparison PASS" : "mfg comparison FAIL");
  return pass ? 0 : 1;
}

}  // namespace

int cli(const std::vector<std::string>& args) {
  CLI::App app{"multi-time-scale stochastic approximation toolkit"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand name

  CliOutput out;
  std::string out_path;
  int seeds = 0;
  int threads = 0;
  app.add_flag("--quiet", out.quiet, "suppress progress output");
  app.add_option("--out", out_path, "output file or directory");
  app.add_option("--seeds", seeds, "override trial count");
  app.add_option("--threads", threads, "worker thread count (0 = hardware)");

  auto* generate = app.add_subcommand("generate", "emit a problem JSON");
  std::string family = "nested-linear";
  int gen_n = 2, gen_m = 5, gen_S = 30, gen_A = 10;
  std::vector<int> gen_dims;
  double gen_delta = 0.5, gen_coupling = 0.1, gen_sigma = 0.5, gen_floor = 0.05;
  std::string gen_kernel = "fixed";
  std::uint64_t gen_seed = 0;
  generate->add_option("--family", family, "nested-linear | mfg");
  generate->add_option("-N,--n", gen_n, "number of levels");
  generate->add_option("--dims", gen_dims, "per-level dimensions");
  generate->add_option("--delta", gen_delta, "target nested modulus");
  generate->add_option("--coupling", gen_coupling, "cross-level coupling");
  generate->add_option("--sigma", gen_sigma, "noise scale");
  generate->add_option("--kernel", gen_kernel, "fixed | iid | mixture");
  generate->add_option("-m", gen_m, "kernel state count");
  generate->add_option("--S", gen_S, "state count (mfg)");
  generate->add_option("--A", gen_A, "action count (mfg)");
  generate->add_option("--floor", gen_floor, "ergodicity floor (mfg)");
  generate->add_option("--seed", gen_seed, "generator seed");

  auto* validate = app.add_subcommand(
      "validate", "run assumption validators on a problem");
  std::string problem_path, schedule_path;
  double cond_D = 1.0;
  validate->add_option("--problem", problem_path, "problem JSON")->required();
  validate->add_option("--schedule", schedule_path,
                       "optional schedule JSON for the condition block");
  validate->add_option("--D", cond_D,
                       "constant for the condition rows (no closed form)");

  auto* run_cmd = app.add_subcommand("run", "execute an experiment config");
  std::string config_path;
  run_cmd->add_option("--config", config_path, "experiment JSON")->required();

  auto* analyze = app.add_subcommand(
      "analyze", "re-fit rates from an existing output directory");
  std::string analyze_dir;
  analyze->add_option("--dir", analyze_dir, "experiment output directory")
      ->required();

  auto* mfg_cmd =
      app.add_subcommand("mfg", "run the synthetic mean-field game end-to-end");
  int mfg_S = 30, mfg_A = 10, mfg_trials = 20;
  long mfg_horizon = 60000;
  std::uint64_t mfg_seed = 0;
  mfg_cmd->add_option("--S", mfg_S, "state count");
  mfg_cmd->add_option("--A", mfg_A, "action count");
  mfg_cmd->add_option("--seed", mfg_seed, "instance seed");
  mfg_cmd->add_option("--trials", mfg_trials, "trial count");
  mfg_cmd->add_option("--horizon", mfg_horizon, "iterations per trial");

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help
      std::cout << app.help() << std::flush;
      return 0;
    }
    std::cerr << e.what() << '\n' << app.help() << std::flush;
    return 2;
  }

  try {
    if (generate->parsed()) {
      nlohmann::json params;
      params["n"] = gen_n;
      if (!gen_dims.empty()) params["dims"] = gen_dims;
      params["delta"] = gen_delta;
      params["coupling"] = gen_coupling;
      params["sigma"] = gen_sigma;
      params["kernel"] = gen_kernel;
      params["m"] = gen_m;
      params["S"] = gen_S;
      params["A"] = gen_A;
      params["floor"] = gen_floor;
      params["seed"] = gen_seed;
      if (out_path.empty()) throw UsageError("generate: --out required");
      return run_generate(family, params, out_path, out);
    }
    if (validate->parsed())
      return run_validate(problem_path, schedule_path, cond_D, out_path, out);
    if (run_cmd->parsed())
      return run_run(config_path, out_path, seeds, threads, out);
    if (analyze->parsed()) return run_analyze(analyze_dir, out);
    if (mfg_cmd->parsed())
      return run_mfg(mfg_S, mfg_A, mfg_seed, mfg_trials, mfg_horizon,
                     out_path.empty() ? "mfg_results" : out_path, threads, out);
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}

}  // namespace amsa
