#include "amsa/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

#include "amsa/diagnostics.hpp"
#include "amsa/json_io.hpp"
#include "amsa/mfg.hpp"
#include "amsa/nested_linear.hpp"

namespace amsa {

namespace {

// Shortest round-trip decimal form; locale-independent, so emitted files
// are byte-stable across runs and thread counts.
std::string fmt_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// The hash covers what the numbers depend on; where results land and how
// many workers computed them are not part of it.
nlohmann::json canonical_config(nlohmann::json doc) {
  doc.erase("out");
  doc.erase("threads");
  return doc;
}

}  // namespace

RateFit fit_rate(const std::vector<long>& ts, const std::vector<double>& values,
                 long t_lo, long t_hi) {
  if (ts.size() != values.size())
    throw DimensionError("fit_rate: ts and values differ in length");
  RateFit fit;
  fit.t_lo = t_lo;
  fit.t_hi = t_hi;

  std::vector<double> xs, ys;
  int floored = 0;
  for (std::size_t k = 0; k < ts.size(); ++k) {
    if (ts[k] < t_lo || ts[k] > t_hi) continue;
    double v = values[k];
    if (!(v > 0.0)) {
      v = 1e-300;
      ++floored;
    }
    xs.push_back(std::log(static_cast<double>(ts[k]) + 1.0));
    ys.push_back(std::log(v));
  }
  fit.n_points = static_cast<int>(xs.size());
  if (fit.n_points < 5) {
    fit.note = "fewer than 5 points in window";
    return fit;
  }
  if (floored == fit.n_points) {
    fit.note = "no decay (all values non-positive in window)";
    return fit;
  }
  if (floored > 0)
    fit.note = std::to_string(floored) + " non-positive values floored";

  const double n = static_cast<double>(fit.n_points);
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int k = 0; k < fit.n_points; ++k) {
    sx += xs[k];
    sy += ys[k];
    sxx += xs[k] * xs[k];
    sxy += xs[k] * ys[k];
  }
  const double denom = n * sxx - sx * sx;
  if (denom <= 0.0) {
    fit.note = "degenerate abscissa";
    return fit;
  }
  fit.slope = (n * sxy - sx * sy) / denom;
  fit.intercept = (sy - fit.slope * sx) / n;

  double ss_res = 0, ss_tot = 0;
  const double mean_y = sy / n;
  for (int k = 0; k < fit.n_points; ++k) {
    const double pred = fit.intercept + fit.slope * xs[k];
    ss_res += (ys[k] - pred) * (ys[k] - pred);
    ss_tot += (ys[k] - mean_y) * (ys[k] - mean_y);
  }
  fit.r_squared = ss_tot > 0.0 ? std::max(0.0, 1.0 - ss_res / ss_tot) : 1.0;
  fit.ok = true;
  return fit;
}

std::map<std::string, std::vector<std::pair<long, double>>> extract_series(
    const Trajectory& trajectory) {
  std::map<std::string, std::vector<std::pair<long, double>>> series;
  const bool amsa_kind = trajectory.solver == SolverKind::amsa;
  for (const auto& rec : trajectory.records) {
    for (int i = 1; i <= rec.theta.n_levels(); ++i) {
      series["theta_norm_" + std::to_string(i)].emplace_back(
          rec.t, rec.theta.block(i).norm());
      if (amsa_kind)
        series["f_norm_" + std::to_string(i)].emplace_back(
            rec.t, rec.f.block(i).norm());
    }
    if (rec.diag) {
      for (std::size_t i = 0; i < rec.diag->x_norms.size(); ++i) {
        series["x_norm_" + std::to_string(i + 1)].emplace_back(
            rec.t, rec.diag->x_norms[i]);
        series["df_norm_" + std::to_string(i + 1)].emplace_back(
            rec.t, rec.diag->df_norms[i]);
      }
      series["V"].emplace_back(rec.t, rec.diag->V);
      if (rec.diag->weighted_V)
        series["V_weighted"].emplace_back(rec.t, *rec.diag->weighted_V);
    }
    for (const auto& [name, value] : rec.metrics)
      series[name].emplace_back(rec.t, value);
  }
  return series;
}

CurveMap aggregate_trials(const std::vector<Trajectory>& trajectories) {
  if (trajectories.empty())
    throw UsageError("aggregate_trials: no trajectories");
  for (const auto& traj : trajectories) {
    if (traj.config_hash != trajectories.front().config_hash)
      throw ValidationError("aggregate_trials: mixed config hashes");
  }

  std::vector<std::map<std::string, std::vector<std::pair<long, double>>>>
      all_series;
  for (const auto& traj : trajectories)
    all_series.push_back(extract_series(traj));

  CurveMap out;
  for (const auto& [name, reference] : all_series.front()) {
    AggregatedCurve curve;
    curve.n_trials = static_cast<int>(trajectories.size());
    for (const auto& [t, _] : reference) curve.t.push_back(t);

    std::vector<double> sum(curve.t.size(), 0.0), sum_sq(curve.t.size(), 0.0);
    for (const auto& series : all_series) {
      const auto it = series.find(name);
      if (it == series.end() || it->second.size() != curve.t.size())
        throw ValidationError("aggregate_trials: record grids do not match "
                              "for quantity '" + name + "'");
      for (std::size_t k = 0; k < curve.t.size(); ++k) {
        if (it->second[k].first != curve.t[k])
          throw ValidationError("aggregate_trials: record grids do not match "
                                "for quantity '" + name + "'");
        sum[k] += it->second[k].second;
        sum_sq[k] += it->second[k].second * it->second[k].second;
      }
    }
    const double n = static_cast<double>(trajectories.size());
    for (std::size_t k = 0; k < curve.t.size(); ++k) {
      const double mean = sum[k] / n;
      curve.mean.push_back(mean);
      if (trajectories.size() > 1) {
        const double var =
            std::max(0.0, (sum_sq[k] - n * mean * mean) / (n - 1.0));
        curve.sem.push_back(std::sqrt(var / n));
      } else {
        curve.sem.push_back(0.0);
      }
    }
    out.emplace(name, std::move(curve));
  }
  return out;
}

namespace {

// Fit window: the final `window_decades` decades, after the schedule and
// mixing transient. The early iterations carry the h^2/(t+h+1)^2 term and
// contaminate the asymptotic slope.
std::pair<long, long> fit_window(const ExperimentConfig& config,
                                 const SolverSetup& setup) {
  const long t_hi = config.horizon;
  double lo = static_cast<double>(t_hi) /
              std::pow(10.0, config.fit.window_decades);
  if (config.fit.skip_transient) {
    lo = std::max(lo, 10.0 * setup.schedule.h());
    if (setup.schedule.kind() == StepSchedule::Kind::amsa) {
      try {
        const ErgodicityCertificate cert = fit_ergodicity(
            config.system->kernel(), config.system->default_init(), 200);
        lo = std::max(lo, 10.0 * static_cast<double>(
                              cert.tau(setup.schedule.lambda(0))));
      } catch (const Error&) {
        // theta-dependent or slowly mixing kernel: fall back to the h rule
      }
    }
  }
  long t_lo = static_cast<long>(std::ceil(lo));
  if (t_lo >= t_hi) t_lo = t_hi / 2;
  return {t_lo, t_hi};
}

double predicted_slope_for(const std::string& quantity,
                           const SolverSetup& setup, int n_levels) {
  if (quantity != "V" && quantity != "V_weighted")
    return std::numeric_limits<double>::quiet_NaN();
  return setup.kind == SolverKind::amsa
             ? -predict_amsa_rate(n_levels).value()
             : -predict_msa_rate(n_levels).value();
}

std::vector<Trajectory> run_trials(const ExperimentConfig& config,
                                   const SolverSetup& setup,
                                   const std::string& hash) {
  const int count = config.seed_count;
  std::vector<Trajectory> trajectories(count);
  std::vector<std::string> errors(count);

  int threads = config.threads > 0
                    ? config.threads
                    : static_cast<int>(std::thread::hardware_concurrency());
  threads = std::max(1, std::min(threads, count));

  RunOptions options;
  options.divergence_cap = config.divergence_cap;
  options.with_metrics = config.metrics;

  AnnotateOptions annotate_options;
  annotate_options.schedule = &setup.schedule;
  if (config.system->metadata().delta)
    annotate_options.delta = *config.system->metadata().delta;
  if (config.system->metadata().lipschitz)
    annotate_options.L = *config.system->metadata().lipschitz;
  const bool weighted_ready =
      annotate_options.delta > 0.0 && annotate_options.L > 0.0;

  std::atomic<int> next{0};
  auto worker = [&]() {
    for (;;) {
      const int idx = next.fetch_add(1);
      if (idx >= count) return;
      try {
        Trajectory traj = run(*config.system, setup.schedule, setup.kind,
                              config.horizon,
                              derive_seed(config.base_seed, idx), config.init,
                              config.plan, options);
        traj.config_hash = hash;
        if (config.diagnostics && !traj.diverged) {
          AnnotateOptions opts = annotate_options;
          if (!weighted_ready) opts.schedule = nullptr;
          annotate_trajectory(traj, *config.system, opts);
        }
        trajectories[idx] = std::move(traj);
      } catch (const std::exception& e) {
        errors[idx] = e.what();
      }
    }
  };

  std::vector<std::thread> pool;
  for (int w = 0; w < threads; ++w) pool.emplace_back(worker);
  for (auto& th : pool) th.join();

  for (int idx = 0; idx < count; ++idx) {
    if (!errors[idx].empty())
      throw Error("trial " + std::to_string(idx) + " (" + setup.label +
                  ") failed: " + errors[idx]);
  }
  return trajectories;
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& config) {
  if (!config.system) throw UsageError("run_experiment: no system configured");
  if (config.seed_count < 1)
    throw UsageError("run_experiment: need at least one seed");
  if (config.horizon < 100)
    throw UsageError("run_experiment: horizon must be >= 100");
  if (config.solvers.empty())
    throw UsageError("run_experiment: no solvers configured");

  ExperimentReport report;
  report.config_hash = config_hash_hex(canonical_config(config.source));

  std::vector<std::string> quantities = config.fit.quantities;
  if (quantities.empty()) quantities.push_back("V");

  for (const auto& setup : config.solvers) {
    SolverResult result;
    result.label = setup.label;
    result.kind = setup.kind;

    std::vector<Trajectory> trajectories =
        run_trials(config, setup, report.config_hash);
    result.n_trials = static_cast<int>(trajectories.size());

    std::vector<Trajectory> healthy;
    for (auto& traj : trajectories) {
      if (traj.diverged)
        ++result.n_diverged;
      else
        healthy.push_back(std::move(traj));
    }
    if (healthy.empty() ||
        result.n_diverged * 5 > result.n_trials) {  // > 20%
      report.ok = false;
      report.status = "solver " + setup.label + ": " +
                      std::to_string(result.n_diverged) + "/" +
                      std::to_string(result.n_trials) + " trials diverged";
      report.solvers.push_back(std::move(result));
      continue;
    }

    result.curves = aggregate_trials(healthy);

    const auto [t_lo, t_hi] = fit_window(config, setup);
    for (const auto& quantity : quantities) {
      const auto it = result.curves.find(quantity);
      if (it == result.curves.end()) continue;
      result.fits[quantity] =
          fit_rate(it->second.t, it->second.mean, t_lo, t_hi);
      const double predicted =
          predicted_slope_for(quantity, setup, config.system->n_levels());
      if (!std::isnan(predicted)) result.predicted_slope[quantity] = predicted;
    }
    report.solvers.push_back(std::move(result));
  }
  return report;
}

nlohmann::json summary_json(const ExperimentReport& report,
                            const ExperimentConfig& config) {
  nlohmann::json doc;
  doc["config_version"] = 1;
  doc["config_hash"] = report.config_hash;
  doc["ok"] = report.ok;
  doc["status"] = report.status;
  doc["horizon"] = config.horizon;
  doc["seeds"] = config.seed_count;

  for (const auto& result : report.solvers) {
    nlohmann::json entry;
    entry["kind"] = to_string(result.kind);
    entry["n_trials"] = result.n_trials;
    entry["n_diverged"] = result.n_diverged;
    nlohmann::json fits = nlohmann::json::object();
    for (const auto& [quantity, fit] : result.fits) {
      nlohmann::json f;
      f["slope"] = fit.slope;
      f["intercept"] = fit.intercept;
      f["r_squared"] = fit.r_squared;
      f["t_lo"] = fit.t_lo;
      f["t_hi"] = fit.t_hi;
      f["n_points"] = fit.n_points;
      f["ok"] = fit.ok;
      f["note"] = fit.note;
      if (result.predicted_slope.count(quantity)) {
        f["predicted_slope"] = result.predicted_slope.at(quantity);
        f["gap"] = fit.slope - result.predicted_slope.at(quantity);
      }
      fits[quantity] = std::move(f);
    }
    entry["fits"] = std::move(fits);
    // Convenience keys for the primary quantity.
    const std::string primary =
        config.fit.quantities.empty() ? "V" : config.fit.quantities.front();
    if (result.fits.count(primary)) {
      entry["slope"] = result.fits.at(primary).slope;
      if (!result.fits.at(primary).ok)
        entry["fit_status"] = result.fits.at(primary).note.empty()
                                  ? "fit failed"
                                  : result.fits.at(primary).note;
    }
    doc[result.label] = std::move(entry);
  }
  return doc;
}

namespace {

void write_curves_csv(const ExperimentReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write '" + path + "'");
  out << "t,solver,quantity,mean,stderr\n";
  for (const auto& result : report.solvers) {
    for (const auto& [quantity, curve] : result.curves) {
      for (std::size_t k = 0; k < curve.t.size(); ++k) {
        out << curve.t[k] << ',' << result.label << ',' << quantity << ','
            << fmt_double(curve.mean[k]) << ',' << fmt_double(curve.sem[k])
            << '\n';
      }
    }
  }
}

struct PlotSeries {
  std::string label;
  std::vector<double> x, y;
  std::string color;
};

// Minimal self-contained log-log SVG: decade grid, data polylines,
// dashed fitted lines, dotted predicted-slope guides.
void write_loglog_svg(const std::string& path, const std::string& title,
                      const std::vector<PlotSeries>& series,
                      const std::vector<PlotSeries>& guides) {
  const double W = 720, H = 480, ml = 70, mr = 20, mt = 40, mb = 50;
  double x_min = std::numeric_limits<double>::infinity(), x_max = 0;
  double y_min = x_min, y_max = 0;
  for (const auto& s : series) {
    for (std::size_t k = 0; k < s.x.size(); ++k) {
      if (!(s.y[k] > 0.0) || !(s.x[k] > 0.0)) continue;
      x_min = std::min(x_min, s.x[k]);
      x_max = std::max(x_max, s.x[k]);
      y_min = std::min(y_min, s.y[k]);
      y_max = std::max(y_max, s.y[k]);
    }
  }
  if (!(x_max > 0.0) || !(y_max > 0.0)) {
    x_min = y_min = 1.0;
    x_max = y_max = 10.0;
  }
  const double lx0 = std::floor(std::log10(x_min));
  const double lx1 = std::ceil(std::log10(x_max));
  const double ly0 = std::floor(std::log10(y_min));
  const double ly1 = std::ceil(std::log10(std::max(y_max, y_min * 10)));
  auto X = [&](double v) {
    return ml + (std::log10(v) - lx0) / std::max(lx1 - lx0, 1e-9) *
                    (W - ml - mr);
  };
  auto Y = [&](double v) {
    return H - mb - (std::log10(v) - ly0) / std::max(ly1 - ly0, 1e-9) *
                        (H - mt - mb);
  };

  std::ofstream out(path);
  if (!out) throw UsageError("cannot write '" + path + "'");
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W
      << "\" height=\"" << H << "\" viewBox=\"0 0 " << W << ' ' << H
      << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"16\">" << title
      << "</text>\n";

  for (int d = static_cast<int>(lx0); d <= static_cast<int>(lx1); ++d) {
    const double x = X(std::pow(10.0, d));
    out << "<line x1=\"" << x << "\" y1=\"" << mt << "\" x2=\"" << x
        << "\" y2=\"" << H - mb << "\" stroke=\"#dddddd\"/>\n";
    out << "<text x=\"" << x << "\" y=\"" << H - mb + 18
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"11\">1e" << d << "</text>\n";
  }
  for (int d = static_cast<int>(ly0); d <= static_cast<int>(ly1); ++d) {
    const double y = Y(std::pow(10.0, d));
    out << "<line x1=\"" << ml << "\" y1=\"" << y << "\" x2=\"" << W - mr
        << "\" y2=\"" << y << "\" stroke=\"#dddddd\"/>\n";
    out << "<text x=\"" << ml - 6 << "\" y=\"" << y + 4
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
           "font-size=\"11\">1e" << d << "</text>\n";
  }
  out << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << W - ml - mr
      << "\" height=\"" << H - mt - mb
      << "\" fill=\"none\" stroke=\"#444444\"/>\n";

  auto polyline = [&](const PlotSeries& s, const char* dash) {
    out << "<polyline fill=\"none\" stroke=\"" << s.color
        << "\" stroke-width=\"1.5\"" << dash << " points=\"";
    for (std::size_t k = 0; k < s.x.size(); ++k) {
      if (!(s.y[k] > 0.0) || !(s.x[k] > 0.0)) continue;
      out << X(s.x[k]) << ',' << Y(s.y[k]) << ' ';
    }
    out << "\"/>\n";
  };
  for (const auto& s : series) polyline(s, "");
  for (const auto& g : guides) polyline(g, " stroke-dasharray=\"6,4\"");

  double ly = mt + 16;
  for (const auto& s : series) {
    out << "<line x1=\"" << W - mr - 150 << "\" y1=\"" << ly << "\" x2=\""
        << W - mr - 120 << "\" y2=\"" << ly << "\" stroke=\"" << s.color
        << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << W - mr - 114 << "\" y=\"" << ly + 4
        << "\" font-family=\"sans-serif\" font-size=\"12\">" << s.label
        << "</text>\n";
    ly += 16;
  }
  for (const auto& g : guides) {
    out << "<line x1=\"" << W - mr - 150 << "\" y1=\"" << ly << "\" x2=\""
        << W - mr - 120 << "\" y2=\"" << ly << "\" stroke=\"" << g.color
        << "\" stroke-width=\"1.5\" stroke-dasharray=\"6,4\"/>\n";
    out << "<text x=\"" << W - mr - 114 << "\" y=\"" << ly + 4
        << "\" font-family=\"sans-serif\" font-size=\"12\">" << g.label
        << "</text>\n";
    ly += 16;
  }
  out << "</svg>\n";
}

const char* solver_color(std::size_t index) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b"};
  return palette[index % 6];
}

}  // namespace

void write_report_bundle(const ExperimentReport& report,
                         const ExperimentConfig& config,
                         const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  write_curves_csv(report, out_dir + "/curves.csv");
  save_json_file(summary_json(report, config), out_dir + "/summary.json");

  std::vector<std::string> quantities = config.fit.quantities;
  if (quantities.empty()) quantities.push_back("V");
  for (const auto& quantity : quantities) {
    std::vector<PlotSeries> series, guides;
    for (std::size_t s = 0; s < report.solvers.size(); ++s) {
      const auto& result = report.solvers[s];
      const auto it = result.curves.find(quantity);
      if (it == result.curves.end()) continue;
      PlotSeries ps;
      ps.label = result.label;
      ps.color = solver_color(s);
      for (std::size_t k = 0; k < it->second.t.size(); ++k) {
        ps.x.push_back(static_cast<double>(it->second.t[k]) + 1.0);
        ps.y.push_back(it->second.mean[k]);
      }
      series.push_back(std::move(ps));

      const auto fit_it = result.fits.find(quantity);
      if (fit_it != result.fits.end() && fit_it->second.ok) {
        const RateFit& fit = fit_it->second;
        PlotSeries guide;
        guide.color = solver_color(s);
        char slope_buf[32];
        std::snprintf(slope_buf, sizeof(slope_buf), "%.3f", fit.slope);
        guide.label = result.label + " fit " + slope_buf;
        for (double t : {static_cast<double>(fit.t_lo),
                         static_cast<double>(fit.t_hi)}) {
          guide.x.push_back(t + 1.0);
          guide.y.push_back(
              std::exp(fit.intercept + fit.slope * std::log(t + 1.0)));
        }
        guides.push_back(std::move(guide));
        if (result.predicted_slope.count(quantity)) {
          const double pred = result.predicted_slope.at(quantity);
          PlotSeries pline;
          pline.color = "#999999";
          pline.label = result.label + " theory " + fmt_double(pred);
          const double anchor_y =
              std::exp(fit.intercept + fit.slope *
                                           std::log(fit.t_lo + 1.0));
          for (double t : {static_cast<double>(fit.t_lo),
                           static_cast<double>(fit.t_hi)}) {
            pline.x.push_back(t + 1.0);
            pline.y.push_back(anchor_y *
                              std::pow((t + 1.0) / (fit.t_lo + 1.0), pred));
          }
          guides.push_back(std::move(pline));
        }
      }
    }
    write_loglog_svg(out_dir + "/plot_" + quantity + ".svg", quantity, series,
                     guides);
  }
}

void dump_trajectory_csv(const Trajectory& trajectory,
                         const std::string& csv_path,
                         const std::string& sidecar_path) {
  std::ofstream out(csv_path);
  if (!out) throw UsageError("cannot write '" + csv_path + "'");
  out << "t,level,quantity,value\n";
  for (const auto& rec : trajectory.records) {
    for (int i = 1; i <= rec.theta.n_levels(); ++i) {
      out << rec.t << ',' << i << ",theta_norm,"
          << fmt_double(rec.theta.block(i).norm()) << '\n';
      out << rec.t << ',' << i << ",f_norm,"
          << fmt_double(rec.f.block(i).norm()) << '\n';
    }
    if (rec.diag) {
      for (std::size_t i = 0; i < rec.diag->x_norms.size(); ++i) {
        out << rec.t << ',' << i + 1 << ",x_norm,"
            << fmt_double(rec.diag->x_norms[i]) << '\n';
        out << rec.t << ',' << i + 1 << ",df_norm,"
            << fmt_double(rec.diag->df_norms[i]) << '\n';
      }
      out << rec.t << ",0,V," << fmt_double(rec.diag->V) << '\n';
      if (rec.diag->weighted_V)
        out << rec.t << ",0,V_weighted," << fmt_double(*rec.diag->weighted_V)
            << '\n';
    }
    for (const auto& [name, value] : rec.metrics)
      out << rec.t << ",0," << name << ',' << fmt_double(value) << '\n';
  }

  nlohmann::json sidecar;
  sidecar["seed"] = trajectory.seed;
  sidecar["solver"] = to_string(trajectory.solver);
  sidecar["config_hash"] = trajectory.config_hash;
  sidecar["diverged"] = trajectory.diverged;
  if (trajectory.diverged)
    sidecar["divergence_message"] = trajectory.divergence_message;
  save_json_file(sidecar, sidecar_path);
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& doc,
                                             const std::string& base_dir) {
  if (doc.value("config_version", 0) != 1)
    throw ValidationError("experiment config: expected config_version 1");

  ExperimentConfig config;
  config.source = doc;

  const nlohmann::json& problem = doc.at("problem");
  if (problem.contains("path")) {
    std::filesystem::path p = problem.at("path").get<std::string>();
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    nlohmann::json loaded = load_json_file(p.string());
    config.system = system_from_json(loaded);
    // Hash the loaded document so the bundle is a pure function of content.
    config.source["problem"] = {{"inline", std::move(loaded)}};
  } else if (problem.contains("inline")) {
    config.system = system_from_json(problem.at("inline"));
  } else if (problem.contains("generator")) {
    const nlohmann::json& gen = problem.at("generator");
    const std::string family = gen.at("family").get<std::string>();
    if (family == "nested_linear") {
      NestedLinearConfig nl;
      nl.n_levels = gen.value("n", 2);
      if (gen.contains("dims")) nl.dims = gen["dims"].get<std::vector<int>>();
      nl.delta_target = gen.value("delta", 0.5);
      nl.coupling_scale = gen.value("coupling", 0.1);
      nl.sigma = gen.value("sigma", 0.5);
      nl.kernel_kind = gen.value("kernel", std::string("fixed"));
      nl.kernel_states = gen.value("m", 5);
      nl.kernel_floor = gen.value("kernel_floor", 0.1);
      nl.seed = gen.value("seed", 0ULL);
      config.system = make_nested_linear(nl);
    } else if (family == "mfg") {
      MfgSpec spec = make_random_mfg(gen.value("S", 30), gen.value("A", 10),
                                     gen.value("seed", 0ULL),
                                     gen.value("floor", 0.05));
      spec.u_coupling = gen.value("u_coupling", 0.0);
      config.system = mfg_operator_system(spec);
    } else {
      throw ValidationError("experiment config: unknown generator family '" +
                            family + "'");
    }
  } else {
    throw ValidationError("experiment config: problem needs path, inline or "
                          "generator");
  }

  const int n = config.system->n_levels();
  double delta = config.system->metadata().delta
                     ? std::min(1.0, *config.system->metadata().delta)
                     : 1.0;
  for (const auto& solver_doc : doc.at("solvers")) {
    SolverSetup setup;
    setup.kind =
        solver_kind_from_string(solver_doc.at("kind").get<std::string>());
    setup.label = solver_doc.value("label", to_string(setup.kind));
    if (solver_doc.contains("schedule") &&
        solver_doc["schedule"].is_object()) {
      setup.schedule = schedule_from_json(solver_doc["schedule"]);
    } else {
      setup.schedule = setup.kind == SolverKind::amsa
                           ? practical_amsa_schedule(n, delta)
                           : practical_msa_schedule(n, delta);
    }
    config.solvers.push_back(std::move(setup));
  }

  config.horizon = doc.value("horizon", 10000L);
  if (doc.contains("seeds")) {
    config.seed_count = doc["seeds"].value("count", 1);
    config.base_seed = doc["seeds"].value("base", 1ULL);
  }
  if (doc.contains("record")) {
    const nlohmann::json& rec = doc["record"];
    const std::string plan = rec.value("plan", std::string("log"));
    if (plan == "log")
      config.plan = RecordPlan::log_spaced(rec.value("per_decade", 60),
                                           rec.value("cap", 512));
    else if (plan == "dense")
      config.plan = RecordPlan::dense_prefix(rec.value("until", 1000L));
    else if (plan == "all")
      config.plan = RecordPlan::all();
    else if (plan == "none")
      config.plan = RecordPlan::none();
    else
      throw ValidationError("experiment config: unknown record plan '" + plan +
                            "'");
  }
  config.diagnostics = doc.value("diagnostics", true);
  config.metrics = doc.value("metrics", true);
  if (doc.contains("fit")) {
    config.fit.window_decades = doc["fit"].value("window_decades", 1.5);
    config.fit.skip_transient = doc["fit"].value("skip_transient", true);
    if (doc["fit"].contains("quantities"))
      config.fit.quantities =
          doc["fit"]["quantities"].get<std::vector<std::string>>();
  }
  if (doc.contains("init") && doc["init"].contains("x0"))
    config.init.x0 = doc["init"]["x0"].get<int>();
  if (doc.contains("init") && doc["init"].value("f_init", "operator") == "zero")
    config.init.f_init = InitSpec::FInit::zero;
  config.out_dir = doc.value("out", std::string());
  config.threads = doc.value("threads", 0);
  config.divergence_cap = doc.value("divergence_cap", 1e12);
  return config;
}

}  // namespace amsa
