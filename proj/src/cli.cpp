/* Copyright 2026 The qtraj Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "qtraj/cli.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "qtraj/analysis.hpp"
#include "qtraj/config.hpp"
#include "qtraj/engine.hpp"
#include "qtraj/model.hpp"
#include "qtraj/sampler.hpp"
#include "qtraj/stats.hpp"

namespace qtraj {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

/// Files are written under temporary names and renamed together on commit;
/// an uncommitted set removes everything it wrote.
class OutputSet {
public:
  explicit OutputSet(fs::path dir) : dir_(std::move(dir)) {}
  OutputSet(const OutputSet&) = delete;
  OutputSet& operator=(const OutputSet&) = delete;

  ~OutputSet() {
    if (committed_) {
      return;
    }
    std::error_code ec;
    for (auto& f : files_) {
      f.stream.reset();
      fs::remove(f.partial, ec);
    }
    if (created_dir_) {
      fs::remove(dir_, ec);
    }
  }

  std::ostream& open(const std::string& name) {
    if (!fs::exists(dir_)) {
      fs::create_directories(dir_);
      created_dir_ = true;
    }
    File f;
    f.name = name;
    f.partial = dir_ / ("." + name + ".partial");
    f.stream = std::make_unique<std::ofstream>(f.partial, std::ios::binary);
    if (!*f.stream) {
      throw std::runtime_error("cannot write '" + f.partial.string() + "'");
    }
    files_.push_back(std::move(f));
    return *files_.back().stream;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& f : files_) out.push_back(f.name);
    return out;
  }

  void commit() {
    for (auto& f : files_) {
      f.stream->flush();
      if (!*f.stream) {
        throw std::runtime_error("write failed for '" + f.name + "'");
      }
      f.stream.reset();
    }
    for (auto& f : files_) {
      fs::rename(f.partial, dir_ / f.name);
    }
    committed_ = true;
  }

private:
  struct File {
    std::string name;
    fs::path partial;
    std::unique_ptr<std::ofstream> stream;
  };
  fs::path dir_;
  std::vector<File> files_;
  bool created_dir_ = false;
  bool committed_ = false;
};

/// Flag values kept as text so they pass through RunConfig::set like config
/// file entries.
struct Flags {
  std::string config_path;
  std::map<std::string, std::string> values;
  bool mixture = false;
  bool paper_scale = false;
  bool oracle = false;
  bool histogram = false;
  std::vector<double> sweep_x1;
  std::size_t bins = 50;
  std::size_t points = 801;
};

void add_common(CLI::App* cmd, Flags& flags) {
  cmd->add_option("--config", flags.config_path,
                  "key=value config file or a run manifest");
  struct Spec {
    const char* flag;
    const char* key;
    const char* help;
  };
  static const Spec kSpecs[] = {
      {"--x1", "x1", "eigenvalue separation x1"},
      {"--r", "r", "squeezing parameter"},
      {"--alpha0", "alpha0", "cat amplitude; sets r = 0 and x1 = 2 alpha0"},
      {"--c1sq", "c1sq", "weight |c1|^2 of the +x1 component"},
      {"--g", "g", "gain magnitude g > 0"},
      {"--gtf", "gtf", "final time in units of 1/g"},
      {"--dt", "dt", "step g dt"},
      {"--n", "n", "number of trajectories"},
      {"--seed", "seed", "master seed (fallback: QTRAJ_SEED, then 1)"},
      {"--measure", "measure", "measured quadrature: x or p"},
      {"--integrator", "integrator", "midpoint or exact"},
      {"--grid-dx", "grid_dx", "x bin width"},
      {"--grid-dp", "grid_dp", "p bin width"},
      {"--workers", "workers", "worker threads; 0 uses all"},
      {"--out-dir", "out_dir", "output directory"},
      {"--shift-x1", "shift_x1", "offset x1 of the simulated state only"},
  };
  for (const auto& s : kSpecs) {
    const std::string key = s.key;
    cmd->add_option_function<std::string>(
        s.flag, [&flags, key](const std::string& v) { flags.values[key] = v; },
        s.help);
  }
  cmd->add_flag("--mixture", flags.mixture, "use the mixture instead of the superposition");
  cmd->add_flag("--paper-scale", flags.paper_scale,
                "N = 2e6 with dx = 0.02, dp = 0.05");
}

RunConfig build_config(const Flags& flags) {
  RunConfig config;
  if (!flags.config_path.empty()) {
    apply_config_file(config, flags.config_path);
  }
  if (flags.values.count("alpha0") &&
      (flags.values.count("x1") || flags.values.count("r"))) {
    throw ConfigError("--alpha0 fixes x1 and r; do not combine it with --x1 or --r");
  }
  for (const auto& [key, value] : flags.values) {
    config.set(key, value);
  }
  if (flags.mixture) config.set("mixture", "true");
  if (flags.paper_scale) config.set("paper_scale", "true");
  if (config.paper_scale) {
    config.n_samples = 2000000;
    config.grid_dx = 0.02;
    config.grid_dp = 0.05;
  }
  config.spec.validate();
  (void)config.measurement();
  return config;
}

json config_json(const RunConfig& config) {
  json j = json::object();
  for (const auto& [k, v] : config.entries()) {
    j[k] = v;
  }
  return j;
}

json manifest(const std::string& command, const RunConfig& config,
              const MeasurementConfig& cfg, double seconds,
              const std::vector<std::string>& outputs, const json& checks) {
  json m;
  m["tool"] = "qtraj";
  m["version"] = kVersion;
  m["command"] = command;
  m["config"] = config_json(config);
  m["seed"] = cfg.seed;
  m["wall_time_s"] = seconds;
  m["outputs"] = outputs;
  m["checks"] = checks;
  return m;
}

double elapsed(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
      .count();
}

std::vector<int> all_steps(int n_steps) {
  std::vector<int> steps(static_cast<std::size_t>(n_steps) + 1);
  for (int i = 0; i <= n_steps; ++i) steps[static_cast<std::size_t>(i)] = i;
  return steps;
}

json gof_json(const GoodnessOfFit& g) {
  return {{"chi2", g.chi2}, {"k", g.k}, {"lower", g.lower}, {"upper", g.upper},
          {"p_value", g.p_value}, {"pass", g.pass}};
}

// ---------------------------------------------------------------------------

int cmd_simulate(const Flags& flags, std::ostream& out) {
  const auto start = std::chrono::steady_clock::now();
  const RunConfig config = build_config(flags);
  const MeasurementConfig cfg = config.measurement();
  EngineOptions engine = config.engine();
  engine.stored_steps = all_steps(cfg.n_steps());
  const TrajectoryBatch batch = simulate(config.spec, cfg, engine);

  OutputSet files(config.out_dir);
  std::ostream& csv = files.open("paths.csv");
  csv << "sample_id,t,x,p,hill_label\n";
  for (std::size_t i = 0; i < batch.n_rows; ++i) {
    const int label = batch.boundary_hill[i];
    for (std::size_t s = 0; s < batch.n_slices(); ++s) {
      csv << (batch.first_row + i) << ',' << format_double(batch.time_of_slice(s))
          << ',' << format_double(batch.x(i, s)) << ','
          << format_double(batch.p(i, s)) << ',' << label << '\n';
    }
  }
  const auto outputs = std::vector<std::string>{"paths.csv", "manifest.json"};
  files.open("manifest.json")
      << manifest("simulate", config, cfg, elapsed(start), outputs, json::object())
             .dump(2)
      << '\n';
  files.commit();
  out << "wrote " << batch.n_rows << " trajectories x " << batch.n_slices()
      << " slices to " << (fs::path(config.out_dir) / "paths.csv").string() << '\n';
  return kExitOk;
}

int cmd_verify(const Flags& flags, std::ostream& out) {
  const auto start = std::chrono::steady_clock::now();
  const RunConfig config = build_config(flags);
  const MeasurementConfig cfg = config.measurement();
  SuperpositionSpec sim_spec = config.spec;
  sim_spec.x1 += config.shift_x1;
  sim_spec.validate();

  VerificationPlan plan;
  plan.dx = config.grid_dx;
  plan.dp = config.grid_dp;
  Grid3 grid;
  const Chi2Report report =
      run_chi2_verification(config.spec, sim_spec, cfg, config.engine(), plan, &grid);

  OutputSet files(config.out_dir);
  json r;
  r["chi2_bar"] = report.chi2_bar;
  r["k"] = report.k;
  r["lower"] = report.lower;
  r["upper"] = report.upper;
  r["pass"] = report.pass;
  r["n_valid"] = report.n_valid;
  r["total_bins"] = report.total_bins;
  r["n_samples"] = report.n_samples;
  r["out_of_grid"] = report.out_of_grid;
  r["min_count"] = plan.chi2.min_count;
  r["grid"] = {{"x_lo", grid.x_edges.front()}, {"x_hi", grid.x_edges.back()},
               {"dx", config.grid_dx}, {"nx", grid.nx()},
               {"p_lo", grid.p_edges.front()}, {"p_hi", grid.p_edges.back()},
               {"dp", config.grid_dp}, {"np", grid.np()},
               {"steps", grid.steps}};
  json slices = json::array();
  for (const auto& s : report.per_slice) {
    slices.push_back({{"t", s.t}, {"chi2", s.chi2}, {"k", s.k}});
  }
  r["per_slice"] = slices;
  files.open("chi2.json") << r.dump(2) << '\n';

  if (flags.histogram) {
    EngineOptions engine = config.engine();
    engine.stored_steps = grid.steps;
    const TrajectoryBatch batch = simulate(sim_spec, cfg, engine);
    const Histogram3D hist = bin_counts(batch, grid, engine.workers);
    const auto probs = analytic_bin_probs(config.spec, cfg, grid, plan.intervals);
    write_histogram_csv(files.open("histogram.csv"), hist, probs);
  }
  auto outputs = files.names();
  outputs.push_back("manifest.json");
  files.open("manifest.json")
      << manifest("verify", config, cfg, elapsed(start), outputs,
                  {{"chi2", report.pass}})
             .dump(2)
      << '\n';
  files.commit();
  out << "chi2_bar = " << report.chi2_bar << "  k = " << report.k << "  band = ["
      << report.lower << ", " << report.upper << "]  "
      << (report.pass ? "PASS" : "FAIL") << '\n';
  return report.pass ? kExitOk : kExitFail;
}

int cmd_born(const Flags& flags, std::ostream& out, std::ostream& err) {
  const auto start = std::chrono::steady_clock::now();
  const RunConfig config = build_config(flags);
  const MeasurementConfig cfg = config.measurement();
  EngineOptions engine = config.engine();
  engine.stored_steps = {0};
  const TrajectoryBatch batch = simulate(config.spec, cfg, engine);
  const std::size_t last = batch.boundary_slice();
  const double gain = std::exp(cfg.g * cfg.t_f);
  const double n = static_cast<double>(batch.n_rows);

  json r;
  bool pass = true;
  if (cfg.setting == Setting::MeasureX) {
    const BornFraction f = born_fraction(batch);
    const double c1 = config.spec.c1_sq;
    const double tol = 3.0 * std::sqrt(c1 * (1.0 - c1) / n);
    const double overlap = hill_overlap_mass(config.spec, cfg);
    pass = std::abs(f.f_plus - c1) < tol;
    r["f_plus"] = f.f_plus;
    r["se"] = f.se;
    r["c1sq"] = c1;
    r["tolerance"] = tol;
    r["n"] = f.n;
    r["hill_overlap_mass"] = overlap;
    r["pass"] = pass;
    if (overlap > kOverlapWarning) {
      r["warning"] = "hills overlap at t_f; the sign fraction is ill-defined";
      err << "warning: hill overlap mass " << overlap << " exceeds "
          << kOverlapWarning << '\n';
    }
    const double half = config.spec.x1 + 6.0 * std::sqrt(std::exp(-2.0 * config.spec.r) +
                                                          std::exp(-2.0 * cfg.g * cfg.t_f));
    Histogram1D h = Histogram1D::uniform(-half, half, flags.bins);
    for (std::size_t i = 0; i < batch.n_rows; ++i) h.add(batch.amplified_at(i, last) / gain);
    const auto exact = bin_probabilities(
        [&](double u) { return marginal_x_scaled(config.spec, u, cfg.t_f, cfg); }, h.edges);
    const auto limit = bin_probabilities(
        [&](double u) { return born_x_scaled_limit(config.spec, u); }, h.edges);
    r["scaled_x_vs_marginal"] = gof_json(chi2_goodness_of_fit(h, exact, batch.n_rows));
    r["scaled_x_vs_born"] = gof_json(chi2_goodness_of_fit(h, limit, batch.n_rows));
    out << "f_plus = " << f.f_plus << " +- " << f.se << "  (|c1|^2 = " << c1
        << ")  " << (pass ? "PASS" : "FAIL") << '\n';
  } else {
    const double half = 5.0 * std::exp(config.spec.r);
    Histogram1D h = Histogram1D::uniform(-half, half, flags.bins);
    for (std::size_t i = 0; i < batch.n_rows; ++i) h.add(batch.amplified_at(i, last) / gain);
    const auto limit = bin_probabilities(
        [&](double u) { return born_p_scaled_limit(config.spec, u); }, h.edges, 32);
    const auto exact = bin_probabilities(
        [&](double u) {
          return marginal_p_amplified_scaled(config.spec, u, cfg.t_f, cfg);
        },
        h.edges, 32);
    const GoodnessOfFit born = chi2_goodness_of_fit(h, limit, batch.n_rows);
    pass = born.pass;
    r["scaled_p_vs_born"] = gof_json(born);
    r["scaled_p_vs_marginal"] = gof_json(chi2_goodness_of_fit(h, exact, batch.n_rows));
    r["n"] = batch.n_rows;
    r["pass"] = pass;
    out << "scaled p: chi2 = " << born.chi2 << "  k = " << born.k << "  "
        << (pass ? "PASS" : "FAIL") << '\n';
  }

  OutputSet files(config.out_dir);
  files.open("born.json") << r.dump(2) << '\n';
  files.open("manifest.json")
      << manifest("born", config, cfg, elapsed(start), {"born.json", "manifest.json"},
                  {{"born", pass}})
             .dump(2)
      << '\n';
  files.commit();
  return pass ? kExitOk : kExitFail;
}

int cmd_postselect(const Flags& flags, std::ostream& out) {
  const auto start = std::chrono::steady_clock::now();
  const RunConfig base = build_config(flags);
  std::vector<double> sweep = flags.sweep_x1;
  if (sweep.empty()) sweep.push_back(base.spec.x1);

  json points = json::array();
  bool all_pass = true;
  OutputSet files(base.out_dir);
  MeasurementConfig cfg = base.measurement();
  if (cfg.setting != Setting::MeasureX) {
    throw ConfigError("postselect conditions on x outcomes; use measure = x");
  }
  out << "x1        outcome  n_selected  var_x_cond   var_p_cond   epsilon      se";
  out << (flags.oracle ? "        oracle_eps\n" : "\n");
  for (std::size_t k = 0; k < sweep.size(); ++k) {
    RunConfig config = base;
    config.spec.x1 = sweep[k];
    config.spec.validate();
    cfg = config.measurement();
    EngineOptions engine = config.engine();
    engine.stored_steps = {0};
    const TrajectoryBatch batch = simulate(config.spec, cfg, engine);
    for (Outcome o : {Outcome::Plus, Outcome::Minus}) {
      const PostselectionReport rep = postselect(batch, o);
      json p;
      p["x1"] = config.spec.x1;
      p["outcome"] = to_string(o);
      p["n_selected"] = rep.n_selected;
      p["n_total"] = rep.n_total;
      p["mean_x"] = rep.mean_x;
      p["mean_p"] = rep.mean_p;
      p["var_x_cond"] = rep.var_x_cond;
      p["se_var_x"] = rep.se_var_x;
      p["var_p_cond"] = rep.var_p_cond;
      p["se_var_p"] = rep.se_var_p;
      p["epsilon_defined"] = rep.epsilon_defined;
      if (rep.epsilon_defined) {
        p["epsilon"] = rep.epsilon;
        p["se_epsilon"] = rep.se_epsilon;
      }
      double oracle_eps = 0.0;
      std::vector<double> probs;
      if (flags.oracle) {
        const PostselectionOracle orc = postselection_oracle(config.spec, cfg, o);
        oracle_eps = orc.epsilon;
        const bool agree = rep.epsilon_defined && std::isfinite(orc.epsilon) &&
                           std::abs(rep.epsilon - orc.epsilon) <= 4.0 * rep.se_epsilon;
        all_pass = all_pass && agree;
        p["oracle"] = {{"mass", orc.mass},
                       {"var_x_cond", orc.var_x_cond},
                       {"var_p_cond", orc.var_p_cond},
                       {"epsilon", orc.epsilon},
                       {"within_4se", agree}};
        if (k == 0 && o == Outcome::Plus) {
          probs = postselection_bin_probs(config.spec, cfg, o, rep.q_hist.x_edges,
                                          rep.q_hist.p_edges);
        }
      }
      if (k == 0 && o == Outcome::Plus) {
        write_qhist_csv(files.open("qplus.csv"), rep.q_hist, probs);
      }
      points.push_back(p);
      char line[160];
      std::snprintf(line, sizeof(line), "%-9.4g %-8s %-11zu %-12.6g %-12.6g %-12.6g %-9.3g",
                    config.spec.x1, to_string(o).c_str(), rep.n_selected,
                    rep.var_x_cond, rep.var_p_cond,
                    rep.epsilon_defined ? rep.epsilon : std::nan(""),
                    rep.se_epsilon);
      out << line;
      if (flags.oracle) {
        std::snprintf(line, sizeof(line), " %-12.6g", oracle_eps);
        out << line;
      }
      out << '\n';
    }
  }
  json r;
  r["points"] = points;
  if (flags.oracle) r["oracle_pass"] = all_pass;
  files.open("postselect.json") << r.dump(2) << '\n';
  auto outputs = files.names();
  outputs.push_back("manifest.json");
  json checks = json::object();
  if (flags.oracle) checks["oracle"] = all_pass;
  files.open("manifest.json")
      << manifest("postselect", base, cfg, elapsed(start), outputs, checks).dump(2)
      << '\n';
  files.commit();
  return all_pass ? kExitOk : kExitFail;
}

int cmd_marginal(const Flags& flags, std::ostream& out) {
  const auto start = std::chrono::steady_clock::now();
  const RunConfig config = build_config(flags);
  const MeasurementConfig cfg = config.measurement();
  const SuperpositionSpec& spec = config.spec;
  const EvolvedWidths w0 = evolved_widths(spec, cfg.signed_gain(), 0.0);
  const EvolvedWidths wf = evolved_widths(spec, cfg.signed_gain(), cfg.t_f);

  OutputSet files(config.out_dir);
  std::ostream& csv = files.open("marginal.csv");
  csv << "curve,u,density\n";
  const std::size_t points = std::max<std::size_t>(flags.points, 2);
  auto curve = [&](const char* name, double half, auto&& f) {
    for (std::size_t i = 0; i < points; ++i) {
      const double u = -half + 2.0 * half * static_cast<double>(i) /
                                   static_cast<double>(points - 1);
      csv << name << ',' << format_double(u) << ',' << format_double(f(u)) << '\n';
    }
  };
  curve("x_t0", w0.gain * spec.x1 + 8.0 * std::sqrt(w0.var_x),
        [&](double u) { return marginal_x(spec, u, 0.0, cfg); });
  curve("x_tf", wf.gain * spec.x1 + 8.0 * std::sqrt(wf.var_x),
        [&](double u) { return marginal_x(spec, u, cfg.t_f, cfg); });
  curve("p_t0", 8.0 * std::sqrt(w0.var_p),
        [&](double u) { return marginal_p(spec, u, 0.0, cfg); });
  curve("p_tf", 8.0 * std::sqrt(wf.var_p),
        [&](double u) { return marginal_p(spec, u, cfg.t_f, cfg); });
  if (cfg.setting == Setting::MeasureX) {
    const double half = spec.x1 + 8.0 * std::sqrt(wf.var_x) / wf.gain;
    curve("x_scaled_tf", half,
          [&](double u) { return marginal_x_scaled(spec, u, cfg.t_f, cfg); });
    curve("born_x_scaled", half, [&](double u) { return born_x_scaled_limit(spec, u); });
  } else {
    const double half = 8.0 * std::sqrt(wf.var_p) / std::exp(cfg.g * cfg.t_f);
    curve("p_scaled_tf", half, [&](double u) {
      return marginal_p_amplified_scaled(spec, u, cfg.t_f, cfg);
    });
    curve("born_p_scaled", half, [&](double u) { return born_p_scaled_limit(spec, u); });
  }
  files.open("manifest.json")
      << manifest("marginal", config, cfg, elapsed(start),
                  {"marginal.csv", "manifest.json"}, json::object())
             .dump(2)
      << '\n';
  files.commit();
  out << "wrote " << (fs::path(config.out_dir) / "marginal.csv").string() << '\n';
  return kExitOk;
}

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"Forward-backward trajectory simulator for measurement by "
               "parametric amplification"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  Flags flags;
  auto* sim = app.add_subcommand("simulate", "write linked trajectories to paths.csv");
  auto* ver = app.add_subcommand("verify", "time-averaged chi-squared against the Q function");
  auto* born = app.add_subcommand("born", "outcome fractions and scaled marginals at t_f");
  auto* post = app.add_subcommand("postselect", "conditioned initial variances and epsilon");
  auto* marg = app.add_subcommand("marginal", "dump analytic marginal curves");
  for (auto* cmd : {sim, ver, born, post, marg}) {
    add_common(cmd, flags);
  }
  ver->add_flag("--histogram", flags.histogram, "also write histogram.csv");
  born->add_option("--bins", flags.bins, "histogram bins of the scaled variable");
  post->add_flag("--oracle", flags.oracle, "recompute each point by quadrature");
  post->add_option("--sweep-x1", flags.sweep_x1, "list of x1 values")->delimiter(',');
  marg->add_option("--points", flags.points, "points per curve");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*sim) return cmd_simulate(flags, out);
    if (*ver) return cmd_verify(flags, out);
    if (*born) return cmd_born(flags, out, err);
    if (*post) return cmd_postselect(flags, out);
    if (*marg) return cmd_marginal(flags, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ModelError& e) {
    err << "invalid parameters: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitConfig;
}

} // namespace qtraj
