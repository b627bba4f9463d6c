// Command line front end: simulate | fit | baseline | summarize | coverage | rmse.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "smcde/baselines.hpp"
#include "smcde/config.hpp"
#include "smcde/experiments.hpp"
#include "smcde/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace smcde;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct CommonOptions {
  std::string model;
  std::string config;
  std::string data;
  std::string truth;
  std::string out_dir = ".";
  std::optional<std::size_t> particles;
  std::optional<double> rcess;
  std::optional<double> resample;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;
  std::optional<std::size_t> iters;
};

void add_model_options(CLI::App* app, CommonOptions& o) {
  app->add_option("--model", o.model, "built-in model: ode-basic, ode-bimodal, hutchinson-log, monk");
  app->add_option("--config", o.config, "INI run configuration");
  app->add_option("--out-dir", o.out_dir, "output directory");
  app->add_option("--seed", o.seed, "master seed");
  app->add_option("--workers", o.workers, "worker threads (0: all cores)");
}

void add_smc_options(CLI::App* app, CommonOptions& o) {
  app->add_option("-K,--particles", o.particles, "number of particles");
  app->add_option("--rcess", o.rcess, "rCESS threshold phi");
  app->add_option("--resample", o.resample, "rESS resampling threshold");
}

RunConfig resolve_config(const CommonOptions& o) {
  RunConfig cfg = defaults_for(o.model.empty() ? "ode-basic" : o.model);
  if (!o.config.empty()) {
    if (!fs::exists(o.config)) throw ConfigError("config file '" + o.config + "' not found");
    apply_ini(o.config, cfg);
    if (!o.model.empty() && o.model != cfg.model) {
      throw ConfigError("--model " + o.model + " conflicts with model " + cfg.model + " in " + o.config);
    }
  }
  if (o.particles) cfg.particles = *o.particles;
  if (o.rcess) cfg.phi = *o.rcess;
  if (o.resample) cfg.resample = *o.resample;
  if (o.seed) cfg.seed = *o.seed;
  if (o.workers) cfg.workers = *o.workers;
  if (o.iters) cfg.iters = *o.iters;
  validate(cfg);
  return cfg;
}

json config_json(const RunConfig& c) {
  return {
      {"model", c.model},
      {"data", {{"t1", c.t1}, {"tmax", c.tmax}, {"n_obs", c.n_obs}, {"sigma", c.sigma}, {"theta", c.theta_true}, {"tau", c.tau_true},
                {"x0", c.x0_true}, {"seed", c.data_seed}, {"solver_step", c.solver_step}}},
      {"priors", {{"theta_mean", c.theta_mean}, {"theta_sd", c.theta_sd}, {"tau_lower", c.tau_lower}, {"tau_upper", c.tau_upper},
                  {"g0", c.g0}, {"h0", c.h0}, {"a_lambda", c.a_lambda}, {"b_lambda", c.b_lambda}, {"sigma_c", c.sigma_c}}},
      {"spline", {{"n_interior", c.n_interior}, {"degree", c.degree}, {"quad_nodes", c.quad_nodes}}},
      {"smc", {{"particles", c.particles}, {"rcess", c.phi}, {"resample", c.resample}, {"seed", c.seed}, {"workers", c.workers}}},
      {"kernel", {{"step_tau", c.step_tau}, {"step_theta", c.step_theta}, {"step_c", c.step_c}, {"sweeps", c.sweeps}, {"adapt", c.adapt},
                  {"tempering", c.tempering == TemperingMode::paper ? "paper" : "exact"}}},
      {"baseline", {{"solver", c.solver == SolverMethod::rk4 ? "rk4" : "euler"}, {"iters", c.iters}, {"burn_in", c.burn_in},
                    {"thin", c.thin}, {"x0_sd", c.x0_sd}}},
  };
}

std::string out_path(const CommonOptions& o, const std::string& name) {
  fs::create_directories(o.out_dir);
  return (fs::path(o.out_dir) / name).string();
}

void write_json(const std::string& path, const json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

ObservationSet load_data(const CommonOptions& o, const DeModel& model) {
  if (o.data.empty()) throw ConfigError("--data is required");
  return read_observations(o.data, model);
}

/// Truth restricted to the observation times of each observed component,
/// linearly interpolated where a time is not on the truth grid.
ObservationSet truth_at_observations(const ObservationSet& truth, const ObservationSet& data) {
  ObservationSet out;
  out.t1 = data.t1;
  out.tmax = data.tmax;
  for (const auto& ts : truth.series) {
    const ObservationSeries* obs = nullptr;
    for (const auto& s : data.series) {
      if (s.component == ts.component) obs = &s;
    }
    ObservationSeries s;
    s.component = ts.component;
    // Hidden components are compared on the truth grid itself.
    const auto& times = obs != nullptr ? obs->times : ts.times;
    for (double t : times) {
      if (t < ts.times.front() || t > ts.times.back()) continue;
      const auto it = std::lower_bound(ts.times.begin(), ts.times.end(), t);
      const std::size_t k = static_cast<std::size_t>(it - ts.times.begin());
      double v = ts.values[k];
      if (ts.times[k] != t) {
        const double w = (t - ts.times[k - 1]) / (ts.times[k] - ts.times[k - 1]);
        v = (1.0 - w) * ts.values[k - 1] + w * ts.values[k];
      }
      s.times.push_back(t);
      s.values.push_back(v);
    }
    out.series.push_back(std::move(s));
  }
  return out;
}

json run_metadata(const RunConfig& cfg, std::size_t iterations, double wall) {
  return {{"seed", cfg.seed}, {"iterations", iterations}, {"wall_seconds", wall}, {"config", config_json(cfg)}};
}

int cmd_simulate(const CommonOptions& o) {
  RunConfig cfg = resolve_config(o);
  if (o.seed) cfg.data_seed = *o.seed;
  const DeModel model = lookup(cfg.model);
  const SimulatedData sim = simulate_from_config(cfg);
  write_long_csv(out_path(o, "data.csv"), model, sim.observed);
  std::vector<double> times = equally_spaced(cfg.t1, cfg.tmax, 2001);
  for (const auto& s : sim.observed.series) times.insert(times.end(), s.times.begin(), s.times.end());
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  write_long_csv(out_path(o, "truth.csv"), model, truth_at(model, sim.truth, times));
  std::cout << "wrote " << out_path(o, "data.csv") << " and " << out_path(o, "truth.csv") << '\n';
  return 0;
}

int cmd_fit(const CommonOptions& o) {
  const RunConfig cfg = resolve_config(o);
  const DeModel model = lookup(cfg.model);
  const ObservationSet raw = load_data(o, model);
  const SplineFit fit = fit_spline_smc(model, raw, cfg);
  const auto& post = *fit.posterior;
  write_particles_csv(out_path(o, "particles.csv"), post, fit.smc.particles, fit.smc.weights);
  write_schedule_csv(out_path(o, "schedule.csv"), fit.smc.schedule);
  std::optional<ObservationSet> truth;
  if (!o.truth.empty()) truth = truth_at_observations(read_truth(o.truth, model), post.data());
  const SummaryReport rep = summarize_spline(post, fit.smc.particles, fit.smc.weights, 201, truth ? &*truth : nullptr);
  json j = to_json(rep);
  j["metadata"] = run_metadata(cfg, fit.smc.iterations(), fit.smc.wall_seconds);
  j["metadata"]["method"] = "smc-spline";
  write_json(out_path(o, "summary.json"), j);
  std::cout << "R = " << fit.smc.iterations() << ", wall " << fit.smc.wall_seconds << " s\n";
  for (const auto& p : rep.parameters) std::cout << p.name << ": " << p.mean << " (" << p.lower << ", " << p.upper << ")\n";
  for (const auto& [name, v] : rep.rmse) std::cout << "rmse " << name << ": " << v << '\n';
  return 0;
}

/// Summary of an unweighted trace: every column but the iteration, plus
/// sigma_<comp> = sqrt(sigma2_<comp>).
SummaryReport summarize_trace(const std::vector<std::string>& cols, const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw FormatError("trace has no rows");
  std::vector<std::string> names;
  std::vector<std::vector<double>> columns;
  for (std::size_t c = 0; c < cols.size(); ++c) {
    if (cols[c] == "iteration") continue;
    std::vector<double> v;
    for (const auto& r : rows) v.push_back(r[c]);
    if (cols[c].rfind("sigma2_", 0) == 0) {
      std::vector<double> s;
      for (double x : v) s.push_back(std::sqrt(x));
      names.push_back("sigma_" + cols[c].substr(7));
      columns.push_back(std::move(s));
    }
    names.push_back(cols[c]);
    columns.push_back(std::move(v));
  }
  return summarize_table(names, columns, uniform_weights(rows.size()));
}

int cmd_baseline(const CommonOptions& o, const std::string& which) {
  const RunConfig cfg = resolve_config(o);
  const DeModel model = lookup(cfg.model);
  const ObservationSet raw = load_data(o, model);
  json j;
  if (which == "mcmc-spline") {
    auto post = make_posterior(model, raw, cfg);
    McmcSplineOptions opt;
    opt.iterations = cfg.iters;
    opt.burn_in = cfg.burn_in;
    opt.thin = cfg.thin;
    opt.seed = cfg.seed;
    const McmcTrace tr = mcmc_spline(*post, kernel_from_config(*post, cfg), opt);
    write_table_csv(out_path(o, "trace.csv"), tr.columns, tr.rows);
    j = to_json(summarize_trace(tr.columns, tr.rows));
    j["metadata"] = run_metadata(cfg, tr.iterations, tr.wall_seconds);
    j["metadata"]["acceptance"] = {{"theta", tr.stats.theta_rate()}, {"tau", tr.stats.tau_rate()}, {"c", tr.stats.c_rate()}};
  } else if (which == "mcmc-desolve" || which == "smc-desolve") {
    const ObservationSet data = to_model_scale(raw, model);
    SolverPriorSpec spec = default_solver_prior(model, data, prior_from_config(cfg), cfg.solver);
    std::fill(spec.x0_sd.begin(), spec.x0_sd.end(), cfg.x0_sd);
    const SolverPosterior post(model, data, spec);
    SolverKernelConfig kc = default_solver_kernel_config(post);
    kc.adapt_steps = cfg.adapt;
    if (which == "mcmc-desolve") {
      McmcSolverOptions opt;
      opt.iterations = cfg.iters;
      opt.burn_in = cfg.burn_in;
      opt.thin = cfg.thin;
      opt.seed = cfg.seed;
      const McmcTrace tr = mcmc_desolve(post, kc, opt);
      write_table_csv(out_path(o, "trace.csv"), tr.columns, tr.rows);
      j = to_json(summarize_trace(tr.columns, tr.rows));
      j["metadata"] = run_metadata(cfg, tr.iterations, tr.wall_seconds);
      j["metadata"]["acceptance"] = {{"theta", tr.stats.theta_rate()}, {"tau", tr.stats.tau_rate()}, {"x0", tr.stats.c_rate()}};
    } else {
      const auto res = smc_desolve(post, kc, smc_from_config(cfg));
      std::vector<std::string> cols = solver_trace_columns(post);
      cols.front() = "weight";
      std::vector<std::vector<double>> rows;
      for (std::size_t k = 0; k < res.particles.size(); ++k) {
        auto row = solver_trace_row(post, res.particles[k], 0);
        row.front() = res.weights[k];
        rows.push_back(std::move(row));
      }
      write_table_csv(out_path(o, "particles.csv"), cols, rows);
      write_schedule_csv(out_path(o, "schedule.csv"), res.schedule);
      std::vector<std::string> names(cols.begin() + 1, cols.end());
      std::vector<std::vector<double>> columns(names.size());
      for (const auto& r : rows) {
        for (std::size_t c = 0; c < names.size(); ++c) columns[c].push_back(r[c + 1]);
      }
      j = to_json(summarize_table(names, columns, res.weights));
      j["metadata"] = run_metadata(cfg, res.iterations(), res.wall_seconds);
    }
  } else {
    throw ConfigError("unknown baseline '" + which + "' (mcmc-spline, mcmc-desolve, smc-desolve)");
  }
  j["metadata"]["method"] = which;
  write_json(out_path(o, "summary.json"), j);
  std::cout << "wrote " << out_path(o, "summary.json") << '\n';
  return 0;
}

int cmd_summarize(const CommonOptions& o, const std::string& input) {
  std::vector<std::string> cols;
  std::vector<std::vector<double>> rows;
  const CsvTable head = read_csv(input);
  json j;
  if (!head.header.empty() && head.header.front() == "weight" && head.has("lambda")) {
    const RunConfig cfg = resolve_config(o);
    const DeModel model = lookup(cfg.model);
    const auto post = make_posterior(model, load_data(o, model), cfg);
    std::vector<ParticleState> ps;
    std::vector<double> w;
    read_particles_csv(input, *post, ps, w);
    std::optional<ObservationSet> truth;
    if (!o.truth.empty()) truth = truth_at_observations(read_truth(o.truth, model), post->data());
    j = to_json(summarize_spline(*post, ps, w, 201, truth ? &*truth : nullptr));
  } else {
    read_table_csv(input, cols, rows);
    if (!cols.empty() && cols.front() == "weight") {
      std::vector<std::string> names(cols.begin() + 1, cols.end());
      std::vector<std::vector<double>> columns(names.size());
      std::vector<double> w;
      for (const auto& r : rows) {
        w.push_back(r[0]);
        for (std::size_t c = 0; c < names.size(); ++c) columns[c].push_back(r[c + 1]);
      }
      j = to_json(summarize_table(names, columns, w));
    } else {
      j = to_json(summarize_trace(cols, rows));
    }
  }
  j["metadata"] = {{"input", input}};
  write_json(out_path(o, "summary.json"), j);
  std::cout << j.dump(2) << '\n';
  return 0;
}

int cmd_rmse(const CommonOptions& o, const std::string& input) {
  if (o.truth.empty()) throw ConfigError("--truth is required");
  const RunConfig cfg = resolve_config(o);
  const DeModel model = lookup(cfg.model);
  const auto post = make_posterior(model, load_data(o, model), cfg);
  std::vector<ParticleState> ps;
  std::vector<double> w;
  read_particles_csv(input, *post, ps, w);
  const ObservationSet truth = truth_at_observations(read_truth(o.truth, model), post->data());
  const SummaryReport rep = summarize_spline(*post, ps, w, 2, &truth);
  json j = json::object();
  for (const auto& [name, v] : rep.rmse) {
    j[name] = v;
    std::cout << name << ' ' << fmt(v) << '\n';
  }
  return 0;
}

int cmd_coverage(const CommonOptions& o, std::size_t replicates) {
  const RunConfig cfg = resolve_config(o);
  const auto start = std::chrono::steady_clock::now();
  const CoverageResult res = coverage_study(cfg, replicates, cfg.seed, cfg.workers);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  json j;
  for (const auto& e : res.entries) {
    j["parameters"][e.name] = {{"truth", e.truth}, {"coverage", e.coverage}, {"mean_estimate", e.mean_estimate},
                               {"mean_ci_lower", e.mean_lower}, {"mean_ci_upper", e.mean_upper}};
    std::cout << e.name << ": coverage " << e.coverage << ", averaged CI (" << e.mean_lower << ", " << e.mean_upper << ")\n";
  }
  j["replicates"] = res.replicates;
  j["iterations"] = res.iterations;
  j["metadata"] = run_metadata(cfg, 0, wall);
  write_json(out_path(o, "coverage.json"), j);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Annealed SMC for differential-equation models with B-spline collocation"};
  app.require_subcommand(1);
  CommonOptions o;
  std::string input;
  std::string baseline;
  std::size_t replicates = 20;

  auto* sim = app.add_subcommand("simulate", "simulate data.csv and truth.csv from a model");
  add_model_options(sim, o);

  auto* fit = app.add_subcommand("fit", "annealed SMC fit of the spline posterior");
  add_model_options(fit, o);
  add_smc_options(fit, o);
  fit->add_option("--data", o.data, "observations CSV")->required();
  fit->add_option("--truth", o.truth, "true trajectory CSV, enables RMSE");

  auto* base = app.add_subcommand("baseline", "comparison samplers");
  add_model_options(base, o);
  add_smc_options(base, o);
  base->add_option("method,--baseline", baseline, "mcmc-spline | mcmc-desolve | smc-desolve")->required();
  base->add_option("--data", o.data, "observations CSV")->required();
  base->add_option("--iters", o.iters, "MCMC iterations");

  auto* sum = app.add_subcommand("summarize", "summary.json from particles.csv or trace.csv");
  add_model_options(sum, o);
  sum->add_option("--input", input, "particles.csv or trace.csv")->required();
  sum->add_option("--data", o.data, "observations CSV (spline particle files)");
  sum->add_option("--truth", o.truth, "true trajectory CSV");

  auto* cov = app.add_subcommand("coverage", "replicate coverage study of the 95% intervals");
  add_model_options(cov, o);
  add_smc_options(cov, o);
  cov->add_option("--replicates", replicates, "number of simulated data sets");

  auto* rm = app.add_subcommand("rmse", "trajectory RMSE of a spline population against the truth");
  add_model_options(rm, o);
  rm->add_option("--input", input, "particles.csv")->required();
  rm->add_option("--data", o.data, "observations CSV")->required();
  rm->add_option("--truth", o.truth, "true trajectory CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (sim->parsed()) return cmd_simulate(o);
    if (fit->parsed()) return cmd_fit(o);
    if (base->parsed()) return cmd_baseline(o, baseline);
    if (sum->parsed()) return cmd_summarize(o, input);
    if (cov->parsed()) return cmd_coverage(o, replicates);
    if (rm->parsed()) return cmd_rmse(o, input);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const UnknownModelError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const FormatError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DegenerateError& e) {
    std::cerr << "numerical abort: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const DivergenceError& e) {
    std::cerr << "numerical abort: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "numerical abort: " << e.what() << '\n';
    return kExitNumerical;
  }
  return 0;
}
