#pragma once

/// \file
/// Data simulation, the end-to-end spline fit, posterior reports and the
/// replicate studies built on top of them.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "smcde/baselines.hpp"
#include "smcde/bspline.hpp"
#include "smcde/config.hpp"
#include "smcde/kernels.hpp"
#include "smcde/models.hpp"
#include "smcde/parallel.hpp"
#include "smcde/posterior.hpp"
#include "smcde/random.hpp"
#include "smcde/smc.hpp"
#include "smcde/solver.hpp"
#include "smcde/summary.hpp"

namespace smcde {

inline std::vector<double> equally_spaced(double t1, double tmax, std::size_t n) {
  std::vector<double> t(n);
  for (std::size_t j = 0; j < n; ++j) t[j] = n == 1 ? t1 : t1 + (tmax - t1) * static_cast<double>(j) / static_cast<double>(n - 1);
  if (n > 1) t.back() = tmax;
  return t;
}

struct SimulatedData {
  ObservationSet observed;  // data scale: exp(.) applied for lognormal components
  Trajectory truth;
};

/// Solves the model and adds noise at `times`: Gaussian on the model scale,
/// so lognormal components are returned as exp(x + sigma eps).
inline SimulatedData simulate_observations(const DeModel& model, std::span<const double> theta, double tau, std::span<const double> x0,
                                           std::span<const double> times, std::span<const double> sigma, std::uint64_t seed,
                                           double step = 0.0) {
  if (times.empty()) throw std::invalid_argument("no observation times");
  if (sigma.size() != model.observed.size()) throw std::invalid_argument("need one noise level per observed component");
  const double t1 = times.front();
  const double tmax = times.back();
  if (!(step > 0.0)) step = (tmax - t1) / 10000.0;
  SimulatedData out{ObservationSet{}, solve(model, x0, theta, tau, step, t1, tmax, SolverMethod::rk4)};
  out.observed.t1 = t1;
  out.observed.tmax = tmax;
  Rng rng = make_stream(seed, 0xda7a, 0);
  const auto states = sample_at(out.truth, times);
  for (std::size_t o = 0; o < model.observed.size(); ++o) {
    ObservationSeries s;
    s.component = model.observed[o];
    for (std::size_t j = 0; j < times.size(); ++j) {
      const double mean = states[j * model.dim() + s.component];
      const double v = mean + (sigma[o] > 0.0 ? normal(rng, 0.0, sigma[o]) : 0.0);
      s.times.push_back(times[j]);
      s.values.push_back(model.noise[o] == NoiseKind::lognormal ? std::exp(v) : v);
    }
    out.observed.series.push_back(std::move(s));
  }
  return out;
}

inline SimulatedData simulate_from_config(const RunConfig& cfg) {
  const DeModel model = lookup(cfg.model);
  const auto times = equally_spaced(cfg.t1, cfg.tmax, cfg.n_obs);
  return simulate_observations(model, cfg.theta_true, cfg.tau_true, cfg.x0_true, times, cfg.sigma, cfg.data_seed, cfg.solver_step);
}

inline std::vector<SplineBasis> make_bases(const DeModel& model, double t1, double tmax, int n_interior, int degree = 3) {
  return std::vector<SplineBasis>(model.dim(), SplineBasis(build_knots(t1, tmax, n_interior, degree)));
}

inline PriorSpec prior_from_config(const RunConfig& cfg) {
  PriorSpec p;
  p.theta_mean = cfg.theta_mean;
  p.theta_sd = cfg.theta_sd;
  p.tau_lower = cfg.tau_lower;
  p.tau_upper = cfg.tau_upper;
  p.g0 = cfg.g0;
  p.h0 = cfg.h0;
  p.a_lambda = cfg.a_lambda;
  p.b_lambda = cfg.b_lambda;
  p.sigma_c = cfg.sigma_c;
  return p;
}

/// Spline posterior for data on the data scale: logs lognormal components,
/// builds the bases on the data span and the reference centres.
inline std::unique_ptr<SplinePosterior> make_posterior(const DeModel& model, const ObservationSet& raw, const RunConfig& cfg) {
  ObservationSet data = to_model_scale(raw, model);
  auto bases = make_bases(model, data.t1, data.tmax, cfg.n_interior, cfg.degree);
  PriorSpec prior = prior_from_config(cfg);
  prior.c_hat = build_reference(model, bases, data, prior, cfg.quad_nodes);
  return std::make_unique<SplinePosterior>(model, std::move(bases), std::move(data), std::move(prior), cfg.quad_nodes);
}

inline KernelConfig kernel_from_config(const SplinePosterior& post, const RunConfig& cfg) {
  KernelConfig k = default_kernel_config(post);
  if (cfg.step_tau > 0.0) k.step_tau = cfg.step_tau;
  if (!cfg.step_theta.empty()) k.step_theta = cfg.step_theta;
  if (cfg.step_c > 0.0) {
    for (auto& v : k.step_c) std::fill(v.begin(), v.end(), cfg.step_c);
  }
  k.sweeps_per_iteration = cfg.sweeps;
  k.adapt_steps = cfg.adapt;
  k.tempering = cfg.tempering;
  return k;
}

inline SmcConfig smc_from_config(const RunConfig& cfg) {
  SmcConfig s;
  s.particles = cfg.particles;
  s.phi = cfg.phi;
  s.resample_threshold = cfg.resample;
  s.seed = cfg.seed;
  s.workers = cfg.workers;
  return s;
}

struct SplineFit {
  std::unique_ptr<SplinePosterior> posterior;
  SmcResult<ParticleState> smc;
};

inline SplineFit fit_spline_smc(const DeModel& model, const ObservationSet& raw, const RunConfig& cfg) {
  SplineFit fit;
  fit.posterior = make_posterior(model, raw, cfg);
  SplineTarget target(*fit.posterior, kernel_from_config(*fit.posterior, cfg));
  fit.smc = run_smc(target, smc_from_config(cfg));
  return fit;
}

/// Named scalar draws of a spline population: theta, tau, sigma per series,
/// lambda and x_i(t1) = c_i[0].
struct SampleTable {
  std::vector<std::string> names;
  std::vector<std::vector<double>> columns;

  [[nodiscard]] std::span<const double> column(const std::string& n) const {
    for (std::size_t c = 0; c < names.size(); ++c) {
      if (names[c] == n) return columns[c];
    }
    throw std::out_of_range("no column '" + n + "'");
  }
};

inline SampleTable spline_samples(const SplinePosterior& post, std::span<const ParticleState> ps) {
  SampleTable t;
  const auto& m = post.model();
  auto add = [&](std::string name, auto&& get) {
    t.names.push_back(std::move(name));
    std::vector<double> col;
    col.reserve(ps.size());
    for (const auto& b : ps) col.push_back(get(b));
    t.columns.push_back(std::move(col));
  };
  for (std::size_t d = 0; d < m.param_count(); ++d) add(m.param_names[d], [d](const ParticleState& b) { return b.theta[d]; });
  if (post.delayed()) add("tau", [](const ParticleState& b) { return b.tau; });
  for (std::size_t s = 0; s < post.data().series.size(); ++s) {
    add("sigma_" + m.component_names[post.data().series[s].component], [s](const ParticleState& b) { return std::sqrt(b.sigma2[s]); });
  }
  add("lambda", [](const ParticleState& b) { return b.lambda; });
  for (std::size_t i = 0; i < m.dim(); ++i) add(m.component_names[i] + "_0", [i](const ParticleState& b) { return b.c[i].front(); });
  return t;
}

/// Report of a weighted spline population. `truth`, when given, holds the
/// true model-scale trajectory per component (series with component index).
inline SummaryReport summarize_spline(const SplinePosterior& post, std::span<const ParticleState> ps, std::span<const double> w,
                                      std::size_t grid_points = 201, const ObservationSet* truth = nullptr) {
  const SampleTable t = spline_samples(post, ps);
  SummaryReport r = summarize_table(t.names, t.columns, w);
  const auto grid = equally_spaced(post.data().t1, post.data().tmax, grid_points);
  for (std::size_t i = 0; i < post.model().dim(); ++i) {
    std::vector<std::vector<double>> coefs;
    coefs.reserve(ps.size());
    for (const auto& b : ps) coefs.push_back(b.c[i]);
    r.trajectories.push_back(trajectory_band(post.model().component_names[i], post.bases()[i], coefs, w, grid));
    if (truth != nullptr) {
      for (const auto& s : truth->series) {
        if (s.component != i) continue;
        std::vector<double> times;
        std::vector<double> values;
        for (std::size_t j = 0; j < s.times.size(); ++j) {
          if (s.times[j] >= post.data().t1 && s.times[j] <= post.data().tmax) {
            times.push_back(s.times[j]);
            values.push_back(s.values[j]);
          }
        }
        if (times.empty()) continue;
        const auto mean_c = mean_coefficients(coefs, w);
        r.rmse.emplace_back(post.model().component_names[i], rmse(post.bases()[i], mean_c, times, values));
      }
    }
  }
  return r;
}

/// True model-scale states at the given times, as one series per component.
inline ObservationSet truth_at(const DeModel& model, const Trajectory& traj, std::span<const double> times) {
  ObservationSet t;
  t.t1 = times.front();
  t.tmax = times.back();
  const auto states = sample_at(traj, times);
  for (std::size_t i = 0; i < model.dim(); ++i) {
    ObservationSeries s;
    s.component = i;
    s.times.assign(times.begin(), times.end());
    for (std::size_t j = 0; j < times.size(); ++j) s.values.push_back(states[j * model.dim() + i]);
    t.series.push_back(std::move(s));
  }
  return t;
}

inline nlohmann::json to_json(const SummaryReport& r) {
  nlohmann::json j;
  for (const auto& p : r.parameters) {
    j["parameters"][p.name] = {{"mean", p.mean}, {"sd", p.sd}, {"ci_lower", p.lower}, {"ci_upper", p.upper}};
  }
  j["correlations"] = nlohmann::json::array();
  for (const auto& c : r.correlations) j["correlations"].push_back({{"a", c.a}, {"b", c.b}, {"value", c.value}});
  j["rmse"] = nlohmann::json::object();
  for (const auto& [name, v] : r.rmse) j["rmse"][name] = v;
  return j;
}

// ---------------------------------------------------------------------------
// Replicate studies

struct CoverageEntry {
  std::string name;
  double truth = 0.0;
  double coverage = 0.0;
  double mean_lower = 0.0;
  double mean_upper = 0.0;
  double mean_estimate = 0.0;
};

struct CoverageResult {
  std::vector<CoverageEntry> entries;
  std::size_t replicates = 0;
  /// covered[rep][param]
  std::vector<std::vector<bool>> covered;
  std::vector<std::size_t> iterations;
};

/// Simulates `replicates` data sets from cfg's generating values, fits each
/// with the spline SMC, and reports how often the 95% intervals cover the
/// truth for theta, tau and sigma. Replicate r uses data seed and sampler seed
/// derived from (seed, r); replicates run in parallel.
inline CoverageResult coverage_study(const RunConfig& cfg, std::size_t replicates, std::uint64_t seed, unsigned workers = 0) {
  const DeModel model = lookup(cfg.model);
  std::vector<std::string> names;
  std::vector<double> truth;
  for (std::size_t d = 0; d < model.param_count(); ++d) {
    names.push_back(model.param_names[d]);
    truth.push_back(cfg.theta_true[d]);
  }
  if (model.has_delay) {
    names.emplace_back("tau");
    truth.push_back(cfg.tau_true);
  }
  for (std::size_t o = 0; o < model.observed.size(); ++o) {
    names.push_back("sigma_" + model.component_names[model.observed[o]]);
    truth.push_back(cfg.sigma[o]);
  }
  CoverageResult res;
  res.replicates = replicates;
  res.covered.assign(replicates, std::vector<bool>(names.size(), false));
  res.iterations.assign(replicates, 0);
  std::vector<std::vector<ParameterSummary>> sums(replicates);
  parallel_for(replicates, workers == 0 ? default_workers() : workers, [&](std::size_t r) {
    RunConfig rc = cfg;
    Rng seeder = make_stream(seed, 0xc0c0, r);
    rc.data_seed = seeder();
    rc.seed = seeder();
    rc.workers = 1;
    const SimulatedData sim = simulate_from_config(rc);
    const SplineFit fit = fit_spline_smc(model, sim.observed, rc);
    const SampleTable t = spline_samples(*fit.posterior, fit.smc.particles);
    res.iterations[r] = fit.smc.iterations();
    for (std::size_t p = 0; p < names.size(); ++p) {
      const ParameterSummary s = summarize_parameter(names[p], t.column(names[p]), fit.smc.weights);
      res.covered[r][p] = s.covers(truth[p]);
      sums[r].push_back(s);
    }
  });
  for (std::size_t p = 0; p < names.size(); ++p) {
    CoverageEntry e;
    e.name = names[p];
    e.truth = truth[p];
    for (std::size_t r = 0; r < replicates; ++r) {
      e.coverage += res.covered[r][p] ? 1.0 : 0.0;
      e.mean_lower += sums[r][p].lower;
      e.mean_upper += sums[r][p].upper;
      e.mean_estimate += sums[r][p].mean;
    }
    const double n = static_cast<double>(std::max<std::size_t>(replicates, 1));
    e.coverage /= n;
    e.mean_lower /= n;
    e.mean_upper /= n;
    e.mean_estimate /= n;
    res.entries.push_back(e);
  }
  return res;
}

}  // namespace smcde
