#pragma once

/// \file
/// Comparison samplers: a single-chain sampler on the spline posterior, and
/// MCMC / annealed SMC on the solver-based posterior over (theta, tau, x0, sigma^2).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "smcde/kernels.hpp"
#include "smcde/posterior.hpp"
#include "smcde/random.hpp"
#include "smcde/smc.hpp"
#include "smcde/solver.hpp"

namespace smcde {

/// Draws kept by a single-chain sampler.
struct McmcTrace {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  SweepStats stats;  // post burn-in
  double wall_seconds = 0.0;
  std::size_t iterations = 0;
};

// ---------------------------------------------------------------------------
// MCMC on the spline posterior

struct McmcSplineOptions {
  std::size_t iterations = 400000;
  std::size_t burn_in = 0;  // steps are tuned during burn-in, then frozen
  std::size_t thin = 100;
  double target_accept = 0.3;
  std::uint64_t seed = 1;
};

/// Column names shared by spline-based traces: theta, tau (delay models),
/// sigma^2 per series, lambda, then the initial states x_i(t1) = c_i[0].
inline std::vector<std::string> spline_trace_columns(const SplinePosterior& post) {
  std::vector<std::string> cols = {"iteration"};
  for (const auto& n : post.model().param_names) cols.push_back(n);
  if (post.delayed()) cols.emplace_back("tau");
  for (const auto& s : post.data().series) cols.push_back("sigma2_" + post.model().component_names[s.component]);
  cols.emplace_back("lambda");
  for (const auto& n : post.model().component_names) cols.push_back(n + "_0");
  return cols;
}

inline std::vector<double> spline_trace_row(const SplinePosterior& post, const ParticleState& b, std::size_t iteration) {
  std::vector<double> row = {static_cast<double>(iteration)};
  row.insert(row.end(), b.theta.begin(), b.theta.end());
  if (post.delayed()) row.push_back(b.tau);
  row.insert(row.end(), b.sigma2.begin(), b.sigma2.end());
  row.push_back(b.lambda);
  for (const auto& c : b.c) row.push_back(c.front());
  return row;
}

/// Starting state: theta, tau, sigma^2 and lambda from their priors, c at c_hat.
inline ParticleState mcmc_spline_start(const SplinePosterior& post, Rng& rng) {
  ParticleState b = post.sample_reference(rng);
  b.c = post.prior().c_hat;
  return b;
}

/// Repeated kernel sweeps at alpha = 1. During burn-in a Robbins-Monro
/// recursion scales the theta, tau and c step sizes toward `target_accept`.
inline McmcTrace mcmc_spline(const SplinePosterior& post, KernelConfig cfg, const McmcSplineOptions& opt,
                             ParticleState* final_state = nullptr) {
  const auto start = std::chrono::steady_clock::now();
  Rng rng = make_stream(opt.seed, 0x3c3c0001, 0);
  SplineKernel kernel(post, std::move(cfg));
  const KernelConfig base = kernel.config();
  ParticleState b = mcmc_spline_start(post, rng);
  double s_theta = 0.0;
  double s_tau = 0.0;
  double s_c = 0.0;
  McmcTrace trace;
  trace.columns = spline_trace_columns(post);
  KernelWorkspace ws;
  const std::size_t thin = std::max<std::size_t>(opt.thin, 1);
  for (std::size_t it = 1; it <= opt.iterations; ++it) {
    const SweepStats st = kernel.sweep(b, 1.0, rng, ws);
    if (it <= opt.burn_in) {
      const double gain = std::pow(static_cast<double>(it), -0.6);
      if (st.theta_proposed > 0) s_theta += gain * (st.theta_rate() - opt.target_accept);
      if (st.tau_proposed > 0) s_tau += gain * (st.tau_rate() - opt.target_accept);
      if (st.c_proposed > 0) s_c += gain * (st.c_rate() - opt.target_accept);
      auto& c = kernel.config();
      for (std::size_t d = 0; d < c.step_theta.size(); ++d) c.step_theta[d] = base.step_theta[d] * std::exp(s_theta);
      c.step_tau = base.step_tau * std::exp(s_tau);
      for (std::size_t i = 0; i < c.step_c.size(); ++i) {
        for (std::size_t l = 0; l < c.step_c[i].size(); ++l) c.step_c[i][l] = base.step_c[i][l] * std::exp(s_c);
      }
    } else {
      trace.stats += st;
      if ((it - opt.burn_in) % thin == 0) trace.rows.push_back(spline_trace_row(post, b, it));
    }
  }
  trace.iterations = opt.iterations;
  trace.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (final_state != nullptr) *final_state = b;
  return trace;
}

// ---------------------------------------------------------------------------
// Solver-based posterior

struct SolverPriorSpec {
  std::vector<double> theta_mean;
  std::vector<double> theta_sd;
  double tau_lower = 0.0;
  double tau_upper = 0.0;
  std::vector<double> x0_mean;
  std::vector<double> x0_sd;
  double g0 = 1.0;
  double h0 = 1.0;
  SolverMethod method = SolverMethod::rk4;
  double step = 0.0;  // 0: span / 10000 (rk4) or span / 6000 (euler)
};

struct SolverState {
  std::vector<double> theta;
  double tau = 0.0;
  std::vector<double> x0;
  std::vector<double> sigma2;
  /// Residual sums of squares per series at (theta, tau, x0); +inf after divergence.
  std::vector<double> ss;
};

/// Default solver prior: the spline run's theta/tau priors, x0 ~ N(first observation, 5^2)
/// for observed components and N(0, 5^2) otherwise.
inline SolverPriorSpec default_solver_prior(const DeModel& model, const ObservationSet& data, const PriorSpec& prior,
                                            SolverMethod method = SolverMethod::rk4) {
  SolverPriorSpec s;
  s.theta_mean = prior.theta_mean;
  s.theta_sd = prior.theta_sd;
  s.tau_lower = prior.tau_lower;
  s.tau_upper = prior.tau_upper;
  s.x0_mean.assign(model.dim(), 0.0);
  s.x0_sd.assign(model.dim(), 5.0);
  for (const auto& ser : data.series) {
    if (!ser.values.empty()) s.x0_mean[ser.component] = ser.values.front();
  }
  s.g0 = prior.g0;
  s.h0 = prior.h0;
  s.method = method;
  return s;
}

inline double default_solver_step(SolverMethod method, double span) {
  return method == SolverMethod::euler ? span / 6000.0 : span / 10000.0;
}

/// Residual sums of squares of each series around the numerical solution;
/// +inf for every series when the solver diverges.
inline std::vector<double> solver_residual_ss(const DeModel& model, const ObservationSet& data, std::span<const double> theta, double tau,
                                              std::span<const double> x0, SolverMethod method, double step) {
  std::vector<double> ss(data.series.size(), 0.0);
  try {
    const Trajectory traj = solve(model, x0, theta, tau, step, data.t1, data.tmax, method);
    const std::size_t dim = model.dim();
    std::vector<double> state(dim);
    for (std::size_t s = 0; s < data.series.size(); ++s) {
      const auto& ser = data.series[s];
      for (std::size_t j = 0; j < ser.times.size(); ++j) {
        traj.interpolate(ser.times[j], state);
        const double r = ser.values[j] - state[ser.component];
        ss[s] += r * r;
      }
    }
  } catch (const DivergenceError&) {
    std::fill(ss.begin(), ss.end(), std::numeric_limits<double>::infinity());
  }
  for (double& v : ss) {
    if (std::isnan(v)) v = std::numeric_limits<double>::infinity();
  }
  return ss;
}

inline double gaussian_loglik_from_ss(const ObservationSet& data, std::span<const double> ss, std::span<const double> sigma2) {
  double ll = 0.0;
  for (std::size_t s = 0; s < data.series.size(); ++s) {
    if (!std::isfinite(ss[s])) return kNegInf;
    const double n = static_cast<double>(data.series[s].values.size());
    ll += -0.5 * n * std::log(2.0 * std::numbers::pi * sigma2[s]) - ss[s] / (2.0 * sigma2[s]);
  }
  return ll;
}

/// Gaussian log-likelihood of the data around the solver trajectory; -inf on divergence.
inline double solver_log_likelihood(const DeModel& model, const ObservationSet& data, std::span<const double> theta, double tau,
                                    std::span<const double> x0, std::span<const double> sigma2, SolverMethod method, double step) {
  const auto ss = solver_residual_ss(model, data, theta, tau, x0, method, step);
  return gaussian_loglik_from_ss(data, ss, sigma2);
}

class SolverPosterior {
 public:
  SolverPosterior(DeModel model, ObservationSet data, SolverPriorSpec spec) : model_(std::move(model)), data_(std::move(data)), spec_(std::move(spec)) {
    if (spec_.theta_mean.size() != model_.param_count() || spec_.theta_sd.size() != model_.param_count()) {
      throw std::invalid_argument("theta prior has wrong dimension");
    }
    if (spec_.x0_mean.size() != model_.dim() || spec_.x0_sd.size() != model_.dim()) throw std::invalid_argument("x0 prior has wrong dimension");
    if (model_.has_delay && !(spec_.tau_upper > spec_.tau_lower)) throw std::invalid_argument("delay prior bounds must satisfy lower < upper");
    if (!(spec_.step > 0.0)) spec_.step = default_solver_step(spec_.method, data_.tmax - data_.t1);
  }

  [[nodiscard]] const DeModel& model() const { return model_; }
  [[nodiscard]] const ObservationSet& data() const { return data_; }
  [[nodiscard]] const SolverPriorSpec& spec() const { return spec_; }

  [[nodiscard]] bool tau_in_support(double tau) const {
    if (!model_.has_delay) return true;
    return tau > spec_.tau_lower && tau < spec_.tau_upper && tau >= 0.0 && tau < data_.tmax - data_.t1;
  }

  [[nodiscard]] std::vector<double> residual_ss(const SolverState& s) const {
    return solver_residual_ss(model_, data_, s.theta, s.tau, s.x0, spec_.method, spec_.step);
  }

  [[nodiscard]] double log_likelihood(const SolverState& s) const { return gaussian_loglik_from_ss(data_, s.ss, s.sigma2); }

  [[nodiscard]] double log_theta_prior(std::span<const double> theta) const {
    if (!model_.in_support(theta)) return kNegInf;
    double lp = 0.0;
    for (std::size_t d = 0; d < theta.size(); ++d) {
      const double z = (theta[d] - spec_.theta_mean[d]) / spec_.theta_sd[d];
      lp -= 0.5 * z * z;
    }
    return lp;
  }

  [[nodiscard]] double log_x0_prior(std::span<const double> x0) const {
    double lp = 0.0;
    for (std::size_t i = 0; i < x0.size(); ++i) {
      const double z = (x0[i] - spec_.x0_mean[i]) / spec_.x0_sd[i];
      lp -= 0.5 * z * z;
    }
    return lp;
  }

  [[nodiscard]] SolverState sample_prior(Rng& rng) const {
    SolverState s;
    s.theta.resize(model_.param_count());
    for (std::size_t d = 0; d < s.theta.size(); ++d) {
      const double mu = spec_.theta_mean[d];
      const double sd = spec_.theta_sd[d];
      s.theta[d] = model_.param_support[d] == Support::positive ? truncated_normal_above(rng, mu, sd, 0.0) : normal(rng, mu, sd);
    }
    if (model_.has_delay) {
      const double lo = std::max(spec_.tau_lower, 0.0);
      const double hi = std::min(spec_.tau_upper, data_.tmax - data_.t1);
      do {
        s.tau = lo + (hi - lo) * uniform01(rng);
      } while (!tau_in_support(s.tau));
    }
    s.x0.resize(model_.dim());
    for (std::size_t i = 0; i < s.x0.size(); ++i) s.x0[i] = normal(rng, spec_.x0_mean[i], spec_.x0_sd[i]);
    s.sigma2.resize(data_.series.size());
    for (double& v : s.sigma2) v = inverse_gamma(rng, spec_.g0, spec_.h0);
    s.ss = residual_ss(s);
    return s;
  }

 private:
  DeModel model_;
  ObservationSet data_;
  SolverPriorSpec spec_;
};

struct SolverKernelConfig {
  std::vector<double> step_theta;
  double step_tau = 0.0;
  std::vector<double> step_x0;
  bool adapt_steps = false;
};

inline SolverKernelConfig default_solver_kernel_config(const SolverPosterior& post) {
  SolverKernelConfig cfg;
  for (double sd : post.spec().theta_sd) cfg.step_theta.push_back(0.05 * sd);
  cfg.step_tau = 0.01 * (post.data().tmax - post.data().t1);
  for (double sd : post.spec().x0_sd) cfg.step_x0.push_back(0.05 * sd);
  return cfg;
}

/// Metropolis-within-Gibbs on p(y | theta, tau, x0, sigma^2)^alpha times the
/// priors: exact sigma^2 draws, random walks on each theta and x0 coordinate
/// and on tau, one solver call per proposal.
class SolverKernel {
 public:
  SolverKernel(const SolverPosterior& post, SolverKernelConfig cfg) : post_(&post), cfg_(std::move(cfg)) {}

  [[nodiscard]] const SolverPosterior& posterior() const { return *post_; }
  [[nodiscard]] const SolverKernelConfig& config() const { return cfg_; }
  SolverKernelConfig& config() { return cfg_; }

  SweepStats sweep(SolverState& s, double alpha, Rng& rng) const {
    SweepStats stats;
    const auto& spec = post_->spec();
    const auto& data = post_->data();
    for (std::size_t k = 0; k < s.sigma2.size(); ++k) {
      const double j = static_cast<double>(data.series[k].values.size());
      if (alpha == 0.0 || !std::isfinite(s.ss[k])) {
        s.sigma2[k] = inverse_gamma(rng, spec.g0, spec.h0);
      } else {
        s.sigma2[k] = inverse_gamma(rng, spec.g0 + 0.5 * alpha * j, spec.h0 + 0.5 * alpha * s.ss[k]);
      }
    }
    double ll = post_->log_likelihood(s);
    auto try_move = [&](SolverState& prop, double log_prior_ratio) {
      prop.ss = post_->residual_ss(prop);
      const double ll_new = post_->log_likelihood(prop);
      double log_ratio = log_prior_ratio;
      if (alpha != 0.0) {
        if (!std::isfinite(ll_new)) return false;
        log_ratio += std::isfinite(ll) ? alpha * (ll_new - ll) : std::numeric_limits<double>::infinity();
      }
      if (!mh_accept(rng, log_ratio)) return false;
      s = std::move(prop);
      ll = ll_new;
      return true;
    };
    for (std::size_t d = 0; d < s.theta.size(); ++d) {
      ++stats.theta_proposed;
      SolverState prop = s;
      prop.theta[d] += normal(rng, 0.0, cfg_.step_theta[d]);
      const double lp_new = post_->log_theta_prior(prop.theta);
      if (!std::isfinite(lp_new)) continue;
      if (try_move(prop, lp_new - post_->log_theta_prior(s.theta))) ++stats.theta_accepted;
    }
    if (post_->model().has_delay) {
      ++stats.tau_proposed;
      SolverState prop = s;
      const double sd = cfg_.step_tau;
      prop.tau = truncated_normal_above(rng, s.tau, sd, 0.0);
      if (post_->tau_in_support(prop.tau)) {
        const double hastings = std::log(normal_cdf(s.tau / sd)) - std::log(normal_cdf(prop.tau / sd));
        if (try_move(prop, hastings)) ++stats.tau_accepted;
      }
    }
    for (std::size_t i = 0; i < s.x0.size(); ++i) {
      ++stats.c_proposed;
      SolverState prop = s;
      prop.x0[i] += normal(rng, 0.0, cfg_.step_x0[i]);
      if (try_move(prop, post_->log_x0_prior(prop.x0) - post_->log_x0_prior(s.x0))) ++stats.c_accepted;
    }
    return stats;
  }

  void adapt(std::span<const SolverState> states, std::span<const double> w) {
    auto weighted_sd = [&](auto&& get) {
      double m = 0.0;
      for (std::size_t k = 0; k < states.size(); ++k) m += w[k] * get(states[k]);
      double v = 0.0;
      for (std::size_t k = 0; k < states.size(); ++k) v += w[k] * (get(states[k]) - m) * (get(states[k]) - m);
      return std::sqrt(std::max(v, 0.0));
    };
    auto set = [](double& step, double sd, double f) {
      if (sd > 0.0 && std::isfinite(sd)) step = f * sd;
    };
    const double ft = 2.38 / std::sqrt(static_cast<double>(std::max<std::size_t>(cfg_.step_theta.size(), 1)));
    for (std::size_t d = 0; d < cfg_.step_theta.size(); ++d) set(cfg_.step_theta[d], weighted_sd([d](const SolverState& s) { return s.theta[d]; }), ft);
    if (post_->model().has_delay) set(cfg_.step_tau, weighted_sd([](const SolverState& s) { return s.tau; }), 2.38);
    const double fx = 2.38 / std::sqrt(static_cast<double>(std::max<std::size_t>(cfg_.step_x0.size(), 1)));
    for (std::size_t i = 0; i < cfg_.step_x0.size(); ++i) set(cfg_.step_x0[i], weighted_sd([i](const SolverState& s) { return s.x0[i]; }), fx);
  }

 private:
  const SolverPosterior* post_;
  SolverKernelConfig cfg_;
};

/// Solver posterior for the SMC engine: reference = priors, increment = log-likelihood.
class SolverTarget {
 public:
  using State = SolverState;

  SolverTarget(const SolverPosterior& post, SolverKernelConfig cfg) : kernel_(post, std::move(cfg)) {}

  [[nodiscard]] const SolverKernel& kernel() const { return kernel_; }
  [[nodiscard]] State sample_reference(Rng& rng) const { return kernel_.posterior().sample_prior(rng); }
  [[nodiscard]] double log_increment(const State& s) const { return kernel_.posterior().log_likelihood(s); }
  SweepStats move(State& s, double alpha, Rng& rng) const { return kernel_.sweep(s, alpha, rng); }
  void adapt(std::span<const State> states, std::span<const double> w) {
    if (kernel_.config().adapt_steps) kernel_.adapt(states, w);
  }

 private:
  SolverKernel kernel_;
};

inline std::vector<std::string> solver_trace_columns(const SolverPosterior& post) {
  std::vector<std::string> cols = {"iteration"};
  for (const auto& n : post.model().param_names) cols.push_back(n);
  if (post.model().has_delay) cols.emplace_back("tau");
  for (const auto& s : post.data().series) cols.push_back("sigma2_" + post.model().component_names[s.component]);
  for (const auto& n : post.model().component_names) cols.push_back(n + "_0");
  return cols;
}

inline std::vector<double> solver_trace_row(const SolverPosterior& post, const SolverState& s, std::size_t iteration) {
  std::vector<double> row = {static_cast<double>(iteration)};
  row.insert(row.end(), s.theta.begin(), s.theta.end());
  if (post.model().has_delay) row.push_back(s.tau);
  row.insert(row.end(), s.sigma2.begin(), s.sigma2.end());
  row.insert(row.end(), s.x0.begin(), s.x0.end());
  return row;
}

struct McmcSolverOptions {
  std::size_t iterations = 400000;
  std::size_t burn_in = 0;
  std::size_t thin = 100;
  std::uint64_t seed = 1;
  int init_retries = 1000;
};

/// Single chain on the solver posterior, started from a prior draw with a finite likelihood.
inline McmcTrace mcmc_desolve(const SolverPosterior& post, SolverKernelConfig cfg, const McmcSolverOptions& opt,
                              SolverState* final_state = nullptr) {
  const auto start = std::chrono::steady_clock::now();
  Rng rng = make_stream(opt.seed, 0x3c3c0002, 0);
  const SolverKernel kernel(post, std::move(cfg));
  SolverState s = post.sample_prior(rng);
  for (int attempt = 1; !std::isfinite(post.log_likelihood(s)); ++attempt) {
    if (attempt >= opt.init_retries) throw DegenerateError("no prior draw gives a finite solver likelihood");
    s = post.sample_prior(rng);
  }
  McmcTrace trace;
  trace.columns = solver_trace_columns(post);
  const std::size_t thin = std::max<std::size_t>(opt.thin, 1);
  for (std::size_t it = 1; it <= opt.iterations; ++it) {
    const SweepStats st = kernel.sweep(s, 1.0, rng);
    if (it > opt.burn_in) {
      trace.stats += st;
      if ((it - opt.burn_in) % thin == 0) trace.rows.push_back(solver_trace_row(post, s, it));
    }
  }
  trace.iterations = opt.iterations;
  trace.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (final_state != nullptr) *final_state = s;
  return trace;
}

/// Annealed SMC on the solver posterior, sharing the engine with the spline sampler.
inline SmcResult<SolverState> smc_desolve(const SolverPosterior& post, SolverKernelConfig cfg, const SmcConfig& smc) {
  SolverTarget target(post, std::move(cfg));
  return run_smc(target, smc);
}

}  // namespace smcde
