#pragma once

/// \file
/// Metropolis-within-Gibbs sweep leaving gamma_r invariant: Gibbs draws for
/// sigma^2 and lambda, random-walk MH for theta, tau and each spline coefficient.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "smcde/posterior.hpp"
#include "smcde/random.hpp"
#include "smcde/sweep_stats.hpp"

namespace smcde {

enum class TemperingMode {
  paper,  // sigma^2 shape g0 + J/2
  exact   // sigma^2 shape g0 + alpha J/2
};

struct KernelConfig {
  double step_tau = 0.0;
  std::vector<double> step_theta;
  /// Per component, per coefficient.
  std::vector<std::vector<double>> step_c;
  int sweeps_per_iteration = 1;
  bool adapt_steps = false;
  TemperingMode tempering = TemperingMode::paper;
};

/// Defaults: 1% of the span for tau, 5% of the prior sd for theta, 2% of the
/// reference scale for each coefficient.
inline KernelConfig default_kernel_config(const SplinePosterior& post) {
  KernelConfig cfg;
  cfg.step_tau = 0.01 * (post.data().tmax - post.data().t1);
  for (double sd : post.prior().theta_sd) cfg.step_theta.push_back(0.05 * sd);
  for (const auto& b : post.bases()) cfg.step_c.emplace_back(b.size(), 0.02 * post.prior().sigma_c);
  return cfg;
}

/// Caches of one particle's current state, valid between kernel steps.
struct KernelWorkspace {
  std::shared_ptr<const CollocationTable> table;
  NodeCache cache;
  std::vector<std::vector<double>> obs_resid;  // y - Phi c per series
  std::vector<double> scratch;
  std::vector<double> g;
  std::vector<double> x;
  std::vector<double> lag;
  std::vector<double> new_resid;
};

namespace detail {

// Change in a squared residual, with non-finite residuals treated as an
// infinite penalty.
inline double delta_sq(double old_r, double new_r) {
  if (!std::isfinite(new_r)) return std::numeric_limits<double>::infinity();
  if (!std::isfinite(old_r)) return -std::numeric_limits<double>::infinity();
  return new_r * new_r - old_r * old_r;
}

}  // namespace detail

class SplineKernel {
 public:
  SplineKernel(const SplinePosterior& post, KernelConfig cfg) : post_(&post), cfg_(std::move(cfg)) {
    if (cfg_.step_theta.size() != post.model().param_count()) throw std::invalid_argument("theta step sizes have wrong dimension");
    if (cfg_.step_c.size() != post.model().dim()) throw std::invalid_argument("coefficient step sizes have wrong dimension");
    for (std::size_t i = 0; i < cfg_.step_c.size(); ++i) {
      if (cfg_.step_c[i].size() != post.bases()[i].size()) throw std::invalid_argument("coefficient step sizes have wrong length");
    }
    if (post.delayed() && !(cfg_.step_tau > 0.0)) throw std::invalid_argument("tau step size must be positive");
    if (cfg_.sweeps_per_iteration < 1) throw std::invalid_argument("sweeps per iteration must be >= 1");
  }

  [[nodiscard]] const SplinePosterior& posterior() const { return *post_; }
  [[nodiscard]] const KernelConfig& config() const { return cfg_; }
  KernelConfig& config() { return cfg_; }

  /// Fills the workspace caches for state b.
  void prepare(const ParticleState& b, KernelWorkspace& ws) const {
    if (!ws.table || ws.table->tau() != b.tau) ws.table = post_->table_for(b.tau);
    ws.cache.evaluate(*ws.table, post_->model(), b.c, b.theta);
    const auto& data = post_->data();
    ws.obs_resid.resize(data.series.size());
    for (std::size_t s = 0; s < data.series.size(); ++s) {
      const auto& ser = data.series[s];
      const auto rows = post_->observation_rows(s);
      ws.obs_resid[s].resize(ser.values.size());
      for (std::size_t j = 0; j < ser.values.size(); ++j) ws.obs_resid[s][j] = ser.values[j] - rows[j].dot(b.c[ser.component]);
    }
  }

  [[nodiscard]] static double current_penalty(const KernelWorkspace& ws) {
    return NodeCache::weighted_sum(*ws.table, ws.cache.resid);
  }

  void gibbs_sigma2(ParticleState& b, double alpha, Rng& rng, const KernelWorkspace& ws) const {
    const auto& pr = post_->prior();
    for (std::size_t s = 0; s < b.sigma2.size(); ++s) {
      double ss = 0.0;
      for (double r : ws.obs_resid[s]) ss += r * r;
      const double j = static_cast<double>(ws.obs_resid[s].size());
      const double shape = pr.g0 + (cfg_.tempering == TemperingMode::paper ? 0.5 * j : 0.5 * alpha * j);
      const double scale = pr.h0 + 0.5 * alpha * ss;
      b.sigma2[s] = inverse_gamma(rng, shape, scale);
    }
  }

  void gibbs_lambda(ParticleState& b, double alpha, Rng& rng, const KernelWorkspace& ws) const {
    const auto& pr = post_->prior();
    const double total_r = alpha == 0.0 ? 0.0 : current_penalty(ws);
    if (!std::isfinite(total_r)) return;  // state outside the tempered support; leave lambda alone
    const double shape = pr.a_lambda + 0.5 * alpha * post_->penalty_rank();
    const double rate = pr.b_lambda + 0.5 * alpha * total_r;
    const double draw = gamma_rate(rng, shape, rate);
    if (draw > 0.0 && std::isfinite(draw)) b.lambda = draw;
  }

  /// Per-coordinate random walk on theta with the tempered fidelity and the prior.
  void mh_theta(ParticleState& b, double alpha, Rng& rng, KernelWorkspace& ws, SweepStats& stats) const {
    const auto& model = post_->model();
    double r_cur = current_penalty(ws);
    double lp_cur = post_->log_theta_prior(b.theta);
    for (std::size_t d = 0; d < b.theta.size(); ++d) {
      ++stats.theta_proposed;
      const double old = b.theta[d];
      b.theta[d] = old + normal(rng, 0.0, cfg_.step_theta[d]);
      const double lp_new = post_->log_theta_prior(b.theta);
      if (!std::isfinite(lp_new)) {
        b.theta[d] = old;
        continue;
      }
      double r_new = 0.0;
      double log_ratio = lp_new - lp_cur;
      if (alpha != 0.0) {
        ws.cache.update_residuals(*ws.table, model, b.theta, ws.scratch, ws.g);
        r_new = NodeCache::weighted_sum(*ws.table, ws.scratch);
        log_ratio += alpha * (-0.5 * b.lambda * (r_new - r_cur));
      }
      if (mh_accept(rng, log_ratio)) {
        ++stats.theta_accepted;
        lp_cur = lp_new;
        if (alpha != 0.0) {
          std::swap(ws.cache.resid, ws.scratch);
          r_cur = r_new;
        } else {
          ws.cache.update_residuals(*ws.table, model, b.theta, ws.cache.resid, ws.g);
          r_cur = current_penalty(ws);
        }
      } else {
        b.theta[d] = old;
      }
    }
  }

  /// Random walk on tau truncated to tau > 0, with the Hastings correction
  /// for the truncation. Rejected moves keep the current delay.
  void mh_tau(ParticleState& b, double alpha, Rng& rng, KernelWorkspace& ws, SweepStats& stats) const {
    if (!post_->delayed()) return;
    ++stats.tau_proposed;
    const double sd = cfg_.step_tau;
    const double tau_new = truncated_normal_above(rng, b.tau, sd, 0.0);
    if (!post_->tau_in_support(tau_new)) return;
    double log_ratio = post_->log_tau_prior(tau_new) - post_->log_tau_prior(b.tau);
    log_ratio += std::log(normal_cdf(b.tau / sd)) - std::log(normal_cdf(tau_new / sd));
    auto table = post_->table_for(tau_new);
    NodeCache cache;
    cache.evaluate(*table, post_->model(), b.c, b.theta);
    if (alpha != 0.0) {
      const double r_new = NodeCache::weighted_sum(*table, cache.resid);
      log_ratio += alpha * (-0.5 * b.lambda * (r_new - current_penalty(ws)));
    }
    if (mh_accept(rng, log_ratio)) {
      ++stats.tau_accepted;
      b.tau = tau_new;
      ws.table = std::move(table);
      ws.cache = std::move(cache);
    }
  }

  /// Per-coordinate random walk on every coefficient of every component. The
  /// ratio includes the tempered likelihood and fidelity and the (1 - alpha)
  /// share of the reference; only nodes and observations touched by the
  /// coefficient are recomputed.
  void mh_c(ParticleState& b, double alpha, Rng& rng, KernelWorkspace& ws, SweepStats& stats) const {
    const auto& model = post_->model();
    const auto& table = *ws.table;
    const auto& data = post_->data();
    const auto& pr = post_->prior();
    const std::size_t dim = model.dim();
    const double inv2sc2 = 0.5 / (pr.sigma_c * pr.sigma_c);
    ws.x.resize(dim);
    ws.lag.resize(dim);
    ws.g.resize(dim);
    for (std::size_t j = 0; j < dim; ++j) {
      for (std::size_t l = 0; l < b.c[j].size(); ++l) {
        ++stats.c_proposed;
        const double delta = normal(rng, 0.0, cfg_.step_c[j][l]);
        const double cur = b.c[j][l];
        const double prop = cur + delta;
        const double d_ref = -((prop - pr.c_hat[j][l]) * (prop - pr.c_hat[j][l]) - (cur - pr.c_hat[j][l]) * (cur - pr.c_hat[j][l])) * inv2sc2;

        double d_ll = 0.0;
        for (std::size_t s = 0; s < data.series.size(); ++s) {
          if (data.series[s].component != j) continue;
          double dss = 0.0;
          for (const auto& dep : post_->observation_dependencies(s, l)) {
            const double r_old = ws.obs_resid[s][dep.index];
            const double r_new = r_old - delta * dep.value;
            dss += r_new * r_new - r_old * r_old;
          }
          d_ll -= dss / (2.0 * b.sigma2[s]);
        }

        const auto deps = table.dependencies(j, l);
        ws.new_resid.resize(deps.size());
        double d_r = 0.0;
        for (std::size_t k = 0; k < deps.size(); ++k) {
          const auto& dep = deps[k];
          const std::size_t n = dep.node;
          const std::size_t i = table.component(n);
          std::copy_n(ws.cache.x.begin() + static_cast<std::ptrdiff_t>(n * dim), dim, ws.x.begin());
          std::copy_n(ws.cache.lag.begin() + static_cast<std::ptrdiff_t>(n * dim), dim, ws.lag.begin());
          ws.x[j] += delta * dep.value;
          ws.lag[j] += delta * dep.lag;
          const double deriv = ws.cache.deriv[n] + delta * dep.deriv;
          model.rhs(ws.x, ws.lag, b.theta, ws.g);
          const double r_new = deriv - ws.g[i];
          ws.new_resid[k] = r_new;
          d_r += table.weight(n) * detail::delta_sq(ws.cache.resid[n], r_new);
        }

        const double log_ratio = anneal(alpha, d_ll - 0.5 * b.lambda * d_r) + anneal(1.0 - alpha, d_ref);
        if (!mh_accept(rng, log_ratio)) continue;
        ++stats.c_accepted;
        b.c[j][l] = prop;
        for (std::size_t s = 0; s < data.series.size(); ++s) {
          if (data.series[s].component != j) continue;
          for (const auto& dep : post_->observation_dependencies(s, l)) ws.obs_resid[s][dep.index] -= delta * dep.value;
        }
        for (std::size_t k = 0; k < deps.size(); ++k) {
          const auto& dep = deps[k];
          const std::size_t n = dep.node;
          ws.cache.x[n * dim + j] += delta * dep.value;
          ws.cache.lag[n * dim + j] += delta * dep.lag;
          ws.cache.deriv[n] += delta * dep.deriv;
          ws.cache.resid[n] = ws.new_resid[k];
        }
      }
    }
  }

  /// One full scan sigma^2, lambda, theta, tau, c (repeated sweeps_per_iteration times).
  SweepStats sweep(ParticleState& b, double alpha, Rng& rng, KernelWorkspace& ws) const {
    SweepStats stats;
    prepare(b, ws);
    for (int rep = 0; rep < cfg_.sweeps_per_iteration; ++rep) {
      gibbs_sigma2(b, alpha, rng, ws);
      gibbs_lambda(b, alpha, rng, ws);
      mh_theta(b, alpha, rng, ws, stats);
      mh_tau(b, alpha, rng, ws, stats);
      mh_c(b, alpha, rng, ws, stats);
    }
    return stats;
  }

  SweepStats sweep(ParticleState& b, double alpha, Rng& rng) const {
    KernelWorkspace ws;
    return sweep(b, alpha, rng, ws);
  }

  /// Sets the random-walk scales to 2.38 / sqrt(block dimension) times the
  /// weighted standard deviation of each coordinate. Coordinates with zero
  /// spread keep their previous scale.
  void adapt(std::span<const ParticleState> states, std::span<const double> weights) {
    if (states.empty()) return;
    auto weighted_sd = [&](auto&& get) {
      double m = 0.0;
      for (std::size_t k = 0; k < states.size(); ++k) m += weights[k] * get(states[k]);
      double v = 0.0;
      for (std::size_t k = 0; k < states.size(); ++k) {
        const double d = get(states[k]) - m;
        v += weights[k] * d * d;
      }
      return std::sqrt(std::max(v, 0.0));
    };
    auto set = [](double& step, double sd, double factor) {
      if (sd > 0.0 && std::isfinite(sd)) step = factor * sd;
    };
    const double ft = 2.38 / std::sqrt(static_cast<double>(std::max<std::size_t>(cfg_.step_theta.size(), 1)));
    for (std::size_t d = 0; d < cfg_.step_theta.size(); ++d) {
      set(cfg_.step_theta[d], weighted_sd([d](const ParticleState& s) { return s.theta[d]; }), ft);
    }
    if (post_->delayed()) set(cfg_.step_tau, weighted_sd([](const ParticleState& s) { return s.tau; }), 2.38);
    for (std::size_t i = 0; i < cfg_.step_c.size(); ++i) {
      const double fc = 2.38 / std::sqrt(static_cast<double>(cfg_.step_c[i].size()));
      for (std::size_t l = 0; l < cfg_.step_c[i].size(); ++l) {
        set(cfg_.step_c[i][l], weighted_sd([i, l](const ParticleState& s) { return s.c[i][l]; }), fc);
      }
    }
  }

 private:
  const SplinePosterior* post_;
  KernelConfig cfg_;
};

/// Spline posterior in the shape the SMC engine expects.
class SplineTarget {
 public:
  using State = ParticleState;

  SplineTarget(const SplinePosterior& post, KernelConfig cfg) : kernel_(post, std::move(cfg)) {}

  [[nodiscard]] const SplineKernel& kernel() const { return kernel_; }
  [[nodiscard]] State sample_reference(Rng& rng) const { return kernel_.posterior().sample_reference(rng); }
  [[nodiscard]] double log_increment(const State& b) const { return kernel_.posterior().log_incremental_weight(b); }
  SweepStats move(State& b, double alpha, Rng& rng) const { return kernel_.sweep(b, alpha, rng); }
  void adapt(std::span<const State> states, std::span<const double> weights) {
    if (kernel_.config().adapt_steps) kernel_.adapt(states, weights);
  }

 private:
  SplineKernel kernel_;
};

}  // namespace smcde
