#pragma once

/// \file
/// Log-densities of the spline posterior: Gaussian likelihood of the data
/// around the spline trajectories, the DE-fidelity prior on the coefficients,
/// parameter priors, the coefficient reference distribution and the annealed
/// targets gamma_r = [p(y|b) pi0(c|theta,tau,lambda)]^alpha rho(c)^(1-alpha) pi0(rest).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iostream>
#include <limits>
#include <memory>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "smcde/bspline.hpp"
#include "smcde/models.hpp"
#include "smcde/quadrature.hpp"
#include "smcde/random.hpp"

namespace smcde {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// alpha * value with 0 * (-inf) taken as 0.
inline double anneal(double alpha, double value) { return alpha == 0.0 ? 0.0 : alpha * value; }

struct ObservationSeries {
  std::size_t component = 0;
  std::vector<double> times;
  std::vector<double> values;
};

/// Observations on the model scale (lognormal components already logged).
struct ObservationSet {
  double t1 = 0.0;
  double tmax = 1.0;
  std::vector<ObservationSeries> series;

  [[nodiscard]] std::size_t total_count() const {
    std::size_t n = 0;
    for (const auto& s : series) n += s.values.size();
    return n;
  }
};

/// Log-transforms the series of lognormal components.
inline ObservationSet to_model_scale(ObservationSet data, const DeModel& model) {
  for (auto& s : data.series) {
    const auto it = std::find(model.observed.begin(), model.observed.end(), s.component);
    if (it == model.observed.end()) continue;
    if (model.noise[static_cast<std::size_t>(it - model.observed.begin())] != NoiseKind::lognormal) continue;
    for (double& v : s.values) {
      if (!(v > 0.0)) throw std::invalid_argument("lognormal observations must be positive");
      v = std::log(v);
    }
  }
  return data;
}

struct PriorSpec {
  std::vector<double> theta_mean;
  std::vector<double> theta_sd;
  double tau_lower = 0.0;
  double tau_upper = 0.0;
  double g0 = 1.0;
  double h0 = 1.0;
  double a_lambda = 1.0;
  double b_lambda = 1.0;
  double sigma_c = 100.0;
  /// Reference centers, one coefficient vector per component.
  std::vector<std::vector<double>> c_hat;
};

/// One sampler state: theta, tau, coefficients per component, observation
/// variances per observed series, smoothing parameter.
struct ParticleState {
  std::vector<double> theta;
  double tau = 0.0;
  std::vector<std::vector<double>> c;
  std::vector<double> sigma2;
  double lambda = 1.0;
};

/// Quadrature nodes of all components for a fixed delay, with the sparse basis
/// rows needed to evaluate spline states at s and s - tau, and an index from
/// each coefficient to the nodes it touches.
class CollocationTable {
 public:
  struct Dependency {
    std::size_t node;
    double value;  // phi_l(s)
    double lag;    // phi_l(s - tau)
    double deriv;  // phi_l'(s) when the node belongs to the coefficient's own component
  };

  CollocationTable(std::span<const SplineBasis> bases, double tau, int quad_nodes) : tau_(tau), dim_(bases.size()) {
    deps_.resize(dim_);
    for (std::size_t j = 0; j < dim_; ++j) deps_[j].resize(bases[j].size());
    for (std::size_t i = 0; i < dim_; ++i) {
      const QuadratureGrid grid = build_grid(bases[i].knots(), tau, quad_nodes);
      for (std::size_t n = 0; n < grid.nodes.size(); ++n) {
        const double s = grid.nodes[n];
        const std::size_t node = weights_.size();
        weights_.push_back(grid.weights[n]);
        component_.push_back(i);
        deriv_rows_.push_back(bases[i].deriv_row(s));
        for (std::size_t j = 0; j < dim_; ++j) {
          value_rows_.push_back(bases[j].row(s));
          lag_rows_.push_back(bases[j].row(std::max(s - tau, bases[j].t1())));
        }
        for (std::size_t j = 0; j < dim_; ++j) {
          const SparseRow& v = value_rows_[node * dim_ + j];
          const SparseRow& g = lag_rows_[node * dim_ + j];
          const SparseRow* d = (j == i) ? &deriv_rows_.back() : nullptr;
          std::size_t lo = std::min(v.first, g.first);
          std::size_t hi = std::max(v.first + static_cast<std::size_t>(v.count), g.first + static_cast<std::size_t>(g.count));
          if (d != nullptr) {
            lo = std::min(lo, d->first);
            hi = std::max(hi, d->first + static_cast<std::size_t>(d->count));
          }
          for (std::size_t l = lo; l < hi; ++l) {
            const double a = v.at(l);
            const double b = g.at(l);
            const double c = d != nullptr ? d->at(l) : 0.0;
            if (a != 0.0 || b != 0.0 || c != 0.0) deps_[j][l].push_back({node, a, b, c});
          }
        }
      }
    }
  }

  [[nodiscard]] double tau() const { return tau_; }
  [[nodiscard]] std::size_t dim() const { return dim_; }
  [[nodiscard]] std::size_t node_count() const { return weights_.size(); }
  [[nodiscard]] double weight(std::size_t n) const { return weights_[n]; }
  [[nodiscard]] std::size_t component(std::size_t n) const { return component_[n]; }
  [[nodiscard]] const SparseRow& value_row(std::size_t n, std::size_t j) const { return value_rows_[n * dim_ + j]; }
  [[nodiscard]] const SparseRow& lag_row(std::size_t n, std::size_t j) const { return lag_rows_[n * dim_ + j]; }
  [[nodiscard]] const SparseRow& deriv_row(std::size_t n) const { return deriv_rows_[n]; }
  [[nodiscard]] std::span<const Dependency> dependencies(std::size_t j, std::size_t l) const { return deps_[j][l]; }

 private:
  double tau_;
  std::size_t dim_;
  std::vector<double> weights_;
  std::vector<std::size_t> component_;
  std::vector<SparseRow> value_rows_;
  std::vector<SparseRow> lag_rows_;
  std::vector<SparseRow> deriv_rows_;
  std::vector<std::vector<std::vector<Dependency>>> deps_;
};

/// Spline states and DE residuals at every node of a CollocationTable.
struct NodeCache {
  std::vector<double> x;      // [node * dim + j]
  std::vector<double> lag;    // [node * dim + j]
  std::vector<double> deriv;  // [node], own component
  std::vector<double> resid;  // [node]

  /// Recomputes everything from scratch.
  void evaluate(const CollocationTable& table, const DeModel& model, std::span<const std::vector<double>> coef,
                std::span<const double> theta) {
    const std::size_t dim = table.dim();
    const std::size_t nn = table.node_count();
    x.resize(nn * dim);
    lag.resize(nn * dim);
    deriv.resize(nn);
    resid.resize(nn);
    std::vector<double> g(dim);
    for (std::size_t n = 0; n < nn; ++n) {
      for (std::size_t j = 0; j < dim; ++j) {
        x[n * dim + j] = table.value_row(n, j).dot(coef[j]);
        lag[n * dim + j] = table.lag_row(n, j).dot(coef[j]);
      }
      deriv[n] = table.deriv_row(n).dot(coef[table.component(n)]);
    }
    update_residuals(table, model, theta, resid, g);
  }

  /// Residuals for another theta, keeping the spline states.
  void update_residuals(const CollocationTable& table, const DeModel& model, std::span<const double> theta, std::vector<double>& out,
                        std::vector<double>& g) const {
    const std::size_t dim = table.dim();
    out.resize(table.node_count());
    g.resize(dim);
    for (std::size_t n = 0; n < table.node_count(); ++n) {
      model.rhs(std::span<const double>(x.data() + n * dim, dim), std::span<const double>(lag.data() + n * dim, dim), theta, g);
      out[n] = deriv[n] - g[table.component(n)];
    }
  }

  [[nodiscard]] static double weighted_sum(const CollocationTable& table, std::span<const double> r) {
    double s = 0.0;
    for (std::size_t n = 0; n < r.size(); ++n) s += table.weight(n) * r[n] * r[n];
    return std::isnan(s) ? std::numeric_limits<double>::infinity() : s;
  }

  [[nodiscard]] std::vector<double> per_component(const CollocationTable& table) const {
    std::vector<double> out(table.dim(), 0.0);
    for (std::size_t n = 0; n < resid.size(); ++n) out[table.component(n)] += table.weight(n) * resid[n] * resid[n];
    for (double& v : out) {
      if (std::isnan(v)) v = std::numeric_limits<double>::infinity();
    }
    return out;
  }
};

class SplinePosterior {
 public:
  SplinePosterior(DeModel model, std::vector<SplineBasis> bases, ObservationSet data, PriorSpec prior, int quad_nodes = 3)
      : model_(std::move(model)),
        bases_(std::move(bases)),
        data_(std::move(data)),
        prior_(std::move(prior)),
        quad_nodes_(quad_nodes) {
    if (bases_.size() != model_.dim()) throw std::invalid_argument("need one spline basis per DE component");
    if (prior_.theta_mean.size() != model_.param_count() || prior_.theta_sd.size() != model_.param_count()) {
      throw std::invalid_argument("theta prior has wrong dimension");
    }
    if (data_.series.empty()) throw std::invalid_argument("no observed components");
    if (prior_.c_hat.size() != model_.dim()) throw std::invalid_argument("reference centers missing");
    for (std::size_t i = 0; i < model_.dim(); ++i) {
      if (prior_.c_hat[i].size() != bases_[i].size()) throw std::invalid_argument("reference center has wrong length");
      rank_ += static_cast<double>(bases_[i].size()) - 2.0;
    }
    if (delayed()) {
      if (!(prior_.tau_upper > prior_.tau_lower)) throw std::invalid_argument("delay prior bounds must satisfy lower < upper");
    }
    obs_rows_.resize(data_.series.size());
    obs_deps_.resize(data_.series.size());
    for (std::size_t s = 0; s < data_.series.size(); ++s) {
      const auto& ser = data_.series[s];
      if (ser.component >= model_.dim()) throw std::invalid_argument("observation series refers to unknown component");
      if (ser.times.size() != ser.values.size()) throw std::invalid_argument("observation times and values differ in length");
      const SplineBasis& b = bases_[ser.component];
      obs_deps_[s].resize(b.size());
      for (std::size_t j = 0; j < ser.times.size(); ++j) {
        const SparseRow row = b.row(ser.times[j]);
        obs_rows_[s].push_back(row);
        for (int r = 0; r < row.count; ++r) {
          obs_deps_[s][row.first + static_cast<std::size_t>(r)].push_back({j, row.values[static_cast<std::size_t>(r)]});
        }
      }
    }
    if (!delayed()) ode_table_ = std::make_shared<const CollocationTable>(bases_, 0.0, quad_nodes_);
  }

  struct ObsDependency {
    std::size_t index;
    double value;
  };

  [[nodiscard]] const DeModel& model() const { return model_; }
  [[nodiscard]] std::span<const SplineBasis> bases() const { return bases_; }
  [[nodiscard]] const ObservationSet& data() const { return data_; }
  [[nodiscard]] const PriorSpec& prior() const { return prior_; }
  [[nodiscard]] int quad_nodes() const { return quad_nodes_; }
  [[nodiscard]] bool delayed() const { return model_.has_delay; }
  /// Sum over components of (L_i - 2), the exponent count of the lambda normalizer.
  [[nodiscard]] double penalty_rank() const { return rank_; }
  [[nodiscard]] std::span<const SparseRow> observation_rows(std::size_t series) const { return obs_rows_[series]; }
  [[nodiscard]] std::span<const ObsDependency> observation_dependencies(std::size_t series, std::size_t l) const {
    return obs_deps_[series][l];
  }

  /// Collocation table for a delay; cached for ODE models.
  [[nodiscard]] std::shared_ptr<const CollocationTable> table_for(double tau) const {
    if (!delayed()) return ode_table_;
    return std::make_shared<const CollocationTable>(bases_, tau, quad_nodes_);
  }

  [[nodiscard]] bool tau_in_support(double tau) const {
    if (!delayed()) return true;
    return tau > prior_.tau_lower && tau < prior_.tau_upper && tau < data_.tmax - data_.t1 && tau >= 0.0;
  }

  [[nodiscard]] double residual_ss(const ParticleState& b, std::size_t series) const {
    const auto& ser = data_.series[series];
    const auto& coef = b.c[ser.component];
    double ss = 0.0;
    for (std::size_t j = 0; j < ser.values.size(); ++j) {
      const double r = ser.values[j] - obs_rows_[series][j].dot(coef);
      ss += r * r;
    }
    return ss;
  }

  [[nodiscard]] double log_likelihood_from_ss(std::span<const double> ss, std::span<const double> sigma2) const {
    double ll = 0.0;
    for (std::size_t s = 0; s < data_.series.size(); ++s) {
      const double n = static_cast<double>(data_.series[s].values.size());
      ll += -0.5 * n * std::log(2.0 * std::numbers::pi * sigma2[s]) - ss[s] / (2.0 * sigma2[s]);
    }
    return ll;
  }

  [[nodiscard]] double log_likelihood(const ParticleState& b) const {
    std::vector<double> ss(data_.series.size());
    for (std::size_t s = 0; s < ss.size(); ++s) ss[s] = residual_ss(b, s);
    return log_likelihood_from_ss(ss, b.sigma2);
  }

  /// R_i per component at the state's delay.
  [[nodiscard]] std::vector<double> penalties(const ParticleState& b) const {
    const auto table = table_for(b.tau);
    NodeCache cache;
    cache.evaluate(*table, model_, b.c, b.theta);
    return cache.per_component(*table);
  }

  [[nodiscard]] double total_penalty(const ParticleState& b) const {
    double s = 0.0;
    for (double r : penalties(b)) s += r;
    return s;
  }

  [[nodiscard]] double log_fidelity_from_penalty(double lambda, double total_r) const {
    if (!std::isfinite(total_r)) return kNegInf;
    return 0.5 * rank_ * std::log(lambda) - 0.5 * lambda * total_r;
  }

  [[nodiscard]] double log_fidelity_prior(const ParticleState& b) const {
    return log_fidelity_from_penalty(b.lambda, total_penalty(b));
  }

  [[nodiscard]] double log_theta_prior(std::span<const double> theta) const {
    if (!model_.in_support(theta)) return kNegInf;
    double lp = 0.0;
    for (std::size_t d = 0; d < theta.size(); ++d) {
      const double sd = prior_.theta_sd[d];
      const double z = (theta[d] - prior_.theta_mean[d]) / sd;
      lp += -std::log(sd * std::sqrt(2.0 * std::numbers::pi)) - 0.5 * z * z;
    }
    return lp;
  }

  [[nodiscard]] double log_tau_prior(double tau) const {
    if (!delayed()) return 0.0;
    if (!tau_in_support(tau)) return kNegInf;
    return -std::log(prior_.tau_upper - prior_.tau_lower);
  }

  [[nodiscard]] double log_sigma2_prior(double sigma2) const {
    if (!(sigma2 > 0.0)) return kNegInf;
    const double g0 = prior_.g0;
    const double h0 = prior_.h0;
    return g0 * std::log(h0) - std::lgamma(g0) - (g0 + 1.0) * std::log(sigma2) - h0 / sigma2;
  }

  [[nodiscard]] double log_lambda_prior(double lambda) const {
    if (!(lambda > 0.0)) return kNegInf;
    const double a = prior_.a_lambda;
    const double rate = prior_.b_lambda;
    return a * std::log(rate) - std::lgamma(a) + (a - 1.0) * std::log(lambda) - rate * lambda;
  }

  /// theta, tau, sigma^2 and lambda priors; these are never annealed.
  [[nodiscard]] double log_param_priors(const ParticleState& b) const {
    double lp = log_theta_prior(b.theta) + log_tau_prior(b.tau) + log_lambda_prior(b.lambda);
    for (double s2 : b.sigma2) lp += log_sigma2_prior(s2);
    return lp;
  }

  [[nodiscard]] double log_reference_component(std::span<const double> coef, std::size_t i) const {
    const double sc = prior_.sigma_c;
    const double norm = -std::log(sc * std::sqrt(2.0 * std::numbers::pi));
    double lp = 0.0;
    for (std::size_t l = 0; l < coef.size(); ++l) {
      const double z = (coef[l] - prior_.c_hat[i][l]) / sc;
      lp += norm - 0.5 * z * z;
    }
    return lp;
  }

  [[nodiscard]] double log_reference_c(const ParticleState& b) const {
    double lp = 0.0;
    for (std::size_t i = 0; i < b.c.size(); ++i) lp += log_reference_component(b.c[i], i);
    return lp;
  }

  [[nodiscard]] double log_gamma_r(const ParticleState& b, double alpha) const {
    const double tempered = log_likelihood(b) + log_fidelity_prior(b);
    const double reference = log_reference_c(b);
    return anneal(alpha, tempered) + anneal(1.0 - alpha, reference) + log_param_priors(b);
  }

  /// d log gamma_r / d alpha; the annealing step multiplies it by the alpha increment.
  [[nodiscard]] double log_incremental_weight(const ParticleState& b) const {
    if (!std::isfinite(log_param_priors(b))) return kNegInf;
    return log_likelihood(b) + log_fidelity_prior(b) - log_reference_c(b);
  }

  /// Mean of the (possibly truncated) theta prior.
  [[nodiscard]] std::vector<double> theta_prior_mean() const {
    std::vector<double> m(model_.param_count());
    for (std::size_t d = 0; d < m.size(); ++d) {
      const double mu = prior_.theta_mean[d];
      const double sd = prior_.theta_sd[d];
      if (model_.param_support[d] == Support::positive) {
        const double a = -mu / sd;
        const double pdf = std::exp(-0.5 * a * a) / std::sqrt(2.0 * std::numbers::pi);
        m[d] = mu + sd * pdf / (1.0 - normal_cdf(a));
      } else {
        m[d] = mu;
      }
    }
    return m;
  }

  /// Independent draw from the reference: priors for theta, tau, sigma^2 and
  /// lambda, N(c_hat, sigma_c^2 I) for the coefficients.
  [[nodiscard]] ParticleState sample_reference(Rng& rng) const {
    ParticleState b;
    b.theta.resize(model_.param_count());
    for (std::size_t d = 0; d < b.theta.size(); ++d) {
      const double mu = prior_.theta_mean[d];
      const double sd = prior_.theta_sd[d];
      b.theta[d] = model_.param_support[d] == Support::positive ? truncated_normal_above(rng, mu, sd, 0.0) : normal(rng, mu, sd);
    }
    if (delayed()) {
      const double hi = std::min(prior_.tau_upper, data_.tmax - data_.t1);
      const double lo = std::max(prior_.tau_lower, 0.0);
      do {
        b.tau = lo + (hi - lo) * uniform01(rng);
      } while (!tau_in_support(b.tau));
    }
    b.c.resize(model_.dim());
    for (std::size_t i = 0; i < model_.dim(); ++i) {
      b.c[i].resize(bases_[i].size());
      for (std::size_t l = 0; l < b.c[i].size(); ++l) b.c[i][l] = normal(rng, prior_.c_hat[i][l], prior_.sigma_c);
    }
    b.sigma2.resize(data_.series.size());
    for (double& s2 : b.sigma2) s2 = inverse_gamma(rng, prior_.g0, prior_.h0);
    b.lambda = gamma_rate(rng, prior_.a_lambda, prior_.b_lambda);
    return b;
  }

 private:
  DeModel model_;
  std::vector<SplineBasis> bases_;
  ObservationSet data_;
  PriorSpec prior_;
  int quad_nodes_;
  double rank_ = 0.0;
  std::vector<std::vector<SparseRow>> obs_rows_;
  std::vector<std::vector<std::vector<ObsDependency>>> obs_deps_;
  std::shared_ptr<const CollocationTable> ode_table_;
};

/// Reference centers c_hat. Observed components get an ordinary least-squares
/// fit; unobserved ones minimise the fidelity penalty with theta at its prior
/// mean and tau at the middle of its prior range (coordinate descent with a
/// finite-difference parabolic step). Falls back to zeros with a warning.
inline std::vector<std::vector<double>> build_reference(const DeModel& model, std::span<const SplineBasis> bases,
                                                        const ObservationSet& data, PriorSpec prior, int quad_nodes = 3,
                                                        std::ostream* warnings = &std::cerr) {
  std::vector<std::vector<double>> c_hat(model.dim());
  std::vector<bool> observed(model.dim(), false);
  for (const auto& ser : data.series) {
    if (ser.values.empty()) throw std::invalid_argument("empty observation series");
    c_hat[ser.component] = ls_fit(bases[ser.component].knots(), ser.times, ser.values);
    observed[ser.component] = true;
  }
  bool any_hidden = false;
  for (std::size_t i = 0; i < model.dim(); ++i) {
    if (!observed[i]) {
      c_hat[i].assign(bases[i].size(), 0.0);
      any_hidden = true;
    }
  }
  if (!any_hidden) return c_hat;

  prior.c_hat = c_hat;
  const SplinePosterior helper(model, std::vector<SplineBasis>(bases.begin(), bases.end()), data, prior, quad_nodes);
  ParticleState b;
  b.theta = helper.theta_prior_mean();
  b.tau = model.has_delay ? 0.5 * (prior.tau_lower + prior.tau_upper) : 0.0;
  b.c = c_hat;
  auto objective = [&] { return helper.total_penalty(b); };
  double best = objective();
  if (!std::isfinite(best)) {
    if (warnings != nullptr) *warnings << "warning: reference fit for unobserved components failed, using zeros\n";
    return c_hat;
  }
  for (int pass = 0; pass < 50; ++pass) {
    const double start = best;
    for (std::size_t i = 0; i < model.dim(); ++i) {
      if (observed[i]) continue;
      for (std::size_t l = 0; l < b.c[i].size(); ++l) {
        const double c0 = b.c[i][l];
        const double h = 1e-3 * std::max(1.0, std::abs(c0));
        b.c[i][l] = c0 + h;
        const double fp = objective();
        b.c[i][l] = c0 - h;
        const double fm = objective();
        const double curv = (fp - 2.0 * best + fm) / (h * h);
        const double grad = (fp - fm) / (2.0 * h);
        double step = curv > 0.0 ? -grad / curv : (fp < fm ? h : -h);
        // Backtrack until the objective decreases.
        b.c[i][l] = c0;
        for (int k = 0; k < 30; ++k) {
          b.c[i][l] = c0 + step;
          const double f = objective();
          if (std::isfinite(f) && f < best) {
            best = f;
            break;
          }
          b.c[i][l] = c0;
          step *= 0.5;
        }
      }
    }
    if (start - best <= 1e-10 * (1.0 + std::abs(best))) break;
  }
  return b.c;
}

}  // namespace smcde
