#pragma once

// Small posteriors shared by the posterior, kernel and engine tests.

#include <cmath>
#include <memory>
#include <vector>

#include "smcde/experiments.hpp"

namespace smcde::testing {

/// One-component linear decay dx/dt = -k x, observed with Gaussian noise.
inline DeModel linear_decay() {
  DeModel m;
  m.name = "linear-decay";
  m.component_names = {"x"};
  m.param_names = {"k"};
  m.param_support = {Support::real};
  m.observed = {0};
  m.noise = {NoiseKind::gaussian};
  m.rhs = [](std::span<const double> x, std::span<const double>, std::span<const double> th, std::span<double> out) {
    out[0] = -th[0] * x[0];
  };
  return m;
}

/// One-component delayed decay dx/dt = -k x(t - tau).
inline DeModel delayed_decay() {
  DeModel m = linear_decay();
  m.name = "delayed-decay";
  m.has_delay = true;
  m.rhs = [](std::span<const double>, std::span<const double> lag, std::span<const double> th, std::span<double> out) {
    out[0] = -th[0] * lag[0];
  };
  return m;
}

inline ObservationSet decay_data(double k, double tau, double tmax, std::size_t n, double sigma, std::uint64_t seed,
                                 const DeModel& model) {
  const auto times = equally_spaced(0.0, tmax, n);
  const std::vector<double> th = {k};
  const std::vector<double> x0 = {5.0};
  const std::vector<double> sd = {sigma};
  return simulate_observations(model, th, tau, x0, times, sd, seed).observed;
}

inline PriorSpec small_prior(std::size_t params, double tau_upper = 0.0) {
  PriorSpec p;
  p.theta_mean.assign(params, 0.0);
  p.theta_sd.assign(params, 5.0);
  p.tau_lower = 0.0;
  p.tau_upper = tau_upper;
  p.sigma_c = 100.0;
  return p;
}

/// L = n_interior + 4 coefficients on [0, tmax].
inline std::unique_ptr<SplinePosterior> decay_posterior(bool delayed, int n_interior = 2, std::size_t n_obs = 15, double sigma = 0.3,
                                                        double sigma_c = 100.0) {
  const DeModel m = delayed ? delayed_decay() : linear_decay();
  const double tmax = 6.0;
  const ObservationSet data = decay_data(0.5, delayed ? 1.0 : 0.0, tmax, n_obs, sigma, 3, m);
  std::vector<SplineBasis> bases = {SplineBasis(build_knots(0.0, tmax, n_interior, 3))};
  PriorSpec prior = small_prior(1, delayed ? 3.0 : 0.0);
  prior.sigma_c = sigma_c;
  prior.c_hat = build_reference(m, bases, data, prior, 3);
  return std::make_unique<SplinePosterior>(m, std::move(bases), data, std::move(prior), 3);
}

inline std::unique_ptr<SplinePosterior> bimodal_posterior(std::size_t n_obs = 121, std::uint64_t seed = 1) {
  RunConfig cfg = defaults_for("ode-bimodal");
  cfg.n_obs = n_obs;
  cfg.data_seed = seed;
  const SimulatedData sim = simulate_from_config(cfg);
  return make_posterior(lookup("ode-bimodal"), sim.observed, cfg);
}

}  // namespace smcde::testing
