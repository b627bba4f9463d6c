#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "fixtures.hpp"
#include "smcde/baselines.hpp"

using namespace smcde;
using namespace smcde::testing;

namespace {

SolverPriorSpec decay_solver_prior(bool delayed) {
  SolverPriorSpec s;
  s.theta_mean = {0.0};
  s.theta_sd = {5.0};
  s.tau_lower = 0.0;
  s.tau_upper = delayed ? 3.0 : 0.0;
  s.x0_mean = {5.0};
  s.x0_sd = {2.0};
  s.step = 0.01;
  return s;
}

/// Standard error of a chain mean from 50 batch means.
double batch_se(const std::vector<double>& x) {
  const std::size_t nb = 50;
  const std::size_t len = x.size() / nb;
  std::vector<double> means(nb, 0.0);
  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t k = 0; k < len; ++k) means[b] += x[b * len + k] / static_cast<double>(len);
  }
  double m = 0.0;
  for (double v : means) m += v / nb;
  double var = 0.0;
  for (double v : means) var += (v - m) * (v - m) / (nb - 1.0);
  return std::sqrt(var / nb);
}

}  // namespace

TEST(SolverLikelihood, ZeroResidualOnTheSolversOwnTrajectory) {
  const DeModel m = lookup("ode-basic");
  const std::vector<double> th = {2.0, 1.0};
  const std::vector<double> x0 = {7.0, -10.0};
  const auto times = equally_spaced(0.0, 60.0, 121);
  const std::vector<double> sd = {0.0, 0.0};
  const double step = 60.0 / 10000.0;
  const ObservationSet data = simulate_observations(m, th, 0.0, x0, times, sd, 1, step).observed;
  const auto ss = solver_residual_ss(m, data, th, 0.0, x0, SolverMethod::rk4, step);
  EXPECT_EQ(ss[0], 0.0);
  EXPECT_EQ(ss[1], 0.0);
  const std::vector<double> s2 = {1.0, 1.0};
  EXPECT_NEAR(solver_log_likelihood(m, data, th, 0.0, x0, s2, SolverMethod::rk4, step), -121.0 * std::log(2.0 * std::numbers::pi), 1e-9);
}

TEST(SolverLikelihood, ZeroDelayMatchesTheOde) {
  const ObservationSet data = decay_data(0.5, 0.0, 6.0, 15, 0.3, 4, linear_decay());
  const std::vector<double> th = {0.45};
  const std::vector<double> x0 = {4.8};
  const std::vector<double> s2 = {0.1};
  const double ode = solver_log_likelihood(linear_decay(), data, th, 0.0, x0, s2, SolverMethod::rk4, 0.01);
  const double dde = solver_log_likelihood(delayed_decay(), data, th, 0.0, x0, s2, SolverMethod::rk4, 0.01);
  EXPECT_EQ(ode, dde);
  EXPECT_TRUE(std::isfinite(ode));
}

TEST(SolverLikelihood, FiniteAtPublishedTruths) {
  for (const char* name : {"ode-basic", "ode-bimodal", "monk", "hutchinson-log"}) {
    RunConfig cfg = defaults_for(name);
    const auto sim = simulate_from_config(cfg);
    const ObservationSet data = to_model_scale(sim.observed, lookup(name));
    std::vector<double> s2;
    for (double s : cfg.sigma) s2.push_back(s * s);
    const double ll = solver_log_likelihood(lookup(name), data, cfg.theta_true, cfg.tau_true, cfg.x0_true, s2, SolverMethod::rk4, 0.0 + (cfg.tmax - cfg.t1) / 10000.0);
    EXPECT_TRUE(std::isfinite(ll)) << name;
  }
}

TEST(SolverLikelihood, DivergenceGivesMinusInfinity) {
  DeModel m = linear_decay();
  m.rhs = [](std::span<const double> x, std::span<const double>, std::span<const double>, std::span<double> out) { out[0] = x[0] * x[0]; };
  const ObservationSet data = decay_data(0.5, 0.0, 6.0, 15, 0.3, 4, linear_decay());
  const std::vector<double> th = {0.0};
  const std::vector<double> x0 = {5.0};
  const std::vector<double> s2 = {1.0};
  EXPECT_EQ(solver_log_likelihood(m, data, th, 0.0, x0, s2, SolverMethod::rk4, 0.01), kNegInf);
}

TEST(SolverPosteriorTest, SharedLikelihoodPath) {
  const ObservationSet data = decay_data(0.5, 1.0, 6.0, 15, 0.3, 4, delayed_decay());
  const SolverPosterior post(delayed_decay(), data, decay_solver_prior(true));
  Rng rng = make_stream(71, 0, 0);
  for (int rep = 0; rep < 10; ++rep) {
    const SolverState s = post.sample_prior(rng);
    EXPECT_EQ(post.log_likelihood(s), solver_log_likelihood(post.model(), data, s.theta, s.tau, s.x0, s.sigma2, SolverMethod::rk4, 0.01));
    EXPECT_TRUE(post.tau_in_support(s.tau));
  }
}

TEST(McmcDesolve, PriorOnlyRecoversPriorMoments) {
  ObservationSet empty;
  empty.t1 = 0.0;
  empty.tmax = 6.0;
  const SolverPosterior post(linear_decay(), empty, decay_solver_prior(false));
  SolverKernelConfig kc = default_solver_kernel_config(post);
  kc.step_theta = {12.0};
  kc.step_x0 = {5.0};
  McmcSolverOptions opt;
  opt.iterations = 20000;
  opt.thin = 1;
  opt.seed = 72;
  const McmcTrace tr = mcmc_desolve(post, kc, opt);
  ASSERT_EQ(tr.rows.size(), 20000u);
  ASSERT_EQ(tr.columns, (std::vector<std::string>{"iteration", "k", "x_0"}));
  std::vector<double> k;
  std::vector<double> x0;
  for (const auto& r : tr.rows) {
    k.push_back(r[1]);
    x0.push_back(r[2]);
  }
  auto mean = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m += x / static_cast<double>(v.size());
    return m;
  };
  auto var = [&](const std::vector<double>& v) {
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m) / static_cast<double>(v.size());
    return s;
  };
  EXPECT_LT(std::abs(mean(k) - 0.0), 4.0 * batch_se(k));
  EXPECT_LT(std::abs(mean(x0) - 5.0), 4.0 * batch_se(x0));
  EXPECT_NEAR(var(k), 25.0, 0.1 * 25.0);
  EXPECT_NEAR(var(x0), 4.0, 0.1 * 4.0);
}

TEST(McmcDesolve, RecoversDecayRate) {
  const ObservationSet data = decay_data(0.5, 0.0, 6.0, 40, 0.1, 5, linear_decay());
  const SolverPosterior post(linear_decay(), data, decay_solver_prior(false));
  SolverKernelConfig kc = default_solver_kernel_config(post);
  kc.step_theta = {0.02};
  kc.step_x0 = {0.05};
  McmcSolverOptions opt;
  opt.iterations = 6000;
  opt.burn_in = 2000;
  opt.thin = 1;
  opt.seed = 73;
  const McmcTrace tr = mcmc_desolve(post, kc, opt);
  double m = 0.0;
  for (const auto& r : tr.rows) m += r[1] / static_cast<double>(tr.rows.size());
  EXPECT_NEAR(m, 0.5, 0.03);
  EXPECT_GT(tr.stats.theta_rate(), 0.1);
}

TEST(SmcDesolve, ScheduleReachesOneAndConcentrates) {
  const ObservationSet data = decay_data(0.5, 1.0, 6.0, 25, 0.1, 6, delayed_decay());
  const SolverPosterior post(delayed_decay(), data, decay_solver_prior(true));
  SolverKernelConfig kc = default_solver_kernel_config(post);
  kc.adapt_steps = true;
  SmcConfig cfg;
  cfg.particles = 100;
  cfg.seed = 74;
  cfg.workers = 1;
  const auto res = smc_desolve(post, kc, cfg);
  double prev = 0.0;
  for (const auto& e : res.schedule) {
    EXPECT_GT(e.alpha, prev);
    prev = e.alpha;
  }
  EXPECT_EQ(prev, 1.0);
  double m = 0.0;
  for (std::size_t k = 0; k < res.particles.size(); ++k) m += res.weights[k] * res.particles[k].theta[0];
  EXPECT_NEAR(m, 0.5, 0.1);
}

TEST(McmcSpline, EqualsRepeatedKernelSweepsAtAlphaOne) {
  const auto post = decay_posterior(true);
  const KernelConfig kc = default_kernel_config(*post);
  McmcSplineOptions opt;
  opt.iterations = 25;
  opt.thin = 5;
  opt.seed = 75;
  ParticleState fin;
  const McmcTrace tr = mcmc_spline(*post, kc, opt, &fin);
  ASSERT_EQ(tr.rows.size(), 5u);

  Rng rng = make_stream(75, 0x3c3c0001, 0);
  const SplineKernel kernel(*post, kc);
  ParticleState b = mcmc_spline_start(*post, rng);
  for (int it = 0; it < 25; ++it) kernel.sweep(b, 1.0, rng);
  EXPECT_EQ(b.theta, fin.theta);
  EXPECT_EQ(b.tau, fin.tau);
  EXPECT_EQ(b.c, fin.c);
  EXPECT_EQ(tr.rows.back(), spline_trace_row(*post, b, 25));
}

TEST(McmcSpline, TuningKeepsAcceptanceModerate) {
  const auto post = decay_posterior(false);
  McmcSplineOptions opt;
  opt.iterations = 6000;
  opt.burn_in = 3000;
  opt.thin = 10;
  opt.seed = 76;
  const McmcTrace tr = mcmc_spline(*post, default_kernel_config(*post), opt);
  EXPECT_EQ(tr.rows.size(), 300u);
  EXPECT_GT(tr.stats.theta_rate(), 0.1);
  EXPECT_LT(tr.stats.theta_rate(), 0.6);
  EXPECT_GT(tr.stats.c_rate(), 0.1);
}
