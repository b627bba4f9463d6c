#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "fixtures.hpp"
#include "smcde/io.hpp"
#include "stat_helpers.hpp"

using namespace smcde;
using namespace smcde::testing;

namespace {

std::string temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "smcde_tests";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

/// Type-7 sample quantile (linear interpolation of order statistics).
double type7(std::vector<double> x, double p) {
  std::sort(x.begin(), x.end());
  const double h = (static_cast<double>(x.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, x.size() - 1);
  return x[lo] + (h - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

}  // namespace

TEST(WeightedQuantile, EqualWeightsMatchTypeSeven) {
  Rng rng = make_stream(81, 0, 0);
  for (std::size_t n : {2u, 3u, 10u, 101u}) {
    std::vector<double> x(n);
    for (double& v : x) v = normal(rng, 0.0, 1.0);
    const auto w = uniform_weights(n);
    for (double p : {0.0, 0.025, 0.3, 0.5, 0.975, 1.0}) EXPECT_NEAR(weighted_quantile(x, w, p), type7(x, p), 1e-12) << n << " " << p;
  }
}

TEST(WeightedQuantile, MonotoneBoundedAndSkipsZeroWeights) {
  const std::vector<double> x = {3.0, 1.0, 2.0, 5.0};
  const std::vector<double> w = {0.1, 0.4, 0.0, 0.5};
  double prev = -INFINITY;
  for (double p = 0.0; p <= 1.0; p += 0.01) {
    const double q = weighted_quantile(x, w, p);
    EXPECT_GE(q, prev);
    EXPECT_GE(q, 1.0);
    EXPECT_LE(q, 5.0);
    prev = q;
  }
  EXPECT_EQ(weighted_quantile(x, w, 0.0), 1.0);
  EXPECT_EQ(weighted_quantile(x, w, 1.0), 5.0);
  EXPECT_THROW(weighted_quantile(x, std::vector<double>(4, 0.0), 0.5), std::invalid_argument);
}

TEST(Summaries, SingleParticleAndTwoPointCases) {
  const std::vector<std::string> names = {"a"};
  const std::vector<std::vector<double>> one = {{4.2}};
  const auto r1 = summarize_table(names, one, std::vector<double>{1.0});
  EXPECT_EQ(r1.parameters[0].mean, 4.2);
  EXPECT_EQ(r1.parameters[0].lower, 4.2);
  EXPECT_EQ(r1.parameters[0].upper, 4.2);
  const std::vector<std::vector<double>> two = {{0.0, 2.0}};
  const auto r2 = summarize_table(names, two, std::vector<double>{0.5, 0.5});
  EXPECT_DOUBLE_EQ(r2.parameters[0].mean, 1.0);
  EXPECT_LE(r2.parameters[0].lower, r2.parameters[0].mean);
  EXPECT_GE(r2.parameters[0].upper, r2.parameters[0].mean);
}

TEST(Summaries, WeightedCorrelation) {
  const std::vector<double> x = {1.0, 2.0, 3.0, 4.0};
  const std::vector<double> y = {2.0, 4.0, 6.0, 8.0};
  const std::vector<double> w = {0.1, 0.2, 0.3, 0.4};
  EXPECT_NEAR(weighted_correlation(x, y, w), 1.0, 1e-12);
  const std::vector<double> z = {-1.0, -2.0, -3.0, -4.0};
  EXPECT_NEAR(weighted_correlation(x, z, w), -1.0, 1e-12);
}

TEST(Summaries, BandContainsMeanCurve) {
  const auto post = decay_posterior(false);
  Rng rng = make_stream(82, 0, 0);
  std::vector<ParticleState> ps;
  for (int k = 0; k < 50; ++k) {
    ParticleState b = post->sample_reference(rng);
    for (auto& v : b.c[0]) v = post->prior().c_hat[0][&v - b.c[0].data()] + normal(rng, 0.0, 0.2);
    ps.push_back(b);
  }
  const auto rep = summarize_spline(*post, ps, uniform_weights(ps.size()), 41);
  ASSERT_EQ(rep.trajectories.size(), 1u);
  const auto& band = rep.trajectories[0];
  for (std::size_t j = 0; j < band.times.size(); ++j) {
    EXPECT_LE(band.lower[j], band.mean[j]);
    EXPECT_GE(band.upper[j], band.mean[j]);
  }
  for (const auto& p : rep.parameters) EXPECT_LE(p.lower, p.upper);
}

TEST(Rmse, ZeroAndConstantOffset) {
  const SplineBasis basis(build_knots(0.0, 10.0, 5, 3));
  std::vector<double> c(basis.size());
  for (std::size_t l = 0; l < c.size(); ++l) c[l] = std::sin(static_cast<double>(l));
  const auto times = equally_spaced(0.0, 10.0, 37);
  std::vector<double> truth;
  for (double t : times) truth.push_back(basis.value(c, t));
  EXPECT_NEAR(rmse(basis, c, times, truth), 0.0, 1e-14);
  for (double& v : truth) v += 0.3;
  EXPECT_NEAR(rmse(basis, c, times, truth), 0.3, 1e-12);
  EXPECT_THROW(rmse(basis, c, times, std::vector<double>{1.0}), std::invalid_argument);
}

TEST(Simulate, NoiselessObservationsEqualTruth) {
  RunConfig cfg = defaults_for("monk");
  cfg.sigma = {0.0, 0.0};
  const auto sim = simulate_from_config(cfg);
  ASSERT_EQ(sim.observed.series.size(), 2u);
  const auto times = equally_spaced(0.0, 500.0, 101);
  const auto states = sample_at(sim.truth, times);
  for (std::size_t s = 0; s < 2; ++s) {
    ASSERT_EQ(sim.observed.series[s].values.size(), 101u);
    for (std::size_t j = 0; j < 101; ++j) EXPECT_EQ(sim.observed.series[s].values[j], states[j * 2 + s]);
  }
}

TEST(Simulate, PublishedSetupsAndSeedDeterminism) {
  const RunConfig basic = defaults_for("ode-basic");
  const auto a = simulate_from_config(basic);
  const auto b = simulate_from_config(basic);
  ASSERT_EQ(a.observed.series.size(), 2u);
  EXPECT_EQ(a.observed.series[0].times.size(), 121u);
  EXPECT_EQ(a.observed.series[0].times.back(), 60.0);
  EXPECT_EQ(a.observed.series[1].values, b.observed.series[1].values);
  RunConfig other = basic;
  other.data_seed = 2;
  EXPECT_NE(simulate_from_config(other).observed.series[0].values, a.observed.series[0].values);

  // Noise level: residual sd around the truth is close to sigma.
  const auto states = sample_at(a.truth, a.observed.series[1].times);
  double ss = 0.0;
  for (std::size_t j = 0; j < 121; ++j) ss += std::pow(a.observed.series[1].values[j] - states[j * 2 + 1], 2);
  EXPECT_NEAR(std::sqrt(ss / 121.0), 3.0, 0.6);

  const RunConfig h = defaults_for("hutchinson-log");
  const auto hs = simulate_from_config(h);
  for (double v : hs.observed.series[0].values) EXPECT_GT(v, 0.0);
}

TEST(Config, IniOverridesAndErrors) {
  const std::string path = temp_path("cfg.ini");
  write_text(path,
             "; comment\n[model]\nname = monk\n[smc]\nparticles = 42\nrcess = 0.95\n[priors]\ntheta_sd = 1, 2, 3\n"
             "[kernel]\nadapt = true\ntempering = exact\n");
  RunConfig cfg = defaults_for("ode-basic");
  apply_ini(path, cfg);
  EXPECT_EQ(cfg.model, "monk");
  EXPECT_EQ(cfg.n_interior, 24);
  EXPECT_EQ(cfg.particles, 42u);
  EXPECT_DOUBLE_EQ(cfg.phi, 0.95);
  EXPECT_EQ(cfg.theta_sd, (std::vector<double>{1.0, 2.0, 3.0}));
  EXPECT_TRUE(cfg.adapt);
  EXPECT_EQ(cfg.tempering, TemperingMode::exact);
  EXPECT_NO_THROW(validate(cfg));

  write_text(path, "[smc]\nparticle = 10\n");
  EXPECT_THROW(apply_ini(path, cfg), ConfigError);
  write_text(path, "[smc]\nparticles = ten\n");
  EXPECT_THROW(apply_ini(path, cfg), ConfigError);
  write_text(path, "[model]\nname = nope\n");
  EXPECT_THROW(apply_ini(path, cfg), UnknownModelError);

  RunConfig bad = defaults_for("ode-basic");
  bad.quad_nodes = 4;
  EXPECT_THROW(validate(bad), ConfigError);
  bad = defaults_for("ode-basic");
  bad.phi = 1.0;
  EXPECT_THROW(validate(bad), ConfigError);
  bad = defaults_for("monk");
  bad.theta_mean = {0.0};
  EXPECT_THROW(validate(bad), ConfigError);
}

TEST(Config, ShippedConfigsValidate) {
  for (const char* name : {"ode_basic", "ode_bimodal", "monk", "hutchinson", "hutchinson_coverage", "blowfly"}) {
    RunConfig cfg;
    apply_ini(std::string(SMCDE_SOURCE_DIR) + "/configs/" + name + ".ini", cfg);
    EXPECT_NO_THROW(validate(cfg)) << name;
  }
}

TEST(Csv, ObservationRoundTripIsExact) {
  const DeModel m = lookup("ode-basic");
  const auto sim = simulate_from_config(defaults_for("ode-basic"));
  const std::string path = temp_path("data.csv");
  write_long_csv(path, m, sim.observed);
  const ObservationSet back = read_observations(path, m);
  ASSERT_EQ(back.series.size(), 2u);
  for (std::size_t s = 0; s < 2; ++s) {
    EXPECT_EQ(back.series[s].component, sim.observed.series[s].component);
    EXPECT_EQ(back.series[s].times, sim.observed.series[s].times);
    EXPECT_EQ(back.series[s].values, sim.observed.series[s].values);
  }
  EXPECT_EQ(back.t1, 0.0);
  EXPECT_EQ(back.tmax, 60.0);
}

TEST(Csv, ParticleRoundTripIsExact) {
  const auto post = decay_posterior(true);
  Rng rng = make_stream(83, 0, 0);
  std::vector<ParticleState> ps;
  std::vector<double> w;
  for (int k = 0; k < 7; ++k) {
    ps.push_back(post->sample_reference(rng));
    w.push_back(uniform01(rng));
  }
  const std::string path = temp_path("particles.csv");
  write_particles_csv(path, *post, ps, w);
  std::vector<ParticleState> back;
  std::vector<double> wb;
  read_particles_csv(path, *post, back, wb);
  ASSERT_EQ(back.size(), ps.size());
  EXPECT_EQ(wb, w);
  for (std::size_t k = 0; k < ps.size(); ++k) {
    EXPECT_EQ(back[k].theta, ps[k].theta);
    EXPECT_EQ(back[k].tau, ps[k].tau);
    EXPECT_EQ(back[k].sigma2, ps[k].sigma2);
    EXPECT_EQ(back[k].lambda, ps[k].lambda);
    EXPECT_EQ(back[k].c, ps[k].c);
  }
  const auto other = decay_posterior(false);
  EXPECT_THROW(read_particles_csv(path, *other, back, wb), FormatError);
}

TEST(Csv, DayCountIngestAndMalformedInput) {
  const DeModel m = lookup("hutchinson-log");
  const std::string path = temp_path("counts.csv");
  write_text(path, "# source note\nday,count\n0,948\n2,942\n4,911\n");
  const ObservationSet d = read_observations(path, m);
  ASSERT_EQ(d.series.size(), 1u);
  EXPECT_EQ(d.series[0].values, (std::vector<double>{948.0, 942.0, 911.0}));
  EXPECT_EQ(d.tmax, 4.0);
  write_text(path, "day,count\n0,948\n0,942\n");
  EXPECT_THROW(read_observations(path, m), FormatError);
  write_text(path, "time,component,value\n0,W,abc\n");
  EXPECT_THROW(read_observations(path, m), FormatError);
  write_text(path, "time,component,value\n0,Q,1\n");
  EXPECT_THROW(read_observations(path, m), FormatError);
  EXPECT_THROW(read_observations(temp_path("missing.csv"), m), FormatError);
}

TEST(Coverage, DeterministicUnderFixedSeed) {
  RunConfig cfg = defaults_for("ode-basic");
  cfg.n_obs = 31;
  cfg.particles = 40;
  cfg.phi = 0.5;
  const auto a = coverage_study(cfg, 2, 11, 1);
  const auto b = coverage_study(cfg, 2, 11, 2);
  ASSERT_EQ(a.entries.size(), 4u);
  for (std::size_t p = 0; p < a.entries.size(); ++p) {
    EXPECT_EQ(a.entries[p].name, b.entries[p].name);
    EXPECT_EQ(a.entries[p].coverage, b.entries[p].coverage);
    EXPECT_EQ(a.entries[p].mean_lower, b.entries[p].mean_lower);
    EXPECT_EQ(a.entries[p].mean_upper, b.entries[p].mean_upper);
  }
  EXPECT_EQ(a.iterations, b.iterations);
}
