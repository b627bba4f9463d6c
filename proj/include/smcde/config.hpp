#pragma once

/// \file
/// Run configuration: per-model defaults overridden by an INI file with the
/// sections [model], [data], [priors], [spline], [smc], [kernel], [baseline].

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "smcde/kernels.hpp"
#include "smcde/models.hpp"
#include "smcde/solver.hpp"

namespace smcde {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::string model = "ode-basic";

  // [data]: span, sampling and the generating parameters used by `simulate`
  double t1 = 0.0;
  double tmax = 60.0;
  std::size_t n_obs = 121;
  std::vector<double> sigma = {1.0, 3.0};
  std::vector<double> theta_true = {2.0, 1.0};
  double tau_true = 0.0;
  std::vector<double> x0_true = {7.0, -10.0};
  std::uint64_t data_seed = 1;
  double solver_step = 0.0;  // 0: span / 10000

  // [priors]
  std::vector<double> theta_mean = {5.0, 5.0};
  std::vector<double> theta_sd = {5.0, 5.0};
  double tau_lower = 0.0;
  double tau_upper = 50.0;
  double g0 = 1.0;
  double h0 = 1.0;
  double a_lambda = 1.0;
  double b_lambda = 1.0;
  double sigma_c = 100.0;

  // [spline]
  int n_interior = 14;
  int degree = 3;
  int quad_nodes = 3;

  // [smc]
  std::size_t particles = 500;
  double phi = 0.9;
  double resample = 0.5;
  std::uint64_t seed = 1;
  unsigned workers = 0;

  // [kernel]; zero or empty means the built-in default
  double step_tau = 0.0;
  std::vector<double> step_theta;
  double step_c = 0.0;
  int sweeps = 1;
  bool adapt = false;
  TemperingMode tempering = TemperingMode::paper;

  // [baseline]
  SolverMethod solver = SolverMethod::rk4;
  std::size_t iters = 400000;
  std::size_t burn_in = 0;
  std::size_t thin = 100;
  double x0_sd = 5.0;
};

/// Defaults reproducing each built-in model's published setup.
inline RunConfig defaults_for(const std::string& model) {
  RunConfig c;
  c.model = model;
  if (model == "ode-basic" || model == "ode-bimodal") return c;
  if (model == "monk") {
    c.t1 = 0.0;
    c.tmax = 500.0;
    c.n_obs = 101;
    c.sigma = {1.0, 5.0};
    c.theta_true = {0.03, 0.03, 100.0};
    c.tau_true = 25.0;
    c.x0_true = {7.0, -10.0};
    c.theta_mean = {0.0, 0.0, 0.0};
    c.theta_sd = {5.0, 5.0, 200.0};
    c.n_interior = 24;
    c.particles = 300;
    return c;
  }
  if (model == "hutchinson-log") {
    c.t1 = 0.0;
    c.tmax = 100.0;
    c.n_obs = 201;
    c.sigma = {0.4};
    c.theta_true = {0.8, 2.0};
    c.tau_true = 3.0;
    c.x0_true = {std::log(3500.0)};
    c.theta_mean = {0.0, 0.0};
    c.theta_sd = {5.0, 5.0};
    c.n_interior = 49;
    return c;
  }
  throw UnknownModelError("unknown model '" + model + "'");
}

namespace detail {

inline std::vector<double> parse_list(const std::string& key, const std::string& text) {
  std::string s = text;
  for (char& ch : s) {
    if (ch == ',' || ch == ';') ch = ' ';
  }
  std::istringstream in(s);
  std::vector<double> out;
  std::string tok;
  while (in >> tok) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
      v = std::stod(tok, &pos);
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "': not a number list: '" + text + "'");
    }
    if (pos != tok.size()) throw ConfigError("key '" + key + "': not a number list: '" + text + "'");
    out.push_back(v);
  }
  return out;
}

template <class T>
T parse_scalar(const std::string& key, const std::string& text) {
  std::istringstream in(text);
  T v{};
  if constexpr (std::is_same_v<T, bool>) {
    if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
    if (text == "false" || text == "0" || text == "no" || text == "off") return false;
    throw ConfigError("key '" + key + "': expected a boolean, got '" + text + "'");
  } else {
    in >> v;
    std::string rest;
    if (in.fail() || (in >> rest)) throw ConfigError("key '" + key + "': cannot parse '" + text + "'");
    return v;
  }
}

}  // namespace detail

inline SolverMethod parse_solver(const std::string& s) {
  if (s == "rk4") return SolverMethod::rk4;
  if (s == "euler") return SolverMethod::euler;
  throw ConfigError("solver must be rk4 or euler, got '" + s + "'");
}

inline TemperingMode parse_tempering(const std::string& s) {
  if (s == "paper") return TemperingMode::paper;
  if (s == "exact") return TemperingMode::exact;
  throw ConfigError("tempering must be paper or exact, got '" + s + "'");
}

/// Applies the keys of an INI file on top of `cfg`. Unknown sections or keys are errors.
inline void apply_ini(const std::string& path, RunConfig& cfg) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(path, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(e.what());
  }
  // The model name decides the defaults, so it is applied first.
  if (auto m = tree.get_optional<std::string>("model.name")) {
    cfg = defaults_for(*m);
  }
  using detail::parse_list;
  using detail::parse_scalar;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) throw ConfigError("key '" + section + "' outside any section");
    for (const auto& [key, node] : body) {
      const std::string full = section + "." + key;
      const std::string v = node.data();
      if (full == "model.name") continue;
      else if (full == "data.t1") cfg.t1 = parse_scalar<double>(full, v);
      else if (full == "data.tmax") cfg.tmax = parse_scalar<double>(full, v);
      else if (full == "data.n_obs") cfg.n_obs = parse_scalar<std::size_t>(full, v);
      else if (full == "data.sigma") cfg.sigma = parse_list(full, v);
      else if (full == "data.theta") cfg.theta_true = parse_list(full, v);
      else if (full == "data.tau") cfg.tau_true = parse_scalar<double>(full, v);
      else if (full == "data.x0") cfg.x0_true = parse_list(full, v);
      else if (full == "data.seed") cfg.data_seed = parse_scalar<std::uint64_t>(full, v);
      else if (full == "data.solver_step") cfg.solver_step = parse_scalar<double>(full, v);
      else if (full == "priors.theta_mean") cfg.theta_mean = parse_list(full, v);
      else if (full == "priors.theta_sd") cfg.theta_sd = parse_list(full, v);
      else if (full == "priors.tau_lower") cfg.tau_lower = parse_scalar<double>(full, v);
      else if (full == "priors.tau_upper") cfg.tau_upper = parse_scalar<double>(full, v);
      else if (full == "priors.g0") cfg.g0 = parse_scalar<double>(full, v);
      else if (full == "priors.h0") cfg.h0 = parse_scalar<double>(full, v);
      else if (full == "priors.a_lambda") cfg.a_lambda = parse_scalar<double>(full, v);
      else if (full == "priors.b_lambda") cfg.b_lambda = parse_scalar<double>(full, v);
      else if (full == "priors.sigma_c") cfg.sigma_c = parse_scalar<double>(full, v);
      else if (full == "spline.n_interior") cfg.n_interior = parse_scalar<int>(full, v);
      else if (full == "spline.degree") cfg.degree = parse_scalar<int>(full, v);
      else if (full == "spline.quad_nodes") cfg.quad_nodes = parse_scalar<int>(full, v);
      else if (full == "smc.particles") cfg.particles = parse_scalar<std::size_t>(full, v);
      else if (full == "smc.rcess") cfg.phi = parse_scalar<double>(full, v);
      else if (full == "smc.resample") cfg.resample = parse_scalar<double>(full, v);
      else if (full == "smc.seed") cfg.seed = parse_scalar<std::uint64_t>(full, v);
      else if (full == "smc.workers") cfg.workers = parse_scalar<unsigned>(full, v);
      else if (full == "kernel.step_tau") cfg.step_tau = parse_scalar<double>(full, v);
      else if (full == "kernel.step_theta") cfg.step_theta = parse_list(full, v);
      else if (full == "kernel.step_c") cfg.step_c = parse_scalar<double>(full, v);
      else if (full == "kernel.sweeps") cfg.sweeps = parse_scalar<int>(full, v);
      else if (full == "kernel.adapt") cfg.adapt = parse_scalar<bool>(full, v);
      else if (full == "kernel.tempering") cfg.tempering = parse_tempering(v);
      else if (full == "baseline.solver") cfg.solver = parse_solver(v);
      else if (full == "baseline.iters") cfg.iters = parse_scalar<std::size_t>(full, v);
      else if (full == "baseline.burn_in") cfg.burn_in = parse_scalar<std::size_t>(full, v);
      else if (full == "baseline.thin") cfg.thin = parse_scalar<std::size_t>(full, v);
      else if (full == "baseline.x0_sd") cfg.x0_sd = parse_scalar<double>(full, v);
      else throw ConfigError("unknown config key '" + full + "'");
    }
  }
}

/// Cross-field checks against the model.
inline void validate(const RunConfig& cfg) {
  const DeModel m = lookup(cfg.model);
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  need(cfg.tmax > cfg.t1, "data.tmax must exceed data.t1");
  need(cfg.n_obs >= 2, "data.n_obs must be at least 2");
  need(cfg.sigma.size() == m.observed.size(), "data.sigma needs one entry per observed component");
  need(cfg.theta_true.size() == m.param_count(), "data.theta has the wrong length");
  need(cfg.x0_true.size() == m.dim(), "data.x0 has the wrong length");
  need(cfg.theta_mean.size() == m.param_count(), "priors.theta_mean has the wrong length");
  need(cfg.theta_sd.size() == m.param_count(), "priors.theta_sd has the wrong length");
  for (double s : cfg.theta_sd) need(s > 0.0, "priors.theta_sd must be positive");
  need(cfg.g0 > 0.0 && cfg.h0 > 0.0, "priors.g0 and priors.h0 must be positive");
  need(cfg.a_lambda > 0.0 && cfg.b_lambda > 0.0, "lambda prior parameters must be positive");
  need(cfg.sigma_c > 0.0, "priors.sigma_c must be positive");
  if (m.has_delay) need(cfg.tau_upper > cfg.tau_lower && cfg.tau_lower >= 0.0, "delay prior needs 0 <= tau_lower < tau_upper");
  need(cfg.n_interior >= 0, "spline.n_interior must be non-negative");
  need(cfg.degree >= 1 && cfg.degree <= 5, "spline.degree must be in [1, 5]");
  need(cfg.quad_nodes >= 3 && cfg.quad_nodes % 2 == 1, "spline.quad_nodes must be odd and >= 3");
  need(cfg.particles >= 2, "smc.particles must be at least 2");
  need(cfg.phi > 0.0 && cfg.phi < 1.0, "smc.rcess must lie in (0, 1)");
  need(cfg.resample > 0.0 && cfg.resample < 1.0, "smc.resample must lie in (0, 1)");
  need(cfg.sweeps >= 1, "kernel.sweeps must be >= 1");
  need(cfg.step_theta.empty() || cfg.step_theta.size() == m.param_count(), "kernel.step_theta has the wrong length");
  need(cfg.step_tau >= 0.0 && cfg.step_c >= 0.0, "kernel step sizes must be non-negative");
  need(cfg.thin >= 1, "baseline.thin must be >= 1");
  need(cfg.x0_sd > 0.0, "baseline.x0_sd must be positive");
}

}  // namespace smcde
