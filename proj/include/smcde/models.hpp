#pragma once

/// \file
/// Differential-equation systems dx/dt = g(x(t), x(t - tau) | theta) and the
/// built-in registry used by the command line tools.

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace smcde {

class UnknownModelError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class NoiseKind { gaussian, lognormal };

enum class Support { real, positive };

using RhsFunction =
    std::function<void(std::span<const double> x, std::span<const double> x_lag, std::span<const double> theta, std::span<double> dxdt)>;

struct DeModel {
  std::string name;
  std::vector<std::string> component_names;
  std::vector<std::string> param_names;
  std::vector<Support> param_support;
  /// Observed component indices (0-based), with one noise kind each.
  std::vector<std::size_t> observed;
  std::vector<NoiseKind> noise;
  bool has_delay = false;
  RhsFunction rhs;

  [[nodiscard]] std::size_t dim() const { return component_names.size(); }
  [[nodiscard]] std::size_t param_count() const { return param_names.size(); }

  [[nodiscard]] bool in_support(std::span<const double> theta) const {
    for (std::size_t d = 0; d < theta.size(); ++d) {
      if (!std::isfinite(theta[d])) return false;
      if (param_support[d] == Support::positive && !(theta[d] > 0.0)) return false;
    }
    return true;
  }
};

/// Evaluates g. Poles and overflow surface as non-finite entries.
inline std::vector<double> rhs_eval(const DeModel& model, std::span<const double> x, std::span<const double> x_lag,
                                    std::span<const double> theta) {
  std::vector<double> out(model.dim());
  model.rhs(x, x_lag, theta, out);
  return out;
}

namespace models {

inline DeModel ode_basic() {
  DeModel m;
  m.name = "ode-basic";
  m.component_names = {"x1", "x2"};
  m.param_names = {"theta1", "theta2"};
  m.param_support = {Support::real, Support::real};
  m.observed = {0, 1};
  m.noise = {NoiseKind::gaussian, NoiseKind::gaussian};
  m.rhs = [](std::span<const double> x, std::span<const double>, std::span<const double> th, std::span<double> out) {
    out[0] = 72.0 / (36.0 + x[1]) - th[0];
    out[1] = th[1] * x[0] - 1.0;
  };
  return m;
}

/// Same system with |theta1|, which makes the theta1 posterior symmetric.
inline DeModel ode_bimodal() {
  DeModel m = ode_basic();
  m.name = "ode-bimodal";
  m.rhs = [](std::span<const double> x, std::span<const double>, std::span<const double> th, std::span<double> out) {
    out[0] = 72.0 / (36.0 + x[1]) - std::abs(th[0]);
    out[1] = th[1] * x[0] - 1.0;
  };
  return m;
}

/// Hutchinson's delayed logistic equation for W = log x:
/// dW/dt = nu (1 - exp(W(t - tau)) / (1000 P)).
inline DeModel hutchinson_log() {
  DeModel m;
  m.name = "hutchinson-log";
  m.component_names = {"W"};
  m.param_names = {"nu", "P"};
  m.param_support = {Support::positive, Support::positive};
  m.observed = {0};
  m.noise = {NoiseKind::lognormal};
  m.has_delay = true;
  m.rhs = [](std::span<const double>, std::span<const double> lag, std::span<const double> th, std::span<double> out) {
    out[0] = th[0] * (1.0 - std::exp(lag[0]) / (1000.0 * th[1]));
  };
  return m;
}

/// Delayed feedback inhibition of gene expression, Hill coefficient fixed at 8.
inline DeModel monk() {
  DeModel m;
  m.name = "monk";
  m.component_names = {"mRNA", "protein"};
  m.param_names = {"mu_m", "mu_p", "p0"};
  m.param_support = {Support::positive, Support::positive, Support::positive};
  m.observed = {0, 1};
  m.noise = {NoiseKind::gaussian, NoiseKind::gaussian};
  m.has_delay = true;
  m.rhs = [](std::span<const double> x, std::span<const double> lag, std::span<const double> th, std::span<double> out) {
    constexpr double hill = 8.0;
    out[0] = 1.0 / (1.0 + std::pow(lag[1] / th[2], hill)) - th[0] * x[0];
    out[1] = x[0] - th[1] * x[1];
  };
  return m;
}

}  // namespace models

inline std::vector<std::string> model_names() { return {"ode-basic", "ode-bimodal", "hutchinson-log", "monk"}; }

inline DeModel lookup(std::string_view name) {
  if (name == "ode-basic") return models::ode_basic();
  if (name == "ode-bimodal") return models::ode_bimodal();
  if (name == "hutchinson-log") return models::hutchinson_log();
  if (name == "monk") return models::monk();
  throw UnknownModelError("unknown model '" + std::string(name) + "'");
}

}  // namespace smcde
