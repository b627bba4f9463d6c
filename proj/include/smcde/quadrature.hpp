#pragma once

/// \file
/// Composite Simpson quadrature of the DE-fidelity integrals
/// R_i = int_{t1+tau}^{tmax} (x_i'(s) - g_i(x(s), x(s - tau) | theta))^2 ds
/// on subintervals delimited by the spline knots.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "smcde/bspline.hpp"
#include "smcde/models.hpp"

namespace smcde {

class EmptyDomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct QuadratureGrid {
  double tau = 0.0;
  int nodes_per_interval = 3;
  /// t1 + tau = boundaries.front() < ... < boundaries.back() = tmax.
  std::vector<double> boundaries;
  /// Flattened, `nodes_per_interval` entries per subinterval.
  std::vector<double> nodes;
  std::vector<double> weights;

  [[nodiscard]] std::size_t interval_count() const { return boundaries.empty() ? 0 : boundaries.size() - 1; }
};

/// Simpson weights for M equally spaced nodes on an interval of length `width`.
inline std::vector<double> simpson_weights(int m, double width) {
  if (m < 3 || m % 2 == 0) throw std::invalid_argument("Simpson rule needs an odd node count >= 3");
  const double h = width / static_cast<double>(m - 1);
  std::vector<double> w(static_cast<std::size_t>(m));
  for (int k = 0; k < m; ++k) {
    const double c = (k == 0 || k == m - 1) ? 1.0 : (k % 2 == 1 ? 4.0 : 2.0);
    w[static_cast<std::size_t>(k)] = c * h / 3.0;
  }
  return w;
}

inline QuadratureGrid build_grid(const KnotVector& kv, double tau, int m = 3) {
  if (!(tau >= 0.0)) throw std::invalid_argument("delay must be non-negative");
  if (!(tau < kv.tmax - kv.t1)) throw EmptyDomainError("delay leaves an empty integration domain");
  if (m < 3 || m % 2 == 0) throw std::invalid_argument("Simpson rule needs an odd node count >= 3");
  QuadratureGrid g;
  g.tau = tau;
  g.nodes_per_interval = m;
  const double lower = kv.t1 + tau;
  g.boundaries.push_back(lower);
  for (double k : kv.interior) {
    if (k > lower && k < kv.tmax) g.boundaries.push_back(k);
  }
  g.boundaries.push_back(kv.tmax);
  const std::size_t n_int = g.interval_count();
  g.nodes.reserve(n_int * static_cast<std::size_t>(m));
  g.weights.reserve(n_int * static_cast<std::size_t>(m));
  for (std::size_t l = 0; l < n_int; ++l) {
    const double a = g.boundaries[l];
    const double b = g.boundaries[l + 1];
    const auto w = simpson_weights(m, b - a);
    for (int k = 0; k < m; ++k) {
      const double xi = (k == m - 1) ? b : a + (b - a) * static_cast<double>(k) / static_cast<double>(m - 1);
      g.nodes.push_back(xi);
      g.weights.push_back(w[static_cast<std::size_t>(k)]);
    }
  }
  return g;
}

/// Integrates f with the grid's nodes and weights.
template <class F>
double integrate(const QuadratureGrid& grid, F&& f) {
  double s = 0.0;
  for (std::size_t n = 0; n < grid.nodes.size(); ++n) s += grid.weights[n] * f(grid.nodes[n]);
  return s;
}

/// Spline states x(s) and x(s - tau) for every component.
inline void spline_states(std::span<const SplineBasis> bases, std::span<const std::vector<double>> coef, double s, double lag_time,
                          std::span<double> x, std::span<double> x_lag) {
  for (std::size_t j = 0; j < bases.size(); ++j) {
    x[j] = bases[j].value(coef[j], s);
    x_lag[j] = bases[j].value(coef[j], std::max(lag_time, bases[j].t1()));
  }
}

/// Quadrature approximation of R_i for component i on `grid` (built for tau).
inline double penalty_component(const QuadratureGrid& grid, const DeModel& model, std::span<const SplineBasis> bases,
                                std::span<const std::vector<double>> coef, std::span<const double> theta, double tau, std::size_t i) {
  const std::size_t dim = model.dim();
  std::vector<double> x(dim), x_lag(dim), g(dim);
  double total = 0.0;
  for (std::size_t n = 0; n < grid.nodes.size(); ++n) {
    const double s = grid.nodes[n];
    assert(s - tau >= bases[i].t1() - 1e-9 * (1.0 + std::abs(s)));
    spline_states(bases, coef, s, s - tau, x, x_lag);
    model.rhs(x, x_lag, theta, g);
    const double r = bases[i].derivative(coef[i], s) - g[i];
    total += grid.weights[n] * r * r;
  }
  return total;
}

/// Sum over all components of R_i, each on the grid of its own knots.
inline double total_penalty(std::span<const QuadratureGrid> grids, const DeModel& model, std::span<const SplineBasis> bases,
                            std::span<const std::vector<double>> coef, std::span<const double> theta, double tau) {
  double total = 0.0;
  for (std::size_t i = 0; i < model.dim(); ++i) total += penalty_component(grids[i], model, bases, coef, theta, tau, i);
  return total;
}

}  // namespace smcde
