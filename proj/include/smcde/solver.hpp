#pragma once

/// \file
/// Fixed-step integrators for data generation and the solver-based baselines.
/// Delays use the method of steps: lagged states are read back from the
/// trajectory computed so far by linear interpolation, with x(t) = x(t1)
/// before the start of the span.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "smcde/models.hpp"

namespace smcde {

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(double time, const std::string& what) : std::runtime_error(what), time_(time) {}
  [[nodiscard]] double time() const { return time_; }

 private:
  double time_;
};

enum class SolverMethod { rk4, euler };

/// States on a uniform grid t1, t1 + h, ..., tmax.
class Trajectory {
 public:
  Trajectory(double t1, double step, std::size_t dim) : t1_(t1), step_(step), dim_(dim) {}

  [[nodiscard]] std::size_t dim() const { return dim_; }
  [[nodiscard]] std::size_t size() const { return dim_ == 0 ? 0 : states_.size() / dim_; }
  [[nodiscard]] double step() const { return step_; }
  [[nodiscard]] double t1() const { return t1_; }
  [[nodiscard]] double time(std::size_t k) const { return t1_ + step_ * static_cast<double>(k); }
  [[nodiscard]] double tmax() const { return time(size() - 1); }
  [[nodiscard]] std::span<const double> state(std::size_t k) const { return {states_.data() + k * dim_, dim_}; }

  void push(std::span<const double> x) { states_.insert(states_.end(), x.begin(), x.end()); }

  /// Linear interpolation between grid states; `t` must lie within the computed range.
  void interpolate(double t, std::span<double> out) const {
    const std::size_t last = size() - 1;
    double pos = (t - t1_) / step_;
    if (pos <= 0.0) pos = 0.0;
    if (const double nearest = std::round(pos); std::abs(pos - nearest) < 1e-9) pos = nearest;
    auto k = static_cast<std::size_t>(pos);
    if (k >= last) {
      const auto s = state(last);
      std::copy(s.begin(), s.end(), out.begin());
      return;
    }
    const double frac = pos - static_cast<double>(k);
    const auto a = state(k);
    const auto b = state(k + 1);
    if (frac == 0.0) {
      std::copy(a.begin(), a.end(), out.begin());
      return;
    }
    for (std::size_t j = 0; j < dim_; ++j) out[j] = a[j] + frac * (b[j] - a[j]);
  }

 private:
  double t1_;
  double step_;
  std::size_t dim_;
  std::vector<double> states_;
};

/// Integrates the model from x0 at t1 to tmax with (approximately) step h; the
/// step is shrunk so that the grid ends exactly at tmax.
inline Trajectory solve(const DeModel& model, std::span<const double> x0, std::span<const double> theta, double tau, double h, double t1,
                        double tmax, SolverMethod method = SolverMethod::rk4) {
  if (!(h > 0.0)) throw std::invalid_argument("solver step must be positive");
  if (!(tmax > t1)) throw std::invalid_argument("solver span must satisfy tmax > t1");
  const std::size_t dim = model.dim();
  if (x0.size() != dim) throw std::invalid_argument("initial state has wrong dimension");
  const auto steps = static_cast<std::size_t>(std::ceil((tmax - t1) / h - 1e-9));
  const double step = (tmax - t1) / static_cast<double>(steps);
  Trajectory traj(t1, step, dim);
  traj.push(x0);

  std::vector<double> x(x0.begin(), x0.end());
  std::vector<double> lag(dim), stage(dim), k1(dim), k2(dim), k3(dim), k4(dim);
  const bool delayed = model.has_delay && tau > 0.0;

  // Lagged state for a stage evaluated at time s with stage state xs.
  auto lagged = [&](double s, std::span<const double> xs) -> std::span<const double> {
    if (!delayed) return xs;
    const double ts = s - tau;
    if (ts <= t1) {
      std::copy(x0.begin(), x0.end(), lag.begin());
    } else {
      traj.interpolate(ts, lag);
    }
    return lag;
  };

  for (std::size_t k = 0; k < steps; ++k) {
    const double t = traj.time(k);
    if (method == SolverMethod::euler) {
      model.rhs(x, lagged(t, x), theta, k1);
      for (std::size_t j = 0; j < dim; ++j) x[j] += step * k1[j];
    } else {
      model.rhs(x, lagged(t, x), theta, k1);
      for (std::size_t j = 0; j < dim; ++j) stage[j] = x[j] + 0.5 * step * k1[j];
      model.rhs(stage, lagged(t + 0.5 * step, stage), theta, k2);
      for (std::size_t j = 0; j < dim; ++j) stage[j] = x[j] + 0.5 * step * k2[j];
      model.rhs(stage, lagged(t + 0.5 * step, stage), theta, k3);
      for (std::size_t j = 0; j < dim; ++j) stage[j] = x[j] + step * k3[j];
      model.rhs(stage, lagged(t + step, stage), theta, k4);
      for (std::size_t j = 0; j < dim; ++j) x[j] += step / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
    }
    for (std::size_t j = 0; j < dim; ++j) {
      if (!std::isfinite(x[j])) {
        throw DivergenceError(t + step, "solution diverged at t = " + std::to_string(t + step));
      }
    }
    traj.push(x);
  }
  return traj;
}

/// States at arbitrary times inside the span, row-major [times x dim].
inline std::vector<double> sample_at(const Trajectory& traj, std::span<const double> times) {
  const std::size_t dim = traj.dim();
  std::vector<double> out(times.size() * dim);
  const double tol = 1e-9 * (1.0 + std::abs(traj.tmax()));
  for (std::size_t j = 0; j < times.size(); ++j) {
    if (times[j] < traj.t1() - tol || times[j] > traj.tmax() + tol) {
      throw std::out_of_range("sample time " + std::to_string(times[j]) + " outside trajectory span");
    }
    traj.interpolate(times[j], std::span<double>(out.data() + j * dim, dim));
  }
  return out;
}

}  // namespace smcde
