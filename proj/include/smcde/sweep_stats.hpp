#pragma once

#include <cstddef>

namespace smcde {

/// Acceptance counts of one or more MCMC sweeps.
struct SweepStats {
  std::size_t theta_accepted = 0;
  std::size_t theta_proposed = 0;
  std::size_t tau_accepted = 0;
  std::size_t tau_proposed = 0;
  std::size_t c_accepted = 0;
  std::size_t c_proposed = 0;

  SweepStats& operator+=(const SweepStats& o) {
    theta_accepted += o.theta_accepted;
    theta_proposed += o.theta_proposed;
    tau_accepted += o.tau_accepted;
    tau_proposed += o.tau_proposed;
    c_accepted += o.c_accepted;
    c_proposed += o.c_proposed;
    return *this;
  }

  static double rate(std::size_t a, std::size_t p) { return p == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(p); }
  [[nodiscard]] double theta_rate() const { return rate(theta_accepted, theta_proposed); }
  [[nodiscard]] double tau_rate() const { return rate(tau_accepted, tau_proposed); }
  [[nodiscard]] double c_rate() const { return rate(c_accepted, c_proposed); }
};

}  // namespace smcde
