#pragma once

/// \file
/// Adaptive annealed SMC: reference initialisation, annealing parameters chosen
/// by bisection on the relative conditional ESS, log-weight updates,
/// rESS-triggered systematic resampling, and propagation by an invariant kernel.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "smcde/parallel.hpp"
#include "smcde/random.hpp"
#include "smcde/sweep_stats.hpp"

namespace smcde {

class DegenerateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Anything the engine can anneal: reference draws, the log incremental
/// weight d log gamma / d alpha, a gamma_alpha-invariant move and an optional
/// step-size hook fed with the current weighted population.
template <class T>
concept AnnealingTarget = requires(const T& t, T& mt, typename T::State& s, const typename T::State& cs, Rng& rng,
                                   std::span<const typename T::State> states, std::span<const double> w) {
  { t.sample_reference(rng) } -> std::same_as<typename T::State>;
  { t.log_increment(cs) } -> std::convertible_to<double>;
  { t.move(s, 0.5, rng) } -> std::same_as<SweepStats>;
  mt.adapt(states, w);
};

/// 1 / sum W^2 for normalised weights.
inline double ess(std::span<const double> w) {
  double s2 = 0.0;
  double s = 0.0;
  for (double x : w) {
    s += x;
    s2 += x * x;
  }
  if (!(s > 0.0) || !(s2 > 0.0)) throw DegenerateError("all particle weights are zero");
  return 1.0 / s2;
}

/// (sum W w)^2 / sum W w^2 with w = exp(delta u), shifted by the largest
/// finite exponent before exponentiating.
inline double rcess(std::span<const double> w_prev, std::span<const double> u, double delta_alpha) {
  if (delta_alpha == 0.0) return 1.0;
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < u.size(); ++k) {
    if (w_prev[k] > 0.0 && u[k] > -std::numeric_limits<double>::infinity()) top = std::max(top, delta_alpha * u[k]);
  }
  if (!std::isfinite(top)) throw DegenerateError("all incremental weights are -inf");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    if (w_prev[k] <= 0.0) continue;
    const double e = std::exp(delta_alpha * u[k] - top);
    num += w_prev[k] * e;
    den += w_prev[k] * e * e;
  }
  return num * num / den;
}

struct AlphaSearch {
  double alpha = 1.0;
  double rcess = 1.0;
  int iterations = 0;
};

/// Next annealing parameter: 1 if the rCESS at alpha = 1 is at least phi,
/// otherwise the root of rcess(alpha) = phi in (alpha_prev, 1). The bisection
/// runs on log(alpha - alpha_prev) so that increments far below 2^-200 (seen
/// when reference draws have enormous penalties) stay reachable within the
/// iteration cap.
inline AlphaSearch next_alpha(std::span<const double> w_prev, std::span<const double> u, double alpha_prev, double phi,
                              double tol = 1e-12, int max_iter = 200) {
  if (!(phi > 0.0 && phi < 1.0)) throw std::invalid_argument("rCESS threshold must lie in (0, 1)");
  if (!(alpha_prev < 1.0)) throw std::invalid_argument("annealing already finished");
  auto f = [&](double delta) { return rcess(w_prev, u, delta); };
  AlphaSearch out;
  const double span = 1.0 - alpha_prev;
  const double f1 = f(span);
  if (f1 >= phi) {
    out.alpha = 1.0;
    out.rcess = f1;
    return out;
  }
  constexpr double kMinDelta = 1e-300;
  double lo = std::log(kMinDelta);  // f(exp(lo)) >= phi unless increments are astronomically spread
  double hi = std::log(span);
  double delta = std::exp(hi);
  double fm = f1;
  if (f(kMinDelta) < phi) {
    delta = kMinDelta;
    fm = f(delta);
  } else {
    for (int it = 0; it < max_iter; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (!(mid > lo && mid < hi)) break;  // interval exhausted at double resolution
      delta = std::exp(mid);
      fm = f(delta);
      out.iterations = it + 1;
      if (std::abs(fm - phi) <= tol) break;
      if (fm > phi) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
  }
  out.alpha = std::min(1.0, alpha_prev + delta);
  if (!(out.alpha > alpha_prev)) out.alpha = std::nextafter(alpha_prev, 2.0);
  out.rcess = fm;
  return out;
}

/// log w += delta u, then normalised weights via log-sum-exp.
inline void log_weight_update(std::vector<double>& log_w, std::span<const double> u, double delta_alpha, std::vector<double>& w) {
  if (delta_alpha != 0.0) {
    for (std::size_t k = 0; k < log_w.size(); ++k) log_w[k] += delta_alpha * u[k];
  }
  double top = -std::numeric_limits<double>::infinity();
  for (double x : log_w) top = std::max(top, x);
  if (!std::isfinite(top)) throw DegenerateError("all particle log-weights are -inf");
  double sum = 0.0;
  w.resize(log_w.size());
  for (std::size_t k = 0; k < log_w.size(); ++k) {
    w[k] = std::exp(log_w[k] - top);
    sum += w[k];
  }
  for (double& x : w) x /= sum;
}

/// Ancestor indices by systematic resampling with one uniform draw.
inline std::vector<std::size_t> systematic_resample(std::span<const double> w, Rng& rng) {
  const std::size_t n = w.size();
  std::vector<std::size_t> idx(n);
  if (n == 0) return idx;
  // Rounding in the cumulative sum must not hand offspring to trailing zero weights.
  std::size_t last = n - 1;
  while (last > 0 && !(w[last] > 0.0)) --last;
  const double u0 = uniform01(rng) / static_cast<double>(n);
  double cum = w[0];
  std::size_t k = 0;
  for (std::size_t m = 0; m < n; ++m) {
    const double pos = u0 + static_cast<double>(m) / static_cast<double>(n);
    while (pos >= cum && k < last) cum += w[++k];
    idx[m] = k;
  }
  return idx;
}

struct SmcConfig {
  std::size_t particles = 500;
  double phi = 0.9;
  double resample_threshold = 0.5;
  std::uint64_t seed = 1;
  unsigned workers = 0;  // 0: hardware concurrency
  std::size_t max_iterations = 100000;
  int init_retries = 100;
};

struct ScheduleEntry {
  std::size_t r = 0;
  double alpha = 0.0;
  double rcess = 1.0;
  double ress = 1.0;
  bool resampled = false;
  double accept_theta = 0.0;
  double accept_tau = 0.0;
  double accept_c = 0.0;
};

template <class State>
struct SmcResult {
  std::vector<State> particles;
  std::vector<double> log_weights;
  std::vector<double> weights;
  std::vector<ScheduleEntry> schedule;
  double wall_seconds = 0.0;

  [[nodiscard]] std::size_t iterations() const { return schedule.size(); }
};

namespace detail {
inline constexpr std::uint64_t kParticleStreamTag = 0x5eed0001;
inline constexpr std::uint64_t kResampleStreamTag = 0x5eed0002;
}  // namespace detail

/// Runs the sampler to alpha = 1. Each particle slot owns one random stream
/// derived from the seed; streams stay with the slot across resampling, so
/// the output does not depend on the number of workers.
template <AnnealingTarget Target>
SmcResult<typename Target::State> run_smc(Target& target, const SmcConfig& cfg) {
  using State = typename Target::State;
  if (cfg.particles < 2) throw std::invalid_argument("need at least two particles");
  if (!(cfg.phi > 0.0 && cfg.phi < 1.0)) throw std::invalid_argument("rCESS threshold must lie in (0, 1)");
  if (!(cfg.resample_threshold > 0.0 && cfg.resample_threshold < 1.0)) {
    throw std::invalid_argument("resampling threshold must lie in (0, 1)");
  }
  const auto start = std::chrono::steady_clock::now();
  const std::size_t k_n = cfg.particles;
  const unsigned workers = cfg.workers == 0 ? default_workers() : cfg.workers;

  std::vector<Rng> streams;
  streams.reserve(k_n);
  for (std::size_t k = 0; k < k_n; ++k) streams.push_back(make_stream(cfg.seed, detail::kParticleStreamTag, k));
  Rng resample_rng = make_stream(cfg.seed, detail::kResampleStreamTag, 0);

  SmcResult<State> res;
  res.particles.resize(k_n);
  std::vector<double> u(k_n);
  parallel_for(k_n, workers, [&](std::size_t k) {
    for (int attempt = 0;; ++attempt) {
      res.particles[k] = target.sample_reference(streams[k]);
      u[k] = target.log_increment(res.particles[k]);
      if (std::isfinite(u[k])) break;
      if (attempt + 1 >= cfg.init_retries) {
        throw DegenerateError("reference draw " + std::to_string(k) + " has a non-finite log density after " +
                              std::to_string(cfg.init_retries) + " attempts");
      }
    }
  });
  res.log_weights.assign(k_n, 0.0);
  res.weights.assign(k_n, 1.0 / static_cast<double>(k_n));

  double alpha = 0.0;
  std::vector<SweepStats> stats(k_n);
  for (std::size_t r = 1;; ++r) {
    if (r > cfg.max_iterations) throw DegenerateError("annealing did not reach alpha = 1 within the iteration cap");
    if (r > 1) {
      parallel_for(k_n, workers, [&](std::size_t k) { u[k] = target.log_increment(res.particles[k]); });
    }
    const AlphaSearch next = next_alpha(res.weights, u, alpha, cfg.phi);
    log_weight_update(res.log_weights, u, next.alpha - alpha, res.weights);
    alpha = next.alpha;

    ScheduleEntry entry;
    entry.r = r;
    entry.alpha = alpha;
    entry.rcess = next.rcess;

    target.adapt(std::span<const State>(res.particles), std::span<const double>(res.weights));
    parallel_for(k_n, workers, [&](std::size_t k) { stats[k] = target.move(res.particles[k], alpha, streams[k]); });
    SweepStats total;
    for (const auto& s : stats) total += s;
    entry.accept_theta = total.theta_rate();
    entry.accept_tau = total.tau_rate();
    entry.accept_c = total.c_rate();
    entry.ress = ess(res.weights) / static_cast<double>(k_n);

    if (alpha >= 1.0) {
      res.schedule.push_back(entry);
      break;
    }
    if (entry.ress < cfg.resample_threshold) {
      const auto idx = systematic_resample(res.weights, resample_rng);
      std::vector<State> next_particles(k_n);
      for (std::size_t k = 0; k < k_n; ++k) next_particles[k] = res.particles[idx[k]];
      res.particles = std::move(next_particles);
      res.log_weights.assign(k_n, 0.0);
      res.weights.assign(k_n, 1.0 / static_cast<double>(k_n));
      entry.resampled = true;
    }
    res.schedule.push_back(entry);
  }
  res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

/// Equally weighted copy of a weighted population by one systematic pass.
template <class State>
std::vector<State> resample_equal(std::span<const State> particles, std::span<const double> w, Rng& rng) {
  const auto idx = systematic_resample(w, rng);
  std::vector<State> out;
  out.reserve(idx.size());
  for (std::size_t k : idx) out.push_back(particles[k]);
  return out;
}

}  // namespace smcde
