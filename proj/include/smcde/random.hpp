#pragma once

/// \file
/// Random streams and the handful of distributions the samplers draw from.

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

#include <boost/math/distributions/normal.hpp>

namespace smcde {

using Rng = std::mt19937_64;

/// Independent stream `stream` of the master seed. Streams for distinct
/// (seed, tag, stream) triples do not overlap in practice.
inline Rng make_stream(std::uint64_t seed, std::uint64_t tag, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), static_cast<std::uint32_t>(tag),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

inline double normal(Rng& rng, double mean, double sd) { return std::normal_distribution<double>(mean, sd)(rng); }

/// Gamma(shape, rate).
inline double gamma_rate(Rng& rng, double shape, double rate) {
  return std::gamma_distribution<double>(shape, 1.0 / rate)(rng);
}

/// Inverse-Gamma(shape, scale): 1 / Gamma(shape, rate = scale).
inline double inverse_gamma(Rng& rng, double shape, double scale) { return 1.0 / gamma_rate(rng, shape, scale); }

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

/// N(mean, sd^2) restricted to (lower, +inf), by inversion.
inline double truncated_normal_above(Rng& rng, double mean, double sd, double lower) {
  const boost::math::normal_distribution<double> dist(mean, sd);
  const double p_lo = boost::math::cdf(dist, lower);
  if (p_lo < 0.5) {
    double x;
    do {
      x = normal(rng, mean, sd);
    } while (!(x > lower));
    return x;
  }
  // Far tail: invert the upper-tail probability for accuracy.
  const double q_lo = boost::math::cdf(boost::math::complement(dist, lower));
  double u;
  do {
    u = uniform01(rng);
  } while (u <= 0.0);
  const double q = u * q_lo;
  const double x = boost::math::quantile(boost::math::complement(dist, q));
  return x > lower ? x : std::nextafter(lower, std::numeric_limits<double>::infinity());
}

/// Accept a Metropolis-Hastings move with log acceptance ratio `log_ratio`.
inline bool mh_accept(Rng& rng, double log_ratio) {
  if (std::isnan(log_ratio)) return false;
  if (log_ratio >= 0.0) return true;
  return std::log(uniform01(rng)) < log_ratio;
}

}  // namespace smcde
