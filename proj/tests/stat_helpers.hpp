#pragma once

// Goodness-of-fit helpers shared by the statistical tests.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "smcde/random.hpp"

namespace smcde::testing {

/// Asymptotic Kolmogorov p-value of sqrt(n) D with the usual small-sample correction.
inline double ks_pvalue(double d, std::size_t n) {
  const double sn = std::sqrt(static_cast<double>(n));
  const double x = (sn + 0.12 + 0.11 / sn) * d;
  if (x < 0.2) return 1.0;
  double p = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * x * x);
    p += (k % 2 == 1 ? 2.0 : -2.0) * term;
    if (term < 1e-16) break;
  }
  return std::clamp(p, 0.0, 1.0);
}

/// One-sample KS statistic of `x` against `cdf`.
inline double ks_statistic(std::vector<double> x, const std::function<double(double)>& cdf) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double f = cdf(x[k]);
    d = std::max({d, f - static_cast<double>(k) / n, static_cast<double>(k + 1) / n - f});
  }
  return d;
}

inline double chi2_pvalue(double stat, double dof) {
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared(dof), stat));
}

/// A 1-D density known up to a constant, tabulated on a fine grid over [a, b]
/// and normalised by the trapezoid rule. Supplies the CDF, its inverse and
/// equal-probability bins.
class GridDensity {
 public:
  GridDensity(double a, double b, const std::function<double(double)>& log_density, std::size_t n = 20001) : a_(a), b_(b) {
    x_.resize(n);
    std::vector<double> lf(n);
    double top = -INFINITY;
    for (std::size_t k = 0; k < n; ++k) {
      x_[k] = a + (b - a) * static_cast<double>(k) / static_cast<double>(n - 1);
      lf[k] = log_density(x_[k]);
      top = std::max(top, lf[k]);
    }
    cdf_.assign(n, 0.0);
    std::vector<double> f(n);
    for (std::size_t k = 0; k < n; ++k) f[k] = std::isfinite(lf[k]) ? std::exp(lf[k] - top) : 0.0;
    for (std::size_t k = 1; k < n; ++k) cdf_[k] = cdf_[k - 1] + 0.5 * (f[k] + f[k - 1]) * (x_[k] - x_[k - 1]);
    const double total = cdf_.back();
    for (double& c : cdf_) c /= total;
  }

  [[nodiscard]] double cdf(double x) const {
    if (x <= a_) return 0.0;
    if (x >= b_) return 1.0;
    const auto it = std::upper_bound(x_.begin(), x_.end(), x);
    const std::size_t k = static_cast<std::size_t>(it - x_.begin());
    const double w = (x - x_[k - 1]) / (x_[k] - x_[k - 1]);
    return (1.0 - w) * cdf_[k - 1] + w * cdf_[k];
  }

  [[nodiscard]] double quantile(double p) const {
    const auto it = std::lower_bound(cdf_.begin(), cdf_.end(), p);
    if (it == cdf_.begin()) return a_;
    if (it == cdf_.end()) return b_;
    const std::size_t k = static_cast<std::size_t>(it - cdf_.begin());
    const double w = (p - cdf_[k - 1]) / (cdf_[k] - cdf_[k - 1]);
    return x_[k - 1] + w * (x_[k] - x_[k - 1]);
  }

  [[nodiscard]] double draw(Rng& rng) const { return quantile(uniform01(rng)); }

  /// Pearson chi-square p-value with `bins` equal-probability bins.
  [[nodiscard]] double chi2_test(std::span<const double> sample, std::size_t bins = 20) const {
    std::vector<double> counts(bins, 0.0);
    for (double v : sample) {
      auto b = static_cast<std::size_t>(cdf(v) * static_cast<double>(bins));
      counts[std::min(b, bins - 1)] += 1.0;
    }
    const double expect = static_cast<double>(sample.size()) / static_cast<double>(bins);
    double stat = 0.0;
    for (double c : counts) stat += (c - expect) * (c - expect) / expect;
    return chi2_pvalue(stat, static_cast<double>(bins - 1));
  }

  [[nodiscard]] double ks_test(std::span<const double> sample) const {
    const double d = ks_statistic({sample.begin(), sample.end()}, [this](double v) { return cdf(v); });
    return ks_pvalue(d, sample.size());
  }

 private:
  double a_;
  double b_;
  std::vector<double> x_;
  std::vector<double> cdf_;
};

}  // namespace smcde::testing
