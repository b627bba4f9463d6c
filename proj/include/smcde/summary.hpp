#pragma once

/// \file
/// Weighted posterior summaries: means, quantiles, correlations, pointwise
/// trajectory bands, and trajectory RMSE against a known truth.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "smcde/bspline.hpp"

namespace smcde {

inline std::vector<double> uniform_weights(std::size_t n) { return std::vector<double>(n, n == 0 ? 0.0 : 1.0 / static_cast<double>(n)); }

inline double weighted_mean(std::span<const double> x, std::span<const double> w) {
  double s = 0.0;
  double ws = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    s += w[k] * x[k];
    ws += w[k];
  }
  if (!(ws > 0.0)) throw std::invalid_argument("weights sum to zero");
  return s / ws;
}

/// Inverse of the weighted empirical CDF with linear interpolation. Sorted
/// positive-weight values v_1..v_n with cumulative weights C_k sit at
/// positions (C_k - W_1) / (1 - W_1); with equal weights this is the usual
/// (n - 1) p + 1 order-statistic interpolation.
inline double weighted_quantile(std::span<const double> x, std::span<const double> w, double p) {
  if (x.empty()) throw std::invalid_argument("quantile of an empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("quantile level must lie in [0, 1]");
  std::vector<std::size_t> idx;
  idx.reserve(x.size());
  double total = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (w[k] > 0.0) {
      idx.push_back(k);
      total += w[k];
    }
  }
  if (idx.empty()) throw std::invalid_argument("weights sum to zero");
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  if (idx.size() == 1) return x[idx[0]];
  const double w1 = w[idx[0]] / total;
  if (w1 >= 1.0) return x[idx[0]];
  double cum = 0.0;
  double prev_pos = 0.0;
  double prev_val = x[idx[0]];
  for (std::size_t m = 0; m < idx.size(); ++m) {
    cum += w[idx[m]] / total;
    const double pos = m + 1 == idx.size() ? 1.0 : (cum - w1) / (1.0 - w1);
    const double val = x[idx[m]];
    if (p <= pos) {
      if (pos <= prev_pos) return val;
      return prev_val + (val - prev_val) * (p - prev_pos) / (pos - prev_pos);
    }
    prev_pos = pos;
    prev_val = val;
  }
  return x[idx.back()];
}

inline double weighted_correlation(std::span<const double> x, std::span<const double> y, std::span<const double> w) {
  const double mx = weighted_mean(x, w);
  const double my = weighted_mean(y, w);
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sxy += w[k] * (x[k] - mx) * (y[k] - my);
    sxx += w[k] * (x[k] - mx) * (x[k] - mx);
    syy += w[k] * (y[k] - my) * (y[k] - my);
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

struct ParameterSummary {
  std::string name;
  double mean = 0.0;
  double lower = 0.0;  // 2.5%
  double upper = 0.0;  // 97.5%
  double sd = 0.0;

  [[nodiscard]] bool covers(double v) const { return lower <= v && v <= upper; }
};

inline ParameterSummary summarize_parameter(std::string name, std::span<const double> x, std::span<const double> w) {
  ParameterSummary s;
  s.name = std::move(name);
  s.mean = weighted_mean(x, w);
  s.lower = weighted_quantile(x, w, 0.025);
  s.upper = weighted_quantile(x, w, 0.975);
  double v = 0.0;
  double ws = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    v += w[k] * (x[k] - s.mean) * (x[k] - s.mean);
    ws += w[k];
  }
  s.sd = std::sqrt(std::max(v / ws, 0.0));
  return s;
}

struct TrajectoryBand {
  std::string component;
  std::vector<double> times;
  std::vector<double> mean;
  std::vector<double> lower;
  std::vector<double> upper;
};

/// Pointwise weighted mean and 95% band of Phi(t)'c over the particles.
inline TrajectoryBand trajectory_band(std::string name, const SplineBasis& basis, std::span<const std::vector<double>> coefs,
                                      std::span<const double> w, std::span<const double> times) {
  TrajectoryBand band;
  band.component = std::move(name);
  band.times.assign(times.begin(), times.end());
  std::vector<double> vals(coefs.size());
  for (double t : times) {
    const SparseRow row = basis.row(t);
    for (std::size_t k = 0; k < coefs.size(); ++k) vals[k] = row.dot(coefs[k]);
    band.mean.push_back(weighted_mean(vals, w));
    band.lower.push_back(weighted_quantile(vals, w, 0.025));
    band.upper.push_back(weighted_quantile(vals, w, 0.975));
  }
  return band;
}

/// sqrt(mean_j (Phi(t_j)'c - x(t_j))^2).
inline double rmse(const SplineBasis& basis, std::span<const double> coef, std::span<const double> times, std::span<const double> truth) {
  if (times.size() != truth.size() || times.empty()) throw std::invalid_argument("rmse needs matching, nonempty times and truth");
  double s = 0.0;
  for (std::size_t j = 0; j < times.size(); ++j) {
    const double d = basis.value(coef, times[j]) - truth[j];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(times.size()));
}

/// Weighted mean coefficient vector of one component.
inline std::vector<double> mean_coefficients(std::span<const std::vector<double>> coefs, std::span<const double> w) {
  std::vector<double> m(coefs.empty() ? 0 : coefs.front().size(), 0.0);
  double ws = 0.0;
  for (std::size_t k = 0; k < coefs.size(); ++k) {
    for (std::size_t l = 0; l < m.size(); ++l) m[l] += w[k] * coefs[k][l];
    ws += w[k];
  }
  for (double& v : m) v /= ws;
  return m;
}

struct CorrelationEntry {
  std::string a;
  std::string b;
  double value = 0.0;
};

struct SummaryReport {
  std::vector<ParameterSummary> parameters;
  std::vector<TrajectoryBand> trajectories;
  std::vector<CorrelationEntry> correlations;
  std::vector<std::pair<std::string, double>> rmse;

  [[nodiscard]] const ParameterSummary* find(const std::string& name) const {
    for (const auto& p : parameters) {
      if (p.name == name) return &p;
    }
    return nullptr;
  }
};

/// Summaries of named columns of a sample table (one row per draw).
inline SummaryReport summarize_table(std::span<const std::string> names, std::span<const std::vector<double>> columns,
                                     std::span<const double> w) {
  SummaryReport r;
  for (std::size_t c = 0; c < names.size(); ++c) r.parameters.push_back(summarize_parameter(names[c], columns[c], w));
  for (std::size_t a = 0; a < names.size(); ++a) {
    for (std::size_t b = a + 1; b < names.size(); ++b) {
      r.correlations.push_back({names[a], names[b], weighted_correlation(columns[a], columns[b], w)});
    }
  }
  return r;
}

}  // namespace smcde
