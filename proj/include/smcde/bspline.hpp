#pragma once

/// \file
/// Clamped B-spline bases on a closed time span: knot construction, Cox-de Boor
/// evaluation of basis values and first derivatives, design matrices and
/// least-squares coefficient fits.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace smcde {

class SpanError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Highest supported spline order (degree + 1) for the sparse row machinery.
inline constexpr int kMaxSplineOrder = 6;

/// Knot sequence with (degree+1)-fold boundary knots at t1 and tmax.
struct KnotVector {
  int degree = 3;
  double t1 = 0.0;
  double tmax = 1.0;
  std::vector<double> interior;
  std::vector<double> full;

  [[nodiscard]] std::size_t basis_count() const { return interior.size() + static_cast<std::size_t>(degree) + 1; }
  [[nodiscard]] bool contains(double t) const { return t >= t1 && t <= tmax; }
};

/// Builds a clamped knot vector from explicit interior knots.
inline KnotVector make_knots(double t1, double tmax, std::vector<double> interior, int degree = 3) {
  if (!std::isfinite(t1) || !std::isfinite(tmax) || !(tmax > t1)) {
    throw SpanError("knot span must be finite with tmax > t1");
  }
  if (degree < 1 || degree + 1 > kMaxSplineOrder) {
    throw std::invalid_argument("spline degree must be in [1, " + std::to_string(kMaxSplineOrder - 1) + "]");
  }
  for (std::size_t k = 0; k < interior.size(); ++k) {
    if (!(interior[k] > t1 && interior[k] < tmax)) {
      throw std::invalid_argument("interior knots must lie strictly inside (t1, tmax)");
    }
    if (k > 0 && !(interior[k] > interior[k - 1])) {
      throw std::invalid_argument("interior knots must be strictly increasing");
    }
  }
  KnotVector kv;
  kv.degree = degree;
  kv.t1 = t1;
  kv.tmax = tmax;
  kv.interior = std::move(interior);
  kv.full.reserve(kv.interior.size() + 2 * static_cast<std::size_t>(degree + 1));
  kv.full.insert(kv.full.end(), static_cast<std::size_t>(degree + 1), t1);
  kv.full.insert(kv.full.end(), kv.interior.begin(), kv.interior.end());
  kv.full.insert(kv.full.end(), static_cast<std::size_t>(degree + 1), tmax);
  return kv;
}

/// Equally spaced interior knots on [t1, tmax].
inline KnotVector build_knots(double t1, double tmax, int n_interior, int degree = 3) {
  if (!std::isfinite(t1) || !std::isfinite(tmax) || !(tmax > t1)) {
    throw SpanError("knot span must be finite with tmax > t1");
  }
  if (n_interior < 0) {
    throw std::invalid_argument("number of interior knots must be non-negative");
  }
  std::vector<double> interior(static_cast<std::size_t>(n_interior));
  const double step = (tmax - t1) / static_cast<double>(n_interior + 1);
  for (int k = 0; k < n_interior; ++k) {
    interior[static_cast<std::size_t>(k)] = t1 + step * static_cast<double>(k + 1);
  }
  return make_knots(t1, tmax, std::move(interior), degree);
}

/// The nonzero stretch of a basis (or derivative) vector: entries
/// `values[0..count)` belong to basis indices `first..first+count)`.
struct SparseRow {
  std::size_t first = 0;
  int count = 0;
  std::array<double, kMaxSplineOrder> values{};

  [[nodiscard]] double dot(std::span<const double> coef) const {
    double s = 0.0;
    for (int r = 0; r < count; ++r) {
      s += values[static_cast<std::size_t>(r)] * coef[first + static_cast<std::size_t>(r)];
    }
    return s;
  }

  /// Entry for basis index `l`, zero outside the stretch.
  [[nodiscard]] double at(std::size_t l) const {
    if (l < first || l >= first + static_cast<std::size_t>(count)) return 0.0;
    return values[l - first];
  }
};

namespace detail {

// Index s with full[s] <= t < full[s+1]; the last nondegenerate interval is closed at tmax.
inline std::size_t find_span(const KnotVector& kv, double t) {
  const auto& u = kv.full;
  const std::size_t p = static_cast<std::size_t>(kv.degree);
  const std::size_t n = kv.basis_count() - 1;
  if (t >= kv.tmax) return n;
  auto it = std::upper_bound(u.begin() + static_cast<std::ptrdiff_t>(p), u.begin() + static_cast<std::ptrdiff_t>(n + 1), t);
  return static_cast<std::size_t>(it - u.begin()) - 1;
}

// Triangular Cox-de Boor recursion: the degree-`deg` basis functions that are
// nonzero on span s, i.e. N_{s-deg..s, deg}(t).
inline void nonzero_basis(const std::vector<double>& u, std::size_t s, double t, int deg, double* out) {
  std::array<double, kMaxSplineOrder> left{};
  std::array<double, kMaxSplineOrder> right{};
  out[0] = 1.0;
  for (int j = 1; j <= deg; ++j) {
    const auto uj = static_cast<std::size_t>(j);
    left[uj] = t - u[s + 1 - uj];
    right[uj] = u[s + uj] - t;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const auto ur = static_cast<std::size_t>(r);
      const double temp = out[r] / (right[ur + 1] + left[uj - ur]);
      out[r] = saved + right[ur + 1] * temp;
      saved = left[uj - ur] * temp;
    }
    out[j] = saved;
  }
}

inline void check_domain(const KnotVector& kv, double t) {
  if (!(t >= kv.t1 && t <= kv.tmax)) {
    throw DomainError("time " + std::to_string(t) + " outside spline span [" + std::to_string(kv.t1) + ", " +
                      std::to_string(kv.tmax) + "]");
  }
}

}  // namespace detail

/// Nonzero basis values at t.
inline SparseRow basis_row(const KnotVector& kv, double t) {
  detail::check_domain(kv, t);
  const std::size_t s = detail::find_span(kv, t);
  SparseRow row;
  row.first = s - static_cast<std::size_t>(kv.degree);
  row.count = kv.degree + 1;
  detail::nonzero_basis(kv.full, s, t, kv.degree, row.values.data());
  return row;
}

/// Nonzero first-derivative values at t, from
/// N'_{i,p} = p N_{i,p-1}/(u_{i+p}-u_i) - p N_{i+1,p-1}/(u_{i+p+1}-u_{i+1}).
inline SparseRow basis_deriv_row(const KnotVector& kv, double t) {
  detail::check_domain(kv, t);
  const auto& u = kv.full;
  const int p = kv.degree;
  const std::size_t s = detail::find_span(kv, t);
  std::array<double, kMaxSplineOrder> lower{};
  detail::nonzero_basis(u, s, t, p - 1, lower.data());
  // lower[q] = N_{s-p+1+q, p-1}, q = 0..p-1
  SparseRow row;
  row.first = s - static_cast<std::size_t>(p);
  row.count = p + 1;
  for (int r = 0; r <= p; ++r) {
    const std::size_t i = row.first + static_cast<std::size_t>(r);
    const double left_n = (r >= 1) ? lower[static_cast<std::size_t>(r - 1)] : 0.0;
    const double right_n = (r <= p - 1) ? lower[static_cast<std::size_t>(r)] : 0.0;
    const double d1 = u[i + static_cast<std::size_t>(p)] - u[i];
    const double d2 = u[i + static_cast<std::size_t>(p) + 1] - u[i + 1];
    double v = 0.0;
    if (d1 > 0.0) v += p * left_n / d1;
    if (d2 > 0.0) v -= p * right_n / d2;
    row.values[static_cast<std::size_t>(r)] = v;
  }
  return row;
}

inline std::vector<double> densify(const SparseRow& row, std::size_t size) {
  std::vector<double> out(size, 0.0);
  for (int r = 0; r < row.count; ++r) out[row.first + static_cast<std::size_t>(r)] = row.values[static_cast<std::size_t>(r)];
  return out;
}

/// All L basis values at t.
inline std::vector<double> basis_eval(const KnotVector& kv, double t) { return densify(basis_row(kv, t), kv.basis_count()); }

/// All L basis first derivatives at t.
inline std::vector<double> basis_deriv(const KnotVector& kv, double t) {
  return densify(basis_deriv_row(kv, t), kv.basis_count());
}

/// Row j holds the basis values at times[j].
inline Eigen::MatrixXd design_matrix(const KnotVector& kv, std::span<const double> times) {
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(times.size()), static_cast<Eigen::Index>(kv.basis_count()));
  for (std::size_t j = 0; j < times.size(); ++j) {
    const SparseRow row = basis_row(kv, times[j]);
    for (int r = 0; r < row.count; ++r) {
      b(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(row.first) + r) = row.values[static_cast<std::size_t>(r)];
    }
  }
  return b;
}

/// Least-squares spline coefficients. Solves the normal equations; a 1e-10
/// ridge (relative to the mean Gram diagonal) is added when they are singular.
inline std::vector<double> ls_fit(const KnotVector& kv, std::span<const double> times, std::span<const double> y) {
  if (times.size() != y.size()) throw std::invalid_argument("ls_fit: times and values differ in length");
  const Eigen::MatrixXd b = design_matrix(kv, times);
  const Eigen::VectorXd rhs = b.transpose() * Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
  Eigen::MatrixXd gram = b.transpose() * b;
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success || llt.rcond() < 1e-13) {
    const double scale = std::max(1.0, gram.trace() / static_cast<double>(gram.rows()));
    gram.diagonal().array() += 1e-10 * scale;
    llt.compute(gram);
  }
  const Eigen::VectorXd c = llt.solve(rhs);
  return {c.data(), c.data() + c.size()};
}

/// A spline basis for one DE component.
class SplineBasis {
 public:
  SplineBasis() = default;
  explicit SplineBasis(KnotVector knots) : knots_(std::move(knots)) {}

  [[nodiscard]] const KnotVector& knots() const { return knots_; }
  [[nodiscard]] std::size_t size() const { return knots_.basis_count(); }
  [[nodiscard]] double t1() const { return knots_.t1; }
  [[nodiscard]] double tmax() const { return knots_.tmax; }

  [[nodiscard]] SparseRow row(double t) const { return basis_row(knots_, t); }
  [[nodiscard]] SparseRow deriv_row(double t) const { return basis_deriv_row(knots_, t); }

  [[nodiscard]] double value(std::span<const double> coef, double t) const { return row(t).dot(coef); }
  [[nodiscard]] double derivative(std::span<const double> coef, double t) const { return deriv_row(t).dot(coef); }

 private:
  KnotVector knots_;
};

}  // namespace smcde
