#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "smcde/bspline.hpp"
#include "smcde/random.hpp"

using namespace smcde;

TEST(BuildKnots, BasisCountsOfPublishedSetups) {
  EXPECT_EQ(build_knots(0.0, 1.0, 9, 3).basis_count(), 13u);
  EXPECT_EQ(build_knots(0.0, 60.0, 14, 3).basis_count(), 18u);
  EXPECT_EQ(build_knots(0.0, 7.5, 0, 3).basis_count(), 4u);
  EXPECT_EQ(build_knots(0.0, 500.0, 24, 3).basis_count(), 28u);
  EXPECT_EQ(build_knots(0.0, 100.0, 34, 3).basis_count(), 38u);
}

TEST(BuildKnots, EquallySpacedInteriorAndClampedBoundary) {
  const KnotVector kv = build_knots(0.0, 60.0, 14, 3);
  ASSERT_EQ(kv.interior.size(), 14u);
  for (std::size_t k = 0; k < kv.interior.size(); ++k) EXPECT_NEAR(kv.interior[k], 4.0 * static_cast<double>(k + 1), 1e-12);
  EXPECT_TRUE(std::is_sorted(kv.full.begin(), kv.full.end()));
  EXPECT_EQ(kv.full.size(), kv.basis_count() + 4);
  for (int k = 0; k < 4; ++k) {
    EXPECT_EQ(kv.full[static_cast<std::size_t>(k)], 0.0);
    EXPECT_EQ(kv.full[kv.full.size() - 1 - static_cast<std::size_t>(k)], 60.0);
  }
}

TEST(BuildKnots, RejectsBadSpans) {
  EXPECT_THROW(build_knots(1.0, 0.0, 3, 3), SpanError);
  EXPECT_THROW(build_knots(0.0, 0.0, 3, 3), SpanError);
  EXPECT_THROW(build_knots(0.0, NAN, 3, 3), SpanError);
  EXPECT_THROW(build_knots(0.0, INFINITY, 3, 3), SpanError);
  EXPECT_THROW(build_knots(0.0, 1.0, -1, 3), std::invalid_argument);
}

TEST(BasisEval, LinearHatFunctionsByHand) {
  const KnotVector kv = make_knots(0.0, 1.0, {0.5}, 1);
  const auto v = basis_eval(kv, 0.25);
  ASSERT_EQ(v.size(), 3u);
  EXPECT_NEAR(v[0], 0.5, 1e-15);
  EXPECT_NEAR(v[1], 0.5, 1e-15);
  EXPECT_NEAR(v[2], 0.0, 1e-15);
}

TEST(BasisEval, EndpointsInterpolateClampedCoefficients) {
  const KnotVector kv = build_knots(0.0, 60.0, 14, 3);
  const auto left = basis_eval(kv, 0.0);
  const auto right = basis_eval(kv, 60.0);
  EXPECT_DOUBLE_EQ(left.front(), 1.0);
  EXPECT_DOUBLE_EQ(right.back(), 1.0);
  EXPECT_DOUBLE_EQ(std::accumulate(left.begin() + 1, left.end(), 0.0), 0.0);
  EXPECT_DOUBLE_EQ(std::accumulate(right.begin(), right.end() - 1, 0.0), 0.0);
}

TEST(BasisEval, OutsideSpanIsAnError) {
  const KnotVector kv = build_knots(0.0, 1.0, 3, 3);
  EXPECT_THROW(basis_eval(kv, -0.1), DomainError);
  EXPECT_THROW(basis_eval(kv, 1.1), DomainError);
}

TEST(BasisProperties, PartitionOfUnityAndBandedSupport) {
  Rng rng = make_stream(11, 0, 0);
  for (int degree : {1, 2, 3, 4}) {
    const KnotVector kv = build_knots(-2.0, 13.0, 9, degree);
    for (int n = 0; n < 1000; ++n) {
      const double t = -2.0 + 15.0 * uniform01(rng);
      const auto v = basis_eval(kv, t);
      EXPECT_NEAR(std::accumulate(v.begin(), v.end(), 0.0), 1.0, 1e-12);
      const auto nz = std::count_if(v.begin(), v.end(), [](double x) { return x != 0.0; });
      EXPECT_LE(nz, degree + 1);
      for (double x : v) EXPECT_GE(x, 0.0);
      const auto d = basis_deriv(kv, t);
      EXPECT_NEAR(std::accumulate(d.begin(), d.end(), 0.0), 0.0, 1e-10);
    }
  }
}

TEST(BasisProperties, DerivativeMatchesCentralDifferences) {
  Rng rng = make_stream(12, 0, 0);
  const KnotVector kv = build_knots(0.0, 60.0, 14, 3);
  const SplineBasis basis(kv);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> c(basis.size());
    for (double& v : c) v = normal(rng, 0.0, 3.0);
    for (int n = 0; n < 50; ++n) {
      const double t = 0.01 + 59.98 * uniform01(rng);
      const double h = 1e-5;
      const double fd = (basis.value(c, t + h) - basis.value(c, t - h)) / (2.0 * h);
      const double an = basis.derivative(c, t);
      EXPECT_NEAR(an, fd, 1e-6 * std::max(1.0, std::abs(an)));
    }
  }
}

TEST(BasisProperties, LinearFunctionsHaveConstantDerivative) {
  const KnotVector kv = build_knots(0.0, 10.0, 6, 3);
  const SplineBasis basis(kv);
  std::vector<double> t;
  std::vector<double> y;
  for (int j = 0; j <= 40; ++j) {
    t.push_back(0.25 * j);
    y.push_back(3.0 - 0.7 * t.back());
  }
  const auto c = ls_fit(kv, t, y);
  for (double s = 0.0; s <= 10.0; s += 0.37) {
    EXPECT_NEAR(basis.derivative(c, s), -0.7, 1e-9);
    EXPECT_NEAR(basis.value(c, s), 3.0 - 0.7 * s, 1e-9);
  }
}

TEST(DesignMatrix, ShapeRowsAndRowSums) {
  const KnotVector kv = build_knots(0.0, 60.0, 14, 3);
  std::vector<double> t(121);
  for (int j = 0; j < 121; ++j) t[static_cast<std::size_t>(j)] = 0.5 * j;
  const Eigen::MatrixXd b = design_matrix(kv, t);
  EXPECT_EQ(b.rows(), 121);
  EXPECT_EQ(b.cols(), 18);
  for (Eigen::Index r = 0; r < b.rows(); ++r) EXPECT_NEAR(b.row(r).sum(), 1.0, 1e-12);
  const auto row = basis_eval(kv, t[37]);
  for (std::size_t l = 0; l < row.size(); ++l) EXPECT_EQ(b(37, static_cast<Eigen::Index>(l)), row[l]);
}

TEST(LsFit, RecoversExactCoefficients) {
  Rng rng = make_stream(13, 0, 0);
  const KnotVector kv = build_knots(0.0, 60.0, 14, 3);
  const SplineBasis basis(kv);
  std::vector<double> cstar(basis.size());
  for (double& v : cstar) v = normal(rng, 0.0, 5.0);
  std::vector<double> t;
  std::vector<double> y;
  for (int j = 0; j < 121; ++j) {
    t.push_back(0.5 * j);
    y.push_back(basis.value(cstar, t.back()));
  }
  const auto c = ls_fit(kv, t, y);
  for (std::size_t l = 0; l < c.size(); ++l) EXPECT_NEAR(c[l], cstar[l], 1e-8);
}

TEST(LsFit, ReproducesConstantsAndCubics) {
  const KnotVector kv = build_knots(0.0, 5.0, 4, 3);
  const SplineBasis basis(kv);
  std::vector<double> t;
  std::vector<double> y5;
  std::vector<double> cubic;
  auto f = [](double s) { return 1.0 - 2.0 * s + 0.3 * s * s - 0.05 * s * s * s; };
  for (int j = 0; j <= 50; ++j) {
    t.push_back(0.1 * j);
    y5.push_back(5.0);
    cubic.push_back(f(t.back()));
  }
  const auto c5 = ls_fit(kv, t, y5);
  const auto cc = ls_fit(kv, t, cubic);
  for (double s = 0.0; s <= 5.0; s += 0.013) {
    EXPECT_NEAR(basis.value(c5, s), 5.0, 1e-9);
    EXPECT_NEAR(basis.value(cc, s), f(s), 1e-8);
  }
}

TEST(LsFit, FitIsALocalMinimumOfTheResidual) {
  Rng rng = make_stream(14, 0, 0);
  const KnotVector kv = build_knots(0.0, 10.0, 8, 3);
  const SplineBasis basis(kv);
  std::vector<double> t;
  std::vector<double> y;
  for (int j = 0; j < 80; ++j) {
    t.push_back(10.0 * j / 79.0);
    y.push_back(std::sin(t.back()) + normal(rng, 0.0, 0.2));
  }
  const auto c = ls_fit(kv, t, y);
  auto rss = [&](const std::vector<double>& coef) {
    double s = 0.0;
    for (std::size_t j = 0; j < t.size(); ++j) s += std::pow(y[j] - basis.value(coef, t[j]), 2);
    return s;
  };
  const double best = rss(c);
  for (int k = 0; k < 100; ++k) {
    auto p = c;
    for (double& v : p) v += normal(rng, 0.0, 0.01);
    EXPECT_GE(rss(p), best);
  }
}

TEST(LsFit, SparseDataStillSolvable) {
  const KnotVector kv = build_knots(0.0, 10.0, 8, 3);
  const std::vector<double> t = {1.0, 2.0, 3.0};
  const std::vector<double> y = {1.0, 2.0, 1.5};
  const auto c = ls_fit(kv, t, y);
  for (double v : c) EXPECT_TRUE(std::isfinite(v));
}
