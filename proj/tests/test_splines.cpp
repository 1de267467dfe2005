#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace jlcm;
using namespace jlcm_test;

TEST(ISpline, BoundaryValues) {
  for (const auto& s : spline_bases()) {
    for (double v : ispline_basis(s.low, s)) EXPECT_EQ(v, 0.0);
    for (double v : ispline_basis(s.high, s)) EXPECT_EQ(v, 1.0);
  }
}

TEST(ISpline, ComponentwiseMonotone) {
  std::mt19937_64 rng(42);
  for (const auto& s : spline_bases()) {
    std::uniform_real_distribution<double> u(s.low, s.high);
    for (int r = 0; r < 1000; ++r) {
      double a = u(rng), b = u(rng);
      if (a > b) std::swap(a, b);
      const auto ia = ispline_basis(a, s), ib = ispline_basis(b, s);
      for (std::size_t m = 0; m < ia.size(); ++m) EXPECT_LE(ia[m], ib[m]);
    }
  }
}

TEST(ISpline, MatchesIntegratedMSpline) {
  for (const auto& s : spline_bases())
    for (double f : {0.17, 0.5, 0.83}) {
      const double x = s.low + f * (s.high - s.low);
      const auto is = ispline_basis(x, s);
      for (int m = 0; m < s.size(); ++m) EXPECT_NEAR(is[static_cast<std::size_t>(m)], integrate_m(s, m, s.low, x), 1e-10);
    }
}

TEST(ISpline, OutsideBoundaryThrows) {
  const auto s = spline_bases()[1];
  EXPECT_THROW(ispline_basis(-0.01, s), RangeError);
  EXPECT_THROW(ispline_basis(1.01, s), RangeError);
}

TEST(MSpline, UnitIntegrals) {
  for (const auto& s : spline_bases())
    for (int m = 0; m < s.size(); ++m) EXPECT_NEAR(integrate_m(s, m, s.low, s.high), 1.0, 1e-8);
}

TEST(MSpline, SupportAndSign) {
  const auto s = spline_bases()[2];
  for (double v : mspline_basis(s.low - 0.5, s)) EXPECT_EQ(v, 0.0);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(s.low, s.high);
  for (int r = 0; r < 200; ++r)
    for (double v : mspline_basis(u(rng), s)) EXPECT_GE(v, 0.0);
}

TEST(Link, Identity) {
  LinkFunction f;
  const auto v = link_apply(3.7, f);
  EXPECT_EQ(v.transformed, 3.7);
  EXPECT_EQ(v.jacobian, 1.0);
  EXPECT_EQ(link_invert(-2.25, f).value, -2.25);
}

TEST(Link, Linear) {
  LinkFunction f;
  f.kind = LinkKind::linear;
  f.intercept = 1.0;
  f.slope = 2.0;
  const auto v = link_apply(5.0, f);
  EXPECT_EQ(v.transformed, 11.0);
  EXPECT_EQ(v.jacobian, 2.0);
}

TEST(Link, ISplineJacobianPositiveAndRoundTrip) {
  LinkFunction f;
  f.kind = LinkKind::isplines;
  f.basis = spline_bases()[3];
  f.intercept = -2.0;
  f.coefficients = {0.4, 1.3, 0.2, 2.0, 0.7, 0.9, 1.1, 0.3};
  ASSERT_EQ(static_cast<int>(f.coefficients.size()), f.basis.size());
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(f.basis.low, f.basis.high);
  for (int r = 0; r < 100; ++r) {
    const double y = u(rng);
    const auto v = link_apply(y, f);
    EXPECT_GT(v.jacobian, 0.0);
    const auto back = link_invert(v.transformed, f);
    EXPECT_FALSE(back.out_of_range);
    EXPECT_NEAR(back.value, y, 1e-8);
  }
}

TEST(Link, InvertAboveRangeClamps) {
  LinkFunction f;
  f.kind = LinkKind::isplines;
  f.basis = spline_bases()[1];
  f.coefficients.assign(static_cast<std::size_t>(f.basis.size()), 1.0);
  const double top = link_apply(f.basis.high, f).transformed;
  const auto r = link_invert(top + 1.0, f);
  EXPECT_EQ(r.value, f.basis.high);
  EXPECT_TRUE(r.out_of_range);
  EXPECT_THROW(link_apply(1.5, f), RangeError);
}

TEST(Knots, QuantilesAndFallback) {
  const auto k = quantile_knots({1, 2, 3, 4, 5, 6, 7, 8, 9}, 3, 1, 9);
  ASSERT_EQ(k.size(), 3u);
  EXPECT_DOUBLE_EQ(k[0], 3.0);
  EXPECT_DOUBLE_EQ(k[1], 5.0);
  EXPECT_DOUBLE_EQ(k[2], 7.0);
  const auto tied = quantile_knots({0, 0, 0, 0, 10}, 2, 0, 10);
  EXPECT_NEAR(tied[0], 10.0 / 3.0, 1e-12);
  EXPECT_NEAR(tied[1], 20.0 / 3.0, 1e-12);
}
