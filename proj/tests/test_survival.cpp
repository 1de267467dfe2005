#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace jlcm;
using namespace jlcm_test;

TEST(Hazard, ExponentialSpecialCase) {
  const auto c = weibull(0.37, 1.0);
  for (double t : {0.01, 1.0, 7.5}) EXPECT_NEAR(baseline_hazard(t, c, weibull_model()), 0.37, 1e-15);
  EXPECT_THROW(baseline_hazard(0.0, c, weibull_model()), std::domain_error);
}

TEST(Hazard, ProportionalReferenceEqualsShared) {
  auto c = weibull(0.2, 1.6);
  const double base = baseline_hazard(2.0, c, weibull_model());
  c.log_ratio = 0.0;
  EXPECT_EQ(baseline_hazard(2.0, c, weibull_model()), base);
  c.log_ratio = 0.4;
  EXPECT_NEAR(baseline_hazard(2.0, c, weibull_model()), base * std::exp(0.4), 1e-14);
}

TEST(Hazard, SplineNonnegative) {
  CauseParams c;
  c.baseline = {0.0, 0.3, 0.0, 1.2, 0.05, 0.0, 0.4};
  ASSERT_EQ(static_cast<int>(c.baseline.size()), spline_model().basis.size());
  for (double t = 0.01; t < 12.0; t += 0.37) EXPECT_GE(baseline_hazard(t, c, spline_model()), 0.0);
}

TEST(CumulativeHazard, ZeroAtOrigin) {
  EXPECT_EQ(cumulative_hazard(0.0, weibull(0.5, 2.0), weibull_model()), 0.0);
}

TEST(CumulativeHazard, WeibullSpotValue) {
  const auto c = weibull(0.5, 2.0);
  const double want = quad_weibull(c, 3.0);
  EXPECT_NEAR(cumulative_hazard(3.0, c, weibull_model()), want, 1e-8 * want);
  EXPECT_NEAR(want, 2.25, 1e-12);
}

TEST(CumulativeHazard, WeibullRandomDrawsMatchQuadrature) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> scale(0.02, 1.5), shape(0.6, 3.0), time(0.05, 12.0);
  for (int r = 0; r < 50; ++r) {
    const auto c = weibull(scale(rng), shape(rng));
    const double t = time(rng);
    const double want = quad_weibull(c, t);
    EXPECT_NEAR(cumulative_hazard(t, c, weibull_model()), want, 1e-8 * want) << "draw " << r;
  }
}

TEST(CumulativeHazard, SplineRandomDrawsMatchQuadrature) {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> coef(0.0, 2.0), time(0.05, 10.0);
  const auto m = spline_model();
  for (int r = 0; r < 50; ++r) {
    CauseParams c;
    for (int j = 0; j < m.basis.size(); ++j) c.baseline.push_back(coef(rng));
    c.log_ratio = 0.3;
    const double t = time(rng);
    const double want = quad_spline(c, t);
    EXPECT_NEAR(cumulative_hazard(t, c, m), want, 1e-8 * want) << "draw " << r;
  }
}

TEST(Survival, Values) {
  HazardClassParams one{{weibull(0.3, 1.0)}};
  const Eigen::VectorXd none(0);
  EXPECT_EQ(subject_survival(0.0, one, weibull_model(), none), 1.0);
  EXPECT_NEAR(subject_survival(2.0, one, weibull_model(), none), std::exp(-0.6), 1e-15);
  HazardClassParams a{{weibull(0.3, 1.2)}}, b{{weibull(0.1, 0.8)}}, both{{weibull(0.3, 1.2), weibull(0.1, 0.8)}};
  for (double t : {0.5, 2.0, 6.0})
    EXPECT_NEAR(subject_survival(t, both, weibull_model(), none),
                subject_survival(t, a, weibull_model(), none) * subject_survival(t, b, weibull_model(), none), 1e-15);
}

TEST(EventContribution, ClosedForms) {
  HazardClassParams hc{{weibull(0.4, 1.0)}};
  const Eigen::VectorXd none(0);
  EXPECT_NEAR(event_log_contribution(3.0, 0, hc, weibull_model(), none), -1.2, 1e-14);
  EXPECT_NEAR(event_log_contribution(3.0, 1, hc, weibull_model(), none), std::log(0.4) - 1.2, 1e-14);
}

TEST(EventContribution, WeibullTwoCausesDirect) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.1, 2.0);
  for (int r = 0; r < 20; ++r) {
    const double s1 = u(rng) * 0.3, k1 = u(rng), s2 = u(rng) * 0.3, k2 = u(rng), t = 5.0 * u(rng);
    const double d1 = u(rng) - 1.0, d2 = u(rng) - 1.0, x = u(rng);
    HazardClassParams hc{{weibull(s1, k1), weibull(s2, k2)}};
    hc.causes[0].delta = Eigen::VectorXd::Constant(1, d1);
    hc.causes[1].delta = Eigen::VectorXd::Constant(1, d2);
    const Eigen::VectorXd xt = Eigen::VectorXd::Constant(1, x);
    const double H1 = std::pow(s1 * t, k1) * std::exp(d1 * x), H2 = std::pow(s2 * t, k2) * std::exp(d2 * x);
    const double h2 = s2 * k2 * std::pow(s2 * t, k2 - 1.0) * std::exp(d2 * x);
    EXPECT_NEAR(event_log_contribution(t, 2, hc, weibull_model(), xt), std::log(h2) - H1 - H2, 1e-10);
    EXPECT_NEAR(event_log_contribution(t, 0, hc, weibull_model(), xt), -H1 - H2, 1e-10);
  }
}

TEST(EventContribution, ZeroHazardAtEventIsMinusInfinity) {
  CauseParams c;
  c.baseline.assign(static_cast<std::size_t>(spline_model().basis.size()), 0.0);
  HazardClassParams hc{{c}};
  EXPECT_EQ(event_log_contribution(2.0, 1, hc, spline_model(), Eigen::VectorXd(0)),
            -std::numeric_limits<double>::infinity());
}

TEST(CumulativeIncidence, SingleCauseIsOneMinusSurvival) {
  HazardClassParams hc{{weibull(0.25, 1.4)}};
  const Eigen::VectorXd none(0);
  const std::vector<double> grid{0.0, 1.0, 2.5, 6.0};
  const auto f = cumulative_incidence(grid, 0, hc, weibull_model(), none);
  for (std::size_t j = 0; j < grid.size(); ++j)
    EXPECT_NEAR(f[j], 1.0 - subject_survival(grid[j], hc, weibull_model(), none), 1e-7);
}
