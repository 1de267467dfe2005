#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace jlcm;
using namespace jlcm_test;

TEST(ExternalOutcome, CrispClassesMatchPerClassRegression) {
  const World w(300, 12.0, 0.5, 41);
  const auto m = w.model();
  const auto theta = w.theta(m, 12.0, 0.5);
  const auto pc = posterior_probs(m, theta);
  for (std::size_t i = 0; i < w.cls.size(); ++i) ASSERT_EQ(pc.assigned[i], w.cls[i]);

  const auto eo = world_outcome(w, true, 1.5, 5);
  const auto ef = external_outcome_fit(m, theta, eo);
  ASSERT_EQ(ef.status, OptimizerStatus::converged);
  EXPECT_TRUE(ef.theta_unchanged);

  const Eigen::VectorXd oracle = per_class_regression(w, eo);
  ASSERT_EQ(ef.estimate.size(), 7);
  for (int j = 0; j < 7; ++j) EXPECT_NEAR(ef.estimate(j), oracle(j), 1e-6) << ef.names[static_cast<std::size_t>(j)];
  EXPECT_EQ(ef.names[6], "sigma");
}

TEST(ExternalOutcome, CrispClassesCommonSlope) {
  const World w(200, 12.0, 0.5, 43);
  const auto m = w.model();
  const auto theta = w.theta(m, 12.0, 0.5);
  const auto eo = world_outcome(w, false, 1.0, 6);
  const auto ef = external_outcome_fit(m, theta, eo);
  std::vector<std::pair<double, Eigen::Vector4d>> rows;
  for (std::size_t i = 0; i < w.cls.size(); ++i)
    for (const auto& [y, x] : eo.data.at(w.ds.subjects[i].id)) {
      Eigen::Vector4d r = Eigen::Vector4d::Zero();
      r(w.cls[i]) = 1.0;
      r(3) = x(0);
      rows.emplace_back(y, r);
    }
  Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), 4);
  Eigen::VectorXd Y(X.rows());
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    X.row(r) = rows[static_cast<std::size_t>(r)].second.transpose();
    Y(r) = rows[static_cast<std::size_t>(r)].first;
  }
  const Eigen::Vector4d ols = X.colPivHouseholderQr().solve(Y);
  for (int j = 0; j < 4; ++j) EXPECT_NEAR(ef.estimate(j), ols(j), 1e-6);
}

TEST(ExternalCovariates, CrispClassesMatchMultinomialLogit) {
  const World w(400, 12.0, 0.5, 47);
  const auto m = w.model();
  const auto theta = w.theta(m, 12.0, 0.5);
  const auto ef = external_covariate_fit(m, theta, w.ec);
  ASSERT_EQ(ef.status, OptimizerStatus::converged);
  const auto oracle = multinomial_logit(w.cls, w.x, 3);
  ASSERT_EQ(ef.estimate.size(), oracle.size());
  for (Eigen::Index j = 0; j < oracle.size(); ++j) EXPECT_NEAR(ef.estimate(j), oracle(j), 1e-4) << ef.names[static_cast<std::size_t>(j)];
  EXPECT_TRUE(ef.theta_unchanged);
}

// External data unrelated to class: the class contrast of the outcome intercepts and the
// covariate effects on membership should sit within 2 SE of zero in most replicates.
TEST(External, NullEffectsWithinTwoSe) {
  const auto nc = external_null_replicates(50);
  EXPECT_GE(nc.outcome, 45);
  EXPECT_GE(nc.slope1, 45);
  EXPECT_GE(nc.slope2, 45);
}

TEST(ExternalCovariates, OneClassRejected) {
  const World w(30, 12.0, 0.5, 3);
  const auto m = prepare_model(w.ds, spec_from(kLmmSpec), 1);
  EXPECT_THROW(external_covariate_fit(m, m.layout().pack(blank_params(m.spec())), w.ec), ConfigError);
}

TEST(ExternalCovariates, ReplacedMembershipNoted) {
  const World w(60, 12.0, 0.5, 5);
  const auto m = w.model(true);
  const auto ef = external_covariate_fit(m, w.theta(m, 12.0, 0.5), w.ec);
  ASSERT_FALSE(ef.notes.empty());
  EXPECT_NE(ef.notes[0].find("replaced"), std::string::npos);
}

TEST(ExternalCovariates, MissingSubjectIsDataError) {
  World w(30, 12.0, 0.5, 9);
  w.ec.values.erase(w.ds.subjects[4].id);
  const auto m = w.model();
  EXPECT_THROW(external_covariate_fit(m, w.theta(m, 12.0, 0.5), w.ec), DataError);
}
