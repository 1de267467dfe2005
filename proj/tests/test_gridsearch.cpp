#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace jlcm;
using namespace jlcm_test;

TEST(Gridsearch, SelectedIsBestConverged) {
  const auto gs = gridsearch(fit_bumpy, 40, 11, spread);
  ASSERT_GE(gs.best, 0);
  std::set<long> modes;
  for (const auto& s : gs.starts) {
    if (s.status != OptimizerStatus::converged) continue;
    EXPECT_GE(gs.result.objective, s.loglik);
    modes.insert(std::lround(s.loglik * 1e4));
  }
  EXPECT_GT(modes.size(), 1u);
  EXPECT_EQ(gs.result.objective, gs.starts[static_cast<std::size_t>(gs.best)].loglik);
}

TEST(Gridsearch, IdenticalSeedsBitIdentical) {
  EXPECT_TRUE(same_gridsearch(gridsearch(fit_bumpy, 25, 5, spread), gridsearch(fit_bumpy, 25, 5, spread)));
  EXPECT_TRUE(same_gridsearch(gridsearch(fit_bumpy, 25, 5, spread, 1), gridsearch(fit_bumpy, 25, 5, spread, 3)));
}

TEST(Gridsearch, DifferentSeedsDifferentStarts) {
  const auto a = gridsearch(fit_bumpy, 5, 1, spread), b = gridsearch(fit_bumpy, 5, 2, spread);
  EXPECT_NE(a.starts[0].seed, b.starts[0].seed);
}

TEST(Gridsearch, SingleStartMatchesDirectFit) {
  const auto gs = gridsearch(fit_bumpy, 1, 9, spread);
  std::mt19937_64 rng(derive_seed(9, 0));
  const auto direct = fit_bumpy(0, spread(0, rng));
  EXPECT_EQ(gs.best, 0);
  EXPECT_EQ(gs.result.theta, direct.theta);
  EXPECT_EQ(gs.result.objective, direct.objective);
}

TEST(Gridsearch, NoConvergedStartThrows) {
  const FitOnce never = [](int, const Eigen::VectorXd& x0) {
    OptimizerSettings s;
    s.max_iterations = 0;
    return marquardt_levenberg(bumpy, x0, s);
  };
  try {
    gridsearch(never, 4, 1, spread);
    FAIL();
  } catch (const ConvergenceError& e) {
    EXPECT_NE(e.details().find("start 3"), std::string::npos);
  }
  const auto loose = gridsearch(never, 4, 1, spread, 1, false);
  EXPECT_EQ(loose.result.status, OptimizerStatus::max_iterations);
}

TEST(Gridsearch, FailingStartRecorded) {
  const FitOnce flaky = [](int start, const Eigen::VectorXd& x0) {
    if (start == 2) throw NumericError("boom", 0);
    return fit_bumpy(start, x0);
  };
  const auto gs = gridsearch(flaky, 4, 1, spread);
  EXPECT_EQ(gs.starts[2].status, OptimizerStatus::degenerate);
  EXPECT_EQ(gs.starts[2].message, "boom");
  EXPECT_NE(gs.best, 2);
}

TEST(Gridsearch, TwoClassModelContract) {
  auto sc = load_scenario(std::string(JLCM_SOURCE_DIR) + "/scenarios/three_class_two_markers.json");
  sc.N = 80;
  const auto sample = simulate_sample(sc, 21);
  FitSettings fs;
  fs.n_starts = 4;
  fs.seed = 3;
  const auto one = fit_model(sample.dataset, sc.model, 1, fs);
  ASSERT_TRUE(one.converged());
  const auto a = fit_model(sample.dataset, sc.model, 2, fs, &one);
  const auto b = fit_model(sample.dataset, sc.model, 2, fs, &one);
  EXPECT_EQ(a.theta, b.theta);
  EXPECT_EQ(a.loglik, b.loglik);
  for (const auto& s : a.starts) {
    if (s.status == OptimizerStatus::converged) EXPECT_GE(a.loglik, s.loglik);
    EXPECT_TRUE(s.monotone);
  }
}
