#include <gtest/gtest.h>

#include "support.hpp"

using namespace jlcm;
using namespace jlcm_test;

namespace {

Eigen::MatrixXd crisp(int N, int G) {
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(N, G);
  for (int i = 0; i < N; ++i) P(i, (i * 7) % G) = 1.0;
  return P;
}

const char* kTwoClassSpec = R"({
  "spec_version": 1, "classes": 2,
  "dimensions": [{"name": "d", "fixed": ["time"], "random": ["time"]}],
  "markers": [{"name": "y", "dimension": "d", "link": "identity"}],
  "hazard": {"family": "weibull", "causes": 1}
})";

struct TwoClass {
  Dataset ds = lmm_dataset(11);
  JointModel model = prepare_model(ds, spec_from(kTwoClassSpec), 2);
  Eigen::VectorXd theta;

  TwoClass() {
    auto p = blank_params(model.spec());
    p.xi(1, 0) = 0.3;
    p.dims[0][0].beta << 1.5, 0.2;
    p.dims[0][1].beta << 3.0, 0.8;
    p.dims[0][0].U << 0.8, 0.0, 0.0, 0.2;
    p.dims[0][1].U << 0.8, 0.0, 0.0, 0.2;
    p.sigma[0] = 0.7;
    p.hazard[1].causes[0].baseline = {0.1, 1.2};
    theta = model.layout().pack(p);
  }
};

}  // namespace

TEST(Criteria, BicSpotValue) {
  EXPECT_NEAR(bic(-100.0, 5, 100), 223.026, 1e-3);
  EXPECT_DOUBLE_EQ(aic(-100.0, 5), 210.0);
}

TEST(Criteria, CrispPosteriors) {
  for (int G : {2, 3, 5}) {
    const auto pc = classify(crisp(40, G));
    const auto row = information_criteria(-321.5, 17, pc);
    EXPECT_EQ(row.icl, row.bic);
    ASSERT_TRUE(row.entropy.has_value());
    EXPECT_EQ(*row.entropy, 1.0);
  }
}

TEST(Criteria, UniformPosteriors) {
  for (int G : {2, 4}) {
    const auto row = information_criteria(-50.0, 3, classify(Eigen::MatrixXd::Constant(25, G, 1.0 / G)));
    EXPECT_NEAR(*row.entropy, 0.0, 1e-14);
    EXPECT_NEAR(row.icl - row.bic, 2.0 * 25 * std::log(G), 1e-10);
  }
}

TEST(Criteria, OneClassHasNoEntropy) {
  const auto row = information_criteria(-10.0, 2, classify(Eigen::MatrixXd::Ones(4, 1)));
  EXPECT_FALSE(row.entropy.has_value());
  EXPECT_EQ(row.icl, row.bic);
}

TEST(Classify, TiesGoToLowestClass) {
  Eigen::MatrixXd P(3, 3);
  P << 0.5, 0.5, 0.0,
       0.2, 0.4, 0.4,
       1.0 / 3, 1.0 / 3, 1.0 / 3;
  const auto pc = classify(P);
  EXPECT_EQ(pc.assigned, (std::vector<int>{0, 1, 0}));
  EXPECT_EQ(pc.counts, (std::vector<int>{2, 1, 0}));
  EXPECT_NEAR(pc.table(0, 0), (0.5 + 1.0 / 3) / 2, 1e-15);
  EXPECT_EQ(pc.table.row(2), Eigen::RowVector3d::Zero());
}

TEST(Posterior, RowsSumToOneAndMatchBayes) {
  const TwoClass tc;
  const auto pc = posterior_probs(tc.model, tc.theta);
  ASSERT_EQ(pc.probs.rows(), 20);
  const auto th = span_of(tc.theta);
  for (std::size_t i = 0; i < tc.model.subjects(); ++i) {
    EXPECT_NEAR(pc.probs.row(static_cast<Eigen::Index>(i)).sum(), 1.0, 1e-12);
    const auto ct = tc.model.class_terms(i, th);
    const double l = log_sum_exp(ct.joint);
    for (int g = 0; g < 2; ++g) EXPECT_NEAR(pc.probs(static_cast<Eigen::Index>(i), g), std::exp(ct.joint[static_cast<std::size_t>(g)] - l), 1e-12);
  }
  EXPECT_EQ(pc.ids[0], "s100");
}

TEST(Gof, LongitudinalOneClassWeightsAreCounts) {
  const auto ds = lmm_dataset();
  const JointModel model = prepare_model(ds, spec_from(kLmmSpec), 1);
  auto p = blank_params(model.spec());
  p.dims[0][0].beta << 2.0, 0.5;
  const Eigen::VectorXd theta = model.layout().pack(p);
  const auto pc = posterior_probs(model, theta);
  const auto rows = gof_longitudinal(model, theta, pc, 1.0);
  int n = 0;
  double sum_obs = 0.0, want = 0.0;
  for (const auto& r : rows) {
    EXPECT_DOUBLE_EQ(r.weight, r.n_obs);
    n += r.n_obs;
    sum_obs += r.observed * r.weight;
  }
  std::size_t total = 0;
  for (const auto& s : ds.subjects) {
    total += s.observations.size();
    for (const auto& o : s.observations) want += o.value;
  }
  EXPECT_EQ(static_cast<std::size_t>(n), total);
  EXPECT_NEAR(sum_obs, want, 1e-9);
}

TEST(Gof, SurvivalOccurrenceOverExposure) {
  Dataset ds;
  auto a = subject("a", 0.0, 1.5, 1);
  observe(a, "y", 0.0, 1.0);
  auto b = subject("b", 0.5, 3.0, 0);
  observe(b, "y", 0.5, 1.0);
  auto c = subject("c", 0.0, 2.5, 1);
  observe(c, "y", 0.0, 1.0);
  ds.subjects = {a, b, c};
  const JointModel model = prepare_model(ds, spec_from(kLmmSpec), 1);
  const Eigen::VectorXd theta = model.layout().pack(blank_params(model.spec()));
  const auto pc = classify(Eigen::MatrixXd::Ones(3, 1));
  const auto rows = gof_survival(model, theta, pc, 2.0, 50, 1);
  ASSERT_EQ(rows.size(), 2u);
  // [0, 2): a contributes 1.5 with one event, b 1.5, c 2.0.  [2, 4): b 1.0, c 0.5 with one event.
  EXPECT_DOUBLE_EQ(rows[0].exposure, 5.0);
  EXPECT_DOUBLE_EQ(rows[0].events, 1.0);
  EXPECT_DOUBLE_EQ(rows[0].rate, 0.2);
  EXPECT_DOUBLE_EQ(rows[1].exposure, 1.5);
  EXPECT_DOUBLE_EQ(rows[1].rate, 1.0 / 1.5);
  EXPECT_LE(rows[0].lo95, rows[0].hi95);
  // Weibull scale 0.2, shape 1: constant hazard 0.2.
  EXPECT_NEAR(rows[0].predicted, 0.2, 1e-12);
}
