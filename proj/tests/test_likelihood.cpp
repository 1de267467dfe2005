#include <gtest/gtest.h>

#include <chrono>

#include "oracles.hpp"

using namespace jlcm;
using namespace jlcm_test;

namespace {

DimensionDesign design(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z, const Eigen::VectorXd& y) {
  DimensionDesign dd;
  dd.X = X;
  dd.Z = Z;
  dd.y = y;
  dd.time = Eigen::VectorXd::LinSpaced(y.size(), 0.0, static_cast<double>(y.size() - 1));
  dd.marker.assign(static_cast<std::size_t>(y.size()), 0);
  return dd;
}

DimensionClassParams dim_params(const Eigen::VectorXd& beta, const Eigen::MatrixXd& U) {
  DimensionClassParams p;
  p.beta = beta;
  p.mu = Eigen::VectorXd::Zero(U.rows());
  p.U = U;
  return p;
}

}  // namespace

TEST(Moments, ZeroRandomVarianceIsIdentity) {
  const auto dd = design(Eigen::MatrixXd::Ones(3, 1), Eigen::MatrixXd::Ones(3, 1), Eigen::VectorXd::Zero(3));
  const auto m = dimension_moments(dd, dim_params(Eigen::VectorXd::Constant(1, 4.0), Eigen::MatrixXd::Zero(1, 1)), {1.0});
  EXPECT_EQ(m.cov, Eigen::MatrixXd::Identity(3, 3));
  EXPECT_EQ(m.mean, Eigen::VectorXd::Constant(3, 4.0));
}

TEST(Moments, RandomInterceptClosedForm) {
  const double b = 1.7, s = 0.4;
  const auto dd = design(Eigen::MatrixXd::Ones(2, 1), Eigen::MatrixXd::Ones(2, 1), Eigen::VectorXd::Zero(2));
  const auto m = dimension_moments(dd, dim_params(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Constant(1, 1, b)), {s});
  Eigen::MatrixXd want(2, 2);
  want << b * b + s * s, b * b, b * b, b * b + s * s;
  EXPECT_TRUE(m.cov.isApprox(want, 1e-15));
}

TEST(LogDensity, SingleStandardObservation) {
  const auto dd = design(Eigen::MatrixXd::Ones(1, 1), Eigen::MatrixXd::Ones(1, 1), Eigen::VectorXd::Zero(1));
  const auto v = dimension_logdensity(dd, dim_params(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Zero(1, 1)),
                                      std::vector<LinkFunction>(1), {1.0});
  EXPECT_NEAR(*v, -0.5 * std::log(2.0 * M_PI), 1e-15);
}

TEST(LogDensity, LinearLinkAddsLogJacobian) {
  const auto dd = design(Eigen::MatrixXd::Ones(1, 1), Eigen::MatrixXd::Ones(1, 1), Eigen::VectorXd::Constant(1, 0.3));
  const auto p = dim_params(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Zero(1, 1));
  LinkFunction lin;
  lin.kind = LinkKind::linear;
  lin.intercept = 0.1;
  lin.slope = 2.0;
  const auto at = design(Eigen::MatrixXd::Ones(1, 1), Eigen::MatrixXd::Ones(1, 1), Eigen::VectorXd::Constant(1, 0.7));
  const double plain = *dimension_logdensity(at, p, std::vector<LinkFunction>(1), {1.0});
  EXPECT_NEAR(*dimension_logdensity(dd, p, {lin}, {1.0}), plain + std::log(2.0), 1e-14);
}

TEST(LogDensity, MatchesDenseOracle) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z(0.0, 1.0);
  for (int r = 0; r < 20; ++r) {
    Eigen::MatrixXd X(3, 2), Z(3, 2);
    Eigen::VectorXd y(3);
    for (int i = 0; i < 3; ++i) {
      const double t = i + 0.5 * std::abs(z(rng));
      X.row(i) << 1.0, t;
      Z.row(i) << 1.0, t;
      y(i) = 3.0 * z(rng);
    }
    Eigen::MatrixXd U(2, 2);
    U << 1.0 + 0.3 * z(rng), 0.2 * z(rng), 0.0, 0.5 + 0.1 * z(rng);
    const Eigen::Vector2d beta(z(rng), z(rng));
    const double s = 0.3 + std::abs(z(rng));
    const auto dd = design(X, Z, y);
    const double got = *dimension_logdensity(dd, dim_params(beta, U), std::vector<LinkFunction>(1), {s});
    const Eigen::MatrixXd V = Z * U.transpose() * U * Z.transpose() + s * s * Eigen::MatrixXd::Identity(3, 3);
    EXPECT_NEAR(got, dense_mvn_logpdf(y, X * beta, V), 1e-10);
  }
}

TEST(LogDensity, ZeroErrorVarianceUsesDenseFactor) {
  Eigen::MatrixXd X = Eigen::MatrixXd::Ones(2, 1), Z(2, 2);
  Z << 1, 0, 1, 1;
  const Eigen::Vector2d y(0.4, -0.3);
  Eigen::MatrixXd U(2, 2);
  U << 1.2, 0.1, 0.0, 0.6;
  const auto got = dimension_logdensity(design(X, Z, y), dim_params(Eigen::VectorXd::Zero(1), U),
                                        std::vector<LinkFunction>(1), {0.0});
  const Eigen::MatrixXd V = Z * U.transpose() * U * Z.transpose();
  EXPECT_NEAR(*got, dense_mvn_logpdf(y, Eigen::Vector2d::Zero(), V), 1e-10);
}

TEST(Membership, Softmax) {
  EXPECT_TRUE(class_membership_probs(Eigen::VectorXd::Zero(3)).isApprox(Eigen::VectorXd::Constant(3, 1.0 / 3.0), 1e-15));
  EXPECT_EQ(class_membership_probs(Eigen::VectorXd::Zero(1))(0), 1.0);
  const auto p = class_membership_probs(Eigen::Vector2d(std::log(2.0), 0.0));
  EXPECT_NEAR(p(0), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(p(1), 1.0 / 3.0, 1e-15);
}

// Twenty subjects, one Gaussian marker with random intercept and slope: the joint model at G = 1
// against the dense marginal Gaussian density plus the closed-form Weibull term.
TEST(Likelihood, OneClassMatchesMarginalGaussianOracle) {
  const auto ds = lmm_dataset();
  const auto t0 = std::chrono::steady_clock::now();
  const JointModel model = prepare_model(ds, spec_from(kLmmSpec), 1);
  auto p = blank_params(model.spec());
  p.dims[0][0].beta << 2.1, 0.45;
  p.dims[0][0].U << 1.1, 0.05, 0.0, 0.28;
  p.sigma[0] = 0.72;
  p.hazard[0].causes[0].baseline = {0.12, 1.3};
  const Eigen::VectorXd theta = model.layout().pack(p);
  const double got = model.total_loglik(theta);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const double want = lmm_oracle(ds, p.dims[0][0].beta, p.dims[0][0].U, 0.72, 0.12, 1.3);
  EXPECT_NEAR(got, want, 1e-6);
  EXPECT_LT(seconds, 1.0);
}

TEST(Likelihood, TwoClassToyByHand) {
  const Toy toy;
  Eigen::VectorXd theta;
  const auto model = toy_model(toy, 0.0, theta);
  EXPECT_NEAR(model.total_loglik(theta), toy.untruncated(), 1e-10);
}

TEST(Likelihood, TwoClassToyTruncated) {
  const Toy toy;
  Eigen::VectorXd theta;
  const auto model = toy_model(toy, 0.8, theta);
  EXPECT_TRUE(model.class_terms(0, span_of(theta)).truncated);
  EXPECT_NEAR(model.total_loglik(theta), toy.truncated(0.8), 1e-10);
}

TEST(Likelihood, EntryAtZeroEqualsUntruncated) {
  const Toy toy;
  Eigen::VectorXd theta;
  const auto model = toy_model(toy, 0.0, theta);
  const auto ct = model.class_terms(0, span_of(theta));
  EXPECT_FALSE(ct.truncated);
  EXPECT_EQ(model.total_loglik(theta), log_sum_exp(ct.joint));
}

TEST(Likelihood, OneClassCollapses) {
  const auto ds = lmm_dataset();
  const JointModel model = prepare_model(ds, spec_from(kLmmSpec), 1);
  const Eigen::VectorXd theta = model.layout().pack(blank_params(model.spec()));
  for (std::size_t i = 0; i < model.subjects(); ++i) {
    const double dim = model.dimension_term(i, 0, 0, span_of(theta));
    const double ev = model.survival_terms(i, 0, span_of(theta)).first;
    EXPECT_NEAR(model.subject_loglik(i, span_of(theta)), dim + ev, 1e-12);
  }
}

TEST(Likelihood, AdditiveOverSubjectsAndOrderFree) {
  auto ds = lmm_dataset();
  const auto spec = resolve_spec(spec_from(kLmmSpec), ds);
  const JointModel all = prepare_model(ds, spec, 1);
  const Eigen::VectorXd theta = all.layout().pack(blank_params(all.spec()));
  double sum = 0.0;
  for (const auto& s : ds.subjects) {
    Dataset one;
    one.subjects.push_back(s);
    sum += prepare_model(one, spec, 1).total_loglik(theta);
  }
  EXPECT_NEAR(all.total_loglik(theta), sum, 1e-9);
  std::reverse(ds.subjects.begin(), ds.subjects.end());
  EXPECT_NEAR(prepare_model(ds, spec, 1).total_loglik(theta), all.total_loglik(theta), 1e-9);
}

TEST(Likelihood, LabelSwitchingInvariance) {
  auto sc = load_scenario(std::string(JLCM_SOURCE_DIR) + "/scenarios/three_class_two_markers.json");
  sc.N = 40;
  const auto sample = simulate_sample(sc, 8);
  const JointModel model = prepare_model(sample.dataset, sc.model, 3);
  const Eigen::VectorXd theta = true_theta(sc, model.layout());
  const double base = model.total_loglik(theta);
  for (const std::vector<int>& perm : {std::vector<int>{2, 0, 1}, {1, 0, 2}, {0, 2, 1}})
    EXPECT_NEAR(model.total_loglik(permute_classes(model.layout(), theta, perm)), base, 1e-8);
}

TEST(Likelihood, DegenerateSubjectNamed) {
  Toy toy;
  Eigen::VectorXd theta;
  const auto model = toy_model(toy, 0.0, theta);
  auto p = model.layout().unpack(span_of(theta));
  for (auto& h : p.hazard) h.causes[0].baseline = {0.0, 1.0};
  const Eigen::VectorXd bad = model.layout().pack(p);
  try {
    model.total_loglik(bad);
    FAIL();
  } catch (const DegenerateLikelihood& e) {
    EXPECT_NE(std::string(e.what()).find("only"), std::string::npos);
  }
}

TEST(Derivatives, StructuredMatchesGenericDifferences) {
  auto sc = load_scenario(std::string(JLCM_SOURCE_DIR) + "/scenarios/three_class_two_markers.json");
  sc.N = 30;
  const auto sample = simulate_sample(sc, 4);
  const JointModel model = prepare_model(sample.dataset, sc.model, 3);
  const Eigen::VectorXd theta = true_theta(sc, model.layout());
  const auto d = model.derivatives(theta);
  const auto ref = numeric_derivatives([&](const Eigen::VectorXd& x) { return model.total_loglik(x); }, theta);
  EXPECT_NEAR(d.value, ref.value, 1e-9);
  EXPECT_EQ(d.hessian, d.hessian.transpose());
  for (Eigen::Index j = 0; j < theta.size(); ++j) EXPECT_NEAR(d.gradient(j), ref.gradient(j), 1e-4 * (1.0 + std::abs(ref.gradient(j))));
  EXPECT_LT((d.hessian - ref.hessian).cwiseAbs().maxCoeff(), 1e-2 * (1.0 + ref.hessian.cwiseAbs().maxCoeff()));
  EXPECT_NEAR(d.class_mass.sum(), 30.0, 1e-9);
}
