#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "jlcm/data.hpp"
#include "jlcm/error.hpp"
#include "jlcm/fit.hpp"
#include "jlcm/likelihood.hpp"

namespace jlcm {

struct PosteriorClassification {
  std::vector<std::string> ids;
  Eigen::MatrixXd probs;          // N x G
  std::vector<int> assigned;      // 0-based, argmax with lowest index on ties
  Eigen::MatrixXd table;          // G x G: row = assigned class, column = mean probability
  std::vector<int> counts;        // subjects per assigned class

  int classes() const { return static_cast<int>(probs.cols()); }
};

// Assignments and the posterior classification table from a probability matrix.
inline PosteriorClassification classify(const Eigen::MatrixXd& probs, std::vector<std::string> ids = {}) {
  PosteriorClassification pc;
  const Eigen::Index N = probs.rows(), G = probs.cols();
  pc.ids = std::move(ids);
  pc.probs = probs;
  pc.assigned.resize(static_cast<std::size_t>(N));
  pc.table = Eigen::MatrixXd::Zero(G, G);
  pc.counts.assign(static_cast<std::size_t>(G), 0);
  for (Eigen::Index i = 0; i < N; ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index g = 1; g < G; ++g)
      if (probs(i, g) > probs(i, best)) best = g;
    pc.assigned[static_cast<std::size_t>(i)] = static_cast<int>(best);
    pc.table.row(best) += probs.row(i);
    ++pc.counts[static_cast<std::size_t>(best)];
  }
  for (Eigen::Index g = 0; g < G; ++g)
    if (pc.counts[static_cast<std::size_t>(g)] > 0) pc.table.row(g) /= pc.counts[static_cast<std::size_t>(g)];
  return pc;
}

inline PosteriorClassification posterior_probs(const JointModel& model, const Eigen::VectorXd& theta) {
  std::vector<std::string> ids;
  for (const auto& sd : model.designs()) ids.push_back(sd.id);
  return classify(model.posterior(theta), std::move(ids));
}

// Posterior class probabilities of every subject at the estimate of a fit.
inline PosteriorClassification posterior_probs(const FitResult& fit, const Dataset& ds) {
  const JointModel model = prepare_model(ds, fit.spec, fit.G);
  return posterior_probs(model, fit.theta);
}

struct CriteriaRow {
  int G = 1;
  double loglik = std::numeric_limits<double>::quiet_NaN();
  int p = 0;
  int N = 0;
  double aic = std::numeric_limits<double>::quiet_NaN();
  double bic = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> entropy;  // undefined for one class
  double icl = std::numeric_limits<double>::quiet_NaN();
  bool converged = true;
};

inline double bic(double loglik, int p, int N) { return -2.0 * loglik + p * std::log(static_cast<double>(N)); }
inline double aic(double loglik, int p) { return -2.0 * loglik + 2.0 * p; }

// 1 + sum_i sum_g pi log pi / (N log G), with 0 log 0 = 0.
inline std::optional<double> entropy(const Eigen::MatrixXd& probs) {
  const Eigen::Index N = probs.rows(), G = probs.cols();
  if (G < 2 || N == 0) return std::nullopt;
  double s = 0.0;
  for (Eigen::Index i = 0; i < N; ++i)
    for (Eigen::Index g = 0; g < G; ++g)
      if (probs(i, g) > 0.0) s += probs(i, g) * std::log(probs(i, g));
  return 1.0 + s / (static_cast<double>(N) * std::log(static_cast<double>(G)));
}

// BIC - 2 sum_i log pi_i,assigned
inline double icl(double bic_value, const PosteriorClassification& pc) {
  double s = 0.0;
  for (std::size_t i = 0; i < pc.assigned.size(); ++i) {
    const double v = pc.probs(static_cast<Eigen::Index>(i), pc.assigned[i]);
    s += v > 0.0 ? std::log(v) : -std::numeric_limits<double>::infinity();
  }
  return bic_value - 2.0 * s;
}

inline CriteriaRow information_criteria(double loglik, int p, const PosteriorClassification& pc) {
  CriteriaRow row;
  row.G = pc.classes();
  row.loglik = loglik;
  row.p = p;
  row.N = static_cast<int>(pc.probs.rows());
  row.aic = aic(loglik, p);
  row.bic = bic(loglik, p, row.N);
  row.entropy = entropy(pc.probs);
  row.icl = icl(row.bic, pc);
  return row;
}

inline CriteriaRow information_criteria(const FitResult& fit, const PosteriorClassification& pc) {
  auto row = information_criteria(fit.loglik, fit.p, pc);
  row.converged = fit.converged();
  return row;
}

}  // namespace jlcm
