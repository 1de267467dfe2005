#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "jlcm/design.hpp"
#include "jlcm/error.hpp"
#include "jlcm/parameters.hpp"
#include "jlcm/splines.hpp"

namespace jlcm {

struct DimensionMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

// m = X beta + Z mu, V = Z U'U Z' + diag(sigma^2 of each row's marker).
inline DimensionMoments dimension_moments(const DimensionDesign& dd, const DimensionClassParams& p,
                                          const std::vector<double>& sigma) {
  if (dd.rows() == 0) throw std::invalid_argument("empty dimension");
  DimensionMoments m;
  m.mean = dd.X * p.beta;
  if (p.mu.size() > 0) m.mean.noalias() += dd.Z * p.mu;
  const Eigen::MatrixXd zu = dd.Z * p.U.transpose();
  m.cov = zu * zu.transpose();
  for (Eigen::Index r = 0; r < dd.rows(); ++r) {
    const double s = sigma[static_cast<std::size_t>(dd.marker[static_cast<std::size_t>(r)])];
    m.cov(r, r) += s * s;
  }
  return m;
}

// Factorisation of V = Z U'U Z' + Sigma for one dimension; ok is false when V is not positive
// definite. With Sigma > 0 it works on the q x q matrix M = I + U Z' Sigma^-1 Z U':
//   log|V| = log|Sigma| + log|M|,  r'V^-1 r = r'Sigma^-1 r - w'M^-1 w,  w = U Z' Sigma^-1 r.
// Otherwise V itself is factorised.
struct DimensionFactor {
  bool ok = false;
  bool small = false;
  double logdet = 0.0;
  Eigen::VectorXd inv_var;  // 1 / sigma^2 per row
  Eigen::MatrixXd zu;       // Z U'
  Eigen::LLT<Eigen::MatrixXd> llt;

  // r' V^-1 r
  double quadratic(const Eigen::VectorXd& r) const {
    if (small) {
      sr_ = r.cwiseProduct(inv_var);
      w_.noalias() = zu.transpose() * sr_;
      llt.matrixL().solveInPlace(w_);
      return r.dot(sr_) - w_.squaredNorm();
    }
    sr_ = r;
    llt.matrixL().solveInPlace(sr_);
    return sr_.squaredNorm();
  }

 private:
  mutable Eigen::VectorXd sr_, w_;
};

inline DimensionFactor dimension_factor(const DimensionDesign& dd, const Eigen::MatrixXd& U,
                                        const std::vector<double>& sigma) {
  DimensionFactor f;
  const Eigen::Index n = dd.rows();
  f.zu = dd.Z * U.transpose();
  f.inv_var.resize(n);
  double logdet_sigma = 0.0;
  bool positive = true;
  for (Eigen::Index r = 0; r < n; ++r) {
    const double s = sigma[static_cast<std::size_t>(dd.marker[static_cast<std::size_t>(r)])];
    const double v = s * s;
    if (!(v > 1e-200)) positive = false;
    f.inv_var(r) = 1.0 / v;
    logdet_sigma += std::log(v);
  }
  if (positive) {
    f.small = true;
    Eigen::MatrixXd M = f.zu.transpose() * f.inv_var.asDiagonal() * f.zu;
    M.diagonal().array() += 1.0;
    f.llt.compute(M);
    if (f.llt.info() != Eigen::Success) return f;
    f.logdet = logdet_sigma;
    const auto& L = f.llt.matrixLLT();
    for (Eigen::Index r = 0; r < M.rows(); ++r) f.logdet += 2.0 * std::log(L(r, r));
  } else {
    Eigen::MatrixXd V = f.zu * f.zu.transpose();
    for (Eigen::Index r = 0; r < n; ++r) V(r, r) += 1.0 / f.inv_var(r);
    f.llt.compute(V);
    if (f.llt.info() != Eigen::Success) return f;
    const auto& L = f.llt.matrixLLT();
    for (Eigen::Index r = 0; r < n; ++r) f.logdet += 2.0 * std::log(L(r, r));
  }
  f.ok = std::isfinite(f.logdet);
  return f;
}

// Link-transformed observations and the summed log-Jacobian; ok is false when a value leaves
// the link range or a Jacobian is not positive.
struct DimensionResponse {
  Eigen::VectorXd h;
  double log_jac = 0.0;
  bool ok = true;
};

inline DimensionResponse dimension_response(const DimensionDesign& dd, const std::vector<LinkFunction>& links) {
  DimensionResponse r;
  const Eigen::Index n = dd.rows();
  r.h.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& link = links[static_cast<std::size_t>(dd.marker[static_cast<std::size_t>(j)])];
    if (link.kind == LinkKind::identity) {
      r.h(j) = dd.y(j);
      continue;
    }
    LinkValue v;
    try {
      v = link_apply(dd.y(j), link);
    } catch (const RangeError&) {
      r.ok = false;
      return r;
    }
    if (!(v.jacobian > 0.0)) {
      r.ok = false;
      return r;
    }
    r.h(j) = v.transformed;
    r.log_jac += std::log(v.jacobian);
  }
  return r;
}

// Gaussian log-density of h at mean X beta + Z mu with the factorised covariance, plus the log-Jacobian.
inline double dimension_logdensity(const DimensionDesign& dd, const DimensionClassParams& p,
                                   const DimensionFactor& f, const DimensionResponse& r) {
  if (!r.ok) return -std::numeric_limits<double>::infinity();
  Eigen::VectorXd resid = r.h;
  for (Eigen::Index t = 0; t < p.beta.size(); ++t) resid -= p.beta(t) * dd.X.col(t);
  for (Eigen::Index t = 0; t < p.mu.size(); ++t)
    if (p.mu(t) != 0.0) resid -= p.mu(t) * dd.Z.col(t);
  constexpr double log2pi = 1.8378770664093454836;
  return -0.5 * (static_cast<double>(dd.rows()) * log2pi + f.logdet + f.quadratic(resid)) + r.log_jac;
}

// log f(Y_i^d | c_i = g): Gaussian log-density of the link-transformed observations plus
// the log-Jacobians of the links. Returns nullopt for an empty dimension and throws
// DegenerateLikelihood when V is not positive definite.
inline std::optional<double> dimension_logdensity(const DimensionDesign& dd, const DimensionClassParams& p,
                                                  const std::vector<LinkFunction>& links,
                                                  const std::vector<double>& sigma) {
  if (dd.rows() == 0) return std::nullopt;
  const auto r = dimension_response(dd, links);
  if (!r.ok) return -std::numeric_limits<double>::infinity();
  const auto f = dimension_factor(dd, p.U, sigma);
  if (!f.ok) throw DegenerateLikelihood("degenerate covariance", "");
  return dimension_logdensity(dd, p, f, r);
}

}  // namespace jlcm
