#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "jlcm/error.hpp"

namespace jlcm {

struct Derivatives {
  double value = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;
};

using ObjectiveFn = std::function<double(const Eigen::VectorXd&)>;
using DerivativesFn = std::function<Derivatives(const Eigen::VectorXd&)>;

// Central-difference gradient with h_j = max(1e-4, 1e-4 |theta_j|); the Hessian differences that
// gradient and is symmetrised as (H + H') / 2.
inline Eigen::VectorXd numeric_gradient(const ObjectiveFn& f, const Eigen::VectorXd& theta) {
  const Eigen::Index p = theta.size();
  Eigen::VectorXd g(p), x = theta;
  for (Eigen::Index j = 0; j < p; ++j) {
    const double h = std::max(1e-4, 1e-4 * std::abs(theta(j)));
    x(j) = theta(j) + h;
    const double fp = f(x);
    x(j) = theta(j) - h;
    const double fm = f(x);
    x(j) = theta(j);
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericError("non-finite objective in the stencil of parameter " + std::to_string(j), static_cast<int>(j));
    g(j) = (fp - fm) / (2.0 * h);
  }
  return g;
}

inline Derivatives numeric_derivatives(const ObjectiveFn& f, const Eigen::VectorXd& theta) {
  Derivatives d;
  d.value = f(theta);
  if (!std::isfinite(d.value)) throw NumericError("non-finite objective at the evaluation point", -1);
  d.gradient = numeric_gradient(f, theta);
  const Eigen::Index p = theta.size();
  d.hessian.resize(p, p);
  Eigen::VectorXd x = theta;
  for (Eigen::Index j = 0; j < p; ++j) {
    const double h = std::max(1e-4, 1e-4 * std::abs(theta(j)));
    x(j) = theta(j) + h;
    const Eigen::VectorXd gp = numeric_gradient(f, x);
    x(j) = theta(j) - h;
    const Eigen::VectorXd gm = numeric_gradient(f, x);
    x(j) = theta(j);
    d.hessian.col(j) = (gp - gm) / (2.0 * h);
  }
  d.hessian = 0.5 * (d.hessian + d.hessian.transpose()).eval();
  return d;
}

struct OptimizerSettings {
  int max_iterations = 500;
  double tolerance_function = 1e-4;
  double tolerance_parameters = 1e-4;
  double tolerance_derivatives = 1e-4;
  double damping_floor = 1e-6;  // tau in the diagonal inflation |H_jj| + tau
};

enum class OptimizerStatus { converged, max_iterations, degenerate };

inline const char* to_string(OptimizerStatus s) {
  switch (s) {
    case OptimizerStatus::converged: return "converged";
    case OptimizerStatus::max_iterations: return "max-iter";
    case OptimizerStatus::degenerate: return "degenerate";
  }
  return "?";
}

struct IterationRecord {
  int iteration = 0;
  double objective = 0.0;       // after the accepted step
  double change_objective = 0.0;
  double change_parameters = 0.0;  // max_j (delta theta_j)^2
  double relative_distance = 0.0;  // g'(-H)^-1 g / p at the start of the iteration
  double damping = 0.0;
};

struct OptimizerResult {
  Eigen::VectorXd theta;
  double objective = std::numeric_limits<double>::quiet_NaN();
  OptimizerStatus status = OptimizerStatus::max_iterations;
  int iterations = 0;
  bool met_function = false;
  bool met_parameters = false;
  bool met_derivatives = false;
  std::string message;
  std::vector<IterationRecord> trace;
};

// Marquardt-Levenberg maximisation. Each iteration computes the gradient g and Hessian H at the
// current point and solves (-H + lambda diag(|H_jj| + tau)) delta = g; lambda starts at 0, is
// multiplied by 10 (at least up to 1e-4) on rejection or indefinite systems and divided by 10 on
// acceptance. A step is accepted when the objective does not decrease. Convergence requires
//   |delta f| < tol_f,  max_j delta_j^2 < tol_p,  g'(-H)^-1 g / p < tol_d.
inline OptimizerResult marquardt_levenberg(const ObjectiveFn& objective, const DerivativesFn& derivatives,
                                           const Eigen::VectorXd& init, const OptimizerSettings& settings) {
  OptimizerResult res;
  res.theta = init;
  res.objective = objective(init);
  if (!std::isfinite(res.objective)) throw NumericError("non-finite objective at the initial point", -1);
  const Eigen::Index p = init.size();
  double lambda = 0.0;
  for (int iter = 1; iter <= settings.max_iterations; ++iter) {
    Derivatives d;
    try {
      d = derivatives(res.theta);
    } catch (const std::exception& e) {
      res.status = OptimizerStatus::degenerate;
      res.message = e.what();
      return res;
    }
    const Eigen::MatrixXd neg_h = -d.hessian;
    double rdm = std::numeric_limits<double>::infinity();
    {
      Eigen::LLT<Eigen::MatrixXd> llt(neg_h);
      if (llt.info() == Eigen::Success && p > 0) {
        const double v = d.gradient.dot(llt.solve(d.gradient)) / static_cast<double>(p);
        if (std::isfinite(v) && v >= 0.0) rdm = v;
      } else if (p == 0) {
        rdm = 0.0;
      }
    }
    Eigen::VectorXd scale = neg_h.diagonal().cwiseAbs().array() + settings.damping_floor;
    bool accepted = false;
    Eigen::VectorXd delta;
    double f_new = res.objective;
    for (int attempt = 0; attempt < 60; ++attempt) {
      Eigen::MatrixXd a = neg_h;
      a.diagonal() += lambda * scale;
      Eigen::LLT<Eigen::MatrixXd> llt(a);
      if (llt.info() == Eigen::Success) {
        delta = llt.solve(d.gradient);
        if (delta.allFinite()) {
          const Eigen::VectorXd trial = res.theta + delta;
          double ft;
          try {
            ft = objective(trial);
          } catch (const std::exception&) {
            ft = std::numeric_limits<double>::quiet_NaN();
          }
          if (std::isfinite(ft) && ft >= res.objective) {
            f_new = ft;
            accepted = true;
            break;
          }
        }
      }
      lambda = lambda == 0.0 ? 1e-4 : lambda * 10.0;
    }
    if (!accepted) {
      res.status = OptimizerStatus::degenerate;
      res.message = "no ascent step found even after diagonal inflation";
      return res;
    }
    IterationRecord rec;
    rec.iteration = iter;
    rec.change_objective = f_new - res.objective;
    rec.change_parameters = p > 0 ? delta.cwiseAbs2().maxCoeff() : 0.0;
    rec.relative_distance = rdm;
    rec.damping = lambda;
    rec.objective = f_new;
    res.trace.push_back(rec);
    res.theta += delta;
    res.objective = f_new;
    res.iterations = iter;
    lambda = lambda / 10.0;
    if (lambda < 1e-12) lambda = 0.0;
    res.met_function = std::abs(rec.change_objective) < settings.tolerance_function;
    res.met_parameters = rec.change_parameters < settings.tolerance_parameters;
    res.met_derivatives = rdm < settings.tolerance_derivatives;
    if (res.met_function && res.met_parameters && res.met_derivatives) {
      res.status = OptimizerStatus::converged;
      return res;
    }
  }
  res.status = OptimizerStatus::max_iterations;
  return res;
}

// Convenience overload using numeric_derivatives on the objective.
inline OptimizerResult marquardt_levenberg(const ObjectiveFn& objective, const Eigen::VectorXd& init,
                                           const OptimizerSettings& settings) {
  return marquardt_levenberg(
      objective, [&](const Eigen::VectorXd& x) { return numeric_derivatives(objective, x); }, init, settings);
}

}  // namespace jlcm
