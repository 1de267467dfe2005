#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "jlcm/error.hpp"
#include "jlcm/model_spec.hpp"
#include "jlcm/parameters.hpp"
#include "jlcm/splines.hpp"

namespace jlcm {

// Baseline family shared by all causes and classes of a model.
struct HazardModel {
  HazardFamily family = HazardFamily::weibull;
  SplineBasisSpec basis;  // M-spline basis on (0, max observed time)

  static HazardModel from(const ModelSpec& spec) { return {spec.hazard.family, spec.hazard.basis}; }
};

// Per-class hazard parameters, indexed [g].
using HazardParams = std::vector<HazardClassParams>;

// Weibull: a0(t) = s k (s t)^(k-1); M-splines: sum_m c_m M_m(t). Proportional mode multiplies by exp(log_ratio).
inline double baseline_hazard(double t, const CauseParams& p, const HazardModel& model) {
  if (!(t > 0.0)) throw std::domain_error("baseline hazard needs t > 0");
  double h;
  if (model.family == HazardFamily::weibull) {
    const double s = p.baseline[0], k = p.baseline[1];
    h = s * k * std::pow(s * t, k - 1.0);
  } else {
    const auto m = mspline_basis(t, model.basis);
    h = 0.0;
    for (std::size_t j = 0; j < m.size(); ++j) h += p.baseline[j] * m[j];
  }
  return h * std::exp(p.log_ratio);
}

inline double baseline_hazard(double t, int cause, int g, const HazardParams& hp, const HazardModel& model) {
  return baseline_hazard(t, hp[g].causes[cause], model);
}

// Integral of the baseline hazard from 0 to t; the M-spline case uses the I-spline expansion
// and stays flat beyond the last boundary knot.
inline double cumulative_hazard(double t, const CauseParams& p, const HazardModel& model) {
  if (!(t > 0.0)) return 0.0;
  double h;
  if (model.family == HazardFamily::weibull) {
    h = std::pow(p.baseline[0] * t, p.baseline[1]);
  } else {
    std::vector<double> is;
    detail::mi_splines(t, model.basis, nullptr, &is);
    h = 0.0;
    for (std::size_t j = 0; j < is.size(); ++j) h += p.baseline[j] * is[j];
  }
  return h * std::exp(p.log_ratio);
}

inline double cumulative_hazard(double t, int cause, int g, const HazardParams& hp, const HazardModel& model) {
  return cumulative_hazard(t, hp[g].causes[cause], model);
}

inline double covariate_effect(const CauseParams& p, const Eigen::VectorXd& xt) {
  return xt.size() == 0 ? 0.0 : p.delta.dot(xt);
}

// log S_i(t | g) = -sum_l Lambda_0l(t) exp(X_T' delta_l)
inline double log_survival(double t, const HazardClassParams& hc, const HazardModel& model, const Eigen::VectorXd& xt) {
  double s = 0.0;
  for (const auto& c : hc.causes) s -= cumulative_hazard(t, c, model) * std::exp(covariate_effect(c, xt));
  return s;
}

inline double subject_survival(double t, const HazardClassParams& hc, const HazardModel& model,
                               const Eigen::VectorXd& xt) {
  return std::exp(log_survival(t, hc, model, xt));
}

// Cause-specific hazard alpha_il(t | g).
inline double cause_hazard(double t, const CauseParams& c, const HazardModel& model, const Eigen::VectorXd& xt) {
  return baseline_hazard(t, c, model) * std::exp(covariate_effect(c, xt));
}

// log[ S_i(T | g) * prod_l alpha_il(T | g)^{1(d = l)} ]; -inf when the hazard vanishes at an event.
inline double event_log_contribution(double time, int cause, const HazardClassParams& hc, const HazardModel& model,
                                     const Eigen::VectorXd& xt) {
  double v = log_survival(time, hc, model, xt);
  if (cause > 0) {
    const auto& c = hc.causes[static_cast<std::size_t>(cause - 1)];
    const double a0 = baseline_hazard(time, c, model);
    if (!(a0 > 0.0)) return -std::numeric_limits<double>::infinity();
    v += std::log(a0) + covariate_effect(c, xt);
  }
  return v;
}

// Cause-specific cumulative incidence F_l(t) = int_0^t alpha_l(u) S(u) du on a grid starting at 0,
// by composite Simpson integration on each grid step. The step from the origin is graded as
// u = t v^4 so that power-type hazards near 0 become smooth in v. With one cause this is 1 - S(t).
inline std::vector<double> cumulative_incidence(const std::vector<double>& grid, int cause, const HazardClassParams& hc,
                                                const HazardModel& model, const Eigen::VectorXd& xt,
                                                int substeps = 128) {
  std::vector<double> out;
  double acc = 0.0, prev = 0.0;
  auto integrand = [&](double u) {
    if (!(u > 0.0)) return 0.0;
    return cause_hazard(u, hc.causes[static_cast<std::size_t>(cause)], model, xt) *
           subject_survival(u, hc, model, xt);
  };
  for (double t : grid) {
    if (t > prev) {
      const double h = 1.0 / substeps;
      auto f = [&](double v) {
        if (prev > 0.0) return (t - prev) * integrand(prev + (t - prev) * v);
        return integrand(t * std::pow(v, 4)) * 4.0 * t * std::pow(v, 3);
      };
      double s = f(0.0) + f(1.0);
      for (int j = 1; j < substeps; ++j) s += (j % 2 ? 4.0 : 2.0) * f(j * h);
      acc += s * h / 3.0;
      prev = t;
    }
    out.push_back(acc);
  }
  return out;
}

}  // namespace jlcm
