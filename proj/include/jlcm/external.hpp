#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "jlcm/csv.hpp"
#include "jlcm/data.hpp"
#include "jlcm/error.hpp"
#include "jlcm/fit.hpp"
#include "jlcm/likelihood.hpp"
#include "jlcm/optimizer.hpp"
#include "jlcm/posterior.hpp"

namespace jlcm {

struct ExternalFit {
  std::vector<std::string> names;
  Eigen::VectorXd estimate;
  std::optional<Eigen::MatrixXd> variance;
  Eigen::VectorXd se, z, p_value;
  double loglik = std::numeric_limits<double>::quiet_NaN();
  OptimizerStatus status = OptimizerStatus::max_iterations;
  int iterations = 0;
  int n_subjects = 0;  // subjects carrying external data
  bool theta_unchanged = true;
  std::vector<std::string> notes;
};

inline OptimizerSettings external_optimizer_defaults() {
  OptimizerSettings s;
  s.tolerance_function = 1e-10;
  s.tolerance_parameters = 1e-12;
  s.tolerance_derivatives = 1e-10;
  return s;
}

namespace detail {

inline void finish_external(ExternalFit& ef, const ObjectiveFn& objective, const OptimizerResult& r) {
  ef.estimate = r.theta;
  ef.loglik = r.objective;
  ef.status = r.status;
  ef.iterations = r.iterations;
  const auto p = ef.estimate.size();
  ef.se = ef.z = ef.p_value = Eigen::VectorXd::Constant(p, std::numeric_limits<double>::quiet_NaN());
  try {
    const auto d = numeric_derivatives(objective, ef.estimate);
    ef.variance = inverse_negative_hessian(d.hessian);
  } catch (const std::exception&) {
  }
  if (!ef.variance) {
    ef.notes.push_back("negative Hessian of the external block is not positive definite; no standard errors");
    return;
  }
  for (Eigen::Index j = 0; j < p; ++j) {
    ef.se(j) = std::sqrt(std::max(0.0, (*ef.variance)(j, j)));
    ef.z(j) = ef.estimate(j) / ef.se(j);
    ef.p_value(j) = std::erfc(std::abs(ef.z(j)) / std::sqrt(2.0));
  }
}

}  // namespace detail

// Continuous external outcome measured once or repeatedly: y = alpha_g + x' gamma(_g) + u + e,
// e ~ N(0, sigma^2), optional subject random intercept u ~ N(0, tau^2).
struct ExternalOutcome {
  std::vector<std::string> covariates;
  std::vector<bool> class_specific;  // per covariate
  bool random_intercept = false;
  std::map<std::string, std::vector<std::pair<double, Eigen::VectorXd>>> data;  // id -> (y, x)
};

// Reads an outcome table with columns id, value and the named covariates.
inline ExternalOutcome external_outcome_from_table(const csv::Table& t, const std::vector<std::string>& covariates,
                                                   const std::vector<std::string>& class_specific,
                                                   bool random_intercept, const std::string& value_column = "value",
                                                   const std::string& id_column = "id") {
  ExternalOutcome eo;
  eo.covariates = covariates;
  for (const auto& c : covariates)
    eo.class_specific.push_back(std::find(class_specific.begin(), class_specific.end(), c) != class_specific.end());
  for (const auto& c : class_specific)
    if (std::find(covariates.begin(), covariates.end(), c) == covariates.end())
      throw ConfigError("class-specific external effect '" + c + "' is not among the external covariates");
  eo.random_intercept = random_intercept;
  const int cid = detail::require_column(t, id_column, "external");
  const int cv = detail::require_column(t, value_column, "external");
  std::vector<int> cc;
  for (const auto& c : covariates) cc.push_back(detail::require_column(t, c, "external"));
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    Eigen::VectorXd x(static_cast<Eigen::Index>(cc.size()));
    for (std::size_t j = 0; j < cc.size(); ++j) x(static_cast<Eigen::Index>(j)) = detail::cell_double(t, r, cc[j], "external");
    eo.data[t.rows[r][static_cast<std::size_t>(cid)]].emplace_back(detail::cell_double(t, r, cv, "external"), x);
  }
  return eo;
}

// Case 1: the external outcome enters as a further class-conditional factor with the joint model
// parameters frozen at theta; only the outcome parameters are estimated. Subjects without
// external data keep their joint-model factors only.
inline ExternalFit external_outcome_fit(const JointModel& model, const Eigen::VectorXd& theta, const ExternalOutcome& eo,
                                        const OptimizerSettings& settings = external_optimizer_defaults()) {
  const Eigen::VectorXd theta_before = theta;
  const int G = model.classes();
  const std::span<const double> th(theta.data(), static_cast<std::size_t>(theta.size()));
  const auto q = eo.covariates.size();
  for (const auto& [id, rows] : eo.data)
    for (const auto& r : rows)
      if (static_cast<std::size_t>(r.second.size()) != q) throw DataError("external outcome of subject '" + id + "' has the wrong number of covariates");

  ExternalFit ef;
  // parameter layout
  for (int g = 0; g < G; ++g) ef.names.push_back("alpha[class" + std::to_string(g + 1) + "]");
  std::vector<std::vector<int>> gamma_index(q, std::vector<int>(static_cast<std::size_t>(G)));
  for (std::size_t c = 0; c < q; ++c) {
    if (eo.class_specific[c]) {
      for (int g = 0; g < G; ++g) {
        gamma_index[c][static_cast<std::size_t>(g)] = static_cast<int>(ef.names.size());
        ef.names.push_back("gamma[" + eo.covariates[c] + ",class" + std::to_string(g + 1) + "]");
      }
    } else {
      for (int g = 0; g < G; ++g) gamma_index[c][static_cast<std::size_t>(g)] = static_cast<int>(ef.names.size());
      ef.names.push_back("gamma[" + eo.covariates[c] + "]");
    }
  }
  const int sigma_index = static_cast<int>(ef.names.size());
  ef.names.push_back("sigma");
  const int tau_index = eo.random_intercept ? static_cast<int>(ef.names.size()) : -1;
  if (eo.random_intercept) ef.names.push_back("tau");
  const auto P = static_cast<Eigen::Index>(ef.names.size());

  struct Unit {
    std::vector<double> joint;  // log pi_g f(Y|g) f(T|g)
    double at_risk = 0.0;       // truncation denominator, constant in the outcome parameters
    const std::vector<std::pair<double, Eigen::VectorXd>>* rows = nullptr;
  };
  std::vector<Unit> units;
  double constant = 0.0;
  for (std::size_t i = 0; i < model.subjects(); ++i) {
    const auto ct = model.class_terms(i, th);
    const double den = ct.truncated ? log_sum_exp(ct.at_risk) : 0.0;
    auto it = eo.data.find(model.designs()[i].id);
    if (it == eo.data.end() || it->second.empty()) {
      constant += log_sum_exp(ct.joint) - den;
      continue;
    }
    units.push_back({ct.joint, den, &it->second});
  }
  for (const auto& [id, rows] : eo.data) {
    bool known = false;
    for (const auto& sd : model.designs()) known = known || sd.id == id;
    if (!known) ef.notes.push_back("external data of unknown subject '" + id + "' ignored");
  }
  if (units.empty()) throw DataError("no subject has external outcome data");
  ef.n_subjects = static_cast<int>(units.size());

  auto class_density = [&](const Eigen::VectorXd& psi, const Unit& u, int g) {
    const double s2 = psi(sigma_index) * psi(sigma_index);
    const double t2 = tau_index >= 0 ? psi(tau_index) * psi(tau_index) : 0.0;
    const auto n = static_cast<double>(u.rows->size());
    double rr = 0.0, rs = 0.0;
    for (const auto& [y, x] : *u.rows) {
      double m = psi(g);
      for (std::size_t c = 0; c < q; ++c) m += x(static_cast<Eigen::Index>(c)) * psi(gamma_index[c][static_cast<std::size_t>(g)]);
      const double r = y - m;
      rr += r * r;
      rs += r;
    }
    // V = s2 I + t2 J: |V| = s2^(n-1) (s2 + n t2), V^-1 = (I - t2 / (s2 + n t2) J) / s2
    const double logdet = (n - 1.0) * std::log(s2) + std::log(s2 + n * t2);
    const double quad = (rr - t2 / (s2 + n * t2) * rs * rs) / s2;
    constexpr double log2pi = 1.8378770664093454836;
    return -0.5 * (n * log2pi + logdet + quad);
  };
  const ObjectiveFn objective = [&](const Eigen::VectorXd& psi) {
    if (!(psi(sigma_index) != 0.0)) return -std::numeric_limits<double>::infinity();
    double total = constant;
    std::vector<double> a(static_cast<std::size_t>(G));
    for (const auto& u : units) {
      for (int g = 0; g < G; ++g) a[static_cast<std::size_t>(g)] = u.joint[static_cast<std::size_t>(g)] + class_density(psi, u, g);
      total += log_sum_exp(a) - u.at_risk;
    }
    return total;
  };

  // start: posterior-weighted least squares on the stacked class design
  Eigen::VectorXd init = Eigen::VectorXd::Zero(P);
  {
    const Eigen::Index pm = sigma_index;
    Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(pm, pm);
    Eigen::VectorXd xty = Eigen::VectorXd::Zero(pm);
    double wsum = 0.0;
    for (const auto& u : units) {
      const double lse = log_sum_exp(u.joint);
      for (int g = 0; g < G; ++g) {
        const double w = std::exp(u.joint[static_cast<std::size_t>(g)] - lse);
        for (const auto& [y, x] : *u.rows) {
          Eigen::VectorXd row = Eigen::VectorXd::Zero(pm);
          row(g) = 1.0;
          for (std::size_t c = 0; c < q; ++c) row(gamma_index[c][static_cast<std::size_t>(g)]) += x(static_cast<Eigen::Index>(c));
          xtx.noalias() += w * row * row.transpose();
          xty.noalias() += w * y * row;
          wsum += w;
        }
      }
    }
    init.head(pm) = (xtx + 1e-10 * Eigen::MatrixXd::Identity(pm, pm)).ldlt().solve(xty);
    double rss = 0.0;
    for (const auto& u : units) {
      const double lse = log_sum_exp(u.joint);
      for (int g = 0; g < G; ++g) {
        const double w = std::exp(u.joint[static_cast<std::size_t>(g)] - lse);
        for (const auto& [y, x] : *u.rows) {
          double m = init(g);
          for (std::size_t c = 0; c < q; ++c) m += x(static_cast<Eigen::Index>(c)) * init(gamma_index[c][static_cast<std::size_t>(g)]);
          rss += w * (y - m) * (y - m);
        }
      }
    }
    const double sd = std::sqrt(std::max(rss / std::max(wsum, 1.0), 1e-8));
    init(sigma_index) = eo.random_intercept ? sd / std::sqrt(2.0) : sd;
    if (tau_index >= 0) init(tau_index) = sd / std::sqrt(2.0);
  }

  const auto r = marquardt_levenberg(objective, init, settings);
  detail::finish_external(ef, objective, r);
  ef.estimate(sigma_index) = std::abs(ef.estimate(sigma_index));
  if (tau_index >= 0) ef.estimate(tau_index) = std::abs(ef.estimate(tau_index));
  ef.notes.push_back("standard errors are conditional on the frozen joint-model estimate and ignore its uncertainty");
  ef.theta_unchanged = theta_before.size() == theta.size() && (theta_before.array() == theta.array()).all();
  return ef;
}

struct ExternalCovariates {
  std::vector<std::string> names;
  std::map<std::string, Eigen::VectorXd> values;  // id -> covariates
};

inline ExternalCovariates external_covariates_from_table(const csv::Table& t, const std::vector<std::string>& names,
                                                         const std::string& id_column = "id") {
  ExternalCovariates ec;
  ec.names = names;
  const int cid = detail::require_column(t, id_column, "external");
  std::vector<int> cc;
  for (const auto& c : names) cc.push_back(detail::require_column(t, c, "external"));
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    Eigen::VectorXd x(static_cast<Eigen::Index>(cc.size()));
    for (std::size_t j = 0; j < cc.size(); ++j) x(static_cast<Eigen::Index>(j)) = detail::cell_double(t, r, cc[j], "external");
    const auto& id = t.rows[r][static_cast<std::size_t>(cid)];
    if (!ec.values.emplace(id, x).second) throw DataError("external table: duplicate subject '" + id + "'");
  }
  return ec;
}

// Case 2: class membership re-expressed as a multinomial logit on external covariates with every
// other joint-model parameter frozen at theta. Class G is the reference. The left-truncation
// denominator depends on the membership model and is kept.
inline ExternalFit external_covariate_fit(const JointModel& model, const Eigen::VectorXd& theta,
                                          const ExternalCovariates& ec,
                                          const OptimizerSettings& settings = external_optimizer_defaults()) {
  const int G = model.classes();
  if (G == 1) throw ConfigError("no class structure to predict");
  const Eigen::VectorXd theta_before = theta;
  const std::span<const double> th(theta.data(), static_cast<std::size_t>(theta.size()));
  ExternalFit ef;
  if (!model.spec().class_covariates.empty())
    ef.notes.push_back("the fitted class-membership model is replaced by the external covariates (xi is replaced)");
  const auto q = static_cast<Eigen::Index>(ec.names.size());
  for (int g = 0; g + 1 < G; ++g) {
    ef.names.push_back("xi_ext[intercept,class" + std::to_string(g + 1) + "]");
    for (const auto& n : ec.names) ef.names.push_back("xi_ext[" + n + ",class" + std::to_string(g + 1) + "]");
  }
  struct Unit {
    Eigen::VectorXd x;
    std::vector<double> f;   // log f(Y|g) f(T|g)
    std::vector<double> s0;  // log S(T0|g), empty without truncation
  };
  std::vector<Unit> units;
  for (std::size_t i = 0; i < model.subjects(); ++i) {
    const auto& id = model.designs()[i].id;
    auto it = ec.values.find(id);
    if (it == ec.values.end()) throw DataError("external covariates missing for subject '" + id + "'");
    if (it->second.size() != q) throw DataError("external covariates of subject '" + id + "' have the wrong length");
    const auto ct = model.class_terms(i, th);
    const Eigen::VectorXd lp = model.log_membership(i, th);
    Unit u;
    u.x = it->second;
    for (int g = 0; g < G; ++g) {
      u.f.push_back(ct.joint[static_cast<std::size_t>(g)] - lp(g));
      if (ct.truncated) u.s0.push_back(ct.at_risk[static_cast<std::size_t>(g)] - lp(g));
    }
    units.push_back(std::move(u));
  }
  ef.n_subjects = static_cast<int>(units.size());
  const ObjectiveFn objective = [&](const Eigen::VectorXd& xi) {
    double total = 0.0;
    Eigen::VectorXd eta(G);
    std::vector<double> a(static_cast<std::size_t>(G)), b(static_cast<std::size_t>(G));
    for (const auto& u : units) {
      eta(G - 1) = 0.0;
      for (int g = 0; g + 1 < G; ++g) eta(g) = xi(g * (1 + q)) + (q > 0 ? xi.segment(g * (1 + q) + 1, q).dot(u.x) : 0.0);
      const double norm = log_sum_exp(std::span<const double>(eta.data(), static_cast<std::size_t>(G)));
      for (int g = 0; g < G; ++g) a[static_cast<std::size_t>(g)] = eta(g) - norm + u.f[static_cast<std::size_t>(g)];
      total += log_sum_exp(a);
      if (!u.s0.empty()) {
        for (int g = 0; g < G; ++g) b[static_cast<std::size_t>(g)] = eta(g) - norm + u.s0[static_cast<std::size_t>(g)];
        total -= log_sum_exp(b);
      }
    }
    return total;
  };
  const auto r = marquardt_levenberg(objective, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(ef.names.size())), settings);
  detail::finish_external(ef, objective, r);
  ef.theta_unchanged = (theta_before.array() == theta.array()).all();
  return ef;
}

}  // namespace jlcm
