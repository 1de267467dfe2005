#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "jlcm/jlcm.hpp"

namespace jlcm_test {

using namespace jlcm;

inline Subject subject(const std::string& id, double entry, double time, int cause) {
  Subject s;
  s.id = id;
  s.survival = {id, entry, time, cause};
  return s;
}

inline void observe(Subject& s, const std::string& marker, double t, double v) {
  s.observations.push_back({s.id, marker, t, v});
}

inline ModelSpec spec_from(const std::string& text) { return model_spec_from_json(json::parse(text)); }

// One Gaussian marker, random intercept and slope, Weibull single cause.
inline const char* kLmmSpec = R"({
  "spec_version": 1, "classes": 1,
  "dimensions": [{"name": "d", "fixed": ["time"], "random": ["time"]}],
  "markers": [{"name": "y", "dimension": "d", "link": "identity"}],
  "hazard": {"family": "weibull", "causes": 1}
})";

// Twenty subjects with 2 to 6 irregular visits and Weibull-ish event times.
inline Dataset lmm_dataset(std::uint64_t seed = 7) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Dataset ds;
  for (int i = 0; i < 20; ++i) {
    const double b0 = 1.2 * z(rng), b1 = 0.3 * z(rng);
    const int n = 2 + i % 5;
    const double T = 0.5 + n + 2.0 * u(rng);
    auto s = subject("s" + std::to_string(100 + i), 0.0, T, i % 3 == 0 ? 0 : 1);
    for (int j = 0; j < n; ++j) {
      const double t = j + 0.3 * u(rng);
      observe(s, "y", t, 2.0 + b0 + (0.5 + b1) * t + 0.7 * z(rng));
    }
    ds.subjects.push_back(s);
  }
  return ds;
}

inline std::span<const double> span_of(const Eigen::VectorXd& x) {
  return {x.data(), static_cast<std::size_t>(x.size())};
}

// Natural-scale parameters with every class block filled; callers overwrite what they need.
inline ModelParams blank_params(const ModelSpec& spec) {
  const int G = spec.classes;
  ModelParams p;
  p.xi = Eigen::MatrixXd::Zero(G, 1 + static_cast<Eigen::Index>(spec.class_covariates.size()));
  for (const auto& d : spec.dimensions) {
    std::vector<DimensionClassParams> v;
    for (int g = 0; g < G; ++g) {
      DimensionClassParams c;
      c.beta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d.fixed.size()));
      c.mu = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d.random.size()));
      c.U = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(d.random.size()), static_cast<Eigen::Index>(d.random.size()));
      v.push_back(c);
    }
    p.dims.push_back(v);
  }
  for (const auto& m : spec.markers) {
    LinkFunction f;
    f.kind = m.link;
    if (m.link == LinkKind::isplines) {
      f.basis = m.basis;
      f.coefficients.assign(static_cast<std::size_t>(m.basis.size()), 1.0);
    }
    p.links.push_back(f);
    p.sigma.push_back(1.0);
  }
  for (int g = 0; g < G; ++g) {
    HazardClassParams hc;
    for (int l = 0; l < spec.hazard.causes; ++l) {
      CauseParams c;
      if (spec.hazard.family == HazardFamily::weibull) c.baseline = {0.2, 1.0};
      else c.baseline.assign(static_cast<std::size_t>(spec.hazard.basis.size()), 0.1);
      c.delta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(spec.hazard.covariates.size()));
      hc.causes.push_back(c);
    }
    p.hazard.push_back(hc);
  }
  return p;
}

// Dense log-density of N(mean, V) through an explicit inverse and determinant.
inline double dense_mvn_logpdf(const Eigen::VectorXd& y, const Eigen::VectorXd& mean, const Eigen::MatrixXd& V) {
  const Eigen::VectorXd r = y - mean;
  const double q = r.dot(V.inverse() * r);
  return -0.5 * (static_cast<double>(y.size()) * std::log(2.0 * M_PI) + std::log(V.determinant()) + q);
}

}  // namespace jlcm_test
