#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "jlcm/data.hpp"
#include "jlcm/error.hpp"
#include "jlcm/fit.hpp"
#include "jlcm/parameters.hpp"
#include "jlcm/splines.hpp"
#include "jlcm/survival.hpp"

namespace jlcm {

struct TrajectoryPoint {
  int cls = 0;  // 0-based
  double time = 0.0;
  double latent_mean = 0.0;
  std::string marker;
  double pred = 0.0;
  double lo95 = std::numeric_limits<double>::quiet_NaN();
  double hi95 = std::numeric_limits<double>::quiet_NaN();
  bool out_of_range = false;  // the latent level is outside the range of the link
};

// Draws from N(theta, V) through a symmetric square root with negative eigenvalues clipped at 0.
inline std::vector<Eigen::VectorXd> parameter_draws(const Eigen::VectorXd& theta, const Eigen::MatrixXd& variance,
                                                    int n, std::uint64_t seed) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(variance);
  const Eigen::MatrixXd root = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<Eigen::VectorXd> out;
  for (int r = 0; r < n; ++r) {
    Eigen::VectorXd e(theta.size());
    for (Eigen::Index j = 0; j < e.size(); ++j) e(j) = z(rng);
    out.push_back(theta + root * e);
  }
  return out;
}

// Empirical quantile with linear interpolation between order statistics.
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

namespace detail {

inline double latent_mean(const ParameterLayout& layout, std::span<const double> theta, int d, int g, double t,
                          const CovariateSet& profile) {
  const auto& dim = layout.spec().dimensions[static_cast<std::size_t>(d)];
  const auto p = layout.dimension_class(theta, d, g);
  double v = 0.0;
  for (std::size_t f = 0; f < dim.fixed.size(); ++f) v += dim.fixed[f].term.eval(t, profile) * p.beta(static_cast<Eigen::Index>(f));
  for (std::size_t r = 0; r < dim.random.size(); ++r) v += dim.random[r].eval(t, profile) * p.mu(static_cast<Eigen::Index>(r));
  return v;
}

}  // namespace detail

// Mean latent level and marker-scale prediction of every class on a time grid for a covariate
// profile. Bands are the 2.5 and 97.5 percentiles of the marker-scale prediction over n_draws
// parameter draws (none when n_draws is 0 or the fit has no variance).
inline std::vector<TrajectoryPoint> class_trajectories(const FitResult& fit, const std::vector<double>& grid,
                                                       const CovariateSet& profile, int n_draws,
                                                       std::uint64_t seed) {
  const ParameterLayout layout(fit.spec);
  const auto& spec = fit.spec;
  std::vector<Eigen::VectorXd> draws;
  if (n_draws > 0 && fit.variance) draws = parameter_draws(fit.theta, *fit.variance, n_draws, seed);
  auto span_of = [](const Eigen::VectorXd& x) { return std::span<const double>(x.data(), static_cast<std::size_t>(x.size())); };
  std::vector<TrajectoryPoint> out;
  for (int g = 0; g < fit.G; ++g)
    for (std::size_t k = 0; k < spec.markers.size(); ++k) {
      const int d = spec.markers[k].dimension;
      const LinkFunction link = layout.link(span_of(fit.theta), static_cast<int>(k));
      std::vector<LinkFunction> draw_links;
      for (const auto& x : draws) draw_links.push_back(layout.link(span_of(x), static_cast<int>(k)));
      for (double t : grid) {
        TrajectoryPoint pt;
        pt.cls = g;
        pt.time = t;
        pt.marker = spec.markers[k].name;
        pt.latent_mean = detail::latent_mean(layout, span_of(fit.theta), d, g, t, profile);
        const auto inv = link_invert(pt.latent_mean, link);
        pt.pred = inv.value;
        pt.out_of_range = inv.out_of_range;
        if (!draws.empty()) {
          std::vector<double> v;
          v.reserve(draws.size());
          for (std::size_t r = 0; r < draws.size(); ++r)
            v.push_back(link_invert(detail::latent_mean(layout, span_of(draws[r]), d, g, t, profile), draw_links[r]).value);
          pt.lo95 = quantile(v, 0.025);
          pt.hi95 = quantile(v, 0.975);
        }
        out.push_back(pt);
      }
    }
  return out;
}

struct IncidencePoint {
  int cls = 0;
  int cause = 1;
  double time = 0.0;
  double cuminc = 0.0;
};

// Class- and cause-specific cumulative incidence on a grid for a covariate profile.
inline std::vector<IncidencePoint> class_cumulative_incidence(const FitResult& fit, const std::vector<double>& grid,
                                                              const CovariateSet& profile) {
  const ParameterLayout layout(fit.spec);
  const HazardModel model = HazardModel::from(fit.spec);
  const auto& hz = fit.spec.hazard;
  Eigen::VectorXd xt(static_cast<Eigen::Index>(hz.covariates.size()));
  for (std::size_t c = 0; c < hz.covariates.size(); ++c) xt(static_cast<Eigen::Index>(c)) = profile.at(hz.covariates[c].name);
  std::vector<double> sorted = grid;
  std::sort(sorted.begin(), sorted.end());
  std::vector<IncidencePoint> out;
  const std::span<const double> th(fit.theta.data(), static_cast<std::size_t>(fit.theta.size()));
  for (int g = 0; g < fit.G; ++g) {
    const auto hc = layout.hazard_class(th, g);
    for (int l = 0; l < hz.causes; ++l) {
      const auto f = cumulative_incidence(sorted, l, hc, model, xt);
      for (std::size_t j = 0; j < sorted.size(); ++j) out.push_back({g, l + 1, sorted[j], f[j]});
    }
  }
  return out;
}

}  // namespace jlcm
