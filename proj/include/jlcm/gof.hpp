#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "jlcm/error.hpp"
#include "jlcm/likelihood.hpp"
#include "jlcm/posterior.hpp"
#include "jlcm/prediction.hpp"

namespace jlcm {

struct LongitudinalGofRow {
  int cls = 0;
  std::string marker;
  double bin_low = 0.0;
  double bin_high = 0.0;
  int n_obs = 0;
  double weight = 0.0;  // sum of posterior weights of the observations in the bin
  double observed = 0.0;
  double predicted = 0.0;
};

// Empirical Bayes prediction of the latent level at a subject's observation times in class g:
// X beta + Z (mu + b), b = U'U Z' V^-1 (h - m), on the marker scale.
inline Eigen::VectorXd subject_predictions(const DimensionDesign& dd, const DimensionClassParams& p,
                                           const std::vector<LinkFunction>& links, const std::vector<double>& sigma) {
  const auto mom = dimension_moments(dd, p, sigma);
  Eigen::VectorXd h(dd.rows());
  for (Eigen::Index r = 0; r < dd.rows(); ++r)
    h(r) = link_apply(dd.y(r), links[static_cast<std::size_t>(dd.marker[static_cast<std::size_t>(r)])]).transformed;
  const Eigen::MatrixXd B = p.U.transpose() * p.U;
  const Eigen::VectorXd b = B * dd.Z.transpose() * mom.cov.llt().solve(h - mom.mean);
  Eigen::VectorXd lambda = mom.mean;
  if (b.size() > 0) lambda.noalias() += dd.Z * b;
  Eigen::VectorXd out(dd.rows());
  for (Eigen::Index r = 0; r < dd.rows(); ++r)
    out(r) = link_invert(lambda(r), links[static_cast<std::size_t>(dd.marker[static_cast<std::size_t>(r)])]).value;
  return out;
}

// Per class, marker and time bin [k w, (k+1) w): posterior-weighted means of the observations
// and of their subject-specific class predictions. Empty bins are omitted.
inline std::vector<LongitudinalGofRow> gof_longitudinal(const JointModel& model, const Eigen::VectorXd& theta,
                                                        const PosteriorClassification& pc, double bin_width = 1.0) {
  if (!(bin_width > 0.0)) throw ConfigError("bin width must be positive");
  const auto& layout = model.layout();
  const auto& spec = model.spec();
  const std::span<const double> th(theta.data(), static_cast<std::size_t>(theta.size()));
  struct Acc {
    int n = 0;
    double w = 0.0, o = 0.0, p = 0.0;
  };
  std::map<std::tuple<int, int, long>, Acc> acc;
  for (std::size_t i = 0; i < model.subjects(); ++i) {
    const auto& sd = model.designs()[i];
    for (std::size_t d = 0; d < sd.dims.size(); ++d) {
      const auto& dd = sd.dims[d];
      if (dd.rows() == 0) continue;
      const auto links = model.dimension_links(th, static_cast<int>(d));
      const auto sigma = model.dimension_sigma(th, static_cast<int>(d));
      for (int g = 0; g < model.classes(); ++g) {
        const double w = pc.probs(static_cast<Eigen::Index>(i), g);
        const auto pred = subject_predictions(dd, layout.dimension_class(th, static_cast<int>(d), g), links, sigma);
        for (Eigen::Index r = 0; r < dd.rows(); ++r) {
          const long bin = static_cast<long>(std::floor(dd.time(r) / bin_width));
          auto& a = acc[{g, dd.marker[static_cast<std::size_t>(r)], bin}];
          ++a.n;
          a.w += w;
          a.o += w * dd.y(r);
          a.p += w * pred(r);
        }
      }
    }
  }
  std::vector<LongitudinalGofRow> out;
  for (const auto& [key, a] : acc) {
    const auto [g, k, bin] = key;
    LongitudinalGofRow row;
    row.cls = g;
    row.marker = spec.markers[static_cast<std::size_t>(k)].name;
    row.bin_low = static_cast<double>(bin) * bin_width;
    row.bin_high = static_cast<double>(bin + 1) * bin_width;
    row.n_obs = a.n;
    row.weight = a.w;
    row.observed = a.w > 0.0 ? a.o / a.w : std::numeric_limits<double>::quiet_NaN();
    row.predicted = a.w > 0.0 ? a.p / a.w : std::numeric_limits<double>::quiet_NaN();
    out.push_back(row);
  }
  return out;
}

struct SurvivalGofRow {
  int cls = 0;
  int cause = 1;
  double low = 0.0;
  double high = 0.0;
  double events = 0.0;    // weighted
  double exposure = 0.0;  // weighted person-time at risk
  double rate = std::numeric_limits<double>::quiet_NaN();
  double lo95 = std::numeric_limits<double>::quiet_NaN();
  double hi95 = std::numeric_limits<double>::quiet_NaN();
  double predicted = std::numeric_limits<double>::quiet_NaN();  // at the interval midpoint
};

namespace detail {

// events[g][l][j], exposure[g][j] over subjects listed in `who` (with multiplicity).
struct OccurrenceExposure {
  std::vector<std::vector<std::vector<double>>> events;
  std::vector<std::vector<double>> exposure;
};

inline OccurrenceExposure occurrence_exposure(const JointModel& model, const Eigen::MatrixXd& probs,
                                              const std::vector<std::size_t>& who, const std::vector<double>& knots) {
  const int G = model.classes(), L = model.spec().hazard.causes;
  const std::size_t J = knots.size() - 1;
  OccurrenceExposure oe;
  oe.events.assign(static_cast<std::size_t>(G), std::vector<std::vector<double>>(static_cast<std::size_t>(L), std::vector<double>(J, 0.0)));
  oe.exposure.assign(static_cast<std::size_t>(G), std::vector<double>(J, 0.0));
  for (std::size_t i : who) {
    const auto& sd = model.designs()[i];
    for (std::size_t j = 0; j < J; ++j) {
      const double a = std::max(knots[j], sd.entry), b = std::min(knots[j + 1], sd.time);
      const bool event_here = sd.cause > 0 && sd.time > knots[j] && (sd.time <= knots[j + 1]);
      for (int g = 0; g < G; ++g) {
        const double w = probs(static_cast<Eigen::Index>(i), g);
        if (b > a) oe.exposure[static_cast<std::size_t>(g)][j] += w * (b - a);
        if (event_here) oe.events[static_cast<std::size_t>(g)][static_cast<std::size_t>(sd.cause - 1)][j] += w;
      }
    }
  }
  return oe;
}

}  // namespace detail

// Posterior-weighted piecewise-constant cause-specific hazards per class with knots every
// knot_spacing time units, occurrence over person-time at risk after entry. Confidence limits
// are percentiles over n_boot resamples of subjects; a resampled subject keeps its posterior
// probabilities since they depend only on its own data and the frozen estimate. The prediction
// is the posterior-weighted mean of the subjects' class-specific hazards at each midpoint.
inline std::vector<SurvivalGofRow> gof_survival(const JointModel& model, const Eigen::VectorXd& theta,
                                                const PosteriorClassification& pc, double knot_spacing = 2.0,
                                                int n_boot = 200, std::uint64_t seed = 1) {
  if (!(knot_spacing > 0.0)) throw ConfigError("knot spacing must be positive");
  if (n_boot < 0) throw ConfigError("number of bootstrap samples must be nonnegative");
  const int G = model.classes(), L = model.spec().hazard.causes;
  const std::size_t N = model.subjects();
  double tmax = 0.0;
  for (const auto& sd : model.designs()) tmax = std::max(tmax, sd.time);
  std::vector<double> knots{0.0};
  while (knots.back() < tmax) knots.push_back(knots.back() + knot_spacing);
  if (knots.size() < 2) knots.push_back(knot_spacing);
  const std::size_t J = knots.size() - 1;

  std::vector<std::size_t> all(N);
  for (std::size_t i = 0; i < N; ++i) all[i] = i;
  const auto point = detail::occurrence_exposure(model, pc.probs, all, knots);

  // boot[g][l][j] holds the resampled rates
  std::vector<std::vector<std::vector<std::vector<double>>>> boot(
      static_cast<std::size_t>(G), std::vector<std::vector<std::vector<double>>>(static_cast<std::size_t>(L), std::vector<std::vector<double>>(J)));
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, N - 1);
  std::vector<std::size_t> who(N);
  for (int b = 0; b < n_boot; ++b) {
    for (auto& w : who) w = pick(rng);
    const auto oe = detail::occurrence_exposure(model, pc.probs, who, knots);
    for (int g = 0; g < G; ++g)
      for (int l = 0; l < L; ++l)
        for (std::size_t j = 0; j < J; ++j) {
          const double e = oe.exposure[static_cast<std::size_t>(g)][j];
          if (e > 0.0)
            boot[static_cast<std::size_t>(g)][static_cast<std::size_t>(l)][j].push_back(
                oe.events[static_cast<std::size_t>(g)][static_cast<std::size_t>(l)][j] / e);
        }
  }

  const auto& layout = model.layout();
  const std::span<const double> th(theta.data(), static_cast<std::size_t>(theta.size()));
  std::vector<SurvivalGofRow> out;
  for (int g = 0; g < G; ++g) {
    const auto hc = layout.hazard_class(th, g);
    const double wsum = pc.probs.col(g).sum();
    for (int l = 0; l < L; ++l)
      for (std::size_t j = 0; j < J; ++j) {
        SurvivalGofRow row;
        row.cls = g;
        row.cause = l + 1;
        row.low = knots[j];
        row.high = knots[j + 1];
        row.events = point.events[static_cast<std::size_t>(g)][static_cast<std::size_t>(l)][j];
        row.exposure = point.exposure[static_cast<std::size_t>(g)][j];
        if (row.exposure > 0.0) row.rate = row.events / row.exposure;
        const auto& bs = boot[static_cast<std::size_t>(g)][static_cast<std::size_t>(l)][j];
        if (!bs.empty()) {
          row.lo95 = quantile(bs, 0.025);
          row.hi95 = quantile(bs, 0.975);
        }
        const double mid = 0.5 * (row.low + row.high);
        double s = 0.0;
        for (std::size_t i = 0; i < N; ++i)
          s += pc.probs(static_cast<Eigen::Index>(i), g) *
               cause_hazard(mid, hc.causes[static_cast<std::size_t>(l)], model.hazard_model(), model.designs()[i].hazard_covariates);
        if (wsum > 0.0) row.predicted = s / wsum;
        out.push_back(row);
      }
  }
  return out;
}

}  // namespace jlcm
