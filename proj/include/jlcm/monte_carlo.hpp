#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "jlcm/error.hpp"
#include "jlcm/fit.hpp"
#include "jlcm/parallel.hpp"
#include "jlcm/posterior.hpp"
#include "jlcm/simulator.hpp"

namespace jlcm {

// theta of the same model with classes relabelled so that new class g is old class perm[g].
// Quantities defined relative to the reference class (membership intercepts, pinned latent
// intercepts, proportional hazard offsets) are re-expressed against the new reference.
inline Eigen::VectorXd permute_classes(const ParameterLayout& layout, const Eigen::VectorXd& theta,
                                       const std::vector<int>& perm) {
  const auto& spec = layout.spec();
  const int G = layout.classes();
  const std::span<const double> th(theta.data(), static_cast<std::size_t>(theta.size()));
  const ModelParams old = layout.unpack(th);
  ModelParams p = old;
  const int ref = perm[static_cast<std::size_t>(G - 1)];
  for (int g = 0; g < G; ++g) {
    const int o = perm[static_cast<std::size_t>(g)];
    p.xi.row(g) = old.xi.row(o);
    for (std::size_t d = 0; d < p.dims.size(); ++d) p.dims[d][static_cast<std::size_t>(g)] = old.dims[d][static_cast<std::size_t>(o)];
    p.hazard[static_cast<std::size_t>(g)] = old.hazard[static_cast<std::size_t>(o)];
  }
  for (std::size_t d = 0; d < spec.dimensions.size(); ++d) {
    if (!spec.constrained(static_cast<int>(d))) continue;
    if (spec.dimensions[d].class_specific_covariance && spec.dimensions[d].dispersion == Dispersion::b11 && G > 1)
      throw ConfigError("class relabelling is not available with class-specific covariance pinned by b11");
    if (spec.dimensions[d].fixed.empty() || !spec.dimensions[d].fixed[0].class_specific) continue;
    const double shift = old.dims[d][static_cast<std::size_t>(ref)].beta(0);
    for (int g = 0; g < G; ++g) p.dims[d][static_cast<std::size_t>(g)].beta(0) -= shift;
    for (int k : spec.markers_of(static_cast<int>(d))) p.links[static_cast<std::size_t>(k)].intercept -= shift;
  }
  if (spec.hazard.proportional) {
    for (std::size_t l = 0; l < static_cast<std::size_t>(spec.hazard.causes); ++l) {
      const double r = old.hazard[static_cast<std::size_t>(ref)].causes[l].log_ratio;
      for (int g = 0; g < G; ++g) {
        auto& c = p.hazard[static_cast<std::size_t>(g)].causes[l];
        c.log_ratio -= r;
        const auto& base = old.hazard[0].causes[l].baseline;
        if (spec.hazard.family == HazardFamily::weibull) c.baseline = {base[0] * std::exp(r / base[1]), base[1]};
        else {
          c.baseline = base;
          for (auto& b : c.baseline) b *= std::exp(r);
        }
      }
    }
  }
  return layout.pack(p);
}

// Variance of permute_classes(theta) by the delta method with a central-difference Jacobian.
inline Eigen::MatrixXd permute_variance(const ParameterLayout& layout, const Eigen::VectorXd& theta,
                                        const Eigen::MatrixXd& variance, const std::vector<int>& perm) {
  const Eigen::Index p = theta.size();
  Eigen::MatrixXd J(p, p);
  Eigen::VectorXd x = theta;
  for (Eigen::Index j = 0; j < p; ++j) {
    const double h = std::max(1e-6, 1e-6 * std::abs(theta(j)));
    x(j) = theta(j) + h;
    const Eigen::VectorXd fp = permute_classes(layout, x, perm);
    x(j) = theta(j) - h;
    const Eigen::VectorXd fm = permute_classes(layout, x, perm);
    x(j) = theta(j);
    J.col(j) = (fp - fm) / (2.0 * h);
  }
  return J * variance * J.transpose();
}

// Permutation of the estimate closest to the truth (squared distance over class-specific entries
// with a finite truth); lowest lexicographic permutation on ties.
inline std::vector<int> align_classes(const ParameterLayout& layout, const Eigen::VectorXd& estimate,
                                      const Eigen::VectorXd& truth) {
  const int G = layout.classes();
  std::vector<int> perm(static_cast<std::size_t>(G)), best;
  std::iota(perm.begin(), perm.end(), 0);
  double best_d = std::numeric_limits<double>::infinity();
  do {
    const Eigen::VectorXd t = permute_classes(layout, estimate, perm);
    double d = 0.0;
    for (int j = 0; j < layout.size(); ++j)
      if (layout.info()[static_cast<std::size_t>(j)].cls >= 0 && std::isfinite(truth(j))) d += std::pow(t(j) - truth(j), 2);
    if (d < best_d) {
      best_d = d;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// Class proportions implied by membership intercepts (models without class covariates) and
// their delta-method variance.
inline Eigen::VectorXd class_proportions(const ParameterLayout& layout, const Eigen::VectorXd& theta) {
  const Eigen::VectorXd eta =
      layout.membership_logits(std::span<const double>(theta.data(), static_cast<std::size_t>(theta.size())),
                               Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout.spec().class_covariates.size())));
  return class_membership_probs(eta);
}

inline Eigen::MatrixXd class_proportion_variance(const ParameterLayout& layout, const Eigen::VectorXd& theta,
                                                 const Eigen::MatrixXd& variance) {
  const int G = layout.classes();
  const Eigen::VectorXd pi = class_proportions(layout, theta);
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(G, theta.size());
  const int nc = static_cast<int>(layout.spec().class_covariates.size());
  for (int h = 0; h + 1 < G; ++h) {
    const int j = layout.membership_params()[static_cast<std::size_t>(h * (1 + nc))];
    for (int g = 0; g < G; ++g) J(g, j) = pi(g) * ((g == h ? 1.0 : 0.0) - pi(h));
  }
  return J * variance * J.transpose();
}

struct ReplicateRecord {
  int replicate = 0;
  std::uint64_t data_seed = 0;
  std::uint64_t fit_seed = 0;
  bool converged = false;
  bool has_variance = false;
  bool monotone = true;       // every start and the one-class fit
  double loglik = std::numeric_limits<double>::quiet_NaN();
  double accuracy = std::numeric_limits<double>::quiet_NaN();
  double entropy = std::numeric_limits<double>::quiet_NaN();
  double event_proportion = 0.0;
  int converged_starts = 0;
  std::vector<int> permutation;
  std::optional<ModelSpec> spec;  // resolved spec of the fit
  Eigen::VectorXd estimate;  // aligned, theta followed by class proportions
  Eigen::VectorXd se;
  std::string message;
};

struct ParameterSummary {
  std::string name;
  std::string block;  // theta block, or "pi" for class proportions
  double truth = std::numeric_limits<double>::quiet_NaN();
  double mean = std::numeric_limits<double>::quiet_NaN();
  double bias = std::numeric_limits<double>::quiet_NaN();
  double relative_bias = std::numeric_limits<double>::quiet_NaN();
  double empirical_sd = std::numeric_limits<double>::quiet_NaN();
  double mean_se = std::numeric_limits<double>::quiet_NaN();
  double coverage = std::numeric_limits<double>::quiet_NaN();
  int n = 0;
  int n_coverage = 0;
};

struct MonteCarloReport {
  int replicates = 0;
  int converged = 0;
  double convergence_rate = 0.0;
  double mean_accuracy = std::numeric_limits<double>::quiet_NaN();
  double mean_entropy = std::numeric_limits<double>::quiet_NaN();
  double mean_event_proportion = std::numeric_limits<double>::quiet_NaN();
  bool all_monotone = true;
  std::vector<ParameterSummary> parameters;
  std::vector<ReplicateRecord> records;
};

struct MonteCarloSettings {
  int replicates = 100;
  FitSettings fit;  // fit.seed is the master seed of the fits, the scenario seed drives the data
  int jobs = 1;     // replicates in parallel
};

inline ReplicateRecord run_replicate(const ScenarioSpec& sc, int r, const MonteCarloSettings& ms) {
  ReplicateRecord rec;
  rec.replicate = r;
  rec.data_seed = derive_seed(sc.seed, static_cast<std::uint64_t>(r));
  rec.fit_seed = derive_seed(ms.fit.seed, static_cast<std::uint64_t>(r));
  try {
    const auto sample = simulate_sample(sc, rec.data_seed);
    int events = 0;
    for (const auto& s : sample.dataset.subjects) events += s.survival.cause > 0 ? 1 : 0;
    rec.event_proportion = static_cast<double>(events) / static_cast<double>(sample.dataset.subjects.size());
    FitSettings fs = ms.fit;
    fs.seed = rec.fit_seed;
    fs.jobs = 1;
    const int G = sc.model.classes;
    const JointModel model1 = prepare_model(sample.dataset, sc.model, 1);
    const FitResult one = fit_one_class(model1, fs);
    rec.monotone = trace_monotone(one.trace, one.trace.empty() ? one.loglik : one.trace.front().objective - one.trace.front().change_objective);
    const JointModel model = prepare_model(sample.dataset, sc.model, G);
    const FitResult fit = G == 1 ? one : fit_classes(model, one, fs);
    for (const auto& s : fit.starts) {
      rec.monotone = rec.monotone && s.monotone;
      if (s.status == OptimizerStatus::converged) ++rec.converged_starts;
    }
    rec.converged = fit.converged();
    rec.loglik = fit.loglik;
    rec.message = fit.convergence.message;
    if (!rec.converged) return rec;
    const auto& layout = model.layout();
    rec.spec = layout.spec();
    const Eigen::VectorXd truth = true_theta(sc, layout);
    rec.permutation = align_classes(layout, fit.theta, truth);
    const Eigen::VectorXd est = permute_classes(layout, fit.theta, rec.permutation);
    const Eigen::VectorXd pi = class_proportions(layout, est);
    rec.estimate.resize(est.size() + pi.size());
    rec.estimate << est, pi;
    rec.se = Eigen::VectorXd::Constant(rec.estimate.size(), std::numeric_limits<double>::quiet_NaN());
    if (fit.variance) {
      rec.has_variance = true;
      const Eigen::MatrixXd v = permute_variance(layout, fit.theta, *fit.variance, rec.permutation);
      const Eigen::MatrixXd vp = class_proportion_variance(layout, est, v);
      for (Eigen::Index j = 0; j < est.size(); ++j) rec.se(j) = std::sqrt(std::max(0.0, v(j, j)));
      for (Eigen::Index g = 0; g < pi.size(); ++g) rec.se(est.size() + g) = std::sqrt(std::max(0.0, vp(g, g)));
    }
    const auto pc = posterior_probs(model, fit.theta);
    // fitted class perm[g] is the truth's class g
    std::vector<int> to_truth(static_cast<std::size_t>(G));
    for (int g = 0; g < G; ++g) to_truth[static_cast<std::size_t>(rec.permutation[static_cast<std::size_t>(g)])] = g;
    int hits = 0;
    for (std::size_t i = 0; i < pc.assigned.size(); ++i)
      if (to_truth[static_cast<std::size_t>(pc.assigned[i])] == sample.classes[i]) ++hits;
    rec.accuracy = static_cast<double>(hits) / static_cast<double>(pc.assigned.size());
    if (const auto en = entropy(pc.probs)) rec.entropy = *en;
  } catch (const ConvergenceError& e) {
    rec.converged = false;
    rec.message = std::string(e.what()) + "\n" + e.details();
  } catch (const std::exception& e) {
    rec.converged = false;
    rec.message = e.what();
  }
  return rec;
}

// Aggregates replicate records into per-parameter bias and coverage.
inline MonteCarloReport summarize_monte_carlo(const ScenarioSpec& sc, std::vector<ReplicateRecord> records) {
  MonteCarloReport rep;
  rep.replicates = static_cast<int>(records.size());
  const ReplicateRecord* first = nullptr;
  for (const auto& r : records)
    if (r.converged && r.spec && !first) first = &r;
  if (!first) {
    std::string details;
    for (const auto& r : records) details += "replicate " + std::to_string(r.replicate) + ": " + r.message + "\n";
    throw ConvergenceError("none of the " + std::to_string(records.size()) + " replicates converged", details);
  }
  const ModelSpec& spec = *first->spec;
  const ParameterLayout layout(spec);
  const Eigen::VectorXd theta_truth = true_theta(sc, layout);
  const int G = layout.classes();
  Eigen::VectorXd truth(theta_truth.size() + G);
  truth << theta_truth, class_proportions(layout, theta_truth);
  if (!spec.class_covariates.empty()) truth.tail(G).setConstant(std::numeric_limits<double>::quiet_NaN());
  std::vector<std::string> names = layout.names(), blocks;
  for (const auto& i : layout.info()) blocks.push_back(i.block);
  for (int g = 0; g < G; ++g) {
    names.push_back("pi[class" + std::to_string(g + 1) + "]");
    blocks.push_back("pi");
  }
  double acc = 0.0, en = 0.0, ev = 0.0;
  int n_en = 0;
  for (const auto& r : records) {
    rep.all_monotone = rep.all_monotone && r.monotone;
    ev += r.event_proportion;
    if (!r.converged) continue;
    ++rep.converged;
    acc += r.accuracy;
    if (std::isfinite(r.entropy)) {
      en += r.entropy;
      ++n_en;
    }
  }
  rep.convergence_rate = rep.replicates > 0 ? static_cast<double>(rep.converged) / rep.replicates : 0.0;
  if (rep.replicates > 0) rep.mean_event_proportion = ev / rep.replicates;
  rep.mean_accuracy = acc / rep.converged;
  if (n_en > 0) rep.mean_entropy = en / n_en;
  for (Eigen::Index j = 0; j < truth.size(); ++j) {
    ParameterSummary ps;
    ps.name = names[static_cast<std::size_t>(j)];
    ps.block = blocks[static_cast<std::size_t>(j)];
    ps.truth = truth(j);
    double s1 = 0.0, s2 = 0.0, se = 0.0;
    int covered = 0;
    for (const auto& r : records) {
      if (!r.converged || r.estimate.size() != truth.size()) continue;
      const double x = r.estimate(j);
      s1 += x;
      s2 += x * x;
      ++ps.n;
      if (r.has_variance && std::isfinite(r.se(j)) && std::isfinite(ps.truth)) {
        se += r.se(j);
        ++ps.n_coverage;
        if (std::abs(x - ps.truth) <= 1.959963984540054 * r.se(j)) ++covered;
      }
    }
    if (ps.n > 0) {
      ps.mean = s1 / ps.n;
      ps.bias = ps.mean - ps.truth;
      if (ps.truth != 0.0) ps.relative_bias = ps.bias / std::abs(ps.truth);
      if (ps.n > 1) ps.empirical_sd = std::sqrt(std::max(0.0, (s2 - ps.n * ps.mean * ps.mean) / (ps.n - 1)));
    }
    if (ps.n_coverage > 0) {
      ps.mean_se = se / ps.n_coverage;
      ps.coverage = static_cast<double>(covered) / ps.n_coverage;
    }
    rep.parameters.push_back(ps);
  }
  rep.records = std::move(records);
  return rep;
}

// Simulates and fits R replicates; replicate r uses data seed derive_seed(scenario seed, r) and
// fit seed derive_seed(fit seed, r), so results do not depend on the number of workers.
inline MonteCarloReport run_monte_carlo(const ScenarioSpec& sc, const MonteCarloSettings& ms) {
  if (ms.replicates < 1) throw ConfigError("Monte Carlo needs at least one replicate");
  std::vector<ReplicateRecord> records(static_cast<std::size_t>(ms.replicates));
  parallel_for(records.size(), ms.jobs, [&](std::size_t r) { records[r] = run_replicate(sc, static_cast<int>(r), ms); });
  return summarize_monte_carlo(sc, std::move(records));
}

}  // namespace jlcm
