#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "jlcm/data.hpp"
#include "jlcm/design.hpp"
#include "jlcm/error.hpp"
#include "jlcm/gridsearch.hpp"
#include "jlcm/likelihood.hpp"
#include "jlcm/model_spec.hpp"
#include "jlcm/optimizer.hpp"

namespace jlcm {

struct FitSettings {
  OptimizerSettings optimizer;
  int n_starts = 100;
  std::uint64_t seed = 1;
  int jobs = 1;
};

struct ConvergenceReport {
  OptimizerStatus status = OptimizerStatus::max_iterations;
  int iterations = 0;
  bool met_function = false;
  bool met_parameters = false;
  bool met_derivatives = false;
  bool degenerate_class = false;   // some class mass fell below one subject during optimisation
  std::vector<double> class_mass;  // sum_i posterior probabilities at the estimate
  std::string message;
};

struct FitResult {
  ModelSpec spec;  // resolved, spec.classes == G
  Eigen::VectorXd theta;
  std::vector<std::string> names;
  std::optional<Eigen::MatrixXd> variance;
  double loglik = std::numeric_limits<double>::quiet_NaN();
  int G = 1;
  int p = 0;
  int N = 0;
  ConvergenceReport convergence;
  std::vector<IterationRecord> trace;
  std::vector<StartRecord> starts;

  bool converged() const { return convergence.status == OptimizerStatus::converged; }

  Eigen::VectorXd standard_errors() const {
    Eigen::VectorXd se = Eigen::VectorXd::Constant(theta.size(), std::numeric_limits<double>::quiet_NaN());
    if (variance)
      for (Eigen::Index j = 0; j < se.size(); ++j) se(j) = std::sqrt(std::max(0.0, (*variance)(j, j)));
    return se;
  }
};

// Validates, resolves knots and builds the likelihood for G classes.
inline JointModel prepare_model(const Dataset& ds, ModelSpec spec, int G) {
  spec.classes = G;
  spec.check();
  spec = resolve_spec(spec, ds);
  const auto report = validate_dataset(ds, spec);
  if (!report.ok()) {
    std::string msg = "dataset failed validation:";
    for (const auto& e : report.errors) msg += "\n  " + e;
    throw DataError(msg);
  }
  return JointModel(spec, build_designs(ds, spec));
}

// Starting values for a model with identical classes: least squares for the fixed effects of
// each dimension (on standardised marker values for non-identity links), half of the residual
// SD for the random intercept, exponential baselines from crude event rates, zero for
// membership, proportional offsets and covariate effects.
inline Eigen::VectorXd initial_values(const JointModel& model) {
  const auto& layout = model.layout();
  const auto& spec = model.spec();
  const int G = model.classes();
  const auto& designs = model.designs();
  ModelParams mp;
  mp.xi = Eigen::MatrixXd::Zero(G, 1 + static_cast<Eigen::Index>(spec.class_covariates.size()));

  const std::size_t K = spec.markers.size();
  std::vector<double> mean(K, 0.0), sd(K, 1.0);
  {
    std::vector<double> s1(K, 0.0), s2(K, 0.0), n(K, 0.0);
    for (const auto& sd_ : designs)
      for (const auto& dd : sd_.dims)
        for (Eigen::Index r = 0; r < dd.rows(); ++r) {
          const auto k = static_cast<std::size_t>(dd.marker[static_cast<std::size_t>(r)]);
          s1[k] += dd.y(r);
          s2[k] += dd.y(r) * dd.y(r);
          n[k] += 1.0;
        }
    for (std::size_t k = 0; k < K; ++k)
      if (n[k] > 0) {
        mean[k] = s1[k] / n[k];
        const double v = s2[k] / n[k] - mean[k] * mean[k];
        sd[k] = v > 1e-12 ? std::sqrt(v) : 1.0;
      }
  }
  mp.links.resize(K);
  mp.sigma.assign(K, 1.0);
  for (std::size_t k = 0; k < K; ++k) {
    const auto& m = spec.markers[k];
    auto& f = mp.links[k];
    f.kind = m.link;
    if (m.link == LinkKind::linear) {
      f.intercept = -mean[k] / sd[k];
      f.slope = 1.0 / sd[k];
    } else if (m.link == LinkKind::isplines) {
      f.basis = m.basis;
      f.intercept = (m.basis.low - mean[k]) / sd[k];
      const int M = m.basis.size();
      f.coefficients.assign(static_cast<std::size_t>(M), (m.basis.high - m.basis.low) / (sd[k] * M));
    }
  }

  mp.dims.resize(spec.dimensions.size());
  for (std::size_t d = 0; d < spec.dimensions.size(); ++d) {
    const auto& dim = spec.dimensions[d];
    const auto nf = static_cast<Eigen::Index>(dim.fixed.size());
    const auto nr = static_cast<Eigen::Index>(dim.random.size());
    const bool constrained = spec.constrained(static_cast<int>(d));
    // Normal equations on transformed values; the intercept is dropped when it is pinned.
    const Eigen::Index off = constrained ? 1 : 0;
    Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(nf - off, nf - off);
    Eigen::VectorXd xty = Eigen::VectorXd::Zero(nf - off);
    std::vector<std::pair<Eigen::RowVectorXd, double>> rows;
    for (const auto& sd_ : designs) {
      const auto& dd = sd_.dims[d];
      for (Eigen::Index r = 0; r < dd.rows(); ++r) {
        const int k = dd.marker[static_cast<std::size_t>(r)];
        double h = dd.y(r);
        if (spec.markers[static_cast<std::size_t>(k)].link != LinkKind::identity) {
          try {
            h = link_apply(dd.y(r), mp.links[static_cast<std::size_t>(k)]).transformed;
          } catch (const RangeError&) {
            continue;
          }
        }
        const Eigen::RowVectorXd x = dd.X.row(r).tail(nf - off);
        xtx.noalias() += x.transpose() * x;
        xty.noalias() += x.transpose() * h;
        rows.emplace_back(x, h);
      }
    }
    Eigen::VectorXd b = Eigen::VectorXd::Zero(nf);
    if (nf - off > 0 && !rows.empty())
      b.tail(nf - off) = (xtx + 1e-8 * Eigen::MatrixXd::Identity(nf - off, nf - off)).ldlt().solve(xty);
    double rss = 0.0;
    for (const auto& [x, h] : rows) {
      const double e = h - (nf - off > 0 ? x.dot(b.tail(nf - off)) : 0.0);
      rss += e * e;
    }
    const double resid_sd = rows.empty() ? 1.0 : std::max(1e-3, std::sqrt(rss / static_cast<double>(rows.size())));
    for (int k : spec.markers_of(static_cast<int>(d))) mp.sigma[static_cast<std::size_t>(k)] = 0.7 * resid_sd;
    DimensionClassParams p;
    p.beta = b;
    p.mu = Eigen::VectorXd::Zero(nr);
    p.U = Eigen::MatrixXd::Zero(nr, nr);
    for (Eigen::Index r = 0; r < nr; ++r) p.U(r, r) = r == 0 ? 0.5 * resid_sd : 0.1;
    mp.dims[d].assign(static_cast<std::size_t>(G), p);
  }

  const auto& hz = spec.hazard;
  std::vector<double> events(static_cast<std::size_t>(hz.causes), 0.0);
  double exposure = 0.0;
  for (const auto& sd_ : designs) {
    exposure += sd_.time - sd_.entry;
    if (sd_.cause > 0) events[static_cast<std::size_t>(sd_.cause - 1)] += 1.0;
  }
  exposure = std::max(exposure, 1e-12);
  HazardClassParams hc;
  for (int l = 0; l < hz.causes; ++l) {
    const double rate = std::max(events[static_cast<std::size_t>(l)], 0.5) / exposure;
    CauseParams c;
    if (hz.family == HazardFamily::weibull) {
      c.baseline = {rate, 1.0};
    } else {
      const auto e = detail::extended_knots(hz.basis);
      const int k = hz.basis.degree + 1;
      for (int i = 1; i <= hz.basis.size(); ++i)
        c.baseline.push_back(rate * (e[static_cast<std::size_t>(i + k)] - e[static_cast<std::size_t>(i)]) / k);
    }
    c.delta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(hz.covariates.size()));
    hc.causes.push_back(c);
  }
  mp.hazard.assign(static_cast<std::size_t>(G), hc);
  return layout.pack(mp);
}

// Inverse of -H when it is positive definite.
inline std::optional<Eigen::MatrixXd> inverse_negative_hessian(const Eigen::MatrixXd& hessian) {
  const Eigen::MatrixXd neg = -hessian;
  Eigen::LLT<Eigen::MatrixXd> llt(neg);
  if (llt.info() != Eigen::Success) return std::nullopt;
  Eigen::MatrixXd v = llt.solve(Eigen::MatrixXd::Identity(neg.rows(), neg.cols()));
  v = 0.5 * (v + v.transpose()).eval();
  if (!v.allFinite()) return std::nullopt;
  return v;
}

// One Marquardt-Levenberg run on a model; min_class_mass receives the smallest class mass seen.
inline OptimizerResult maximize(const JointModel& model, const Eigen::VectorXd& init, const OptimizerSettings& s,
                                double* min_class_mass = nullptr) {
  auto objective = [&](const Eigen::VectorXd& x) { return model.total_loglik(x); };
  auto derivatives = [&](const Eigen::VectorXd& x) {
    const auto d = model.derivatives(x);
    if (min_class_mass && d.class_mass.size() > 0) *min_class_mass = std::min(*min_class_mass, d.class_mass.minCoeff());
    return Derivatives{d.value, d.gradient, d.hessian};
  };
  return marquardt_levenberg(objective, derivatives, init, s);
}

// Sign-canonical form of theta: entries entering through |x| or x^2 are made nonnegative and
// each row of a Cholesky factor is flipped so its diagonal is nonnegative (B = U'U is unchanged).
// Returns the diagonal sign matrix applied, so a variance transforms as D V D.
inline Eigen::VectorXd canonical_signs(const ParameterLayout& layout, const Eigen::VectorXd& theta) {
  Eigen::VectorXd sign = Eigen::VectorXd::Ones(theta.size());
  for (int j = 0; j < layout.size(); ++j)
    if (layout.info()[static_cast<std::size_t>(j)].transform != Transform::none && theta(j) < 0.0) sign(j) = -1.0;
  for (const auto& ds : layout.dims())
    for (const auto& block : ds.chol) {
      const int q = static_cast<int>(ds.mu.size());
      int e = 0;
      for (int r = 0; r < q; ++r) {
        const Slot& diag = block[static_cast<std::size_t>(e)];
        const double v = diag.free() ? theta(diag.index) : diag.fixed;
        for (int c = r; c < q; ++c, ++e) {
          const Slot& s = block[static_cast<std::size_t>(e)];
          if (s.free() && v < 0.0) sign(s.index) = -1.0;
        }
      }
    }
  return sign;
}

namespace detail {

// Centre and perturbation scale of each G-class parameter: the one-class estimate of the same
// role (0 when the role does not exist there), perturbed only for class-specific entries with the
// one-class standard error (1 when unavailable).
struct StartDesign {
  Eigen::VectorXd center;
  Eigen::VectorXd scale;  // 0 = not perturbed
};

inline StartDesign start_design(const ParameterLayout& to, const FitResult& one_class) {
  std::map<std::string, std::pair<double, double>> by_role;
  const ParameterLayout from(one_class.spec);
  const Eigen::VectorXd se = one_class.standard_errors();
  for (int j = 0; j < from.size(); ++j)
    by_role.emplace(from.info()[static_cast<std::size_t>(j)].role, std::make_pair(one_class.theta(j), se(j)));
  StartDesign sd;
  sd.center = Eigen::VectorXd::Zero(to.size());
  sd.scale = Eigen::VectorXd::Zero(to.size());
  for (int j = 0; j < to.size(); ++j) {
    const auto& info = to.info()[static_cast<std::size_t>(j)];
    auto it = by_role.find(info.role);
    double scale = 1.0;
    if (it != by_role.end()) {
      sd.center(j) = it->second.first;
      if (std::isfinite(it->second.second) && it->second.second > 0.0) scale = it->second.second;
    }
    if (info.cls >= 0) sd.scale(j) = scale;
  }
  return sd;
}

inline void finish(FitResult& fr, const JointModel& model, const OptimizerResult& r, double min_mass) {
  fr.spec = model.spec();
  const Eigen::VectorXd sign = canonical_signs(model.layout(), r.theta);
  fr.theta = r.theta.cwiseProduct(sign);
  fr.names = model.layout().names();
  fr.loglik = r.objective;
  fr.G = model.classes();
  fr.p = model.size();
  fr.N = static_cast<int>(model.subjects());
  fr.trace = r.trace;
  fr.convergence.status = r.status;
  fr.convergence.iterations = r.iterations;
  fr.convergence.met_function = r.met_function;
  fr.convergence.met_parameters = r.met_parameters;
  fr.convergence.met_derivatives = r.met_derivatives;
  fr.convergence.message = r.message;
  if (r.status == OptimizerStatus::converged) {
    try {
      const auto d = model.derivatives(fr.theta);
      fr.variance = inverse_negative_hessian(d.hessian);
      if (!fr.variance) fr.convergence.message = "negative Hessian at the estimate is not positive definite";
      for (Eigen::Index g = 0; g < d.class_mass.size(); ++g) fr.convergence.class_mass.push_back(d.class_mass(g));
      min_mass = std::min(min_mass, d.class_mass.minCoeff());
    } catch (const std::exception& e) {
      fr.convergence.message = e.what();
    }
  }
  fr.convergence.degenerate_class = fr.G > 1 && min_mass < 1.0;
}

}  // namespace detail

// Single-start fit of the one-class model from initial_values.
inline FitResult fit_one_class(const JointModel& model1, const FitSettings& settings) {
  if (model1.classes() != 1) throw std::invalid_argument("fit_one_class needs a one-class model");
  double min_mass = std::numeric_limits<double>::infinity();
  const auto r = maximize(model1, initial_values(model1), settings.optimizer, &min_mass);
  FitResult fr;
  detail::finish(fr, model1, r, min_mass);
  StartRecord rec;
  rec.seed = 0;
  rec.status = r.status;
  rec.loglik = r.objective;
  rec.iterations = r.iterations;
  rec.message = r.message;
  fr.starts.push_back(rec);
  return fr;
}

// Gridsearch over perturbed replications of the one-class estimate. Starts run in parallel and
// each start evaluates its likelihood on a single thread.
inline FitResult fit_classes(const JointModel& model, const FitResult& one_class, const FitSettings& settings) {
  const auto design = detail::start_design(model.layout(), one_class);
  const int n = std::max(1, settings.n_starts);
  JointModel local = model;
  local.set_jobs(n > 1 ? 1 : settings.jobs);
  auto init = [&](int, std::mt19937_64& rng) {
    std::normal_distribution<double> z(0.0, 1.0);
    Eigen::VectorXd x = design.center;
    for (Eigen::Index j = 0; j < x.size(); ++j)
      if (design.scale(j) > 0.0) x(j) += design.scale(j) * z(rng);
    return x;
  };
  std::vector<double> mass(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  auto fit_once = [&](int start, const Eigen::VectorXd& x0) {
    return maximize(local, x0, settings.optimizer, &mass[static_cast<std::size_t>(start)]);
  };
  auto gs = gridsearch(fit_once, n, settings.seed, init, settings.jobs, false);
  FitResult fr;
  detail::finish(fr, model, gs.result, mass[static_cast<std::size_t>(gs.best)]);
  fr.starts = std::move(gs.starts);
  return fr;
}

// fit G = 1, replicate and perturb into G classes, gridsearch, variance at the estimate.
inline FitResult fit_model(const Dataset& ds, const ModelSpec& spec, int G, const FitSettings& settings,
                           const FitResult* one_class = nullptr) {
  JointModel model = prepare_model(ds, spec, G);
  model.set_jobs(settings.jobs);
  if (G == 1) return fit_one_class(model, settings);
  std::optional<FitResult> own;
  if (!one_class) {
    JointModel model1 = prepare_model(ds, model.spec(), 1);
    model1.set_jobs(settings.jobs);
    own = fit_one_class(model1, settings);
    one_class = &*own;
  }
  return fit_classes(model, *one_class, settings);
}

}  // namespace jlcm
