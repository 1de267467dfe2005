#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "jlcm/data.hpp"
#include "jlcm/error.hpp"
#include "jlcm/likelihood.hpp"
#include "jlcm/model_spec.hpp"
#include "jlcm/parameters.hpp"

namespace jlcm {

// Baseline hazard of one cause in one class: Weibull (scale, shape) or piecewise constant rates
// on [0, c_1), [c_1, c_2), ..., [c_m, inf).
struct BaselineTruth {
  bool weibull = true;
  double scale = 1.0;
  double shape = 1.0;
  std::vector<double> cuts;
  std::vector<double> rates;

  double hazard(double t) const {
    if (weibull) return scale * shape * std::pow(scale * t, shape - 1.0);
    std::size_t j = 0;
    while (j < cuts.size() && t >= cuts[j]) ++j;
    return rates[j];
  }

  double cumulative(double t) const {
    if (!(t > 0.0)) return 0.0;
    if (weibull) return std::pow(scale * t, shape);
    double acc = 0.0, prev = 0.0;
    for (std::size_t j = 0; j <= cuts.size(); ++j) {
      const double end = j < cuts.size() ? cuts[j] : std::numeric_limits<double>::infinity();
      if (t <= end) return acc + rates[j] * (t - prev);
      acc += rates[j] * (end - prev);
      prev = end;
    }
    return acc;
  }

  // Smallest t with cumulative(t) = v; infinity when the hazard is exhausted.
  double inverse(double v) const {
    if (!(v > 0.0)) return 0.0;
    if (weibull) return std::pow(v, 1.0 / shape) / scale;
    double acc = 0.0, prev = 0.0;
    for (std::size_t j = 0; j <= cuts.size(); ++j) {
      const double end = j < cuts.size() ? cuts[j] : std::numeric_limits<double>::infinity();
      const double seg = rates[j] * (end - prev);
      if (acc + seg >= v) return rates[j] > 0.0 ? prev + (v - acc) / rates[j] : std::numeric_limits<double>::infinity();
      acc += seg;
      prev = end;
    }
    return std::numeric_limits<double>::infinity();
  }

  // Multiplies the hazard by exp(c).
  BaselineTruth scaled(double c) const {
    BaselineTruth b = *this;
    if (weibull) b.scale = scale * std::exp(c / shape);
    else
      for (auto& r : b.rates) r *= std::exp(c);
    return b;
  }
};

struct CauseTruth {
  std::vector<BaselineTruth> classes;  // per class, offsets already applied
  bool proportional = false;
  BaselineTruth shared;                // proportional mode only
  std::vector<double> log_ratio;       // proportional mode only, per class (last 0)
  std::vector<Eigen::VectorXd> delta;  // per class, over the hazard covariates
};

struct DimensionTruth {
  std::vector<Eigen::VectorXd> beta;  // per class, over the fixed terms
  std::vector<Eigen::VectorXd> mu;    // per class, over the random terms
  std::vector<Eigen::MatrixXd> B;     // one matrix, or one per class
};

struct MarkerTruth {
  double sigma = 1.0;
  LinkFunction link;  // identity or linear
};

struct CovariateTruth {
  std::string name;
  std::string distribution = "bernoulli";  // bernoulli | normal
  double p = 0.5;
  double mean = 0.0;
  double sd = 1.0;
};

struct ScenarioSpec {
  ModelSpec model;
  std::vector<double> proportions;  // used when xi is empty
  Eigen::MatrixXd xi;               // G x (1 + class covariates), last row 0
  std::vector<DimensionTruth> dimensions;
  std::vector<MarkerTruth> markers;
  std::vector<CauseTruth> causes;
  std::vector<CovariateTruth> covariates;
  int N = 500;
  double visit_interval = 1.0;
  double visit_jitter = 0.1;
  double max_visit_time = std::numeric_limits<double>::infinity();
  double missing = 0.0;  // probability that a marker is unmeasured at a visit
  double administrative_censoring = std::numeric_limits<double>::infinity();
  std::optional<std::pair<double, double>> uniform_censoring;
  std::optional<double> max_entry;  // delayed entry drawn on [0, max_entry]
  std::uint64_t seed = 1;

  int classes() const { return model.classes; }

  Eigen::VectorXd class_probs(const Eigen::VectorXd& xc) const {
    if (xi.size() == 0) return Eigen::Map<const Eigen::VectorXd>(proportions.data(), static_cast<Eigen::Index>(proportions.size()));
    return class_membership_probs(xi, xc);
  }
};

namespace detail {

inline BaselineTruth baseline_from_json(const json& j) {
  BaselineTruth b;
  if (j.contains("weibull")) {
    const auto w = j.at("weibull").get<std::vector<double>>();
    if (w.size() != 2 || !(w[0] > 0.0) || !(w[1] > 0.0)) throw ConfigError("weibull truth needs positive [scale, shape]");
    b.weibull = true;
    b.scale = w[0];
    b.shape = w[1];
  } else if (j.contains("rates")) {
    b.weibull = false;
    b.rates = j.at("rates").get<std::vector<double>>();
    b.cuts = j.value("cuts", std::vector<double>{});
    if (b.rates.size() != b.cuts.size() + 1) throw ConfigError("piecewise truth needs one more rate than cut points");
    for (double r : b.rates)
      if (!(r >= 0.0)) throw ConfigError("piecewise rates must be nonnegative");
    for (std::size_t i = 0; i < b.cuts.size(); ++i)
      if (!(b.cuts[i] > (i ? b.cuts[i - 1] : 0.0))) throw ConfigError("cut points must be positive and increasing");
  } else {
    throw ConfigError("hazard truth needs 'weibull' or 'rates'");
  }
  return b;
}

inline Eigen::VectorXd vec(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline Eigen::MatrixXd mat(const json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (static_cast<Eigen::Index>(rows[r].size()) != m.cols()) throw ConfigError("ragged matrix in scenario");
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  }
  return m;
}

}  // namespace detail

// Scenario file: {"model": <model spec>, "truth": {...}, "design": {...}, "seed": n}.
inline ScenarioSpec scenario_from_json(const json& j) {
  try {
    ScenarioSpec sc;
    sc.model = model_spec_from_json(j.at("model"));
    const int G = sc.model.classes;
    const auto& t = j.at("truth");
    if (t.contains("xi")) {
      sc.xi = detail::mat(t.at("xi"));
      if (sc.xi.rows() != G || sc.xi.cols() != 1 + static_cast<Eigen::Index>(sc.model.class_covariates.size()))
        throw ConfigError("truth.xi must be G x (1 + class covariates)");
    } else {
      sc.proportions = t.at("proportions").get<std::vector<double>>();
      if (static_cast<int>(sc.proportions.size()) != G) throw ConfigError("truth.proportions needs G entries");
      double s = 0.0;
      for (double p : sc.proportions) {
        if (!(p > 0.0)) throw ConfigError("class proportions must be positive");
        s += p;
      }
      if (std::abs(s - 1.0) > 1e-8) throw ConfigError("class proportions must sum to 1");
      if (!sc.model.class_covariates.empty()) throw ConfigError("class-membership covariates need truth.xi");
    }

    const auto& jd = t.at("dimensions");
    if (jd.size() != sc.model.dimensions.size()) throw ConfigError("truth.dimensions must match the model dimensions");
    for (std::size_t d = 0; d < jd.size(); ++d) {
      const auto& dim = sc.model.dimensions[d];
      DimensionTruth dt;
      for (const auto& b : jd[d].at("beta")) {
        dt.beta.push_back(detail::vec(b));
        if (dt.beta.back().size() != static_cast<Eigen::Index>(dim.fixed.size()))
          throw ConfigError("truth beta of dimension '" + dim.name + "' must match its fixed terms");
      }
      if (static_cast<int>(dt.beta.size()) != G) throw ConfigError("truth beta needs one vector per class");
      const auto q = static_cast<Eigen::Index>(dim.random.size());
      if (jd[d].contains("mu"))
        for (const auto& m : jd[d].at("mu")) dt.mu.push_back(detail::vec(m));
      else
        dt.mu.assign(static_cast<std::size_t>(G), Eigen::VectorXd::Zero(q));
      if (!jd[d].contains("B")) throw ConfigError("truth B of dimension '" + dim.name + "' is missing");
      const auto& jb = jd[d].at("B");
      if (!jb.empty() && jb[0].is_array() && !jb[0].empty() && jb[0][0].is_array())
        for (const auto& b : jb) dt.B.push_back(detail::mat(b));
      else
        dt.B.push_back(detail::mat(jb));
      for (const auto& b : dt.B)
        if (b.rows() != q || b.cols() != q) throw ConfigError("truth B of dimension '" + dim.name + "' has wrong size");
      sc.dimensions.push_back(std::move(dt));
    }

    const auto& jm = t.at("markers");
    if (jm.size() != sc.model.markers.size()) throw ConfigError("truth.markers must match the model markers");
    for (const auto& m : jm) {
      MarkerTruth mt;
      mt.sigma = m.at("sigma").get<double>();
      if (!(mt.sigma >= 0.0)) throw ConfigError("marker sigma must be nonnegative");
      const auto link = m.value("link", std::string("identity"));
      if (link == "linear") {
        mt.link.kind = LinkKind::linear;
        mt.link.intercept = m.at("intercept").get<double>();
        mt.link.slope = m.at("slope").get<double>();
        if (!(mt.link.slope > 0.0)) throw ConfigError("linear link slope must be positive");
      } else if (link != "identity") {
        throw ConfigError("simulated links must be identity or linear");
      }
      sc.markers.push_back(mt);
    }

    const auto& jh = t.at("hazard");
    if (static_cast<int>(jh.size()) != sc.model.hazard.causes) throw ConfigError("truth.hazard needs one entry per cause");
    const auto nx = static_cast<Eigen::Index>(sc.model.hazard.covariates.size());
    for (const auto& c : jh) {
      CauseTruth ct;
      if (c.contains("baseline")) {
        ct.proportional = true;
        ct.shared = detail::baseline_from_json(c.at("baseline"));
        ct.log_ratio = c.at("log_ratio").get<std::vector<double>>();
        if (static_cast<int>(ct.log_ratio.size()) != G) throw ConfigError("log_ratio needs G entries");
        for (double r : ct.log_ratio) ct.classes.push_back(ct.shared.scaled(r));
      } else {
        for (const auto& b : c.at("classes")) ct.classes.push_back(detail::baseline_from_json(b));
        if (static_cast<int>(ct.classes.size()) != G) throw ConfigError("hazard truth needs one baseline per class");
      }
      if (c.contains("delta"))
        for (const auto& d : c.at("delta")) ct.delta.push_back(detail::vec(d));
      else
        ct.delta.assign(static_cast<std::size_t>(G), Eigen::VectorXd::Zero(nx));
      if (static_cast<int>(ct.delta.size()) != G) throw ConfigError("hazard delta needs one vector per class");
      for (const auto& d : ct.delta)
        if (d.size() != nx) throw ConfigError("hazard delta must match the hazard covariates");
      sc.causes.push_back(std::move(ct));
    }

    const auto& ds = j.at("design");
    sc.N = ds.value("N", 500);
    if (sc.N < 1) throw ConfigError("design.N must be >= 1");
    if (ds.contains("visits")) {
      const auto& v = ds.at("visits");
      sc.visit_interval = v.value("interval", 1.0);
      sc.visit_jitter = v.value("jitter", 0.1);
      if (v.contains("max_time")) sc.max_visit_time = v.at("max_time").get<double>();
      sc.missing = v.value("missing", 0.0);
      if (!(sc.visit_interval > 0.0) || sc.visit_jitter < 0.0 || sc.visit_jitter >= sc.visit_interval / 2)
        throw ConfigError("visit interval must be positive and jitter below half of it");
    }
    if (ds.contains("censoring")) {
      const auto& c = ds.at("censoring");
      if (c.contains("administrative")) sc.administrative_censoring = c.at("administrative").get<double>();
      if (c.contains("uniform")) {
        const auto u = c.at("uniform").get<std::vector<double>>();
        if (u.size() != 2 || !(u[0] >= 0.0 && u[1] > u[0])) throw ConfigError("uniform censoring needs [a, b] with 0 <= a < b");
        sc.uniform_censoring = std::make_pair(u[0], u[1]);
      }
    }
    if (ds.contains("truncation")) sc.max_entry = ds.at("truncation").at("max_entry").get<double>();
    if (ds.contains("covariates"))
      for (const auto& c : ds.at("covariates")) {
        CovariateTruth ct;
        ct.name = c.at("name").get<std::string>();
        ct.distribution = c.value("distribution", std::string("bernoulli"));
        ct.p = c.value("p", 0.5);
        ct.mean = c.value("mean", 0.0);
        ct.sd = c.value("sd", 1.0);
        if (ct.distribution != "bernoulli" && ct.distribution != "normal")
          throw ConfigError("covariate distribution must be bernoulli or normal");
        sc.covariates.push_back(ct);
      }
    for (const auto& name : sc.model.referenced_covariates())
      if (std::none_of(sc.covariates.begin(), sc.covariates.end(), [&](const auto& c) { return c.name == name; }))
        throw ConfigError("covariate '" + name + "' is used by the model but not generated");
    sc.seed = j.value("seed", std::uint64_t{1});
    return sc;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scenario: ") + e.what());
  }
}

inline ScenarioSpec load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return scenario_from_json(j);
}

struct EventDraw {
  double time = 0.0;
  int cause = 0;  // 0 = censored
};

// Latent event time of each cause by inverse transform of its cumulative hazard, t_l =
// Lambda_l^-1(-log u_l / exp(x'delta_l)); the earliest cause wins and times beyond `censor` are
// censored there.
inline EventDraw draw_event_time(const std::vector<CauseTruth>& causes, int g, const Eigen::VectorXd& xt,
                                 std::span<const double> u,
                                 double censor = std::numeric_limits<double>::infinity()) {
  EventDraw ev{std::numeric_limits<double>::infinity(), 0};
  for (std::size_t l = 0; l < causes.size(); ++l) {
    const auto& c = causes[l];
    const double lp = xt.size() ? c.delta[static_cast<std::size_t>(g)].dot(xt) : 0.0;
    const double t = c.classes[static_cast<std::size_t>(g)].inverse(-std::log(u[l]) / std::exp(lp));
    if (t < ev.time) ev = {t, static_cast<int>(l) + 1};
  }
  if (!(ev.time <= censor)) ev = {censor, 0};
  return ev;
}

struct SimulatedSample {
  Dataset dataset;
  std::vector<int> classes;  // true class per subject, dataset order
};

namespace detail {

// Factor with F F' = B for positive semidefinite B.
inline Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& B) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(B);
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal();
}

inline std::string subject_id(int i, int n) {
  std::string s = std::to_string(i + 1);
  const auto width = std::to_string(n).size();
  return "s" + std::string(width - std::min(width, s.size()), '0') + s;
}

}  // namespace detail

// Draws a cohort: class, covariates, random effects, event and censoring times, then visits on
// the annual grid (jittered) strictly before the observed time. With delayed entry, subjects whose
// observed time precedes entry are redrawn and visits start at entry.
inline SimulatedSample simulate_sample(const ScenarioSpec& sc, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto open_unif = [&] {
    double u;
    do u = unif(rng);
    while (!(u > 0.0 && u < 1.0));
    return u;
  };
  const ModelSpec& m = sc.model;
  const int G = m.classes;
  std::vector<std::vector<Eigen::MatrixXd>> factors(m.dimensions.size());
  for (std::size_t d = 0; d < m.dimensions.size(); ++d)
    for (const auto& B : sc.dimensions[d].B) factors[d].push_back(detail::psd_factor(B));

  SimulatedSample out;
  for (int i = 0; i < sc.N; ++i) {
    Subject s;
    s.id = detail::subject_id(i, sc.N);
    int g = 0;
    std::vector<Eigen::VectorXd> effects(m.dimensions.size());
    while (true) {
      s.covariates = {};
      for (const auto& c : sc.covariates)
        s.covariates.values[c.name] = c.distribution == "bernoulli" ? (unif(rng) < c.p ? 1.0 : 0.0)
                                                                    : c.mean + c.sd * normal(rng);
      Eigen::VectorXd xc(static_cast<Eigen::Index>(m.class_covariates.size()));
      for (std::size_t c = 0; c < m.class_covariates.size(); ++c)
        xc(static_cast<Eigen::Index>(c)) = s.covariates.at(m.class_covariates[c]);
      const Eigen::VectorXd pi = sc.class_probs(xc);
      const double u = unif(rng);
      double acc = 0.0;
      g = G - 1;
      for (int k = 0; k < G; ++k) {
        acc += pi(k);
        if (u < acc) {
          g = k;
          break;
        }
      }
      for (std::size_t d = 0; d < m.dimensions.size(); ++d) {
        const auto& dt = sc.dimensions[d];
        const auto& F = factors[d][factors[d].size() == 1 ? 0 : static_cast<std::size_t>(g)];
        Eigen::VectorXd z(F.cols());
        for (Eigen::Index r = 0; r < z.size(); ++r) z(r) = normal(rng);
        effects[d] = dt.mu[static_cast<std::size_t>(g)] + F * z;
      }
      Eigen::VectorXd xt(static_cast<Eigen::Index>(m.hazard.covariates.size()));
      for (std::size_t c = 0; c < m.hazard.covariates.size(); ++c)
        xt(static_cast<Eigen::Index>(c)) = s.covariates.at(m.hazard.covariates[c].name);
      std::vector<double> u_causes(sc.causes.size());
      for (auto& v : u_causes) v = open_unif();
      double censor = sc.administrative_censoring;
      if (sc.uniform_censoring)
        censor = std::min(censor, sc.uniform_censoring->first +
                                      (sc.uniform_censoring->second - sc.uniform_censoring->first) * unif(rng));
      const auto ev = draw_event_time(sc.causes, g, xt, u_causes, censor);
      double entry = 0.0;
      if (sc.max_entry) entry = *sc.max_entry * unif(rng);
      if (!(ev.time > entry)) continue;
      s.survival = {s.id, entry, ev.time, ev.cause};
      break;
    }

    const double last = std::min(s.survival.observed_time, sc.max_visit_time);
    for (int v = 0;; ++v) {
      double t = s.survival.entry_time + v * sc.visit_interval;
      if (v > 0) t += sc.visit_jitter * (2.0 * unif(rng) - 1.0);
      if (t >= s.survival.observed_time || t > last) break;
      for (std::size_t d = 0; d < m.dimensions.size(); ++d) {
        const auto& dim = m.dimensions[d];
        const auto& dt = sc.dimensions[d];
        double lambda = 0.0;
        for (std::size_t f = 0; f < dim.fixed.size(); ++f)
          lambda += dim.fixed[f].term.eval(t, s.covariates) * dt.beta[static_cast<std::size_t>(g)](static_cast<Eigen::Index>(f));
        for (std::size_t r = 0; r < dim.random.size(); ++r)
          lambda += dim.random[r].eval(t, s.covariates) * effects[d](static_cast<Eigen::Index>(r));
        for (int k : m.markers_of(static_cast<int>(d))) {
          const auto& mt = sc.markers[static_cast<std::size_t>(k)];
          const double e = mt.sigma * normal(rng);
          if (sc.missing > 0.0 && unif(rng) < sc.missing) continue;
          const double y = link_invert(lambda + e, mt.link).value;
          s.observations.push_back({s.id, m.markers[static_cast<std::size_t>(k)].name, t, y});
        }
      }
    }
    detail::sort_observations(s);
    out.classes.push_back(g);
    out.dataset.subjects.push_back(std::move(s));
  }
  for (const auto& s : out.dataset.subjects)
    if (s.observations.empty())
      out.dataset.warnings.push_back("subject '" + s.id + "' has no marker observations (survival-only contribution)");
  return out;
}

// The generative truth in the packed parameterisation of `layout` (which must describe the same
// model). Entries without a counterpart (piecewise baselines, a Weibull truth under an M-spline
// model) are NaN.
inline Eigen::VectorXd true_theta(const ScenarioSpec& sc, const ParameterLayout& layout) {
  const ModelSpec& m = layout.spec();
  const int G = m.classes;
  ModelParams mp;
  if (sc.xi.size() > 0) {
    mp.xi = sc.xi;
  } else {
    mp.xi.resize(G, 1);
    for (int g = 0; g < G; ++g)
      mp.xi(g, 0) = std::log(sc.proportions[static_cast<std::size_t>(g)] / sc.proportions[static_cast<std::size_t>(G - 1)]);
  }
  mp.dims.resize(m.dimensions.size());
  for (std::size_t d = 0; d < m.dimensions.size(); ++d) {
    const auto& dt = sc.dimensions[d];
    for (int g = 0; g < G; ++g) {
      DimensionClassParams p;
      p.beta = dt.beta[static_cast<std::size_t>(g)];
      p.mu = dt.mu[static_cast<std::size_t>(g)];
      const auto& B = dt.B[dt.B.size() == 1 ? 0 : static_cast<std::size_t>(g)];
      Eigen::LLT<Eigen::MatrixXd> llt(B);
      p.U = llt.info() == Eigen::Success ? Eigen::MatrixXd(llt.matrixU()) : Eigen::MatrixXd::Zero(B.rows(), B.cols());
      mp.dims[d].push_back(p);
    }
  }
  for (std::size_t k = 0; k < m.markers.size(); ++k) {
    mp.links.push_back(sc.markers[k].link);
    mp.sigma.push_back(sc.markers[k].sigma);
  }
  bool representable = m.hazard.family == HazardFamily::weibull;
  for (int g = 0; g < G; ++g) {
    HazardClassParams hc;
    for (const auto& c : sc.causes) {
      CauseParams cp;
      const auto& b = m.hazard.proportional && c.proportional ? c.shared : c.classes[static_cast<std::size_t>(g)];
      if (!b.weibull) representable = false;
      cp.baseline = {b.scale, b.shape};
      if (m.hazard.proportional) {
        if (!c.proportional) representable = false;
        else cp.log_ratio = c.log_ratio[static_cast<std::size_t>(g)] - c.log_ratio.back();
      }
      cp.delta = c.delta[static_cast<std::size_t>(g)];
      hc.causes.push_back(cp);
    }
    mp.hazard.push_back(hc);
  }
  if (m.hazard.proportional)  // the reference class carries the shared baseline
    for (auto& hc : mp.hazard)
      for (std::size_t l = 0; l < hc.causes.size(); ++l)
        if (sc.causes[l].proportional) {
          const auto b = sc.causes[l].shared.scaled(sc.causes[l].log_ratio.back());
          hc.causes[l].baseline = {b.scale, b.shape};
        }
  if (m.hazard.family == HazardFamily::msplines)
    for (auto& hc : mp.hazard)
      for (auto& c : hc.causes) c.baseline.assign(static_cast<std::size_t>(layout.baseline_size()), 0.0);
  Eigen::VectorXd theta = layout.pack(mp);
  if (!representable)
    for (int j = 0; j < layout.size(); ++j)
      if (layout.info()[static_cast<std::size_t>(j)].block == "zeta") theta(j) = std::numeric_limits<double>::quiet_NaN();
  return theta;
}

}  // namespace jlcm
