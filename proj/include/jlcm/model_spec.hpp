#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "jlcm/data.hpp"
#include "jlcm/error.hpp"
#include "jlcm/splines.hpp"

namespace jlcm {

using json = nlohmann::json;

inline constexpr int kModelSpecVersion = 1;

// A product of factors: powers of the analysis time and baseline covariates.
// The empty product is the intercept.
struct Term {
  std::string label = "1";
  int time_power = 0;
  std::vector<std::string> covariates;

  bool is_intercept() const { return time_power == 0 && covariates.empty(); }

  static Term parse(const std::string& text) {
    Term t;
    t.label = csv::trim(text);
    if (t.label.empty()) throw ConfigError("empty model term");
    if (t.label == "1") return t;
    std::size_t start = 0;
    while (start <= t.label.size()) {
      auto pos = t.label.find('*', start);
      std::string f = csv::trim(t.label.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
      if (f.empty()) throw ConfigError("malformed term '" + t.label + "'");
      if (f == "1") {
      } else if (f == "time") {
        t.time_power += 1;
      } else if (f.rfind("time^", 0) == 0) {
        int p = 0;
        if (!csv::parse_int(f.substr(5), p) || p < 1) throw ConfigError("malformed time power in '" + t.label + "'");
        t.time_power += p;
      } else {
        t.covariates.push_back(f);
      }
      if (pos == std::string::npos) break;
      start = pos + 1;
    }
    return t;
  }

  double eval(double time, const CovariateSet& cov) const {
    double v = time_power == 0 ? 1.0 : std::pow(time, time_power);
    for (const auto& c : covariates) v *= cov.at(c);
    return v;
  }

  bool operator==(const Term& o) const {
    auto a = covariates, b = o.covariates;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    return time_power == o.time_power && a == b;
  }
};

struct FixedTerm {
  Term term;
  bool class_specific = true;
};

enum class KnotPlacement { quantile, equidistant };
enum class Dispersion { sigma, b11 };
enum class HazardFamily { weibull, msplines };

struct MarkerSpec {
  std::string name;
  int dimension = 0;
  LinkKind link = LinkKind::identity;
  int degree = 2;
  int n_knots = 3;
  KnotPlacement placement = KnotPlacement::quantile;
  std::vector<double> knots;               // explicit interior knots (optional)
  std::optional<std::pair<double, double>> range;  // declared value range (optional)
  SplineBasisSpec basis;                   // filled by resolve_spec for I-spline links
};

struct DimensionSpec {
  std::string name;
  std::vector<FixedTerm> fixed;  // always starts with the intercept
  std::vector<Term> random;      // always starts with the intercept
  bool random_mean = false;
  bool class_specific_covariance = false;
  Dispersion dispersion = Dispersion::sigma;
};

struct HazardCovariate {
  std::string name;
  bool class_specific = false;
};

struct HazardSpec {
  HazardFamily family = HazardFamily::weibull;
  int causes = 1;
  bool proportional = false;
  int n_knots = 3;
  std::vector<double> knots;
  std::vector<HazardCovariate> covariates;
  SplineBasisSpec basis;  // filled by resolve_spec for M-spline hazards
};

struct ModelSpec {
  int spec_version = kModelSpecVersion;
  int classes = 1;
  std::vector<std::string> class_covariates;
  std::vector<DimensionSpec> dimensions;
  std::vector<MarkerSpec> markers;
  HazardSpec hazard;
  bool resolved = false;

  int marker_index(const std::string& name) const {
    for (std::size_t k = 0; k < markers.size(); ++k)
      if (markers[k].name == name) return static_cast<int>(k);
    return -1;
  }

  std::vector<int> markers_of(int d) const {
    std::vector<int> out;
    for (std::size_t k = 0; k < markers.size(); ++k)
      if (markers[k].dimension == d) out.push_back(static_cast<int>(k));
    return out;
  }

  // Dimensions where no marker has an identity link need a location and a dispersion constraint.
  bool constrained(int d) const {
    for (int k : markers_of(d))
      if (markers[k].link == LinkKind::identity) return false;
    return true;
  }

  std::set<std::string> referenced_covariates() const {
    std::set<std::string> out(class_covariates.begin(), class_covariates.end());
    for (const auto& d : dimensions) {
      for (const auto& f : d.fixed) out.insert(f.term.covariates.begin(), f.term.covariates.end());
      for (const auto& r : d.random) out.insert(r.covariates.begin(), r.covariates.end());
    }
    for (const auto& c : hazard.covariates) out.insert(c.name);
    return out;
  }

  void check() const {
    if (spec_version != kModelSpecVersion)
      throw ConfigError("unsupported spec_version " + std::to_string(spec_version));
    if (classes < 1) throw ConfigError("number of classes must be >= 1");
    if (dimensions.empty()) throw ConfigError("at least one dimension is required");
    if (markers.empty()) throw ConfigError("at least one marker is required");
    if (hazard.causes < 1) throw ConfigError("number of causes must be >= 1");
    std::set<std::string> names;
    for (const auto& m : markers) {
      if (!names.insert(m.name).second) throw ConfigError("duplicate marker '" + m.name + "'");
      if (m.dimension < 0 || m.dimension >= static_cast<int>(dimensions.size()))
        throw ConfigError("marker '" + m.name + "' maps to an unknown dimension");
      if (m.link == LinkKind::isplines) {
        if (m.degree < 1 || m.degree > 3) throw ConfigError("marker '" + m.name + "': degree must be 1..3");
        if (m.range && !(m.range->first < m.range->second))
          throw ConfigError("marker '" + m.name + "': range requires low < high");
      }
    }
    for (std::size_t d = 0; d < dimensions.size(); ++d) {
      const auto& dim = dimensions[d];
      if (markers_of(static_cast<int>(d)).empty())
        throw ConfigError("dimension '" + dim.name + "' has no marker");
      if (dim.fixed.empty() || !dim.fixed.front().term.is_intercept())
        throw ConfigError("dimension '" + dim.name + "': fixed effects must start with the intercept");
      if (dim.random.empty() || !dim.random.front().is_intercept())
        throw ConfigError("dimension '" + dim.name + "': random effects must start with the intercept");
      if (dim.random_mean)
        for (const auto& z : dim.random)
          for (const auto& x : dim.fixed)
            if (z == x.term)
              throw ConfigError("dimension '" + dim.name + "': random_mean requires random terms absent from " +
                                "the fixed effects (term '" + z.label + "')");
    }
    if (resolved) {
      for (const auto& m : markers)
        if (m.link == LinkKind::isplines) m.basis.check();
      if (hazard.family == HazardFamily::msplines) hazard.basis.check();
    }
  }
};

namespace detail {

inline LinkKind parse_link(const std::string& s) {
  if (s == "identity") return LinkKind::identity;
  if (s == "linear") return LinkKind::linear;
  if (s == "isplines" || s == "splines") return LinkKind::isplines;
  throw ConfigError("unknown link '" + s + "'");
}

}  // namespace detail

inline ModelSpec model_spec_from_json(const json& j) {
  try {
    ModelSpec s;
    s.spec_version = j.value("spec_version", 0);
    s.classes = j.value("classes", 1);
    if (j.contains("class_membership"))
      for (const auto& c : j.at("class_membership")) s.class_covariates.push_back(c.get<std::string>());

    std::vector<std::string> dim_names;
    for (const auto& jd : j.at("dimensions")) {
      DimensionSpec d;
      d.name = jd.at("name").get<std::string>();
      d.fixed.push_back({Term{}, jd.value("intercept_class_specific", true)});
      if (jd.contains("fixed"))
        for (const auto& f : jd.at("fixed")) {
          FixedTerm ft;
          if (f.is_string()) {
            ft.term = Term::parse(f.get<std::string>());
          } else {
            ft.term = Term::parse(f.at("term").get<std::string>());
            ft.class_specific = f.value("class_specific", true);
          }
          if (ft.term.is_intercept()) {
            d.fixed.front().class_specific = ft.class_specific;
            continue;
          }
          d.fixed.push_back(ft);
        }
      d.random.push_back(Term{});
      if (jd.contains("random"))
        for (const auto& r : jd.at("random")) {
          auto t = Term::parse(r.get<std::string>());
          if (!t.is_intercept()) d.random.push_back(t);
        }
      d.random_mean = jd.value("random_mean", false);
      const auto cov = jd.value("covariance", std::string("common"));
      if (cov == "class_specific") d.class_specific_covariance = true;
      else if (cov != "common") throw ConfigError("unknown covariance '" + cov + "'");
      const auto disp = jd.value("dispersion", std::string("sigma"));
      if (disp == "b11") d.dispersion = Dispersion::b11;
      else if (disp != "sigma") throw ConfigError("unknown dispersion constraint '" + disp + "'");
      dim_names.push_back(d.name);
      s.dimensions.push_back(std::move(d));
    }

    for (const auto& jm : j.at("markers")) {
      MarkerSpec m;
      m.name = jm.at("name").get<std::string>();
      const auto dn = jm.at("dimension").get<std::string>();
      auto it = std::find(dim_names.begin(), dim_names.end(), dn);
      if (it == dim_names.end()) throw ConfigError("marker '" + m.name + "' references unknown dimension '" + dn + "'");
      m.dimension = static_cast<int>(it - dim_names.begin());
      m.link = detail::parse_link(jm.value("link", std::string("identity")));
      m.degree = jm.value("degree", 2);
      if (jm.contains("knots")) {
        if (jm.at("knots").is_array()) {
          m.knots = jm.at("knots").get<std::vector<double>>();
          m.n_knots = static_cast<int>(m.knots.size());
        } else {
          m.n_knots = jm.at("knots").get<int>();
        }
      }
      const auto placement = jm.value("knot_placement", std::string("quantile"));
      if (placement == "equidistant") m.placement = KnotPlacement::equidistant;
      else if (placement != "quantile") throw ConfigError("unknown knot placement '" + placement + "'");
      if (jm.contains("range")) {
        auto r = jm.at("range").get<std::vector<double>>();
        if (r.size() != 2) throw ConfigError("marker '" + m.name + "': range needs two values");
        m.range = std::make_pair(r[0], r[1]);
      }
      if (jm.contains("basis")) {
        const auto& b = jm.at("basis");
        m.basis.degree = b.at("degree").get<int>();
        m.basis.interior_knots = b.at("interior_knots").get<std::vector<double>>();
        m.basis.low = b.at("low").get<double>();
        m.basis.high = b.at("high").get<double>();
      }
      s.markers.push_back(std::move(m));
    }

    const auto& jh = j.at("hazard");
    const auto fam = jh.value("family", std::string("weibull"));
    if (fam == "msplines" || fam == "splines") s.hazard.family = HazardFamily::msplines;
    else if (fam != "weibull") throw ConfigError("unknown hazard family '" + fam + "'");
    s.hazard.causes = jh.value("causes", 1);
    const auto base = jh.value("baseline", std::string("class_specific"));
    if (base == "proportional") s.hazard.proportional = true;
    else if (base != "class_specific") throw ConfigError("unknown baseline mode '" + base + "'");
    if (jh.contains("knots")) {
      if (jh.at("knots").is_array()) {
        s.hazard.knots = jh.at("knots").get<std::vector<double>>();
        s.hazard.n_knots = static_cast<int>(s.hazard.knots.size());
      } else {
        s.hazard.n_knots = jh.at("knots").get<int>();
      }
    }
    if (jh.contains("covariates"))
      for (const auto& c : jh.at("covariates")) {
        if (c.is_string()) s.hazard.covariates.push_back({c.get<std::string>(), false});
        else s.hazard.covariates.push_back({c.at("name").get<std::string>(), c.value("class_specific", false)});
      }
    if (jh.contains("basis")) {
      const auto& b = jh.at("basis");
      s.hazard.basis.degree = b.at("degree").get<int>();
      s.hazard.basis.interior_knots = b.at("interior_knots").get<std::vector<double>>();
      s.hazard.basis.low = b.at("low").get<double>();
      s.hazard.basis.high = b.at("high").get<double>();
    }
    s.resolved = j.value("resolved", false);
    s.check();
    return s;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model spec: ") + e.what());
  }
}

inline json to_json(const ModelSpec& s) {
  json j;
  j["spec_version"] = s.spec_version;
  j["classes"] = s.classes;
  j["class_membership"] = s.class_covariates;
  auto basis_json = [](const SplineBasisSpec& b) {
    return json{{"degree", b.degree}, {"interior_knots", b.interior_knots}, {"low", b.low}, {"high", b.high}};
  };
  json dims = json::array();
  for (const auto& d : s.dimensions) {
    json jd;
    jd["name"] = d.name;
    jd["intercept_class_specific"] = d.fixed.front().class_specific;
    json fixed = json::array();
    for (std::size_t t = 1; t < d.fixed.size(); ++t)
      fixed.push_back({{"term", d.fixed[t].term.label}, {"class_specific", d.fixed[t].class_specific}});
    jd["fixed"] = fixed;
    json random = json::array();
    for (std::size_t t = 1; t < d.random.size(); ++t) random.push_back(d.random[t].label);
    jd["random"] = random;
    jd["random_mean"] = d.random_mean;
    jd["covariance"] = d.class_specific_covariance ? "class_specific" : "common";
    jd["dispersion"] = d.dispersion == Dispersion::b11 ? "b11" : "sigma";
    dims.push_back(jd);
  }
  j["dimensions"] = dims;
  json markers = json::array();
  for (const auto& m : s.markers) {
    json jm{{"name", m.name}, {"dimension", s.dimensions[m.dimension].name}, {"link", to_string(m.link)}};
    if (m.link == LinkKind::isplines) {
      jm["degree"] = m.degree;
      if (m.knots.empty()) jm["knots"] = m.n_knots; else jm["knots"] = m.knots;
      jm["knot_placement"] = m.placement == KnotPlacement::quantile ? "quantile" : "equidistant";
      if (m.range) jm["range"] = {m.range->first, m.range->second};
      if (s.resolved) jm["basis"] = basis_json(m.basis);
    }
    markers.push_back(jm);
  }
  j["markers"] = markers;
  json jh{{"family", s.hazard.family == HazardFamily::weibull ? "weibull" : "msplines"},
          {"causes", s.hazard.causes},
          {"baseline", s.hazard.proportional ? "proportional" : "class_specific"}};
  if (s.hazard.family == HazardFamily::msplines) {
    if (s.hazard.knots.empty()) jh["knots"] = s.hazard.n_knots; else jh["knots"] = s.hazard.knots;
    if (s.resolved) jh["basis"] = basis_json(s.hazard.basis);
  }
  json hc = json::array();
  for (const auto& c : s.hazard.covariates) hc.push_back({{"name", c.name}, {"class_specific", c.class_specific}});
  jh["covariates"] = hc;
  j["hazard"] = jh;
  j["resolved"] = s.resolved;
  return j;
}

inline ModelSpec load_model_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open model spec " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return model_spec_from_json(j);
}

// Fills data-dependent spline boundaries and knots. Already-resolved specs are returned unchanged.
inline ModelSpec resolve_spec(ModelSpec s, const Dataset& ds) {
  if (s.resolved) return s;
  for (std::size_t k = 0; k < s.markers.size(); ++k) {
    auto& m = s.markers[k];
    if (m.link != LinkKind::isplines) continue;
    std::vector<double> values;
    for (const auto& subj : ds.subjects)
      for (const auto& o : subj.observations)
        if (o.marker_id == m.name) values.push_back(o.value);
    if (values.empty()) throw DataError("marker '" + m.name + "' has no observations");
    double lo, hi;
    if (m.range) {
      lo = m.range->first;
      hi = m.range->second;
    } else {
      lo = *std::min_element(values.begin(), values.end());
      hi = *std::max_element(values.begin(), values.end());
    }
    if (!(lo < hi)) throw DataError("marker '" + m.name + "' has a degenerate value range");
    m.basis.degree = m.degree;
    m.basis.low = lo;
    m.basis.high = hi;
    if (!m.knots.empty()) m.basis.interior_knots = m.knots;
    else if (m.placement == KnotPlacement::quantile) m.basis.interior_knots = quantile_knots(values, m.n_knots, lo, hi);
    else m.basis.interior_knots = equidistant_knots(m.n_knots, lo, hi);
  }
  if (s.hazard.family == HazardFamily::msplines) {
    double tmax = 0.0;
    std::vector<double> events;
    for (const auto& subj : ds.subjects) {
      tmax = std::max(tmax, subj.survival.observed_time);
      if (subj.survival.cause > 0) events.push_back(subj.survival.observed_time);
    }
    if (events.size() < static_cast<std::size_t>(s.hazard.n_knots) + 1)
      for (const auto& subj : ds.subjects) events.push_back(subj.survival.observed_time);
    s.hazard.basis.degree = 3;
    s.hazard.basis.low = 0.0;
    s.hazard.basis.high = tmax;
    if (!s.hazard.knots.empty()) s.hazard.basis.interior_knots = s.hazard.knots;
    else s.hazard.basis.interior_knots = quantile_knots(events, s.hazard.n_knots, 0.0, tmax);
  }
  s.resolved = true;
  s.check();
  return s;
}

}  // namespace jlcm
