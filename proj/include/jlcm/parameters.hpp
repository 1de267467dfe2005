#pragma once

#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "jlcm/model_spec.hpp"
#include "jlcm/splines.hpp"

namespace jlcm {

// How an unconstrained entry of theta maps to the model quantity.
enum class Transform { none, abs, square };

inline double apply_transform(double x, Transform t) {
  switch (t) {
    case Transform::none: return x;
    case Transform::abs: return std::abs(x);
    case Transform::square: return x * x;
  }
  return x;
}

inline double invert_transform(double v, Transform t) {
  switch (t) {
    case Transform::none: return v;
    case Transform::abs: return std::abs(v);
    case Transform::square: return std::sqrt(std::max(v, 0.0));
  }
  return v;
}

// A model quantity: either a (transformed) entry of theta or a constant fixed by a constraint.
struct Slot {
  int index = -1;
  double fixed = 0.0;
  Transform transform = Transform::none;

  bool free() const { return index >= 0; }
  double value(std::span<const double> theta) const {
    return index < 0 ? fixed : apply_transform(theta[static_cast<std::size_t>(index)], transform);
  }
};

struct DimensionClassParams {
  Eigen::VectorXd beta;  // over the dimension's fixed-effect terms
  Eigen::VectorXd mu;    // random-effect mean over the random terms
  Eigen::MatrixXd U;     // upper-triangular, B = U^T U
};

struct CauseParams {
  std::vector<double> baseline;  // Weibull (scale, shape) or M-spline coefficients
  double log_ratio = 0.0;        // class offset in proportional mode
  Eigen::VectorXd delta;         // hazard covariate effects
};

struct HazardClassParams {
  std::vector<CauseParams> causes;
};

// Natural-scale parameters of a G-class model.
struct ModelParams {
  Eigen::MatrixXd xi;                                    // G x (1 + class covariates); last row zero
  std::vector<std::vector<DimensionClassParams>> dims;   // [d][g]
  std::vector<LinkFunction> links;                       // [k]
  std::vector<double> sigma;                             // [k]
  std::vector<HazardClassParams> hazard;                 // [g]
};

// Parameter metadata used for initialisation and label alignment.
struct ParameterInfo {
  std::string name;
  std::string role;   // class-free identity of the quantity ("beta[dim,time]")
  std::string block;  // xi | beta | mu | chol | sigma | eta | zeta | delta
  int cls = -1;       // class for class-specific entries, -1 otherwise
  Transform transform = Transform::none;
};

// Packed layout of theta:
//   [ xi | beta (and mu) | Cholesky U | sigma_eps | link eta | hazard zeta | hazard delta ]
// xi:    for g = 1..G-1: intercept then class-membership covariates; class G is the reference.
// beta:  per dimension, per fixed term, per class (one entry when the term is class-common);
//        mu follows beta within each dimension when random_mean is set.
// chol:  per dimension (per class when class-specific), upper triangle of U row by row.
// sigma: per marker (|theta|), skipped when fixed by the dispersion constraint.
// eta:   per linear marker (intercept, sqrt slope); per I-spline marker (intercept, sqrt coefficients).
// zeta:  per cause, per class: Weibull (sqrt scale, sqrt shape) or sqrt M-spline coefficients;
//        proportional mode: shared baseline then log ratios for classes 1..G-1.
// delta: per cause, per hazard covariate, per class (one entry when class-common).
class ParameterLayout {
 public:
  struct DimensionSlots {
    std::vector<std::vector<Slot>> beta;  // [term][g]
    std::vector<std::vector<Slot>> mu;    // [term][g]
    std::vector<std::vector<Slot>> chol;  // [g or 0][upper-triangular entry]
  };
  struct MarkerSlots {
    Slot sigma;
    Slot intercept;
    Slot slope;
    std::vector<Slot> coefficients;
  };
  struct CauseSlots {
    std::vector<std::vector<Slot>> baseline;  // [g or 0][m]
    std::vector<Slot> log_ratio;              // [g]
    std::vector<std::vector<Slot>> delta;     // [covariate][g]
  };

  ParameterLayout() = default;

  explicit ParameterLayout(const ModelSpec& spec) : spec_(spec), G_(spec.classes) {
    if (!spec.resolved) throw ConfigError("parameter layout needs a resolved model spec");
    const int G = G_;
    const int nc = static_cast<int>(spec.class_covariates.size());

    xi_.assign(G, std::vector<Slot>(1 + nc));
    for (int g = 0; g + 1 < G; ++g)
      for (int c = 0; c <= nc; ++c) {
        const std::string what = c == 0 ? "xi0" : "xi[" + spec.class_covariates[c - 1];
        xi_[g][c] = add(c == 0 ? "xi0[class" + std::to_string(g + 1) + "]"
                               : what + ",class" + std::to_string(g + 1) + "]",
                        c == 0 ? "xi0" : "xi[" + spec.class_covariates[c - 1] + "]", "xi", g, Transform::none);
      }

    dims_.resize(spec.dimensions.size());
    for (std::size_t d = 0; d < spec.dimensions.size(); ++d) {
      const auto& dim = spec.dimensions[d];
      auto& ds = dims_[d];
      const bool constrained = spec.constrained(static_cast<int>(d));
      ds.beta.assign(dim.fixed.size(), std::vector<Slot>(G));
      for (std::size_t t = 0; t < dim.fixed.size(); ++t) {
        const std::string role = "beta[" + dim.name + "," + dim.fixed[t].term.label;
        const bool location = constrained && t == 0;
        if (dim.fixed[t].class_specific) {
          for (int g = 0; g < G; ++g) {
            if (location && g == G - 1) continue;  // reference class intercept fixed at 0
            ds.beta[t][g] = add(role + ",class" + std::to_string(g + 1) + "]", role + "]", "beta", g, Transform::none);
          }
        } else if (!location) {
          Slot s = add(role + "]", role + "]", "beta", -1, Transform::none);
          for (int g = 0; g < G; ++g) ds.beta[t][g] = s;
        }
      }
      ds.mu.assign(dim.random.size(), std::vector<Slot>(G));
      if (dim.random_mean)
        for (std::size_t t = 0; t < dim.random.size(); ++t)
          for (int g = 0; g < G; ++g) {
            const std::string role = "mu[" + dim.name + "," + dim.random[t].label;
            ds.mu[t][g] = add(role + ",class" + std::to_string(g + 1) + "]", role + "]", "mu", g, Transform::none);
          }
    }
    for (std::size_t d = 0; d < spec.dimensions.size(); ++d) {
      const auto& dim = spec.dimensions[d];
      auto& ds = dims_[d];
      const int q = static_cast<int>(dim.random.size());
      const int nblocks = dim.class_specific_covariance ? G : 1;
      const bool b11 = spec.constrained(static_cast<int>(d)) && dim.dispersion == Dispersion::b11;
      ds.chol.assign(nblocks, {});
      for (int c = 0; c < nblocks; ++c)
        for (int r = 0; r < q; ++r)
          for (int s = r; s < q; ++s) {
            const std::string rc = std::to_string(r + 1) + "," + std::to_string(s + 1);
            const std::string role = "chol[" + dim.name + "," + rc + "]";
            if (b11 && c == 0 && r == 0 && s == 0) {
              ds.chol[c].push_back(Slot{-1, 1.0, Transform::none});
              continue;
            }
            const std::string name =
                dim.class_specific_covariance ? "chol[" + dim.name + ",class" + std::to_string(c + 1) + "," + rc + "]"
                                               : role;
            ds.chol[c].push_back(add(name, role, "chol", dim.class_specific_covariance ? c : -1, Transform::none));
          }
    }

    markers_.resize(spec.markers.size());
    for (std::size_t k = 0; k < spec.markers.size(); ++k) {
      const auto& m = spec.markers[k];
      const int d = m.dimension;
      const bool first_in_dim = spec.markers_of(d).front() == static_cast<int>(k);
      const bool fixed_sigma =
          spec.constrained(d) && spec.dimensions[d].dispersion == Dispersion::sigma && first_in_dim;
      if (fixed_sigma) markers_[k].sigma = Slot{-1, 1.0, Transform::abs};
      else markers_[k].sigma = add("sigma[" + m.name + "]", "sigma[" + m.name + "]", "sigma", -1, Transform::abs);
    }
    for (std::size_t k = 0; k < spec.markers.size(); ++k) {
      const auto& m = spec.markers[k];
      auto& ms = markers_[k];
      if (m.link == LinkKind::linear) {
        ms.intercept = add("eta0[" + m.name + "]", "eta0[" + m.name + "]", "eta", -1, Transform::none);
        ms.slope = add("eta1[" + m.name + "]", "eta1[" + m.name + "]", "eta", -1, Transform::square);
      } else if (m.link == LinkKind::isplines) {
        ms.intercept = add("eta0[" + m.name + "]", "eta0[" + m.name + "]", "eta", -1, Transform::none);
        for (int j = 0; j < m.basis.size(); ++j) {
          const std::string n = "eta[" + m.name + "," + std::to_string(j + 1) + "]";
          ms.coefficients.push_back(add(n, n, "eta", -1, Transform::square));
        }
      } else {
        ms.slope = Slot{-1, 1.0, Transform::none};
      }
    }

    const auto& hz = spec.hazard;
    baseline_size_ = hz.family == HazardFamily::weibull ? 2 : hz.basis.size();
    auto baseline_name = [&](int m) -> std::string {
      if (hz.family == HazardFamily::weibull) return m == 0 ? "weibull_scale" : "weibull_shape";
      return "spline" + std::to_string(m + 1);
    };
    causes_.resize(hz.causes);
    for (int l = 0; l < hz.causes; ++l) {
      auto& cs = causes_[l];
      const std::string cause = "cause" + std::to_string(l + 1);
      if (hz.proportional) {
        cs.baseline.assign(1, {});
        for (int m = 0; m < baseline_size_; ++m) {
          const std::string n = baseline_name(m) + "[" + cause + "]";
          cs.baseline[0].push_back(add(n, n, "zeta", -1, Transform::square));
        }
        cs.log_ratio.assign(G, Slot{});
        for (int g = 0; g + 1 < G; ++g)
          cs.log_ratio[g] = add("zeta[" + cause + ",class" + std::to_string(g + 1) + "]", "zeta[" + cause + "]", "zeta",
                                g, Transform::none);
      } else {
        cs.baseline.assign(G, {});
        for (int g = 0; g < G; ++g)
          for (int m = 0; m < baseline_size_; ++m) {
            const std::string role = baseline_name(m) + "[" + cause;
            cs.baseline[g].push_back(
                add(role + ",class" + std::to_string(g + 1) + "]", role + "]", "zeta", g, Transform::square));
          }
        cs.log_ratio.assign(G, Slot{});
      }
    }
    for (int l = 0; l < hz.causes; ++l) {
      auto& cs = causes_[l];
      const std::string cause = "cause" + std::to_string(l + 1);
      cs.delta.assign(hz.covariates.size(), std::vector<Slot>(G));
      for (std::size_t c = 0; c < hz.covariates.size(); ++c) {
        const std::string role = "delta[" + cause + "," + hz.covariates[c].name;
        if (hz.covariates[c].class_specific) {
          for (int g = 0; g < G; ++g)
            cs.delta[c][g] = add(role + ",class" + std::to_string(g + 1) + "]", role + "]", "delta", g, Transform::none);
        } else {
          Slot s = add(role + "]", role + "]", "delta", -1, Transform::none);
          for (int g = 0; g < G; ++g) cs.delta[c][g] = s;
        }
      }
    }

    for (int g = 0; g < G; ++g) {
      dimension_params_.emplace_back();
      for (std::size_t d = 0; d < dims_.size(); ++d) dimension_params_.back().push_back(collect_dimension(static_cast<int>(d), g));
      survival_params_.push_back(collect_survival(g));
    }
    for (const auto& row : xi_)
      for (const auto& s : row)
        if (s.free()) membership_params_.push_back(s.index);
  }

  const ModelSpec& spec() const { return spec_; }
  int classes() const { return G_; }
  int size() const { return static_cast<int>(info_.size()); }
  const std::vector<ParameterInfo>& info() const { return info_; }
  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& i : info_) out.push_back(i.name);
    return out;
  }
  int baseline_size() const { return baseline_size_; }

  const std::vector<std::vector<Slot>>& xi() const { return xi_; }
  const std::vector<DimensionSlots>& dims() const { return dims_; }
  const std::vector<MarkerSlots>& markers() const { return markers_; }
  const std::vector<CauseSlots>& causes() const { return causes_; }

  // Free parameters entering each likelihood component.
  const std::vector<int>& membership_params() const { return membership_params_; }
  const std::vector<int>& dimension_params(int d, int g) const { return dimension_params_[g][d]; }
  const std::vector<int>& survival_params(int g) const { return survival_params_[g]; }

  // Linear predictors xi_0g + X_C' xi_1g for all classes.
  Eigen::VectorXd membership_logits(std::span<const double> theta, const Eigen::VectorXd& xc) const {
    Eigen::VectorXd eta(G_);
    for (int g = 0; g < G_; ++g) {
      double v = xi_[g][0].value(theta);
      for (Eigen::Index c = 0; c < xc.size(); ++c) v += xi_[g][c + 1].value(theta) * xc(c);
      eta(g) = v;
    }
    return eta;
  }

  DimensionClassParams dimension_class(std::span<const double> theta, int d, int g) const {
    const auto& ds = dims_[d];
    DimensionClassParams p;
    p.beta.resize(static_cast<Eigen::Index>(ds.beta.size()));
    for (std::size_t t = 0; t < ds.beta.size(); ++t) p.beta(static_cast<Eigen::Index>(t)) = ds.beta[t][g].value(theta);
    p.mu.resize(static_cast<Eigen::Index>(ds.mu.size()));
    for (std::size_t t = 0; t < ds.mu.size(); ++t) p.mu(static_cast<Eigen::Index>(t)) = ds.mu[t][g].value(theta);
    const int q = static_cast<int>(ds.mu.size());
    const auto& ch = ds.chol[ds.chol.size() == 1 ? 0 : g];
    p.U = Eigen::MatrixXd::Zero(q, q);
    int e = 0;
    for (int r = 0; r < q; ++r)
      for (int s = r; s < q; ++s) p.U(r, s) = ch[e++].value(theta);
    return p;
  }

  LinkFunction link(std::span<const double> theta, int k) const {
    const auto& m = spec_.markers[k];
    const auto& ms = markers_[k];
    LinkFunction f;
    f.kind = m.link;
    if (m.link == LinkKind::linear) {
      f.intercept = ms.intercept.value(theta);
      f.slope = ms.slope.value(theta);
    } else if (m.link == LinkKind::isplines) {
      f.intercept = ms.intercept.value(theta);
      f.basis = m.basis;
      for (const auto& s : ms.coefficients) f.coefficients.push_back(s.value(theta));
    }
    return f;
  }

  double sigma(std::span<const double> theta, int k) const { return markers_[k].sigma.value(theta); }

  HazardClassParams hazard_class(std::span<const double> theta, int g) const {
    HazardClassParams h;
    const bool prop = spec_.hazard.proportional;
    for (const auto& cs : causes_) {
      CauseParams c;
      for (const auto& s : cs.baseline[prop ? 0 : g]) c.baseline.push_back(s.value(theta));
      c.log_ratio = prop ? cs.log_ratio[g].value(theta) : 0.0;
      c.delta.resize(static_cast<Eigen::Index>(cs.delta.size()));
      for (std::size_t j = 0; j < cs.delta.size(); ++j) c.delta(static_cast<Eigen::Index>(j)) = cs.delta[j][g].value(theta);
      h.causes.push_back(std::move(c));
    }
    return h;
  }

  ModelParams unpack(std::span<const double> theta) const {
    ModelParams p;
    const int nc = static_cast<int>(spec_.class_covariates.size());
    p.xi.resize(G_, 1 + nc);
    for (int g = 0; g < G_; ++g)
      for (int c = 0; c <= nc; ++c) p.xi(g, c) = xi_[g][c].value(theta);
    p.dims.resize(dims_.size());
    for (std::size_t d = 0; d < dims_.size(); ++d)
      for (int g = 0; g < G_; ++g) p.dims[d].push_back(dimension_class(theta, static_cast<int>(d), g));
    for (std::size_t k = 0; k < markers_.size(); ++k) {
      p.links.push_back(link(theta, static_cast<int>(k)));
      p.sigma.push_back(sigma(theta, static_cast<int>(k)));
    }
    for (int g = 0; g < G_; ++g) p.hazard.push_back(hazard_class(theta, g));
    return p;
  }

  // Inverse of unpack for the free entries. Values at constrained slots are ignored; for
  // class-common entries class 1 wins.
  Eigen::VectorXd pack(const ModelParams& p) const {
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(size());
    auto put = [&](const Slot& s, double v) {
      if (s.free()) theta(s.index) = invert_transform(v, s.transform);
    };
    for (int g = G_ - 1; g >= 0; --g)
      for (std::size_t c = 0; c < xi_[g].size(); ++c)
        put(xi_[g][c], p.xi(g, static_cast<Eigen::Index>(c)) - p.xi(G_ - 1, static_cast<Eigen::Index>(c)));
    for (std::size_t d = 0; d < dims_.size(); ++d) {
      const auto& ds = dims_[d];
      for (int g = G_ - 1; g >= 0; --g) {
        const auto& dp = p.dims[d][g];
        for (std::size_t t = 0; t < ds.beta.size(); ++t) put(ds.beta[t][g], dp.beta(static_cast<Eigen::Index>(t)));
        for (std::size_t t = 0; t < ds.mu.size(); ++t) put(ds.mu[t][g], dp.mu(static_cast<Eigen::Index>(t)));
        if (ds.chol.size() > 1 || g == 0) {
          const auto& ch = ds.chol[ds.chol.size() == 1 ? 0 : g];
          int e = 0;
          for (Eigen::Index r = 0; r < dp.U.rows(); ++r)
            for (Eigen::Index s = r; s < dp.U.cols(); ++s) put(ch[e++], dp.U(r, s));
        }
      }
    }
    for (std::size_t k = 0; k < markers_.size(); ++k) {
      const auto& ms = markers_[k];
      put(ms.sigma, p.sigma[k]);
      const auto& f = p.links[k];
      put(ms.intercept, f.intercept);
      if (f.kind == LinkKind::linear) put(ms.slope, f.slope);
      for (std::size_t j = 0; j < ms.coefficients.size() && j < f.coefficients.size(); ++j)
        put(ms.coefficients[j], f.coefficients[j]);
    }
    for (std::size_t l = 0; l < causes_.size(); ++l) {
      const auto& cs = causes_[l];
      for (int g = G_ - 1; g >= 0; --g) {
        const auto& cp = p.hazard[g].causes[l];
        if (cs.baseline.size() > 1 || g == 0)
          for (std::size_t m = 0; m < cs.baseline[cs.baseline.size() == 1 ? 0 : g].size(); ++m)
            put(cs.baseline[cs.baseline.size() == 1 ? 0 : g][m], cp.baseline[m]);
        put(cs.log_ratio[g], cp.log_ratio);
        for (std::size_t j = 0; j < cs.delta.size(); ++j) put(cs.delta[j][g], cp.delta(static_cast<Eigen::Index>(j)));
      }
    }
    return theta;
  }

 private:
  Slot add(const std::string& name, const std::string& role, const std::string& block, int cls, Transform t) {
    info_.push_back({name, role, block, cls, t});
    return Slot{static_cast<int>(info_.size()) - 1, 0.0, t};
  }

  std::vector<int> collect_dimension(int d, int g) const {
    std::vector<int> idx;
    auto take = [&](const Slot& s) {
      if (s.free() && std::find(idx.begin(), idx.end(), s.index) == idx.end()) idx.push_back(s.index);
    };
    const auto& ds = dims_[d];
    for (const auto& t : ds.beta) take(t[g]);
    for (const auto& t : ds.mu) take(t[g]);
    for (const auto& s : ds.chol[ds.chol.size() == 1 ? 0 : g]) take(s);
    for (int k : spec_.markers_of(d)) {
      const auto& ms = markers_[k];
      take(ms.sigma);
      take(ms.intercept);
      take(ms.slope);
      for (const auto& s : ms.coefficients) take(s);
    }
    return idx;
  }

  std::vector<int> collect_survival(int g) const {
    std::vector<int> idx;
    auto take = [&](const Slot& s) {
      if (s.free() && std::find(idx.begin(), idx.end(), s.index) == idx.end()) idx.push_back(s.index);
    };
    for (const auto& cs : causes_) {
      for (const auto& s : cs.baseline[cs.baseline.size() == 1 ? 0 : g]) take(s);
      take(cs.log_ratio[g]);
      for (const auto& c : cs.delta) take(c[g]);
    }
    return idx;
  }

  ModelSpec spec_;
  int G_ = 1;
  int baseline_size_ = 2;
  std::vector<ParameterInfo> info_;
  std::vector<std::vector<Slot>> xi_;
  std::vector<DimensionSlots> dims_;
  std::vector<MarkerSlots> markers_;
  std::vector<CauseSlots> causes_;
  std::vector<int> membership_params_;
  std::vector<std::vector<std::vector<int>>> dimension_params_;  // [g][d]
  std::vector<std::vector<int>> survival_params_;                // [g]
};

}  // namespace jlcm
