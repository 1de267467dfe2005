#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "jlcm/design.hpp"
#include "jlcm/error.hpp"
#include "jlcm/longitudinal.hpp"
#include "jlcm/parallel.hpp"
#include "jlcm/parameters.hpp"
#include "jlcm/survival.hpp"

namespace jlcm {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double log_sum_exp(std::span<const double> v) {
  double mx = kNegInf;
  for (double x : v) mx = std::max(mx, x);
  if (mx == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

// Softmax of the class linear predictors (reference class last); max-subtracted.
inline Eigen::VectorXd class_membership_probs(const Eigen::VectorXd& logits) {
  const double mx = logits.maxCoeff();
  Eigen::VectorXd p = (logits.array() - mx).exp();
  return p / p.sum();
}

inline Eigen::VectorXd class_membership_probs(const Eigen::MatrixXd& xi, const Eigen::VectorXd& xc) {
  Eigen::VectorXd eta(xi.rows());
  for (Eigen::Index g = 0; g < xi.rows(); ++g) {
    eta(g) = xi(g, 0);
    for (Eigen::Index c = 0; c < xc.size(); ++c) eta(g) += xi(g, c + 1) * xc(c);
  }
  return class_membership_probs(eta);
}

// Per-subject, per-class log terms:
//   joint[g]   = log pi_ig + sum_d log f(Y_i^d | g) + log[S_i(T_i | g) prod_l alpha_il^{1(d_i = l)}]
//   at_risk[g] = log pi_ig + log S_i(T_0i | g)          (only used when T_0i > 0)
struct ClassTerms {
  std::vector<double> joint;
  std::vector<double> at_risk;
  bool truncated = false;
};

struct LikelihoodDerivatives {
  double value = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;
  Eigen::VectorXd class_mass;  // sum_i of posterior class probabilities
};

// The joint latent class likelihood over a fixed set of subject designs.
//
// Derivatives are central differences taken per likelihood component (membership, one dimension
// in one class, survival in one class) over the few parameters that component reads, then
// chained exactly through the log-sum-exp of the mixture. The stencil and step rule are those of
// numeric_derivatives; only the bookkeeping differs.
class JointModel {
 public:
  JointModel(ModelSpec spec, std::vector<SubjectDesign> designs)
      : layout_(spec), hazard_(HazardModel::from(layout_.spec())), designs_(std::move(designs)) {
    const auto& sp = layout_.spec();
    for (std::size_t d = 0; d < sp.dimensions.size(); ++d) {
      const auto& ds = layout_.dims()[d];
      std::vector<int> marker_sigma, link;
      for (int k : sp.markers_of(static_cast<int>(d))) {
        const auto& ms = layout_.markers()[static_cast<std::size_t>(k)];
        if (ms.sigma.free()) marker_sigma.push_back(ms.sigma.index);
        for (const Slot* s : {&ms.intercept, &ms.slope})
          if (s->free()) link.push_back(s->index);
        for (const auto& s : ms.coefficients)
          if (s.free()) link.push_back(s.index);
      }
      std::vector<std::vector<int>> cov;
      for (const auto& block : ds.chol) {
        std::vector<int> c = marker_sigma;
        for (const auto& s : block)
          if (s.free()) c.push_back(s.index);
        std::sort(c.begin(), c.end());
        cov.push_back(std::move(c));
      }
      std::sort(link.begin(), link.end());
      cov_params_.push_back(std::move(cov));
      link_params_.push_back(std::move(link));
    }
  }

  const ParameterLayout& layout() const { return layout_; }
  const ModelSpec& spec() const { return layout_.spec(); }
  const std::vector<SubjectDesign>& designs() const { return designs_; }
  const HazardModel& hazard_model() const { return hazard_; }
  int classes() const { return layout_.classes(); }
  int size() const { return layout_.size(); }
  std::size_t subjects() const { return designs_.size(); }

  void set_jobs(int jobs) { jobs_ = std::max(1, jobs); }

  // Links and error SDs indexed by global marker; only the markers of dimension d are filled.
  std::vector<LinkFunction> dimension_links(std::span<const double> theta, int d) const {
    std::vector<LinkFunction> links(spec().markers.size());
    for (int k : spec().markers_of(d)) links[static_cast<std::size_t>(k)] = layout_.link(theta, k);
    return links;
  }

  std::vector<double> dimension_sigma(std::span<const double> theta, int d) const {
    std::vector<double> sigma(spec().markers.size(), 1.0);
    for (int k : spec().markers_of(d)) sigma[static_cast<std::size_t>(k)] = layout_.sigma(theta, k);
    return sigma;
  }

  double dimension_term(std::size_t i, int d, int g, std::span<const double> theta) const {
    const auto& dd = designs_[i].dims[static_cast<std::size_t>(d)];
    if (dd.rows() == 0) return 0.0;
    const auto p = layout_.dimension_class(theta, d, g);
    const auto r = dimension_response(dd, dimension_links(theta, d));
    if (!r.ok) return kNegInf;
    const auto f = dimension_factor(dd, p.U, dimension_sigma(theta, d));
    if (!f.ok) return kNegInf;
    return dimension_logdensity(dd, p, f, r);
  }

  // (event contribution, log S(T0))
  std::pair<double, double> survival_terms(std::size_t i, int g, std::span<const double> theta) const {
    const auto& sd = designs_[i];
    const auto hc = layout_.hazard_class(theta, g);
    const double ev = event_log_contribution(sd.time, sd.cause, hc, hazard_, sd.hazard_covariates);
    const double s0 = sd.entry > 0.0 ? log_survival(sd.entry, hc, hazard_, sd.hazard_covariates) : 0.0;
    return {ev, s0};
  }

  Eigen::VectorXd log_membership(std::size_t i, std::span<const double> theta) const {
    const Eigen::VectorXd eta = layout_.membership_logits(theta, designs_[i].class_covariates);
    const double mx = eta.maxCoeff();
    return eta.array() - (mx + std::log((eta.array() - mx).exp().sum()));
  }

  ClassTerms class_terms(std::size_t i, std::span<const double> theta) const {
    const int G = classes();
    const auto& sd = designs_[i];
    ClassTerms ct;
    ct.truncated = sd.entry > 0.0;
    const Eigen::VectorXd lp = log_membership(i, theta);
    ct.joint.assign(static_cast<std::size_t>(G), 0.0);
    ct.at_risk.assign(static_cast<std::size_t>(G), 0.0);
    for (int g = 0; g < G; ++g) {
      double a = lp(g);
      for (std::size_t d = 0; d < sd.dims.size(); ++d)
        if (sd.dims[d].rows() > 0) a += dimension_term(i, static_cast<int>(d), g, theta);
      const auto [ev, s0] = survival_terms(i, g, theta);
      ct.joint[static_cast<std::size_t>(g)] = a + ev;
      ct.at_risk[static_cast<std::size_t>(g)] = lp(g) + s0;
    }
    return ct;
  }

  // log l_i^LT
  double subject_loglik(std::size_t i, std::span<const double> theta) const {
    const auto ct = class_terms(i, theta);
    const double num = log_sum_exp(ct.joint);
    if (num == kNegInf || std::isnan(num))
      throw DegenerateLikelihood("degenerate likelihood for subject '" + designs_[i].id + "'", designs_[i].id);
    return ct.truncated ? num - log_sum_exp(ct.at_risk) : num;
  }

  double total_loglik(std::span<const double> theta) const {
    const auto parts = parallel_chunks<double>(designs_.size(), jobs_, [&](std::size_t b, std::size_t e) {
      double s = 0.0;
      for (std::size_t i = b; i < e; ++i) s += subject_loglik(i, theta);
      return s;
    });
    double total = 0.0;
    for (double v : parts) total += v;
    return total;
  }

  double total_loglik(const Eigen::VectorXd& theta) const {
    return total_loglik(std::span<const double>(theta.data(), static_cast<std::size_t>(theta.size())));
  }

  // Posterior class probabilities (rows sum to one).
  Eigen::MatrixXd posterior(std::span<const double> theta) const {
    const int G = classes();
    Eigen::MatrixXd post(static_cast<Eigen::Index>(designs_.size()), G);
    for (std::size_t i = 0; i < designs_.size(); ++i) {
      const auto ct = class_terms(i, theta);
      const double lse = log_sum_exp(ct.joint);
      if (lse == kNegInf || std::isnan(lse))
        throw DegenerateLikelihood("degenerate likelihood for subject '" + designs_[i].id + "'", designs_[i].id);
      for (int g = 0; g < G; ++g)
        post(static_cast<Eigen::Index>(i), g) = std::exp(ct.joint[static_cast<std::size_t>(g)] - lse);
      post.row(static_cast<Eigen::Index>(i)) /= post.row(static_cast<Eigen::Index>(i)).sum();
    }
    return post;
  }

  Eigen::MatrixXd posterior(const Eigen::VectorXd& theta) const {
    return posterior(std::span<const double>(theta.data(), static_cast<std::size_t>(theta.size())));
  }

  LikelihoodDerivatives derivatives(const Eigen::VectorXd& theta) const {
    const int p = size();
    const int G = classes();
    struct Acc {
      double value = 0.0;
      Eigen::VectorXd grad;
      Eigen::MatrixXd hess;
      Eigen::VectorXd mass;
    };
    const auto parts = parallel_chunks<Acc>(designs_.size(), jobs_, [&](std::size_t b, std::size_t e) {
      Acc acc;
      acc.grad = Eigen::VectorXd::Zero(p);
      acc.hess = Eigen::MatrixXd::Zero(p, p);
      acc.mass = Eigen::VectorXd::Zero(G);
      std::vector<double> work(theta.data(), theta.data() + theta.size());
      for (std::size_t i = b; i < e; ++i) subject_derivatives(i, work, acc.value, acc.grad, acc.hess, acc.mass);
      return acc;
    });
    LikelihoodDerivatives out;
    out.gradient = Eigen::VectorXd::Zero(p);
    out.hessian = Eigen::MatrixXd::Zero(p, p);
    out.class_mass = Eigen::VectorXd::Zero(G);
    for (const auto& a : parts) {
      out.value += a.value;
      out.gradient += a.grad;
      out.hessian += a.hess;
      out.class_mass += a.mass;
    }
    out.hessian = 0.5 * (out.hessian + out.hessian.transpose()).eval();
    return out;
  }

  static double step(double x) { return std::max(1e-4, 1e-4 * std::abs(x)); }

 private:
  // Which stencil point is being evaluated: up to two parameters moved by +h (+1) or -h (-1).
  struct Perturbation {
    int n = 0;
    std::array<std::pair<int, int>, 2> at{};
  };

  // Value, gradient and Hessian of a vector-valued component over its local parameters.
  struct Local {
    std::vector<int> params;
    Eigen::VectorXd value;                 // [out]
    Eigen::MatrixXd grad;                  // [out x q]
    std::vector<Eigen::MatrixXd> hess;     // [out] q x q
  };

  template <class F>
  Local local_derivatives(const std::vector<int>& params, std::vector<double>& theta, F&& f, int outs) const {
    Local L;
    L.params = params;
    const int q = static_cast<int>(params.size());
    Perturbation pert;
    const std::span<const double> th(theta);
    L.value.resize(outs);
    f(th, pert, L.value);
    L.grad = Eigen::MatrixXd::Zero(outs, q);
    L.hess.assign(static_cast<std::size_t>(outs), Eigen::MatrixXd::Zero(q, q));
    if (!L.value.allFinite()) return L;  // dead component; its class carries zero weight
    std::vector<double> h(static_cast<std::size_t>(q));
    Eigen::VectorXd fp(outs), fm(outs), corner[2][2];
    for (auto& row : corner)
      for (auto& c : row) c.resize(outs);
    auto check = [&](const Eigen::VectorXd& v, int j) {
      if (!v.allFinite())
        throw NumericError("non-finite likelihood component in the stencil of parameter " + std::to_string(j), j);
    };
    for (int a = 0; a < q; ++a) {
      const auto ia = static_cast<std::size_t>(params[static_cast<std::size_t>(a)]);
      const double x = theta[ia];
      const double ha = step(x);
      h[static_cast<std::size_t>(a)] = ha;
      pert.n = 1;
      pert.at[0] = {static_cast<int>(ia), 1};
      theta[ia] = x + ha;
      f(th, pert, fp);
      pert.at[0].second = -1;
      theta[ia] = x - ha;
      f(th, pert, fm);
      theta[ia] = x;
      check(fp, static_cast<int>(ia));
      check(fm, static_cast<int>(ia));
      for (int o = 0; o < outs; ++o) {
        L.grad(o, a) = (fp(o) - fm(o)) / (2.0 * ha);
        L.hess[static_cast<std::size_t>(o)](a, a) = (fp(o) - 2.0 * L.value(o) + fm(o)) / (ha * ha);
      }
    }
    pert.n = 2;
    for (int a = 0; a < q; ++a)
      for (int c = a + 1; c < q; ++c) {
        const auto ia = static_cast<std::size_t>(params[static_cast<std::size_t>(a)]);
        const auto ic = static_cast<std::size_t>(params[static_cast<std::size_t>(c)]);
        const double xa = theta[ia], xc = theta[ic];
        const double ha = h[static_cast<std::size_t>(a)], hc = h[static_cast<std::size_t>(c)];
        for (int sa : {1, -1})
          for (int sc : {1, -1}) {
            theta[ia] = xa + sa * ha;
            theta[ic] = xc + sc * hc;
            pert.at[0] = {static_cast<int>(ia), sa};
            pert.at[1] = {static_cast<int>(ic), sc};
            auto& out = corner[sa < 0][sc < 0];
            f(th, pert, out);
            check(out, static_cast<int>(ia));
          }
        theta[ia] = xa;
        theta[ic] = xc;
        for (int o = 0; o < outs; ++o) {
          const double d2 = (corner[0][0](o) - corner[0][1](o) - corner[1][0](o) + corner[1][1](o)) / (4.0 * ha * hc);
          L.hess[static_cast<std::size_t>(o)](a, c) = d2;
          L.hess[static_cast<std::size_t>(o)](c, a) = d2;
        }
      }
    return L;
  }

  // Factorisations and link transforms of one subject's dimension, keyed by the stencil point
  // restricted to the parameters they depend on. With class-common covariance the factor is
  // shared by all classes.
  struct DimensionCache {
    struct Key {
      int block = 0;
      int n = 0;
      std::array<std::pair<int, int>, 2> at{};
      bool operator==(const Key& o) const {
        if (block != o.block || n != o.n) return false;
        for (int j = 0; j < n; ++j)
          if (at[static_cast<std::size_t>(j)] != o.at[static_cast<std::size_t>(j)]) return false;
        return true;
      }
    };
    std::vector<std::pair<Key, DimensionFactor>> factors;
    std::vector<std::pair<Key, DimensionResponse>> responses;
    Eigen::VectorXd resid;
  };

  static typename DimensionCache::Key restrict_key(int block, const Perturbation& p, const std::vector<int>& relevant) {
    typename DimensionCache::Key k;
    k.block = block;
    for (int j = 0; j < p.n; ++j)
      if (std::binary_search(relevant.begin(), relevant.end(), p.at[static_cast<std::size_t>(j)].first))
        k.at[static_cast<std::size_t>(k.n++)] = p.at[static_cast<std::size_t>(j)];
    if (k.n == 2 && k.at[1] < k.at[0]) std::swap(k.at[0], k.at[1]);
    return k;
  }

  double cached_dimension_term(std::size_t i, int d, int g, std::span<const double> theta, const Perturbation& pert,
                               DimensionCache& cache) const {
    const auto& dd = designs_[i].dims[static_cast<std::size_t>(d)];
    const auto du = static_cast<std::size_t>(d);
    const int block = cov_params_[du].size() == 1 ? 0 : g;
    const auto rkey = restrict_key(0, pert, link_params_[du]);
    const DimensionResponse* r = nullptr;
    for (const auto& [k, v] : cache.responses)
      if (k == rkey) r = &v;
    if (!r) {
      cache.responses.emplace_back(rkey, dimension_response(dd, dimension_links(theta, d)));
      r = &cache.responses.back().second;
    }
    if (!r->ok) return kNegInf;
    const int block_cls = block;
    const auto fkey = restrict_key(block_cls, pert, cov_params_[du][static_cast<std::size_t>(block_cls)]);
    const DimensionFactor* f = nullptr;
    for (const auto& [k, v] : cache.factors)
      if (k == fkey) f = &v;
    if (!f) {
      const auto p = layout_.dimension_class(theta, d, g);
      cache.factors.emplace_back(fkey, dimension_factor(dd, p.U, dimension_sigma(theta, d)));
      f = &cache.factors.back().second;
    }
    if (!f->ok) return kNegInf;
    // residual h - X beta - Z mu without temporaries
    const auto& slots = layout_.dims()[du];
    auto& resid = cache.resid;
    resid = r->h;
    for (std::size_t t = 0; t < slots.beta.size(); ++t)
      resid -= slots.beta[t][static_cast<std::size_t>(g)].value(theta) * dd.X.col(static_cast<Eigen::Index>(t));
    for (std::size_t t = 0; t < slots.mu.size(); ++t)
      if (const double v = slots.mu[t][static_cast<std::size_t>(g)].value(theta); v != 0.0)
        resid -= v * dd.Z.col(static_cast<Eigen::Index>(t));
    constexpr double log2pi = 1.8378770664093454836;
    return -0.5 * (static_cast<double>(dd.rows()) * log2pi + f->logdet + f->quadratic(resid)) + r->log_jac;
  }

  void subject_derivatives(std::size_t i, std::vector<double>& theta, double& value, Eigen::VectorXd& grad,
                           Eigen::MatrixXd& hess, Eigen::VectorXd& mass) const {
    const int G = classes();
    const int p = size();
    const auto& sd = designs_[i];
    const bool truncated = sd.entry > 0.0;

    // Each local output feeds joint[g] and/or at_risk[g].
    struct Feed {
      std::size_t local;
      int out;
    };
    std::vector<Local> locals;
    locals.reserve(static_cast<std::size_t>(1 + G * (1 + sd.dims.size())));
    std::vector<std::vector<Feed>> joint_feeds(static_cast<std::size_t>(G)), risk_feeds(static_cast<std::size_t>(G));

    locals.push_back(local_derivatives(
        layout_.membership_params(), theta,
        [&](std::span<const double> th, const Perturbation&, Eigen::VectorXd& out) { out = log_membership(i, th); }, G));
    for (int g = 0; g < G; ++g) {
      joint_feeds[static_cast<std::size_t>(g)].push_back({0, g});
      risk_feeds[static_cast<std::size_t>(g)].push_back({0, g});
    }
    std::vector<DimensionCache> caches(sd.dims.size());
    for (int g = 0; g < G; ++g) {
      for (std::size_t d = 0; d < sd.dims.size(); ++d) {
        if (sd.dims[d].rows() == 0) continue;
        locals.push_back(local_derivatives(
            layout_.dimension_params(static_cast<int>(d), g), theta,
            [&](std::span<const double> th, const Perturbation& pert, Eigen::VectorXd& out) {
              out(0) = cached_dimension_term(i, static_cast<int>(d), g, th, pert, caches[d]);
            },
            1));
        joint_feeds[static_cast<std::size_t>(g)].push_back({locals.size() - 1, 0});
      }
      locals.push_back(local_derivatives(
          layout_.survival_params(g), theta,
          [&](std::span<const double> th, const Perturbation&, Eigen::VectorXd& out) {
            const auto [ev, s0] = survival_terms(i, g, th);
            out(0) = ev;
            out(1) = s0;
          },
          2));
      joint_feeds[static_cast<std::size_t>(g)].push_back({locals.size() - 1, 0});
      if (truncated) risk_feeds[static_cast<std::size_t>(g)].push_back({locals.size() - 1, 1});
    }
    auto assemble = [&](const std::vector<std::vector<Feed>>& feeds, double sign, bool record_mass) {
      Eigen::VectorXd terms(G);
      Eigen::MatrixXd grads = Eigen::MatrixXd::Zero(G, p);
      for (int g = 0; g < G; ++g) {
        double t = 0.0;
        for (const auto& f : feeds[static_cast<std::size_t>(g)]) {
          const auto& L = locals[f.local];
          t += L.value(f.out);
          for (std::size_t a = 0; a < L.params.size(); ++a)
            grads(g, L.params[a]) += L.grad(f.out, static_cast<Eigen::Index>(a));
        }
        terms(g) = t;
      }
      const double lse = log_sum_exp(std::span<const double>(terms.data(), static_cast<std::size_t>(G)));
      if (lse == kNegInf || std::isnan(lse))
        throw DegenerateLikelihood("degenerate likelihood for subject '" + sd.id + "'", sd.id);
      const Eigen::VectorXd w = (terms.array() - lse).exp();
      value += sign * lse;
      if (record_mass) mass += w;
      const Eigen::VectorXd mean_grad = grads.transpose() * w;
      grad += sign * mean_grad;
      for (int g = 0; g < G; ++g) {
        const double wg = w(g);
        if (wg == 0.0) continue;
        for (const auto& f : feeds[static_cast<std::size_t>(g)]) {
          const auto& H = locals[f.local].hess[static_cast<std::size_t>(f.out)];
          const auto& idx = locals[f.local].params;
          for (std::size_t a = 0; a < idx.size(); ++a)
            for (std::size_t c = 0; c < idx.size(); ++c)
              hess(idx[a], idx[c]) += sign * wg * H(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(c));
        }
      }
      Eigen::MatrixXd wg = grads;
      for (int g = 0; g < G; ++g) wg.row(g) *= std::sqrt(w(g));
      hess.noalias() += sign * (wg.transpose() * wg);
      hess.noalias() -= sign * (mean_grad * mean_grad.transpose());
    };
    assemble(joint_feeds, 1.0, true);
    if (truncated) assemble(risk_feeds, -1.0, false);
  }

  ParameterLayout layout_;
  std::vector<std::vector<std::vector<int>>> cov_params_;  // [d][block]: sorted indices entering V
  std::vector<std::vector<int>> link_params_;              // [d]: sorted link indices
  HazardModel hazard_;
  std::vector<SubjectDesign> designs_;
  int jobs_ = 1;
};

}  // namespace jlcm
