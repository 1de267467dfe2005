#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "jlcm/error.hpp"

namespace jlcm {

// Polynomial degree of the M-spline pieces. The I-spline of the same spec is the
// running integral of the M-spline, one degree higher.
struct SplineBasisSpec {
  int degree = 2;
  std::vector<double> interior_knots;
  double low = 0.0;
  double high = 1.0;

  int size() const { return static_cast<int>(interior_knots.size()) + degree + 1; }

  void check() const {
    if (degree < 1 || degree > 3) throw ConfigError("spline degree must be 1, 2 or 3");
    if (!(low < high)) throw ConfigError("spline boundary requires low < high");
    double prev = low;
    for (double k : interior_knots) {
      if (!(k > prev)) throw ConfigError("spline knots must be strictly increasing inside (low, high)");
      prev = k;
    }
    if (!(high > prev)) throw ConfigError("spline knots must be strictly increasing inside (low, high)");
  }
};

namespace detail {

// Boundary knots repeated degree + 2 times, which is enough for the order (degree + 2)
// B-splines whose partial sums are the I-splines.
inline std::vector<double> extended_knots(const SplineBasisSpec& s) {
  const int mult = s.degree + 2;
  std::vector<double> e;
  e.reserve(s.interior_knots.size() + 2 * mult);
  e.insert(e.end(), mult, s.low);
  e.insert(e.end(), s.interior_knots.begin(), s.interior_knots.end());
  e.insert(e.end(), mult, s.high);
  return e;
}

// Cox-de Boor recursion; intervals are half-open [e_j, e_{j+1}) except the last, which is closed.
// Returns all basis values of the given order (size e.size() - order); zeros outside [low, high].
inline std::vector<double> bsplines(const std::vector<double>& e, double x, int order) {
  const int n = static_cast<int>(e.size());
  std::vector<double> b(n - 1, 0.0);
  const double lo = e.front(), hi = e.back();
  if (x < lo || x > hi || std::isnan(x)) return std::vector<double>(n - order, 0.0);
  int span = -1;
  if (x == hi) {
    for (int j = n - 2; j >= 0; --j)
      if (e[j] < e[j + 1]) {
        span = j;
        break;
      }
  } else {
    for (int j = 0; j < n - 1; ++j)
      if (e[j] <= x && x < e[j + 1]) {
        span = j;
        break;
      }
  }
  b[span] = 1.0;
  for (int r = 2; r <= order; ++r) {
    for (int i = 0; i < n - r; ++i) {
      double v = 0.0;
      const double d1 = e[i + r - 1] - e[i];
      const double d2 = e[i + r] - e[i + 1];
      if (d1 > 0.0) v += (x - e[i]) / d1 * b[i];
      if (d2 > 0.0) v += (e[i + r] - x) / d2 * b[i + 1];
      b[i] = v;
    }
  }
  b.resize(n - order);
  return b;
}

// M-splines and I-splines together; x is clamped to the boundary for the I-splines.
inline void mi_splines(double x, const SplineBasisSpec& s, std::vector<double>* m, std::vector<double>* is) {
  const auto e = extended_knots(s);
  const int k = s.degree + 1;
  const int M = s.size();
  if (m) {
    m->assign(M, 0.0);
    if (x >= s.low && x <= s.high) {
      const auto b = bsplines(e, x, k);
      for (int i = 1; i <= M; ++i) {
        const double w = e[i + k] - e[i];
        (*m)[i - 1] = w > 0.0 ? k / w * b[i] : 0.0;
      }
    }
  }
  if (is) {
    is->assign(M, 0.0);
    if (x >= s.high) {
      is->assign(M, 1.0);
    } else if (x > s.low) {
      // Values above 1/2 are taken as 1 minus the head sum so rounding cannot break monotonicity
      // near saturation; past the support of M_i the value is exactly 1.
      const auto b = bsplines(e, x, k + 1);
      std::vector<double> head(static_cast<std::size_t>(M) + 1, 0.0);
      for (int i = 1; i <= M; ++i) head[static_cast<std::size_t>(i)] = head[static_cast<std::size_t>(i) - 1] + b[i - 1];
      double tail = 0.0;
      for (int i = M; i >= 1; --i) {
        tail += b[i];
        const double h = head[static_cast<std::size_t>(i)];
        (*is)[i - 1] = x >= e[i + k] ? 1.0 : (tail <= 0.5 ? tail : std::min(1.0, 1.0 - h));
      }
    }
  }
}

}  // namespace detail

// I-spline basis values at x in [low, high].
inline std::vector<double> ispline_basis(double x, const SplineBasisSpec& spec) {
  if (!(x >= spec.low && x <= spec.high))
    throw RangeError("I-spline argument " + std::to_string(x) + " outside [" + std::to_string(spec.low) + ", " +
                     std::to_string(spec.high) + "]");
  std::vector<double> out;
  detail::mi_splines(x, spec, nullptr, &out);
  return out;
}

// M-spline basis values; zero outside the support.
inline std::vector<double> mspline_basis(double t, const SplineBasisSpec& spec) {
  std::vector<double> out;
  detail::mi_splines(t, spec, &out, nullptr);
  return out;
}

// Knots at the j/(n+1) empirical quantiles (type 7) of values; falls back to equidistant
// knots when quantiles tie or hit the boundary.
inline std::vector<double> quantile_knots(std::vector<double> values, int n_interior, double low, double high) {
  std::vector<double> knots;
  if (n_interior <= 0) return knots;
  std::sort(values.begin(), values.end());
  bool ok = !values.empty();
  for (int j = 1; j <= n_interior && ok; ++j) {
    const double p = static_cast<double>(j) / (n_interior + 1);
    const double h = (values.size() - 1) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, values.size() - 1);
    const double q = values[lo] + (h - lo) * (values[hi] - values[lo]);
    if (!(q > (knots.empty() ? low : knots.back())) || !(q < high)) ok = false;
    knots.push_back(q);
  }
  if (ok) return knots;
  knots.clear();
  for (int j = 1; j <= n_interior; ++j) knots.push_back(low + (high - low) * j / (n_interior + 1));
  return knots;
}

inline std::vector<double> equidistant_knots(int n_interior, double low, double high) {
  std::vector<double> knots;
  for (int j = 1; j <= n_interior; ++j) knots.push_back(low + (high - low) * j / (n_interior + 1));
  return knots;
}

enum class LinkKind { identity, linear, isplines };

inline const char* to_string(LinkKind k) {
  switch (k) {
    case LinkKind::identity: return "identity";
    case LinkKind::linear: return "linear";
    case LinkKind::isplines: return "isplines";
  }
  return "?";
}

// H(y) = intercept + slope * y for linear links and intercept + sum_m coefficients[m] * I_m(y)
// for I-spline links.
struct LinkFunction {
  LinkKind kind = LinkKind::identity;
  double intercept = 0.0;
  double slope = 1.0;
  SplineBasisSpec basis;
  std::vector<double> coefficients;
};

struct LinkValue {
  double transformed;
  double jacobian;
};

inline LinkValue link_apply(double y, const LinkFunction& link) {
  switch (link.kind) {
    case LinkKind::identity: return {y, 1.0};
    case LinkKind::linear: return {link.intercept + link.slope * y, link.slope};
    case LinkKind::isplines: {
      if (!(y >= link.basis.low && y <= link.basis.high))
        throw RangeError("marker value " + std::to_string(y) + " outside the link range [" +
                         std::to_string(link.basis.low) + ", " + std::to_string(link.basis.high) + "]");
      std::vector<double> m, is;
      detail::mi_splines(y, link.basis, &m, &is);
      double h = link.intercept, j = 0.0;
      for (std::size_t k = 0; k < link.coefficients.size(); ++k) {
        h += link.coefficients[k] * is[k];
        j += link.coefficients[k] * m[k];
      }
      return {h, j};
    }
  }
  return {y, 1.0};
}

struct LinkInverse {
  double value;
  bool out_of_range = false;
};

inline LinkInverse link_invert(double lambda, const LinkFunction& link) {
  switch (link.kind) {
    case LinkKind::identity: return {lambda, false};
    case LinkKind::linear: return {(lambda - link.intercept) / link.slope, false};
    case LinkKind::isplines: break;
  }
  double lo = link.basis.low, hi = link.basis.high;
  const double hlo = link_apply(lo, link).transformed;
  const double hhi = link_apply(hi, link).transformed;
  const double tol = 1e-8 * (1.0 + std::abs(lambda));
  if (lambda <= hlo) return {lo, lambda < hlo - tol};
  if (lambda >= hhi) return {hi, lambda > hhi + tol};
  double y = lo + (hi - lo) * (lambda - hlo) / (hhi - hlo);
  const double width = 1e-14 * (link.basis.high - link.basis.low);
  for (int it = 0; it < 200; ++it) {
    const auto v = link_apply(y, link);
    const double r = v.transformed - lambda;
    if (r == 0.0 || hi - lo <= width) break;
    if (r > 0) hi = y; else lo = y;
    double next = v.jacobian > 0.0 ? y - r / v.jacobian : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    const bool settled = std::abs(next - y) <= width;
    y = next;
    if (settled) break;
  }
  return {y, false};
}

}  // namespace jlcm
