#pragma once

// Pointwise Wasserstein-Fisher-Rao cost, the paraboloid whose indicator is its
// Fenchel conjugate, and the resulting proximal operator.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "wfr/grid.hpp"

namespace wfr {

struct CostPoint {
  double a = 0.0;  // density slot
  double b = 0.0;  // momentum slot
  double c = 0.0;  // source slot

  CostPoint operator+(const CostPoint& o) const { return {a + o.a, b + o.b, c + o.c}; }
  CostPoint operator-(const CostPoint& o) const { return {a - o.a, b - o.b, c - o.c}; }
  CostPoint operator*(double s) const { return {a * s, b * s, c * s}; }
  double dot(const CostPoint& o) const { return a * o.a + b * o.b + c * o.c; }
  bool operator==(const CostPoint&) const = default;
};

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

// (b^2 + delta^2 c^2) / (2a) for a > 0, 0 at the origin, +inf elsewhere.
inline double f_delta(const CostPoint& p, double delta) {
  if (p.a > 0.0) return (p.b * p.b + delta * delta * p.c * p.c) / (2.0 * p.a);
  if (p.a == 0.0 && p.b == 0.0 && p.c == 0.0) return 0.0;
  return kInfinity;
}

// The set B = {(a, b, c) : a + (b^2 + c^2/delta^2)/2 <= 0}.
struct Paraboloid {
  double delta = 1.0;

  explicit Paraboloid(double d) : delta(d) {
    if (!(d > 0.0)) throw InvalidArgument("paraboloid requires delta > 0");
  }

  double level(const CostPoint& p) const {
    return p.a + 0.5 * (p.b * p.b + p.c * p.c / (delta * delta));
  }
  bool contains(const CostPoint& p, double tol = 0.0) const { return level(p) <= tol; }

  // Euclidean projection. Outside the set the nearest point is
  // (a0 - l, b0/(1+l), c0/(1+l/delta^2)) where l > 0 solves
  //   g(l) = a0 - l + (b0^2/(1+l)^2 + c0^2/delta^2/(1+l/delta^2)^2)/2 = 0.
  // g is convex and strictly decreasing, so Newton started at l = 0 increases
  // monotonically to the root; bisection on [0, hi] guards the steps.
  CostPoint project(const CostPoint& p) const {
    if (contains(p)) return p;
    const double d2 = delta * delta;
    const double b2 = p.b * p.b;
    const double c2 = p.c * p.c / d2;
    auto g = [&](double l) {
      const double sb = 1.0 + l, sc = 1.0 + l / d2;
      return p.a - l + 0.5 * (b2 / (sb * sb) + c2 / (sc * sc));
    };
    auto dg = [&](double l) {
      const double sb = 1.0 + l, sc = 1.0 + l / d2;
      return -1.0 - b2 / (sb * sb * sb) - c2 / (d2 * sc * sc * sc);
    };
    double lo = 0.0;
    double hi = std::max(1.0, p.a + 0.5 * (b2 + c2));
    while (g(hi) > 0.0) hi *= 2.0;
    const double scale = std::max({1.0, std::abs(p.a), b2, c2});
    double l = 0.0;
    for (int it = 0; it < 200; ++it) {
      const double gl = g(l);
      if (std::abs(gl) <= 1e-14 * scale) break;
      if (gl > 0.0) lo = l; else hi = l;
      double next = l - gl / dg(l);
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      if (next == l) break;
      l = next;
    }
    return {p.a - l, p.b / (1.0 + l), p.c / (1.0 + l / d2)};
  }
};

inline CostPoint project_paraboloid(const CostPoint& p, double delta) {
  return Paraboloid(delta).project(p);
}

// Moreau: prox_{tau f}(p) = p - tau * P_B(p / tau).
inline CostPoint prox_f_delta(const CostPoint& p, double tau, double delta) {
  if (!(tau > 0.0)) throw InvalidArgument("prox_f_delta requires tau > 0");
  const CostPoint scaled = p * (1.0 / tau);
  // p/tau in B: the prox is exactly the origin (avoid p - p round-off).
  if (Paraboloid(delta).contains(scaled)) return CostPoint{0.0, 0.0, 0.0};
  const CostPoint proj = project_paraboloid(scaled, delta);
  CostPoint out = p - proj * tau;
  if (out.a < 0.0) out.a = 0.0;
  return out;
}

inline constexpr double kZeroBranchTol = 1e-12;

// Sum of dt * dx * f over all collocated cells. Entries with a tiny
// non-positive density and tiny momentum/source count as the zero branch.
// Row totals are added in mirrored pairs (k, N-1-k), which makes the result
// bitwise invariant under time reversal.
inline double path_energy(const CenteredFields& v, const Grids& g, double delta) {
  detail::require_shape(v, g);
  const double w = g.time.dt * g.space.cell_width;
  const Eigen::Index nt = v.rho.rows();
  std::vector<double> rows(nt, 0.0);
  for (Eigen::Index k = 0; k < nt; ++k) {
    for (Eigen::Index j = 0; j < v.rho.cols(); ++j) {
      const CostPoint p{v.rho(k, j), v.omega(k, j), v.zeta(k, j)};
      if (p.a <= 0.0 && p.a > -kZeroBranchTol && std::abs(p.b) <= kZeroBranchTol &&
          std::abs(p.c) <= kZeroBranchTol)
        continue;
      const double f = f_delta(p, delta);
      if (f == kInfinity) return kInfinity;
      rows[k] += w * f;
    }
  }
  double total = 0.0;
  for (Eigen::Index k = 0; k < nt / 2; ++k) total += rows[k] + rows[nt - 1 - k];
  if (nt % 2 == 1) total += rows[nt / 2];
  return total;
}

}  // namespace wfr
