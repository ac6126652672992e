#pragma once

// Explicit finite-energy paths: Fisher-Rao teleportation through the zero
// measure, linear interpolation, pure scaling, 1-D displacement
// interpolation, its mass-rescaled variant, and the time-reversal /
// concatenation algebra used in the metric axioms.
//
// Every constructor derives the source (and for displacement paths the
// momentum) from the discrete continuity equation, so its output is
// feasible on the grid by construction.

#include <algorithm>
#include <cmath>
#include <iterator>
#include <vector>

#include "wfr/energy.hpp"
#include "wfr/measures.hpp"

namespace wfr {

struct PathTriple {
  Grids grids;
  double delta = 1.0;
  StaggeredFields staggered;
  // Collocated copy used for energy evaluation. Equals
  // interp_to_centered(staggered) except for constructors that know the
  // exact density at time midpoints (teleport_path).
  CenteredFields centered;

  Vector start() const { return staggered.rho.row(0).transpose(); }
  Vector end() const { return staggered.rho.row(grids.time.n_steps).transpose(); }
  double energy() const { return path_energy(centered, grids, delta); }

  static PathTriple from_staggered(StaggeredFields u, const Grids& g, double delta) {
    PathTriple p;
    p.grids = g;
    p.delta = delta;
    p.centered = interp_to_centered(u, g);
    p.staggered = std::move(u);
    return p;
  }
};

namespace detail {

inline void require_same_grid(const DiscreteMeasure& m, const Grids& g, const char* what) {
  if (!(m.grid == g.space)) throw ShapeError(std::string(what) + " lives on a different spatial grid");
}

// zeta^k = (rho^{k+1} - rho^k)/dt + div omega^k, i.e. the exact discrete CE.
inline void close_source(StaggeredFields& u, const Grids& g) {
  const int nt = g.time.n_steps;
  u.zeta = (u.rho.bottomRows(nt) - u.rho.topRows(nt)) / g.time.dt;
  for (int k = 0; k < nt; ++k) u.zeta.row(k) += divergence(u.omega.row(k), g.space).transpose();
}

inline void require_positive_delta(double delta) {
  if (!(delta > 0.0)) throw InvalidArgument("delta must be > 0");
}

}  // namespace detail

// rho_t = (1-2t)^2 rho0 on [0, 1/2], (2t-1)^2 rho1 on [1/2, 1], omega = 0.
// Midpoint densities are sampled from the same formula, which makes the
// integrand constant in time and the energy exactly 4 delta^2 (m0 + m1).
inline PathTriple teleport_path(const DiscreteMeasure& rho0, const DiscreteMeasure& rho1,
                                const Grids& g, double delta) {
  detail::require_positive_delta(delta);
  detail::require_same_grid(rho0, g, "rho0");
  detail::require_same_grid(rho1, g, "rho1");
  const int nt = g.time.n_steps;
  if (nt % 2 != 0) throw InvalidArgument("teleport_path needs an even number of time steps");
  auto weight = [](double t, bool first_half) {
    const double s = first_half ? 1.0 - 2.0 * t : 2.0 * t - 1.0;
    return s * s;
  };
  StaggeredFields u = StaggeredFields::zeros(g);
  const int half = nt / 2;
  for (int k = 0; k <= nt; ++k) {
    if (k < half) u.rho.row(k) = weight(g.time.node(k), true) * rho0.density.transpose();
    else if (k > half) u.rho.row(k) = weight(g.time.node(k), false) * rho1.density.transpose();
  }
  u.rho.row(0) = rho0.density.transpose();
  u.rho.row(nt) = rho1.density.transpose();
  detail::close_source(u, g);
  PathTriple p = PathTriple::from_staggered(std::move(u), g, delta);
  for (int k = 0; k < nt; ++k) {
    const bool first = k < half;
    p.centered.rho.row(k) =
        weight(g.time.midpoint(k), first) * (first ? rho0.density : rho1.density).transpose();
  }
  return p;
}

// rho_t = (1-t) rho0 + t rho1, omega = 0, zeta = rho1 - rho0.
inline PathTriple linear_fr_path(const DiscreteMeasure& rho0, const DiscreteMeasure& rho1,
                                 const Grids& g, double delta) {
  detail::require_positive_delta(delta);
  detail::require_same_grid(rho0, g, "rho0");
  detail::require_same_grid(rho1, g, "rho1");
  StaggeredFields u = StaggeredFields::zeros(g);
  const int nt = g.time.n_steps;
  for (int k = 0; k < nt; ++k)
    u.rho.row(k) = (rho0.density + g.time.node(k) * (rho1.density - rho0.density)).transpose();
  u.rho.row(nt) = rho1.density.transpose();
  detail::close_source(u, g);
  return PathTriple::from_staggered(std::move(u), g, delta);
}

// rho^k = F(t_k)/F(0) rho0 with F sampled at the time nodes.
inline PathTriple scaling_path(const DiscreteMeasure& rho0, const Vector& F, const Grids& g,
                               double delta) {
  detail::require_positive_delta(delta);
  detail::require_same_grid(rho0, g, "rho0");
  const int nt = g.time.n_steps;
  if (F.size() != nt + 1) throw ShapeError("scaling_path: F needs n_steps + 1 samples");
  if (!(F.minCoeff() > 0.0)) throw InfeasibleError("scaling_path: F must be positive at every node");
  const double m0 = rho0.total_mass();
  if (std::abs(m0 - F[0]) > 1e-10 * std::max(1.0, std::abs(F[0])))
    throw InfeasibleError("scaling_path: rho0 mass " + std::to_string(m0) + " differs from F(0) = " +
                          std::to_string(F[0]));
  StaggeredFields u = StaggeredFields::zeros(g);
  for (int k = 0; k <= nt; ++k) u.rho.row(k) = (F[k] / F[0]) * rho0.density.transpose();
  u.rho.row(0) = rho0.density.transpose();
  detail::close_source(u, g);
  return PathTriple::from_staggered(std::move(u), g, delta);
}

namespace detail {

// Monotone quantile map of a piecewise-constant density on the unit
// interval, normalized to unit mass.
class QuantileMap {
 public:
  explicit QuantileMap(const DiscreteMeasure& m) : dx_(m.grid.cell_width), n_(m.grid.n_cells) {
    cdf_.resize(n_ + 1);
    cdf_[0] = 0.0;
    for (int j = 0; j < n_; ++j) cdf_[j + 1] = cdf_[j] + m.density[j] * dx_;
    const double total = cdf_[n_];
    for (double& c : cdf_) c /= total;
    cdf_[n_] = 1.0;
  }

  double operator()(double s) const {
    if (s <= 0.0) return first_support();
    if (s >= 1.0) return last_support();
    // first face f with cdf_[f] >= s, then interpolate inside cell f-1
    auto it = std::lower_bound(cdf_.begin(), cdf_.end(), s);
    const int f = static_cast<int>(it - cdf_.begin());
    const int j = f - 1;
    const double width = cdf_[f] - cdf_[j];
    return (j + (s - cdf_[j]) / width) * dx_;
  }

  const std::vector<double>& cdf() const { return cdf_; }

  // Cell j with cdf_[j] < s <= cdf_[j+1], for s strictly inside (0, 1).
  int cell_containing(double s) const {
    const auto it = std::lower_bound(cdf_.begin(), cdf_.end(), s);
    return std::clamp(static_cast<int>(it - cdf_.begin()) - 1, 0, n_ - 1);
  }

  // The linear branch of the map on cell j, evaluated at s.
  double linear(double s, int j) const { return (j + (s - cdf_[j]) / (cdf_[j + 1] - cdf_[j])) * dx_; }

 private:
  double first_support() const {
    int j = 0;
    while (j < n_ - 1 && cdf_[j + 1] <= 0.0) ++j;
    return j * dx_;
  }
  double last_support() const {
    int j = n_;
    while (j > 1 && cdf_[j - 1] >= 1.0) --j;
    return j * dx_;
  }

  double dx_;
  int n_;
  std::vector<double> cdf_;
};

// Deposits the mass of the displacement interpolant X_t = (1-t) Q0 + t Q1
// onto cells. Both quantile maps are linear between consecutive knots of
// the merged cdf breakpoints, so each knot interval carries a uniform
// density over [X_t(s_k+), X_t(s_{k+1}-)] and the deposition is exact.
inline Vector displacement_density(const QuantileMap& q0, const QuantileMap& q1, double t,
                                   double mass, const SpatialGrid& grid) {
  std::vector<double> knots;
  std::merge(q0.cdf().begin(), q0.cdf().end(), q1.cdf().begin(), q1.cdf().end(), std::back_inserter(knots));
  knots.erase(std::unique(knots.begin(), knots.end()), knots.end());

  Vector cell_mass = Vector::Zero(grid.n_cells);
  const double dx = grid.cell_width;
  auto cell_of = [&](double x) { return std::clamp(static_cast<int>(std::floor(x / dx)), 0, grid.n_cells - 1); };
  for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
    const double s_lo = knots[k], s_hi = knots[k + 1];
    if (!(s_hi > s_lo)) continue;
    const double s_mid = 0.5 * (s_lo + s_hi);
    const int c0 = q0.cell_containing(s_mid), c1 = q1.cell_containing(s_mid);
    const double left = (1.0 - t) * q0.linear(s_lo, c0) + t * q1.linear(s_lo, c1);
    const double right = (1.0 - t) * q0.linear(s_hi, c0) + t * q1.linear(s_hi, c1);
    const double piece_mass = mass * (s_hi - s_lo);
    if (right - left <= 1e-15) {
      cell_mass[cell_of(0.5 * (left + right))] += piece_mass;
      continue;
    }
    const int jl = cell_of(left), jr = cell_of(right);
    for (int j = jl; j <= jr; ++j) {
      const double lo = std::max(left, j * dx), hi = std::min(right, (j + 1) * dx);
      if (hi > lo) cell_mass[j] += piece_mass * (hi - lo) / (right - left);
    }
  }
  return cell_mass / dx;
}

}  // namespace detail

// Balanced displacement interpolation on the interval. The density at each
// interior node is the grid histogram of the quantile interpolation
// X_t = (1-t) Q0 + t Q1; omega follows from the CE with zeta = 0 by
// integrating the flux from the left wall.
inline PathTriple balanced_quantile_path(const DiscreteMeasure& rho0, const DiscreteMeasure& rho1,
                                         const Grids& g, double delta) {
  detail::require_positive_delta(delta);
  detail::require_same_grid(rho0, g, "rho0");
  detail::require_same_grid(rho1, g, "rho1");
  if (g.space.periodic())
    throw InfeasibleError("balanced_quantile_path is only available on the interval");
  const double m0 = rho0.total_mass(), m1 = rho1.total_mass();
  if (!(m0 > 0.0) || !(m1 > 0.0)) throw InfeasibleError("balanced_quantile_path needs positive masses");
  if (std::abs(m0 - m1) > 1e-10) throw InfeasibleError("balanced_quantile_path needs equal masses");

  const int nt = g.time.n_steps, n = g.space.n_cells;
  const detail::QuantileMap q0(rho0), q1(rho1);
  StaggeredFields u = StaggeredFields::zeros(g);
  u.rho.row(0) = rho0.density.transpose();
  u.rho.row(nt) = rho1.density.transpose();
  for (int k = 1; k < nt; ++k)
    u.rho.row(k) = detail::displacement_density(q0, q1, g.time.node(k), m0, g.space).transpose();

  // The flux through a face is the mass that crossed it. It is accumulated
  // from whichever wall holds less mass, so that near-vacuum tails keep
  // fluxes with relative (not absolute) precision.
  const double dx = g.space.cell_width, dt = g.time.dt;
  Vector left(n + 1), right(n + 1);
  for (int k = 0; k < nt; ++k) {
    left[0] = 0.0;
    for (int j = 0; j < n; ++j) left[j + 1] = left[j] + dx * (u.rho(k, j) + u.rho(k + 1, j));
    right[n] = 0.0;
    for (int j = n - 1; j >= 0; --j) right[j] = right[j + 1] + dx * (u.rho(k, j) + u.rho(k + 1, j));
    double from_left = 0.0, from_right = 0.0;
    Vector flux_left(n + 1), flux_right(n + 1);
    for (int j = 0; j < n; ++j) {
      from_left -= dx * (u.rho(k + 1, j) - u.rho(k, j)) / dt;
      flux_left[j + 1] = from_left;
    }
    for (int j = n - 1; j >= 0; --j) {
      from_right += dx * (u.rho(k + 1, j) - u.rho(k, j)) / dt;
      flux_right[j] = from_right;
    }
    for (int f = 1; f < n; ++f) u.omega(k, f) = left[f] <= right[f] ? flux_left[f] : flux_right[f];
  }
  return PathTriple::from_staggered(std::move(u), g, delta);
}

// (F rho, F omega, F' rho) built on the balanced path between the normalized
// endpoints; F is applied at the matching grid location of each field.
inline PathTriple scaled_balanced_path(const DiscreteMeasure& rho0, const DiscreteMeasure& rho1,
                                       const Vector& F, const Grids& g, double delta) {
  const int nt = g.time.n_steps;
  if (F.size() != nt + 1) throw ShapeError("scaled_balanced_path: F needs n_steps + 1 samples");
  if (!(F.minCoeff() > 0.0)) throw InfeasibleError("scaled_balanced_path: F must be positive");
  const double m0 = rho0.total_mass(), m1 = rho1.total_mass();
  auto close = [](double a, double b) { return std::abs(a - b) <= 1e-10 * std::max(1.0, std::abs(b)); };
  if (!close(m0, F[0]) || !close(m1, F[nt]))
    throw InfeasibleError("scaled_balanced_path: endpoint masses must equal F(0) and F(1)");
  const DiscreteMeasure n0(rho0.grid, rho0.density / m0), n1(rho1.grid, rho1.density / m1);
  PathTriple base = balanced_quantile_path(n0, n1, g, delta);

  StaggeredFields u = StaggeredFields::zeros(g);
  for (int k = 0; k <= nt; ++k) u.rho.row(k) = F[k] * base.staggered.rho.row(k);
  u.rho.row(0) = rho0.density.transpose();
  u.rho.row(nt) = rho1.density.transpose();
  for (int k = 0; k < nt; ++k) u.omega.row(k) = 0.5 * (F[k] + F[k + 1]) * base.staggered.omega.row(k);
  detail::close_source(u, g);
  return PathTriple::from_staggered(std::move(u), g, delta);
}

// (rho_{1-t}, -omega_{1-t}, -zeta_{1-t}).
inline PathTriple time_reverse(const PathTriple& p) {
  PathTriple r = p;
  r.staggered.rho = p.staggered.rho.colwise().reverse();
  r.staggered.omega = -p.staggered.omega.colwise().reverse();
  r.staggered.zeta = -p.staggered.zeta.colwise().reverse();
  r.centered.rho = p.centered.rho.colwise().reverse();
  r.centered.omega = -p.centered.omega.colwise().reverse();
  r.centered.zeta = -p.centered.zeta.colwise().reverse();
  return r;
}

// Runs p1 on [0, 1/2] and p2 on [1/2, 1]. Each input step becomes one step
// of half the length, so momentum and source double and the output has
// twice as many time steps.
inline PathTriple concatenate(const PathTriple& p1, const PathTriple& p2) {
  if (!(p1.grids.space == p2.grids.space) || !(p1.grids.time == p2.grids.time))
    throw ShapeError("concatenate: paths live on different grids");
  if (p1.delta != p2.delta) throw InvalidArgument("concatenate: paths use different delta");
  const Vector a = p1.end(), b = p2.start();
  if ((a - b).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, a.cwiseAbs().maxCoeff()))
    throw InvalidArgument("concatenate: end of first path differs from start of second");
  const int nt = p1.grids.time.n_steps;
  const Grids g = build_grids(p1.grids.space.kind, p1.grids.space.n_cells, 2 * nt);

  PathTriple out;
  out.grids = g;
  out.delta = p1.delta;
  out.staggered = StaggeredFields::zeros(g);
  out.staggered.rho.topRows(nt + 1) = p1.staggered.rho;
  out.staggered.rho.bottomRows(nt) = p2.staggered.rho.bottomRows(nt);
  out.staggered.omega << 2.0 * p1.staggered.omega, 2.0 * p2.staggered.omega;
  out.staggered.zeta << 2.0 * p1.staggered.zeta, 2.0 * p2.staggered.zeta;
  out.centered = CenteredFields::zeros(g);
  out.centered.rho << p1.centered.rho, p2.centered.rho;
  out.centered.omega << 2.0 * p1.centered.omega, 2.0 * p2.centered.omega;
  out.centered.zeta << 2.0 * p1.centered.zeta, 2.0 * p2.centered.zeta;
  return out;
}

}  // namespace wfr
