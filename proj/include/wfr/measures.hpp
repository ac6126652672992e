#pragma once

// Discrete measures, measure presets, and affine path constraints
//   sum_j H_i(t_k, x_j) rho^k_j dx = F_i(t_k)    for every time node k.

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "wfr/grid.hpp"

namespace wfr {

struct DiscreteMeasure {
  SpatialGrid grid;
  Vector density;  // one value per cell; mass of cell j is density[j] * dx

  DiscreteMeasure() = default;
  DiscreteMeasure(SpatialGrid g, Vector d) : grid(std::move(g)), density(std::move(d)) {
    if (density.size() != grid.n_cells) throw ShapeError("measure density size does not match grid");
    for (Eigen::Index j = 0; j < density.size(); ++j) {
      if (!(density[j] >= 0.0) || !std::isfinite(density[j]))
        throw InvalidArgument("measure density must be finite and nonnegative (cell " +
                              std::to_string(j) + ")");
    }
  }

  double total_mass() const { return density.sum() * grid.cell_width; }
};

namespace preset {

struct Uniform {
  double mass = 1.0;
};
struct Bump {
  double center = 0.5;
  double width = 0.1;
  double mass = 1.0;
};
struct DiracCell {
  int index = 0;
  double mass = 1.0;
};
// Strictly positive random density, reproducible from the seed.
struct Random {
  double mass = 1.0;
  double floor = 0.2;
  std::uint64_t seed = 0;
};
struct Explicit {
  std::vector<double> density;
};
using Component = std::variant<Uniform, Bump, DiracCell, Random, Explicit>;
struct Mixture {
  std::vector<Component> components;
};
using MeasurePreset = std::variant<Uniform, Bump, DiracCell, Random, Explicit, Mixture>;

}  // namespace preset

namespace detail {

inline double periodic_distance(double x, double y) {
  double d = std::abs(x - y);
  return std::min(d, 1.0 - d);
}

inline void require_mass(double mass) {
  if (!(mass >= 0.0) || !std::isfinite(mass)) throw InvalidArgument("measure mass must be >= 0");
}

inline Vector sample_density(const preset::Uniform& p, const SpatialGrid& grid) {
  require_mass(p.mass);
  return Vector::Constant(grid.n_cells, p.mass);
}

inline Vector sample_density(const preset::Bump& p, const SpatialGrid& grid) {
  require_mass(p.mass);
  if (!(p.width > 0.0)) throw InvalidArgument("bump width must be > 0");
  Vector d(grid.n_cells);
  for (int j = 0; j < grid.n_cells; ++j) {
    const double x = grid.cell_centers[j];
    const double r = grid.periodic() ? periodic_distance(x, p.center) : x - p.center;
    d[j] = std::exp(-0.5 * r * r / (p.width * p.width));
  }
  const double m = d.sum() * grid.cell_width;
  if (!(m > 0.0)) throw InvalidArgument("bump underflows on this grid");
  return d * (p.mass / m);
}

inline Vector sample_density(const preset::DiracCell& p, const SpatialGrid& grid) {
  require_mass(p.mass);
  if (p.index < 0 || p.index >= grid.n_cells)
    throw InvalidArgument("dirac cell index " + std::to_string(p.index) + " out of range");
  Vector d = Vector::Zero(grid.n_cells);
  d[p.index] = p.mass / grid.cell_width;
  return d;
}

inline Vector sample_density(const preset::Random& p, const SpatialGrid& grid) {
  require_mass(p.mass);
  if (!(p.floor >= 0.0)) throw InvalidArgument("random preset floor must be >= 0");
  std::mt19937_64 rng(p.seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vector d(grid.n_cells);
  for (int j = 0; j < grid.n_cells; ++j) d[j] = p.floor + u(rng);
  return d * (p.mass / (d.sum() * grid.cell_width));
}

inline Vector sample_density(const preset::Explicit& p, const SpatialGrid& grid) {
  if (static_cast<int>(p.density.size()) != grid.n_cells)
    throw ShapeError("explicit density has " + std::to_string(p.density.size()) +
                     " entries, grid has " + std::to_string(grid.n_cells) + " cells");
  return Eigen::Map<const Vector>(p.density.data(), grid.n_cells);
}

}  // namespace detail

inline DiscreteMeasure make_measure(const preset::MeasurePreset& p, const SpatialGrid& grid) {
  Vector d = std::visit(
      [&](const auto& q) -> Vector {
        using T = std::decay_t<decltype(q)>;
        if constexpr (std::is_same_v<T, preset::Mixture>) {
          Vector sum = Vector::Zero(grid.n_cells);
          for (const auto& item : q.components)
            sum += std::visit([&](const auto& c) { return detail::sample_density(c, grid); }, item);
          return sum;
        } else {
          return detail::sample_density(q, grid);
        }
      },
      p);
  return DiscreteMeasure(grid, std::move(d));
}

using TimeFunction = std::function<double(double)>;

struct ConstraintSpec {
  int d = 0;
  std::vector<Field> h_values;  // d entries, each (n_steps+1) x n_cells
  Field f_values;               // (n_steps+1) x d
  bool time_independent = true;
  std::string name = "none";

  bool unconstrained() const { return d == 0; }
};

struct FeasibilityReport {
  Vector residual_0;
  Vector residual_1;
  bool feasible = true;
  double tolerance = 0.0;
};

namespace detail {

inline ConstraintSpec sample_constraint(const std::vector<std::function<double(double, double)>>& h,
                                        const std::vector<TimeFunction>& f, const Grids& g,
                                        bool time_independent, std::string name) {
  ConstraintSpec spec;
  spec.d = static_cast<int>(h.size());
  spec.time_independent = time_independent;
  spec.name = std::move(name);
  const int nt = g.time.n_steps, n = g.space.n_cells;
  spec.f_values = Field::Zero(nt + 1, spec.d);
  for (int i = 0; i < spec.d; ++i) {
    Field hi(nt + 1, n);
    for (int k = 0; k <= nt; ++k) {
      const double t = g.time.node(k);
      for (int j = 0; j < n; ++j) hi(k, j) = h[i](t, g.space.cell_centers[j]);
      spec.f_values(k, i) = f[i](t);
    }
    spec.h_values.push_back(std::move(hi));
  }
  return spec;
}

}  // namespace detail

namespace constraints {

inline ConstraintSpec none(const Grids& g) {
  ConstraintSpec spec;
  spec.f_values = Field::Zero(g.time.n_steps + 1, 0);
  return spec;
}

// H = 1, so the constraint prescribes the total mass F(t).
inline ConstraintSpec total_mass(const TimeFunction& F, const Grids& g) {
  ConstraintSpec spec = detail::sample_constraint({[](double, double) { return 1.0; }}, {F}, g,
                                                  false, "total_mass");
  const Field& f = spec.f_values;
  spec.time_independent = (f.array() == f(0, 0)).all();
  return spec;
}

// Probability densities: H = 1, F = 1.
inline ConstraintSpec spherical_hk(const Grids& g) {
  return detail::sample_constraint({[](double, double) { return 1.0; }},
                                   {[](double) { return 1.0; }}, g, true, "spherical_hk");
}

// H(x) = (x - c_1)...(x - c_n), F constant.
inline ConstraintSpec moment(const std::vector<double>& centers, double value, const Grids& g) {
  if (centers.empty()) throw InvalidArgument("moment constraint needs at least one center");
  auto h = [centers](double, double x) {
    double p = 1.0;
    for (double c : centers) p *= (x - c);
    return p;
  };
  return detail::sample_constraint({h}, {[value](double) { return value; }}, g, true, "moment");
}

// Moving barrier Gamma(t) = (a(t), b(t)), endpoints interpolated linearly in
// time. H is a hat profile that is positive on Gamma(t) and zero elsewhere;
// F = 0, so no mass may sit inside the barrier.
struct BarrierRegion {
  double a0, b0, a1, b1;
  double lower(double t) const { return (1.0 - t) * a0 + t * a1; }
  double upper(double t) const { return (1.0 - t) * b0 + t * b1; }
  double profile(double t, double x) const {
    if (!contains(t, x)) return 0.0;
    const double lo = lower(t), hi = upper(t);
    const double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
    return std::max(0.0, 1.0 - std::abs(x - mid) / half);
  }
  bool contains(double t, double x) const { return x > lower(t) && x < upper(t); }
};

inline ConstraintSpec barrier(const BarrierRegion& region, const Grids& g) {
  if (!(region.b0 > region.a0) || !(region.b1 > region.a1))
    throw InvalidArgument("barrier region is empty");
  ConstraintSpec spec = detail::sample_constraint(
      {[region](double t, double x) { return region.profile(t, x); }},
      {[](double) { return 0.0; }}, g,
      region.a0 == region.a1 && region.b0 == region.b1, "barrier");
  for (int k = 0; k <= g.time.n_steps; ++k) {
    if (spec.h_values[0].row(k).maxCoeff() <= 0.0)
      throw InvalidArgument("barrier region contains no cell center at t = " +
                            std::to_string(g.time.node(k)));
  }
  return spec;
}

// Area-measure closure on the circle: integral of (cos 2 pi x, sin 2 pi x) is 0.
inline ConstraintSpec closure(const Grids& g) {
  if (!g.space.periodic()) throw InvalidArgument("closure constraint requires a circle domain");
  constexpr double two_pi = 2.0 * std::numbers::pi;
  return detail::sample_constraint(
      {[=](double, double x) { return std::cos(two_pi * x); },
       [=](double, double x) { return std::sin(two_pi * x); }},
      {[](double) { return 0.0; }, [](double) { return 0.0; }}, g, true, "closure");
}

inline ConstraintSpec explicit_arrays(std::vector<Field> h_values, Field f_values, const Grids& g) {
  ConstraintSpec spec;
  spec.d = static_cast<int>(h_values.size());
  spec.name = "explicit";
  detail::require_shape(f_values, g.time.n_steps + 1, spec.d, "constraint f_values");
  for (const auto& h : h_values) detail::require_shape(h, g.time.n_steps + 1, g.space.n_cells, "constraint h_values");
  spec.time_independent = true;
  for (const auto& h : h_values)
    for (Eigen::Index k = 1; k < h.rows(); ++k)
      if (h.row(k) != h.row(0)) spec.time_independent = false;
  for (Eigen::Index k = 1; k < f_values.rows(); ++k)
    if (f_values.row(k) != f_values.row(0)) spec.time_independent = false;
  spec.h_values = std::move(h_values);
  spec.f_values = std::move(f_values);
  return spec;
}

}  // namespace constraints

// Raw moments sum_j H_i(t_k, x_j) rho^k_j dx, (n_steps+1) x d.
inline Field constraint_moments(const ConstraintSpec& spec, const Field& rho_nodes, const SpatialGrid& grid) {
  const Eigen::Index nk = spec.f_values.rows();
  detail::require_shape(rho_nodes, nk, grid.n_cells, "constraint_eval density path");
  Field out(nk, spec.d);
  for (int i = 0; i < spec.d; ++i)
    out.col(i) = spec.h_values[i].cwiseProduct(rho_nodes).rowwise().sum() * grid.cell_width;
  return out;
}

inline Field constraint_eval(const ConstraintSpec& spec, const Field& rho_nodes, const SpatialGrid& grid) {
  return constraint_moments(spec, rho_nodes, grid) - spec.f_values;
}

inline FeasibilityReport check_feasibility(const ConstraintSpec& spec, const DiscreteMeasure& rho0,
                                           const DiscreteMeasure& rho1, double tol) {
  FeasibilityReport r;
  r.tolerance = tol;
  r.residual_0 = Vector::Zero(spec.d);
  r.residual_1 = Vector::Zero(spec.d);
  const Eigen::Index last = spec.f_values.rows() - 1;
  for (int i = 0; i < spec.d; ++i) {
    r.residual_0[i] = spec.h_values[i].row(0).dot(rho0.density.transpose()) * rho0.grid.cell_width -
                      spec.f_values(0, i);
    r.residual_1[i] = spec.h_values[i].row(last).dot(rho1.density.transpose()) * rho1.grid.cell_width -
                      spec.f_values(last, i);
  }
  const double worst = spec.d == 0 ? 0.0
                                   : std::max(r.residual_0.cwiseAbs().maxCoeff(),
                                              r.residual_1.cwiseAbs().maxCoeff());
  r.feasible = worst <= tol;
  return r;
}

}  // namespace wfr
