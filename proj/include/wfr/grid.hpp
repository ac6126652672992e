#pragma once

// Space-time discretization on the unit interval or unit circle.
//
// Layout conventions (all 2-D arrays are row-major, time along rows):
//   rho nodes    (n_steps + 1) x n_cells   density at time nodes / cell centers
//   omega faces  n_steps x n_faces         momentum at time midpoints / faces
//   zeta         n_steps x n_cells         source at time midpoints / cells
// Face j is the left face of cell j. On the interval faces 0 and n_cells are
// boundary faces and are never read (no-flux); on the circle face j sits
// between cells j-1 (mod n) and j.

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wfr/errors.hpp"

namespace wfr {

using Field = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

enum class DomainKind { Interval, Circle };

inline std::string to_string(DomainKind kind) {
  return kind == DomainKind::Interval ? "interval" : "circle";
}

struct SpatialGrid {
  DomainKind kind = DomainKind::Interval;
  int n_cells = 0;
  double cell_width = 0.0;
  Vector cell_centers;

  int n_faces() const { return kind == DomainKind::Interval ? n_cells + 1 : n_cells; }
  bool periodic() const { return kind == DomainKind::Circle; }
  double face_position(int f) const { return f * cell_width; }

  // Cells on either side of face f (left, right). Only meaningful for
  // interior faces on the interval.
  std::pair<int, int> face_cells(int f) const {
    if (periodic()) return {(f + n_cells - 1) % n_cells, f % n_cells};
    return {f - 1, f};
  }
  bool is_boundary_face(int f) const { return !periodic() && (f == 0 || f == n_cells); }

  bool operator==(const SpatialGrid& o) const {
    return kind == o.kind && n_cells == o.n_cells;
  }
};

struct TimeGrid {
  int n_steps = 0;
  double dt = 0.0;

  double node(int k) const { return k == n_steps ? 1.0 : k * dt; }
  double midpoint(int k) const { return (k + 0.5) * dt; }

  bool operator==(const TimeGrid& o) const { return n_steps == o.n_steps; }
};

struct Grids {
  SpatialGrid space;
  TimeGrid time;
};

inline Grids build_grids(DomainKind kind, int n_cells, int n_steps) {
  if (n_cells < 2) throw SizingError("n_cells must be >= 2, got " + std::to_string(n_cells));
  if (n_steps < 1) throw SizingError("n_steps must be >= 1, got " + std::to_string(n_steps));
  Grids g;
  g.space.kind = kind;
  g.space.n_cells = n_cells;
  g.space.cell_width = 1.0 / n_cells;
  g.space.cell_centers.resize(n_cells);
  for (int j = 0; j < n_cells; ++j) g.space.cell_centers[j] = (j + 0.5) / n_cells;
  g.time.n_steps = n_steps;
  g.time.dt = 1.0 / n_steps;
  return g;
}

struct StaggeredFields {
  Field rho;    // (n_steps+1) x n_cells
  Field omega;  // n_steps x n_faces
  Field zeta;   // n_steps x n_cells

  static StaggeredFields zeros(const Grids& g) {
    StaggeredFields u;
    u.rho = Field::Zero(g.time.n_steps + 1, g.space.n_cells);
    u.omega = Field::Zero(g.time.n_steps, g.space.n_faces());
    u.zeta = Field::Zero(g.time.n_steps, g.space.n_cells);
    return u;
  }
  double dot(const StaggeredFields& o) const {
    return rho.cwiseProduct(o.rho).sum() + omega.cwiseProduct(o.omega).sum() +
           zeta.cwiseProduct(o.zeta).sum();
  }
};

struct CenteredFields {
  Field rho;    // n_steps x n_cells
  Field omega;  // n_steps x n_cells
  Field zeta;   // n_steps x n_cells

  static CenteredFields zeros(const Grids& g) {
    CenteredFields v;
    v.rho = Field::Zero(g.time.n_steps, g.space.n_cells);
    v.omega = v.rho;
    v.zeta = v.rho;
    return v;
  }
  double dot(const CenteredFields& o) const {
    return rho.cwiseProduct(o.rho).sum() + omega.cwiseProduct(o.omega).sum() +
           zeta.cwiseProduct(o.zeta).sum();
  }
};

namespace detail {

inline void require_shape(const Field& f, Eigen::Index rows, Eigen::Index cols, const char* what) {
  if (f.rows() != rows || f.cols() != cols) {
    throw ShapeError(std::string(what) + ": expected " + std::to_string(rows) + "x" +
                     std::to_string(cols) + ", got " + std::to_string(f.rows()) + "x" +
                     std::to_string(f.cols()));
  }
}

inline void require_shape(const StaggeredFields& u, const Grids& g) {
  require_shape(u.rho, g.time.n_steps + 1, g.space.n_cells, "rho nodes");
  require_shape(u.omega, g.time.n_steps, g.space.n_faces(), "omega faces");
  require_shape(u.zeta, g.time.n_steps, g.space.n_cells, "zeta");
}

inline void require_shape(const CenteredFields& v, const Grids& g) {
  require_shape(v.rho, g.time.n_steps, g.space.n_cells, "rho centered");
  require_shape(v.omega, g.time.n_steps, g.space.n_cells, "omega centered");
  require_shape(v.zeta, g.time.n_steps, g.space.n_cells, "zeta centered");
}

}  // namespace detail

// (div w)_j = (w_{j+1} - w_j) / dx. Interval boundary faces are read as zero.
template <typename FaceRow>
Vector divergence(const FaceRow& omega, const SpatialGrid& grid) {
  const int n = grid.n_cells;
  if (omega.size() != grid.n_faces()) throw ShapeError("divergence: face field size mismatch");
  Vector div(n);
  const double inv_dx = 1.0 / grid.cell_width;
  for (int j = 0; j < n; ++j) {
    double left, right;
    if (grid.periodic()) {
      left = omega[j];
      right = omega[(j + 1) % n];
    } else {
      left = j == 0 ? 0.0 : omega[j];
      right = j + 1 == n ? 0.0 : omega[j + 1];
    }
    div[j] = (right - left) * inv_dx;
  }
  return div;
}

// (grad phi)_f = (phi_right - phi_left) / dx; zero on interval boundary faces.
template <typename CellRow>
Vector gradient(const CellRow& phi, const SpatialGrid& grid) {
  const int n = grid.n_cells;
  if (phi.size() != n) throw ShapeError("gradient: cell field size mismatch");
  Vector grad = Vector::Zero(grid.n_faces());
  const double inv_dx = 1.0 / grid.cell_width;
  for (int f = 0; f < grid.n_faces(); ++f) {
    if (grid.is_boundary_face(f)) continue;
    auto [l, r] = grid.face_cells(f);
    grad[f] = (phi[r] - phi[l]) * inv_dx;
  }
  return grad;
}

// Face values averaged back onto cells (boundary faces count as zero).
template <typename FaceRow>
Vector faces_to_cells(const FaceRow& w, const SpatialGrid& grid) {
  const int n = grid.n_cells;
  Vector c(n);
  for (int j = 0; j < n; ++j) {
    const int fr = grid.periodic() ? (j + 1) % n : j + 1;
    const double left = grid.is_boundary_face(j) ? 0.0 : w[j];
    const double right = grid.is_boundary_face(fr) ? 0.0 : w[fr];
    c[j] = 0.5 * (left + right);
  }
  return c;
}

// Transpose of faces_to_cells.
template <typename CellRow>
Vector cells_to_faces_adjoint(const CellRow& c, const SpatialGrid& grid) {
  Vector w = Vector::Zero(grid.n_faces());
  for (int f = 0; f < grid.n_faces(); ++f) {
    if (grid.is_boundary_face(f)) continue;
    auto [l, r] = grid.face_cells(f);
    w[f] = 0.5 * (c[l] + c[r]);
  }
  return w;
}

inline CenteredFields interp_to_centered(const StaggeredFields& u, const Grids& g) {
  detail::require_shape(u, g);
  const int nt = g.time.n_steps;
  CenteredFields v;
  v.rho = 0.5 * (u.rho.topRows(nt) + u.rho.bottomRows(nt));
  v.omega.resize(nt, g.space.n_cells);
  for (int k = 0; k < nt; ++k) v.omega.row(k) = faces_to_cells(u.omega.row(k), g.space).transpose();
  v.zeta = u.zeta;
  return v;
}

inline StaggeredFields adjoint_interp(const CenteredFields& v, const Grids& g) {
  detail::require_shape(v, g);
  const int nt = g.time.n_steps;
  StaggeredFields u = StaggeredFields::zeros(g);
  u.rho.topRows(nt) += 0.5 * v.rho;
  u.rho.bottomRows(nt) += 0.5 * v.rho;
  for (int k = 0; k < nt; ++k)
    u.omega.row(k) = cells_to_faces_adjoint(v.omega.row(k), g.space).transpose();
  u.zeta = v.zeta;
  return u;
}

struct ContinuityResidual {
  Field interior;  // n_steps x n_cells
  Vector start;    // rho^0 - rho0
  Vector end;      // rho^N - rho1

  double max_abs() const {
    return std::max({interior.cwiseAbs().maxCoeff(), start.cwiseAbs().maxCoeff(),
                     end.cwiseAbs().maxCoeff()});
  }
};

// (rho^{k+1} - rho^k)/dt + div omega^k - zeta^k, plus the endpoint mismatches.
inline ContinuityResidual continuity_residual(const StaggeredFields& u, const Vector& rho0,
                                              const Vector& rho1, const Grids& g) {
  detail::require_shape(u, g);
  if (rho0.size() != g.space.n_cells || rho1.size() != g.space.n_cells)
    throw ShapeError("continuity_residual: endpoint size mismatch");
  const int nt = g.time.n_steps;
  ContinuityResidual r;
  r.interior = (u.rho.bottomRows(nt) - u.rho.topRows(nt)) / g.time.dt - u.zeta;
  for (int k = 0; k < nt; ++k) r.interior.row(k) += divergence(u.omega.row(k), g.space).transpose();
  r.start = u.rho.row(0).transpose() - rho0;
  r.end = u.rho.row(nt).transpose() - rho1;
  return r;
}

}  // namespace wfr
