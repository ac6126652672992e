#pragma once

// Douglas-Rachford splitting for the discrete constrained WFR problem
//
//   minimize  sum_{k,j} dt dx f_delta(I u)   subject to   B u = b,
//
// posed on pairs (u, v) of staggered and centered fields with
//   G1(u, v) = indicator{B u = b}(u) + sum f_delta(v),
//   G2(u, v) = indicator{v = I u}.
// B stacks the interior continuity rows, the endpoint rows, the path
// constraint rows at every interior time node, and (balanced mode) zeta = 0.
// Objectives are measured per cell (the dt dx weight is folded into the
// inner product), so the pointwise prox uses tau = step.

#include <chrono>
#include <cmath>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "wfr/energy.hpp"
#include "wfr/measures.hpp"
#include "wfr/paths.hpp"
#include "wfr/refine.hpp"

namespace wfr {

struct Problem {
  Grids grids;
  DiscreteMeasure rho0;
  DiscreteMeasure rho1;
  ConstraintSpec spec;
  double delta = 1.0;
  bool balanced = false;  // freeze zeta = 0
  double feasibility_tol = 1e-8;
};

struct SolverParams {
  int max_iters = 20000;
  double dr_step = 0.0;  // 0 selects 1/delta
  double relaxation = 1.8;
  double projection_tol = 1e-10;
  int projection_max_refinements = 5;
  double fixed_point_tol = 1e-7;
  int log_every = 100;
  // Log-barrier Newton polish of the splitting iterate (see refine.hpp).
  bool refine = true;
  RefineParams refine_params;

  void validate() const {
    if (max_iters < 1) throw InvalidArgument("max_iters must be >= 1");
    if (dr_step < 0.0) throw InvalidArgument("dr_step must be > 0 (or 0 for the default)");
    if (!(relaxation > 0.0 && relaxation <= 2.0)) throw InvalidArgument("relaxation must lie in (0, 2]");
    if (!(projection_tol > 0.0)) throw InvalidArgument("projection_tol must be > 0");
    if (projection_max_refinements < 0) throw InvalidArgument("projection_max_refinements must be >= 0");
    if (!(fixed_point_tol > 0.0)) throw InvalidArgument("fixed_point_tol must be > 0");
    if (log_every < 1) throw InvalidArgument("log_every must be >= 1");
    refine_params.validate();
  }
};

struct ConvergenceRow {
  int iteration = 0;
  double dr_residual = 0.0;
  double energy = 0.0;
  double ce_residual = 0.0;
  double constraint_residual = 0.0;
};

using ConvergenceLog = std::vector<ConvergenceRow>;

struct Solution {
  PathTriple path;
  double energy = 0.0;
  double distance = 0.0;
  Field phi;  // n_steps x n_cells, at time midpoints
  Field psi;  // (n_steps+1) x d, at time nodes
  ConvergenceLog log;
  int iterations = 0;
  bool converged = false;
  double final_dr_residual = 0.0;
  double energy_interpolated = 0.0;  // energy of I(u); +inf if vacuum noise leaves dom f
  double interp_gap = 0.0;           // max |v - I(u)| between the two collocated copies
  double ce_residual = 0.0;
  double constraint_residual = 0.0;
  bool refined = false;  // path comes from a converged barrier refinement
  int newton_steps = 0;
  double wall_seconds = 0.0;
};

namespace detail {

inline double max_abs(const Field& f) { return f.size() == 0 ? 0.0 : f.cwiseAbs().maxCoeff(); }

inline double constraint_violation(const ConstraintSpec& spec, const Field& rho, const SpatialGrid& grid) {
  if (spec.d == 0) return 0.0;
  return max_abs(constraint_eval(spec, rho, grid));
}

inline void validate_problem(const Problem& p) {
  require_positive_delta(p.delta);
  require_same_grid(p.rho0, p.grids, "rho0");
  require_same_grid(p.rho1, p.grids, "rho1");
  if (p.spec.d > 0) {
    if (static_cast<int>(p.spec.h_values.size()) != p.spec.d)
      throw ShapeError("constraint spec has inconsistent dimension");
    require_shape(p.spec.f_values, p.grids.time.n_steps + 1, p.spec.d, "constraint f_values");
    for (const auto& h : p.spec.h_values)
      require_shape(h, p.grids.time.n_steps + 1, p.grids.space.n_cells, "constraint h_values");
  }
}

}  // namespace detail

// Thrown when the endpoints violate the path constraint; carries the report.
class InfeasibleProblem : public InfeasibleError {
 public:
  InfeasibleProblem(const std::string& what, FeasibilityReport r) : InfeasibleError(what), report(std::move(r)) {}
  FeasibilityReport report;
};

inline FeasibilityReport check_problem(const Problem& p) {
  detail::validate_problem(p);
  FeasibilityReport r = check_feasibility(p.spec, p.rho0, p.rho1, p.feasibility_tol);
  if (p.balanced) {
    const double gap = p.rho1.total_mass() - p.rho0.total_mass();
    if (std::abs(gap) > p.feasibility_tol) r.feasible = false;
  }
  return r;
}

// Euclidean projection onto {B u = b}. The continuity block B_ce B_ce^T is
// separable, I (x) T/dt^2 + L/dx^2 (x) I + c I with T and L small path/cycle
// Laplacians, so it is inverted exactly in their joint eigenbasis. Path
// constraint rows are eliminated through a dense Schur complement.
class AffineProjector {
 public:
  struct Result {
    StaggeredFields u;
    Field ce_multiplier;          // n_steps x n_cells
    Field constraint_multiplier;  // (n_steps+1) x d, rows 1..n_steps-1 used
  };

  AffineProjector(const Problem& problem, double tol = 1e-10, int max_refinements = 5)
      : p_(problem), g_(problem.grids), tol_(tol), max_refinements_(max_refinements) {
    detail::validate_problem(problem);
    nt_ = g_.time.n_steps;
    n_ = g_.space.n_cells;
    dt_ = g_.time.dt;
    dx_ = g_.space.cell_width;
    build_spectral();
    build_constraint_rows();
  }

  Result project(const StaggeredFields& u) const {
    Result res;
    res.u = u;
    res.ce_multiplier = Field::Zero(nt_, n_);
    res.constraint_multiplier = Field::Zero(nt_ + 1, p_.spec.d);
    fix_coordinates(res.u);
    for (int pass = 0; pass <= max_refinements_; ++pass) {
      Field r_ce = ce_residual(res.u);
      Vector r_k = constraint_residual(res.u);
      const double worst = std::max(detail::max_abs(r_ce), r_k.size() ? r_k.cwiseAbs().maxCoeff() : 0.0);
      if (pass > 0 && worst <= tol_) return res;
      Field y_ce;
      Vector y_k;
      solve_normal(r_ce, r_k, y_ce, y_k);
      apply_transpose_update(res.u, y_ce, y_k);
      res.ce_multiplier += y_ce;
      for (std::size_t r = 0; r < rows_.size(); ++r)
        res.constraint_multiplier(rows_[r].node, rows_[r].component) += y_k[r];
    }
    Field r_ce = ce_residual(res.u);
    Vector r_k = constraint_residual(res.u);
    const double worst = std::max(detail::max_abs(r_ce), r_k.size() ? r_k.cwiseAbs().maxCoeff() : 0.0);
    if (worst > 10.0 * tol_)
      throw SolverError("affine projection did not reach tolerance (residual " + std::to_string(worst) + ")");
    return res;
  }

  // Residual of the continuity rows (midpoint form) after endpoints are fixed.
  Field ce_residual(const StaggeredFields& u) const {
    Field r = (u.rho.bottomRows(nt_) - u.rho.topRows(nt_)) / dt_;
    if (!p_.balanced) r -= u.zeta;
    for (int k = 0; k < nt_; ++k) r.row(k) += divergence(u.omega.row(k), g_.space).transpose();
    return r;
  }

  int constraint_rows() const { return static_cast<int>(rows_.size()); }

 private:
  struct Row {
    int node;
    int component;
    Vector h;  // H_i(t_k, .) dx
  };

  void fix_coordinates(StaggeredFields& u) const {
    u.rho.row(0) = p_.rho0.density.transpose();
    u.rho.row(nt_) = p_.rho1.density.transpose();
    if (p_.balanced) u.zeta.setZero();
    if (!g_.space.periodic()) {
      u.omega.col(0).setZero();
      u.omega.col(n_).setZero();
    }
  }

  Vector constraint_residual(const StaggeredFields& u) const {
    Vector r(rows_.size());
    for (std::size_t i = 0; i < rows_.size(); ++i)
      r[i] = rows_[i].h.dot(u.rho.row(rows_[i].node).transpose()) - p_.spec.f_values(rows_[i].node, rows_[i].component);
    return r;
  }

  void build_spectral() {
    // T = D D^T * dt^2, D maps interior nodes 1..nt-1 to the nt CE rows.
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(nt_, nt_);
    auto interior = [&](int m) { return m >= 1 && m <= nt_ - 1; };
    for (int k = 0; k < nt_; ++k) {
      T(k, k) = (interior(k) ? 1.0 : 0.0) + (interior(k + 1) ? 1.0 : 0.0);
      if (k + 1 < nt_ && interior(k + 1)) T(k, k + 1) = T(k + 1, k) = -1.0;
    }
    // L = div div^T * dx^2 over the free faces.
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n_, n_);
    for (int f = 0; f < g_.space.n_faces(); ++f) {
      if (g_.space.is_boundary_face(f)) continue;
      auto [l, r] = g_.space.face_cells(f);
      L(l, l) += 1.0;
      L(r, r) += 1.0;
      L(l, r) -= 1.0;
      L(r, l) -= 1.0;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> et(T), ex(L);
    qt_ = et.eigenvectors();
    qx_ = ex.eigenvectors();
    inv_denom_.resize(nt_, n_);
    const double shift = p_.balanced ? 0.0 : 1.0;
    double largest = 0.0;
    for (int a = 0; a < nt_; ++a)
      for (int b = 0; b < n_; ++b) {
        inv_denom_(a, b) = std::max(0.0, et.eigenvalues()[a]) / (dt_ * dt_) +
                           std::max(0.0, ex.eigenvalues()[b]) / (dx_ * dx_) + shift;
        largest = std::max(largest, inv_denom_(a, b));
      }
    for (int a = 0; a < nt_; ++a)
      for (int b = 0; b < n_; ++b)
        inv_denom_(a, b) = inv_denom_(a, b) > 1e-12 * largest ? 1.0 / inv_denom_(a, b) : 0.0;
  }

  // Pseudo-inverse of the continuity block applied to an nt x n array.
  Eigen::MatrixXd apply_ce_inverse(const Eigen::MatrixXd& r) const {
    Eigen::MatrixXd m = qt_.transpose() * r * qx_;
    m.array() *= inv_denom_.array();
    return qt_ * m * qx_.transpose();
  }

  // Continuity rows applied to the rho-only vector carried by constraint row r.
  Eigen::MatrixXd ce_image_of_row(const Row& row) const {
    Eigen::MatrixXd e = Eigen::MatrixXd::Zero(nt_, n_);
    e.row(row.node - 1) = row.h.transpose() / dt_;
    e.row(row.node) = -row.h.transpose() / dt_;
    return e;
  }

  void build_constraint_rows() {
    const int d = p_.spec.d;
    if (d == 0) return;
    for (int k = 1; k < nt_; ++k)
      for (int i = 0; i < d; ++i) {
        Vector h = p_.spec.h_values[i].row(k).transpose() * dx_;
        if (h.cwiseAbs().maxCoeff() == 0.0) continue;
        rows_.push_back({k, i, std::move(h)});
      }
    const int m = static_cast<int>(rows_.size());
    if (m == 0) return;
    w_.resize(m);
    Eigen::MatrixXd schur = Eigen::MatrixXd::Zero(m, m);
    for (int r = 0; r < m; ++r) w_[r] = apply_ce_inverse(ce_image_of_row(rows_[r]));
    for (int r = 0; r < m; ++r)
      for (int s = r; s < m; ++s) {
        double v = rows_[r].node == rows_[s].node ? rows_[r].h.dot(rows_[s].h) : 0.0;
        // <E_r, W_s>, E_r nonzero on two time rows only
        const int k = rows_[r].node;
        v -= (rows_[r].h.dot(w_[s].row(k - 1).transpose()) - rows_[r].h.dot(w_[s].row(k).transpose())) / dt_;
        schur(r, s) = schur(s, r) = v;
      }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(schur);
    const double hi = es.eigenvalues().cwiseAbs().maxCoeff();
    const double lo = es.eigenvalues().minCoeff();
    if (!(lo > 1e-12 * hi))
      throw SolverError(
          "path constraint rows are linearly dependent on the continuity/endpoint rows; "
          "remove dependent constraint components");
    schur_ = schur.ldlt();
  }

  void solve_normal(const Field& r_ce, const Vector& r_k, Field& y_ce, Vector& y_k) const {
    Eigen::MatrixXd z = apply_ce_inverse(r_ce);
    y_k = Vector::Zero(rows_.size());
    if (!rows_.empty()) {
      Vector rhs = r_k;
      for (std::size_t r = 0; r < rows_.size(); ++r) {
        const int k = rows_[r].node;
        rhs[r] -= (rows_[r].h.dot(z.row(k - 1).transpose()) - rows_[r].h.dot(z.row(k).transpose())) / dt_;
      }
      y_k = schur_.solve(rhs);
      for (std::size_t r = 0; r < rows_.size(); ++r) z -= y_k[r] * w_[r];
    }
    y_ce = z;
  }

  // u -= B^T y on the free coordinates.
  void apply_transpose_update(StaggeredFields& u, const Field& y_ce, const Vector& y_k) const {
    for (int m = 1; m < nt_; ++m) u.rho.row(m) -= (y_ce.row(m - 1) - y_ce.row(m)) / dt_;
    for (std::size_t r = 0; r < rows_.size(); ++r) u.rho.row(rows_[r].node) -= y_k[r] * rows_[r].h.transpose();
    for (int k = 0; k < nt_; ++k) {
      // div^T y = -grad y
      u.omega.row(k) += gradient(y_ce.row(k), g_.space).transpose();
    }
    if (!p_.balanced) u.zeta += y_ce;
  }

  Problem p_;
  Grids g_;
  double tol_;
  int max_refinements_;
  int nt_ = 0, n_ = 0;
  double dt_ = 0.0, dx_ = 0.0;
  Eigen::MatrixXd qt_, qx_, inv_denom_;
  std::vector<Row> rows_;
  std::vector<Eigen::MatrixXd> w_;
  Eigen::LDLT<Eigen::MatrixXd> schur_;
};

inline StaggeredFields project_affine(const StaggeredFields& u, const Problem& problem, double tol = 1e-10) {
  return AffineProjector(problem, tol).project(u).u;
}

// Nearest pair (u, v) with v = I u to a given pair (u0, v0):
// (Id + I^T I) u = u0 + I^T v0, then v = I u. The normal matrices are
// per-cell in time for rho and per-step in space for omega.
class GraphProjector {
 public:
  explicit GraphProjector(const Grids& g) : g_(g) {
    const int nt = g.time.n_steps, n = g.space.n_cells;
    Eigen::MatrixXd mr = Eigen::MatrixXd::Identity(nt + 1, nt + 1);
    for (int k = 0; k < nt; ++k) {
      mr(k, k) += 0.25;
      mr(k + 1, k + 1) += 0.25;
      mr(k, k + 1) += 0.25;
      mr(k + 1, k) += 0.25;
    }
    rho_solver_.compute(mr);
    for (int f = 0; f < g.space.n_faces(); ++f)
      if (!g.space.is_boundary_face(f)) free_faces_.push_back(f);
    const int nf = static_cast<int>(free_faces_.size());
    Eigen::MatrixXd avg = Eigen::MatrixXd::Zero(n, nf);  // faces -> cells
    for (int q = 0; q < nf; ++q) {
      auto [l, r] = g.space.face_cells(free_faces_[q]);
      avg(l, q) += 0.5;
      avg(r, q) += 0.5;
    }
    Eigen::MatrixXd mo = Eigen::MatrixXd::Identity(nf, nf) + avg.transpose() * avg;
    omega_solver_.compute(mo);
  }

  std::pair<StaggeredFields, CenteredFields> project(const StaggeredFields& u0, const CenteredFields& v0) const {
    const int nt = g_.time.n_steps;
    StaggeredFields rhs = adjoint_interp(v0, g_);
    StaggeredFields u = StaggeredFields::zeros(g_);
    Eigen::MatrixXd rr = u0.rho + rhs.rho;
    u.rho = rho_solver_.solve(rr);
    const int nf = static_cast<int>(free_faces_.size());
    Eigen::MatrixXd ro(nf, nt);
    for (int q = 0; q < nf; ++q) ro.row(q) = (u0.omega.col(free_faces_[q]) + rhs.omega.col(free_faces_[q])).transpose();
    Eigen::MatrixXd so = omega_solver_.solve(ro);
    for (int q = 0; q < nf; ++q) u.omega.col(free_faces_[q]) = so.row(q).transpose();
    u.zeta = 0.5 * (u0.zeta + v0.zeta);
    CenteredFields v = interp_to_centered(u, g_);
    return {std::move(u), std::move(v)};
  }

 private:
  Grids g_;
  std::vector<int> free_faces_;
  Eigen::LLT<Eigen::MatrixXd> rho_solver_;
  Eigen::LLT<Eigen::MatrixXd> omega_solver_;
};

inline std::pair<StaggeredFields, CenteredFields> project_interp_graph(const StaggeredFields& u,
                                                                       const CenteredFields& v, const Grids& g) {
  detail::require_shape(u, g);
  detail::require_shape(v, g);
  return GraphProjector(g).project(u, v);
}

namespace detail {

inline void prox_energy(CenteredFields& v, double tau, double delta) {
  for (Eigen::Index k = 0; k < v.rho.rows(); ++k)
    for (Eigen::Index j = 0; j < v.rho.cols(); ++j) {
      const CostPoint q = prox_f_delta({v.rho(k, j), v.omega(k, j), v.zeta(k, j)}, tau, delta);
      v.rho(k, j) = q.a;
      v.omega(k, j) = q.b;
      v.zeta(k, j) = q.c;
    }
}

inline double squared_distance(const StaggeredFields& a, const StaggeredFields& b, const CenteredFields& c,
                               const CenteredFields& e) {
  return (a.rho - b.rho).squaredNorm() + (a.omega - b.omega).squaredNorm() + (a.zeta - b.zeta).squaredNorm() +
         (c.rho - e.rho).squaredNorm() + (c.omega - e.omega).squaredNorm() + (c.zeta - e.zeta).squaredNorm();
}

inline double squared_norm(const StaggeredFields& a, const CenteredFields& c) {
  return a.rho.squaredNorm() + a.omega.squaredNorm() + a.zeta.squaredNorm() + c.rho.squaredNorm() +
         c.omega.squaredNorm() + c.zeta.squaredNorm();
}

}  // namespace detail

// Dual potential at time midpoints and constraint multipliers at time nodes,
// read off the multipliers of an affine projection taken with step `step`.
struct PotentialEstimate {
  Field phi;  // n_steps x n_cells
  Field psi;  // (n_steps+1) x d
};

inline PotentialEstimate potential_from_multipliers(const AffineProjector::Result& r, double step, const Grids& g) {
  PotentialEstimate out;
  out.phi = r.ce_multiplier / step;
  out.psi = r.constraint_multiplier * (g.space.cell_width / step);
  const int nt = g.time.n_steps;
  if (nt >= 2 && out.psi.cols() > 0) {
    out.psi.row(0) = out.psi.row(1);
    out.psi.row(nt) = out.psi.row(nt - 1);
  }
  return out;
}

// Time-node values of a midpoint field: averages inside, linear
// extrapolation at t = 0 and t = 1.
inline Field midpoints_to_nodes(const Field& mid) {
  const Eigen::Index nt = mid.rows();
  Field nodes(nt + 1, mid.cols());
  if (nt == 1) {
    nodes.row(0) = mid.row(0);
    nodes.row(1) = mid.row(0);
    return nodes;
  }
  for (Eigen::Index k = 1; k < nt; ++k) nodes.row(k) = 0.5 * (mid.row(k - 1) + mid.row(k));
  nodes.row(0) = 1.5 * mid.row(0) - 0.5 * mid.row(1);
  nodes.row(nt) = 1.5 * mid.row(nt - 1) - 0.5 * mid.row(nt - 2);
  return nodes;
}

inline Solution solve(const Problem& problem, const SolverParams& params = {}) {
  params.validate();
  const auto t_start = std::chrono::steady_clock::now();
  const FeasibilityReport feas = check_problem(problem);
  if (!feas.feasible) throw InfeasibleProblem("endpoints do not satisfy the path constraint", feas);

  const Grids& g = problem.grids;
  const double delta = problem.delta;
  const double step = params.dr_step > 0.0 ? params.dr_step : 1.0 / delta;
  const double alpha = params.relaxation;
  const AffineProjector affine(problem, params.projection_tol, params.projection_max_refinements);
  const GraphProjector graph(g);

  // Start from the linear Fisher-Rao interpolation, made feasible.
  StaggeredFields zu = linear_fr_path(problem.rho0, problem.rho1, g, delta).staggered;
  zu = affine.project(zu).u;
  CenteredFields zv = interp_to_centered(zu, g);
  if (problem.balanced) zv.zeta.setZero();

  Solution sol;
  AffineProjector::Result last;
  CenteredFields last_v;
  const double scale = std::sqrt(static_cast<double>(zu.rho.size() + zu.omega.size() + zu.zeta.size() + 3 * zv.rho.size()));
  int it = 0;
  double residual = kInfinity;
  for (it = 1; it <= params.max_iters; ++it) {
    auto [xu, xv] = graph.project(zu, zv);
    StaggeredFields wu{2.0 * xu.rho - zu.rho, 2.0 * xu.omega - zu.omega, 2.0 * xu.zeta - zu.zeta};
    CenteredFields yv{2.0 * xv.rho - zv.rho, 2.0 * xv.omega - zv.omega, 2.0 * xv.zeta - zv.zeta};
    last = affine.project(wu);
    detail::prox_energy(yv, step, delta);
    const StaggeredFields& yu = last.u;
    last_v = yv;

    residual = std::sqrt(detail::squared_distance(yu, xu, yv, xv)) / scale;
    zu.rho += alpha * (yu.rho - xu.rho);
    zu.omega += alpha * (yu.omega - xu.omega);
    zu.zeta += alpha * (yu.zeta - xu.zeta);
    zv.rho += alpha * (yv.rho - xv.rho);
    zv.omega += alpha * (yv.omega - xv.omega);
    zv.zeta += alpha * (yv.zeta - xv.zeta);

    const bool done = residual <= params.fixed_point_tol;
    if (it % params.log_every == 0 || done || it == params.max_iters || it == 1) {
      ConvergenceRow row;
      row.iteration = it;
      row.dr_residual = residual;
      row.energy = path_energy(yv, g, delta);
      const ContinuityResidual ce = continuity_residual(xu, problem.rho0.density, problem.rho1.density, g);
      row.ce_residual = ce.max_abs();
      row.constraint_residual = detail::constraint_violation(problem.spec, xu.rho, g.space);
      sol.log.push_back(row);
    }
    if (done) break;
  }
  sol.iterations = std::min(it, params.max_iters);
  sol.converged = residual <= params.fixed_point_tol;
  sol.final_dr_residual = residual;

  // The staggered path is the last affine projection (exactly feasible). Its
  // collocated copy is the energy-prox output, which agrees with I(u) at the
  // fixed point and, unlike I(u), never leaves the domain of f_delta in
  // vacuum regions.
  sol.path = PathTriple::from_staggered(last.u, g, delta);
  sol.energy_interpolated = path_energy(sol.path.centered, g, delta);
  sol.interp_gap = std::max({detail::max_abs(last_v.rho - sol.path.centered.rho),
                             detail::max_abs(last_v.omega - sol.path.centered.omega),
                             detail::max_abs(last_v.zeta - sol.path.centered.zeta)});
  sol.path.centered = last_v;
  const PotentialEstimate pot = potential_from_multipliers(last, step, g);
  sol.phi = pot.phi;
  sol.psi = pot.psi;

  // Splitting iterates approach vacuum slowly; polish with barrier Newton
  // started from the last iterate. Its output is used only if it converged.
  if (params.refine && g.time.n_steps >= 2) {
    const BarrierRefiner refiner(g, problem.rho0.density, problem.rho1.density, problem.spec, delta,
                                 problem.balanced);
    RefineResult r = refiner.refine(last.u, params.refine_params);
    sol.newton_steps = r.newton_steps;
    if (r.converged) {
      sol.refined = true;
      sol.path = PathTriple::from_staggered(r.u, g, delta);
      sol.energy_interpolated = sol.path.energy();
      sol.interp_gap = 0.0;
      sol.phi = r.phi;
      sol.psi = r.psi;
    }
  }
  sol.energy = sol.path.energy();
  if (!std::isfinite(sol.energy)) throw SolverError("solver terminated on a path with non-finite energy");
  sol.distance = std::sqrt(sol.energy);
  sol.ce_residual = continuity_residual(sol.path.staggered, problem.rho0.density, problem.rho1.density, g).max_abs();
  sol.constraint_residual = detail::constraint_violation(problem.spec, sol.path.staggered.rho, g.space);
  sol.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return sol;
}

inline PotentialEstimate recover_potential(const Solution& s) { return {s.phi, s.psi}; }

}  // namespace wfr
