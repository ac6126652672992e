#pragma once

// Log-barrier Newton refinement of the discrete constrained WFR problem.
//
// Solves the same discrete problem as the splitting solver,
//
//   minimize  sum_c f_delta(I u)_c  subject to  B u = b,
//
// along the central path of  sum_c [f_delta(I u)_c - mu log (I u)_c.rho],
// driving mu to zero geometrically. Eliminating the epigraph variable of the
// rotated second-order cone {2 rho t >= |omega|^2 + delta^2 zeta^2} turns its
// standard self-concordant barrier into exactly this objective, so damped
// Newton with the usual step control applies. Each step solves the
// quasi-definite KKT system with a sparse LDL^T factorization.

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "wfr/energy.hpp"
#include "wfr/measures.hpp"

namespace wfr {

struct RefineParams {
  double mu_initial = 0.0;  // 0 selects a value from the starting energy
  double mu_final = 1e-11;
  double mu_factor = 0.1;
  int max_newton_steps = 400;
  double centering_tol = 1e-4;  // Newton decrement^2 / mu ending a barrier stage

  void validate() const {
    if (mu_initial < 0.0) throw InvalidArgument("mu_initial must be >= 0");
    if (!(mu_final > 0.0)) throw InvalidArgument("mu_final must be > 0");
    if (!(mu_factor > 0.0 && mu_factor < 1.0)) throw InvalidArgument("mu_factor must lie in (0, 1)");
    if (max_newton_steps < 1) throw InvalidArgument("max_newton_steps must be >= 1");
    if (!(centering_tol > 0.0)) throw InvalidArgument("centering_tol must be > 0");
  }
};

struct RefineResult {
  StaggeredFields u;
  Field phi;  // n_steps x n_cells, at time midpoints
  Field psi;  // (n_steps+1) x d, at time nodes
  int newton_steps = 0;
  double mu = 0.0;
  bool converged = false;
};

class BarrierRefiner {
 public:
  BarrierRefiner(const Grids& g, const Vector& rho0, const Vector& rho1, const ConstraintSpec& spec, double delta,
                 bool balanced)
      : g_(g), rho0_(rho0), rho1_(rho1), spec_(spec), delta_(delta), balanced_(balanced) {
    nt_ = g.time.n_steps;
    n_ = g.space.n_cells;
    if (nt_ < 2) throw InvalidArgument("barrier refinement needs at least two time steps");
    presolve();
    build_indices();
    build_constraints();
  }

  RefineResult refine(const StaggeredFields& start, const RefineParams& rp = {}) const {
    rp.validate();
    detail::require_shape(start, g_);
    Vector x = gather(start);
    lift_to_interior(x);

    double mu = rp.mu_initial;
    if (mu == 0.0) mu = std::max(objective_energy(x), 10.0 * rp.mu_final);
    mu = std::max(mu, rp.mu_final);

    Vector y = Vector::Zero(m_);
    RefineResult res;
    Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt;
    bool analyzed = false;
    bool final_stage = mu <= rp.mu_final;
    while (res.newton_steps < rp.max_newton_steps) {
      Vector grad;
      std::vector<Eigen::Triplet<double>> hess;
      evaluate(x, mu, grad, &hess);
      const Vector r_dual = grad + at_ * y;
      const Vector r_prim = a_ * x - b_;
      const SpMat exact = assemble_kkt(hess, 0.0, 0.0);
      const Vector scale = equilibrate(exact);
      const SpMat scaled = scale.asDiagonal() * exact * scale.asDiagonal();
      SpMat kkt = scaled;
      for (int i = 0; i < nx_ + m_; ++i) kkt.coeffRef(i, i) += i < nx_ ? kPrimalShift : -kDualShift;
      if (!analyzed) {
        ldlt.analyzePattern(kkt);
        analyzed = true;
      }
      ldlt.factorize(kkt);
      if (ldlt.info() != Eigen::Success) throw SolverError("barrier refinement: KKT factorization failed");
      Vector rhs(nx_ + m_);
      rhs << -r_dual, -r_prim;
      const Vector srhs = scale.cwiseProduct(rhs);
      Vector z = ldlt.solve(srhs);
      for (int pass = 0; pass < 20; ++pass) {
        const Vector resid = srhs - scaled.selfadjointView<Eigen::Lower>() * z;
        if (resid.norm() <= 1e-14 * srhs.norm()) break;
        z += ldlt.solve(resid);
      }
      const Vector sol = scale.cwiseProduct(z);
      const Vector dx = sol.head(nx_);
      const Vector dy = sol.tail(m_);
      ++res.newton_steps;

      // Newton decrement of the barrier objective scaled by 1/mu.
      const double dec2 = dx.dot(exact.topLeftCorner(nx_, nx_).selfadjointView<Eigen::Lower>() * dx) / mu;
      const bool primal_ok = m_ == 0 || r_prim.cwiseAbs().maxCoeff() <= 1e-12 * b_scale_;

      double step = max_step(x, dx);
      const double r0 = std::sqrt(r_dual.squaredNorm() + r_prim.squaredNorm());
      Vector xn, yn;
      for (int bt = 0; bt < 60; ++bt) {
        xn = x + step * dx;
        yn = y + step * dy;
        Vector gn;
        evaluate(xn, mu, gn, nullptr);
        const double r1 = std::sqrt((gn + at_ * yn).squaredNorm() + (a_ * xn - b_).squaredNorm());
        if (std::isfinite(r1) && r1 <= (1.0 - 0.01 * step) * r0) break;
        step *= 0.5;
      }
      x = xn;
      y = yn;
      if (dec2 <= rp.centering_tol && primal_ok) {
        if (final_stage) {
          res.converged = true;
          break;
        }
        mu = std::max(mu * rp.mu_factor, rp.mu_final);
        final_stage = mu <= rp.mu_final;
      }
    }
    res.mu = mu;
    res.u = scatter(x);
    recover_multipliers(y, res);
    return res;
  }

  // Number of interior density nodes fixed to zero by sign-definite
  // homogeneous constraint rows.
  int forced_zero_nodes() const { return static_cast<int>(forced_zero_.cast<int>().sum()); }

 private:
  using SpMat = Eigen::SparseMatrix<double>;
  // Diagonal shifts making the equilibrated KKT matrix quasi-definite; the
  // solve is refined against the unshifted matrix.
  static constexpr double kPrimalShift = 1e-8;
  static constexpr double kDualShift = 1e-8;

  // Free coordinates entering one collocated cell: rho = (sum of node
  // values)/2 + rho_fixed, omega = (sum of face values)/2, zeta.
  struct Cell {
    int rho_var[2] = {-1, -1};
    double rho_fixed = 0.0;
    int omega_var[2] = {-1, -1};
    int zeta_var = -1;
  };

  struct ConsRow {
    int row, node, component;
    double scale;
  };

  double cell_rho(const Cell& c, const Vector& x) const {
    double r = c.rho_fixed;
    for (int v : c.rho_var)
      if (v >= 0) r += 0.5 * x[v];
    return r;
  }
  double cell_omega(const Cell& c, const Vector& x) const {
    double w = 0.0;
    for (int v : c.omega_var)
      if (v >= 0) w += 0.5 * x[v];
    return w;
  }
  double cell_zeta(const Cell& c, const Vector& x) const { return c.zeta_var >= 0 ? x[c.zeta_var] : 0.0; }

  double objective_energy(const Vector& x) const {
    double total = 0.0;
    for (const Cell& c : cells_) {
      const double r = cell_rho(c, x), w = cell_omega(c, x), z = cell_zeta(c, x);
      total += (w * w + delta_ * delta_ * z * z) / (2.0 * r);
    }
    return total * g_.time.dt * g_.space.cell_width;
  }

  // A row sum_j h_j rho_j = 0 with all h_j of one sign admits only rho_j = 0
  // on the support of h once densities are nonnegative; those nodes are
  // fixed and the row is dropped. Keeping them would leave the feasible set
  // without interior points.
  void presolve() {
    forced_zero_ = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(nt_ + 1, n_, false);
    dropped_ = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(nt_ + 1, std::max(spec_.d, 1), false);
    for (int k = 1; k < nt_; ++k)
      for (int i = 0; i < spec_.d; ++i) {
        const auto h = spec_.h_values[i].row(k);
        const double scale = h.cwiseAbs().maxCoeff();
        if (scale == 0.0 || std::abs(spec_.f_values(k, i)) > 1e-14 * scale) continue;
        if (h.minCoeff() < 0.0 && h.maxCoeff() > 0.0) continue;
        for (int j = 0; j < n_; ++j)
          if (h[j] != 0.0) forced_zero_(k, j) = true;
        dropped_(k, i) = true;
      }
  }

  bool node_is_zero(int k, int j) const {
    if (k == 0) return rho0_[j] == 0.0;
    if (k == nt_) return rho1_[j] == 0.0;
    return forced_zero_(k, j);
  }

  void build_indices() {
    const int nf = g_.space.n_faces();
    dead_ = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(nt_, n_, false);
    for (int k = 0; k < nt_; ++k)
      for (int j = 0; j < n_; ++j) dead_(k, j) = node_is_zero(k, j) && node_is_zero(k + 1, j);

    rho_idx_ = Eigen::MatrixXi::Constant(nt_ + 1, n_, -1);
    omega_idx_ = Eigen::MatrixXi::Constant(nt_, nf, -1);
    zeta_idx_ = Eigen::MatrixXi::Constant(nt_, n_, -1);
    int next = 0;
    for (int k = 1; k < nt_; ++k)
      for (int j = 0; j < n_; ++j)
        if (!forced_zero_(k, j)) rho_idx_(k, j) = next++;
    n_rho_ = next;
    // A cell without density carries no momentum and, through its
    // continuity row, no flux on either face.
    for (int k = 0; k < nt_; ++k)
      for (int f = 0; f < nf; ++f) {
        if (g_.space.is_boundary_face(f)) continue;
        auto [l, r] = g_.space.face_cells(f);
        if (dead_(k, l) || dead_(k, r)) continue;
        omega_idx_(k, f) = next++;
      }
    if (!balanced_)
      for (int k = 0; k < nt_; ++k)
        for (int j = 0; j < n_; ++j)
          if (!dead_(k, j)) zeta_idx_(k, j) = next++;
    nx_ = next;

    for (int k = 0; k < nt_; ++k)
      for (int j = 0; j < n_; ++j) {
        if (dead_(k, j)) continue;
        Cell c;
        c.rho_var[0] = rho_idx_(k, j);
        c.rho_var[1] = rho_idx_(k + 1, j);
        if (k == 0) c.rho_fixed += 0.5 * rho0_[j];
        if (k + 1 == nt_) c.rho_fixed += 0.5 * rho1_[j];
        const int right = g_.space.periodic() ? (j + 1) % n_ : j + 1;
        c.omega_var[0] = omega_idx_(k, j);
        c.omega_var[1] = omega_idx_(k, right);
        c.zeta_var = zeta_idx_(k, j);
        cells_.push_back(c);
      }
  }

  // Continuity rows of live cells scaled by dt, then the remaining path
  // constraint rows at interior nodes, each scaled to unit largest
  // coefficient.
  void build_constraints() {
    std::vector<Eigen::Triplet<double>> trip;
    std::vector<double> rhs;
    const double dt = g_.time.dt, dx = g_.space.cell_width, ratio = dt / dx;
    ce_row_ = Eigen::MatrixXi::Constant(nt_, n_, -1);
    int row = 0;
    for (int k = 0; k < nt_; ++k)
      for (int j = 0; j < n_; ++j) {
        if (dead_(k, j)) continue;
        double b = 0.0;
        if (rho_idx_(k + 1, j) >= 0) trip.emplace_back(row, rho_idx_(k + 1, j), 1.0);
        else if (k + 1 == nt_) b -= rho1_[j];
        if (rho_idx_(k, j) >= 0) trip.emplace_back(row, rho_idx_(k, j), -1.0);
        else if (k == 0) b += rho0_[j];
        const int right = g_.space.periodic() ? (j + 1) % n_ : j + 1;
        if (omega_idx_(k, right) >= 0) trip.emplace_back(row, omega_idx_(k, right), ratio);
        if (omega_idx_(k, j) >= 0) trip.emplace_back(row, omega_idx_(k, j), -ratio);
        if (zeta_idx_(k, j) >= 0) trip.emplace_back(row, zeta_idx_(k, j), -dt);
        rhs.push_back(b);
        ce_row_(k, j) = row++;
      }
    for (int k = 1; k < nt_; ++k)
      for (int i = 0; i < spec_.d; ++i) {
        if (dropped_(k, i)) continue;
        const Vector h = spec_.h_values[i].row(k).transpose() * dx;
        const double s = h.cwiseAbs().maxCoeff();
        if (s == 0.0) continue;
        for (int j = 0; j < n_; ++j)
          if (h[j] != 0.0 && rho_idx_(k, j) >= 0) trip.emplace_back(row, rho_idx_(k, j), h[j] / s);
        rhs.push_back(spec_.f_values(k, i) / s);
        cons_rows_.push_back({row, k, i, s});
        ++row;
      }
    m_ = row;
    a_.resize(m_, nx_);
    a_.setFromTriplets(trip.begin(), trip.end());
    at_ = a_.transpose();
    b_ = Eigen::Map<const Vector>(rhs.data(), static_cast<Eigen::Index>(rhs.size()));
    b_scale_ = std::max(1.0, b_.size() ? b_.cwiseAbs().maxCoeff() : 0.0);
  }

  Vector gather(const StaggeredFields& u) const {
    Vector x(nx_);
    for (int k = 0; k <= nt_; ++k)
      for (int j = 0; j < n_; ++j)
        if (rho_idx_(k, j) >= 0) x[rho_idx_(k, j)] = u.rho(k, j);
    for (int k = 0; k < nt_; ++k)
      for (int f = 0; f < omega_idx_.cols(); ++f)
        if (omega_idx_(k, f) >= 0) x[omega_idx_(k, f)] = u.omega(k, f);
    for (int k = 0; k < nt_; ++k)
      for (int j = 0; j < n_; ++j)
        if (zeta_idx_(k, j) >= 0) x[zeta_idx_(k, j)] = u.zeta(k, j);
    return x;
  }

  StaggeredFields scatter(const Vector& x) const {
    StaggeredFields u = StaggeredFields::zeros(g_);
    u.rho.row(0) = rho0_.transpose();
    u.rho.row(nt_) = rho1_.transpose();
    for (int k = 0; k <= nt_; ++k)
      for (int j = 0; j < n_; ++j)
        if (rho_idx_(k, j) >= 0) u.rho(k, j) = x[rho_idx_(k, j)];
    for (int k = 0; k < nt_; ++k)
      for (int f = 0; f < omega_idx_.cols(); ++f)
        if (omega_idx_(k, f) >= 0) u.omega(k, f) = x[omega_idx_(k, f)];
    for (int k = 0; k < nt_; ++k)
      for (int j = 0; j < n_; ++j)
        if (zeta_idx_(k, j) >= 0) u.zeta(k, j) = x[zeta_idx_(k, j)];
    return u;
  }

  // Clamp free density nodes to a small positive floor.
  void lift_to_interior(Vector& x) const {
    const double scale = 0.5 * (rho0_.cwiseAbs().mean() + rho1_.cwiseAbs().mean());
    const double floor = std::max(1e-3 * scale, 1e-12);
    for (int v = 0; v < n_rho_; ++v) x[v] = std::max(x[v], floor);
  }

  // Largest step in (0, 1] keeping every free density node positive, with a
  // fraction-to-boundary margin. Collocated densities of live cells are
  // averages of such nodes and fixed nonnegative values, hence positive too.
  double max_step(const Vector& x, const Vector& dx) const {
    double step = 1.0;
    for (int v = 0; v < n_rho_; ++v)
      if (dx[v] < 0.0) step = std::min(step, 0.99 * x[v] / -dx[v]);
    return step;
  }

  // Gradient (and optionally lower-triangle Hessian triplets) of
  //   sum_c [f(c) - mu log rho_c] - mu sum_nodes log rho_node.
  void evaluate(const Vector& x, double mu, Vector& grad, std::vector<Eigen::Triplet<double>>* hess) const {
    grad = Vector::Zero(nx_);
    if (hess) {
      hess->clear();
      hess->reserve(cells_.size() * 15 + n_rho_);
    }
    for (int v = 0; v < n_rho_; ++v) {
      if (!(x[v] > 0.0)) {
        grad.setConstant(kInfinity);
        return;
      }
      grad[v] -= mu / x[v];
      if (hess) hess->emplace_back(v, v, mu / (x[v] * x[v]));
    }
    const double d2 = delta_ * delta_;
    for (const Cell& c : cells_) {
      const double r = cell_rho(c, x), w = cell_omega(c, x), z = cell_zeta(c, x);
      if (!(r > 0.0)) {
        grad.setConstant(kInfinity);
        return;
      }
      const double q = w * w + d2 * z * z;
      const double gr = -q / (2.0 * r * r) - mu / r, gw = w / r, gz = d2 * z / r;
      int idx[5];
      double jr[5], jw[5], jz[5];
      int nv = 0;
      auto add = [&](int v, double a, double b, double cc) {
        idx[nv] = v;
        jr[nv] = a;
        jw[nv] = b;
        jz[nv] = cc;
        ++nv;
      };
      for (int v : c.rho_var)
        if (v >= 0) add(v, 0.5, 0.0, 0.0);
      for (int v : c.omega_var)
        if (v >= 0) add(v, 0.0, 0.5, 0.0);
      if (c.zeta_var >= 0) add(c.zeta_var, 0.0, 0.0, 1.0);
      for (int a = 0; a < nv; ++a) grad[idx[a]] += jr[a] * gr + jw[a] * gw + jz[a] * gz;
      if (!hess) continue;
      const double hrr = q / (r * r * r) + mu / (r * r), hrw = -w / (r * r), hrz = -d2 * z / (r * r);
      const double hww = 1.0 / r, hzz = d2 / r;
      for (int a = 0; a < nv; ++a)
        for (int b = 0; b < nv; ++b) {
          if (idx[a] < idx[b]) continue;
          const double val = jr[a] * (hrr * jr[b] + hrw * jw[b] + hrz * jz[b]) +
                             jw[a] * (hrw * jr[b] + hww * jw[b]) + jz[a] * (hrz * jr[b] + hzz * jz[b]);
          if (val != 0.0) hess->emplace_back(idx[a], idx[b], val);
        }
    }
  }

  // Symmetric Ruiz scaling of a lower-stored symmetric matrix: returns d
  // with every row of diag(d) K diag(d) of unit max-norm (approximately).
  static Vector equilibrate(const SpMat& lower) {
    const Eigen::Index n = lower.rows();
    Vector d = Vector::Ones(n);
    for (int sweep = 0; sweep < 10; ++sweep) {
      Vector row_max = Vector::Zero(n);
      for (int col = 0; col < lower.outerSize(); ++col)
        for (SpMat::InnerIterator it(lower, col); it; ++it) {
          const double v = std::abs(it.value()) * d[it.row()] * d[col];
          row_max[it.row()] = std::max(row_max[it.row()], v);
          row_max[col] = std::max(row_max[col], v);
        }
      for (Eigen::Index i = 0; i < n; ++i)
        if (row_max[i] > 0.0) d[i] /= std::sqrt(row_max[i]);
    }
    return d;
  }

  // Lower triangle of [H + reg I, A^T; A, -reg I].
  SpMat assemble_kkt(const std::vector<Eigen::Triplet<double>>& hess, double reg, double dreg) const {
    std::vector<Eigen::Triplet<double>> trip(hess);
    trip.reserve(hess.size() + a_.nonZeros() + nx_ + m_);
    for (int i = 0; i < nx_; ++i) trip.emplace_back(i, i, reg);
    for (int col = 0; col < a_.outerSize(); ++col)
      for (SpMat::InnerIterator it(a_, col); it; ++it) trip.emplace_back(nx_ + it.row(), col, it.value());
    for (int i = 0; i < m_; ++i) trip.emplace_back(nx_ + i, nx_ + i, -dreg);
    SpMat k(nx_ + m_, nx_ + m_);
    k.setFromTriplets(trip.begin(), trip.end());
    return k;
  }

  // Continuity multipliers give the potential at midpoints (zero in cells
  // without density); constraint multipliers give the node coefficients of
  // the constraint functions (zero for dropped rows).
  void recover_multipliers(const Vector& y, RefineResult& res) const {
    res.phi = Field::Zero(nt_, n_);
    for (int k = 0; k < nt_; ++k)
      for (int j = 0; j < n_; ++j)
        if (ce_row_(k, j) >= 0) res.phi(k, j) = g_.time.dt * y[ce_row_(k, j)];
    res.psi = Field::Zero(nt_ + 1, spec_.d);
    for (const ConsRow& c : cons_rows_) res.psi(c.node, c.component) = y[c.row] * g_.space.cell_width / c.scale;
    if (spec_.d > 0) {
      res.psi.row(0) = res.psi.row(1);
      res.psi.row(nt_) = res.psi.row(nt_ - 1);
    }
  }

  Grids g_;
  Vector rho0_, rho1_;
  ConstraintSpec spec_;
  double delta_;
  bool balanced_;
  int nt_ = 0, n_ = 0, nx_ = 0, n_rho_ = 0, m_ = 0;
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> forced_zero_, dropped_, dead_;
  Eigen::MatrixXi rho_idx_, omega_idx_, zeta_idx_, ce_row_;
  std::vector<Cell> cells_;
  std::vector<ConsRow> cons_rows_;
  SpMat a_, at_;
  Vector b_;
  double b_scale_ = 1.0;
};

}  // namespace wfr
