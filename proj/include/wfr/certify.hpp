#pragma once

// Sufficient optimality conditions for a candidate (path, potential) pair
// and residuals of the geodesic equations with constraint multipliers
// recovered from the weighted Gram system.
//
// Certificate conditions, at every time midpoint and with
//   alpha = d_t phi - sum_i g_i H_i,  beta = grad phi,  gamma = phi:
//   alpha + (beta^2 + gamma^2/delta^2)/2 = 0   on the support of rho,
//   alpha + (beta^2 + gamma^2/delta^2)/2 <= 0  everywhere,
//   beta rho = omega,  gamma rho = delta^2 zeta.
// The multipliers g_i are unknown and recovered by rho-weighted least
// squares.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wfr/energy.hpp"
#include "wfr/errors.hpp"
#include "wfr/grid.hpp"
#include "wfr/measures.hpp"
#include "wfr/paths.hpp"

namespace wfr {

inline constexpr double kSupportThreshold = 1e-10;  // relative to the max density
inline constexpr double kGramConditionLimit = 1e12;
inline constexpr double kDefaultCertifyTol = 1e-2;

struct CertificateReport {
  Field g;  // n_steps x d, multipliers at time midpoints
  double r_hj = 0.0;
  double r_membership = 0.0;
  double r_momentum = 0.0;
  double r_source = 0.0;
  double tolerance = kDefaultCertifyTol;
  bool certified = false;
};

struct GeodesicResiduals {
  double r_hamilton_jacobi = 0.0;
  double r_continuity = 0.0;
  Field gamma;  // n_steps x d
};

namespace detail {

// Cell values of the face gradient (faces averaged back onto cells).
inline Vector cell_gradient(const Vector& f, const SpatialGrid& grid) {
  return faces_to_cells(gradient(f, grid), grid);
}

inline Vector midpoint_row(const Field& nodes, int k) {
  return 0.5 * (nodes.row(k) + nodes.row(k + 1)).transpose();
}

inline void require_constraint_shape(const ConstraintSpec& spec, const Grids& g) {
  if (static_cast<int>(spec.h_values.size()) != spec.d) throw ShapeError("constraint spec has inconsistent dimension");
  for (const auto& h : spec.h_values) require_shape(h, g.time.n_steps + 1, g.space.n_cells, "constraint h_values");
  if (spec.d > 0) require_shape(spec.f_values, g.time.n_steps + 1, spec.d, "constraint f_values");
}

inline double support_floor(const Field& rho) {
  return rho.size() == 0 ? 0.0 : kSupportThreshold * std::max(rho.maxCoeff(), 0.0);
}

}  // namespace detail

// Solves G gamma = b with
//   G_ij = sum_x [H_i H_j / delta^2 + grad H_i . grad H_j] rho dx,
//   b_i  = sum_x [H_i phi / delta^2 + grad H_i . grad phi] rho dx + shift_i.
// The optional shift carries F_i'(t) - int d_t H_i rho for time-varying
// constraints (zero for time-independent ones).
inline Vector gram_system(const DiscreteMeasure& rho_t, const Vector& phi_t, const std::vector<Vector>& h_t,
                          double delta, const Vector& shift = Vector()) {
  const SpatialGrid& grid = rho_t.grid;
  const int d = static_cast<int>(h_t.size());
  if (d < 1) throw InvalidArgument("gram_system requires at least one constraint function");
  if (!(delta > 0.0)) throw InvalidArgument("delta must be > 0");
  if (phi_t.size() != grid.n_cells) throw ShapeError("gram_system: potential size mismatch");
  for (const Vector& h : h_t)
    if (h.size() != grid.n_cells) throw ShapeError("gram_system: constraint function size mismatch");
  if (shift.size() != 0 && shift.size() != d) throw ShapeError("gram_system: shift size mismatch");
  if (!(rho_t.total_mass() > 0.0)) throw InvalidArgument("gram_system requires positive mass");

  const Vector w = rho_t.density * grid.cell_width;
  const double inv_d2 = 1.0 / (delta * delta);
  std::vector<Vector> grads;
  for (const Vector& h : h_t) grads.push_back(detail::cell_gradient(h, grid));
  const Vector grad_phi = detail::cell_gradient(phi_t, grid);

  Eigen::MatrixXd G(d, d);
  Vector b(d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j)
      G(i, j) = (h_t[i].cwiseProduct(h_t[j]) * inv_d2 + grads[i].cwiseProduct(grads[j])).dot(w);
    b[i] = (h_t[i].cwiseProduct(phi_t) * inv_d2 + grads[i].cwiseProduct(grad_phi)).dot(w);
  }
  if (shift.size() == d) b += shift;

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(G);
  const auto& sv = svd.singularValues();
  const double smax = sv[0], smin = sv[d - 1];
  if (!(smin > 0.0) || smax / smin > kGramConditionLimit)
    throw IllConditionedError("constraint Gram matrix is singular or ill-conditioned (condition number " +
                              std::to_string(smin > 0.0 ? smax / smin : kInfinity) +
                              "); the constraint functions must be linearly independent on the support");
  return G.ldlt().solve(b);
}

// phi is given at time nodes, (n_steps+1) x n_cells.
inline CertificateReport certify(const PathTriple& path, const Field& phi, const ConstraintSpec& spec, double delta,
                                 double tol = kDefaultCertifyTol) {
  const Grids& g = path.grids;
  const int nt = g.time.n_steps, n = g.space.n_cells, d = spec.d;
  if (!(delta > 0.0)) throw InvalidArgument("delta must be > 0");
  if (!(tol > 0.0)) throw InvalidArgument("certification tolerance must be > 0");
  detail::require_shape(phi, nt + 1, n, "potential");
  detail::require_shape(path.staggered, g);
  detail::require_shape(path.centered, g);
  detail::require_constraint_shape(spec, g);

  const double inv_d2 = 1.0 / (delta * delta);
  const double floor = detail::support_floor(path.centered.rho);
  CertificateReport rep;
  rep.tolerance = tol;
  rep.g = Field::Zero(nt, d);
  for (int k = 0; k < nt; ++k) {
    const Vector dt_phi = (phi.row(k + 1) - phi.row(k)).transpose() / g.time.dt;
    const Vector gam = detail::midpoint_row(phi, k);
    const Vector beta = detail::cell_gradient(gam, g.space);
    const Vector alpha_star = -0.5 * (beta.array().square() + gam.array().square() * inv_d2).matrix();
    const Vector rho = path.centered.rho.row(k).transpose();
    const Vector omega = path.centered.omega.row(k).transpose();
    const Vector zeta = path.centered.zeta.row(k).transpose();

    Eigen::MatrixXd H(n, d);
    for (int i = 0; i < d; ++i) H.col(i) = detail::midpoint_row(spec.h_values[i], k);

    std::vector<int> support;
    for (int j = 0; j < n; ++j)
      if (rho[j] > floor) support.push_back(j);

    Vector gk = Vector::Zero(d);
    if (d > 0 && !support.empty()) {
      const int m = static_cast<int>(support.size());
      Eigen::MatrixXd A(m, d);
      Vector r(m);
      for (int s = 0; s < m; ++s) {
        const int j = support[s];
        const double w = std::sqrt(rho[j]);
        A.row(s) = w * H.row(j);
        r[s] = w * (dt_phi[j] - alpha_star[j]);
      }
      gk = A.completeOrthogonalDecomposition().solve(r);
    }
    rep.g.row(k) = gk.transpose();

    const Vector excess = dt_phi - (d > 0 ? Vector(H * gk) : Vector::Zero(n)) - alpha_star;
    for (int j : support) rep.r_hj = std::max(rep.r_hj, std::abs(excess[j]));
    rep.r_membership = std::max(rep.r_membership, excess.maxCoeff() > 0.0 ? excess.maxCoeff() : 0.0);
    rep.r_momentum = std::max(rep.r_momentum, (beta.cwiseProduct(rho) - omega).cwiseAbs().maxCoeff());
    rep.r_source =
        std::max(rep.r_source, (gam.cwiseProduct(rho) - delta * delta * zeta).cwiseAbs().maxCoeff());
  }
  rep.certified = rep.r_hj <= tol && rep.r_membership <= tol && rep.r_momentum <= tol && rep.r_source <= tol;
  return rep;
}

// Residuals of
//   d_t Phi = |grad(Phi - Pbar)|^2/2 + (Phi - Pbar)^2/(2 delta^2) + sum_i gamma_i d_t H_i,
//   d_t rho - div(rho grad(Phi - Pbar)) + (Phi - Pbar) rho / delta^2 = 0,
// with Pbar = sum_i gamma_i H_i and gamma from the Gram system at each
// midpoint. Phi is given at time nodes. Evaluated at interior midpoints on
// cells above the support threshold.
inline GeodesicResiduals geodesic_residuals(const PathTriple& path, const Field& Phi, const ConstraintSpec& spec,
                                            double delta) {
  const Grids& g = path.grids;
  const int nt = g.time.n_steps, n = g.space.n_cells, d = spec.d;
  if (!(delta > 0.0)) throw InvalidArgument("delta must be > 0");
  detail::require_shape(Phi, nt + 1, n, "potential");
  detail::require_shape(path.staggered, g);
  detail::require_shape(path.centered, g);
  detail::require_constraint_shape(spec, g);

  const double inv_d2 = 1.0 / (delta * delta);
  const double floor = detail::support_floor(path.centered.rho);
  GeodesicResiduals out;
  out.gamma = Field::Zero(nt, d);
  const int k_lo = nt >= 3 ? 1 : 0, k_hi = nt >= 3 ? nt - 1 : nt;
  for (int k = 0; k < nt; ++k) {
    const Vector rho = path.centered.rho.row(k).transpose();
    const Vector P = detail::midpoint_row(Phi, k);
    std::vector<Vector> H, dH;
    Vector pbar = Vector::Zero(n), drift = Vector::Zero(n);
    if (d > 0 && rho.sum() > 0.0) {
      Vector shift(d);
      for (int i = 0; i < d; ++i) {
        H.push_back(detail::midpoint_row(spec.h_values[i], k));
        dH.push_back((spec.h_values[i].row(k + 1) - spec.h_values[i].row(k)).transpose() / g.time.dt);
        const double dF = (spec.f_values(k + 1, i) - spec.f_values(k, i)) / g.time.dt;
        shift[i] = dF - dH[i].dot(rho) * g.space.cell_width;
      }
      const Vector gam = gram_system(DiscreteMeasure(g.space, rho.cwiseMax(0.0)), P, H, delta, shift);
      out.gamma.row(k) = gam.transpose();
      for (int i = 0; i < d; ++i) {
        pbar += gam[i] * H[i];
        drift += gam[i] * dH[i];
      }
    }
    if (k < k_lo || k >= k_hi) continue;

    const Vector psi = P - pbar;
    const Vector grad_psi = detail::cell_gradient(psi, g.space);
    const Vector dt_P = (Phi.row(k + 1) - Phi.row(k)).transpose() / g.time.dt;
    const Vector hj = dt_P - 0.5 * grad_psi.cwiseAbs2() - 0.5 * inv_d2 * psi.cwiseAbs2() - drift;

    const Vector face_rho = cells_to_faces_adjoint(rho, g.space);
    const Vector flux = face_rho.cwiseProduct(gradient(psi, g.space));
    const Vector dt_rho = (path.staggered.rho.row(k + 1) - path.staggered.rho.row(k)).transpose() / g.time.dt;
    const Vector ce = dt_rho - divergence(flux, g.space) + inv_d2 * psi.cwiseProduct(rho);

    for (int j = 0; j < n; ++j) {
      if (!(rho[j] > floor)) continue;
      out.r_hamilton_jacobi = std::max(out.r_hamilton_jacobi, std::abs(hj[j]));
      out.r_continuity = std::max(out.r_continuity, std::abs(ce[j]));
    }
  }
  return out;
}

}  // namespace wfr
