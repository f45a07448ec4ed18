#pragma once

// Lowest-order Raviart-Thomas / piecewise-constant discretization: degree of
// freedom spaces, weighted mass and divergence assembly, coarse-fine transfer
// operators, prolongation, and the norms used to report errors.
//
// Conventions: a flux DOF is the mean normal flux across an interior edge
// (boundary edges carry no DOF, which imposes the zero normal trace). The
// basis function of edge e restricted to an incident triangle t is
// sign(t,e) * |e| / (2|t|) * (x - p), where p is the vertex opposite e; its
// divergence is sign(t,e) * |e| / |t|. All element integrals use the 3-point
// mid-edge rule, exact for quadratics, hence exact for all products here.

#include "mslod/field.hpp"
#include "mslod/mesh.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <optional>
#include <string>
#include <vector>

namespace mslod {

using SparseMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Triplet = Eigen::Triplet<double>;

enum class SpaceKind { fine_flux, coarse_flux, fine_pressure, coarse_pressure };

inline const char* space_kind_name(SpaceKind k) {
  switch (k) {
    case SpaceKind::fine_flux: return "fine-flux";
    case SpaceKind::coarse_flux: return "coarse-flux";
    case SpaceKind::fine_pressure: return "fine-pressure";
    case SpaceKind::coarse_pressure: return "coarse-pressure";
  }
  return "?";
}

struct SpaceTag {
  SpaceKind kind = SpaceKind::fine_flux;
  const TriMesh* mesh = nullptr;
  int dim = 0;
  bool operator==(const SpaceTag&) const = default;
};

// Flux space: one DOF per interior edge.
struct RTSpace {
  const TriMesh* mesh;
  SpaceKind kind;  // fine_flux or coarse_flux, per the caller's role for it
  RTSpace(const TriMesh& m, SpaceKind k = SpaceKind::fine_flux) : mesh(&m), kind(k) {}
  int dim() const { return mesh->n_flux_dofs; }
  SpaceTag tag() const { return {kind, mesh, dim()}; }
};

// Pressure space: one DOF per triangle; represented functions are understood
// modulo constants, fixed in solves by the area-weighted zero-mean gauge.
struct PressureSpace {
  const TriMesh* mesh;
  SpaceKind kind;
  PressureSpace(const TriMesh& m, SpaceKind k = SpaceKind::fine_pressure) : mesh(&m), kind(k) {}
  int dim() const { return mesh->n_tris(); }
  SpaceTag tag() const { return {kind, mesh, dim()}; }
  Eigen::VectorXd area_weights() const {
    Eigen::VectorXd w(dim());
    for (int t = 0; t < dim(); ++t) w[t] = mesh->tri_area[t];
    return w;
  }
};

// Sparse operator with row/column space tags; tag mismatch in apply/compose
// is a programming error and throws immediately.
struct OperatorMatrix {
  SparseMat mat;
  SpaceTag row_space, col_space;

  Eigen::VectorXd apply(const Eigen::VectorXd& x) const {
    if (x.size() != col_space.dim)
      throw std::logic_error(std::string("operator applied to wrong space: expected ") +
                             space_kind_name(col_space.kind) + " of dim " +
                             std::to_string(col_space.dim) + ", got dim " +
                             std::to_string(x.size()));
    return mat * x;
  }
  Eigen::VectorXd apply_transpose(const Eigen::VectorXd& x) const {
    if (x.size() != row_space.dim)
      throw std::logic_error(std::string("operator transpose applied to wrong space: expected ") +
                             space_kind_name(row_space.kind) + " of dim " +
                             std::to_string(row_space.dim) + ", got dim " +
                             std::to_string(x.size()));
    return mat.transpose() * x;
  }
};

inline OperatorMatrix compose(const OperatorMatrix& a, const OperatorMatrix& b) {
  if (!(a.col_space == b.row_space))
    throw std::logic_error(std::string("operator composition mismatch: ") +
                           space_kind_name(a.col_space.kind) + " vs " +
                           space_kind_name(b.row_space.kind));
  return {SparseMat(a.mat * b.mat), a.row_space, b.col_space};
}

namespace detail {

// Element integrals ∫_t Φ_i · Φ_j of the three signed edge basis functions,
// by the mid-edge quadrature rule (exact here).
inline Eigen::Matrix3d element_flux_products(const TriMesh& m, int t) {
  Vec2 p[3], mid[3];
  for (int l = 0; l < 3; ++l) p[l] = m.vertex[m.tri[t][l]];
  for (int l = 0; l < 3; ++l) mid[l] = 0.5 * (p[(l + 1) % 3] + p[(l + 2) % 3]);
  const double area = m.tri_area[t];
  double scale[3];
  for (int l = 0; l < 3; ++l)
    scale[l] = m.tri_sign[t][l] * m.edge_len[m.tri_edge[t][l]] / (2.0 * area);
  Eigen::Matrix3d out;
  for (int i = 0; i < 3; ++i)
    for (int j = i; j < 3; ++j) {
      double s = 0.0;
      for (int q = 0; q < 3; ++q) s += dot(mid[q] - p[i], mid[q] - p[j]);
      out(i, j) = out(j, i) = scale[i] * scale[j] * (area / 3.0) * s;
    }
  return out;
}

}  // namespace detail

// Weighted mass matrix M[e,e'] = Σ_t A(t)^{-1} ∫_t Φ_e · Φ_{e'}. Optionally
// restricted to a subset of triangles (for subdomain energy norms). Entries
// for symmetric index pairs are written from one computed value, so
// M == M^T holds exactly.
inline OperatorMatrix assemble_weighted_mass(const RTSpace& space, const CellGridField& field,
                                             const std::vector<int>* tri_subset = nullptr) {
  const TriMesh& m = *space.mesh;
  std::vector<Triplet> trips;
  const int nt = tri_subset ? static_cast<int>(tri_subset->size()) : m.n_tris();
  trips.reserve(static_cast<size_t>(nt) * 9);
  for (int idx = 0; idx < nt; ++idx) {
    const int t = tri_subset ? (*tri_subset)[idx] : idx;
    const double w = 1.0 / eval_on_triangle(field, m, t);
    Eigen::Matrix3d loc = detail::element_flux_products(m, t);
    int dof[3];
    for (int l = 0; l < 3; ++l) dof[l] = m.edge_dof[m.tri_edge[t][l]];
    for (int i = 0; i < 3; ++i) {
      if (dof[i] < 0) continue;
      trips.emplace_back(dof[i], dof[i], w * loc(i, i));
      for (int j = i + 1; j < 3; ++j) {
        if (dof[j] < 0) continue;
        const double v = w * loc(i, j);
        trips.emplace_back(dof[i], dof[j], v);
        trips.emplace_back(dof[j], dof[i], v);
      }
    }
  }
  SparseMat M(space.dim(), space.dim());
  M.setFromTriplets(trips.begin(), trips.end());
  return {std::move(M), space.tag(), space.tag()};
}

// Divergence form B[t,e] = ∫_t ∇·Φ_e = sign(t,e) |e|.
inline OperatorMatrix assemble_div(const RTSpace& flux, const PressureSpace& pressure) {
  if (flux.mesh != pressure.mesh)
    throw std::logic_error("assemble_div: flux and pressure spaces use different meshes");
  const TriMesh& m = *flux.mesh;
  std::vector<Triplet> trips;
  trips.reserve(static_cast<size_t>(m.n_tris()) * 3);
  for (int t = 0; t < m.n_tris(); ++t)
    for (int l = 0; l < 3; ++l) {
      const int e = m.tri_edge[t][l];
      const int dof = m.edge_dof[e];
      if (dof >= 0) trips.emplace_back(t, dof, m.tri_sign[t][l] * m.edge_len[e]);
    }
  SparseMat B(pressure.dim(), flux.dim());
  B.setFromTriplets(trips.begin(), trips.end());
  return {std::move(B), pressure.tag(), flux.tag()};
}

// Coarse-edge interpolation: row E sums the fine DOFs lying on E, weighted
// by |e|/|E| and signed by the relative normal orientation, reproducing the
// coarse mean normal flux.
inline OperatorMatrix interpolation_PiH(const MeshHierarchy& hier) {
  const TriMesh& C = hier.coarse;
  const TriMesh& F = hier.fine;
  std::vector<Triplet> trips;
  for (int ce = 0; ce < C.n_edges(); ++ce) {
    const int row = C.edge_dof[ce];
    if (row < 0) continue;
    for (auto [fe, sgn] : hier.coarse_edge_fine[ce]) {
      const int col = F.edge_dof[fe];
      if (col < 0)
        throw std::logic_error("interpolation_PiH: fine edge on an interior coarse edge lacks a DOF");
      trips.emplace_back(row, col, sgn * F.edge_len[fe] / C.edge_len[ce]);
    }
  }
  SparseMat P(C.n_flux_dofs, F.n_flux_dofs);
  P.setFromTriplets(trips.begin(), trips.end());
  return {std::move(P), {SpaceKind::coarse_flux, &C, C.n_flux_dofs},
          {SpaceKind::fine_flux, &F, F.n_flux_dofs}};
}

// L2 projection of fine piecewise constants onto coarse ones: area-weighted
// child averages.
inline OperatorMatrix projection_PH(const MeshHierarchy& hier) {
  const TriMesh& C = hier.coarse;
  const TriMesh& F = hier.fine;
  std::vector<Triplet> trips;
  trips.reserve(F.n_tris());
  for (int t = 0; t < F.n_tris(); ++t) {
    const int T = hier.fine_tri_parent[t];
    trips.emplace_back(T, t, F.tri_area[t] / C.tri_area[T]);
  }
  SparseMat P(C.n_tris(), F.n_tris());
  P.setFromTriplets(trips.begin(), trips.end());
  return {std::move(P), {SpaceKind::coarse_pressure, &C, C.n_tris()},
          {SpaceKind::fine_pressure, &F, F.n_tris()}};
}

// Injection of coarse piecewise constants into the fine pressure space.
inline OperatorMatrix injection_pressure(const MeshHierarchy& hier) {
  const TriMesh& C = hier.coarse;
  const TriMesh& F = hier.fine;
  std::vector<Triplet> trips;
  trips.reserve(F.n_tris());
  for (int t = 0; t < F.n_tris(); ++t) trips.emplace_back(t, hier.fine_tri_parent[t], 1.0);
  SparseMat P(F.n_tris(), C.n_tris());
  P.setFromTriplets(trips.begin(), trips.end());
  return {std::move(P), {SpaceKind::fine_pressure, &F, F.n_tris()},
          {SpaceKind::coarse_pressure, &C, C.n_tris()}};
}

// Prolongation of coarse RT functions into the fine space. A coarse function
// is affine per coarse triangle, so each fine DOF is the exact midpoint
// evaluation v_H(mid(e)) · n_e:
//  - a fine edge on coarse edge E sees the constant normal trace of Φ_E;
//  - a fine edge interior to coarse triangle T sees Φ_E's affine formula.
inline OperatorMatrix prolongation(const MeshHierarchy& hier) {
  const TriMesh& C = hier.coarse;
  const TriMesh& F = hier.fine;
  std::vector<Triplet> trips;
  for (int fe = 0; fe < F.n_edges(); ++fe) {
    const int row = F.edge_dof[fe];
    if (row < 0) continue;
    const FineEdgeParent& par = hier.fine_edge_parent[fe];
    if (par.coarse_edge >= 0) {
      const int col = C.edge_dof[par.coarse_edge];
      if (col >= 0) trips.emplace_back(row, col, static_cast<double>(par.rel_sign));
      continue;
    }
    const int T = par.host_tri;
    const Vec2 mid = F.edge_midpoint(fe);
    const Vec2 ne = F.edge_normal(fe);
    for (int l = 0; l < 3; ++l) {
      const int ce = C.tri_edge[T][l];
      const int col = C.edge_dof[ce];
      if (col < 0) continue;
      const Vec2 p = C.vertex[C.tri[T][l]];
      const double val =
          C.tri_sign[T][l] * C.edge_len[ce] / (2.0 * C.tri_area[T]) * dot(mid - p, ne);
      if (val != 0.0) trips.emplace_back(row, col, val);
    }
  }
  SparseMat P(F.n_flux_dofs, C.n_flux_dofs);
  P.setFromTriplets(trips.begin(), trips.end());
  return {std::move(P), {SpaceKind::fine_flux, &F, F.n_flux_dofs},
          {SpaceKind::coarse_flux, &C, C.n_flux_dofs}};
}

inline Eigen::VectorXd prolong(const MeshHierarchy& hier, const Eigen::VectorXd& coarse_flux) {
  return prolongation(hier).apply(coarse_flux);
}

// ---------------------------------------------------------------------------
// Norms.

// sqrt(v' M v) for an SPD form; a quadratic form below -1e-12 indicates an
// assembly defect and is reported instead of being silently clamped.
inline double energy_norm(const OperatorMatrix& M, const Eigen::VectorXd& v) {
  const double q = v.dot(M.apply(v));
  if (q < -1e-12)
    throw std::runtime_error("energy_norm: quadratic form is negative (" + std::to_string(q) +
                             "); mass assembly is inconsistent");
  return std::sqrt(std::max(q, 0.0));
}

// Flux L2 norm through an unweighted mass matrix (assembled with A = 1).
inline double l2_norm_flux(const OperatorMatrix& unit_mass, const Eigen::VectorXd& v) {
  return energy_norm(unit_mass, v);
}

inline double l2_norm_pressure(const PressureSpace& space, const Eigen::VectorXd& q) {
  if (q.size() != space.dim()) throw std::logic_error("l2_norm_pressure: dimension mismatch");
  double s = 0.0;
  for (int t = 0; t < space.dim(); ++t) s += space.mesh->tri_area[t] * q[t] * q[t];
  return std::sqrt(s);
}

// Piecewise-constant divergence values of a flux vector: (B v)_t / |t|.
inline Eigen::VectorXd div_values(const OperatorMatrix& B, const Eigen::VectorXd& v) {
  Eigen::VectorXd d = B.apply(v);
  const TriMesh& m = *B.row_space.mesh;
  for (int t = 0; t < d.size(); ++t) d[t] /= m.tri_area[t];
  return d;
}

// L2 distance between div v and a target piecewise-constant function.
inline double div_l2_error(const OperatorMatrix& B, const Eigen::VectorXd& v,
                           const Eigen::VectorXd& target) {
  Eigen::VectorXd d = div_values(B, v);
  if (target.size() != d.size()) throw std::logic_error("div_l2_error: dimension mismatch");
  const TriMesh& m = *B.row_space.mesh;
  double s = 0.0;
  for (int t = 0; t < d.size(); ++t) {
    const double r = d[t] - target[t];
    s += m.tri_area[t] * r * r;
  }
  return std::sqrt(s);
}

enum class LogBase { natural, two };

// The interpolation-stability factor (1 + log(H/h))^(1/2).
inline double lambda(double H_over_h, LogBase base) {
  if (!(H_over_h >= 1.0))
    throw std::domain_error("lambda: mesh-size ratio must be >= 1");
  const double lg = base == LogBase::two ? std::log2(H_over_h) : std::log(H_over_h);
  return std::sqrt(1.0 + lg);
}

// Coordinate text dump "row col value" for debugging.
inline std::string dump_matrix_coo(const OperatorMatrix& A) {
  std::string out;
  for (int r = 0; r < A.mat.outerSize(); ++r)
    for (SparseMat::InnerIterator it(A.mat, r); it; ++it) {
      char buf[80];
      std::snprintf(buf, sizeof buf, "%d %d %.17g\n", static_cast<int>(it.row()),
                    static_cast<int>(it.col()), it.value());
      out += buf;
    }
  return out;
}

}  // namespace mslod
