// Divergence-free reduction of the mixed system.
//
// The flux space splits into a particular solution carrying the prescribed
// divergence plus a divergence-free complement.  The complement is spanned by
// discrete stream functions: one basis vector per free vertex v, with flux
// -(phi_hi - phi_lo)/|e| through each incident interior edge.  Every such
// field is exactly divergence-free (the signed +-1 sums around a triangle
// cancel in floating point), so the constrained energy minimisation becomes a
// symmetric positive definite system in the vertex potentials, which is far
// cheaper to factor than the full saddle-point matrix.
//
// The particular solution is built on a spanning tree of the triangle
// adjacency graph: walking the tree leaf-to-root assigns each tree edge the
// flux that balances the divergence budget of its subtree.  The same tree,
// walked root-to-leaf, recovers the pressure from the flux residual, since
// the residual across an interior edge equals the signed pressure jump.
#pragma once

#include <chrono>
#include <cmath>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

#include "mslod/operators.hpp"
#include "mslod/saddle.hpp"  // SolveReport

#ifdef MSLOD_HAVE_SUITESPARSE
#include <Eigen/CholmodSupport>
#else
#include <Eigen/SparseCholesky>
#endif

namespace mslod {

// --------------------------------------------------------------------------
// Stream-function basis.

// All vertices interior to the domain: spans the full divergence-free
// subspace of the flux space (dimension = #flux dofs - (#triangles - 1)).
inline std::vector<char> interior_vertex_flags(const TriMesh& mesh) {
  std::vector<char> free_vertex(mesh.n_vertices());
  for (int v = 0; v < mesh.n_vertices(); ++v) free_vertex[v] = !mesh.vertex_boundary[v];
  return free_vertex;
}

// Sparse map from vertex potentials to edge fluxes, restricted to the given
// free vertices.  Column order follows ascending vertex index; the returned
// vertex list gives the column -> vertex correspondence.
struct StreamBasis {
  SparseMat C;                 // n_flux_dofs x n_free
  std::vector<int> vertices;   // column index -> vertex index
};

inline StreamBasis stream_basis(const TriMesh& mesh, const std::vector<char>& free_vertex) {
  StreamBasis basis;
  std::vector<int> column(mesh.n_vertices(), -1);
  for (int v = 0; v < mesh.n_vertices(); ++v)
    if (free_vertex[v]) {
      column[v] = static_cast<int>(basis.vertices.size());
      basis.vertices.push_back(v);
    }
  std::vector<Triplet> trips;
  for (int d = 0; d < mesh.n_flux_dofs; ++d) {
    int e = mesh.dof_edge[d];
    int lo = mesh.edge[e][0], hi = mesh.edge[e][1];
    if (column[hi] >= 0) trips.emplace_back(d, column[hi], -1.0 / mesh.edge_len[e]);
    if (column[lo] >= 0) trips.emplace_back(d, column[lo], 1.0 / mesh.edge_len[e]);
  }
  basis.C.resize(mesh.n_flux_dofs, static_cast<int>(basis.vertices.size()));
  basis.C.setFromTriplets(trips.begin(), trips.end());
  return basis;
}

// --------------------------------------------------------------------------
// Spanning tree of the triangle adjacency graph.

struct DualTree {
  std::vector<int> order;        // triangles in breadth-first visit order
  std::vector<int> parent_edge;  // per triangle: mesh edge to its parent, -1 at roots
  std::vector<int> parent_tri;   // per triangle: parent triangle, -1 at roots
};

// Breadth-first spanning forest over the listed triangles, connected through
// interior edges whose both sides belong to the list.
inline DualTree build_dual_tree(const TriMesh& mesh, const std::vector<int>& tris) {
  DualTree tree;
  std::vector<char> in_set(mesh.n_tris(), 0);
  for (int t : tris) in_set[t] = 1;
  std::vector<char> visited(mesh.n_tris(), 0);
  tree.parent_edge.assign(mesh.n_tris(), -1);
  tree.parent_tri.assign(mesh.n_tris(), -1);
  tree.order.reserve(tris.size());
  for (int root : tris) {
    if (visited[root]) continue;
    visited[root] = 1;
    std::queue<int> queue;
    queue.push(root);
    while (!queue.empty()) {
      int t = queue.front();
      queue.pop();
      tree.order.push_back(t);
      for (int l = 0; l < 3; ++l) {
        int e = mesh.tri_edge[t][l];
        if (mesh.edge_dof[e] < 0) continue;  // boundary edge
        int other = mesh.edge_tri[e][0] == t ? mesh.edge_tri[e][1] : mesh.edge_tri[e][0];
        if (other < 0 || !in_set[other] || visited[other]) continue;
        visited[other] = 1;
        tree.parent_edge[other] = e;
        tree.parent_tri[other] = t;
        queue.push(other);
      }
    }
  }
  return tree;
}

// Flux supported on the tree edges with (B v)_t = rhs[t] on every listed
// triangle.  rhs must sum to zero over each connected component (the root
// budget is checked against the stated tolerance and reported otherwise).
inline Eigen::VectorXd tree_particular_flux(const TriMesh& mesh, const DualTree& tree,
                                            const Eigen::VectorXd& rhs,
                                            double consistency_tol = 1e-9) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(mesh.n_flux_dofs);
  std::vector<double> budget(mesh.n_tris(), 0.0);
  for (int t : tree.order) budget[t] = rhs[t];
  double scale = rhs.cwiseAbs().maxCoeff();
  for (auto it = tree.order.rbegin(); it != tree.order.rend(); ++it) {
    int t = *it;
    int e = tree.parent_edge[t];
    if (e < 0) {
      if (std::abs(budget[t]) > consistency_tol * (1.0 + scale))
        throw std::runtime_error(
            "divergence data is inconsistent: component around triangle " + std::to_string(t) +
            " has net budget " + std::to_string(budget[t]));
      continue;
    }
    double sign = mesh.sign_on_edge(t, e);
    double flux = budget[t] / (sign * mesh.edge_len[e]);
    v[mesh.edge_dof[e]] = flux;
    int p = tree.parent_tri[t];
    budget[p] -= mesh.sign_on_edge(p, e) * mesh.edge_len[e] * flux;
  }
  return v;
}

// Pressure with B^T p = residual on interior edges, fixed by walking the tree
// root-to-leaf and shifted to area-weighted zero mean.  The input residual is
// indexed by flux dof.  Off-tree edges are where the equation is not enforced
// by construction; the caller checks the full residual afterwards.
inline Eigen::VectorXd tree_recover_pressure(const TriMesh& mesh, const DualTree& tree,
                                             const Eigen::VectorXd& residual) {
  Eigen::VectorXd p = Eigen::VectorXd::Zero(mesh.n_tris());
  for (int t : tree.order) {
    int e = tree.parent_edge[t];
    if (e < 0) {
      p[t] = 0.0;
      continue;
    }
    int parent = tree.parent_tri[t];
    // residual_e = sign(parent,e)|e| p_parent + sign(t,e)|e| p_t
    p[t] = (residual[mesh.edge_dof[e]] -
            mesh.sign_on_edge(parent, e) * mesh.edge_len[e] * p[parent]) /
           (mesh.sign_on_edge(t, e) * mesh.edge_len[e]);
  }
  double mean = 0.0, area = 0.0;
  for (int t : tree.order) {
    mean += mesh.tri_area[t] * p[t];
    area += mesh.tri_area[t];
  }
  mean /= area;
  for (int t : tree.order) p[t] -= mean;
  return p;
}

// --------------------------------------------------------------------------
// Reduced solver.

// Factorisation of C^T M C for a fixed stream basis, reused across right-hand
// sides.  Solves  min 1/2 v^T M v - g^T v  over  v = v0 + C psi,  returning
// the full flux v.  Holds a reference to M: the matrix must outlive the
// solver (patch solvers all share one global mass matrix).
class DivFreeSolver {
 public:
#ifdef MSLOD_HAVE_SUITESPARSE
  using Factorization = Eigen::CholmodSupernodalLLT<Eigen::SparseMatrix<double>>;
#else
  using Factorization = Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>;
#endif

  DivFreeSolver(const SparseMat& M, StreamBasis basis) : basis_(std::move(basis)), M_(&M) {
    Eigen::SparseMatrix<double> C = basis_.C;  // column-major copy for products
    Eigen::SparseMatrix<double> MC = (*M_) * C;
    Eigen::SparseMatrix<double> L = Eigen::SparseMatrix<double>(C.transpose() * MC).pruned();
    factor_.compute(L);
    if (factor_.info() != Eigen::Success)
      throw std::runtime_error("stream-function system is not positive definite (" +
                               std::to_string(L.rows()) + " potentials)");
  }

  int reduced_dim() const { return static_cast<int>(basis_.vertices.size()); }
  const StreamBasis& basis() const { return basis_; }

  // Minimiser of the quadratic energy over v0 + span(C) for linear term g,
  // i.e. the v in that affine space with C^T (g - M v) = 0.  Iterative
  // refinement reuses the factorization until the reduced residual clears
  // the tolerance or stops improving.
  Eigen::VectorXd solve(const Eigen::VectorXd& v0, const Eigen::VectorXd& g, double tol = 1e-12,
                        SolveReport* report = nullptr) const {
    const auto t0 = std::chrono::steady_clock::now();
    Eigen::VectorXd rhs = basis_.C.transpose() * Eigen::VectorXd(g - (*M_) * v0);
    const double scale = 1.0 + rhs.norm();
    Eigen::VectorXd psi = factor_.solve(rhs);
    Eigen::VectorXd v = v0 + basis_.C * psi;
    double rel = 0.0;
    int steps = 0;
    for (; steps < 6; ++steps) {
      Eigen::VectorXd resid = basis_.C.transpose() * Eigen::VectorXd(g - (*M_) * v);
      rel = resid.norm() / scale;
      if (rel <= 0.1 * tol) break;
      psi += factor_.solve(resid);
      Eigen::VectorXd next = v0 + basis_.C * psi;
      if ((next - v).norm() == 0.0) break;  // stagnated at attainable precision
      v = std::move(next);
    }
    if (report) {
      report->rel_residual = rel;
      report->dim = reduced_dim();
      report->refinement_steps = steps;
      report->backend = backend_name();
      report->wall_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    return v;
  }

  static const char* backend_name() {
#ifdef MSLOD_HAVE_SUITESPARSE
    return "stream-cholmod";
#else
    return "stream-ldlt";
#endif
  }

 private:
  StreamBasis basis_;
  const SparseMat* M_;
  Factorization factor_;
};

}  // namespace mslod
