// Multiscale flux spaces built from localized correctors.
//
// For each coarse triangle T and layer count k, the element corrector maps a
// coarse flux function v to the energy projection of its T-restricted load
// onto the detail space of the patch U_k(T): divergence-free fine fluxes with
// vanishing coarse interpolation, supported inside the patch.  Subtracting
// the summed correctors from the prolonged coarse basis yields a coarse-
// dimensional space with fine-scale shape information; the coarse saddle
// solve in that space keeps the divergence structure intact because the
// correctors are exactly divergence-free.
//
// The detail spaces are parametrized by stream functions on the patch's free
// vertices (interior to the patch, off the domain boundary and off the coarse
// vertex lattice), so every corrector solve is a sparse SPD system in vertex
// potentials rather than a saddle-point system; see divfree.hpp.  Source
// corrections for non-constant loads carry prescribed divergence, supplied by
// a spanning-tree particular flux confined to the source triangle.
#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>

#include "mslod/divfree.hpp"
#include "mslod/field.hpp"
#include "mslod/saddle.hpp"

namespace mslod {

using ColSparseMat = Eigen::SparseMatrix<double>;

// ---------------------------------------------------------------------------
// Corrector basis.

struct CorrectorBasis {
  int k = 0;
  // Column E holds the fine flux vector of the corrector for the coarse basis
  // function of coarse flux DOF E.  Entries outside the union of the
  // contributing patches are structurally zero.
  ColSparseMat G;
  std::vector<std::vector<int>> support;  // per coarse DOF: union of patch coarse triangles
  std::vector<SolveReport> reports;       // per coarse DOF: merged patch-solve reports

  int dim() const { return static_cast<int>(G.cols()); }
};

namespace detail {

inline std::vector<char> patch_vertex_flags(const TriMesh& fine, const Patch& p) {
  std::vector<char> flags(fine.n_vertices(), 0);
  for (int v : p.free_vertices) flags[v] = 1;
  return flags;
}

}  // namespace detail

// Reusable factorization of one patch's detail-space system.  The reduced
// matrix uses the global mass matrix: free vertices touch only edges whose
// incident triangles all lie inside the patch, so no outside contribution
// can enter the product.
class PatchSolver {
 public:
  PatchSolver(const MeshHierarchy& hier, const OperatorMatrix& M, Patch p)
      : patch_(std::move(p)),
        solver_(M.mat, stream_basis(hier.fine, detail::patch_vertex_flags(hier.fine, patch_))) {}

  const Patch& patch() const { return patch_; }

  // Energy minimiser over v0 + detail space for linear term g.
  Eigen::VectorXd minimize(const Eigen::VectorXd& v0, const Eigen::VectorXd& g, double tol,
                           SolveReport* report = nullptr) const {
    return solver_.solve(v0, g, tol, report);
  }

 private:
  Patch patch_;
  DivFreeSolver solver_;
};

// ---------------------------------------------------------------------------
// Element correctors.

// Corrector of one coarse triangle: the detail-space field w on U_k(T) with
// (A^{-1} w, z) = (A^{-1} v, z)_T for all detail fields z, where v is the
// prolonged coarse source.  The coefficient field is needed to assemble the
// T-restricted load; the global matrix cannot be split per element.
inline Eigen::VectorXd element_corrector(const MeshHierarchy& hier, const OperatorMatrix& M,
                                         const CellGridField& A, int T, int k,
                                         const Eigen::VectorXd& coarse_source,
                                         double tol = 1e-11, SolveReport* report = nullptr) {
  if (coarse_source.size() != hier.coarse.n_flux_dofs)
    throw std::logic_error("element_corrector: source is not a coarse flux vector");
  try {
    PatchSolver solver(hier, M, patch(hier, T, k));
    RTSpace fine_flux(hier.fine);
    OperatorMatrix M_T = assemble_weighted_mass(fine_flux, A, &hier.coarse_tri_children[T]);
    Eigen::VectorXd g = M_T.apply(prolong(hier, coarse_source));
    return solver.minimize(Eigen::VectorXd::Zero(hier.fine.n_flux_dofs), g, tol, report);
  } catch (const std::exception& err) {
    throw std::runtime_error("element corrector (T=" + std::to_string(T) +
                             ", k=" + std::to_string(k) + "): " + err.what());
  }
}

// Correctors for every interior coarse edge: per coarse triangle T, one patch
// factorization serves the up-to-three incident edge basis functions, and the
// per-edge results of the one or two triangles owning the edge are summed.
// Saturated patches all share one factorization.  Any failure aborts with the
// full list of failed (T, edge) pairs.
inline CorrectorBasis corrector_basis(const MeshHierarchy& hier, const OperatorMatrix& M,
                                      const CellGridField& A, int k, double tol = 1e-11) {
  const TriMesh& C = hier.coarse;
  const TriMesh& F = hier.fine;
  RTSpace fine_flux(F);
  OperatorMatrix P = prolongation(hier);
  ColSparseMat P_col(P.mat);

  CorrectorBasis basis;
  basis.k = k;
  basis.support.resize(C.n_flux_dofs);
  basis.reports.resize(C.n_flux_dofs);

  std::vector<Triplet> trips;
  std::unique_ptr<PatchSolver> shared;  // saturated patches are all the same space
  std::string failures;

  for (int T = 0; T < C.n_tris(); ++T) {
    Patch p = patch(hier, T, k);
    std::unique_ptr<PatchSolver> local;
    PatchSolver* solver = nullptr;
    try {
      if (p.saturated) {
        if (!shared) shared = std::make_unique<PatchSolver>(hier, M, p);
        solver = shared.get();
      } else {
        local = std::make_unique<PatchSolver>(hier, M, std::move(p));
        solver = local.get();
      }
    } catch (const std::exception& err) {
      failures += " (T=" + std::to_string(T) + ": " + err.what() + ")";
      continue;
    }
    const Patch& used = solver->patch();

    OperatorMatrix M_T = assemble_weighted_mass(fine_flux, A, &hier.coarse_tri_children[T]);
    for (int l = 0; l < 3; ++l) {
      const int E = C.edge_dof[C.tri_edge[T][l]];
      if (E < 0) continue;  // boundary coarse edge: no basis function
      Eigen::VectorXd g = M_T.mat * P_col.col(E);
      SolveReport rep;
      Eigen::VectorXd w;
      try {
        w = solver->minimize(Eigen::VectorXd::Zero(F.n_flux_dofs), g, tol, &rep);
      } catch (const std::exception& err) {
        failures += " (T=" + std::to_string(T) + ", E=" + std::to_string(E) + ": " + err.what() + ")";
        continue;
      }
      for (int d : used.fine_dofs)
        if (w[d] != 0.0) trips.emplace_back(d, E, w[d]);
      std::vector<int>& sup = basis.support[E];
      sup.insert(sup.end(), used.tris.begin(), used.tris.end());
      SolveReport& merged = basis.reports[E];
      merged.rel_residual = std::max(merged.rel_residual, rep.rel_residual);
      merged.dim = std::max(merged.dim, rep.dim);
      merged.refinement_steps += rep.refinement_steps;
      merged.wall_seconds += rep.wall_seconds;
      merged.backend = rep.backend;
    }
  }
  if (!failures.empty())
    throw std::runtime_error("corrector basis k=" + std::to_string(k) + " failed:" + failures);

  for (auto& sup : basis.support) {
    std::sort(sup.begin(), sup.end());
    sup.erase(std::unique(sup.begin(), sup.end()), sup.end());
  }
  basis.G.resize(F.n_flux_dofs, C.n_flux_dofs);
  basis.G.setFromTriplets(trips.begin(), trips.end());
  return basis;
}

// ---------------------------------------------------------------------------
// Reference solve.

struct ReferenceSolution {
  Eigen::VectorXd u;  // fine flux
  Eigen::VectorXd p;  // fine pressure, area-weighted zero mean
  SolveReport report;
};

// Full fine-mesh mixed solve: divergence prescribed by the source integrals,
// energy minimised over the divergence-free complement, pressure recovered
// from the flux equation.  Equivalent to the saddle-point formulation with a
// zero-mean pressure gauge (see the dense-oracle test), but scales to fine
// meshes where a direct indefinite factorization does not.
inline ReferenceSolution solve_reference(const MeshHierarchy& hier, const OperatorMatrix& M,
                                         const OperatorMatrix& B, const SourceField& f,
                                         double tol = 1e-10) {
  const auto t0 = std::chrono::steady_clock::now();
  const TriMesh& mesh = hier.fine;
  std::vector<double> fint = source_integrals(f, mesh);
  Eigen::VectorXd r(mesh.n_tris());
  for (int t = 0; t < mesh.n_tris(); ++t) r[t] = -fint[t];

  std::vector<int> all(mesh.n_tris());
  for (int t = 0; t < mesh.n_tris(); ++t) all[t] = t;
  DualTree tree = build_dual_tree(mesh, all);
  Eigen::VectorXd vp = tree_particular_flux(mesh, tree, r);

  ReferenceSolution out;
  DivFreeSolver solver(M.mat, stream_basis(mesh, interior_vertex_flags(mesh)));
  out.u = solver.solve(vp, Eigen::VectorXd::Zero(mesh.n_flux_dofs), tol, &out.report);
  out.p = tree_recover_pressure(mesh, tree, Eigen::VectorXd(-(M.mat * out.u)));

  // Residuals of the two mixed equations; the divergence one is exact by
  // construction, the flux one limited by the complement solve.
  Eigen::VectorXd flux_eq = M.mat * out.u + B.mat.transpose() * out.p;
  const double flux_rel = flux_eq.norm() / (1.0 + (M.mat * out.u).norm());
  const double div_rel = (B.mat * out.u - r).norm() / (1.0 + r.norm());
  out.report.rel_residual = std::max(flux_rel, div_rel);
  if (out.report.rel_residual > tol)
    throw std::runtime_error("reference solve: residual " +
                             std::to_string(out.report.rel_residual) +
                             " exceeds tolerance " + std::to_string(tol));
  out.report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

// ---------------------------------------------------------------------------
// Source correctors.

struct SourceCorrector {
  int T = -1;    // source coarse triangle
  int ell = 0;   // patch layers
  Eigen::VectorXd flux;  // fine flux, supported in U_ell(T)
  SolveReport report;
  // The pressure-like multiplier of the underlying mixed problem is never
  // formed: the flux correction alone enters the corrected solution.
};

// Fine-scale flux correction for the source restricted to coarse triangle T.
// Its divergence is pinned by the constraint structure: the zero-total-flux
// interpolation rows force   div F = -(f - area-mean of f over T)   on T and
// zero elsewhere, for every patch size.  A spanning tree inside T supplies
// that divergence without touching the coarse skeleton; the patch detail
// space then minimises the energy.  For ell = 0 the patch is T itself and the
// interpolation constraint is vacuous, which is exactly the ad-hoc variant.
inline SourceCorrector source_corrector(const MeshHierarchy& hier, const OperatorMatrix& M,
                                        const OperatorMatrix& B, int T, int ell,
                                        const SourceField& f, double tol = 1e-11) {
  if (T < 0 || T >= hier.coarse.n_tris())
    throw std::invalid_argument("source corrector: coarse triangle out of range");
  const TriMesh& mesh = hier.fine;
  SourceCorrector out;
  out.T = T;
  out.ell = ell;
  try {
    const std::vector<int>& children = hier.coarse_tri_children[T];
    Eigen::VectorXd r = Eigen::VectorXd::Zero(mesh.n_tris());
    double total = 0.0, abs_total = 0.0;
    for (int t : children) {
      const double s = integrate_source_over_triangle(f, mesh.vertex[mesh.tri[t][0]],
                                                      mesh.vertex[mesh.tri[t][1]],
                                                      mesh.vertex[mesh.tri[t][2]]);
      r[t] = -s;
      total += s;
      abs_total += std::abs(s);
    }
    if (abs_total == 0.0) {  // source vanishes on T
      out.flux = Eigen::VectorXd::Zero(mesh.n_flux_dofs);
      out.report.backend = "trivial";
      return out;
    }
    const double mean = total / hier.coarse.tri_area[T];
    for (int t : children) r[t] += mesh.tri_area[t] * mean;

    DualTree tree = build_dual_tree(mesh, children);
    Eigen::VectorXd vp = tree_particular_flux(mesh, tree, r);
    PatchSolver solver(hier, M, patch(hier, T, ell));
    out.flux = solver.minimize(vp, Eigen::VectorXd::Zero(mesh.n_flux_dofs), tol, &out.report);

    const double div_err = (B.mat * out.flux - r).cwiseAbs().maxCoeff();
    if (div_err > tol * (1.0 + r.cwiseAbs().maxCoeff()))
      throw std::runtime_error("prescribed divergence violated by " + std::to_string(div_err));
  } catch (const std::exception& err) {
    throw std::runtime_error("source corrector (T=" + std::to_string(T) +
                             ", ell=" + std::to_string(ell) + "): " + err.what());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Coarse solves in the multiscale space.

struct MultiscaleSolution {
  Eigen::VectorXd u;       // fine flux of the multiscale solution
  Eigen::VectorXd p;       // coarse pressure
  Eigen::VectorXd coeffs;  // coefficients in the multiscale basis
  SolveReport report;
};

namespace detail {

// Multiscale basis as fine flux columns: prolonged coarse basis minus its
// corrector.
inline ColSparseMat multiscale_basis(const MeshHierarchy& hier, const CorrectorBasis& basis) {
  OperatorMatrix P = prolongation(hier);
  return ColSparseMat(P.mat) - basis.G;
}

inline MultiscaleSolution coarse_saddle_solve(const MeshHierarchy& hier, const OperatorMatrix& M,
                                              const ColSparseMat& Psi, const SourceField& f,
                                              const Eigen::VectorXd& flux_rhs, double tol) {
  const TriMesh& C = hier.coarse;
  ColSparseMat K = ColSparseMat((Psi.transpose() * ColSparseMat(M.mat * Psi)).pruned());
  RTSpace coarse_flux(C, SpaceKind::coarse_flux);
  PressureSpace coarse_pressure(C, SpaceKind::coarse_pressure);
  OperatorMatrix B_H = assemble_div(coarse_flux, coarse_pressure);
  std::vector<double> fint = source_integrals(f, C);
  Eigen::VectorXd r(C.n_tris());
  for (int t = 0; t < C.n_tris(); ++t) r[t] = -fint[t];
  std::vector<int> all(C.n_tris());
  for (int t = 0; t < C.n_tris(); ++t) all[t] = t;
  SaddleSystem sys = build_constrained_system(K, {divergence_block(B_H, r, {all})}, flux_rhs);
  SaddleSolution sol = solve(sys, tol);

  MultiscaleSolution out;
  out.coeffs = sol.primal;
  out.p = sol.multipliers;
  out.u = Psi * out.coeffs;
  out.report = sol.report;
  return out;
}

}  // namespace detail

// Coarse saddle solve in the multiscale space: the stiffness couples through
// the fine mass matrix, the divergence rows and load stay those of the plain
// coarse space, and the fine flux is reconstructed from the basis columns.
inline MultiscaleSolution solve_multiscale(const MeshHierarchy& hier, const OperatorMatrix& M,
                                           const CorrectorBasis& basis, const SourceField& f,
                                           double tol = 1e-10) {
  return detail::coarse_saddle_solve(hier, M, detail::multiscale_basis(hier, basis), f,
                                     Eigen::VectorXd::Zero(hier.coarse.n_flux_dofs), tol);
}

struct CorrectedSolution {
  Eigen::VectorXd u;       // corrected total: multiscale flux + source correction
  Eigen::VectorXd u_ms;    // multiscale part alone
  Eigen::VectorXd p;       // coarse pressure
  Eigen::VectorXd coeffs;  // coefficients in the multiscale basis
  SolveReport report;
};

// Same coarse solve with the source-correction fluxes folded into the load:
// the flux equation gains -(A^{-1} F, basis), the divergence rows are
// untouched because each correction has zero mean divergence on every coarse
// triangle.  The returned flux is the corrected total.
inline CorrectedSolution solve_multiscale_corrected(const MeshHierarchy& hier,
                                                    const OperatorMatrix& M,
                                                    const CorrectorBasis& basis,
                                                    const SourceField& f,
                                                    const std::vector<SourceCorrector>& corrections,
                                                    double tol = 1e-10) {
  ColSparseMat Psi = detail::multiscale_basis(hier, basis);
  Eigen::VectorXd F = Eigen::VectorXd::Zero(hier.fine.n_flux_dofs);
  for (const SourceCorrector& c : corrections) F += c.flux;
  Eigen::VectorXd flux_rhs = -(Psi.transpose() * Eigen::VectorXd(M.mat * F));
  MultiscaleSolution ms = detail::coarse_saddle_solve(hier, M, Psi, f, flux_rhs, tol);

  CorrectedSolution out;
  out.u_ms = std::move(ms.u);
  out.u = out.u_ms + F;
  out.p = std::move(ms.p);
  out.coeffs = std::move(ms.coeffs);
  out.report = ms.report;
  return out;
}

// ---------------------------------------------------------------------------
// Standard coarse solve (comparison curve).

struct StandardCoarseSolution {
  Eigen::VectorXd u;       // prolonged to the fine space
  Eigen::VectorXd p;       // coarse pressure
  Eigen::VectorXd coeffs;  // coarse flux coefficients
  SolveReport report;
};

// Plain coarse-space Galerkin solve of the same problem.  The coarse mass
// matrix is assembled through the fine one (the coarse space is a subspace of
// the fine space), so the coefficient is resolved at fine quadrature rather
// than coarse-cell sampling.
inline StandardCoarseSolution solve_standard_coarse(const MeshHierarchy& hier,
                                                    const OperatorMatrix& M, const SourceField& f,
                                                    double tol = 1e-10) {
  OperatorMatrix P = prolongation(hier);
  ColSparseMat P_col(P.mat);
  MultiscaleSolution sol = detail::coarse_saddle_solve(
      hier, M, P_col, f, Eigen::VectorXd::Zero(hier.coarse.n_flux_dofs), tol);
  StandardCoarseSolution out;
  out.u = std::move(sol.u);
  out.p = std::move(sol.p);
  out.coeffs = std::move(sol.coeffs);
  out.report = sol.report;
  return out;
}

// ---------------------------------------------------------------------------
// Layer-count rule.

// k = C (1 + log2(H/h))^{1/2} log2(1/H), rounded half away from zero, at
// least 1, and clamped to max_layers when a positive cap is given (patches
// saturate at the coarse-mesh diameter; see saturation_layers).
inline int choose_k(double H, double h, double C_factor, int max_layers = 0) {
  if (!(h > 0.0) || !(h < H) || !(H < 1.0))
    throw std::domain_error("choose_k: need 0 < h < H < 1");
  if (!(C_factor > 0.0)) throw std::domain_error("choose_k: need C > 0");
  const double raw = C_factor * std::sqrt(1.0 + std::log2(H / h)) * std::log2(1.0 / H);
  int k = std::max(1, static_cast<int>(std::llround(raw)));
  if (max_layers > 0) k = std::min(k, max_layers);
  return k;
}

// ---------------------------------------------------------------------------
// Corrector decay measurement.

struct DecayReport {
  int seed_tri = -1;
  std::vector<double> d;   // d[k-1] = energy distance between k-layer and ideal corrector
  double theta_hat = 0.0;  // fitted per-layer decay ratio, exp(slope of log d vs k/lambda)
  double lambda_value = 0.0;
};

// Truncation errors of the localized corrector of one coarse triangle against
// the ideal (saturated-patch) corrector, with a least-squares decay-rate fit.
// Layers where the error has fallen to solver precision are excluded from the
// fit; with fewer than two usable layers theta_hat stays 0.
inline DecayReport decay_profile(const MeshHierarchy& hier, const OperatorMatrix& M,
                                 const CellGridField& A, int T, const Eigen::VectorXd& v,
                                 int k_max, double tol = 1e-11) {
  if (k_max < 1) throw std::invalid_argument("decay profile: k_max must be >= 1");
  DecayReport out;
  out.seed_tri = T;
  out.lambda_value = lambda(hier.coarse.size_label / hier.fine.size_label, LogBase::two);

  const int k_sat = saturation_layers(hier.coarse);
  Eigen::VectorXd ideal = element_corrector(hier, M, A, T, k_sat, v, tol);
  const double ideal_norm = energy_norm(M, ideal);

  for (int k = 1; k <= k_max; ++k) {
    Eigen::VectorXd w = element_corrector(hier, M, A, T, std::min(k, k_sat), v, tol);
    out.d.push_back(energy_norm(M, Eigen::VectorXd(ideal - w)));
  }

  const double floor = std::max(100.0 * tol * ideal_norm, 1e-300);
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (int k = 1; k <= k_max; ++k) {
    const double dk = out.d[k - 1];
    if (dk <= floor) continue;
    const double x = k / out.lambda_value, y = std::log(dk);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  if (n >= 2 && n * sxx - sx * sx > 0.0)
    out.theta_hat = std::exp((n * sxy - sx * sy) / (n * sxx - sx * sx));
  return out;
}

// ---------------------------------------------------------------------------
// Numerical inf-sup probe.

// Smallest nonzero generalized singular value of the divergence form over the
// given flux/pressure pair: eigenvalues of  B X^{-1} B^T z = s^2 N z  with X
// the flux-space norm matrix and N the pressure mass matrix.  Dense solve,
// desk scale only.  Degenerate pairs (no nonzero singular values) return 0.
inline double infsup_estimate(const Eigen::MatrixXd& B, const Eigen::MatrixXd& X,
                              const Eigen::MatrixXd& N) {
  if (B.cols() != X.rows() || X.rows() != X.cols() || B.rows() != N.rows() || N.rows() != N.cols())
    throw std::logic_error("infsup estimate: dimension mismatch between B, X, N");
  if (B.cols() == 0 || B.rows() == 0) return 0.0;
  Eigen::LDLT<Eigen::MatrixXd> xfac(X);
  if (xfac.info() != Eigen::Success)
    throw std::runtime_error("infsup estimate: flux norm matrix is not factorizable");
  Eigen::MatrixXd S = B * xfac.solve(B.transpose());
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> eig(S, N);
  if (eig.info() != Eigen::Success)
    throw std::runtime_error("infsup estimate: generalized eigensolve failed");
  const Eigen::VectorXd& vals = eig.eigenvalues();
  const double cutoff = 1e-10 * std::max(vals.cwiseAbs().maxCoeff(), 0.0);
  double smallest = -1.0;
  for (int i = 0; i < vals.size(); ++i)
    if (vals[i] > cutoff && (smallest < 0.0 || vals[i] < smallest)) smallest = vals[i];
  return smallest > 0.0 ? std::sqrt(smallest) : 0.0;
}

// ---------------------------------------------------------------------------
// Corrector basis serialization.

// Plain-text format: a header line, then per coarse DOF one record with the
// coarse edge, the supporting coarse triangles, and the sparse fine vector.
// Solve reports are not persisted; a reloaded basis carries empty ones.
inline void save_corrector_basis(const CorrectorBasis& basis, const MeshHierarchy& hier,
                                 const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  char buf[64];
  out << "mslod-corrector-basis 1\n";
  out << "k " << basis.k << " coarse_dofs " << basis.G.cols() << " fine_dofs " << basis.G.rows()
      << "\n";
  for (int E = 0; E < basis.G.cols(); ++E) {
    out << "corrector " << E << " edge " << hier.coarse.dof_edge[E] << " support "
        << basis.support[E].size();
    for (int t : basis.support[E]) out << ' ' << t;
    out << " nnz " << basis.G.col(E).nonZeros() << "\n";
    for (ColSparseMat::InnerIterator it(basis.G, E); it; ++it) {
      std::snprintf(buf, sizeof buf, "%d %.17g\n", static_cast<int>(it.row()), it.value());
      out << buf;
    }
  }
  if (!out) throw std::runtime_error("write failed for " + path);
}

inline CorrectorBasis load_corrector_basis(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corrector basis file " + path);
  std::string word;
  int version = 0;
  if (!(in >> word >> version) || word != "mslod-corrector-basis" || version != 1)
    throw std::runtime_error(path + ": not a corrector basis file");
  CorrectorBasis basis;
  int n_coarse = 0, n_fine = 0;
  if (!(in >> word >> basis.k) || word != "k" || !(in >> word >> n_coarse) ||
      word != "coarse_dofs" || !(in >> word >> n_fine) || word != "fine_dofs")
    throw std::runtime_error(path + ": malformed header");
  basis.support.resize(n_coarse);
  basis.reports.resize(n_coarse);
  std::vector<Triplet> trips;
  for (int i = 0; i < n_coarse; ++i) {
    int E = -1, edge = -1;
    std::size_t sup_count = 0, nnz = 0;
    if (!(in >> word >> E) || word != "corrector" || E != i || !(in >> word >> edge) ||
        word != "edge" || !(in >> word >> sup_count) || word != "support")
      throw std::runtime_error(path + ": malformed record for corrector " + std::to_string(i));
    basis.support[i].resize(sup_count);
    for (std::size_t s = 0; s < sup_count; ++s)
      if (!(in >> basis.support[i][s]))
        throw std::runtime_error(path + ": truncated support list in corrector " +
                                 std::to_string(i));
    if (!(in >> word >> nnz) || word != "nnz")
      throw std::runtime_error(path + ": malformed record for corrector " + std::to_string(i));
    for (std::size_t s = 0; s < nnz; ++s) {
      int row;
      double value;
      if (!(in >> row >> value))
        throw std::runtime_error(path + ": truncated vector in corrector " + std::to_string(i));
      trips.emplace_back(row, i, value);
    }
  }
  basis.G.resize(n_fine, n_coarse);
  basis.G.setFromTriplets(trips.begin(), trips.end());
  return basis;
}

}  // namespace mslod
