#pragma once

// Symmetric indefinite solver for equality-constrained quadratic problems
//
//     minimize 1/2 v' M v - g' v   subject to   C v = r,
//
// where the constraint rows (divergence rows, coarse-interpolation rows)
// may carry known redundancies. Redundancies are handled symmetrically by
// bordering: for each known left-null direction of a constraint block, a
// gauge row G acting on that block's multipliers is appended, giving
//
//     [ M   C'  0  ] [ v  ]   [ g ]
//     [ C   0   G' ] [ mu ] = [ r ]
//     [ 0   G   0  ] [ nu ]   [ 0 ]
//
// For a consistent right-hand side (r orthogonal to the left null space of
// C) the bordered system reproduces C v = r exactly and nu = 0; for an
// inconsistent r it enforces the projection of the constraint onto the
// gauge-orthogonal complement, which is precisely the weak form tested
// against the gauged multiplier subspace. The gauge rows also select the
// reported multipliers (e.g. area-weighted zero-mean pressure) without
// pinning any single entry.

#include "mslod/operators.hpp"

#ifdef MSLOD_HAVE_SUITESPARSE
#include <Eigen/UmfPackSupport>
#endif
#include <Eigen/SparseLU>

#include <chrono>
#include <map>
#include <utility>

namespace mslod {

// One named group of constraint rows with its right-hand side and the gauge
// rows (weights over this block's multipliers) fixing its known redundancy
// directions.
struct ConstraintBlock {
  std::string name;
  SparseMat C;
  Eigen::VectorXd rhs;
  std::vector<std::vector<std::pair<int, double>>> gauges;
};

struct RedundancyRecord {
  std::string block;
  int rows = 0;
  int duplicates_removed = 0;
  int gauge_rows = 0;
};

struct SaddleSystem {
  Eigen::SparseMatrix<double> M;  // n x n, SPD
  Eigen::SparseMatrix<double> C;  // m x n stacked constraints (deduplicated)
  Eigen::SparseMatrix<double> G;  // ng x m gauge rows on the multipliers
  Eigen::VectorXd g;              // flux right-hand side, length n
  Eigen::VectorXd r;              // constraint right-hand side, length m
  std::vector<RedundancyRecord> policy;            // per-block bookkeeping
  std::vector<std::pair<int, int>> block_ranges;   // [begin,end) rows per block
  std::vector<std::string> block_names;

  int n() const { return static_cast<int>(M.rows()); }
  int m() const { return static_cast<int>(C.rows()); }
  int ng() const { return static_cast<int>(G.rows()); }
};

struct SolveReport {
  double rel_residual = 0.0;
  int dim = 0;
  long factor_nonzeros = 0;
  int refinement_steps = 0;
  double wall_seconds = 0.0;
  std::string backend;
};

struct SaddleSolution {
  Eigen::VectorXd primal;
  Eigen::VectorXd multipliers;
  Eigen::VectorXd gauge_values;
  SolveReport report;
};

enum class SaddleBackend { automatic, umfpack, sparse_lu };

// Stack the constraint blocks, remove exactly duplicated rows (their
// multipliers merge; right-hand sides must agree), and attach gauge rows.
inline SaddleSystem build_constrained_system(const Eigen::SparseMatrix<double>& M,
                                             const std::vector<ConstraintBlock>& blocks,
                                             const Eigen::VectorXd& g) {
  const int n = static_cast<int>(M.rows());
  if (M.cols() != n || g.size() != n)
    throw std::logic_error("build_constrained_system: M/g dimension mismatch");
  SaddleSystem sys;
  sys.M = M;
  sys.g = g;

  // Deduplicate rows by exact content across all blocks.
  std::map<std::vector<std::pair<int, double>>, int> seen;
  std::vector<Triplet> ctrips;
  std::vector<double> rvals;
  std::vector<std::vector<int>> local_to_global(blocks.size());
  int next_row = 0;
  for (size_t b = 0; b < blocks.size(); ++b) {
    const ConstraintBlock& blk = blocks[b];
    if (blk.C.cols() != n)
      throw std::logic_error("build_constrained_system: block '" + blk.name +
                             "' has wrong column count");
    if (blk.rhs.size() != blk.C.rows())
      throw std::logic_error("build_constrained_system: block '" + blk.name +
                             "' rhs length mismatch");
    RedundancyRecord rec;
    rec.block = blk.name;
    rec.rows = static_cast<int>(blk.C.rows());
    rec.gauge_rows = static_cast<int>(blk.gauges.size());
    const int begin = next_row;
    local_to_global[b].resize(blk.C.rows());
    for (int i = 0; i < blk.C.rows(); ++i) {
      std::vector<std::pair<int, double>> row;
      for (SparseMat::InnerIterator it(blk.C, i); it; ++it)
        if (it.value() != 0.0) row.emplace_back(static_cast<int>(it.col()), it.value());
      auto [pos, inserted] = seen.emplace(std::move(row), next_row);
      if (!inserted) {
        ++rec.duplicates_removed;
        if (std::abs(rvals[pos->second] - blk.rhs[i]) > 0.0)
          throw std::runtime_error("build_constrained_system: duplicated constraint row in block '" +
                                   blk.name + "' has conflicting right-hand sides");
        local_to_global[b][i] = pos->second;
        continue;
      }
      for (const auto& [col, val] : pos->first) ctrips.emplace_back(next_row, col, val);
      rvals.push_back(blk.rhs[i]);
      local_to_global[b][i] = next_row;
      ++next_row;
    }
    sys.block_ranges.emplace_back(begin, next_row);
    sys.block_names.push_back(blk.name);
    sys.policy.push_back(rec);
  }
  sys.C.resize(next_row, n);
  {
    Eigen::SparseMatrix<double> Ctmp(next_row, n);
    Ctmp.setFromTriplets(ctrips.begin(), ctrips.end());
    sys.C = std::move(Ctmp);
  }
  sys.r = Eigen::Map<Eigen::VectorXd>(rvals.data(), static_cast<int>(rvals.size()));

  // Gauge rows, remapped through the deduplication.
  std::vector<Triplet> gtrips;
  int ng = 0;
  for (size_t b = 0; b < blocks.size(); ++b)
    for (const auto& gauge : blocks[b].gauges) {
      for (const auto& [local, w] : gauge) {
        if (local < 0 || local >= static_cast<int>(local_to_global[b].size()))
          throw std::logic_error("build_constrained_system: gauge index outside block '" +
                                 blocks[b].name + "'");
        gtrips.emplace_back(ng, local_to_global[b][local], w);
      }
      ++ng;
    }
  sys.G.resize(ng, next_row);
  sys.G.setFromTriplets(gtrips.begin(), gtrips.end());
  return sys;
}

namespace detail {

inline Eigen::SparseMatrix<double> assemble_kkt(const SaddleSystem& sys) {
  const int n = sys.n(), m = sys.m(), ng = sys.ng();
  std::vector<Triplet> trips;
  trips.reserve(sys.M.nonZeros() + 2 * sys.C.nonZeros() + 2 * sys.G.nonZeros());
  for (int k = 0; k < sys.M.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(sys.M, k); it; ++it)
      trips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
  for (int k = 0; k < sys.C.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(sys.C, k); it; ++it) {
      trips.emplace_back(n + static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
      trips.emplace_back(static_cast<int>(it.col()), n + static_cast<int>(it.row()), it.value());
    }
  for (int k = 0; k < sys.G.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(sys.G, k); it; ++it) {
      trips.emplace_back(n + m + static_cast<int>(it.row()), n + static_cast<int>(it.col()),
                         it.value());
      trips.emplace_back(n + static_cast<int>(it.col()), n + m + static_cast<int>(it.row()),
                         it.value());
    }
  Eigen::SparseMatrix<double> K(n + m + ng, n + m + ng);
  K.setFromTriplets(trips.begin(), trips.end());
  return K;
}

// When a factorization reports singularity, point at the constraint blocks
// whose rows visibly sum to a zero functional yet carry no gauge row.
inline std::string diagnose_rank(const SaddleSystem& sys) {
  std::string culprits;
  for (size_t b = 0; b < sys.block_names.size(); ++b) {
    auto [begin, end] = sys.block_ranges[b];
    if (begin == end) continue;
    Eigen::VectorXd colsum = Eigen::VectorXd::Zero(sys.n());
    double scale = 0.0;
    for (int k = 0; k < sys.C.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(sys.C, k); it; ++it)
        if (it.row() >= begin && it.row() < end) {
          colsum[it.col()] += it.value();
          scale = std::max(scale, std::abs(it.value()));
        }
    bool has_gauge = sys.policy[b].gauge_rows > 0;
    if (!has_gauge && scale > 0.0 && colsum.cwiseAbs().maxCoeff() <= 1e-12 * scale) {
      if (!culprits.empty()) culprits += ", ";
      culprits += "'" + sys.block_names[b] + "'";
    }
  }
  if (culprits.empty()) return "";
  return "; constraint block " + culprits +
         " has rows summing to zero and no gauge row fixing the redundancy";
}

}  // namespace detail

// Factor and solve the bordered KKT system with iterative refinement until
// the relative residual meets tol.
inline SaddleSolution solve(const SaddleSystem& sys, double tol = 1e-10,
                            SaddleBackend backend = SaddleBackend::automatic) {
  const auto t0 = std::chrono::steady_clock::now();
  const int n = sys.n(), m = sys.m(), ng = sys.ng();
  const int dim = n + m + ng;
  Eigen::VectorXd b(dim);
  b.segment(0, n) = sys.g;
  b.segment(n, m) = sys.r;
  b.segment(n + m, ng).setZero();

  SaddleSolution sol;
  sol.report.dim = dim;

  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    sol.primal = Eigen::VectorXd::Zero(n);
    sol.multipliers = Eigen::VectorXd::Zero(m);
    sol.gauge_values = Eigen::VectorXd::Zero(ng);
    sol.report.backend = "trivial";
    return sol;
  }

  Eigen::SparseMatrix<double> K = detail::assemble_kkt(sys);

  auto run = [&](auto& lu, const char* name) {
    lu.compute(K);
    if (lu.info() != Eigen::Success)
      throw std::runtime_error("saddle solve: KKT factorization failed (singular system)" +
                               detail::diagnose_rank(sys));
    Eigen::VectorXd x = lu.solve(b);
    double res = (K * x - b).norm() / bnorm;
    if (!std::isfinite(res))
      throw std::runtime_error("saddle solve: factorization produced non-finite values" +
                               detail::diagnose_rank(sys));
    int steps = 0;
    while (res > tol && steps < 3) {
      Eigen::VectorXd dx = lu.solve(Eigen::VectorXd(b - K * x));
      x += dx;
      double next = (K * x - b).norm() / bnorm;
      if (next >= 0.5 * res) {
        res = std::min(res, next);
        break;
      }
      res = next;
      ++steps;
    }
    if (res > tol)
      throw std::runtime_error("saddle solve: residual " + std::to_string(res) +
                               " did not reach tolerance " + std::to_string(tol) +
                               detail::diagnose_rank(sys));
    sol.report.rel_residual = res;
    sol.report.refinement_steps = steps;
    sol.report.backend = name;
    sol.primal = x.segment(0, n);
    sol.multipliers = x.segment(n, m);
    sol.gauge_values = x.segment(n + m, ng);
  };

#ifdef MSLOD_HAVE_SUITESPARSE
  const bool want_umfpack =
      backend == SaddleBackend::automatic || backend == SaddleBackend::umfpack;
#else
  const bool want_umfpack = false;
  if (backend == SaddleBackend::umfpack)
    throw std::runtime_error("saddle solve: umfpack backend not built in");
#endif
  if (want_umfpack) {
#ifdef MSLOD_HAVE_SUITESPARSE
    Eigen::UmfPackLU<Eigen::SparseMatrix<double>> lu;
    run(lu, "umfpack-lu");  // factor_nonzeros stays 0: not exposed by this backend
#endif
  } else {
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    run(lu, "sparse-lu");
    sol.report.factor_nonzeros = static_cast<long>(lu.nnzL() + lu.nnzU());
  }
  sol.report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return sol;
}

// ---------------------------------------------------------------------------
// Ready-made constraint blocks.

// Divergence rows B v = r over the listed triangles (the whole mesh if none
// given), with one area-weighted gauge row per stated group of triangles.
// Groups encode the known left-null directions: the whole block for a
// single-mesh solve, one group per coarse triangle for patch systems.
inline ConstraintBlock divergence_block(const OperatorMatrix& B, const Eigen::VectorXd& rhs,
                                        const std::vector<std::vector<int>>& gauge_groups,
                                        const std::string& name = "divergence") {
  ConstraintBlock blk;
  blk.name = name;
  blk.C = B.mat;
  blk.rhs = rhs;
  const TriMesh& mesh = *B.row_space.mesh;
  for (const auto& group : gauge_groups) {
    std::vector<std::pair<int, double>> gauge;
    gauge.reserve(group.size());
    for (int t : group) gauge.emplace_back(t, mesh.tri_area[t]);
    blk.gauges.push_back(std::move(gauge));
  }
  return blk;
}

}  // namespace mslod
