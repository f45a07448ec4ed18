#include "mslod/lod.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace mslod;

namespace {

Eigen::VectorXd random_vector(int n, std::uint64_t seed) {
  SplitMix64 rng(seed);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = 2.0 * rng.uniform01() - 1.0;
  return v;
}

double adot(const OperatorMatrix& M, const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  return x.dot(Eigen::VectorXd(M.mat * y));
}

Eigen::SparseMatrix<double> submatrix(const SparseMat& A, const std::vector<int>& rows,
                                      const std::vector<int>& cols) {
  std::vector<int> rmap(A.rows(), -1), cmap(A.cols(), -1);
  for (std::size_t i = 0; i < rows.size(); ++i) rmap[rows[i]] = static_cast<int>(i);
  for (std::size_t j = 0; j < cols.size(); ++j) cmap[cols[j]] = static_cast<int>(j);
  std::vector<Triplet> trips;
  for (int k = 0; k < A.outerSize(); ++k)
    for (SparseMat::InnerIterator it(A, k); it; ++it)
      if (rmap[it.row()] >= 0 && cmap[it.col()] >= 0)
        trips.emplace_back(rmap[it.row()], cmap[it.col()], it.value());
  Eigen::SparseMatrix<double> S(static_cast<int>(rows.size()), static_cast<int>(cols.size()));
  S.setFromTriplets(trips.begin(), trips.end());
  return S;
}

// Random divergence-free fine flux with zero coarse interpolation, built from
// stream potentials on the patch-free vertex set of a saturated patch.
Eigen::VectorXd random_detail_flux(const MeshHierarchy& h, std::uint64_t seed) {
  Patch p = patch(h, 0, saturation_layers(h.coarse));
  REQUIRE(p.saturated);
  StreamBasis basis = stream_basis(h.fine, [&] {
    std::vector<char> flags(h.fine.n_vertices(), 0);
    for (int v : p.free_vertices) flags[v] = 1;
    return flags;
  }());
  return basis.C * random_vector(static_cast<int>(basis.vertices.size()), seed);
}

struct Setup {
  MeshHierarchy h;
  CellGridField A;
  RTSpace flux;
  PressureSpace pres;
  OperatorMatrix M;
  OperatorMatrix B;
  OperatorMatrix Pi;

  Setup(int coarse_level, int fine_level, CellGridField field)
      : h(build_hierarchy(Domain::unit_square(), coarse_level, fine_level)),
        A(std::move(field)),
        flux(h.fine),
        pres(h.fine),
        M(assemble_weighted_mass(flux, A)),
        B(assemble_div(flux, pres)),
        Pi(interpolation_PiH(h)) {}
};

}  // namespace

TEST_CASE("element corrector structure", "[lod]") {
  Setup s(2, 4, make_noise(16, 8.0, 11));
  const int T = 5;

  SECTION("zero source gives zero corrector") {
    Eigen::VectorXd w = element_corrector(s.h, s.M, s.A, T, 2,
                                          Eigen::VectorXd::Zero(s.h.coarse.n_flux_dofs));
    CHECK(w.cwiseAbs().maxCoeff() == 0.0);
  }

  SECTION("divergence-free, interpolation kernel, patch support") {
    Eigen::VectorXd src = Eigen::VectorXd::Zero(s.h.coarse.n_flux_dofs);
    src[s.h.coarse.edge_dof[s.h.coarse.tri_edge[T][0]]] = 1.0;
    SolveReport rep;
    Eigen::VectorXd w = element_corrector(s.h, s.M, s.A, T, 1, src, 1e-11, &rep);
    const double scale = prolong(s.h, src).norm();
    CHECK(w.norm() > 0.0);
    CHECK(s.B.apply(w).norm() <= 1e-10 * scale);
    CHECK(s.Pi.apply(w).norm() <= 1e-10 * scale);
    CHECK(rep.rel_residual <= 1e-11);

    Patch p = patch(s.h, T, 1);
    std::vector<char> inside(s.h.fine.n_flux_dofs, 0);
    for (int d : p.fine_dofs) inside[d] = 1;
    for (int d = 0; d < s.h.fine.n_flux_dofs; ++d)
      if (!inside[d]) CHECK(w[d] == 0.0);
  }

  SECTION("localized corrector approaches the ideal one") {
    Setup fine(3, 6, make_noise(64, 8.0, 4));
    Eigen::VectorXd src = Eigen::VectorXd::Zero(fine.h.coarse.n_flux_dofs);
    src[fine.h.coarse.edge_dof[fine.h.coarse.tri_edge[40][1]]] = 1.0;
    const int sat = saturation_layers(fine.h.coarse);
    Eigen::VectorXd ideal = element_corrector(fine.h, fine.M, fine.A, 40, sat, src);
    const double inorm = energy_norm(fine.M, ideal);
    double prev = std::numeric_limits<double>::max();
    for (int k = 1; k <= 3; ++k) {
      Eigen::VectorXd wk = element_corrector(fine.h, fine.M, fine.A, 40, k, src);
      const double dk = energy_norm(fine.M, Eigen::VectorXd(ideal - wk));
      CHECK(dk <= inorm * (1.0 + 1e-12));
      CHECK(dk < prev);
      prev = dk;
    }
  }
}

TEST_CASE("stream-function corrector matches the saddle-point formulation", "[lod]") {
  Setup s(2, 4, make_noise(16, 6.0, 23));
  const int T = 9, k = 1;
  Patch p = patch(s.h, T, k);

  Eigen::VectorXd src = Eigen::VectorXd::Zero(s.h.coarse.n_flux_dofs);
  src[s.h.coarse.edge_dof[s.h.coarse.tri_edge[T][2]]] = 1.0;
  Eigen::VectorXd w = element_corrector(s.h, s.M, s.A, T, k, src);

  // Independent formulation: patch-restricted KKT system with divergence
  // rows (gauged per coarse triangle) and interpolation rows.
  OperatorMatrix M_T = assemble_weighted_mass(s.flux, s.A, &s.h.coarse_tri_children[T]);
  Eigen::VectorXd g_full = M_T.apply(prolong(s.h, src));
  Eigen::VectorXd g(p.fine_dofs.size());
  for (std::size_t i = 0; i < p.fine_dofs.size(); ++i) g[i] = g_full[p.fine_dofs[i]];

  Eigen::SparseMatrix<double> M_local =
      submatrix(s.M.mat, p.fine_dofs, p.fine_dofs);

  ConstraintBlock div_blk;
  div_blk.name = "patch divergence";
  div_blk.C = SparseMat(submatrix(s.B.mat, p.fine_tris, p.fine_dofs));
  div_blk.rhs = Eigen::VectorXd::Zero(static_cast<int>(p.fine_tris.size()));
  std::vector<int> local_of_tri(s.h.fine.n_tris(), -1);
  for (std::size_t i = 0; i < p.fine_tris.size(); ++i)
    local_of_tri[p.fine_tris[i]] = static_cast<int>(i);
  for (int ct : p.tris) {
    std::vector<std::pair<int, double>> gauge;
    for (int ft : s.h.coarse_tri_children[ct])
      gauge.emplace_back(local_of_tri[ft], s.h.fine.tri_area[ft]);
    div_blk.gauges.push_back(std::move(gauge));
  }

  std::vector<int> pi_rows;
  for (int ce : p.interior_coarse_edges) pi_rows.push_back(s.h.coarse.edge_dof[ce]);
  ConstraintBlock pi_blk;
  pi_blk.name = "patch interpolation";
  pi_blk.C = SparseMat(submatrix(s.Pi.mat, pi_rows, p.fine_dofs));
  pi_blk.rhs = Eigen::VectorXd::Zero(static_cast<int>(pi_rows.size()));

  SaddleSystem sys = build_constrained_system(M_local, {div_blk, pi_blk}, g);
  SaddleSolution kkt = solve(sys, 1e-11);

  Eigen::VectorXd w_kkt = Eigen::VectorXd::Zero(s.h.fine.n_flux_dofs);
  for (std::size_t i = 0; i < p.fine_dofs.size(); ++i) w_kkt[p.fine_dofs[i]] = kkt.primal[i];

  Eigen::VectorXd diff = w - w_kkt;
  CHECK(energy_norm(s.M, diff) <= 1e-8 * std::max(1.0, energy_norm(s.M, w)));
}

TEST_CASE("corrector basis invariants", "[lod]") {
  Setup s(2, 5, make_noise(32, 8.0, 3));
  CorrectorBasis basis = corrector_basis(s.h, s.M, s.A, 2);
  OperatorMatrix P = prolongation(s.h);

  CHECK(basis.dim() == s.h.coarse.n_flux_dofs);
  REQUIRE(basis.G.rows() == s.h.fine.n_flux_dofs);

  for (int E = 0; E < basis.dim(); ++E) {
    Eigen::VectorXd g = basis.G.col(E);
    const double scale = P.apply(Eigen::VectorXd::Unit(basis.dim(), E)).norm();
    CHECK(g.norm() > 0.0);
    CHECK(s.B.apply(g).norm() <= 1e-10 * scale);
    CHECK(s.Pi.apply(g).norm() <= 1e-10 * scale);
    CHECK(basis.reports[E].rel_residual <= 1e-11);

    // entrywise support: zero outside the union of the incident patches
    const int ce = s.h.coarse.dof_edge[E];
    std::vector<char> allowed(s.h.fine.n_flux_dofs, 0);
    for (int ct : s.h.coarse.edge_tri[ce]) {
      if (ct < 0) continue;
      for (int d : patch(s.h, ct, 2).fine_dofs) allowed[d] = 1;
    }
    for (int d = 0; d < s.h.fine.n_flux_dofs; ++d)
      if (!allowed[d]) CHECK(g[d] == 0.0);
    // declared support union holds the same patches
    std::vector<int> expect;
    for (int ct : s.h.coarse.edge_tri[ce]) {
      if (ct < 0) continue;
      Patch p = patch(s.h, ct, 2);
      expect.insert(expect.end(), p.tris.begin(), p.tris.end());
    }
    std::sort(expect.begin(), expect.end());
    expect.erase(std::unique(expect.begin(), expect.end()), expect.end());
    CHECK(basis.support[E] == expect);
  }
}

TEST_CASE("saturated corrector basis is insensitive to extra layers", "[lod]") {
  Setup s(2, 4, make_noise(16, 6.0, 41));
  const int sat = saturation_layers(s.h.coarse);
  CorrectorBasis b1 = corrector_basis(s.h, s.M, s.A, sat);
  CorrectorBasis b2 = corrector_basis(s.h, s.M, s.A, sat + 1);
  Eigen::MatrixXd d1(b1.G), d2(b2.G);
  CHECK((d1 - d2).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("reference solve", "[lod]") {
  SECTION("checker flux crosses the midline toward the f=+1 corner") {
    MeshHierarchy h = build_hierarchy(Domain::unit_square(), 1, 3);
    RTSpace flux(h.fine);
    PressureSpace pres(h.fine);
    OperatorMatrix M = assemble_weighted_mass(flux, make_constant(1.0));
    OperatorMatrix B = assemble_div(flux, pres);
    ReferenceSolution ref = solve_reference(h, M, B, make_source("checker_quarters"));

    // The solved field satisfies div u = -f, so it converges on the f=+1
    // corner (lower left); it is the negative of the physical Darcy velocity,
    // which runs from the +1 to the -1 corner. Signed flux through the
    // vertical line x = 1/2, positive toward +x:
    double through = 0.0;
    for (int e = 0; e < h.fine.n_edges(); ++e) {
      if (h.fine.edge_dof[e] < 0) continue;
      Vec2 a = h.fine.vertex[h.fine.edge[e][0]], b = h.fine.vertex[h.fine.edge[e][1]];
      if (std::abs(a.x - 0.5) > 1e-14 || std::abs(b.x - 0.5) > 1e-14) continue;
      Vec2 n = h.fine.edge_normal(e);
      through += h.fine.edge_len[e] * ref.u[h.fine.edge_dof[e]] * n.x;
    }
    CHECK(through < 0.0);
    // divergence theorem over the left half: the crossing flux equals the
    // integral of div u there, i.e. minus the +1 well's strength
    CHECK(through == Catch::Approx(-1.0 / 16.0).margin(1e-12));
  }

  SECTION("divergence identity and eight-triangle dense oracle") {
    MeshHierarchy h = build_hierarchy(Domain::unit_square(), 0, 1);
    RTSpace flux(h.fine);
    PressureSpace pres(h.fine);
    OperatorMatrix M = assemble_weighted_mass(flux, make_constant(1.0));
    OperatorMatrix B = assemble_div(flux, pres);
    SourceField f = make_source("checker_quarters");
    ReferenceSolution ref = solve_reference(h, M, B, f);

    std::vector<double> fint = source_integrals(f, h.fine);
    Eigen::VectorXd r(h.fine.n_tris());
    for (int t = 0; t < h.fine.n_tris(); ++t) r[t] = -fint[t];
    CHECK((B.apply(ref.u) - r).cwiseAbs().maxCoeff() <= 1e-10);

    std::vector<int> all(h.fine.n_tris());
    for (int t = 0; t < h.fine.n_tris(); ++t) all[t] = t;
    SaddleSystem sys = build_constrained_system(
        Eigen::SparseMatrix<double>(M.mat), {divergence_block(B, r, {all})},
        Eigen::VectorXd::Zero(h.fine.n_flux_dofs));
    Eigen::MatrixXd K(detail::assemble_kkt(sys));
    Eigen::VectorXd b = Eigen::VectorXd::Zero(K.rows());
    b.segment(sys.n(), sys.m()) = sys.r;
    Eigen::VectorXd dense = Eigen::FullPivLU<Eigen::MatrixXd>(K).solve(b);
    for (int i = 0; i < sys.n(); ++i) CHECK(ref.u[i] == Catch::Approx(dense[i]).margin(1e-12));
    for (int t = 0; t < sys.m(); ++t)
      CHECK(ref.p[t] == Catch::Approx(dense[sys.n() + t]).margin(1e-12));
  }
}

TEST_CASE("multiscale solve", "[lod]") {
  Setup s(2, 5, make_noise(32, 8.0, 17));
  SourceField f = make_source("checker_quarters");
  ReferenceSolution ref = solve_reference(s.h, s.M, s.B, f);

  SECTION("ideal method reproduces the reference when f is coarse-constant") {
    CorrectorBasis basis = corrector_basis(s.h, s.M, s.A, saturation_layers(s.h.coarse));
    MultiscaleSolution ms = solve_multiscale(s.h, s.M, basis, f);
    const double rel =
        energy_norm(s.M, Eigen::VectorXd(ref.u - ms.u)) / energy_norm(s.M, ref.u);
    CHECK(rel <= 1e-8);

    // dimension identity and stiffness definiteness
    ColSparseMat Psi = detail::multiscale_basis(s.h, basis);
    CHECK(static_cast<int>(Psi.cols()) == s.h.coarse.n_flux_dofs);
    Eigen::MatrixXd K = Eigen::MatrixXd(ColSparseMat(Psi.transpose() * ColSparseMat(s.M.mat * Psi)));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(K);
    CHECK(eig.eigenvalues().minCoeff() > 0.0);

    // ideal orthogonality: corrected basis is a-orthogonal to detail fields
    for (int trial = 0; trial < 5; ++trial) {
      Eigen::VectorXd wf = random_detail_flux(s.h, 900 + trial);
      const double wn = energy_norm(s.M, wf);
      for (int E : {0, 7, basis.dim() - 1}) {
        Eigen::VectorXd psi_e = Psi.col(E);
        const double val = std::abs(adot(s.M, psi_e, wf));
        CHECK(val <= 1e-9 * energy_norm(s.M, psi_e) * wn);
      }
    }
  }

  SECTION("localized solve: divergence identity and Galerkin orthogonality") {
    CorrectorBasis basis = corrector_basis(s.h, s.M, s.A, 2);
    MultiscaleSolution ms = solve_multiscale(s.h, s.M, basis, f);

    RTSpace cflux(s.h.coarse, SpaceKind::coarse_flux);
    PressureSpace cpres(s.h.coarse, SpaceKind::coarse_pressure);
    OperatorMatrix B_H = assemble_div(cflux, cpres);
    std::vector<double> cint = source_integrals(f, s.h.coarse);
    // expected per-fine-triangle divergence integral: the area share of the
    // coarse-mean source on the parent triangle
    Eigen::VectorXd target(s.h.fine.n_tris());
    for (int t = 0; t < s.h.fine.n_tris(); ++t) {
      const int T = s.h.fine_tri_parent[t];
      target[t] = -cint[T] * s.h.fine.tri_area[t] / s.h.coarse.tri_area[T];
    }
    CHECK((s.B.apply(ms.u) - target).cwiseAbs().maxCoeff() <= 1e-10);

    // divergence-free multiscale test vectors from coarse stream potentials
    StreamBasis cstream = stream_basis(s.h.coarse, interior_vertex_flags(s.h.coarse));
    ColSparseMat Psi = detail::multiscale_basis(s.h, basis);
    Eigen::VectorXd err = ref.u - ms.u;
    const double en = energy_norm(s.M, err);
    for (int trial = 0; trial < 20; ++trial) {
      Eigen::VectorXd c =
          cstream.C * random_vector(static_cast<int>(cstream.vertices.size()), 70 + trial);
      REQUIRE(B_H.apply(c).cwiseAbs().maxCoeff() <= 1e-12);
      Eigen::VectorXd w = Psi * c;
      CHECK(std::abs(adot(s.M, err, w)) <= 1e-9 * en * energy_norm(s.M, w));
    }

    // the multiscale error is no worse than the plain coarse-space error
    StandardCoarseSolution std_sol = solve_standard_coarse(s.h, s.M, f);
    const double e_ms = en / energy_norm(s.M, ref.u);
    const double e_std =
        energy_norm(s.M, Eigen::VectorXd(ref.u - std_sol.u)) / energy_norm(s.M, ref.u);
    CHECK(e_ms < e_std);
  }
}

TEST_CASE("layer count rule", "[lod]") {
  CHECK(choose_k(0.25, std::pow(2.0, -8), 0.5) == 3);
  CHECK(choose_k(std::pow(2.0, -6), std::pow(2.0, -8), 0.25) == 3);
  CHECK(choose_k(0.25, 0.03125, 1000.0, 9) == 9);  // huge C clamps to the stated cap
  CHECK(choose_k(0.25, 0.03125, 1e-9) == 1);
  CHECK_THROWS_AS(choose_k(0.25, 0.25, 0.5), std::domain_error);
  CHECK_THROWS_AS(choose_k(1.5, 0.1, 0.5), std::domain_error);
  CHECK_THROWS_AS(choose_k(0.25, 0.5, 0.5), std::domain_error);
}

TEST_CASE("corrector decay", "[lod]") {
  MeshHierarchy h = build_hierarchy(Domain::unit_square(), 3, 5);
  CellGridField A = make_noise(32, 6.0, 29);
  RTSpace flux(h.fine);
  OperatorMatrix M = assemble_weighted_mass(flux, A);

  const int T = 60;  // interior triangle, several layers away from the boundary
  Eigen::VectorXd src = Eigen::VectorXd::Zero(h.coarse.n_flux_dofs);
  src[h.coarse.edge_dof[h.coarse.tri_edge[T][0]]] = 1.0;
  const int sat = saturation_layers(h.coarse);
  DecayReport rep = decay_profile(h, M, A, T, src, sat);

  CHECK(rep.seed_tri == T);
  CHECK(rep.lambda_value == Catch::Approx(std::sqrt(3.0)));
  REQUIRE(static_cast<int>(rep.d.size()) == sat);
  for (std::size_t i = 1; i < rep.d.size(); ++i) CHECK(rep.d[i] <= rep.d[i - 1] * (1.0 + 1e-9));
  CHECK(rep.d[1] < rep.d[0]);
  CHECK(rep.d[2] < rep.d[1]);
  CHECK(rep.d.back() <= 1e-9 * rep.d.front() + 1e-14);
  CHECK(rep.theta_hat > 0.0);
  CHECK(rep.theta_hat < 1.0);
}

TEST_CASE("source correctors", "[lod]") {
  Setup s(2, 4, make_noise(16, 6.0, 55));
  Domain dom = Domain::unit_square();
  const double cell = 1.0 / 16.0;
  SourceField wells =
      make_source_wells({0.0, 0.0}, {cell, cell}, {1.0 - cell, 1.0 - cell}, {1.0, 1.0}, dom);
  const int T_lo = s.h.fine_tri_parent[s.h.fine.cell_tri[0][0]];
  const int T_hi = s.h.fine_tri_parent[s.h.fine.cell_tri[16 * 16 - 1][1]];

  SECTION("zero on the triangle gives the trivial corrector") {
    // the wells vanish on triangle 12, which sits away from both corners
    SourceCorrector far = source_corrector(s.h, s.M, s.B, 12, 1, wells);
    CHECK(far.flux.cwiseAbs().maxCoeff() == 0.0);
    CHECK(far.report.backend == std::string("trivial"));
    SourceCorrector near = source_corrector(s.h, s.M, s.B, T_lo, 1, wells);
    CHECK(near.flux.norm() > 0.0);  // nonzero where the source varies
  }

  SECTION("prescribed divergence, support, and corrected total divergence") {
    for (int ell : {0, 1, 2}) {
      SourceCorrector c = source_corrector(s.h, s.M, s.B, T_lo, ell, wells);
      CHECK(c.ell == ell);

      // divergence: -(f - mean) on T, zero elsewhere
      Eigen::VectorXd div = s.B.apply(c.flux);
      double total_f = 0.0;
      for (int t : s.h.coarse_tri_children[T_lo])
        total_f += integrate_source_over_triangle(wells, s.h.fine.vertex[s.h.fine.tri[t][0]],
                                                  s.h.fine.vertex[s.h.fine.tri[t][1]],
                                                  s.h.fine.vertex[s.h.fine.tri[t][2]]);
      const double mean = total_f / s.h.coarse.tri_area[T_lo];
      for (int t = 0; t < s.h.fine.n_tris(); ++t) {
        double expect = 0.0;
        if (s.h.fine_tri_parent[t] == T_lo) {
          const double fi = integrate_source_over_triangle(
              wells, s.h.fine.vertex[s.h.fine.tri[t][0]], s.h.fine.vertex[s.h.fine.tri[t][1]],
              s.h.fine.vertex[s.h.fine.tri[t][2]]);
          expect = -(fi - s.h.fine.tri_area[t] * mean);
        }
        CHECK(div[t] == Catch::Approx(expect).margin(1e-12));
      }

      Patch p = patch(s.h, T_lo, ell);
      std::vector<char> inside(s.h.fine.n_flux_dofs, 0);
      for (int d : p.fine_dofs) inside[d] = 1;
      for (int d = 0; d < s.h.fine.n_flux_dofs; ++d)
        if (!inside[d]) CHECK(c.flux[d] == 0.0);
    }

    CorrectorBasis basis = corrector_basis(s.h, s.M, s.A, 2);
    std::vector<SourceCorrector> cs = {source_corrector(s.h, s.M, s.B, T_lo, 2, wells),
                                       source_corrector(s.h, s.M, s.B, T_hi, 2, wells)};
    CorrectedSolution corr = solve_multiscale_corrected(s.h, s.M, basis, wells, cs);
    std::vector<double> fint = source_integrals(wells, s.h.fine);
    Eigen::VectorXd target(s.h.fine.n_tris());
    for (int t = 0; t < s.h.fine.n_tris(); ++t) target[t] = -fint[t];
    CHECK((s.B.apply(corr.u) - target).cwiseAbs().maxCoeff() <= 1e-9);

    // the corrected solve beats the uncorrected one on a well-type source
    ReferenceSolution ref = solve_reference(s.h, s.M, s.B, wells);
    MultiscaleSolution plain = solve_multiscale(s.h, s.M, basis, wells);
    const double refn = energy_norm(s.M, ref.u);
    CHECK(energy_norm(s.M, Eigen::VectorXd(ref.u - corr.u)) <
          energy_norm(s.M, Eigen::VectorXd(ref.u - plain.u)));
  }

  SECTION("coarse-constant source needs no correction") {
    SourceField f = make_source("checker_quarters");  // constant on every coarse triangle
    SourceCorrector c = source_corrector(s.h, s.M, s.B, T_lo, 1, f);
    CHECK(c.flux.cwiseAbs().maxCoeff() <= 1e-13);
    CorrectorBasis basis = corrector_basis(s.h, s.M, s.A, 1);
    MultiscaleSolution plain = solve_multiscale(s.h, s.M, basis, f);
    CorrectedSolution corr = solve_multiscale_corrected(s.h, s.M, basis, f, {c});
    CHECK((corr.u - plain.u).cwiseAbs().maxCoeff() <= 1e-11);
  }

  SECTION("stream-function source corrector matches the saddle-point formulation") {
    const int ell = 1;
    SourceCorrector c = source_corrector(s.h, s.M, s.B, T_lo, ell, wells);
    Patch p = patch(s.h, T_lo, ell);

    Eigen::VectorXd r_local(p.fine_tris.size());
    std::vector<int> local_of_tri(s.h.fine.n_tris(), -1);
    for (std::size_t i = 0; i < p.fine_tris.size(); ++i) {
      const int t = p.fine_tris[i];
      local_of_tri[t] = static_cast<int>(i);
      r_local[i] = (s.h.fine_tri_parent[t] == T_lo)
                       ? -integrate_source_over_triangle(
                             wells, s.h.fine.vertex[s.h.fine.tri[t][0]],
                             s.h.fine.vertex[s.h.fine.tri[t][1]],
                             s.h.fine.vertex[s.h.fine.tri[t][2]])
                       : 0.0;
    }
    ConstraintBlock div_blk;
    div_blk.name = "patch divergence";
    div_blk.C = SparseMat(submatrix(s.B.mat, p.fine_tris, p.fine_dofs));
    div_blk.rhs = r_local;
    for (int ct : p.tris) {
      std::vector<std::pair<int, double>> gauge;
      for (int ft : s.h.coarse_tri_children[ct])
        gauge.emplace_back(local_of_tri[ft], s.h.fine.tri_area[ft]);
      div_blk.gauges.push_back(std::move(gauge));
    }
    std::vector<int> pi_rows;
    for (int ce : p.interior_coarse_edges) pi_rows.push_back(s.h.coarse.edge_dof[ce]);
    ConstraintBlock pi_blk;
    pi_blk.name = "patch interpolation";
    pi_blk.C = SparseMat(submatrix(s.Pi.mat, pi_rows, p.fine_dofs));
    pi_blk.rhs = Eigen::VectorXd::Zero(static_cast<int>(pi_rows.size()));

    Eigen::SparseMatrix<double> M_local = submatrix(s.M.mat, p.fine_dofs, p.fine_dofs);
    SaddleSystem sys = build_constrained_system(
        M_local, {div_blk, pi_blk}, Eigen::VectorXd::Zero(static_cast<int>(p.fine_dofs.size())));
    SaddleSolution kkt = solve(sys, 1e-11);
    Eigen::VectorXd F_kkt = Eigen::VectorXd::Zero(s.h.fine.n_flux_dofs);
    for (std::size_t i = 0; i < p.fine_dofs.size(); ++i) F_kkt[p.fine_dofs[i]] = kkt.primal[i];

    CHECK(energy_norm(s.M, Eigen::VectorXd(c.flux - F_kkt)) <=
          1e-8 * std::max(1.0, energy_norm(s.M, c.flux)));
  }
}

TEST_CASE("inf-sup probe", "[lod]") {
  MeshHierarchy h = build_hierarchy(Domain::unit_square(), 1, 2);
  const TriMesh& C = h.coarse;
  RTSpace cflux(C, SpaceKind::coarse_flux);
  PressureSpace cpres(C, SpaceKind::coarse_pressure);
  OperatorMatrix B_H = assemble_div(cflux, cpres);
  OperatorMatrix M1 = assemble_weighted_mass(cflux, make_constant(1.0));

  Eigen::MatrixXd B(B_H.mat);
  Eigen::MatrixXd N = Eigen::MatrixXd::Zero(C.n_tris(), C.n_tris());
  Eigen::MatrixXd Dinv = Eigen::MatrixXd::Zero(C.n_tris(), C.n_tris());
  for (int t = 0; t < C.n_tris(); ++t) {
    N(t, t) = C.tri_area[t];
    Dinv(t, t) = 1.0 / C.tri_area[t];
  }
  Eigen::MatrixXd X = Eigen::MatrixXd(M1.mat) + B.transpose() * Dinv * B;

  SECTION("standard coarse pair is stable") {
    const double gamma = infsup_estimate(B, X, N);
    CHECK(gamma > 0.0);
    CHECK(gamma < 1.0 + 1e-12);  // generalized singular values of this scaling are <= 1
  }

  SECTION("multiscale pairs at k=1 and k=2") {
    MeshHierarchy h2 = build_hierarchy(Domain::unit_square(), 2, 4);
    CellGridField A = make_noise(16, 6.0, 77);
    RTSpace flux(h2.fine);
    OperatorMatrix M = assemble_weighted_mass(flux, A);
    OperatorMatrix M1f = assemble_weighted_mass(flux, make_constant(1.0));
    RTSpace c2flux(h2.coarse, SpaceKind::coarse_flux);
    PressureSpace c2pres(h2.coarse, SpaceKind::coarse_pressure);
    OperatorMatrix B2 = assemble_div(c2flux, c2pres);
    Eigen::MatrixXd Bd(B2.mat);
    Eigen::MatrixXd N2 = Eigen::MatrixXd::Zero(h2.coarse.n_tris(), h2.coarse.n_tris());
    Eigen::MatrixXd D2 = N2;
    for (int t = 0; t < h2.coarse.n_tris(); ++t) {
      N2(t, t) = h2.coarse.tri_area[t];
      D2(t, t) = 1.0 / h2.coarse.tri_area[t];
    }
    for (int k : {1, 2}) {
      CorrectorBasis basis = corrector_basis(h2, M, A, k);
      ColSparseMat Psi = detail::multiscale_basis(h2, basis);
      Eigen::MatrixXd Xms = Eigen::MatrixXd(ColSparseMat(Psi.transpose() * ColSparseMat(M1f.mat * Psi))) +
                            Bd.transpose() * D2 * Bd;
      CHECK(infsup_estimate(Bd, Xms, N2) > 0.0);
    }
  }

  SECTION("degenerate pair reports zero") {
    Eigen::MatrixXd Bd(1, 0), Xd(0, 0), Nd(1, 1);
    Nd(0, 0) = 0.5;
    CHECK(infsup_estimate(Bd, Xd, Nd) == 0.0);
  }

  SECTION("dimension mismatch is rejected") {
    Eigen::MatrixXd Bd(2, 3), Xd(4, 4), Nd(2, 2);
    CHECK_THROWS_AS(infsup_estimate(Bd, Xd, Nd), std::logic_error);
  }
}

TEST_CASE("corrector basis serialization round-trip", "[lod]") {
  Setup s(1, 3, make_noise(8, 5.0, 99));
  CorrectorBasis basis = corrector_basis(s.h, s.M, s.A, 1);
  const std::string path = "corrector_basis_roundtrip.txt";
  save_corrector_basis(basis, s.h, path);
  CorrectorBasis loaded = load_corrector_basis(path);

  CHECK(loaded.k == basis.k);
  REQUIRE(loaded.dim() == basis.dim());
  REQUIRE(loaded.G.rows() == basis.G.rows());
  CHECK(loaded.support == basis.support);
  Eigen::MatrixXd da(basis.G), db(loaded.G);
  CHECK((da - db).cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_WITH(load_corrector_basis("nonexistent_basis_file.txt"),
                    Catch::Matchers::ContainsSubstring("cannot open"));
  std::remove(path.c_str());
}
