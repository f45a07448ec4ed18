#include "mslod/field.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cstdio>

using namespace mslod;

TEST_CASE("splitmix64 reference stream", "[field]") {
  // First outputs for seed 0, from the published reference implementation.
  SplitMix64 rng(0);
  CHECK(rng.next() == 0xE220A8397B1DCDAFull);
  CHECK(rng.next() == 0x6E789E6AA1B965F4ull);
  CHECK(rng.next() == 0x06C45D188009454Full);
  SplitMix64 u(42);
  for (int i = 0; i < 1000; ++i) {
    double x = u.uniform01();
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
  }
}

TEST_CASE("constant and noise coefficients", "[field]") {
  CellGridField one = make_constant(1.0);
  CHECK(one.nx == 1);
  CHECK(one.alpha() == 1.0);
  CHECK(one.beta() == 1.0);
  CHECK(make_constant(2.0).beta() / make_constant(2.0).alpha() == 1.0);
  CHECK_THROWS_AS(make_constant(0.0), std::domain_error);

  CellGridField a = make_noise(128, 10.0, 7);
  CHECK(a.nx == 128);
  CHECK(a.min_value >= 1.0);
  CHECK(a.max_value <= std::exp(10.0));
  CHECK(a.max_value / a.min_value > 100.0);  // seed 7 realization spans the range

  CellGridField b = make_noise(128, 10.0, 7);
  CHECK(a.value == b.value);  // bit-identical regeneration
  CellGridField c = make_noise(128, 10.0, 8);
  CHECK(a.value != c.value);

  CHECK(make_noise(1, 0.0, 3).value[0] == 1.0);
  CHECK_THROWS_AS(make_noise(0, 1.0, 1), std::domain_error);
}

TEST_CASE("channel layouts", "[field]") {
  // All-low spec: zero thickness everywhere.
  ChannelSpec none{8, 0, 32, 0};
  CellGridField flat = make_channels(16, std::exp(10.0), none);
  CHECK(flat.min_value == 1.0);
  CHECK(flat.max_value == 1.0);

  // One full-width channel row: thickness 1, period larger than the grid.
  ChannelSpec single{100, 1, 100, 0};
  CellGridField one_row = make_channels(16, 5.0, single);
  for (int i = 0; i < 16; ++i) {
    CHECK(one_row.at_cell(i, 0) == 5.0);
    CHECK(one_row.at_cell(i, 7) == 1.0);
  }

  // Default layout on 128x128: counted high fraction matches the
  // inclusion-exclusion formula, and the frozen value for these defaults.
  ChannelSpec def{};
  CellGridField ch = make_channels(128, std::exp(10.0), def);
  int high = 0;
  for (double v : ch.value)
    if (v > 1.0) ++high;
  double fraction = static_cast<double>(high) / (128.0 * 128.0);
  CHECK(fraction == Catch::Approx(def.high_fraction(128)).epsilon(1e-15));
  CHECK(fraction == Catch::Approx(0.296875).epsilon(1e-15));
}

TEST_CASE("high-contrast interface field", "[field]") {
  CellGridField f = make_instability_field();
  CHECK(f.nx == 32);
  const double hi = std::exp(10.0);
  auto value_at = [&](double x, double y) {
    int i = static_cast<int>(x * 32), j = static_cast<int>(y * 32);
    return f.at_cell(i, j);
  };
  CHECK(value_at(0.25, 0.25) == hi);   // lower half-plane
  CHECK(value_at(0.25, 0.75) == 1.0);  // upper background
  CHECK(value_at(0.50, 0.51) == hi);   // the bump above the interface
  CHECK(value_at(0.40, 0.51) == 1.0);  // beside the bump
  int high = 0;
  for (double v : f.value)
    if (v == hi) ++high;
  CHECK(high == 32 * 16 + 2);
}

TEST_CASE("SPE10 reader on synthetic files", "[field]") {
  const std::string path = "test_spe10_synth.dat";
  std::vector<double> ones(60 * 220, 1.0);
  write_field_values(path, ones);
  CellGridField f = load_spe10(path, 1);
  CHECK(f.nx == 60);
  CHECK(f.ny == 220);
  CHECK(f.cell_w == Catch::Approx(0.02));
  CHECK(f.cell_h == Catch::Approx(0.01));
  CHECK(f.min_value == 1.0);
  CHECK(f.max_value == 1.0);

  CHECK_THROWS_AS(load_spe10(path, 2), std::out_of_range);
  CHECK_THROWS_AS(load_spe10(path, 1, "ky"), std::runtime_error);
  CHECK_THROWS_AS(load_spe10("no_such_file.dat", 1), std::runtime_error);
  CHECK_THROWS_WITH(load_spe10("no_such_file.dat", 1),
                    Catch::Matchers::ContainsSubstring("--spe10-file"));

  write_field_values(path, {1.0, 2.0, 3.0, 4.0, 5.0});
  CHECK_THROWS_WITH(load_spe10(path, 1), Catch::Matchers::ContainsSubstring("found 5"));

  // Two-slab file: layer selection picks the right slab.
  std::vector<double> two;
  two.insert(two.end(), 60 * 220, 1.0);
  two.insert(two.end(), 60 * 220, 3.0);
  write_field_values(path, two);
  CHECK(load_spe10(path, 2).max_value == 3.0);
  CHECK(load_spe10(path, 2).min_value == 3.0);
  std::remove(path.c_str());
}

TEST_CASE("coefficient lookup per fine triangle", "[field]") {
  MeshHierarchy h = build_hierarchy(Domain::unit_square(), 2, 5);
  CellGridField cst = make_constant(4.0);
  for (int t = 0; t < h.fine.n_tris(); t += 101)
    CHECK(eval_on_fine_triangle(cst, h, t) == 4.0);

  // Instability field on its own resolution: lower-half triangles all high.
  CellGridField inst = make_instability_field();
  const double hi = std::exp(10.0);
  for (int t = 0; t < h.fine.n_tris(); ++t) {
    Vec2 c = h.fine.centroid(t);
    double v = eval_on_fine_triangle(inst, h, t);
    if (c.y < 0.5) CHECK(v == hi);
  }

  // Noise at the same resolution as the mesh: exactly 2 triangles per cell,
  // so per-cell triangle pairs agree.
  CellGridField noise = make_noise(32, 10.0, 11);
  for (int cell = 0; cell < 32 * 32; ++cell) {
    auto [t0, t1] = h.fine.cell_tri[cell];
    CHECK(eval_on_fine_triangle(noise, h, t0) == eval_on_fine_triangle(noise, h, t1));
  }

  // Coarser field than the mesh: still aligned (4x4 under a 32x32 mesh).
  CellGridField coarse_field = make_noise(4, 2.0, 1);
  CHECK_NOTHROW(eval_on_fine_triangle(coarse_field, h, 0));

  // Misaligned field: a 3x3 grid boundary at x = 1/3 cuts through the fine
  // cell [10/32, 11/32], so its triangles must be rejected by id.
  CellGridField bad = make_noise(3, 1.0, 1);
  int straddler = h.fine.cell_tri[10][0];
  CHECK_THROWS_WITH(eval_on_fine_triangle(bad, h, straddler),
                    Catch::Matchers::ContainsSubstring("triangle " + std::to_string(straddler)));
}

TEST_CASE("source terms integrate exactly", "[field]") {
  // checker_quarters: +1 on [0,1/4]^2, -1 on [3/4,1]^2.
  SourceField checker = make_source("checker_quarters");
  TriMesh m5 = build_structured_mesh(Domain::unit_square(), 5);
  std::vector<double> ints = source_integrals(checker, m5);
  double total = 0.0, pos = 0.0, abssum = 0.0;
  for (double v : ints) {
    total += v;
    abssum += std::abs(v);
    if (v > 0) pos += v;
  }
  CHECK(std::abs(total) <= 1e-12 * abssum);
  CHECK(pos == Catch::Approx(1.0 / 16.0).epsilon(1e-13));

  // Same integrals on a mesh whose triangles straddle the region boundary:
  // clipping keeps them exact.
  TriMesh m1 = build_structured_mesh(Domain::unit_square(), 1);
  std::vector<double> ints1 = source_integrals(checker, m1);
  double pos1 = 0.0, tot1 = 0.0;
  for (double v : ints1) {
    tot1 += v;
    if (v > 0) pos1 += v;
  }
  CHECK(std::abs(tot1) <= 1e-14);
  CHECK(pos1 == Catch::Approx(1.0 / 16.0).epsilon(1e-13));

  // halfplane source on the unit square.
  SourceField half = make_source("halfplane_pm1");
  std::vector<double> ih = source_integrals(half, m5);
  double th = 0.0, ah = 0.0;
  for (double v : ih) {
    th += v;
    ah += std::abs(v);
  }
  CHECK(std::abs(th) <= 1e-12 * ah);
  CHECK(ah == Catch::Approx(1.0).epsilon(1e-13));

  // lshape_linear: analytic piece integrals are +1/8 and -1/8.
  SourceField lsh = make_source("lshape_linear");
  TriMesh lm = build_structured_mesh(Domain::l_shape(), 4);
  std::vector<double> il = source_integrals(lsh, lm);
  double tl = 0.0, posl = 0.0;
  for (double v : il) {
    tl += v;
    if (v > 0) posl += v;
  }
  CHECK(std::abs(tl) <= 1e-13);
  CHECK(posl == Catch::Approx(1.0 / 8.0).epsilon(1e-12));

  CHECK_THROWS_AS(make_source("bogus"), std::domain_error);
}

TEST_CASE("well-pair source", "[field]") {
  Domain dom = Domain::rect(60, 220, 1.2, 2.2);
  TriMesh m = build_structured_mesh(dom, 0);
  SourceField wells = make_source_wells({0.0, 0.0}, {0.02, 0.01}, {1.18, 2.19}, {1.2, 2.2}, dom);
  std::vector<double> iw = source_integrals(wells, m);
  int support = 0;
  double tot = 0.0;
  for (double v : iw) {
    tot += v;
    if (v != 0.0) ++support;
  }
  CHECK(support == 4);  // two triangles per well cell
  CHECK(std::abs(tot) <= 1e-16);

  CHECK_THROWS_AS(
      make_source_wells({-0.5, 0.0}, {0.02, 0.01}, {1.18, 2.19}, {1.2, 2.2}, dom),
      std::domain_error);
  CHECK_THROWS_AS(
      make_source_wells({0.0, 0.0}, {0.04, 0.01}, {1.18, 2.19}, {1.2, 2.2}, dom),
      std::domain_error);
}
