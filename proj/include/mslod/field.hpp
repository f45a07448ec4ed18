#pragma once

// Scalar coefficient fields on uniform cell grids (constant, random noise,
// channel patterns, a fixed high-contrast layout, and the SPE10 permeability
// reader), plus piecewise-affine source terms with exact per-triangle
// integration via polygon clipping.

#include "mslod/mesh.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mslod {

// splitmix64: the 64-bit mixing generator of Steele/Lea/Flood. Chosen because
// the algorithm fits in five lines and is bit-reproducible from the published
// constants, so field realizations regenerate identically everywhere.
struct SplitMix64 {
  std::uint64_t state;
  explicit SplitMix64(std::uint64_t seed) : state(seed) {}
  std::uint64_t next() {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }
  // Uniform in [0,1): top 53 bits scaled by 2^-53.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
};

// Piecewise-constant scalar coefficient A on a uniform nx-by-ny cell grid.
// The inverse 1/A weights the flux mass matrix, so all values must be
// strictly positive; (alpha, beta) = (1/max, 1/min) bound the inverse.
struct CellGridField {
  int nx = 0, ny = 0;
  double origin_x = 0.0, origin_y = 0.0;
  double cell_w = 0.0, cell_h = 0.0;
  std::vector<double> value;  // row-major, index j * nx + i
  double min_value = 0.0, max_value = 0.0;

  double at_cell(int i, int j) const { return value[static_cast<size_t>(j) * nx + i]; }
  double alpha() const { return 1.0 / max_value; }
  double beta() const { return 1.0 / min_value; }
};

namespace detail {

inline void finalize_field(CellGridField& f, const char* what) {
  if (f.value.size() != static_cast<size_t>(f.nx) * f.ny)
    throw std::logic_error(std::string(what) + ": value count does not match grid");
  f.min_value = std::numeric_limits<double>::infinity();
  f.max_value = 0.0;
  for (double v : f.value) {
    if (!(v > 0.0) || !std::isfinite(v))
      throw std::domain_error(std::string(what) + ": coefficient values must be strictly positive and finite");
    f.min_value = std::min(f.min_value, v);
    f.max_value = std::max(f.max_value, v);
  }
}

}  // namespace detail

// Constant coefficient. A 1x1 grid; width/height give the covered extent so
// the same constructor also serves non-unit rectangular domains.
inline CellGridField make_constant(double value, double width = 1.0, double height = 1.0) {
  if (!(value > 0.0)) throw std::domain_error("make_constant: value must be > 0");
  if (!(width > 0.0) || !(height > 0.0))
    throw std::domain_error("make_constant: extent must be positive");
  CellGridField f;
  f.nx = f.ny = 1;
  f.cell_w = width;
  f.cell_h = height;
  f.value = {value};
  detail::finalize_field(f, "make_constant");
  return f;
}

// Log-uniform noise: each cell of an n-by-n grid on the unit square gets
// exp(amplitude * w) with w drawn uniformly from [0,1) by a splitmix64
// stream seeded once; realizations are reproducible from the seed alone.
inline CellGridField make_noise(int n, double amplitude, std::uint64_t seed) {
  if (n <= 0) throw std::domain_error("make_noise: grid size must be positive");
  CellGridField f;
  f.nx = f.ny = n;
  f.cell_w = f.cell_h = 1.0 / n;
  f.value.resize(static_cast<size_t>(n) * n);
  SplitMix64 rng(seed);
  for (auto& v : f.value) v = std::exp(amplitude * rng.uniform01());
  detail::finalize_field(f, "make_noise");
  return f;
}

// Parameterized binary channel layout on the unit square: horizontal
// high-value rows of the given thickness repeating with the given period,
// tied together by vertical connector columns so the high region percolates
// in both directions.
struct ChannelSpec {
  int period = 8;
  int thickness = 2;
  int connector_period = 32;
  int connector_thickness = 2;

  // Fraction of high cells on an n-by-n grid, by inclusion-exclusion over
  // the row and column index sets.
  double high_fraction(int n) const {
    auto count = [n](int p, int t) {
      return (n / p) * std::min(t, p) + std::min(n % p, std::min(t, p));
    };
    double rows = count(period, thickness);
    double cols = count(connector_period, connector_thickness);
    return (rows * n + cols * n - rows * cols) / (static_cast<double>(n) * n);
  }
};

inline CellGridField make_channels(int n, double high, const ChannelSpec& spec = {}) {
  if (n <= 0) throw std::domain_error("make_channels: grid size must be positive");
  if (!(high > 0.0)) throw std::domain_error("make_channels: high value must be > 0");
  if (spec.period <= 0 || spec.connector_period <= 0 || spec.thickness < 0 ||
      spec.connector_thickness < 0)
    throw std::domain_error("make_channels: invalid channel layout");
  CellGridField f;
  f.nx = f.ny = n;
  f.cell_w = f.cell_h = 1.0 / n;
  f.value.resize(static_cast<size_t>(n) * n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      bool hi = (j % spec.period) < spec.thickness ||
                (i % spec.connector_period) < spec.connector_thickness;
      f.value[static_cast<size_t>(j) * n + i] = hi ? high : 1.0;
    }
  detail::finalize_field(f, "make_channels");
  return f;
}

// Fixed 32x32 layout: e^10 on the lower half-plane and on the one-cell-high,
// two-cell-wide bump [1/2 - 2^-5, 1/2 + 2^-5] x [1/2, 1/2 + 2^-5] sitting on
// the interface; 1 elsewhere. The bump pins a near-singular feature at the
// domain center.
inline CellGridField make_instability_field() {
  const int n = 32;
  CellGridField f;
  f.nx = f.ny = n;
  f.cell_w = f.cell_h = 1.0 / n;
  f.value.assign(static_cast<size_t>(n) * n, 1.0);
  const double hi = std::exp(10.0);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      bool lower = j < n / 2;
      bool bump = j == n / 2 && (i == n / 2 - 1 || i == n / 2);
      if (lower || bump) f.value[static_cast<size_t>(j) * n + i] = hi;
    }
  detail::finalize_field(f, "make_instability_field");
  return f;
}

// SPE10 model-2 permeability reader. The published file is whitespace-
// separated ASCII, x-fastest then y then layer, 60x220 cells per layer; the
// full file stacks 85 layers of kx, then ky, then kz (255 slabs in total).
// A file holding any positive multiple of one slab is accepted so synthetic
// single-layer files work in tests; ky/kz selection requires the full
// three-component layout. Values are used raw, without unit conversion.
inline CellGridField load_spe10(const std::string& path, int layer,
                                const std::string& component = "kx") {
  const int snx = 60, sny = 220, layers_per_component = 85;
  const long slab = static_cast<long>(snx) * sny;
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error(
        "load_spe10: cannot open '" + path +
        "'; the SPE10 model-2 permeability data is distributed separately -- "
        "download spe_perm.dat and pass its path via --spe10-file");
  std::vector<double> raw;
  raw.reserve(3 * layers_per_component * slab);
  double v;
  while (in >> v) raw.push_back(v);
  if (!in.eof()) {
    std::string tok;
    in.clear();
    in >> tok;
    throw std::runtime_error("load_spe10: non-numeric token '" + tok + "' in '" + path + "'");
  }
  const long count = static_cast<long>(raw.size());
  if (count == 0 || count % slab != 0)
    throw std::runtime_error("load_spe10: malformed value count in '" + path + "': expected a positive multiple of " +
                             std::to_string(slab) + " (60x220 cells per layer), found " +
                             std::to_string(count));
  const long total_slabs = count / slab;
  long offset;
  if (component == "kx")
    offset = 0;
  else if (component == "ky")
    offset = layers_per_component;
  else if (component == "kz")
    offset = 2 * layers_per_component;
  else
    throw std::domain_error("load_spe10: component must be kx, ky, or kz");
  if (offset > 0 && total_slabs != 3 * layers_per_component)
    throw std::runtime_error(
        "load_spe10: component '" + component + "' needs the full 255-slab model-2 file; '" +
        path + "' holds " + std::to_string(total_slabs) + " slab(s)");
  const long max_layer = total_slabs == 3 * layers_per_component ? layers_per_component : total_slabs;
  if (layer < 1 || layer > max_layer)
    throw std::out_of_range("load_spe10: layer " + std::to_string(layer) + " outside [1, " +
                            std::to_string(max_layer) + "]");
  CellGridField f;
  f.nx = snx;
  f.ny = sny;
  f.cell_w = 1.2 / snx;
  f.cell_h = 2.2 / sny;
  const long base = (offset + layer - 1) * slab;
  f.value.assign(raw.begin() + base, raw.begin() + base + slab);
  detail::finalize_field(f, "load_spe10");
  return f;
}

// Writer in the same whitespace format (one slab per call appends), for
// generating synthetic reader inputs in tests.
inline void write_field_values(const std::string& path, const std::vector<double>& values,
                               bool append = false) {
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw std::runtime_error("write_field_values: cannot open '" + path + "'");
  for (size_t i = 0; i < values.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", values[i]);
    out << buf << ((i + 1) % 6 == 0 ? '\n' : ' ');
  }
  out << '\n';
}

// Value of the coefficient on one triangle. The mesh must be aligned with
// the field grid: all three vertices of the triangle must lie inside the
// closure of the cell containing its centroid, to 1e-12.
inline double eval_on_triangle(const CellGridField& f, const TriMesh& m, int t) {
  Vec2 c = m.centroid(t);
  auto clampi = [](int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); };
  int i = clampi(static_cast<int>(std::floor((c.x - f.origin_x) / f.cell_w)), 0, f.nx - 1);
  int j = clampi(static_cast<int>(std::floor((c.y - f.origin_y) / f.cell_h)), 0, f.ny - 1);
  const double tol = 1e-12;
  const double x0 = f.origin_x + i * f.cell_w, x1 = x0 + f.cell_w;
  const double y0 = f.origin_y + j * f.cell_h, y1 = y0 + f.cell_h;
  for (int lv = 0; lv < 3; ++lv) {
    Vec2 p = m.vertex[m.tri[t][lv]];
    if (p.x < x0 - tol || p.x > x1 + tol || p.y < y0 - tol || p.y > y1 + tol)
      throw std::runtime_error(
          "coefficient grid not aligned with the fine mesh: triangle " + std::to_string(t) +
          " straddles a cell boundary");
  }
  return f.at_cell(i, j);
}

inline double eval_on_fine_triangle(const CellGridField& f, const MeshHierarchy& hier, int t) {
  return eval_on_triangle(f, hier.fine, t);
}

// ---------------------------------------------------------------------------
// Source terms.

// One piece of a source: an affine polynomial a + b*x + c*y supported on an
// axis-aligned rectangle (infinite bounds encode half-planes). Pieces are
// disjoint by construction in the factories below.
struct SourcePiece {
  double x0 = -std::numeric_limits<double>::infinity();
  double x1 = std::numeric_limits<double>::infinity();
  double y0 = -std::numeric_limits<double>::infinity();
  double y1 = std::numeric_limits<double>::infinity();
  double a = 0.0, b = 0.0, c = 0.0;
};

struct SourceField {
  std::vector<SourcePiece> pieces;
};

namespace detail {

// Clip a convex polygon against a half-plane keep_x (x <= bound or x >= bound)
// or the y analogue. Standard Sutherland-Hodgman step; exact for polygons.
inline void clip_axis(std::vector<Vec2>& poly, bool is_x, bool keep_below, double bound) {
  if (!std::isfinite(bound)) return;
  std::vector<Vec2> out;
  out.reserve(poly.size() + 2);
  auto coord = [is_x](const Vec2& p) { return is_x ? p.x : p.y; };
  auto inside = [&](const Vec2& p) {
    return keep_below ? coord(p) <= bound : coord(p) >= bound;
  };
  const size_t n = poly.size();
  for (size_t i = 0; i < n; ++i) {
    Vec2 p = poly[i], q = poly[(i + 1) % n];
    bool pin = inside(p), qin = inside(q);
    if (pin) out.push_back(p);
    if (pin != qin) {
      double tpar = (bound - coord(p)) / (coord(q) - coord(p));
      out.push_back({p.x + tpar * (q.x - p.x), p.y + tpar * (q.y - p.y)});
    }
  }
  poly.swap(out);
}

// Integral of a + b*x + c*y over a convex polygon via shoelace moments.
inline double affine_integral_over_polygon(const std::vector<Vec2>& poly, double a, double b,
                                           double c) {
  if (poly.size() < 3) return 0.0;
  double area2 = 0.0, sx6 = 0.0, sy6 = 0.0;
  const size_t n = poly.size();
  for (size_t i = 0; i < n; ++i) {
    const Vec2& p = poly[i];
    const Vec2& q = poly[(i + 1) % n];
    double w = p.x * q.y - q.x * p.y;
    area2 += w;
    sx6 += (p.x + q.x) * w;
    sy6 += (p.y + q.y) * w;
  }
  return a * (area2 / 2.0) + b * (sx6 / 6.0) + c * (sy6 / 6.0);
}

}  // namespace detail

// Exact integral of the source over one triangle: each affine piece is
// integrated over the clipped triangle-rectangle intersection, so triangles
// straddling piece boundaries are handled without any alignment requirement.
inline double integrate_source_over_triangle(const SourceField& f, Vec2 p0, Vec2 p1, Vec2 p2) {
  double total = 0.0;
  for (const SourcePiece& piece : f.pieces) {
    std::vector<Vec2> poly = {p0, p1, p2};
    detail::clip_axis(poly, true, false, piece.x0);
    detail::clip_axis(poly, true, true, piece.x1);
    detail::clip_axis(poly, false, false, piece.y0);
    detail::clip_axis(poly, false, true, piece.y1);
    total += detail::affine_integral_over_polygon(poly, piece.a, piece.b, piece.c);
  }
  return total;
}

// Per-triangle integrals of f over a whole mesh.
inline std::vector<double> source_integrals(const SourceField& f, const TriMesh& m) {
  std::vector<double> out(m.n_tris());
  for (int t = 0; t < m.n_tris(); ++t)
    out[t] = integrate_source_over_triangle(f, m.vertex[m.tri[t][0]], m.vertex[m.tri[t][1]],
                                            m.vertex[m.tri[t][2]]);
  return out;
}

// The three fixed source terms used by the experiments. All integrate to
// zero over their domains (the compatibility condition for the pure-Neumann
// flux problem):
//  - checker_quarters: +1 on [0,1/4]^2, -1 on [3/4,1]^2 (unit square);
//  - halfplane_pm1: -1 below y = 1/2, +1 above (unit square);
//  - lshape_linear: 1/2 + x - y below y = 1/2, its negative right of
//    x = 1/2, 0 elsewhere (L-shaped domain; the two regions are disjoint
//    there because the lower-right quadrant is outside the domain).
inline SourceField make_source(const std::string& tag) {
  const double inf = std::numeric_limits<double>::infinity();
  SourceField f;
  if (tag == "checker_quarters") {
    f.pieces.push_back({0.0, 0.25, 0.0, 0.25, 1.0, 0.0, 0.0});
    f.pieces.push_back({0.75, 1.0, 0.75, 1.0, -1.0, 0.0, 0.0});
  } else if (tag == "halfplane_pm1") {
    f.pieces.push_back({-inf, inf, -inf, 0.5, -1.0, 0.0, 0.0});
    f.pieces.push_back({-inf, inf, 0.5, inf, 1.0, 0.0, 0.0});
  } else if (tag == "lshape_linear") {
    f.pieces.push_back({-inf, inf, -inf, 0.5, 0.5, 1.0, -1.0});
    f.pieces.push_back({0.5, inf, 0.5, inf, -0.5, -1.0, 1.0});
  } else {
    throw std::domain_error("make_source: unknown source tag '" + tag + "'");
  }
  return f;
}

// Well-pair source: +1 on rect_lo, -1 on rect_hi. Both rectangles must lie
// inside the domain's bounding box and have equal area (else the source
// cannot integrate to zero).
inline SourceField make_source_wells(Vec2 lo_min, Vec2 lo_max, Vec2 hi_min, Vec2 hi_max,
                                     const Domain& domain) {
  auto check = [&](Vec2 mn, Vec2 mx, const char* which) {
    if (!(mn.x < mx.x) || !(mn.y < mx.y))
      throw std::domain_error(std::string("make_source_wells: degenerate ") + which + " rectangle");
    if (mn.x < -1e-12 || mn.y < -1e-12 || mx.x > domain.width + 1e-12 ||
        mx.y > domain.height + 1e-12)
      throw std::domain_error(std::string("make_source_wells: ") + which +
                              " rectangle outside the domain");
  };
  check(lo_min, lo_max, "lower");
  check(hi_min, hi_max, "upper");
  double area_lo = (lo_max.x - lo_min.x) * (lo_max.y - lo_min.y);
  double area_hi = (hi_max.x - hi_min.x) * (hi_max.y - hi_min.y);
  if (std::abs(area_lo - area_hi) > 1e-12 * (area_lo + area_hi))
    throw std::domain_error("make_source_wells: well rectangles must have equal area");
  SourceField f;
  f.pieces.push_back({lo_min.x, lo_max.x, lo_min.y, lo_max.y, 1.0, 0.0, 0.0});
  f.pieces.push_back({hi_min.x, hi_max.x, hi_min.y, hi_max.y, -1.0, 0.0, 0.0});
  return f;
}

}  // namespace mslod
