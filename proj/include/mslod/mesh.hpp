#pragma once

// Structured triangulations of rectangular and L-shaped domains, nested
// refinement hierarchies, and k-layer element patches.
//
// Every mesh is a grid of square (or rectangular) cells, each split into two
// triangles by the upper-left -> lower-right diagonal.  Edges are stored with
// the lower vertex index first and enumerated in lexicographic (lo, hi)
// order; the flux DOFs are the interior edges in that same order.  The unit
// normal of an edge is the 90-degree counterclockwise rotation of the unit
// tangent pointing from the lower to the higher vertex index.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace mslod {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::sqrt(dot(a, a)); }
// 90-degree counterclockwise rotation.
inline Vec2 rot90(Vec2 a) { return {-a.y, a.x}; }

enum class DomainKind { unit_square, l_shape, rect };

// A domain is a base grid of cells over [0,width]x[0,height]; the l_shape
// variant masks out the lower-right quadrant.  Meshes subdivide each base
// cell uniformly.
struct Domain {
  DomainKind kind = DomainKind::unit_square;
  int base_nx = 1;
  int base_ny = 1;
  double width = 1.0;
  double height = 1.0;

  static Domain unit_square() { return Domain{DomainKind::unit_square, 1, 1, 1.0, 1.0}; }
  // Coarsest L-shape is the 2x2-cell grid on [0,1]^2 minus the cell
  // [1/2,1]x[0,1/2]; its cell side is 1/2.
  static Domain l_shape() { return Domain{DomainKind::l_shape, 2, 2, 1.0, 1.0}; }
  static Domain rect(int nx, int ny, double width, double height) {
    if (nx < 1 || ny < 1) throw std::invalid_argument("rect domain: nx, ny must be >= 1");
    if (!(width > 0.0) || !(height > 0.0))
      throw std::invalid_argument("rect domain: width, height must be positive");
    return Domain{DomainKind::rect, nx, ny, width, height};
  }

  // Is grid cell (i, j) part of the domain when the full grid is nx-by-ny?
  bool cell_active(int i, int j, int nx, int ny) const {
    if (i < 0 || j < 0 || i >= nx || j >= ny) return false;
    if (kind == DomainKind::l_shape) return !(i >= nx / 2 && j < ny / 2);
    return true;
  }

  double area() const {
    double a = width * height;
    return kind == DomainKind::l_shape ? 0.75 * a : a;
  }

  std::string name() const {
    switch (kind) {
      case DomainKind::unit_square: return "unit_square";
      case DomainKind::l_shape: return "l_shape";
      case DomainKind::rect: return "rect";
    }
    return "?";
  }
};

struct TriMesh {
  Domain domain;
  int factor = 1;  // subdivisions per base cell side
  int nx = 0, ny = 0;  // lattice cell counts (base_nx*factor, base_ny*factor)
  double cw = 0.0, ch = 0.0;  // cell width/height
  double size_label = 0.0;    // the mesh-size label h (cell side; max side for rect)

  std::vector<Vec2> vertex;
  std::vector<std::array<int, 2>> vertex_ij;  // vertex -> lattice (i, j)
  std::vector<int> lattice_vertex;            // (nx+1)*(ny+1) lattice -> vertex or -1
  std::vector<char> vertex_boundary;

  std::vector<std::array<int, 3>> tri;  // CCW vertex ids
  std::vector<double> tri_area;
  std::vector<int> tri_cell;    // linear cell index j*nx + i
  std::vector<char> tri_upper;  // 0 lower (LL,LR,UL), 1 upper (LR,UR,UL)
  std::vector<std::array<int, 2>> cell_tri;  // cell -> {lower, upper} or {-1,-1}

  std::vector<std::array<int, 2>> edge;  // (lo, hi) vertex ids, lexicographic order
  std::vector<double> edge_len;
  std::vector<std::array<int, 2>> edge_tri;  // incident triangles, second = -1 on boundary
  std::vector<char> edge_boundary;
  std::vector<std::array<int, 3>> tri_edge;  // edge opposite local vertex i
  std::vector<std::array<int, 3>> tri_sign;  // sign of n_e vs outward normal of tri

  std::vector<int> edge_dof;  // edge -> interior DOF index or -1
  std::vector<int> dof_edge;
  int n_flux_dofs = 0;

  // CSR vertex -> incident triangles
  std::vector<int> vertex_tri_ptr;
  std::vector<int> vertex_tri;

  int n_tris() const { return static_cast<int>(tri.size()); }
  int n_edges() const { return static_cast<int>(edge.size()); }
  int n_vertices() const { return static_cast<int>(vertex.size()); }

  int lattice_id(int i, int j) const {
    if (i < 0 || j < 0 || i > nx || j > ny) return -1;
    return lattice_vertex[static_cast<std::size_t>(j) * (nx + 1) + i];
  }

  // Orientation of edge e's fixed normal relative to the outward normal of
  // triangle t; zero when e is not an edge of t.
  int sign_on_edge(int t, int e) const {
    for (int l = 0; l < 3; ++l)
      if (tri_edge[t][l] == e) return tri_sign[t][l];
    return 0;
  }

  Vec2 edge_normal(int e) const {
    Vec2 t = vertex[edge[e][1]] - vertex[edge[e][0]];
    return (1.0 / norm(t)) * rot90(t);
  }

  Vec2 edge_midpoint(int e) const {
    return 0.5 * (vertex[edge[e][0]] + vertex[edge[e][1]]);
  }

  Vec2 centroid(int t) const {
    return (1.0 / 3.0) * (vertex[tri[t][0]] + vertex[tri[t][1]] + vertex[tri[t][2]]);
  }

  double total_area() const {
    double s = 0.0;
    for (double a : tri_area) s += a;
    return s;
  }
};

inline TriMesh build_grid_mesh(const Domain& domain, int factor) {
  if (factor < 1) throw std::invalid_argument("mesh factor must be >= 1");
  TriMesh m;
  m.domain = domain;
  m.factor = factor;
  m.nx = domain.base_nx * factor;
  m.ny = domain.base_ny * factor;
  m.cw = domain.width / m.nx;
  m.ch = domain.height / m.ny;
  m.size_label = std::max(m.cw, m.ch);

  const int nx = m.nx, ny = m.ny;

  // Vertices: lattice points incident to at least one active cell, numbered
  // row-major (j outer, i inner) so ids increase lexicographically in (j, i).
  m.lattice_vertex.assign(static_cast<std::size_t>(nx + 1) * (ny + 1), -1);
  auto any_active_around = [&](int i, int j) {
    return domain.cell_active(i - 1, j - 1, nx, ny) || domain.cell_active(i, j - 1, nx, ny) ||
           domain.cell_active(i - 1, j, nx, ny) || domain.cell_active(i, j, nx, ny);
  };
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i)
      if (any_active_around(i, j)) {
        m.lattice_vertex[static_cast<std::size_t>(j) * (nx + 1) + i] =
            static_cast<int>(m.vertex.size());
        m.vertex.push_back({i * m.cw, j * m.ch});
        m.vertex_ij.push_back({i, j});
      }

  // Triangles: two per active cell, lower (LL,LR,UL) then upper (LR,UR,UL).
  m.cell_tri.assign(static_cast<std::size_t>(nx) * ny, {-1, -1});
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      if (!domain.cell_active(i, j, nx, ny)) continue;
      int ll = m.lattice_id(i, j), lr = m.lattice_id(i + 1, j);
      int ul = m.lattice_id(i, j + 1), ur = m.lattice_id(i + 1, j + 1);
      int t0 = static_cast<int>(m.tri.size());
      m.tri.push_back({ll, lr, ul});
      m.tri.push_back({lr, ur, ul});
      m.tri_cell.push_back(j * nx + i);
      m.tri_cell.push_back(j * nx + i);
      m.tri_upper.push_back(0);
      m.tri_upper.push_back(1);
      m.cell_tri[static_cast<std::size_t>(j) * nx + i] = {t0, t0 + 1};
    }

  m.tri_area.resize(m.tri.size());
  for (std::size_t t = 0; t < m.tri.size(); ++t) {
    Vec2 a = m.vertex[m.tri[t][0]], b = m.vertex[m.tri[t][1]], c = m.vertex[m.tri[t][2]];
    double ar = 0.5 * cross(b - a, c - a);
    if (!(ar > 0.0)) throw std::logic_error("mesh construction produced a non-CCW triangle");
    m.tri_area[t] = ar;
  }

  // Edges: gather the three vertex pairs of each triangle, sort
  // lexicographically, merge duplicates.
  struct ERec {
    int lo, hi, tri, local;
  };
  std::vector<ERec> recs;
  recs.reserve(m.tri.size() * 3);
  for (int t = 0; t < m.n_tris(); ++t)
    for (int l = 0; l < 3; ++l) {
      // local edge l is opposite local vertex l
      int a = m.tri[t][(l + 1) % 3], b = m.tri[t][(l + 2) % 3];
      recs.push_back({std::min(a, b), std::max(a, b), t, l});
    }
  std::sort(recs.begin(), recs.end(), [](const ERec& a, const ERec& b) {
    if (a.lo != b.lo) return a.lo < b.lo;
    if (a.hi != b.hi) return a.hi < b.hi;
    return a.tri < b.tri;
  });

  m.tri_edge.assign(m.tri.size(), {-1, -1, -1});
  m.tri_sign.assign(m.tri.size(), {0, 0, 0});
  for (std::size_t r = 0; r < recs.size();) {
    std::size_t r2 = r;
    while (r2 < recs.size() && recs[r2].lo == recs[r].lo && recs[r2].hi == recs[r].hi) ++r2;
    int e = static_cast<int>(m.edge.size());
    m.edge.push_back({recs[r].lo, recs[r].hi});
    if (r2 - r > 2) throw std::logic_error("mesh edge shared by more than two triangles");
    std::array<int, 2> et = {recs[r].tri, r2 - r == 2 ? recs[r + 1].tri : -1};
    m.edge_tri.push_back(et);
    m.edge_boundary.push_back(r2 - r == 1);
    for (std::size_t q = r; q < r2; ++q) m.tri_edge[recs[q].tri][recs[q].local] = e;
    r = r2;
  }

  m.edge_len.resize(m.edge.size());
  for (int e = 0; e < m.n_edges(); ++e)
    m.edge_len[e] = norm(m.vertex[m.edge[e][1]] - m.vertex[m.edge[e][0]]);

  // Orientation sign of the fixed edge normal vs each triangle's outward
  // direction at that edge.
  for (int t = 0; t < m.n_tris(); ++t)
    for (int l = 0; l < 3; ++l) {
      int e = m.tri_edge[t][l];
      Vec2 n = m.edge_normal(e);
      Vec2 outward = m.edge_midpoint(e) - m.vertex[m.tri[t][l]];
      double d = dot(n, outward);
      if (d == 0.0) throw std::logic_error("degenerate triangle/edge orientation");
      m.tri_sign[t][l] = d > 0.0 ? 1 : -1;
    }

  // Flux DOFs: interior edges in edge order (lexicographic by construction).
  m.edge_dof.assign(m.edge.size(), -1);
  for (int e = 0; e < m.n_edges(); ++e)
    if (!m.edge_boundary[e]) {
      m.edge_dof[e] = m.n_flux_dofs++;
      m.dof_edge.push_back(e);
    }

  m.vertex_boundary.assign(m.vertex.size(), 0);
  for (int e = 0; e < m.n_edges(); ++e)
    if (m.edge_boundary[e]) {
      m.vertex_boundary[m.edge[e][0]] = 1;
      m.vertex_boundary[m.edge[e][1]] = 1;
    }

  // vertex -> triangle adjacency (CSR)
  m.vertex_tri_ptr.assign(m.vertex.size() + 1, 0);
  for (int t = 0; t < m.n_tris(); ++t)
    for (int v : m.tri[t]) ++m.vertex_tri_ptr[v + 1];
  for (std::size_t v = 1; v < m.vertex_tri_ptr.size(); ++v)
    m.vertex_tri_ptr[v] += m.vertex_tri_ptr[v - 1];
  m.vertex_tri.resize(m.vertex_tri_ptr.back());
  {
    std::vector<int> fill(m.vertex.size(), 0);
    for (int t = 0; t < m.n_tris(); ++t)
      for (int v : m.tri[t]) m.vertex_tri[m.vertex_tri_ptr[v] + fill[v]++] = t;
  }

  // Sanity: total area must match the domain area.
  double total = m.total_area();
  if (std::abs(total - domain.area()) > 1e-12 * domain.area())
    throw std::logic_error("mesh area does not match domain area");
  return m;
}

inline TriMesh build_structured_mesh(const Domain& domain, int level) {
  if (level < 0) throw std::invalid_argument("mesh level must be >= 0");
  if (level > 30) throw std::invalid_argument("mesh level too large");
  return build_grid_mesh(domain, 1 << level);
}

// Classification of a fine edge relative to the coarse mesh.
struct FineEdgeParent {
  int coarse_edge = -1;  // >= 0 when the fine edge lies on a coarse edge
  int rel_sign = 0;      // n_e . n_E for such edges
  int host_tri = -1;     // coarse triangle containing the edge otherwise
};

struct MeshHierarchy {
  TriMesh coarse;
  TriMesh fine;
  int m = 1;  // fine cells per coarse cell side
  int coarse_level = -1, fine_level = -1;  // set by the power-of-two builder

  std::vector<int> fine_tri_parent;
  std::vector<std::vector<int>> coarse_tri_children;
  std::vector<FineEdgeParent> fine_edge_parent;
  // Per coarse edge: (fine edge, rel sign) ordered from the coarse edge's
  // lower vertex to its higher vertex.
  std::vector<std::vector<std::pair<int, int>>> coarse_edge_fine;
  std::vector<int> coarse_vertex_fine;  // coarse vertex -> coincident fine vertex
  std::vector<int> fine_vertex_coarse;  // fine vertex -> coarse vertex or -1
};

// Builds the hierarchy for an arbitrary integer subdivision factor.  Each
// coarse cell becomes an (m x m)-block of fine cells; because all cells use
// the same diagonal direction, the fine triangulation is a conforming nested
// refinement of the coarse one.
inline MeshHierarchy build_hierarchy_factors(const Domain& domain, int coarse_factor,
                                             int fine_factor) {
  if (coarse_factor < 1 || fine_factor <= coarse_factor)
    throw std::invalid_argument("hierarchy: need 1 <= coarse_factor < fine_factor");
  if (fine_factor % coarse_factor != 0)
    throw std::invalid_argument("hierarchy: fine_factor must be a multiple of coarse_factor");
  MeshHierarchy h;
  h.coarse = build_grid_mesh(domain, coarse_factor);
  h.fine = build_grid_mesh(domain, fine_factor);
  h.m = fine_factor / coarse_factor;
  const int m = h.m;
  const TriMesh& C = h.coarse;
  const TriMesh& F = h.fine;

  // Fine triangle -> coarse triangle.  Subcell (a, b) of a coarse cell lies
  // below the coarse diagonal when a+b <= m-2, above when a+b >= m, and is
  // split by it when a+b == m-1 (then its own diagonal is part of the coarse
  // one).
  h.fine_tri_parent.resize(F.n_tris());
  h.coarse_tri_children.assign(C.n_tris(), {});
  for (int t = 0; t < F.n_tris(); ++t) {
    int cell = F.tri_cell[t];
    int I = cell % F.nx, J = cell / F.nx;
    int ci = I / m, cj = J / m, a = I % m, b = J % m;
    auto cc = C.cell_tri[static_cast<std::size_t>(cj) * C.nx + ci];
    int s = a + b;
    int parent;
    if (s <= m - 2) parent = cc[0];
    else if (s >= m) parent = cc[1];
    else parent = F.tri_upper[t] ? cc[1] : cc[0];
    if (parent < 0) throw std::logic_error("hierarchy: fine triangle in inactive coarse cell");
    h.fine_tri_parent[t] = parent;
    h.coarse_tri_children[parent].push_back(t);
  }

  // Coarse vertex <-> fine vertex correspondence.
  h.coarse_vertex_fine.resize(C.n_vertices());
  h.fine_vertex_coarse.assign(F.n_vertices(), -1);
  for (int v = 0; v < C.n_vertices(); ++v) {
    auto [i, j] = C.vertex_ij[v];
    int fv = F.lattice_id(i * m, j * m);
    if (fv < 0) throw std::logic_error("hierarchy: coarse vertex missing on fine lattice");
    h.coarse_vertex_fine[v] = fv;
    h.fine_vertex_coarse[fv] = v;
  }

  // Helper: coarse edge id from two coarse lattice points.
  auto coarse_edge_of = [&](int i1, int j1, int i2, int j2) {
    int v1 = C.lattice_id(i1, j1), v2 = C.lattice_id(i2, j2);
    if (v1 < 0 || v2 < 0) return -1;
    int lo = std::min(v1, v2), hi = std::max(v1, v2);
    // binary search in the lexicographically sorted edge list
    int l = 0, r = C.n_edges();
    while (l < r) {
      int mid = (l + r) / 2;
      auto e = C.edge[mid];
      if (e[0] < lo || (e[0] == lo && e[1] < hi)) l = mid + 1;
      else r = mid;
    }
    if (l < C.n_edges() && C.edge[l][0] == lo && C.edge[l][1] == hi) return l;
    return -1;
  };

  // Classify each fine edge.
  h.fine_edge_parent.assign(F.n_edges(), {});
  h.coarse_edge_fine.assign(C.n_edges(), {});
  for (int e = 0; e < F.n_edges(); ++e) {
    auto [vlo, vhi] = F.edge[e];
    auto [i1, j1] = F.vertex_ij[vlo];
    auto [i2, j2] = F.vertex_ij[vhi];
    int ce = -1;      // coarse edge the fine edge lies on
    int host = -1;    // else: hosting coarse triangle
    if (j1 == j2 && i2 == i1 + 1) {
      // horizontal edge
      int a = i1 % m, b = j1 % m, ci = i1 / m, cj = j1 / m;
      if (b == 0) {
        ce = coarse_edge_of(ci, cj, ci + 1, cj);
      } else {
        auto cc = C.cell_tri[static_cast<std::size_t>(cj) * C.nx + ci];
        host = (a + b + 1 <= m) ? cc[0] : cc[1];
      }
    } else if (i1 == i2 && j2 == j1 + 1) {
      // vertical edge
      int a = i1 % m, b = j1 % m, ci = i1 / m, cj = j1 / m;
      if (a == 0) {
        ce = coarse_edge_of(ci, cj, ci, cj + 1);
      } else {
        auto cc = C.cell_tri[static_cast<std::size_t>(cj) * C.nx + ci];
        host = (a + b + 1 <= m) ? cc[0] : cc[1];
      }
    } else if (i2 == i1 - 1 && j2 == j1 + 1) {
      // diagonal edge of fine cell (i2, j1): from its LR corner to its UL corner
      int I = i2, J = j1;
      int a = I % m, b = J % m, ci = I / m, cj = J / m;
      if (a + b == m - 1) {
        ce = coarse_edge_of(ci + 1, cj, ci, cj + 1);
      } else {
        auto cc = C.cell_tri[static_cast<std::size_t>(cj) * C.nx + ci];
        host = (a + b <= m - 2) ? cc[0] : cc[1];
      }
    } else {
      throw std::logic_error("hierarchy: unexpected fine edge direction");
    }
    if (ce >= 0) {
      // relative sign of the fine normal vs the coarse normal (collinear edges)
      Vec2 nf = F.edge_normal(e);
      Vec2 nc = C.edge_normal(ce);
      double d = dot(nf, nc);
      if (std::abs(std::abs(d) - 1.0) > 1e-12)
        throw std::logic_error("hierarchy: fine edge not collinear with its coarse edge");
      h.fine_edge_parent[e].coarse_edge = ce;
      h.fine_edge_parent[e].rel_sign = d > 0 ? 1 : -1;
      h.coarse_edge_fine[ce].push_back({e, h.fine_edge_parent[e].rel_sign});
    } else {
      if (host < 0) throw std::logic_error("hierarchy: interior fine edge without host triangle");
      h.fine_edge_parent[e].host_tri = host;
    }
  }

  // Order each coarse edge's fine edges from the coarse lower vertex outward,
  // and check the subdivision count and length sum.
  for (int ce = 0; ce < C.n_edges(); ++ce) {
    auto& lst = h.coarse_edge_fine[ce];
    Vec2 p0 = C.vertex[C.edge[ce][0]];
    std::sort(lst.begin(), lst.end(), [&](const auto& a, const auto& b) {
      return dot(F.edge_midpoint(a.first) - p0, F.edge_midpoint(a.first) - p0) <
             dot(F.edge_midpoint(b.first) - p0, F.edge_midpoint(b.first) - p0);
    });
    if (static_cast<int>(lst.size()) != m)
      throw std::logic_error("hierarchy: coarse edge does not split into m fine edges");
    double len = 0.0;
    for (auto& [fe, s] : lst) len += F.edge_len[fe];
    if (std::abs(len - C.edge_len[ce]) > 1e-12 * C.edge_len[ce])
      throw std::logic_error("hierarchy: fine edge lengths do not sum to the coarse length");
  }
  for (auto& kids : h.coarse_tri_children) std::sort(kids.begin(), kids.end());
  return h;
}

inline MeshHierarchy build_hierarchy(const Domain& domain, int coarse_level, int fine_level) {
  if (coarse_level < 0) throw std::invalid_argument("hierarchy: coarse_level must be >= 0");
  if (fine_level <= coarse_level)
    throw std::invalid_argument("hierarchy: fine_level must exceed coarse_level");
  MeshHierarchy h = build_hierarchy_factors(domain, 1 << coarse_level, 1 << fine_level);
  h.coarse_level = coarse_level;
  h.fine_level = fine_level;
  return h;
}

// k-layer element patch around a coarse triangle: k iterations of
// vertex-neighborhood closure, plus the fine-level index sets every patch
// solve needs.
struct Patch {
  int seed_tri = -1;
  int k = 0;
  std::vector<int> tris;       // coarse triangles, sorted
  std::vector<char> in_patch;  // coarse triangle bitmap
  std::vector<int> interior_coarse_edges;
  std::vector<int> fine_tris;   // children of the patch triangles, sorted
  std::vector<int> fine_dofs;   // fine flux DOFs interior to the patch, sorted
  std::vector<int> free_vertices;  // fine vertices free in the stream-function
                                   // reduction: strictly inside the patch, off
                                   // the domain boundary, not on the coarse
                                   // vertex lattice
  bool saturated = false;
};

inline Patch patch(const MeshHierarchy& h, int seed_tri, int k) {
  const TriMesh& C = h.coarse;
  const TriMesh& F = h.fine;
  if (seed_tri < 0 || seed_tri >= C.n_tris())
    throw std::invalid_argument("patch: seed triangle out of range");
  if (k < 0) throw std::invalid_argument("patch: layer count must be >= 0");

  Patch p;
  p.seed_tri = seed_tri;
  p.k = k;
  p.in_patch.assign(C.n_tris(), 0);
  p.in_patch[seed_tri] = 1;
  std::vector<int> frontier = {seed_tri};
  std::vector<char> vmark(C.n_vertices(), 0);
  for (int layer = 0; layer < k && !frontier.empty(); ++layer) {
    std::vector<int> grown;
    for (int t : frontier)
      for (int v : C.tri[t]) {
        if (vmark[v]) continue;
        vmark[v] = 1;
        for (int p2 = C.vertex_tri_ptr[v]; p2 < C.vertex_tri_ptr[v + 1]; ++p2) {
          int t2 = C.vertex_tri[p2];
          if (!p.in_patch[t2]) {
            p.in_patch[t2] = 1;
            grown.push_back(t2);
          }
        }
      }
    frontier.swap(grown);
  }
  for (int t = 0; t < C.n_tris(); ++t)
    if (p.in_patch[t]) p.tris.push_back(t);
  p.saturated = static_cast<int>(p.tris.size()) == C.n_tris();

  for (int e = 0; e < C.n_edges(); ++e) {
    auto [t0, t1] = C.edge_tri[e];
    if (t1 >= 0 && p.in_patch[t0] && p.in_patch[t1]) p.interior_coarse_edges.push_back(e);
  }

  for (int t : p.tris)
    for (int ft : h.coarse_tri_children[t]) p.fine_tris.push_back(ft);
  std::sort(p.fine_tris.begin(), p.fine_tris.end());

  auto fine_tri_inside = [&](int ft) { return ft >= 0 && p.in_patch[h.fine_tri_parent[ft]]; };

  // Fine DOFs: interior fine edges whose both incident triangles lie in the
  // patch (edges on the patch boundary or the domain boundary carry no DOF
  // in the zero-flux patch space).
  std::vector<char> seen(F.n_edges(), 0);
  for (int ft : p.fine_tris)
    for (int e : F.tri_edge[ft]) {
      if (seen[e]) continue;
      seen[e] = 1;
      if (F.edge_dof[e] < 0) continue;
      if (fine_tri_inside(F.edge_tri[e][0]) && fine_tri_inside(F.edge_tri[e][1]))
        p.fine_dofs.push_back(F.edge_dof[e]);
    }
  std::sort(p.fine_dofs.begin(), p.fine_dofs.end());

  // Free vertices for the stream-function reduction.
  std::vector<char> vseen(F.n_vertices(), 0);
  for (int ft : p.fine_tris)
    for (int v : F.tri[ft]) {
      if (vseen[v]) continue;
      vseen[v] = 1;
      if (F.vertex_boundary[v]) continue;
      if (h.fine_vertex_coarse[v] >= 0) continue;
      bool inside = true;
      for (int q = F.vertex_tri_ptr[v]; q < F.vertex_tri_ptr[v + 1] && inside; ++q)
        inside = fine_tri_inside(F.vertex_tri[q]);
      if (inside) p.free_vertices.push_back(v);
    }
  std::sort(p.free_vertices.begin(), p.free_vertices.end());
  return p;
}

// Smallest k at which every patch covers the whole coarse mesh.  Pure
// coarse-level BFS: for each seed, count vertex-closure layers until all
// triangles are reached; return the maximum over seeds.
inline int saturation_layers(const TriMesh& C) {
  int worst = 0;
  std::vector<char> in(C.n_tris());
  std::vector<char> vmark(C.n_vertices());
  for (int seed = 0; seed < C.n_tris(); ++seed) {
    std::fill(in.begin(), in.end(), 0);
    std::fill(vmark.begin(), vmark.end(), 0);
    in[seed] = 1;
    int covered = 1, layers = 0;
    std::vector<int> frontier = {seed};
    while (covered < C.n_tris()) {
      ++layers;
      std::vector<int> grown;
      for (int t : frontier)
        for (int v : C.tri[t]) {
          if (vmark[v]) continue;
          vmark[v] = 1;
          for (int q = C.vertex_tri_ptr[v]; q < C.vertex_tri_ptr[v + 1]; ++q) {
            int t2 = C.vertex_tri[q];
            if (!in[t2]) {
              in[t2] = 1;
              ++covered;
              grown.push_back(t2);
            }
          }
        }
      if (grown.empty()) throw std::logic_error("saturation_layers: mesh not vertex-connected");
      frontier.swap(grown);
    }
    worst = std::max(worst, layers);
  }
  return worst;
}

// Plain-text mesh dump: `v x y` and `t i j k` lines.
inline std::string dump_mesh_text(const TriMesh& m) {
  std::string out;
  char buf[128];
  for (const Vec2& v : m.vertex) {
    std::snprintf(buf, sizeof buf, "v %.17g %.17g\n", v.x, v.y);
    out += buf;
  }
  for (const auto& t : m.tri) {
    std::snprintf(buf, sizeof buf, "t %d %d %d\n", t[0], t[1], t[2]);
    out += buf;
  }
  return out;
}

}  // namespace mslod
