// Experiment harness: scenario runners that produce result tables (CSV) and
// log-log convergence plots (self-contained SVG), plus the configuration
// record they all share.
//
// Levels are given as mesh-size exponents p (cell side 2^-p), uniform across
// domains; the translation to builder levels accounts for the L-shape's 2x2
// base grid.  Scenario tags embed the variant (coefficient, C value, ideal
// rerun, ...) so that every (scenario, C) series maps to one CSV group and
// one plot polyline.  Failures are recorded per row and the run continues.
//
// Reproducibility: rows carry a hash of the canonical configuration string;
// identical configurations (thread count and output directory excluded)
// produce byte-identical CSV files.
#pragma once

#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "mslod/lod.hpp"

namespace mslod {

// ---------------------------------------------------------------------------
// Configuration.

struct ExperimentConfig {
  std::string scenario;  // convergence|instability|lshape|spe10|decay|infsup|oracle
  std::string domain = "unit_square";  // unit_square|l_shape (spe10 uses its own)
  std::string coeff = "noise";         // constant|noise|channels|instability|spe10
  std::uint64_t seed = 1;
  int coarse_level = -1;  // mesh-size exponent of H; -1 = scenario default sweep
  int fine_level = -1;    // mesh-size exponent of h; -1 = scenario default
  double C = 0.5;         // localization constant for choose_k
  int k = -1;             // fixed layer count; -1 = scenario rule
  int ell = -2;           // source-correction layers; -1 = none, -2 = scenario default
  double tol = 1e-10;     // solver tolerance
  int threads = 1;        // accepted for interface compatibility; solves are
                          // deterministic and single-threaded, so it is ignored
  std::string out = ".";
  std::string spe10_file;
  std::string spe10_component = "kx";
  int spe10_layer = 85;
  bool full = false;  // full-size levels instead of the quick desk defaults
};

namespace detail {

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

// Canonical key=value serialization of everything that defines the
// experiment.  Output directory and thread count are plumbing, not part of
// the experiment identity, and are excluded.
inline std::string canonical_config_string(const ExperimentConfig& c) {
  std::ostringstream s;
  s << "scenario=" << c.scenario << "\n"
    << "domain=" << c.domain << "\n"
    << "coeff=" << c.coeff << "\n"
    << "seed=" << c.seed << "\n"
    << "coarse_level=" << c.coarse_level << "\n"
    << "fine_level=" << c.fine_level << "\n"
    << "C=" << detail::format_double(c.C) << "\n"
    << "k=" << c.k << "\n"
    << "ell=" << c.ell << "\n"
    << "tol=" << detail::format_double(c.tol) << "\n"
    << "spe10_file=" << c.spe10_file << "\n"
    << "spe10_component=" << c.spe10_component << "\n"
    << "spe10_layer=" << c.spe10_layer << "\n"
    << "full=" << (c.full ? 1 : 0) << "\n";
  return s.str();
}

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string config_hash(const ExperimentConfig& c) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, fnv1a64(canonical_config_string(c)));
  return buf;
}

// ---------------------------------------------------------------------------
// Result rows.

struct ResultRow {
  std::string scenario;  // series tag, e.g. "convergence-noise-C0.50"
  double H = 0.0;
  double h = 0.0;
  int k = 0;
  int ell = -1;  // -1 = no source correction
  double err_energy = std::numeric_limits<double>::quiet_NaN();
  double err_l2 = std::numeric_limits<double>::quiet_NaN();
  double div_residual = std::numeric_limits<double>::quiet_NaN();
  std::string config_hash;

  // Diagnostics beyond the CSV columns.
  int corrector_count = 0;
  double wall_reference = 0.0;
  double wall_correctors = 0.0;
  double wall_solve = 0.0;
  double max_flux_ratio = 0.0;  // multiscale / reference centroid-flux maxima
  std::string error;            // nonempty when the solve failed
};

inline const char* kCsvHeader = "scenario,H,h,k,ell,err_energy,err_l2,div_residual,config_hash";

inline void emit_csv(const std::vector<ResultRow>& rows, const std::string& path) {
  if (rows.empty()) throw std::runtime_error("emit_csv: no rows to write");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("emit_csv: cannot open " + path);
  out << kCsvHeader << "\n";
  for (const ResultRow& r : rows) {
    out << r.scenario << ',' << detail::format_double(r.H) << ',' << detail::format_double(r.h)
        << ',' << r.k << ',' << r.ell << ',' << detail::format_double(r.err_energy) << ','
        << detail::format_double(r.err_l2) << ',' << detail::format_double(r.div_residual) << ','
        << r.config_hash << "\n";
  }
  if (!out) throw std::runtime_error("emit_csv: write failed for " + path);
}

inline std::vector<ResultRow> parse_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("parse_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader)
    throw std::runtime_error("parse_csv: bad header in " + path);
  std::vector<ResultRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::string field;
    std::istringstream ls(line);
    while (std::getline(ls, field, ',')) f.push_back(field);
    if (f.size() != 9)
      throw std::runtime_error("parse_csv: expected 9 fields, got " + std::to_string(f.size()) +
                               " in line: " + line);
    ResultRow r;
    r.scenario = f[0];
    r.H = std::strtod(f[1].c_str(), nullptr);
    r.h = std::strtod(f[2].c_str(), nullptr);
    r.k = static_cast<int>(std::strtol(f[3].c_str(), nullptr, 10));
    r.ell = static_cast<int>(std::strtol(f[4].c_str(), nullptr, 10));
    r.err_energy = std::strtod(f[5].c_str(), nullptr);
    r.err_l2 = std::strtod(f[6].c_str(), nullptr);
    r.div_residual = std::strtod(f[7].c_str(), nullptr);
    r.config_hash = f[8];
    rows.push_back(std::move(r));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// SVG plot.

struct PlotSpec {
  std::string title;
  std::string x_label = "H";  // "H" plots row.H on the x axis, anything else row.h
  std::string y_label = "relative energy error";
  std::vector<double> slopes = {2.0};  // reference slope lines (error ~ x^slope)
};

// Log-log plot: one polyline per distinct scenario tag (series), dashed
// reference slope lines, decade ticks.  Rows without a finite positive error
// are skipped.  Self-contained SVG, no external dependencies.
inline void emit_svg_plot(const std::vector<ResultRow>& rows, const std::string& path,
                          const PlotSpec& spec = {}) {
  if (rows.empty()) throw std::runtime_error("emit_svg_plot: no rows to plot");
  const bool x_is_H = spec.x_label == "H";

  std::vector<std::string> order;
  std::map<std::string, std::vector<std::pair<double, double>>> series;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const ResultRow& r : rows) {
    const double x = x_is_H ? r.H : r.h;
    const double y = r.err_energy;
    if (!(x > 0.0) || !(y > 0.0) || !std::isfinite(y)) continue;
    if (!series.count(r.scenario)) order.push_back(r.scenario);
    series[r.scenario].emplace_back(x, y);
    xmin = std::min(xmin, x), xmax = std::max(xmax, x);
    ymin = std::min(ymin, y), ymax = std::max(ymax, y);
  }
  if (order.empty()) throw std::runtime_error("emit_svg_plot: no plottable rows");
  if (xmin == xmax) xmin *= 0.5, xmax *= 2.0;
  if (ymin == ymax) ymin *= 0.5, ymax *= 2.0;

  const double W = 720, Hgt = 540, ml = 80, mr = 24, mt = 40, mb = 64;
  const double lx0 = std::log10(xmin), lx1 = std::log10(xmax);
  const double ly0 = std::log10(ymin) - 0.15, ly1 = std::log10(ymax) + 0.15;
  auto X = [&](double x) { return ml + (std::log10(x) - lx0) / (lx1 - lx0) * (W - ml - mr); };
  auto Y = [&](double y) {
    return Hgt - mb - (std::log10(y) - ly0) / (ly1 - ly0) * (Hgt - mt - mb);
  };

  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << Hgt
      << "\" viewBox=\"0 0 " << W << " " << Hgt << "\">\n"
      << "<rect x=\"0\" y=\"0\" width=\"" << W << "\" height=\"" << Hgt
      << "\" fill=\"white\"/>\n"
      << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << W - ml - mr << "\" height=\""
      << Hgt - mt - mb << "\" fill=\"none\" stroke=\"#444\"/>\n";
  if (!spec.title.empty())
    svg << "<text x=\"" << W / 2 << "\" y=\"" << mt - 14
        << "\" text-anchor=\"middle\" font-size=\"16\">" << spec.title << "</text>\n";

  for (int d = static_cast<int>(std::ceil(lx0)); d <= static_cast<int>(std::floor(lx1)); ++d) {
    const double x = X(std::pow(10.0, d));
    svg << "<line x1=\"" << x << "\" y1=\"" << Hgt - mb << "\" x2=\"" << x << "\" y2=\""
        << Hgt - mb + 6 << "\" stroke=\"#444\"/>\n"
        << "<text x=\"" << x << "\" y=\"" << Hgt - mb + 22
        << "\" text-anchor=\"middle\" font-size=\"12\">1e" << d << "</text>\n";
  }
  for (int d = static_cast<int>(std::ceil(ly0)); d <= static_cast<int>(std::floor(ly1)); ++d) {
    const double y = Y(std::pow(10.0, d));
    svg << "<line x1=\"" << ml - 6 << "\" y1=\"" << y << "\" x2=\"" << ml << "\" y2=\"" << y
        << "\" stroke=\"#444\"/>\n"
        << "<text x=\"" << ml - 10 << "\" y=\"" << y + 4
        << "\" text-anchor=\"end\" font-size=\"12\">1e" << d << "</text>\n";
  }
  svg << "<text x=\"" << (ml + W - mr) / 2 << "\" y=\"" << Hgt - 16
      << "\" text-anchor=\"middle\" font-size=\"14\">" << spec.x_label << "</text>\n"
      << "<text x=\"20\" y=\"" << (mt + Hgt - mb) / 2
      << "\" text-anchor=\"middle\" font-size=\"14\" transform=\"rotate(-90 20 "
      << (mt + Hgt - mb) / 2 << ")\">" << spec.y_label << "</text>\n";

  // Reference slope lines through the geometric center of the data.
  const double xc = std::sqrt(xmin * xmax), yc = std::sqrt(ymin * ymax);
  for (double s : spec.slopes) {
    const auto y_at = [&](double x) { return yc * std::pow(x / xc, s); };
    svg << "<line x1=\"" << X(xmin) << "\" y1=\"" << Y(y_at(xmin)) << "\" x2=\"" << X(xmax)
        << "\" y2=\"" << Y(y_at(xmax))
        << "\" stroke=\"#999\" stroke-dasharray=\"6 4\"/>\n"
        << "<text x=\"" << X(xmax) - 4 << "\" y=\"" << Y(y_at(xmax)) - 6
        << "\" text-anchor=\"end\" font-size=\"12\" fill=\"#777\">slope " << s << "</text>\n";
  }

  int idx = 0;
  for (const std::string& name : order) {
    auto pts = series[name];
    std::sort(pts.begin(), pts.end());
    const char* color = palette[idx % 8];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (auto [x, y] : pts) svg << X(x) << ',' << Y(y) << ' ';
    svg << "\"/>\n";
    for (auto [x, y] : pts)
      svg << "<circle cx=\"" << X(x) << "\" cy=\"" << Y(y) << "\" r=\"3\" fill=\"" << color
          << "\"/>\n";
    svg << "<text x=\"" << ml + 12 << "\" y=\"" << mt + 18 + 16 * idx
        << "\" font-size=\"12\" fill=\"" << color << "\">" << name << "</text>\n";
    ++idx;
  }
  svg << "</svg>\n";

  std::ofstream out(path);
  if (!out) throw std::runtime_error("emit_svg_plot: cannot open " + path);
  out << svg.str();
  if (!out) throw std::runtime_error("emit_svg_plot: write failed for " + path);
}

// ---------------------------------------------------------------------------
// Shared runner helpers.

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline Domain domain_from_name(const std::string& name) {
  if (name == "unit_square") return Domain::unit_square();
  if (name == "l_shape") return Domain::l_shape();
  throw std::domain_error("unknown domain '" + name + "' (expected unit_square or l_shape)");
}

// Builder level for a mesh-size exponent p (cell side 2^-p): the L-shape's
// base grid is already 2x2, so its levels sit one below the exponent.
inline int level_for_exponent(const Domain& dom, int p) {
  const int shift = dom.base_nx == 2 ? 1 : 0;
  if (p - shift < 0)
    throw std::domain_error("mesh-size exponent " + std::to_string(p) +
                            " is below the domain's base grid");
  return p - shift;
}

inline MeshHierarchy build_for(const Domain& dom, int pH, int ph) {
  return build_hierarchy(dom, level_for_exponent(dom, pH), level_for_exponent(dom, ph));
}

// Coefficient for a scenario; n_cells is the fine lattice resolution per
// unit length.  Noise and channels keep four fine cells per coefficient cell,
// capped at 128 coefficient cells per unit length, so desk-scale runs shrink
// the pattern together with the mesh: features stay several layers wide
// relative to the coarse cells, which keeps the localization error of the
// desk-scale layer counts below the coarse discretization error.
inline CellGridField make_coefficient(const ExperimentConfig& cfg, int n_cells) {
  const int n = std::min(128, std::max(1, n_cells / 4));
  if (cfg.coeff == "constant") return make_constant(1.0);
  if (cfg.coeff == "noise") return make_noise(n, 10.0, cfg.seed);
  if (cfg.coeff == "channels") return make_channels(n, std::exp(10.0));
  if (cfg.coeff == "instability") return make_instability_field();
  if (cfg.coeff == "spe10")
    return load_spe10(cfg.spe10_file, cfg.spe10_layer, cfg.spe10_component);
  throw std::domain_error("unknown coefficient '" + cfg.coeff + "'");
}

inline double rel_err(const OperatorMatrix& M, const Eigen::VectorXd& ref,
                      const Eigen::VectorXd& sol) {
  return energy_norm(M, Eigen::VectorXd(ref - sol)) / energy_norm(M, ref);
}

// Relative max-norm residual of B u against a target divergence vector.
inline double div_residual_against(const OperatorMatrix& B, const Eigen::VectorXd& u,
                                   const Eigen::VectorXd& target) {
  return (B.apply(u) - target).cwiseAbs().maxCoeff() / (1.0 + target.cwiseAbs().maxCoeff());
}

// Per-fine-triangle integrals of the coarse L2 projection of -f.
inline Eigen::VectorXd injected_coarse_target(const MeshHierarchy& hier, const SourceField& f) {
  std::vector<double> cint = source_integrals(f, hier.coarse);
  Eigen::VectorXd target(hier.fine.n_tris());
  for (int t = 0; t < hier.fine.n_tris(); ++t) {
    const int T = hier.fine_tri_parent[t];
    target[t] = -cint[T] * hier.fine.tri_area[t] / hier.coarse.tri_area[T];
  }
  return target;
}

inline Eigen::VectorXd fine_target(const TriMesh& fine, const SourceField& f) {
  std::vector<double> fint = source_integrals(f, fine);
  Eigen::VectorXd target(fine.n_tris());
  for (int t = 0; t < fine.n_tris(); ++t) target[t] = -fint[t];
  return target;
}

// Magnitude of the flux field at a triangle's centroid.
inline double centroid_flux_magnitude(const TriMesh& m, const Eigen::VectorXd& u, int t) {
  const Vec2 c = m.centroid(t);
  double vx = 0.0, vy = 0.0;
  for (int l = 0; l < 3; ++l) {
    const int e = m.tri_edge[t][l];
    const int dof = m.edge_dof[e];
    if (dof < 0) continue;
    const Vec2 p = m.vertex[m.tri[t][l]];  // vertex opposite edge e
    const double scale = m.tri_sign[t][l] * m.edge_len[e] / (2.0 * m.tri_area[t]);
    vx += u[dof] * scale * (c.x - p.x);
    vy += u[dof] * scale * (c.y - p.y);
  }
  return std::hypot(vx, vy);
}

inline double max_centroid_flux(const TriMesh& m, const Eigen::VectorXd& u) {
  double mx = 0.0;
  for (int t = 0; t < m.n_tris(); ++t) mx = std::max(mx, centroid_flux_magnitude(m, u, t));
  return mx;
}

inline std::string format_C(double C) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "C%.2f", C);
  return buf;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Scenario: localization-error convergence on the unit square.

// One reference solve at the fine level; per coarse level a localized
// multiscale solve with k from the layer rule and a standard coarse solve of
// the same dimension for comparison.
inline std::vector<ResultRow> run_convergence(const ExperimentConfig& cfg) {
  const Domain dom = detail::domain_from_name(cfg.domain);
  const int ph = cfg.fine_level >= 0 ? cfg.fine_level : (cfg.full ? 8 : 7);
  std::vector<int> pHs;
  if (cfg.coarse_level >= 0)
    pHs = {cfg.coarse_level};
  else
    for (int p = 2; p <= (cfg.full ? 6 : 5); ++p) pHs.push_back(p);

  const CellGridField A = detail::make_coefficient(cfg, 1 << ph);
  const SourceField f = make_source("checker_quarters");
  const std::string hash = config_hash(cfg);
  const std::string tag = "convergence-" + cfg.coeff + "-" + detail::format_C(cfg.C);

  std::vector<ResultRow> rows;
  Eigen::VectorXd u_ref;
  double wall_ref = 0.0;
  for (std::size_t i = 0; i < pHs.size(); ++i) {
    const int pH = pHs[i];
    ResultRow row;
    row.scenario = tag;
    row.H = std::pow(2.0, -pH);
    row.h = std::pow(2.0, -ph);
    row.ell = -1;
    row.config_hash = hash;
    ResultRow std_row = row;
    std_row.scenario = "convergence-" + cfg.coeff + "-std";
    try {
      MeshHierarchy hier = detail::build_for(dom, pH, ph);
      RTSpace flux(hier.fine);
      OperatorMatrix M = assemble_weighted_mass(flux, A);
      OperatorMatrix M1 = assemble_weighted_mass(flux, make_constant(1.0));
      OperatorMatrix B = assemble_div(flux, PressureSpace(hier.fine));
      if (i == 0) {
        const auto t0 = std::chrono::steady_clock::now();
        u_ref = solve_reference(hier, M, B, f, cfg.tol).u;
        wall_ref = detail::seconds_since(t0);
      }
      row.wall_reference = std_row.wall_reference = wall_ref;

      row.k = cfg.k >= 1 ? cfg.k
                         : choose_k(row.H, row.h, cfg.C, saturation_layers(hier.coarse));
      auto t1 = std::chrono::steady_clock::now();
      CorrectorBasis basis = corrector_basis(hier, M, A, row.k, cfg.tol);
      row.wall_correctors = detail::seconds_since(t1);
      row.corrector_count = basis.dim();

      t1 = std::chrono::steady_clock::now();
      MultiscaleSolution ms = solve_multiscale(hier, M, basis, f, cfg.tol);
      row.wall_solve = detail::seconds_since(t1);
      const Eigen::VectorXd target = detail::injected_coarse_target(hier, f);
      row.err_energy = detail::rel_err(M, u_ref, ms.u);
      row.err_l2 = detail::rel_err(M1, u_ref, ms.u);
      row.div_residual = detail::div_residual_against(B, ms.u, target);

      t1 = std::chrono::steady_clock::now();
      StandardCoarseSolution std_sol = solve_standard_coarse(hier, M, f, cfg.tol);
      std_row.wall_solve = detail::seconds_since(t1);
      std_row.k = 0;
      std_row.err_energy = detail::rel_err(M, u_ref, std_sol.u);
      std_row.err_l2 = detail::rel_err(M1, u_ref, std_sol.u);
      std_row.div_residual = detail::div_residual_against(B, std_sol.u, target);
    } catch (const std::exception& err) {
      row.error = err.what();
      std_row.error = err.what();
    }
    rows.push_back(std::move(row));
    rows.push_back(std::move(std_row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Scenario: localization instability under fine-mesh refinement.

// H fixed, h decreasing, small fixed k: the localization error grows like
// log(1/h).  Each h gets its own reference; an ideal (saturated) rerun shows
// the growth is purely a localization artifact.
inline std::vector<ResultRow> run_instability(const ExperimentConfig& cfg) {
  const Domain dom = Domain::unit_square();
  const int pH = cfg.coarse_level >= 0 ? cfg.coarse_level : 2;
  std::vector<int> phs;
  if (cfg.fine_level >= 0)
    phs = {cfg.fine_level};
  else
    for (int p = 5; p <= (cfg.full ? 9 : 8); ++p) phs.push_back(p);
  const int k_loc = cfg.k >= 1 ? cfg.k : 2;

  const CellGridField A = make_instability_field();
  const SourceField f = make_source("halfplane_pm1");
  const std::string hash = config_hash(cfg);

  std::vector<ResultRow> rows;
  for (int ph : phs) {
    ResultRow row;
    row.H = std::pow(2.0, -pH);
    row.h = std::pow(2.0, -ph);
    row.ell = -1;
    row.config_hash = hash;
    ResultRow ideal_row = row;
    row.scenario = "instability-k" + std::to_string(k_loc);
    ideal_row.scenario = "instability-ideal";
    try {
      MeshHierarchy hier = detail::build_for(dom, pH, ph);
      RTSpace flux(hier.fine);
      OperatorMatrix M = assemble_weighted_mass(flux, A);
      OperatorMatrix M1 = assemble_weighted_mass(flux, make_constant(1.0));
      OperatorMatrix B = assemble_div(flux, PressureSpace(hier.fine));
      const auto t0 = std::chrono::steady_clock::now();
      ReferenceSolution ref = solve_reference(hier, M, B, f, cfg.tol);
      row.wall_reference = ideal_row.wall_reference = detail::seconds_since(t0);
      const Eigen::VectorXd target = detail::injected_coarse_target(hier, f);
      const double ref_flux = detail::max_centroid_flux(hier.fine, ref.u);

      row.k = k_loc;
      auto t1 = std::chrono::steady_clock::now();
      CorrectorBasis basis = corrector_basis(hier, M, A, k_loc, cfg.tol);
      row.wall_correctors = detail::seconds_since(t1);
      row.corrector_count = basis.dim();
      t1 = std::chrono::steady_clock::now();
      MultiscaleSolution ms = solve_multiscale(hier, M, basis, f, cfg.tol);
      row.wall_solve = detail::seconds_since(t1);
      row.err_energy = detail::rel_err(M, ref.u, ms.u);
      row.err_l2 = detail::rel_err(M1, ref.u, ms.u);
      row.div_residual = detail::div_residual_against(B, ms.u, target);
      row.max_flux_ratio = detail::max_centroid_flux(hier.fine, ms.u) / ref_flux;

      ideal_row.k = saturation_layers(hier.coarse);
      t1 = std::chrono::steady_clock::now();
      CorrectorBasis ideal_basis = corrector_basis(hier, M, A, ideal_row.k, cfg.tol);
      ideal_row.wall_correctors = detail::seconds_since(t1);
      ideal_row.corrector_count = ideal_basis.dim();
      t1 = std::chrono::steady_clock::now();
      MultiscaleSolution ideal = solve_multiscale(hier, M, ideal_basis, f, cfg.tol);
      ideal_row.wall_solve = detail::seconds_since(t1);
      ideal_row.err_energy = detail::rel_err(M, ref.u, ideal.u);
      ideal_row.err_l2 = detail::rel_err(M1, ref.u, ideal.u);
      ideal_row.div_residual = detail::div_residual_against(B, ideal.u, target);
      ideal_row.max_flux_ratio = detail::max_centroid_flux(hier.fine, ideal.u) / ref_flux;
    } catch (const std::exception& err) {
      row.error = row.error.empty() ? err.what() : row.error;
      ideal_row.error = err.what();
    }
    rows.push_back(std::move(row));
    rows.push_back(std::move(ideal_row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Scenario: L-shaped domain with a source outside the coarse pressure space.

// Rows for both localization constants C = 0.25 and C = 0.5; the smaller C
// is insufficient for second-order decay of the localization error.
inline std::vector<ResultRow> run_lshape(const ExperimentConfig& cfg) {
  const Domain dom = Domain::l_shape();
  const int ph = cfg.fine_level >= 0 ? cfg.fine_level : (cfg.full ? 8 : 7);
  std::vector<int> pHs;
  if (cfg.coarse_level >= 0)
    pHs = {cfg.coarse_level};
  else
    for (int p = 2; p <= (cfg.full ? 6 : 5); ++p) pHs.push_back(p);

  const CellGridField A = detail::make_coefficient(cfg, 1 << ph);
  const SourceField f = make_source("lshape_linear");
  const std::string hash = config_hash(cfg);

  std::vector<ResultRow> rows;
  Eigen::VectorXd u_ref;
  double wall_ref = 0.0;
  bool have_ref = false;
  for (const double C : {0.25, 0.5}) {
    const std::string tag = "lshape-" + cfg.coeff + "-" + detail::format_C(C);
    for (int pH : pHs) {
      ResultRow row;
      row.scenario = tag;
      row.H = std::pow(2.0, -pH);
      row.h = std::pow(2.0, -ph);
      row.ell = -1;
      row.config_hash = hash;
      try {
        MeshHierarchy hier = detail::build_for(dom, pH, ph);
        RTSpace flux(hier.fine);
        OperatorMatrix M = assemble_weighted_mass(flux, A);
        OperatorMatrix M1 = assemble_weighted_mass(flux, make_constant(1.0));
        OperatorMatrix B = assemble_div(flux, PressureSpace(hier.fine));
        if (!have_ref) {
          const auto t0 = std::chrono::steady_clock::now();
          u_ref = solve_reference(hier, M, B, f, cfg.tol).u;
          wall_ref = detail::seconds_since(t0);
          have_ref = true;
        }
        row.wall_reference = wall_ref;
        row.k =
            cfg.k >= 1 ? cfg.k : choose_k(row.H, row.h, C, saturation_layers(hier.coarse));
        auto t1 = std::chrono::steady_clock::now();
        CorrectorBasis basis = corrector_basis(hier, M, A, row.k, cfg.tol);
        row.wall_correctors = detail::seconds_since(t1);
        row.corrector_count = basis.dim();
        t1 = std::chrono::steady_clock::now();
        MultiscaleSolution ms = solve_multiscale(hier, M, basis, f, cfg.tol);
        row.wall_solve = detail::seconds_since(t1);
        row.err_energy = detail::rel_err(M, u_ref, ms.u);
        row.err_l2 = detail::rel_err(M1, u_ref, ms.u);
        row.div_residual =
            detail::div_residual_against(B, ms.u, detail::injected_coarse_target(hier, f));
      } catch (const std::exception& err) {
        row.error = err.what();
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Scenario: SPE10 well problem with source correction.

// 6x22 coarse / 60x220 fine triangulations of [0,1.2]x[0,2.2], permeability
// from the SPE10 data file, corner-cell well sources.  Rows for k in {1,2,3}
// crossed with source-correction variants ell in {none, 0, k, k+1,
// saturation}; the saturation variant reports the actual layer count.
inline std::vector<ResultRow> run_spe10(const ExperimentConfig& cfg) {
  const Domain dom = Domain::rect(6, 22, 1.2, 2.2);
  MeshHierarchy hier = build_hierarchy_factors(dom, 1, 10);
  CellGridField A = load_spe10(cfg.spe10_file, cfg.spe10_layer, cfg.spe10_component);

  const double cw = dom.width / 60.0, ch = dom.height / 220.0;
  const SourceField f = make_source_wells({0.0, 0.0}, {cw, ch},
                                          {dom.width - cw, dom.height - ch},
                                          {dom.width, dom.height}, dom);

  RTSpace flux(hier.fine);
  OperatorMatrix M = assemble_weighted_mass(flux, A);
  OperatorMatrix M1 = assemble_weighted_mass(flux, make_constant(1.0, dom.width, dom.height));
  OperatorMatrix B = assemble_div(flux, PressureSpace(hier.fine));

  const auto t0 = std::chrono::steady_clock::now();
  ReferenceSolution ref = solve_reference(hier, M, B, f, cfg.tol);
  const double wall_ref = detail::seconds_since(t0);

  // Coarse triangles carrying the wells (each corner cell lies inside a
  // single coarse triangle under this diagonal orientation).
  std::vector<double> fint = source_integrals(f, hier.fine);
  std::vector<int> source_tris;
  for (int T = 0; T < hier.coarse.n_tris(); ++T) {
    double a = 0.0;
    for (int t : hier.coarse_tri_children[T]) a += std::abs(fint[t]);
    if (a > 0.0) source_tris.push_back(T);
  }

  const Eigen::VectorXd coarse_target = detail::injected_coarse_target(hier, f);
  const Eigen::VectorXd full_target = detail::fine_target(hier.fine, f);
  const int sat = saturation_layers(hier.coarse);
  const std::string hash = config_hash(cfg);

  std::vector<int> ks = cfg.k >= 1 ? std::vector<int>{cfg.k} : std::vector<int>{1, 2, 3};
  std::vector<ResultRow> rows;
  for (int k : ks) {
    const std::string tag = "spe10-k" + std::to_string(k);
    CorrectorBasis basis;
    double wall_basis = 0.0;
    try {
      const auto t1 = std::chrono::steady_clock::now();
      basis = corrector_basis(hier, M, A, k, cfg.tol);
      wall_basis = detail::seconds_since(t1);
    } catch (const std::exception& err) {
      ResultRow row;
      row.scenario = tag;
      row.H = hier.coarse.size_label;
      row.h = hier.fine.size_label;
      row.k = k;
      row.config_hash = hash;
      row.error = err.what();
      rows.push_back(std::move(row));
      continue;
    }

    std::vector<int> ells;
    if (cfg.ell == -2)
      ells = {-1, 0, k, k + 1, sat};
    else
      ells = {cfg.ell >= static_cast<int>(sat) ? sat : cfg.ell};
    for (int ell : ells) {
      ResultRow row;
      row.scenario = tag;
      row.H = hier.coarse.size_label;
      row.h = hier.fine.size_label;
      row.k = k;
      row.ell = ell;
      row.config_hash = hash;
      row.wall_reference = wall_ref;
      row.wall_correctors = wall_basis;
      row.corrector_count = basis.dim();
      try {
        auto t1 = std::chrono::steady_clock::now();
        if (ell < 0) {
          MultiscaleSolution ms = solve_multiscale(hier, M, basis, f, cfg.tol);
          row.wall_solve = detail::seconds_since(t1);
          row.err_energy = detail::rel_err(M, ref.u, ms.u);
          row.err_l2 = detail::rel_err(M1, ref.u, ms.u);
          row.div_residual = detail::div_residual_against(B, ms.u, coarse_target);
        } else {
          std::vector<SourceCorrector> cs;
          for (int T : source_tris) cs.push_back(source_corrector(hier, M, B, T, ell, f, cfg.tol));
          row.corrector_count += static_cast<int>(cs.size());
          CorrectedSolution sol = solve_multiscale_corrected(hier, M, basis, f, cs, cfg.tol);
          row.wall_solve = detail::seconds_since(t1);
          row.err_energy = detail::rel_err(M, ref.u, sol.u);
          row.err_l2 = detail::rel_err(M1, ref.u, sol.u);
          row.div_residual = detail::div_residual_against(B, sol.u, full_target);
        }
      } catch (const std::exception& err) {
        row.error = err.what();
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Scenario: corrector truncation-error decay.

// Rows k = 1..k_max for one coarse triangle near the domain center; the
// err_energy column carries d_k and err_l2 the fitted per-layer ratio.
inline std::vector<ResultRow> run_decay(const ExperimentConfig& cfg) {
  const Domain dom = detail::domain_from_name(cfg.domain);
  const int pH = cfg.coarse_level >= 0 ? cfg.coarse_level : 3;
  const int ph = cfg.fine_level >= 0 ? cfg.fine_level : 6;
  MeshHierarchy hier = detail::build_for(dom, pH, ph);
  const CellGridField A = detail::make_coefficient(cfg, 1 << ph);
  RTSpace flux(hier.fine);
  OperatorMatrix M = assemble_weighted_mass(flux, A);

  // Deterministic interior seed: the triangle whose centroid is nearest a
  // point slightly off the domain center (off-center to break ties).
  const Vec2 q{0.5 * dom.width + 0.01, 0.5 * dom.height + 0.02};
  int T = 0;
  double best = 1e300;
  for (int t = 0; t < hier.coarse.n_tris(); ++t) {
    const Vec2 c = hier.coarse.centroid(t);
    const double d2 = (c.x - q.x) * (c.x - q.x) + (c.y - q.y) * (c.y - q.y);
    if (d2 < best) best = d2, T = t;
  }
  Eigen::VectorXd v = Eigen::VectorXd::Zero(hier.coarse.n_flux_dofs);
  v[hier.coarse.edge_dof[hier.coarse.tri_edge[T][0]]] = 1.0;

  const int sat = saturation_layers(hier.coarse);
  const int k_max = cfg.k >= 1 ? std::min(cfg.k, sat) : std::min(6, sat);
  DecayReport rep = decay_profile(hier, M, A, T, v, k_max, cfg.tol);

  const std::string hash = config_hash(cfg);
  std::vector<ResultRow> rows;
  for (int k = 1; k <= k_max; ++k) {
    ResultRow row;
    row.scenario = "decay-" + cfg.coeff;
    row.H = std::pow(2.0, -pH);
    row.h = std::pow(2.0, -ph);
    row.k = k;
    row.ell = -1;
    row.err_energy = rep.d[k - 1];
    row.err_l2 = rep.theta_hat;  // decay ratio, identical on every row
    row.div_residual = 0.0;
    row.config_hash = hash;
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Scenario: numerical inf-sup stability probe.

// Smallest nonzero generalized singular value of the divergence form for the
// standard coarse pair and for multiscale pairs at k = 1, 2, reported in the
// err_energy column.  Dense eigensolve; sizes are kept small.
inline std::vector<ResultRow> run_infsup(const ExperimentConfig& cfg) {
  const Domain dom = detail::domain_from_name(cfg.domain);
  const int pH = cfg.coarse_level >= 0 ? cfg.coarse_level : 2;
  const int ph = cfg.fine_level >= 0 ? cfg.fine_level : 4;
  MeshHierarchy hier = detail::build_for(dom, pH, ph);
  const CellGridField A = detail::make_coefficient(cfg, 1 << ph);
  RTSpace flux(hier.fine);
  OperatorMatrix M = assemble_weighted_mass(flux, A);
  OperatorMatrix M1f = assemble_weighted_mass(flux, make_constant(1.0));

  const TriMesh& C = hier.coarse;
  RTSpace cflux(C, SpaceKind::coarse_flux);
  PressureSpace cpres(C, SpaceKind::coarse_pressure);
  OperatorMatrix B_H = assemble_div(cflux, cpres);
  OperatorMatrix M1c = assemble_weighted_mass(cflux, make_constant(1.0));
  Eigen::MatrixXd Bd(B_H.mat);
  Eigen::MatrixXd N = Eigen::MatrixXd::Zero(C.n_tris(), C.n_tris());
  Eigen::MatrixXd Dinv = N;
  for (int t = 0; t < C.n_tris(); ++t) {
    N(t, t) = C.tri_area[t];
    Dinv(t, t) = 1.0 / C.tri_area[t];
  }
  const Eigen::MatrixXd div_part = Bd.transpose() * Dinv * Bd;

  const std::string hash = config_hash(cfg);
  std::vector<ResultRow> rows;
  {
    ResultRow row;
    row.scenario = "infsup-standard";
    row.H = std::pow(2.0, -pH);
    row.h = std::pow(2.0, -ph);
    row.ell = -1;
    row.config_hash = hash;
    row.err_energy = infsup_estimate(Bd, Eigen::MatrixXd(M1c.mat) + div_part, N);
    row.div_residual = 0.0;
    rows.push_back(std::move(row));
  }
  for (int k : {1, 2}) {
    ResultRow row;
    row.scenario = "infsup-multiscale";
    row.H = std::pow(2.0, -pH);
    row.h = std::pow(2.0, -ph);
    row.k = k;
    row.ell = -1;
    row.config_hash = hash;
    try {
      CorrectorBasis basis = corrector_basis(hier, M, A, k, cfg.tol);
      ColSparseMat Psi = detail::multiscale_basis(hier, basis);
      Eigen::MatrixXd X =
          Eigen::MatrixXd(ColSparseMat(Psi.transpose() * ColSparseMat(M1f.mat * Psi))) + div_part;
      row.err_energy = infsup_estimate(Bd, X, N);
      row.div_residual = 0.0;
      row.corrector_count = basis.dim();
    } catch (const std::exception& err) {
      row.error = err.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Scenario: built-in oracle checks.

// Small exact checks runnable from the command line: interpolation and
// commuting identities, divergence-row antisymmetry, and the dense
// factorization comparison for the eight-triangle reference solve.  The
// err_energy column carries the measured deviation; all must be tiny.
inline std::vector<ResultRow> run_oracle(const ExperimentConfig& cfg) {
  const std::string hash = config_hash(cfg);
  std::vector<ResultRow> rows;
  auto add = [&](const std::string& name, double dev) {
    ResultRow row;
    row.scenario = name;
    row.ell = -1;
    row.err_energy = dev;
    row.div_residual = 0.0;
    row.config_hash = hash;
    rows.push_back(std::move(row));
  };

  {
    MeshHierarchy hier = build_hierarchy(Domain::unit_square(), 2, 4);
    OperatorMatrix Pi = interpolation_PiH(hier);
    OperatorMatrix P = prolongation(hier);
    SparseMat prod = Pi.mat * P.mat;
    double dev = 0.0;
    for (int i = 0; i < prod.outerSize(); ++i)
      for (SparseMat::InnerIterator it(prod, i); it; ++it)
        dev = std::max(dev, std::abs(it.value() - (it.row() == it.col() ? 1.0 : 0.0)));
    add("oracle-interpolation-identity", dev);

    RTSpace flux(hier.fine);
    OperatorMatrix B = assemble_div(flux, PressureSpace(hier.fine));
    RTSpace cflux(hier.coarse, SpaceKind::coarse_flux);
    OperatorMatrix B_H = assemble_div(cflux, PressureSpace(hier.coarse, SpaceKind::coarse_pressure));
    SplitMix64 rng(cfg.seed);
    double cdev = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
      Eigen::VectorXd u(hier.fine.n_flux_dofs);
      for (int i = 0; i < u.size(); ++i) u[i] = 2.0 * rng.uniform01() - 1.0;
      Eigen::VectorXd lhs = B_H.apply(Pi.apply(u));
      Eigen::VectorXd fine_div = B.apply(u);
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(hier.coarse.n_tris());
      for (int t = 0; t < hier.fine.n_tris(); ++t) rhs[hier.fine_tri_parent[t]] += fine_div[t];
      cdev = std::max(cdev, (lhs - rhs).cwiseAbs().maxCoeff());
    }
    add("oracle-commuting-property", cdev);

    // Each interior-edge column of B holds the two signed edge lengths,
    // which must cancel exactly.
    Eigen::VectorXd colsum = Eigen::VectorXd::Zero(hier.fine.n_flux_dofs);
    for (int i = 0; i < B.mat.outerSize(); ++i)
      for (SparseMat::InnerIterator it(B.mat, i); it; ++it) colsum[it.col()] += it.value();
    add("oracle-divergence-antisymmetry", colsum.cwiseAbs().maxCoeff());
  }

  {
    MeshHierarchy hier = build_hierarchy(Domain::unit_square(), 0, 1);
    RTSpace flux(hier.fine);
    OperatorMatrix M = assemble_weighted_mass(flux, make_constant(1.0));
    OperatorMatrix B = assemble_div(flux, PressureSpace(hier.fine));
    const SourceField f = make_source("checker_quarters");
    ReferenceSolution ref = solve_reference(hier, M, B, f, cfg.tol);

    Eigen::VectorXd r = detail::fine_target(hier.fine, f);
    std::vector<int> all(hier.fine.n_tris());
    for (int t = 0; t < hier.fine.n_tris(); ++t) all[t] = t;
    SaddleSystem sys = build_constrained_system(Eigen::SparseMatrix<double>(M.mat),
                                                {divergence_block(B, r, {all})},
                                                Eigen::VectorXd::Zero(hier.fine.n_flux_dofs));
    Eigen::MatrixXd K(detail::assemble_kkt(sys));
    Eigen::VectorXd b = Eigen::VectorXd::Zero(K.rows());
    b.segment(sys.n(), sys.m()) = sys.r;
    Eigen::VectorXd dense = Eigen::FullPivLU<Eigen::MatrixXd>(K).solve(b);
    double dev = 0.0;
    for (int i = 0; i < sys.n(); ++i) dev = std::max(dev, std::abs(ref.u[i] - dense[i]));
    for (int t = 0; t < sys.m(); ++t)
      dev = std::max(dev, std::abs(ref.p[t] - dense[sys.n() + t]));
    add("oracle-dense-reference", dev);
  }
  return rows;
}

}  // namespace mslod
