#include "gsrecon/observation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "gsrecon/error.hpp"
#include "gsrecon/kernels.hpp"

namespace gsr {

Chord make_chord(const Mesh& mesh, Point start, Point end, double max_step) {
  Chord c;
  c.start = start;
  c.end = end;
  c.length = norm(end - start);
  if (!(c.length > 0.0)) throw Error(ErrorKind::Argument, "chord endpoints coincide");
  const Point d = (1.0 / c.length) * (end - start);
  c.normal = {d.z, -d.r};
  const double step = max_step > 0.0 ? max_step : 0.5 * mesh.mesh_size();
  const int pieces = std::max(1, static_cast<int>(std::ceil(c.length / step)));
  const double w = c.length / pieces;
  PointLocator loc(mesh);
  for (int k = 0; k < pieces; ++k) {
    const Point p = start + ((k + 0.5) / pieces) * (end - start);
    c.nodes.push_back(p);
    c.weights.push_back(w);
    c.locations.push_back(loc.locate(p));
  }
  return c;
}

void MeasurementSet::validate() const {
  if (g_N.empty()) throw Error(ErrorKind::Validation, "measurement set has no Neumann values (N >= 1 required)");
  auto finite = [](double v) { return std::isfinite(v); };
  for (const auto& v : g_D)
    if (!finite(v.value) || !finite(v.p.r) || !finite(v.p.z)) throw Error(ErrorKind::Validation, "non-finite gD entry");
  for (const auto& v : g_N)
    if (!finite(v.value) || !finite(v.p.r) || !finite(v.p.z)) throw Error(ErrorKind::Validation, "non-finite gN entry");
  for (const auto& c : chords)
    if (!finite(c.gamma) || !finite(c.alpha)) throw Error(ErrorKind::Validation, "non-finite chord measurement");
  if (!finite(Ip)) throw Error(ErrorKind::Validation, "Ip must be finite");
  if (!finite(B0)) throw Error(ErrorKind::Validation, "B0 must be finite");
}

std::vector<double> dirichlet_values(const Mesh& mesh, const MeasurementSet& ms) {
  const auto& loop = mesh.boundary();
  if (ms.g_D.size() != loop.size())
    throw Error(ErrorKind::Validation,
                fmt::format("gD has {} values but the mesh boundary has {} nodes", ms.g_D.size(), loop.size()));
  const double tol = 1e-9 * std::max(1.0, norm(mesh.bbox_max() - mesh.bbox_min()));
  std::vector<double> out(loop.size());
  // fast path: same order as the loop
  bool in_order = true;
  for (std::size_t i = 0; i < loop.size() && in_order; ++i)
    in_order = norm(ms.g_D[i].p - mesh.node(loop[i])) <= tol;
  if (in_order) {
    for (std::size_t i = 0; i < loop.size(); ++i) out[i] = ms.g_D[i].value;
    return out;
  }
  std::vector<char> filled(loop.size(), 0);
  for (const auto& v : ms.g_D) {
    bool matched = false;
    for (std::size_t i = 0; i < loop.size(); ++i) {
      if (norm(v.p - mesh.node(loop[i])) <= tol) {
        out[i] = v.value;
        filled[i] = 1;
        matched = true;
        break;
      }
    }
    if (!matched)
      throw Error(ErrorKind::Validation, fmt::format("gD point ({}, {}) is not a boundary node", v.p.r, v.p.z));
  }
  for (char f : filled)
    if (!f) throw Error(ErrorKind::Validation, "gD does not cover every boundary node");
  return out;
}

std::string format_measurements(const MeasurementSet& ms) {
  std::string out = "# gsrecon measurements\n";
  out += fmt::format("Ip {:.17g}\nB0 {:.17g}\n", ms.Ip, ms.B0);
  out += fmt::format("gD {}\n", ms.g_D.size());
  for (const auto& v : ms.g_D) out += fmt::format("{:.17g} {:.17g} {:.17g}\n", v.p.r, v.p.z, v.value);
  out += fmt::format("gN {}\n", ms.g_N.size());
  for (const auto& v : ms.g_N) out += fmt::format("{:.17g} {:.17g} {:.17g}\n", v.p.r, v.p.z, v.value);
  out += fmt::format("chords {}\n", ms.chords.size());
  for (const auto& c : ms.chords)
    out += fmt::format("{:.17g} {:.17g} {:.17g} {:.17g} {:.17g} {:.17g}\n", c.start.r, c.start.z, c.end.r, c.end.z,
                       c.gamma, c.alpha);
  return out;
}

namespace {

struct Lines {
  std::istringstream in;
  int line_no = 0;

  std::istringstream next(const char* what) {
    std::string line;
    while (std::getline(in, line)) {
      ++line_no;
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos || line[first] == '#') continue;
      return std::istringstream(line);
    }
    throw Error(ErrorKind::Parse, fmt::format("line {}: unexpected end of file while reading {}", line_no + 1, what));
  }
};

template <typename... T>
void read_row(Lines& lines, const char* what, T&... fields) {
  auto ss = lines.next(what);
  if (!((ss >> fields) && ...)) throw Error(ErrorKind::Parse, fmt::format("line {}: malformed {}", lines.line_no, what));
  std::string extra;
  if (ss >> extra) throw Error(ErrorKind::Parse, fmt::format("line {}: trailing data in {}", lines.line_no, what));
}

std::size_t read_section(Lines& lines, const std::string& key) {
  std::string k;
  long count = -1;
  read_row(lines, key.c_str(), k, count);
  if (k != key || count < 0)
    throw Error(ErrorKind::Parse, fmt::format("line {}: expected '{} <count>'", lines.line_no, key));
  return static_cast<std::size_t>(count);
}

double read_scalar(Lines& lines, const std::string& key) {
  std::string k;
  double v = 0.0;
  read_row(lines, key.c_str(), k, v);
  if (k != key) throw Error(ErrorKind::Parse, fmt::format("line {}: expected '{} <value>'", lines.line_no, key));
  return v;
}

}  // namespace

MeasurementSet parse_measurements(const std::string& text) {
  Lines lines{std::istringstream(text)};
  MeasurementSet ms;
  ms.Ip = read_scalar(lines, "Ip");
  ms.B0 = read_scalar(lines, "B0");
  ms.g_D.resize(read_section(lines, "gD"));
  for (auto& v : ms.g_D) read_row(lines, "gD entry", v.p.r, v.p.z, v.value);
  ms.g_N.resize(read_section(lines, "gN"));
  for (auto& v : ms.g_N) read_row(lines, "gN entry", v.p.r, v.p.z, v.value);
  ms.chords.resize(read_section(lines, "chords"));
  for (auto& c : ms.chords) read_row(lines, "chord entry", c.start.r, c.start.z, c.end.r, c.end.z, c.gamma, c.alpha);
  return ms;
}

void save_measurements(const MeasurementSet& ms, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorKind::Io, fmt::format("cannot write measurement file '{}'", path.string()));
  os << format_measurements(ms);
}

MeasurementSet load_measurements(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::Io, fmt::format("cannot open measurement file '{}'", path.string()));
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_measurements(ss.str());
}

double WeightConfig::w_mag() const { return 1.0 / (std::sqrt(static_cast<double>(n_mag)) * sigma_mag); }
double WeightConfig::w_polar() const { return 1.0 / (std::sqrt(static_cast<double>(n_chords)) * sigma_polar); }
double WeightConfig::w_inter() const { return 1.0 / (std::sqrt(static_cast<double>(n_chords)) * sigma_inter); }

void WeightConfig::validate() const {
  if (!(sigma_mag > 0.0) || !(sigma_polar > 0.0) || !(sigma_inter > 0.0))
    throw Error(ErrorKind::Validation, "measurement sigmas must be positive");
  if (n_mag == 0 || n_chords == 0) throw Error(ErrorKind::Validation, "measurement counts must be positive");
}

WeightConfig default_weights(double Ip, double boundary_length, std::size_t n_mag, std::size_t n_chords, double mu0) {
  if (!(boundary_length > 0.0)) throw Error(ErrorKind::Argument, "boundary length must be positive");
  if (!(std::abs(Ip) > 0.0)) throw Error(ErrorKind::Argument, "Ip must be nonzero");
  if (n_mag == 0) throw Error(ErrorKind::Argument, "need at least one magnetic measurement");
  WeightConfig w;
  const double b_mean = mu0 * std::abs(Ip) / boundary_length;
  w.sigma_mag = 0.01 * b_mean;
  w.sigma_polar = 1e-1;
  w.sigma_inter = 1e18;
  w.n_mag = n_mag;
  w.n_chords = std::max<std::size_t>(n_chords, 1);
  return w;
}

std::vector<Point> boundary_points(const Mesh& mesh) {
  std::vector<Point> pts;
  pts.reserve(mesh.boundary().size());
  for (int b : mesh.boundary()) pts.push_back(mesh.node(b));
  return pts;
}

SparseMatrix build_neumann_observer(const Mesh& mesh, std::span<const Point> points) {
  const auto n = static_cast<Eigen::Index>(mesh.num_nodes());
  const double tol = 1e-9 * std::max(1.0, norm(mesh.bbox_max() - mesh.bbox_min()));
  std::vector<Eigen::Triplet<double>> trip;
  const auto& loop = mesh.boundary();
  for (std::size_t k = 0; k < points.size(); ++k) {
    const Point m = points[k];
    int node = -1;
    for (int b : loop)
      if (norm(mesh.node(b) - m) <= tol) {
        node = b;
        break;
      }
    std::vector<std::pair<int, double>> tris;  // (triangle, weight)
    Point normal{};
    if (node >= 0) {
      normal = mesh.boundary_normal(node);
      for (int t : mesh.node_triangles(node)) tris.emplace_back(t, mesh.element(t).area);
    } else {
      // point inside a boundary edge: use that edge's triangle and normal
      for (std::size_t i = 0; i < loop.size() && tris.empty(); ++i) {
        const int a = loop[i], b = loop[(i + 1) % loop.size()];
        const Point pa = mesh.node(a), pb = mesh.node(b);
        const Point e = pb - pa;
        const double t = dot(m - pa, e) / dot(e, e);
        if (t < 0.0 || t > 1.0 || norm(pa + t * e - m) > tol) continue;
        const double l = norm(e);
        normal = {e.z / l, -e.r / l};
        for (int tri : mesh.node_triangles(a)) {
          const auto& v = mesh.triangle(tri);
          if (std::find(v.begin(), v.end(), b) != v.end()) tris.emplace_back(tri, 1.0);
        }
      }
    }
    if (tris.empty())
      throw Error(ErrorKind::Argument, fmt::format("measurement point ({}, {}) is not on the boundary", m.r, m.z));
    double wsum = 0.0;
    for (const auto& [t, w] : tris) wsum += w;
    for (const auto& [t, w] : tris) {
      const auto& tri = mesh.triangle(t);
      const auto& g = mesh.element(t);
      for (std::size_t a = 0; a < 3; ++a)
        trip.emplace_back(static_cast<int>(k), tri[a], (w / wsum) * dot(g.grad[a], normal) / m.r);
    }
  }
  SparseMatrix c0(static_cast<Eigen::Index>(points.size()), n);
  c0.setFromTriplets(trip.begin(), trip.end());
  c0.makeCompressed();
  return c0;
}

Eigen::MatrixXd build_interferometry_matrix(const Mesh& mesh, std::span<const Chord> chords, const PlasmaState& state,
                                            const SplineBasis& basis) {
  return kernels::omp::chord_basis_matrix(mesh, chords, state, basis);
}

Eigen::MatrixXd build_polarimetry_observer(const Mesh& mesh, std::span<const Chord> chords,
                                           const std::optional<Eigen::VectorXd>& ne_coeffs, const PlasmaState& state,
                                           const SplineBasis& basis) {
  if (!ne_coeffs) throw Error(ErrorKind::State, "polarimetry observer needs the electron density profile");
  const auto n = static_cast<Eigen::Index>(mesh.num_nodes());
  Eigen::MatrixXd c1 = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(chords.size()), n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(chords.size()); ++k) {
    const Chord& c = chords[static_cast<std::size_t>(k)];
    for (std::size_t q = 0; q < c.nodes.size(); ++q) {
      const auto& loc = c.locations[q];
      if (!loc || !state.active[static_cast<std::size_t>(loc->triangle)]) continue;
      const auto& tri = mesh.triangle(loc->triangle);
      double pb = 0.0;
      for (std::size_t a = 0; a < 3; ++a) pb += loc->bary[a] * state.psibar[tri[a]];
      if (!(pb <= 1.0)) continue;
      const double ne = basis.eval(pb).dot(*ne_coeffs);
      const double s = c.weights[q] * ne / c.nodes[q].r;
      const auto& g = mesh.element(loc->triangle);
      for (std::size_t a = 0; a < 3; ++a) c1(k, tri[a]) += s * dot(g.grad[a], c.normal);
    }
  }
  return c1;
}

}  // namespace gsr
