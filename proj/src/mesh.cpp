#include "gsrecon/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "gsrecon/error.hpp"

namespace gsr {

double norm(Point a) { return std::hypot(a.r, a.z); }

namespace {

double signed_area(Point a, Point b, Point c) { return 0.5 * cross(b - a, c - a); }

bool point_in_polygon(const std::vector<Point>& poly, Point p) {
  bool inside = false;
  const std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Point a = poly[i];
    const Point b = poly[j];
    if ((a.z > p.z) != (b.z > p.z)) {
      const double r_cross = a.r + (p.z - a.z) * (b.r - a.r) / (b.z - a.z);
      if (p.r < r_cross) inside = !inside;
    }
  }
  return inside;
}

double distance_to_segment(Point p, Point a, Point b) {
  const Point ab = b - a;
  const double len2 = dot(ab, ab);
  double t = len2 > 0.0 ? dot(p - a, ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return norm(p - (a + t * ab));
}

bool on_polygon(const std::vector<Point>& poly, Point p, double tol) {
  for (std::size_t i = 0; i < poly.size(); ++i) {
    if (distance_to_segment(p, poly[i], poly[(i + 1) % poly.size()]) <= tol) return true;
  }
  return false;
}

[[noreturn]] void invalid(const std::string& msg) { throw Error(ErrorKind::Validation, msg); }

}  // namespace

Mesh::Mesh(std::vector<Point> nodes, std::vector<Triangle> triangles, std::vector<int> boundary,
           std::vector<Point> limiter)
    : nodes_(std::move(nodes)),
      triangles_(std::move(triangles)),
      boundary_(std::move(boundary)),
      limiter_(std::move(limiter)) {
  const int n = static_cast<int>(nodes_.size());
  if (n < 3) invalid("mesh needs at least 3 nodes");
  if (triangles_.empty()) invalid("mesh has no triangles");
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Point p = nodes_[i];
    if (!std::isfinite(p.r) || !std::isfinite(p.z)) invalid(fmt::format("node {} is not finite", i));
    if (!(p.r > 0.0)) invalid(fmt::format("node {} has r = {} (every node needs r > 0)", i, p.r));
  }

  elements_.resize(triangles_.size());
  for (std::size_t t = 0; t < triangles_.size(); ++t) {
    auto& tri = triangles_[t];
    for (int v : tri) {
      if (v < 0 || v >= n)
        invalid(fmt::format("triangle {} references node {} outside [0, {})", t, v, n));
    }
    if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2])
      invalid(fmt::format("triangle {} repeats a vertex", t));
    double a = signed_area(node(tri[0]), node(tri[1]), node(tri[2]));
    if (a < 0.0) {
      std::swap(tri[1], tri[2]);
      a = -a;
      warnings_.push_back(fmt::format("triangle {} was clockwise and has been reoriented", t));
    }
    if (!(a > 0.0)) invalid(fmt::format("triangle {} has zero area (positive area required)", t));

    ElementGeometry& g = elements_[t];
    g.area = a;
    const Point p0 = node(tri[0]), p1 = node(tri[1]), p2 = node(tri[2]);
    // grad of hat function k: rotated opposite edge / (2 area)
    const std::array<Point, 3> opposite{p2 - p1, p0 - p2, p1 - p0};
    for (int k = 0; k < 3; ++k) {
      g.grad[static_cast<std::size_t>(k)] = {-opposite[static_cast<std::size_t>(k)].z / (2.0 * a),
                                             opposite[static_cast<std::size_t>(k)].r / (2.0 * a)};
    }
    g.centroid = (1.0 / 3.0) * (p0 + p1 + p2);
  }

  build_topology();

  // Boundary loop validation.
  if (boundary_.size() < 3) invalid("boundary loop needs at least 3 nodes");
  std::set<int> seen;
  for (int b : boundary_) {
    if (b < 0 || b >= n) invalid(fmt::format("boundary index {} outside [0, {})", b, n));
    if (!seen.insert(b).second) invalid(fmt::format("boundary loop is not simple: node {} repeats", b));
  }
  std::set<std::pair<int, int>> free_edges;
  for (std::size_t t = 0; t < triangles_.size(); ++t) {
    for (int k = 0; k < 3; ++k) {
      if (tri_neighbors_[t][static_cast<std::size_t>(k)] < 0) {
        const int a = triangles_[t][static_cast<std::size_t>((k + 1) % 3)];
        const int b = triangles_[t][static_cast<std::size_t>((k + 2) % 3)];
        free_edges.insert({std::min(a, b), std::max(a, b)});
      }
    }
  }
  if (free_edges.size() != boundary_.size())
    invalid(fmt::format("boundary loop has {} nodes but the triangulation has {} boundary edges "
                        "(boundary must be one closed simple loop)",
                        boundary_.size(), free_edges.size()));
  for (std::size_t i = 0; i < boundary_.size(); ++i) {
    const int a = boundary_[i];
    const int b = boundary_[(i + 1) % boundary_.size()];
    if (!free_edges.count({std::min(a, b), std::max(a, b)}))
      invalid(fmt::format("boundary nodes {} and {} are consecutive but do not share a boundary edge",
                          a, b));
  }
  double loop_area = 0.0;
  for (std::size_t i = 0; i < boundary_.size(); ++i) {
    loop_area += cross(node(boundary_[i]), node(boundary_[(i + 1) % boundary_.size()]));
  }
  if (loop_area < 0.0) {
    std::reverse(boundary_.begin(), boundary_.end());
    warnings_.push_back("boundary loop was clockwise and has been reversed");
  }

  on_boundary_.assign(nodes_.size(), 0);
  boundary_pos_.assign(nodes_.size(), -1);
  for (std::size_t i = 0; i < boundary_.size(); ++i) {
    on_boundary_[static_cast<std::size_t>(boundary_[i])] = 1;
    boundary_pos_[static_cast<std::size_t>(boundary_[i])] = static_cast<int>(i);
  }
  if (!(boundary_length() > 0.0)) invalid("boundary length must be positive");

  std::vector<Point> loop;
  loop.reserve(boundary_.size());
  for (int b : boundary_) loop.push_back(node(b));
  const double tol = 1e-9 * std::max(1.0, norm(bbox_max_ - bbox_min_));
  for (std::size_t i = 0; i < limiter_.size(); ++i) {
    if (!point_in_polygon(loop, limiter_[i]) && !on_polygon(loop, limiter_[i], tol))
      invalid(fmt::format("limiter point {} ({}, {}) lies outside the domain boundary", i,
                          limiter_[i].r, limiter_[i].z));
  }

  build_buckets();
}

void Mesh::build_topology() {
  const std::size_t n = nodes_.size();
  std::vector<int> count(n, 0);
  for (const auto& tri : triangles_)
    for (int v : tri) ++count[static_cast<std::size_t>(v)];
  node_tri_offsets_.assign(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) node_tri_offsets_[i + 1] = node_tri_offsets_[i] + count[i];
  node_tri_list_.assign(static_cast<std::size_t>(node_tri_offsets_[n]), 0);
  std::vector<int> fill(node_tri_offsets_.begin(), node_tri_offsets_.end() - 1);
  for (std::size_t t = 0; t < triangles_.size(); ++t)
    for (int v : triangles_[t]) node_tri_list_[static_cast<std::size_t>(fill[static_cast<std::size_t>(v)]++)] = static_cast<int>(t);

  std::vector<std::set<int>> nbs(n);
  std::map<std::pair<int, int>, std::pair<int, int>> edge_owner;  // edge -> (tri, local edge)
  tri_neighbors_.assign(triangles_.size(), {-1, -1, -1});
  double edge_sum = 0.0;
  std::size_t edge_count = 0;
  for (std::size_t t = 0; t < triangles_.size(); ++t) {
    const auto& tri = triangles_[t];
    for (int k = 0; k < 3; ++k) {
      const int a = tri[static_cast<std::size_t>((k + 1) % 3)];
      const int b = tri[static_cast<std::size_t>((k + 2) % 3)];
      nbs[static_cast<std::size_t>(a)].insert(b);
      nbs[static_cast<std::size_t>(b)].insert(a);
      const auto key = std::make_pair(std::min(a, b), std::max(a, b));
      auto it = edge_owner.find(key);
      if (it == edge_owner.end()) {
        edge_owner.emplace(key, std::make_pair(static_cast<int>(t), k));
        edge_sum += norm(node(a) - node(b));
        ++edge_count;
      } else {
        const auto [t2, k2] = it->second;
        if (tri_neighbors_[static_cast<std::size_t>(t2)][static_cast<std::size_t>(k2)] >= 0)
          invalid(fmt::format("edge ({}, {}) is shared by more than two triangles", a, b));
        tri_neighbors_[t][static_cast<std::size_t>(k)] = t2;
        tri_neighbors_[static_cast<std::size_t>(t2)][static_cast<std::size_t>(k2)] = static_cast<int>(t);
      }
    }
  }
  mesh_size_ = edge_count ? edge_sum / static_cast<double>(edge_count) : 0.0;

  node_nb_offsets_.assign(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i)
    node_nb_offsets_[i + 1] = node_nb_offsets_[i] + static_cast<int>(nbs[i].size());
  node_nb_list_.clear();
  node_nb_list_.reserve(static_cast<std::size_t>(node_nb_offsets_[n]));
  for (const auto& s : nbs) node_nb_list_.insert(node_nb_list_.end(), s.begin(), s.end());

  bbox_min_ = bbox_max_ = nodes_.front();
  for (const Point& p : nodes_) {
    bbox_min_ = {std::min(bbox_min_.r, p.r), std::min(bbox_min_.z, p.z)};
    bbox_max_ = {std::max(bbox_max_.r, p.r), std::max(bbox_max_.z, p.z)};
  }
}

void Mesh::build_buckets() {
  const double span_r = bbox_max_.r - bbox_min_.r;
  const double span_z = bbox_max_.z - bbox_min_.z;
  const double target = std::sqrt(static_cast<double>(triangles_.size()));
  const double aspect = span_r / std::max(span_z, 1e-300);
  buckets_.nr = std::max(1, static_cast<int>(std::ceil(target * std::sqrt(aspect))));
  buckets_.nz = std::max(1, static_cast<int>(std::ceil(target / std::sqrt(aspect))));
  buckets_.origin = bbox_min_;
  buckets_.dr = span_r / buckets_.nr;
  buckets_.dz = span_z / buckets_.nz;
  buckets_.cells.assign(static_cast<std::size_t>(buckets_.nr * buckets_.nz), {});
  for (std::size_t t = 0; t < triangles_.size(); ++t) {
    Point lo = node(triangles_[t][0]), hi = lo;
    for (int v : triangles_[t]) {
      lo = {std::min(lo.r, node(v).r), std::min(lo.z, node(v).z)};
      hi = {std::max(hi.r, node(v).r), std::max(hi.z, node(v).z)};
    }
    const int i0 = std::clamp(static_cast<int>((lo.r - buckets_.origin.r) / buckets_.dr), 0, buckets_.nr - 1);
    const int i1 = std::clamp(static_cast<int>((hi.r - buckets_.origin.r) / buckets_.dr), 0, buckets_.nr - 1);
    const int j0 = std::clamp(static_cast<int>((lo.z - buckets_.origin.z) / buckets_.dz), 0, buckets_.nz - 1);
    const int j1 = std::clamp(static_cast<int>((hi.z - buckets_.origin.z) / buckets_.dz), 0, buckets_.nz - 1);
    for (int i = i0; i <= i1; ++i)
      for (int j = j0; j <= j1; ++j)
        buckets_.cells[static_cast<std::size_t>(j * buckets_.nr + i)].push_back(static_cast<int>(t));
  }
}

std::span<const int> Mesh::node_triangles(int node) const {
  const auto b = static_cast<std::size_t>(node_tri_offsets_[static_cast<std::size_t>(node)]);
  const auto e = static_cast<std::size_t>(node_tri_offsets_[static_cast<std::size_t>(node) + 1]);
  return {node_tri_list_.data() + b, e - b};
}

std::span<const int> Mesh::node_neighbors(int node) const {
  const auto b = static_cast<std::size_t>(node_nb_offsets_[static_cast<std::size_t>(node)]);
  const auto e = static_cast<std::size_t>(node_nb_offsets_[static_cast<std::size_t>(node) + 1]);
  return {node_nb_list_.data() + b, e - b};
}

double Mesh::total_area() const {
  double a = 0.0;
  for (const auto& e : elements_) a += e.area;
  return a;
}

double Mesh::boundary_length() const {
  double len = 0.0;
  for (std::size_t i = 0; i < boundary_.size(); ++i)
    len += norm(node(boundary_[(i + 1) % boundary_.size()]) - node(boundary_[i]));
  return len;
}

Point Mesh::boundary_normal(int node_id) const {
  const int pos = boundary_position(node_id);
  if (pos < 0) throw Error(ErrorKind::Argument, fmt::format("node {} is not on the boundary", node_id));
  const std::size_t nb = boundary_.size();
  const Point prev = node(boundary_[(static_cast<std::size_t>(pos) + nb - 1) % nb]);
  const Point here = node(node_id);
  const Point next = node(boundary_[(static_cast<std::size_t>(pos) + 1) % nb]);
  // counter-clockwise loop: outward normal of edge d is (d.z, -d.r)
  auto edge_normal = [](Point d) {
    const double l = norm(d);
    return Point{d.z / l, -d.r / l};
  };
  const Point n = edge_normal(here - prev) + edge_normal(next - here);
  const double l = norm(n);
  return {n.r / l, n.z / l};
}

bool Mesh::inside_limiter(Point p) const {
  if (limiter_.size() < 3) return true;
  return point_in_polygon(limiter_, p) || on_polygon(limiter_, p, 1e-12 * std::max(1.0, mesh_size_));
}

std::array<double, 3> barycentric(const Mesh& mesh, int triangle, Point p) {
  const auto& tri = mesh.triangle(triangle);
  const auto& g = mesh.element(triangle);
  std::array<double, 3> b{};
  // λ_k(p) = λ_k(v_k) + grad_k · (p - v_k) = 1 + grad_k · (p - v_k)
  for (std::size_t k = 0; k < 3; ++k) b[k] = 1.0 + dot(g.grad[k], p - mesh.node(tri[k]));
  return b;
}

namespace {
constexpr double kInsideTol = 1e-12;
}

std::optional<Location> PointLocator::walk(Point p, int start) {
  int t = start;
  const int max_steps = static_cast<int>(std::sqrt(static_cast<double>(mesh_->num_triangles()))) * 4 + 16;
  for (int step = 0; step < max_steps; ++step) {
    const auto b = barycentric(*mesh_, t, p);
    std::size_t worst = 0;
    for (std::size_t k = 1; k < 3; ++k)
      if (b[k] < b[worst]) worst = k;
    if (b[worst] >= -kInsideTol) return Location{t, b};
    const int next = mesh_->triangle_neighbors(t)[worst];
    if (next < 0) return std::nullopt;
    t = next;
  }
  return std::nullopt;
}

std::optional<Location> PointLocator::bucket_lookup(Point p) {
  const auto& g = mesh_->buckets();
  const int i = static_cast<int>(std::floor((p.r - g.origin.r) / g.dr));
  const int j = static_cast<int>(std::floor((p.z - g.origin.z) / g.dz));
  // points exactly on the max edge of the bbox belong to the last cell
  const int ic = std::clamp(i, 0, g.nr - 1);
  const int jc = std::clamp(j, 0, g.nz - 1);
  if (std::abs(i - ic) > 1 || std::abs(j - jc) > 1) return std::nullopt;
  for (int t : g.cells[static_cast<std::size_t>(jc * g.nr + ic)]) {
    const auto b = barycentric(*mesh_, t, p);
    if (b[0] >= -kInsideTol && b[1] >= -kInsideTol && b[2] >= -kInsideTol) return Location{t, b};
  }
  return std::nullopt;
}

std::optional<Location> PointLocator::locate(Point p) {
  if (last_ < 0 || last_ >= static_cast<int>(mesh_->num_triangles())) last_ = 0;
  auto hit = walk(p, last_);
  if (!hit) hit = bucket_lookup(p);
  if (hit) last_ = hit->triangle;
  return hit;
}

std::optional<double> interpolate(const Mesh& mesh, const NodalField& field, Point p,
                                  PointLocator& locator) {
  if (static_cast<std::size_t>(field.size()) != mesh.num_nodes())
    throw Error(ErrorKind::Argument, "field length does not match node count");
  const auto loc = locator.locate(p);
  if (!loc) return std::nullopt;
  const auto& tri = mesh.triangle(loc->triangle);
  // at a node the weight vector is exactly a unit vector, so nodal values are reproduced
  double v = 0.0;
  for (std::size_t k = 0; k < 3; ++k) v += loc->bary[k] * field[tri[k]];
  return v;
}

std::optional<double> interpolate(const Mesh& mesh, const NodalField& field, Point p) {
  PointLocator locator(mesh);
  return interpolate(mesh, field, p, locator);
}

Point element_gradient(const Mesh& mesh, const NodalField& field, int triangle) {
  const auto& tri = mesh.triangle(triangle);
  const auto& g = mesh.element(triangle);
  Point grad{};
  for (std::size_t k = 0; k < 3; ++k) grad = grad + field[tri[k]] * g.grad[k];
  return grad;
}

Mesh build_rect_mesh(double r_min, double r_max, double z_min, double z_max, int nr, int nz,
                     const RectMeshOptions& options) {
  if (!(r_min > 0.0)) throw Error(ErrorKind::Domain, fmt::format("r_min = {} must be positive", r_min));
  if (!(r_max > r_min)) throw Error(ErrorKind::Domain, "r_max must exceed r_min");
  if (!(z_max > z_min)) throw Error(ErrorKind::Domain, "z_max must exceed z_min");
  if (nr < 1 || nz < 1) throw Error(ErrorKind::Argument, "cell counts must be at least 1");

  const double dr = (r_max - r_min) / nr;
  const double dz = (z_max - z_min) / nz;
  auto id = [nr](int i, int j) { return j * (nr + 1) + i; };

  std::vector<Point> nodes;
  nodes.reserve(static_cast<std::size_t>((nr + 1) * (nz + 1)));
  for (int j = 0; j <= nz; ++j) {
    for (int i = 0; i <= nr; ++i) {
      // pin the last row/column to the exact extent
      const double r = i == nr ? r_max : r_min + i * dr;
      const double z = j == nz ? z_max : z_min + j * dz;
      nodes.push_back({r, z});
    }
  }
  std::vector<Triangle> tris;
  tris.reserve(static_cast<std::size_t>(2 * nr * nz));
  for (int j = 0; j < nz; ++j) {
    for (int i = 0; i < nr; ++i) {
      // alternate the diagonal so the grid has no preferred direction
      if ((i + j) % 2 == 0) {
        tris.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
        tris.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
      } else {
        tris.push_back({id(i, j), id(i + 1, j), id(i, j + 1)});
        tris.push_back({id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)});
      }
    }
  }
  std::vector<int> boundary;
  for (int i = 0; i < nr; ++i) boundary.push_back(id(i, 0));
  for (int j = 0; j < nz; ++j) boundary.push_back(id(nr, j));
  for (int i = nr; i > 0; --i) boundary.push_back(id(i, nz));
  for (int j = nz; j > 0; --j) boundary.push_back(id(0, j));

  std::vector<Point> limiter;
  const int off = options.limiter_offset_cells;
  if (off > 0 && 2 * off < nr && 2 * off < nz) {
    const double lr0 = r_min + off * dr, lr1 = r_max - off * dr;
    const double lz0 = z_min + off * dz, lz1 = z_max - off * dz;
    const int mr = nr - 2 * off, mz = nz - 2 * off;
    for (int i = 0; i < mr; ++i) limiter.push_back({lr0 + i * dr, lz0});
    for (int j = 0; j < mz; ++j) limiter.push_back({lr1, lz0 + j * dz});
    for (int i = mr; i > 0; --i) limiter.push_back({lr0 + i * dr, lz1});
    for (int j = mz; j > 0; --j) limiter.push_back({lr0, lz0 + j * dz});
  } else {
    for (int b : boundary) limiter.push_back(nodes[static_cast<std::size_t>(b)]);
  }
  return Mesh(std::move(nodes), std::move(tris), std::move(boundary), std::move(limiter));
}

std::string format_mesh(const Mesh& mesh) {
  std::string out = fmt::format("nodes {} triangles {} boundary {} limiter {}\n", mesh.num_nodes(),
                                mesh.num_triangles(), mesh.boundary().size(), mesh.limiter().size());
  for (const Point& p : mesh.nodes()) out += fmt::format("{:.17g} {:.17g}\n", p.r, p.z);
  for (const auto& t : mesh.triangles()) out += fmt::format("{} {} {}\n", t[0], t[1], t[2]);
  for (int b : mesh.boundary()) out += fmt::format("{}\n", b);
  for (const Point& p : mesh.limiter()) out += fmt::format("{:.17g} {:.17g}\n", p.r, p.z);
  return out;
}

void save_mesh(const Mesh& mesh, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorKind::Io, fmt::format("cannot write mesh file '{}'", path.string()));
  os << format_mesh(mesh);
}

namespace {

class LineReader {
 public:
  explicit LineReader(const std::string& text) : in_(text) {}

  std::istringstream next(const char* what) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos || line[first] == '#') continue;
      return std::istringstream(line);
    }
    throw Error(ErrorKind::Parse, fmt::format("line {}: unexpected end of file while reading {}",
                                              line_no_ + 1, what));
  }

  int line() const { return line_no_; }

 private:
  std::istringstream in_;
  int line_no_ = 0;
};

template <typename... T>
void read_fields(LineReader& reader, const char* what, T&... fields) {
  auto ss = reader.next(what);
  if (!((ss >> fields) && ...))
    throw Error(ErrorKind::Parse, fmt::format("line {}: malformed {}", reader.line(), what));
  std::string extra;
  if (ss >> extra)
    throw Error(ErrorKind::Parse, fmt::format("line {}: trailing data '{}' in {}", reader.line(), extra, what));
}

}  // namespace

Mesh parse_mesh(const std::string& text) {
  LineReader reader(text);
  std::string k1, k2, k3, k4;
  long n = 0, t = 0, b = 0, l = 0;
  read_fields(reader, "header", k1, n, k2, t, k3, b, k4, l);
  if (k1 != "nodes" || k2 != "triangles" || k3 != "boundary" || k4 != "limiter")
    throw Error(ErrorKind::Parse, "line 1: expected 'nodes N triangles T boundary B limiter L'");
  if (n < 0 || t < 0 || b < 0 || l < 0) throw Error(ErrorKind::Parse, "line 1: negative count");
  std::vector<Point> nodes(static_cast<std::size_t>(n));
  for (auto& p : nodes) read_fields(reader, "node", p.r, p.z);
  std::vector<Triangle> tris(static_cast<std::size_t>(t));
  for (auto& tri : tris) read_fields(reader, "triangle", tri[0], tri[1], tri[2]);
  std::vector<int> boundary(static_cast<std::size_t>(b));
  for (auto& v : boundary) read_fields(reader, "boundary index", v);
  std::vector<Point> limiter(static_cast<std::size_t>(l));
  for (auto& p : limiter) read_fields(reader, "limiter point", p.r, p.z);
  return Mesh(std::move(nodes), std::move(tris), std::move(boundary), std::move(limiter));
}

Mesh load_mesh(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::Io, fmt::format("cannot open mesh file '{}'", path.string()));
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_mesh(ss.str());
}

}  // namespace gsr
