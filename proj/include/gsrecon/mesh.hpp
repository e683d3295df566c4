#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace gsr {

/// Poloidal-plane coordinates in meters.
struct Point {
  double r = 0.0;
  double z = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

inline Point operator+(Point a, Point b) { return {a.r + b.r, a.z + b.z}; }
inline Point operator-(Point a, Point b) { return {a.r - b.r, a.z - b.z}; }
inline Point operator*(double s, Point a) { return {s * a.r, s * a.z}; }
inline double dot(Point a, Point b) { return a.r * b.r + a.z * b.z; }
inline double cross(Point a, Point b) { return a.r * b.z - a.z * b.r; }
double norm(Point a);

using Triangle = std::array<int, 3>;

/// One value per mesh node (poloidal flux in Wb/rad, normalized flux, ...).
using NodalField = Eigen::VectorXd;

/// Per-triangle constants of the P1 element: area and the (constant)
/// gradients of the three barycentric hat functions.
struct ElementGeometry {
  double area = 0.0;
  std::array<Point, 3> grad{};
  Point centroid{};
};

/// Triangulated poloidal cross-section with its ordered boundary loop and the
/// limiter contour. Immutable once constructed; safe to share across threads.
class Mesh {
 public:
  /// Validates all invariants. Clockwise triangles are reoriented and a
  /// warning is recorded; every other violation throws ErrorKind::Validation.
  Mesh(std::vector<Point> nodes, std::vector<Triangle> triangles, std::vector<int> boundary,
       std::vector<Point> limiter);

  std::size_t num_nodes() const { return nodes_.size(); }
  std::size_t num_triangles() const { return triangles_.size(); }

  const std::vector<Point>& nodes() const { return nodes_; }
  const Point& node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }
  const std::vector<Triangle>& triangles() const { return triangles_; }
  const Triangle& triangle(int t) const { return triangles_[static_cast<std::size_t>(t)]; }
  const ElementGeometry& element(int t) const { return elements_[static_cast<std::size_t>(t)]; }
  const std::vector<int>& boundary() const { return boundary_; }
  const std::vector<Point>& limiter() const { return limiter_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  bool is_boundary(int node) const { return on_boundary_[static_cast<std::size_t>(node)] != 0; }
  /// Position of a node in the boundary loop, or -1 for interior nodes.
  int boundary_position(int node) const { return boundary_pos_[static_cast<std::size_t>(node)]; }

  /// Triangles incident to a node.
  std::span<const int> node_triangles(int node) const;
  /// Nodes sharing an edge with a node (the 1-ring).
  std::span<const int> node_neighbors(int node) const;
  /// Triangle across each edge (edge k is opposite vertex k); -1 on the boundary.
  const std::array<int, 3>& triangle_neighbors(int t) const {
    return tri_neighbors_[static_cast<std::size_t>(t)];
  }

  double total_area() const;
  /// Length |Γ| of the closed boundary loop.
  double boundary_length() const;
  /// Mean edge length.
  double mesh_size() const { return mesh_size_; }
  Point bbox_min() const { return bbox_min_; }
  Point bbox_max() const { return bbox_max_; }

  /// Outward unit normal at a boundary node: average of the two adjacent
  /// boundary-edge normals.
  Point boundary_normal(int node) const;

  /// Point-in-polygon test against the limiter contour (closed implicitly).
  bool inside_limiter(Point p) const;

  // Uniform bucket grid used as the point-location fallback.
  struct BucketGrid {
    Point origin{};
    double dr = 1.0;
    double dz = 1.0;
    int nr = 1;
    int nz = 1;
    std::vector<std::vector<int>> cells;
  };
  const BucketGrid& buckets() const { return buckets_; }

 private:
  void build_topology();
  void build_buckets();

  std::vector<Point> nodes_;
  std::vector<Triangle> triangles_;
  std::vector<int> boundary_;
  std::vector<Point> limiter_;
  std::vector<std::string> warnings_;

  std::vector<ElementGeometry> elements_;
  std::vector<char> on_boundary_;
  std::vector<int> boundary_pos_;
  std::vector<int> node_tri_offsets_, node_tri_list_;
  std::vector<int> node_nb_offsets_, node_nb_list_;
  std::vector<std::array<int, 3>> tri_neighbors_;
  double mesh_size_ = 0.0;
  Point bbox_min_{}, bbox_max_{};
  BucketGrid buckets_;
};

/// Result of locating a point: containing triangle and barycentric weights.
struct Location {
  int triangle = -1;
  std::array<double, 3> bary{};
};

/// Walks from the last-hit triangle, falling back to the bucket grid.
/// Holds per-caller cache state: do not share one instance across threads.
class PointLocator {
 public:
  explicit PointLocator(const Mesh& mesh) : mesh_(&mesh) {}

  std::optional<Location> locate(Point p);

 private:
  std::optional<Location> walk(Point p, int start);
  std::optional<Location> bucket_lookup(Point p);

  const Mesh* mesh_;
  int last_ = 0;
};

std::array<double, 3> barycentric(const Mesh& mesh, int triangle, Point p);

/// P1 interpolation; std::nullopt when the point lies outside Ω.
std::optional<double> interpolate(const Mesh& mesh, const NodalField& field, Point p,
                                  PointLocator& locator);
std::optional<double> interpolate(const Mesh& mesh, const NodalField& field, Point p);

/// Constant gradient of a P1 field on one triangle.
Point element_gradient(const Mesh& mesh, const NodalField& field, int triangle);

struct RectMeshOptions {
  /// Inward offset of the default limiter, in cells.
  int limiter_offset_cells = 1;
};

/// Structured (nr+1)x(nz+1) grid, each cell split into two triangles.
/// Boundary ordered counter-clockwise starting at (r_min, z_min).
Mesh build_rect_mesh(double r_min, double r_max, double z_min, double z_max, int nr, int nz,
                     const RectMeshOptions& options = {});

/// Plain text format:
///   nodes N triangles T boundary B limiter L
///   N lines "r z", T lines "i j k" (0-based), B boundary indices, L lines "r z".
void save_mesh(const Mesh& mesh, const std::filesystem::path& path);
Mesh load_mesh(const std::filesystem::path& path);
Mesh parse_mesh(const std::string& text);
std::string format_mesh(const Mesh& mesh);

}  // namespace gsr
