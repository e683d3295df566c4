#include "gsrecon/plasma_domain.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <set>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "gsrecon/error.hpp"

namespace gsr {

namespace {

/// ψ ≈ c0 + c1 x + c2 y + c3 x² + c4 xy + c5 y² in coordinates scaled by h
/// around a node.
struct QuadraticFit {
  Point center{};
  double h = 1.0;
  Eigen::Matrix<double, 6, 1> c = Eigen::Matrix<double, 6, 1>::Zero();

  double value(Point p) const {
    const double x = (p.r - center.r) / h, y = (p.z - center.z) / h;
    return c[0] + c[1] * x + c[2] * y + c[3] * x * x + c[4] * x * y + c[5] * y * y;
  }
  /// Hessian in scaled coordinates.
  Eigen::Matrix2d hessian() const {
    Eigen::Matrix2d H;
    H << 2.0 * c[3], c[4], c[4], 2.0 * c[5];
    return H;
  }
  std::optional<Point> stationary_point() const {
    const Eigen::Matrix2d H = hessian();
    if (std::abs(H.determinant()) < 1e-300) return std::nullopt;
    const Eigen::Vector2d d = H.inverse() * (-Eigen::Vector2d(c[1], c[2]));
    return Point{center.r + h * d[0], center.z + h * d[1]};
  }
};

std::vector<int> fit_stencil(const Mesh& mesh, int node) {
  std::vector<int> pts{node};
  for (int nb : mesh.node_neighbors(node)) pts.push_back(nb);
  if (pts.size() < 7) {
    std::set<int> ring(pts.begin(), pts.end());
    for (int nb : mesh.node_neighbors(node))
      for (int nb2 : mesh.node_neighbors(nb)) ring.insert(nb2);
    pts.assign(ring.begin(), ring.end());
  }
  return pts;
}

std::optional<QuadraticFit> fit_quadratic(const Mesh& mesh, const NodalField& psi, int node) {
  const auto pts = fit_stencil(mesh, node);
  if (pts.size() < 6) return std::nullopt;
  QuadraticFit fit;
  fit.center = mesh.node(node);
  fit.h = mesh.mesh_size();
  Eigen::MatrixXd design(static_cast<Eigen::Index>(pts.size()), 6);
  Eigen::VectorXd rhs(static_cast<Eigen::Index>(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Point p = mesh.node(pts[i]);
    const double x = (p.r - fit.center.r) / fit.h, y = (p.z - fit.center.z) / fit.h;
    design.row(static_cast<Eigen::Index>(i)) << 1.0, x, y, x * x, x * y, y * y;
    rhs[static_cast<Eigen::Index>(i)] = psi[pts[i]];
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < 6) return std::nullopt;
  fit.c = qr.solve(rhs);
  return fit;
}

bool strict_local_max(const Mesh& mesh, const NodalField& psi, int node) {
  bool strictly_above_one = false;
  for (int nb : mesh.node_neighbors(node)) {
    if (psi[nb] > psi[node]) return false;
    if (psi[nb] < psi[node]) strictly_above_one = true;
  }
  return strictly_above_one;
}

}  // namespace

bool is_flat(const NodalField& psi) {
  if (psi.size() == 0) return true;
  const double lo = psi.minCoeff(), hi = psi.maxCoeff();
  return hi - lo <= 1e-14 * std::max(1.0, std::max(std::abs(lo), std::abs(hi)));
}

CriticalPoint find_axis(const Mesh& mesh, const NodalField& psi) {
  if (static_cast<std::size_t>(psi.size()) != mesh.num_nodes())
    throw Error(ErrorKind::Argument, "field length does not match node count");
  int best = -1;
  for (int i = 0; i < static_cast<int>(mesh.num_nodes()); ++i) {
    if (mesh.is_boundary(i) || !mesh.inside_limiter(mesh.node(i))) continue;
    if (!strict_local_max(mesh, psi, i)) continue;
    if (best < 0 || psi[i] > psi[best]) best = i;
  }
  if (best < 0) throw Error(ErrorKind::NoPlasma, "ψ has no interior maximum (no magnetic axis)");

  CriticalPoint cp{mesh.node(best), psi[best], best};
  if (const auto fit = fit_quadratic(mesh, psi, best)) {
    const Eigen::Matrix2d H = fit->hessian();
    const auto sp = fit->stationary_point();
    // accept the refinement only for a genuine maximum close to the node
    if (sp && H(0, 0) < 0.0 && H.determinant() > 0.0 && norm(*sp - cp.location) <= 1.5 * fit->h) {
      const double v = fit->value(*sp);
      if (v >= psi[best]) {
        cp.location = *sp;
        cp.psi = v;
      }
    }
  }
  return cp;
}

std::optional<CriticalPoint> find_xpoint(const Mesh& mesh, const NodalField& psi, const XPointOptions& options) {
  if (static_cast<std::size_t>(psi.size()) != mesh.num_nodes())
    throw Error(ErrorKind::Argument, "field length does not match node count");
  const double scale = psi.cwiseAbs().maxCoeff();
  if (scale == 0.0) return std::nullopt;
  // the fit works in h-scaled coordinates, so the Hessian scale is max|ψ| itself
  const double det_tol = options.det_tolerance * scale * scale;
  std::optional<CriticalPoint> best;
  for (int i = 0; i < static_cast<int>(mesh.num_nodes()); ++i) {
    if (mesh.is_boundary(i) || !mesh.inside_limiter(mesh.node(i))) continue;
    // saddle candidates have neighbors both above and below
    bool above = false, below = false;
    for (int nb : mesh.node_neighbors(i)) {
      above |= psi[nb] > psi[i];
      below |= psi[nb] < psi[i];
    }
    if (!above || !below) continue;
    const auto fit = fit_quadratic(mesh, psi, i);
    if (!fit) continue;
    if (!(fit->hessian().determinant() < -det_tol)) continue;
    const auto sp = fit->stationary_point();
    if (!sp) continue;
    // the node closest to the saddle claims it
    if (std::abs(sp->r - fit->center.r) > 0.5 * fit->h || std::abs(sp->z - fit->center.z) > 0.5 * fit->h) continue;
    if (!mesh.inside_limiter(*sp)) continue;
    const double v = fit->value(*sp);
    if (!best || v > best->psi) best = CriticalPoint{*sp, v, i};
  }
  return best;
}

double limiter_max(const Mesh& mesh, const NodalField& psi) {
  const auto& lim = mesh.limiter();
  if (lim.empty()) throw Error(ErrorKind::State, "mesh has no limiter contour");
  PointLocator loc(mesh);
  double best = -std::numeric_limits<double>::infinity();
  const double step = 0.5 * mesh.mesh_size();
  for (std::size_t i = 0; i < lim.size(); ++i) {
    const Point a = lim[i];
    const Point b = lim[(i + 1) % lim.size()];
    const int pieces = std::max(1, static_cast<int>(std::ceil(norm(b - a) / step)));
    for (int k = 0; k < pieces; ++k) {
      const Point p = a + (static_cast<double>(k) / pieces) * (b - a);
      if (const auto v = interpolate(mesh, psi, p, loc)) best = std::max(best, *v);
    }
  }
  return best;
}

BoundaryFlux boundary_flux(const Mesh& mesh, const NodalField& psi, double psi_axis,
                           const std::optional<CriticalPoint>& xpoint) {
  BoundaryFlux out{limiter_max(mesh, psi), BoundaryMode::Limiter};
  if (xpoint && xpoint->psi >= out.psi_boundary && xpoint->psi < psi_axis) {
    out.psi_boundary = xpoint->psi;
    out.mode = BoundaryMode::XPoint;
  }
  const double scale = std::max(std::abs(psi_axis), std::abs(out.psi_boundary));
  if (!(psi_axis - out.psi_boundary > 1e-14 * std::max(scale, 1e-300)))
    throw Error(ErrorKind::DegeneratePlasma,
                fmt::format("boundary flux {} does not lie below the axis flux {}", out.psi_boundary, psi_axis));
  return out;
}

NodalField normalized_flux(const NodalField& psi, double psi_axis, double psi_boundary) {
  if (psi_axis == psi_boundary) throw Error(ErrorKind::DegeneratePlasma, "ψ_a equals ψ_b");
  return (psi.array() - psi_axis) / (psi_boundary - psi_axis);
}

PlasmaState locate_plasma(const Mesh& mesh, const NodalField& psi, const XPointOptions& options) {
  PlasmaState st;
  const auto axis = find_axis(mesh, psi);
  const auto xpt = find_xpoint(mesh, psi, options);
  const auto bf = boundary_flux(mesh, psi, axis.psi, xpt);
  st.domain.psi_axis = axis.psi;
  st.domain.psi_boundary = bf.psi_boundary;
  st.domain.axis = axis.location;
  st.domain.axis_node = axis.node;
  st.domain.mode = bf.mode;
  if (xpt) st.domain.xpoint = xpt->location;
  st.psibar = normalized_flux(psi, axis.psi, bf.psi_boundary);

  // flood the component {ψ̄ ≤ 1} containing the axis, inside the limiter and,
  // with an X-point, on the axis side of it (excludes the private flux region)
  const std::size_t n = mesh.num_nodes();
  std::vector<char> in(n, 0);
  auto admissible = [&](int i) {
    const Point p = mesh.node(i);
    if (!(st.psibar[i] <= 1.0) || !mesh.inside_limiter(p)) return false;
    if (bf.mode == BoundaryMode::XPoint) {
      const Point x = *st.domain.xpoint;
      if (dot(p - x, st.domain.axis - x) <= 0.0) return false;
    }
    return true;
  };
  std::deque<int> queue;
  if (admissible(axis.node)) {
    in[static_cast<std::size_t>(axis.node)] = 1;
    queue.push_back(axis.node);
  }
  while (!queue.empty()) {
    const int i = queue.front();
    queue.pop_front();
    for (int nb : mesh.node_neighbors(i)) {
      if (!in[static_cast<std::size_t>(nb)] && admissible(nb)) {
        in[static_cast<std::size_t>(nb)] = 1;
        queue.push_back(nb);
      }
    }
  }
  st.active.assign(mesh.num_triangles(), 0);
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
    for (int v : mesh.triangle(static_cast<int>(t))) {
      if (in[static_cast<std::size_t>(v)]) {
        st.active[t] = 1;
        break;
      }
    }
  }
  return st;
}

PlasmaState cold_plasma_state(const Mesh& mesh, double psi_value) {
  PlasmaState st;
  st.cold = true;
  st.domain.psi_axis = psi_value;
  st.domain.psi_boundary = psi_value;
  Point c{};
  for (const Point& p : mesh.limiter()) c = c + p;
  if (!mesh.limiter().empty()) c = (1.0 / static_cast<double>(mesh.limiter().size())) * c;
  st.domain.axis = c;
  st.psibar = NodalField::Zero(static_cast<Eigen::Index>(mesh.num_nodes()));
  st.active.assign(mesh.num_triangles(), 0);
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t)
    st.active[t] = mesh.inside_limiter(mesh.element(static_cast<int>(t)).centroid) ? 1 : 0;
  return st;
}

double plasma_mask(const Mesh& mesh, const PlasmaState& state, Point p, PointLocator& locator) {
  const auto loc = locator.locate(p);
  if (!loc || !state.active[static_cast<std::size_t>(loc->triangle)]) return 0.0;
  const auto& tri = mesh.triangle(loc->triangle);
  double pb = 0.0;
  for (std::size_t k = 0; k < 3; ++k) pb += loc->bary[k] * state.psibar[tri[k]];
  return pb <= 1.0 ? 1.0 : 0.0;
}

namespace {

template <typename F>
void for_each_midedge_point(const Mesh& mesh, int t, F&& f) {
  const auto& tri = mesh.triangle(t);
  const double w = mesh.element(t).area / 3.0;
  for (std::size_t k = 0; k < 3; ++k) {
    const std::size_t a = (k + 1) % 3, b = (k + 2) % 3;
    std::array<double, 3> bary{};
    bary[a] = 0.5;
    bary[b] = 0.5;
    const Point p = 0.5 * (mesh.node(tri[a]) + mesh.node(tri[b]));
    f(p, bary, w);
  }
}

}  // namespace

std::vector<QuadPoint> plasma_quadrature(const Mesh& mesh, const PlasmaState& state) {
  std::vector<QuadPoint> pts;
  pts.reserve(3 * mesh.num_triangles());
  for (int t = 0; t < static_cast<int>(mesh.num_triangles()); ++t) {
    if (!state.active[static_cast<std::size_t>(t)]) continue;
    const auto& tri = mesh.triangle(t);
    for_each_midedge_point(mesh, t, [&](Point p, const std::array<double, 3>& bary, double w) {
      double pb = 0.0;
      for (std::size_t k = 0; k < 3; ++k) pb += bary[k] * state.psibar[tri[k]];
      if (pb <= 1.0) pts.push_back(QuadPoint{t, p, bary, w, pb});
    });
  }
  return pts;
}

double triangle_plasma_coverage(const Mesh& mesh, const PlasmaState& state, int triangle) {
  if (!state.active[static_cast<std::size_t>(triangle)]) return 0.0;
  const auto& tri = mesh.triangle(triangle);
  double covered = 0.0;
  for_each_midedge_point(mesh, triangle, [&](Point, const std::array<double, 3>& bary, double w) {
    double pb = 0.0;
    for (std::size_t k = 0; k < 3; ++k) pb += bary[k] * state.psibar[tri[k]];
    if (pb <= 1.0) covered += w;
  });
  return covered / mesh.element(triangle).area;
}

}  // namespace gsr
