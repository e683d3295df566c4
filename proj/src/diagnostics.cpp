#include "gsrecon/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <unordered_map>

#include <fmt/format.h>

namespace gsr {

double FluxContour::length() const {
  double l = 0.0;
  for (std::size_t i = 0; i + 1 < points.size(); ++i) l += norm(points[i + 1] - points[i]);
  return l;
}

namespace {

struct Segment {
  int p0, p1;  // crossing-point ids
  int triangle;
};

bool point_in_polygon(const std::vector<Point>& poly, Point p) {
  bool inside = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const Point a = poly[i], b = poly[j];
    if ((a.z > p.z) != (b.z > p.z) && p.r < (b.r - a.r) * (p.z - a.z) / (b.z - a.z) + a.r) inside = !inside;
  }
  return inside;
}

double signed_area(const std::vector<Point>& poly) {
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < poly.size(); ++i) s += cross(poly[i], poly[i + 1]);
  return 0.5 * s;
}

struct Chain {
  std::vector<int> pts;   // point ids
  std::vector<int> tris;  // triangle per segment
  bool closed = false;
};

}  // namespace

FluxContour extract_contour(const Mesh& mesh, const NodalField& psi, const PlasmaState& state, double level) {
  if (!(level > 0.0 && level < 1.0))
    throw Error(ErrorKind::Argument, fmt::format("contour level {} is outside (0, 1)", level));
  const NodalField& pb = state.psibar;
  if (pb.size() != static_cast<Eigen::Index>(mesh.num_nodes()) || psi.size() != pb.size())
    throw Error(ErrorKind::Argument, "field sizes do not match the mesh");

  std::unordered_map<std::uint64_t, int> edge_point;
  std::vector<Point> xs;
  std::vector<Segment> segs;
  auto crossing = [&](int a, int b) {
    const auto lo = static_cast<std::uint64_t>(std::min(a, b)), hi = static_cast<std::uint64_t>(std::max(a, b));
    const std::uint64_t key = (lo << 32) | hi;
    const auto it = edge_point.find(key);
    if (it != edge_point.end()) return it->second;
    const double va = pb[a], vb = pb[b];
    const double t = (level - va) / (vb - va);
    xs.push_back(mesh.node(a) + t * (mesh.node(b) - mesh.node(a)));
    const int id = static_cast<int>(xs.size()) - 1;
    edge_point.emplace(key, id);
    return id;
  };
  for (int t = 0; t < static_cast<int>(mesh.num_triangles()); ++t) {
    const auto& tri = mesh.triangle(t);
    int ids[2], n = 0;
    for (std::size_t k = 0; k < 3; ++k) {
      const int a = tri[(k + 1) % 3], b = tri[(k + 2) % 3];
      if ((pb[a] >= level) != (pb[b] >= level)) ids[n++] = crossing(a, b);
    }
    if (n == 2) segs.push_back({ids[0], ids[1], t});
  }

  std::vector<std::vector<int>> at(xs.size());
  for (int s = 0; s < static_cast<int>(segs.size()); ++s) {
    at[static_cast<std::size_t>(segs[s].p0)].push_back(s);
    at[static_cast<std::size_t>(segs[s].p1)].push_back(s);
  }
  std::vector<char> used(segs.size(), 0);
  auto next_seg = [&](int point) {
    for (int s : at[static_cast<std::size_t>(point)])
      if (!used[static_cast<std::size_t>(s)]) return s;
    return -1;
  };
  auto other = [&](int s, int point) { return segs[s].p0 == point ? segs[s].p1 : segs[s].p0; };

  std::vector<Chain> chains;
  for (int s0 = 0; s0 < static_cast<int>(segs.size()); ++s0) {
    if (used[static_cast<std::size_t>(s0)]) continue;
    used[static_cast<std::size_t>(s0)] = 1;
    Chain c;
    c.pts = {segs[s0].p0, segs[s0].p1};
    c.tris = {segs[s0].triangle};
    for (int s = next_seg(c.pts.back()); s >= 0; s = next_seg(c.pts.back())) {
      used[static_cast<std::size_t>(s)] = 1;
      c.pts.push_back(other(s, c.pts.back()));
      c.tris.push_back(segs[s].triangle);
      if (c.pts.back() == c.pts.front()) {
        c.closed = true;
        break;
      }
    }
    if (!c.closed) {
      // extend backwards from the start
      std::vector<int> bp, bt;
      for (int s = next_seg(c.pts.front()), cur = c.pts.front(); s >= 0; s = next_seg(cur)) {
        used[static_cast<std::size_t>(s)] = 1;
        cur = other(s, cur);
        bp.push_back(cur);
        bt.push_back(segs[s].triangle);
      }
      c.pts.insert(c.pts.begin(), bp.rbegin(), bp.rend());
      c.tris.insert(c.tris.begin(), bt.rbegin(), bt.rend());
    }
    chains.push_back(std::move(c));
  }

  const Point axis = state.domain.axis;
  const Chain* best = nullptr;
  double best_area = 0.0;
  bool open_around_axis = false;
  for (const auto& c : chains) {
    std::vector<Point> poly;
    for (int id : c.pts) poly.push_back(xs[static_cast<std::size_t>(id)]);
    if (!c.closed) {
      // An open branch passing on both sides of the axis means the surface leaves Ω.
      if (poly.size() > 2) {
        poly.push_back(poly.front());
        if (point_in_polygon(poly, axis)) open_around_axis = true;
      }
      continue;
    }
    if (!point_in_polygon(poly, axis)) continue;
    const double area = std::abs(signed_area(poly));
    if (!best || area < best_area) {
      best = &c;
      best_area = area;
    }
  }
  if (!best)
    throw Error(ErrorKind::OpenContour,
                fmt::format("no closed contour of level {} encloses the axis{}", level,
                            open_around_axis ? " (the level line leaves the mesh)" : ""));

  FluxContour out;
  out.level = level;
  for (int id : best->pts) out.points.push_back(xs[static_cast<std::size_t>(id)]);
  std::vector<int> tris = best->tris;
  if (signed_area(out.points) < 0.0) {
    std::reverse(out.points.begin(), out.points.end());
    std::reverse(tris.begin(), tris.end());
  }
  for (std::size_t s = 0; s < tris.size(); ++s) {
    const double g = norm(element_gradient(mesh, psi, tris[s]));
    const double rm = 0.5 * (out.points[s].r + out.points[s + 1].r);
    out.grad_psi.push_back(g);
    out.bp.push_back(g / rm);
  }
  return out;
}

namespace {

// Σ over segments of dl / |∇ψ| · (w(p0) + w(p1)) / 2
template <typename W>
double contour_integral(const FluxContour& c, W&& w) {
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < c.points.size(); ++i) {
    const double dl = norm(c.points[i + 1] - c.points[i]);
    if (dl == 0.0) continue;
    if (!(c.grad_psi[i] > 0.0))
      throw Error(ErrorKind::DegenerateSurface, fmt::format("zero poloidal field on contour {}", c.level));
    s += dl / c.grad_psi[i] * 0.5 * (w(c.points[i]) + w(c.points[i + 1]));
  }
  return s;
}

}  // namespace

double flux_surface_average(const FluxContour& c, const std::function<double(Point)>& q) {
  if (c.points.size() < 3) throw Error(ErrorKind::DegenerateSurface, "contour has fewer than three points");
  const double den = contour_integral(c, [](Point p) { return p.r; });
  if (!(den > 0.0) || !std::isfinite(den))
    throw Error(ErrorKind::DegenerateSurface, fmt::format("vanishing ∮dl/B_p on contour {}", c.level));
  const double num = contour_integral(c, [&](Point p) { return q(p) * p.r; });
  return num / den;
}

double safety_factor(const FluxContour& c, double f) {
  if (c.points.size() < 3) throw Error(ErrorKind::DegenerateSurface, "contour has fewer than three points");
  return f / (2.0 * std::numbers::pi) * contour_integral(c, [](Point p) { return 1.0 / p.r; });
}

double mean_current_density(double lambda, double a, double b, double r0, double inv_r2) {
  return lambda * a + lambda * r0 * r0 * inv_r2 * b;
}

FProfile::FProfile(std::vector<double> grid, std::vector<double> values)
    : grid_(std::move(grid)), values_(std::move(values)) {
  if (grid_.size() != values_.size() || grid_.size() < 2) throw Error(ErrorKind::Argument, "bad f table");
}

double FProfile::operator()(double x) const {
  if (x >= grid_.back()) return values_.back();
  if (x <= grid_.front()) return values_.front();
  const auto it = std::upper_bound(grid_.begin(), grid_.end(), x);
  const std::size_t i = static_cast<std::size_t>(it - grid_.begin()) - 1;
  const double t = (x - grid_[i]) / (grid_[i + 1] - grid_[i]);
  return (1.0 - t) * values_[i] + t * values_[i + 1];
}

FProfile integrate_f(const std::function<double(double)>& b, double lambda, double psi_axis, double psi_boundary,
                     double B0, double r0, double mu0, int intervals) {
  if (intervals < 1) throw Error(ErrorKind::Argument, "need at least one interval");
  const auto n = static_cast<std::size_t>(intervals);
  std::vector<double> grid(n + 1), vals(n + 1);
  for (std::size_t i = 0; i <= n; ++i) grid[i] = static_cast<double>(i) / static_cast<double>(n);
  grid[n] = 1.0;
  const double f_edge = B0 * r0;
  const double sign = f_edge < 0.0 ? -1.0 : 1.0;
  const double coef = 2.0 * lambda * mu0 * r0 * (psi_axis - psi_boundary);
  vals[n] = f_edge;
  double integral = 0.0;  // ∫_x^1 B
  for (std::size_t i = n; i-- > 0;) {
    integral += 0.5 * (grid[i + 1] - grid[i]) * (b(grid[i]) + b(grid[i + 1]));
    const double rad = f_edge * f_edge + coef * integral;
    if (rad < 0.0)
      throw Error(ErrorKind::NonphysicalProfile, fmt::format("f² becomes negative at psibar = {:.3f}", grid[i]));
    vals[i] = sign * std::sqrt(rad);
  }
  return FProfile(std::move(grid), std::move(vals));
}

FProfile integrate_f(const Equilibrium& eq, int intervals) {
  const SplineBasis& basis = eq.basis;
  const ProfileExpansion& p = eq.profiles;
  return integrate_f([&](double x) { return eval_expansion(basis, p, ProfileKind::B, x); }, eq.lambda,
                     eq.plasma.domain.psi_axis, eq.plasma.domain.psi_boundary, eq.machine.B0, eq.machine.r0,
                     eq.machine.mu0, intervals);
}

ProfileTable compute_profile_table(const Equilibrium& eq, const Mesh& mesh, double ne_scale,
                                   const ProfileTableOptions& options) {
  ProfileSource src;
  const SplineBasis basis = eq.basis;
  const ProfileExpansion p = eq.profiles;
  src.a = [basis, p](double x) { return eval_expansion(basis, p, ProfileKind::A, x); };
  src.b = [basis, p](double x) { return eval_expansion(basis, p, ProfileKind::B, x); };
  if (p.ne) src.ne = [basis, p, ne_scale](double x) { return ne_scale * eval_coefficients(basis, *p.ne, x); };
  src.lambda = eq.lambda;
  return compute_profile_table(mesh, eq.psi, eq.plasma, eq.machine, src, options);
}

ProfileTable compute_profile_table(const Mesh& mesh, const NodalField& psi, const PlasmaState& state,
                                   const MachineParams& machine, const ProfileSource& source,
                                   const ProfileTableOptions& options) {
  if (options.points < 2) throw Error(ErrorKind::Argument, "profile table needs at least two points");
  const auto n = static_cast<std::size_t>(options.points);
  const double r0 = machine.r0, lambda = source.lambda;
  const FProfile f = integrate_f(source.b, lambda, state.domain.psi_axis, state.domain.psi_boundary, machine.B0,
                                 machine.r0, machine.mu0);

  ProfileTable t;
  t.psibar.resize(n);
  t.lambda_a.resize(n);
  t.f.resize(n);
  t.lambda_b_weighted.assign(n, std::nullopt);
  t.j_mean.assign(n, std::nullopt);
  t.q.assign(n, std::nullopt);
  t.inv_r2.assign(n, std::nullopt);
  t.ne.assign(n, std::nullopt);
  t.near_separatrix.assign(n, 0);
  std::vector<double> bvals(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = static_cast<double>(i) / static_cast<double>(n - 1);
    t.psibar[i] = x;
    t.lambda_a[i] = lambda * source.a(x);
    bvals[i] = source.b(x);
    t.f[i] = f(x);
    if (source.ne) t.ne[i] = source.ne(x);
  }

  const double tol = 1e-12;
  const double h = mesh.mesh_size();
  const auto ni = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 1) if (options.parallel)
  for (std::ptrdiff_t ii = 0; ii < ni; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const double x = t.psibar[i];
    if (x < options.margin - tol || x > 1.0 - options.margin + tol) continue;
    try {
      const FluxContour c = extract_contour(mesh, psi, state, x);
      t.inv_r2[i] = flux_surface_average(c, [](Point p) { return 1.0 / (p.r * p.r); });
      t.q[i] = safety_factor(c, t.f[i]);
      if (state.domain.xpoint) {
        for (const Point& p : c.points)
          if (norm(p - *state.domain.xpoint) < 2.0 * h) t.near_separatrix[i] = 1;
      }
    } catch (const Error&) {
      // left absent
    }
  }

  // Linear extrapolation towards the axis and the boundary from the two
  // nearest traced levels.
  auto extrapolate = [&](std::vector<std::optional<double>>& v) {
    std::vector<std::size_t> have;
    for (std::size_t i = 0; i < n; ++i)
      if (v[i]) have.push_back(i);
    if (have.size() < 2) return;
    const std::size_t a0 = have[0], a1 = have[1], b1 = have[have.size() - 2], b0 = have.back();
    for (std::size_t i = 0; i < a0; ++i) {
      const double s = (t.psibar[i] - t.psibar[a0]) / (t.psibar[a1] - t.psibar[a0]);
      v[i] = *v[a0] + s * (*v[a1] - *v[a0]);
    }
    for (std::size_t i = b0 + 1; i < n; ++i) {
      const double s = (t.psibar[i] - t.psibar[b0]) / (t.psibar[b1] - t.psibar[b0]);
      v[i] = *v[b0] + s * (*v[b1] - *v[b0]);
    }
  };
  extrapolate(t.inv_r2);
  extrapolate(t.q);
  for (std::size_t i = 0; i < n; ++i) {
    if (!t.inv_r2[i]) continue;
    t.lambda_b_weighted[i] = lambda * r0 * r0 * *t.inv_r2[i] * bvals[i];
    t.j_mean[i] = t.lambda_a[i] + *t.lambda_b_weighted[i];
  }
  return t;
}

std::string format_profile_csv(const ProfileTable& t) {
  auto opt = [](const std::optional<double>& v) { return v ? fmt::format("{:.10g}", *v) : std::string(); };
  std::string out = "psibar,lambdaA,lambdaB_weighted,j_mean,q,f,ne\n";
  for (std::size_t i = 0; i < t.psibar.size(); ++i)
    out += fmt::format("{:.6g},{:.10g},{},{},{},{:.10g},{}\n", t.psibar[i], t.lambda_a[i], opt(t.lambda_b_weighted[i]),
                       opt(t.j_mean[i]), opt(t.q[i]), t.f[i], opt(t.ne[i]));
  return out;
}

double mean_relative_error(const std::vector<std::optional<double>>& x,
                           const std::vector<std::optional<double>>& ref) {
  if (x.size() != ref.size()) throw Error(ErrorKind::Argument, "profile sizes differ");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!x[i] || !ref[i]) continue;
    num += std::abs(*x[i] - *ref[i]);
    den += std::abs(*ref[i]);
  }
  if (!(den > 0.0)) throw Error(ErrorKind::Argument, "reference profile is zero");
  return num / den;
}

double mean_relative_error(const std::vector<double>& x, const std::vector<double>& ref) {
  std::vector<std::optional<double>> a(x.begin(), x.end()), b(ref.begin(), ref.end());
  return mean_relative_error(a, b);
}

}  // namespace gsr
