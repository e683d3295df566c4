#include "gsrecon/twin.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>
#include <omp.h>

namespace gsr {

Mesh make_twin_mesh(const TwinScenario& s) {
  const Mesh box = build_rect_mesh(s.r_min, s.r_max, s.z_min, s.z_max, s.nr, s.nz);
  std::vector<Point> lim;
  for (int k = 0; k < s.limiter_points; ++k) {
    const double t = 2.0 * std::numbers::pi * k / s.limiter_points;
    lim.push_back({s.limiter_center.r + s.limiter_half_width * std::cos(t),
                   s.limiter_center.z + s.limiter_half_height * std::sin(t)});
  }
  return Mesh(box.nodes(), box.triangles(), box.boundary(), std::move(lim));
}

std::vector<double> twin_boundary_flux(const Mesh& mesh, const TwinScenario& s) {
  const double r02 = s.machine.r0 * s.machine.r0;
  std::vector<double> g;
  for (int b : mesh.boundary()) {
    const Point p = mesh.node(b);
    const double r2 = p.r * p.r;
    g.push_back(s.flux_offset + s.vertical_field * (r2 - r02) +
                s.shaping_field * (r2 * r2 - 4.0 * r2 * p.z * p.z - r02 * r02));
  }
  return g;
}

ReferenceProfiles twin_reference_profiles(const TwinScenario& s) {
  if (s.table_points < 2) throw Error(ErrorKind::Argument, "need at least two table points");
  std::vector<double> x, a, b;
  for (int i = 0; i < s.table_points; ++i) {
    const double xi = static_cast<double>(i) / (s.table_points - 1);
    x.push_back(xi);
    a.push_back((1.0 - xi) * std::exp(-xi));
    b.push_back(0.5 * std::sin(0.5 * std::numbers::pi * (1.0 - xi)));
  }
  return {TabulatedProfile(x, a), TabulatedProfile(x, b)};
}

double twin_reference_density(const TwinScenario& s, double x) { return s.ne_peak * (1.0 - 0.7 * x * x); }

std::vector<ChordMeasurement> twin_chords(const TwinScenario& s) {
  std::vector<ChordMeasurement> out;
  const double c = s.limiter_center.r, w = s.limiter_half_width, h = s.limiter_half_height;
  for (int i = 0; i < s.vertical_chords; ++i) {
    const double r = c - 0.8 * w + 1.6 * w * (i + 0.5) / s.vertical_chords;
    out.push_back({{r, s.z_min}, {r, s.z_max}, 0.0, 0.0});
  }
  for (int i = 0; i < s.horizontal_chords; ++i) {
    const double z = s.limiter_center.z - 0.6 * h + 1.2 * h * (i + 0.5) / s.horizontal_chords;
    out.push_back({{s.r_min, z}, {s.r_max, z}, 0.0, 0.0});
  }
  return out;
}

TwinReference make_twin_reference(const FemSystem& fem, const TwinScenario& s, const ForwardOptions& options) {
  const Mesh& mesh = fem.mesh();
  TwinReference ref;
  ref.truth = twin_reference_profiles(s);
  const auto g = twin_boundary_flux(mesh, s);
  ref.eq = forward_fixed_point(fem, s.machine, ref.truth, g, options);
  ref.lambda = compute_lambda(mesh, ref.eq.plasma, ref.truth, s.machine.Ip, s.machine.r0);
  const double scale = ref.ne_scale;
  ref.ne = fit_coefficients(ref.eq.basis, [&](double x) { return twin_reference_density(s, x) / scale; }, false);
  ref.eq.profiles.ne = ref.ne;
  ProfileSource src;
  src.a = ref.truth.a;
  src.b = ref.truth.b;
  const SplineBasis basis = ref.eq.basis;
  const Eigen::VectorXd ne = ref.ne;
  src.ne = [basis, ne, scale](double x) { return scale * eval_coefficients(basis, ne, x); };
  src.lambda = ref.lambda;
  ref.table = compute_profile_table(mesh, ref.eq.psi, ref.eq.plasma, s.machine, src);
  return ref;
}

MeasurementSet synthesize_measurements(const Mesh& mesh, const Equilibrium& eq, std::span<const ChordMeasurement> chords,
                                       std::span<const Point> neumann_points,
                                       const std::optional<Eigen::VectorXd>& ne, double ne_scale) {
  MeasurementSet ms;
  ms.Ip = eq.machine.Ip;
  ms.B0 = eq.machine.B0;
  for (int b : mesh.boundary()) ms.g_D.push_back({mesh.node(b), eq.psi[b]});
  const Eigen::VectorXd gn = build_neumann_observer(mesh, neumann_points) * eq.psi;
  for (std::size_t k = 0; k < neumann_points.size(); ++k)
    ms.g_N.push_back({neumann_points[k], gn[static_cast<Eigen::Index>(k)]});
  if (!chords.empty()) {
    std::vector<Chord> cs;
    for (const auto& c : chords) cs.push_back(make_chord(mesh, c.start, c.end));
    const Eigen::VectorXd coeffs = ne ? *ne : Eigen::VectorXd::Zero(eq.basis.size());
    const Eigen::VectorXd gamma = ne_scale * (build_interferometry_matrix(mesh, cs, eq.plasma, eq.basis) * coeffs);
    const Eigen::VectorXd alpha = build_polarimetry_observer(mesh, cs, coeffs, eq.plasma, eq.basis) * eq.psi;
    for (std::size_t k = 0; k < chords.size(); ++k) {
      ChordMeasurement c = chords[k];
      c.gamma = gamma[static_cast<Eigen::Index>(k)];
      c.alpha = alpha[static_cast<Eigen::Index>(k)];
      ms.chords.push_back(c);
    }
  }
  return ms;
}

NormalRng::NormalRng(std::uint64_t seed) : engine_(seed) {}

double NormalRng::operator()() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  constexpr double k53 = 1.0 / 9007199254740992.0;  // 2⁻⁵³
  const double u1 = (static_cast<double>(engine_() >> 11) + 1.0) * k53;  // (0, 1]
  const double u2 = static_cast<double>(engine_() >> 11) * k53;          // [0, 1)
  const double rad = std::sqrt(-2.0 * std::log(u1));
  const double th = 2.0 * std::numbers::pi * u2;
  spare_ = rad * std::sin(th);
  have_spare_ = true;
  return rad * std::cos(th);
}

std::uint64_t mix_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

MeasurementSet perturb(const MeasurementSet& ms, double rate, std::uint64_t seed) {
  if (rate < 0.0) throw Error(ErrorKind::Argument, "noise rate must be nonnegative");
  MeasurementSet out = ms;
  if (rate == 0.0) return out;
  NormalRng rng(seed);
  auto noisy = [&](double m) { return m + rate * std::abs(m) * rng(); };
  for (auto& v : out.g_D) v.value = noisy(v.value);
  for (auto& v : out.g_N) v.value = noisy(v.value);
  for (auto& c : out.chords) {
    c.gamma = noisy(c.gamma);
    c.alpha = noisy(c.alpha);
  }
  return out;
}

ProfileStats pointwise_stats(const std::vector<std::vector<std::optional<double>>>& samples) {
  ProfileStats st;
  if (samples.empty()) return st;
  const std::size_t n = samples.front().size();
  st.mean.assign(n, std::nan(""));
  st.median.assign(n, std::nan(""));
  st.std.assign(n, std::nan(""));
  st.count.assign(n, 0);
  std::vector<double> v;
  for (std::size_t i = 0; i < n; ++i) {
    v.clear();
    for (const auto& s : samples)
      if (i < s.size() && s[i]) v.push_back(*s[i]);
    st.count[i] = static_cast<int>(v.size());
    if (v.empty()) continue;
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    st.mean[i] = mean;
    st.std[i] = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    st.median[i] = v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
  }
  return st;
}

namespace {

std::vector<std::optional<double>> wrap(const std::vector<double>& v) { return {v.begin(), v.end()}; }

}  // namespace

std::vector<ReplicateStats> replicate_stats(const FemSystem& fem, const MeasurementSet& clean, double r0,
                                            const StatsConfig& config, const SplineBasis& basis) {
  if (config.replicates < 1) throw Error(ErrorKind::Argument, "need at least one replicate");
  if (config.eps.empty()) throw Error(ErrorKind::Argument, "empty eps list");
  const Mesh& mesh = fem.mesh();
  const auto ne_count = config.eps.size();
  const auto nrep = static_cast<std::size_t>(config.replicates);
  std::vector<std::vector<std::optional<ProfileTable>>> tables(ne_count,
                                                               std::vector<std::optional<ProfileTable>>(nrep));
  const int threads = config.jobs > 0 ? config.jobs : omp_get_max_threads();

#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
  for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(nrep); ++k) {
    const MeasurementSet ms = perturb(clean, config.noise, mix_seed(config.seed, static_cast<std::uint64_t>(k)));
    for (std::size_t e = 0; e < ne_count; ++e) {
      try {
        RegularizationConfig reg;
        reg.eps = config.eps[e];
        reg.eps_ne = config.eps_ne;
        ReconstructOptions opt;
        opt.r0 = r0;
        opt.use_internal = config.use_internal;
        opt.tol = config.tol;
        opt.max_iter = config.max_iter;
        opt.basis = basis;
        const auto res = reconstruct(fem, ms, reg, opt);
        if (!res.converged || res.error) continue;
        ProfileTableOptions to;
        to.parallel = false;
        tables[e][static_cast<std::size_t>(k)] = compute_profile_table(res.equilibrium, mesh, reg.ne_scale, to);
      } catch (const Error&) {
        // counted as a failure below
      }
    }
  }

  std::vector<ReplicateStats> out;
  for (std::size_t e = 0; e < ne_count; ++e) {
    ReplicateStats rs;
    rs.eps = config.eps[e];
    rs.requested = config.replicates;
    rs.seed = config.seed;
    std::vector<std::vector<std::optional<double>>> la, lb, jm, q, ne;
    for (const auto& t : tables[e]) {
      if (!t) continue;
      if (rs.psibar.empty()) rs.psibar = t->psibar;
      la.push_back(wrap(t->lambda_a));
      lb.push_back(t->lambda_b_weighted);
      jm.push_back(t->j_mean);
      q.push_back(t->q);
      ne.push_back(t->ne);
    }
    rs.converged = static_cast<int>(la.size());
    rs.failed = rs.requested - rs.converged;
    if (rs.converged == 0)
      throw Error(ErrorKind::EmptyStats, fmt::format("every replicate failed at eps = {:g}", rs.eps));
    rs.lambda_a = pointwise_stats(la);
    rs.lambda_b_weighted = pointwise_stats(lb);
    rs.j_mean = pointwise_stats(jm);
    rs.q = pointwise_stats(q);
    rs.ne = pointwise_stats(ne);
    out.push_back(std::move(rs));
  }
  return out;
}

LCurve l_curve(std::vector<LCurvePoint> points) {
  if (points.size() < 3) throw Error(ErrorKind::Argument, "an L-curve needs at least three points");
  std::sort(points.begin(), points.end(), [](const auto& a, const auto& b) { return a.eps < b.eps; });
  const std::size_t n = points.size();
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(points[i].eps > 0.0)) throw Error(ErrorKind::Argument, "L-curve eps values must be positive");
    t[i] = std::log(points[i].eps);
  }
  // first and second derivatives on a possibly non-uniform grid
  auto d1 = [&](auto get, std::size_t i) {
    const std::size_t a = i == 0 ? 0 : i - 1, b = i + 1 == n ? n - 1 : i + 1;
    return (get(b) - get(a)) / (t[b] - t[a]);
  };
  auto d2 = [&](auto get, std::size_t i) {
    const std::size_t c = std::clamp<std::size_t>(i, 1, n - 2);
    const double hl = t[c] - t[c - 1], hr = t[c + 1] - t[c];
    return 2.0 * (hl * get(c + 1) - (hl + hr) * get(c) + hr * get(c - 1)) / (hl * hr * (hl + hr));
  };
  auto gx = [&](std::size_t i) { return points[i].x; };
  auto gy = [&](std::size_t i) { return points[i].y; };
  LCurve c;
  c.points = points;
  c.curvature.resize(n);
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const double x1 = d1(gx, i), y1 = d1(gy, i), x2 = d2(gx, i), y2 = d2(gy, i);
    const double den = std::pow(x1 * x1 + y1 * y1, 1.5);
    c.curvature[i] = den > 0.0 ? (x1 * y2 - x2 * y1) / den : 0.0;
    if (i > 0 && i + 1 < n && c.curvature[i] > best) {
      best = c.curvature[i];
      c.corner_index = static_cast<int>(i);
    }
  }
  c.corner_eps = points[static_cast<std::size_t>(c.corner_index)].eps;

  // A corner is ill-defined when one arm is negligible (the curve is
  // essentially a straight vertical or horizontal line) or the curvature
  // peak is not sharp relative to the curve's extent.
  double xmin = points[0].x, xmax = xmin, ymin = points[0].y, ymax = ymin;
  for (const auto& p : points) {
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
  }
  const double xr = xmax - xmin, yr = ymax - ymin;
  const double diag = std::hypot(xr, yr);
  const bool thin = xr < 0.1 * yr || yr < 0.1 * xr;
  c.flat = thin || !(best * diag > 4.0);
  return c;
}

LCurve ne_l_curve(const Eigen::MatrixXd& b_int, const Eigen::VectorXd& gamma, const Eigen::VectorXd& sqrt_w,
                  const Eigen::MatrixXd& lambda_reg, double alpha_scale, const std::vector<double>& eps_grid) {
  std::vector<LCurvePoint> pts;
  for (double e : eps_grid) {
    const Eigen::VectorXd v = identify_ne(b_int, gamma, sqrt_w, e, lambda_reg, alpha_scale);
    const Eigen::VectorXd r = sqrt_w.cwiseProduct(alpha_scale * (b_int * v) - gamma);
    pts.push_back({e, std::log(0.5 * r.squaredNorm()), std::log(0.5 * v.dot(lambda_reg * v))});
  }
  return l_curve(std::move(pts));
}

LCurve ab_l_curve(const FemSystem& fem, const MeasurementSet& ms, const RegularizationConfig& reg,
                  const ReconstructOptions& options, const std::vector<double>& eps_grid) {
  std::vector<std::optional<LCurvePoint>> slot(eps_grid.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(eps_grid.size()); ++i) {
    RegularizationConfig r = reg;
    r.eps = eps_grid[static_cast<std::size_t>(i)];
    try {
      const auto res = reconstruct(fem, ms, r, options);
      if (res.error) continue;
      const double misfit = res.cost.j0 + res.cost.j2;
      const double penalty = res.cost.j_eps / r.eps;
      slot[static_cast<std::size_t>(i)] = LCurvePoint{r.eps, std::log(misfit), std::log(penalty)};
    } catch (const Error&) {
    }
  }
  std::vector<LCurvePoint> pts;
  for (const auto& s : slot)
    if (s) pts.push_back(*s);
  return l_curve(std::move(pts));
}

std::vector<double> log_grid(double lo, double hi, int points) {
  if (!(lo > 0.0) || !(hi > lo) || points < 2) throw Error(ErrorKind::Argument, "bad log grid");
  std::vector<double> g;
  for (int i = 0; i < points; ++i) g.push_back(lo * std::pow(hi / lo, static_cast<double>(i) / (points - 1)));
  return g;
}

std::string format_stats_csv(const ReplicateStats& s) {
  const std::pair<const char*, const ProfileStats*> cols[] = {{"lambdaA", &s.lambda_a},
                                                              {"lambdaB_weighted", &s.lambda_b_weighted},
                                                              {"j_mean", &s.j_mean},
                                                              {"q", &s.q},
                                                              {"ne", &s.ne}};
  std::string out = "psibar";
  for (const auto& [name, st] : cols) out += fmt::format(",mean_{0},median_{0},std_{0}", name);
  out += "\n";
  auto num = [](double v) { return std::isfinite(v) ? fmt::format("{:.10g}", v) : std::string(); };
  for (std::size_t i = 0; i < s.psibar.size(); ++i) {
    out += fmt::format("{:.6g}", s.psibar[i]);
    for (const auto& [name, st] : cols) {
      if (st->mean.empty()) {
        out += ",,,";
        continue;
      }
      out += "," + num(st->mean[i]) + "," + num(st->median[i]) + "," + num(st->std[i]);
    }
    out += "\n";
  }
  return out;
}

std::string format_lcurve_csv(const LCurve& c) {
  std::string out = "eps,x,y,curvature,corner\n";
  for (std::size_t i = 0; i < c.points.size(); ++i)
    out += fmt::format("{:.6g},{:.10g},{:.10g},{:.10g},{}\n", c.points[i].eps, c.points[i].x, c.points[i].y,
                       c.curvature[i], static_cast<int>(i) == c.corner_index ? 1 : 0);
  return out;
}

}  // namespace gsr
