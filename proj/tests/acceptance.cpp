// Acceptance run: one PASS/FAIL line per criterion. Tolerances and runtime
// limits are fixed below; the exit status is nonzero when any line fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "gsrecon/diagnostics.hpp"
#include "gsrecon/fem.hpp"
#include "gsrecon/forward.hpp"
#include "gsrecon/inverse.hpp"
#include "gsrecon/twin.hpp"

using namespace gsr;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Desk {
  TwinScenario s;
  Mesh mesh;
  FemSystem fem;
  TwinReference ref;
  std::vector<Point> neumann;
  MeasurementSet clean;

  Desk() : mesh(make_twin_mesh(s)), fem(mesh) {
    ref = make_twin_reference(fem, s);
    neumann = boundary_points(mesh);
    clean = synthesize_measurements(mesh, ref.eq, twin_chords(s), neumann, ref.ne, ref.ne_scale);
  }
};

const Desk& desk() {
  static const Desk d;
  return d;
}

bool strictly_decreasing_from(const std::vector<double>& r, std::size_t first) {
  for (std::size_t i = std::max<std::size_t>(first, 1); i < r.size(); ++i)
    if (!(r[i] < r[i - 1])) return false;
  return true;
}

// --- 1: FEM manufactured solutions --------------------------------------

NodalField solve_harmonic(const Mesh& m, const std::function<double(Point)>& f) {
  const auto k = impose_dirichlet(assemble_stiffness(m), m.boundary());
  std::vector<double> g;
  for (int b : m.boundary()) g.push_back(f(m.node(b)));
  return factorize(k).solve(dirichlet_vector(m, g));
}

double max_error(const Mesh& m, const NodalField& psi, const std::function<double(Point)>& f) {
  double e = 0.0;
  for (int i = 0; i < psi.size(); ++i) e = std::max(e, std::abs(psi[i] - f(m.node(i))));
  return e;
}

Outcome fem_correctness() {
  const Mesh m = build_rect_mesh(1.0, 2.0, -1.0, 1.0, 20, 20);
  auto constant = [](Point) { return 0.7; };
  auto linear_z = [](Point p) { return p.z; };
  auto r2 = [](Point p) { return p.r * p.r; };
  const double ec = max_error(m, solve_harmonic(m, constant), constant);
  const double ez = max_error(m, solve_harmonic(m, linear_z), linear_z);
  const Mesh fine = build_rect_mesh(1.0, 2.0, -1.0, 1.0, 40, 40);
  const double ratio = max_error(m, solve_harmonic(m, r2), r2) / max_error(fine, solve_harmonic(fine, r2), r2);
  return {ec <= 1e-10 && ez <= 1e-10 && ratio >= 3.6 && ratio <= 4.4,
          fmt::format("constant {:.1e}, z {:.1e} (tol 1e-10); r^2 ratio {:.3f} in [3.6, 4.4]", ec, ez, ratio)};
}

// --- 2: fixed-point convergence -----------------------------------------

Outcome fixed_point_convergence() {
  const Desk& d = desk();
  RegularizationConfig reg;
  reg.eps = 1e-5;
  ReconstructOptions opt;
  opt.r0 = d.s.machine.r0;
  opt.max_iter = 15;
  const auto rec = reconstruct(d.fem, d.clean, reg, opt);
  const auto& r = rec.residuals;
  const bool rec_ok = rec.converged && !r.empty() && r.back() < 1e-6 && rec.iterations <= 15 && r.size() >= 2 &&
                      r[1] < 0.1 && strictly_decreasing_from(r, 2);

  ForwardOptions fo;
  fo.max_iter = 15;
  bool fwd_ok = false;
  std::string fwd;
  try {
    const Equilibrium eq = forward_fixed_point(d.fem, d.s.machine, d.ref.truth, twin_boundary_flux(d.mesh, d.s), fo);
    const auto& f = eq.residuals;
    fwd_ok = f.back() < 1e-6 && f.size() >= 2 && f[1] < 0.1 && strictly_decreasing_from(f, 2);
    fwd = fmt::format("forward: {} iterations, r2 {:.3e}, last {:.2e}", eq.iterations, f.size() > 1 ? f[1] : 0.0,
                      f.back());
  } catch (const Error& e) {
    fwd = fmt::format("forward: {}", e.what());
  }
  return {rec_ok && fwd_ok,
          fmt::format("reconstruction: {} iterations, r2 {:.3e}, last {:.2e}, monotone tail {}; {}", rec.iterations,
                      r.size() > 1 ? r[1] : 0.0, r.empty() ? 0.0 : r.back(), strictly_decreasing_from(r, 2) ? "yes" : "no",
                      fwd)};
}

// --- 3: Ip after every λ update -----------------------------------------

Outcome ip_constraint() {
  const Desk& d = desk();
  const double r0 = d.s.machine.r0, ip = d.s.machine.Ip;
  double worst = 0.0;
  int updates = 0;

  ForwardOptions fo;
  fo.on_iteration = [&](const IterationInfo& it) {
    const double i = plasma_current(d.mesh, *it.state, d.ref.truth, it.lambda, r0);
    worst = std::max(worst, std::abs(i - ip) / ip);
    ++updates;
  };
  forward_fixed_point(d.fem, d.s.machine, d.ref.truth, twin_boundary_flux(d.mesh, d.s), fo);

  // The identification loop: a run truncated after k iterations ends with the
  // λ update of iteration k + 1 on the domain it computed.
  RegularizationConfig reg;
  reg.eps = 1e-5;
  ReconstructOptions opt;
  opt.r0 = r0;
  const auto full = reconstruct(d.fem, d.clean, reg, opt);
  bool consistent = true;
  for (int k = 1; k < full.iterations; ++k) {
    opt.max_iter = k;
    opt.fixed_iterations = true;
    const auto part = reconstruct(d.fem, d.clean, reg, opt);
    const Equilibrium& eq = part.equilibrium;
    const double i = plasma_current(d.mesh, eq.plasma, profiles_from_expansion(eq.basis, eq.profiles), eq.lambda, r0);
    worst = std::max(worst, std::abs(i - ip) / ip);
    consistent = consistent && eq.lambda == full.lambda_history[static_cast<std::size_t>(k)];
    ++updates;
  }
  return {worst <= 1e-10 && consistent,
          fmt::format("{} lambda updates, worst relative Ip error {:.2e} (tol 1e-10){}", updates, worst,
                      consistent ? "" : "; truncated runs disagree with the full loop")};
}

// --- 4: noise-free identification ----------------------------------------

Outcome noise_free_identification() {
  const Desk& d = desk();
  RegularizationConfig reg;
  reg.eps = 1e-5;
  ReconstructOptions opt;
  opt.r0 = d.s.machine.r0;
  const auto rec = reconstruct(d.fem, d.clean, reg, opt);
  if (!rec.converged) return {false, "reconstruction did not converge: " + rec.message};
  const ProfileTable id = compute_profile_table(rec.equilibrium, d.mesh);
  const ProfileTable& tr = d.ref.table;
  const double ea = mean_relative_error(id.lambda_a, tr.lambda_a);
  const double eb = mean_relative_error(id.lambda_b_weighted, tr.lambda_b_weighted);
  const double ej = mean_relative_error(id.j_mean, tr.j_mean);
  const double eq = mean_relative_error(id.q, tr.q);
  const bool ok = ea <= 0.10 && eb <= 0.10 && ej <= 0.02 && eq <= 0.02 && std::max(ej, eq) < std::min(ea, eb);
  return {ok, fmt::format("lambdaA {:.4f}, lambdaB {:.4f} (tol 0.10); j {:.4f}, q {:.4f} (tol 0.02)", ea, eb, ej, eq)};
}

// --- 5 and 6: replicate statistics ---------------------------------------

StatsConfig stats_config(bool internal) {
  StatsConfig c;
  c.replicates = 50;
  c.eps = {1e-2, 1e-1, 1.0};
  c.noise = 0.01;
  c.seed = 2718;
  c.use_internal = internal;
  c.max_iter = 100;
  return c;
}

double fraction_in_band(const ProfileStats& s, const std::vector<std::optional<double>>& ref) {
  int hit = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    if (!ref[i] || s.count[i] < 2) continue;
    if (std::abs(*ref[i] - s.mean[i]) <= 2.0 * s.std[i]) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(ref.size());
}

double fraction_smaller_std(const ProfileStats& a, const ProfileStats& b) {
  int hit = 0;
  for (std::size_t i = 0; i < a.std.size(); ++i)
    if (a.count[i] >= 2 && b.count[i] >= 2 && a.std[i] < b.std[i]) ++hit;
  return static_cast<double>(hit) / static_cast<double>(a.std.size());
}

double mean_std_core(const ReplicateStats& s) {
  double sum = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < s.psibar.size(); ++i) {
    if (s.psibar[i] > 0.5 + 1e-12 || s.lambda_a.count[i] < 2) continue;
    sum += s.lambda_a.std[i];
    ++n;
  }
  return n > 0 ? sum / n : std::nan("");
}

std::vector<ReplicateStats> magnetics_stats;

Outcome robust_statistics() {
  const Desk& d = desk();
  magnetics_stats = replicate_stats(d.fem, d.clean, d.s.machine.r0, stats_config(false));
  bool ok = true;
  std::string detail;
  for (const auto& s : magnetics_stats) {
    const double bj = fraction_in_band(s.j_mean, d.ref.table.j_mean);
    const double bq = fraction_in_band(s.q, d.ref.table.q);
    const double sr = fraction_smaller_std(s.j_mean, s.lambda_a);
    ok = ok && bj >= 0.9 && bq >= 0.9 && sr >= 0.8;
    detail += fmt::format("{}eps {:g}: {}/{} converged, band j {:.2f} q {:.2f} (min 0.90), std j<lambdaA {:.2f} (min 0.80)",
                          detail.empty() ? "" : "; ", s.eps, s.converged, s.requested, bj, bq, sr);
  }
  return {ok, detail};
}

Outcome internal_improvement() {
  const Desk& d = desk();
  StatsConfig c = stats_config(true);
  c.eps = {1e-1};
  const auto with = replicate_stats(d.fem, d.clean, d.s.machine.r0, c);
  const auto it = std::find_if(magnetics_stats.begin(), magnetics_stats.end(),
                               [](const ReplicateStats& s) { return s.eps == 1e-1; });
  if (it == magnetics_stats.end()) return {false, "magnetics-only statistics at eps 0.1 are missing"};
  const double mag = mean_std_core(*it), chords = mean_std_core(with.front());
  return {chords < mag, fmt::format("eps 0.1, mean std of lambdaA on [0, 0.5]: magnetics {:.3e}, with chords {:.3e}",
                                    mag, chords)};
}

// --- 7: L-curves ---------------------------------------------------------

Outcome l_curves() {
  const Desk& d = desk();
  const MeasurementSet ms = perturb(d.clean, 0.01, mix_seed(777, 0));
  std::vector<Chord> chords;
  Eigen::VectorXd gamma(static_cast<Eigen::Index>(ms.chords.size()));
  for (std::size_t k = 0; k < ms.chords.size(); ++k) {
    chords.push_back(make_chord(d.mesh, ms.chords[k].start, ms.chords[k].end));
    gamma[static_cast<Eigen::Index>(k)] = ms.chords[k].gamma;
  }
  const SplineBasis& basis = d.ref.eq.basis;
  const WeightConfig w = default_weights(ms.Ip, d.mesh.boundary_length(), ms.g_N.size(), ms.chords.size());
  const Eigen::MatrixXd b = build_interferometry_matrix(d.mesh, chords, d.ref.eq.plasma, basis);
  const auto grid = log_grid(1e-5, 1e2, 22);
  const LCurve ne = ne_l_curve(b, gamma, Eigen::VectorXd::Constant(gamma.size(), w.w_inter()),
                               regularization_matrix(basis), d.ref.ne_scale, grid);
  bool monotone = true;
  for (std::size_t i = 1; i < ne.points.size(); ++i)
    monotone = monotone && ne.points[i].x >= ne.points[i - 1].x - 1e-9 && ne.points[i].y <= ne.points[i - 1].y + 1e-9;
  const bool corner_ok = !ne.flat && ne.corner_eps >= 1e-3 && ne.corner_eps <= 1e-1;

  RegularizationConfig reg;
  ReconstructOptions opt;
  opt.r0 = d.s.machine.r0;
  opt.max_iter = 100;
  const LCurve ab = ab_l_curve(d.fem, ms, reg, opt, grid);
  return {corner_ok && monotone && ab.flat,
          fmt::format("ne corner {:.3g} in [1e-3, 1e-1], arms monotone {}; A/B flat flag {}", ne.corner_eps,
                      monotone ? "yes" : "no", ab.flat ? "raised" : "not raised")};
}

// --- 8: identities -------------------------------------------------------

Outcome identities() {
  const Desk& d = desk();
  const auto& eq = d.ref.eq;
  double fsa = 0.0, qd = 0.0;
  for (double level : {0.2, 0.5, 0.8}) {
    const FluxContour c = extract_contour(d.mesh, eq.psi, eq.plasma, level);
    fsa = std::max(fsa, std::abs(flux_surface_average(c, [](Point) { return 4.2; }) - 4.2) / 4.2);
    const double q1 = safety_factor(c, 7.0), q2 = safety_factor(c, 14.0);
    qd = std::max(qd, std::abs(q2 - 2.0 * q1) / (2.0 * q1));
  }
  const bool f_exact = d.ref.table.f.back() == d.s.machine.B0 * d.s.machine.r0;
  const Eigen::MatrixXd lam = regularization_matrix(eq.basis);
  double annihilate = 0.0;
  for (const auto& [c0, c1] : {std::pair{1.0, 0.0}, std::pair{0.0, 1.0}, std::pair{2.5, -3.0}}) {
    const Eigen::VectorXd a = affine_coefficients(eq.basis, c0, c1);
    annihilate = std::max(annihilate, (lam * a).cwiseAbs().maxCoeff() / std::max(1.0, lam.cwiseAbs().maxCoeff()));
  }
  return {fsa <= 1e-12 && f_exact && annihilate <= 1e-12 && qd <= 1e-12,
          fmt::format("<const> {:.1e}; f(1) = B0 r0 {}; Lambda affine {:.1e}; q doubling {:.1e} (tol 1e-12)", fsa,
                      f_exact ? "exact" : "inexact", annihilate, qd)};
}

// --- 9: real-time regime -------------------------------------------------

Outcome realtime() {
  const Desk& d = desk();
  RegularizationConfig reg;
  reg.eps = 5e-2;
  ReconstructOptions opt;
  opt.r0 = d.s.machine.r0;
  opt.max_iter = 100;
  const auto prev = reconstruct(d.fem, perturb(d.clean, 0.01, 98), reg, opt);
  if (!prev.converged) return {false, "previous slice did not converge: " + prev.message};

  TwinScenario next = d.s;
  next.machine.Ip *= 1.02;
  next.vertical_field *= 1.05;
  const TwinReference nref = make_twin_reference(d.fem, next);
  const MeasurementSet nms = perturb(
      synthesize_measurements(d.mesh, nref.eq, twin_chords(next), d.neumann, nref.ne, nref.ne_scale), 0.01, 99);

  d.fem.dense_inverse();
  ReconstructOptions rt = opt;
  rt.max_iter = 2;
  rt.fixed_iterations = true;
  rt.dense_inverse = true;
  rt.warm_start = prev.equilibrium;
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = reconstruct(d.fem, nms, reg, rt);
  const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool ok = !r.error && r.iterations == 2 && r.residuals.back() <= 5e-3 && sec < 1.0;
  return {ok, fmt::format("{} iterations, residuals {:.3e} then {:.3e} (tol 5e-3), {:.3f} s (limit 1 s)", r.iterations,
                          r.residuals.empty() ? 0.0 : r.residuals.front(), r.residuals.empty() ? 0.0 : r.residuals.back(),
                          sec)};
}

struct Criterion {
  int id;
  const char* name;
  double limit_s;
  Outcome (*run)();
};

}  // namespace

int main() {
  // The shared desk twin is built outside the timed criteria.
  desk();
  const std::vector<Criterion> criteria{
      {1, "FEM correctness", 5.0, fem_correctness},
      {2, "fixed-point convergence", 30.0, fixed_point_convergence},
      {3, "Ip constraint", 30.0, ip_constraint},
      {4, "noise-free identification", 60.0, noise_free_identification},
      {5, "robust-observable statistics", 600.0, robust_statistics},
      {6, "internal-measurement improvement", 600.0, internal_improvement},
      {7, "L-curves", 120.0, l_curves},
      {8, "identities", 5.0, identities},
      {9, "real-time regime", 30.0, realtime},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool pass = o.pass && sec < c.limit_s;
    if (!pass) ++failed;
    fmt::print("criterion {} {}: {} | {} | {:.2f} s (limit {:g} s)\n", c.id, c.name, pass ? "PASS" : "FAIL", o.detail,
               sec, c.limit_s);
    std::fflush(stdout);
  }
  fmt::print("{} of {} criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
