#include "cli.hpp"

#include <chrono>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>
#include <omp.h>

#include "gsrecon/config.hpp"
#include "gsrecon/diagnostics.hpp"
#include "gsrecon/forward.hpp"
#include "gsrecon/inverse.hpp"
#include "gsrecon/twin.hpp"

namespace gsr::cli {

namespace {

using nlohmann::json;

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::string output;
  int jobs = 0;
  bool quiet = false;
};

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::Domain:
    case ErrorKind::Argument:
    case ErrorKind::Parse:
    case ErrorKind::Validation:
    case ErrorKind::Io:
      return 1;
    default:
      return 2;
  }
}

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_config(c.config);
  std::map<std::string, std::string> kv;
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::Parse, fmt::format("--set expects key=value, got '{}'", s));
    kv[s.substr(0, eq)] = s.substr(eq + 1);
  }
  apply_settings(cfg, kv);
  if (!c.output.empty()) cfg.output = c.output;
  cfg.validate();
  if (c.jobs > 0) omp_set_num_threads(c.jobs);
  std::filesystem::create_directories(cfg.output);
  return cfg;
}

Mesh run_mesh(const RunConfig& cfg) { return cfg.mesh == "twin" ? make_twin_mesh(cfg.scenario()) : load_mesh(cfg.mesh); }

std::vector<ChordMeasurement> run_chords(const RunConfig& cfg) {
  if (cfg.chords == "none") return {};
  if (cfg.chords == "twin") return twin_chords(cfg.scenario());
  return load_chords(cfg.chords);
}

ReferenceProfiles run_profiles(const RunConfig& cfg) {
  const ReferenceProfiles twin = twin_reference_profiles(cfg.scenario());
  return {make_profile(cfg.profile_a, twin.a), make_profile(cfg.profile_b, twin.b)};
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out) throw Error(ErrorKind::Io, fmt::format("cannot write {}", p.string()));
  out << text;
}

json config_json(const RunConfig& cfg) {
  json j = json::object();
  for (const auto& [k, v] : parse_key_values(format_config(cfg))) j[k] = v;
  return j;
}

void write_manifest(const RunConfig& cfg, const std::string& command, json extra) {
  extra["command"] = command;
  extra["config"] = config_json(cfg);
  extra["rng"] = NormalRng::algorithm;
  extra["threads"] = omp_get_max_threads();
  write_file(cfg.output / "manifest.json", extra.dump(2) + "\n");
}

std::string residual_csv(const std::vector<double>& residuals, const std::vector<double>& lambdas) {
  std::string s = "iteration,residual,lambda\n";
  for (std::size_t i = 0; i < residuals.size(); ++i)
    s += fmt::format("{},{:.10g},{:.10g}\n", i + 1, residuals[i], i < lambdas.size() ? lambdas[i] : 0.0);
  return s;
}

void say(const Common& c, const std::string& msg) {
  if (!c.quiet) fmt::print("{}\n", msg);
}

int cmd_mesh_gen(const Common& c, const std::vector<double>& rect, const std::string& file) {
  const RunConfig cfg = resolve(c);
  Mesh mesh = rect.empty() ? make_twin_mesh(cfg.scenario())
                           : build_rect_mesh(rect[0], rect[1], rect[2], rect[3], cfg.mesh_nr, cfg.mesh_nz);
  const std::filesystem::path out = file.empty() ? cfg.output / "mesh.txt" : std::filesystem::path(file);
  save_mesh(mesh, out);
  say(c, fmt::format("mesh: {} nodes, {} triangles, {} boundary nodes -> {}", mesh.num_nodes(), mesh.num_triangles(),
                     mesh.boundary().size(), out.string()));
  write_manifest(cfg, "mesh-gen", {{"nodes", mesh.num_nodes()}, {"triangles", mesh.num_triangles()}});
  return 0;
}

int cmd_forward(const Common& c) {
  const RunConfig cfg = resolve(c);
  const Mesh mesh = run_mesh(cfg);
  const FemSystem fem(mesh, cfg.machine.mu0);
  const ReferenceProfiles ref = run_profiles(cfg);
  const auto g = twin_boundary_flux(mesh, cfg.scenario());
  ForwardOptions opt;
  opt.tol = cfg.tol;
  opt.max_iter = cfg.max_iter;
  opt.basis = cfg.basis();
  if (!c.quiet)
    opt.on_iteration = [](const IterationInfo& it) {
      fmt::print("iteration {:3d}  residual {:.4e}  lambda {:.6g}\n", it.iteration, it.residual, it.lambda);
    };
  Equilibrium eq;
  try {
    eq = forward_fixed_point(fem, cfg.machine, ref, g, opt);
  } catch (const ConvergenceError& e) {
    write_file(cfg.output / "forward_residuals.csv", residual_csv(e.residuals(), {}));
    throw;
  }
  save_equilibrium(eq, cfg.output / "equilibrium.txt");
  const double lambda = compute_lambda(mesh, eq.plasma, ref, cfg.machine.Ip, cfg.machine.r0);
  const ProfileTable table = compute_profile_table(mesh, eq.psi, eq.plasma, cfg.machine, {ref.a, ref.b, {}, lambda});
  write_file(cfg.output / "forward_profiles.csv", format_profile_csv(table));
  write_file(cfg.output / "forward_residuals.csv", residual_csv(eq.residuals, eq.lambda_history));
  say(c, fmt::format("converged in {} iterations; axis ({:.4f}, {:.4f}), psi_axis {:.6g}, psi_boundary {:.6g}",
                     eq.iterations, eq.plasma.domain.axis.r, eq.plasma.domain.axis.z, eq.plasma.domain.psi_axis,
                     eq.plasma.domain.psi_boundary));
  write_manifest(cfg, "forward", {{"iterations", eq.iterations}, {"lambda", lambda}, {"residuals", eq.residuals}});
  return 0;
}

ReconstructOptions reconstruct_options(const RunConfig& cfg, const Mesh& mesh, const MeasurementSet& ms) {
  ReconstructOptions opt;
  opt.r0 = cfg.machine.r0;
  opt.use_internal = cfg.use_internal;
  opt.tol = cfg.tol;
  opt.max_iter = cfg.max_iter;
  opt.basis = cfg.basis();
  opt.weights = cfg.weights(ms.Ip, mesh.boundary_length(), ms.g_N.size(), ms.chords.size());
  return opt;
}

RegularizationConfig regularization(const RunConfig& cfg, double eps) {
  RegularizationConfig r;
  r.eps = eps;
  r.eps_ne = cfg.eps_ne;
  return r;
}

json result_json(const ReconstructionResult& r) {
  json j = {{"iterations", r.iterations}, {"converged", r.converged}, {"residuals", r.residuals},
            {"lambda", r.equilibrium.lambda}, {"cost", {{"j0", r.cost.j0}, {"j1", r.cost.j1}, {"j2", r.cost.j2},
                                                         {"j_eps", r.cost.j_eps}, {"j_eps_ne", r.cost.j_eps_ne}}}};
  if (r.error) j["error"] = r.message;
  return j;
}

// Writes the reconstruction outputs; returns false when the loop failed.
bool report_reconstruction(const Common& c, const RunConfig& cfg, const Mesh& mesh, const ReconstructionResult& r,
                           const std::string& stem) {
  for (std::size_t i = 0; i < r.residuals.size(); ++i)
    say(c, fmt::format("iteration {:3d}  residual {:.4e}  lambda {:.6g}", i + 1, r.residuals[i],
                       i < r.lambda_history.size() ? r.lambda_history[i] : 0.0));
  write_file(cfg.output / (stem + "_residuals.csv"), residual_csv(r.residuals, r.lambda_history));
  if (r.error) {
    fmt::print(stderr, "reconstruction failed: {}\n", r.message);
    return false;
  }
  save_equilibrium(r.equilibrium, cfg.output / (stem + ".txt"));
  write_file(cfg.output / (stem + "_profiles.csv"),
             format_profile_csv(compute_profile_table(r.equilibrium, mesh, RegularizationConfig{}.ne_scale)));
  say(c, fmt::format("{} after {} iterations; J0 {:.4e}  J_eps {:.4e}", r.converged ? "converged" : "stopped",
                     r.iterations, r.cost.j0, r.cost.j_eps));
  return true;
}

int cmd_reconstruct(const Common& c, const std::string& measurements, const std::string& warm, bool realtime) {
  const RunConfig cfg = resolve(c);
  const Mesh mesh = run_mesh(cfg);
  const FemSystem fem(mesh, cfg.machine.mu0);
  const MeasurementSet ms = load_measurements(measurements);
  ReconstructOptions opt = reconstruct_options(cfg, mesh, ms);
  if (!warm.empty()) {
    Equilibrium w = load_equilibrium(warm, mesh);
    if (w.basis.size() != opt.basis.size() || w.basis.degree() != opt.basis.degree())
      throw Error(ErrorKind::Validation, fmt::format("warm start {} uses a different basis", warm));
    opt.warm_start = std::move(w);
  }
  if (realtime) {
    opt.max_iter = cfg.realtime_iterations;
    opt.dense_inverse = true;
    opt.fixed_iterations = true;
    fem.dense_inverse();
  }
  const auto t0 = std::chrono::steady_clock::now();
  const ReconstructionResult r = reconstruct(fem, ms, regularization(cfg, cfg.eps), opt);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool ok = report_reconstruction(c, cfg, mesh, r, "reconstruction");
  json extra = result_json(r);
  extra["seconds"] = seconds;
  extra["realtime"] = realtime;
  write_manifest(cfg, "reconstruct", extra);
  if (!ok) return 2;
  if (realtime) return 0;
  return r.converged ? 0 : 2;
}

struct Twin {
  Mesh mesh;
  FemSystem fem;
  TwinReference ref;
  MeasurementSet clean;

  explicit Twin(const RunConfig& cfg) : mesh(run_mesh(cfg)), fem(mesh, cfg.machine.mu0) {
    ForwardOptions fo;
    fo.tol = cfg.tol;
    fo.max_iter = std::max(cfg.max_iter, 60);
    fo.basis = cfg.basis();
    ref = make_twin_reference(fem, cfg.scenario(), fo);
    const auto chords = run_chords(cfg);
    const auto pts = boundary_points(mesh);
    clean = synthesize_measurements(mesh, ref.eq, chords, pts, ref.ne, ref.ne_scale);
  }
};

int cmd_twin(const Common& c) {
  const RunConfig cfg = resolve(c);
  const Twin t(cfg);
  const MeasurementSet ms = perturb(t.clean, cfg.twin_noise, cfg.seed);
  save_measurements(ms, cfg.output / "measurements.txt");
  save_equilibrium(t.ref.eq, cfg.output / "reference.txt");
  write_file(cfg.output / "reference_profiles.csv", format_profile_csv(t.ref.table));
  const ReconstructionResult r = reconstruct(t.fem, ms, regularization(cfg, cfg.eps), reconstruct_options(cfg, t.mesh, ms));
  const bool ok = report_reconstruction(c, cfg, t.mesh, r, "identified");
  json extra = result_json(r);
  extra["reference_iterations"] = t.ref.eq.iterations;
  if (ok) {
    const ProfileTable id = compute_profile_table(r.equilibrium, t.mesh);
    const ProfileTable& tr = t.ref.table;
    const json err = {{"lambdaA", mean_relative_error(id.lambda_a, tr.lambda_a)},
                      {"lambdaB_weighted", mean_relative_error(id.lambda_b_weighted, tr.lambda_b_weighted)},
                      {"j_mean", mean_relative_error(id.j_mean, tr.j_mean)},
                      {"q", mean_relative_error(id.q, tr.q)}};
    extra["mean_relative_error"] = err;
    say(c, fmt::format("mean relative error: lambdaA {:.4f}  lambdaB_weighted {:.4f}  j_mean {:.4f}  q {:.4f}",
                       err["lambdaA"].get<double>(), err["lambdaB_weighted"].get<double>(),
                       err["j_mean"].get<double>(), err["q"].get<double>()));
  }
  write_manifest(cfg, "twin", extra);
  return ok && r.converged ? 0 : 2;
}

int cmd_stats(const Common& c) {
  const RunConfig cfg = resolve(c);
  const Twin t(cfg);
  StatsConfig sc;
  sc.replicates = cfg.replicates;
  sc.eps = cfg.stats_eps;
  sc.noise = cfg.noise;
  sc.seed = cfg.seed;
  sc.use_internal = cfg.use_internal;
  sc.eps_ne = cfg.eps_ne;
  sc.tol = cfg.tol;
  sc.max_iter = cfg.stats_max_iter;
  sc.jobs = c.jobs;
  write_file(cfg.output / "reference_profiles.csv", format_profile_csv(t.ref.table));
  const auto stats = replicate_stats(t.fem, t.clean, cfg.machine.r0, sc, cfg.basis());
  json runs = json::array();
  for (const auto& s : stats) {
    const std::string name = fmt::format("stats_eps_{:g}.csv", s.eps);
    write_file(cfg.output / name, format_stats_csv(s));
    runs.push_back({{"eps", s.eps}, {"requested", s.requested}, {"converged", s.converged}, {"failed", s.failed},
                    {"file", name}});
    say(c, fmt::format("eps {:g}: {} of {} replicates converged -> {}", s.eps, s.converged, s.requested, name));
  }
  write_manifest(cfg, "stats", {{"seed", cfg.seed}, {"eps", cfg.stats_eps}, {"runs", runs}});
  return 0;
}

int cmd_lcurve(const Common& c) {
  const RunConfig cfg = resolve(c);
  const Twin t(cfg);
  const MeasurementSet ms = perturb(t.clean, cfg.noise, cfg.seed);
  const auto grid = log_grid(cfg.lcurve_min, cfg.lcurve_max, cfg.lcurve_points);
  LCurve lc;
  if (cfg.lcurve_kind == "ne") {
    if (ms.chords.empty()) throw Error(ErrorKind::Validation, "the density L-curve needs chords");
    std::vector<Chord> chords;
    Eigen::VectorXd gamma(static_cast<Eigen::Index>(ms.chords.size()));
    for (std::size_t k = 0; k < ms.chords.size(); ++k) {
      chords.push_back(make_chord(t.mesh, ms.chords[k].start, ms.chords[k].end));
      gamma[static_cast<Eigen::Index>(k)] = ms.chords[k].gamma;
    }
    const SplineBasis basis = cfg.basis();
    const Eigen::MatrixXd b = build_interferometry_matrix(t.mesh, chords, t.ref.eq.plasma, basis);
    const WeightConfig w = cfg.weights(ms.Ip, t.mesh.boundary_length(), ms.g_N.size(), ms.chords.size());
    const Eigen::VectorXd sqrt_w = Eigen::VectorXd::Constant(gamma.size(), w.w_inter());
    lc = ne_l_curve(b, gamma, sqrt_w, regularization_matrix(basis), t.ref.ne_scale, grid);
  } else {
    ReconstructOptions opt = reconstruct_options(cfg, t.mesh, ms);
    opt.max_iter = cfg.stats_max_iter;
    lc = ab_l_curve(t.fem, ms, regularization(cfg, cfg.eps), opt, grid);
  }
  const std::string name = fmt::format("lcurve_{}.csv", cfg.lcurve_kind);
  write_file(cfg.output / name, format_lcurve_csv(lc));
  say(c, fmt::format("{} L-curve: corner at eps = {:g}{} -> {}", cfg.lcurve_kind, lc.corner_eps,
                     lc.flat ? " (flat: no well-defined corner)" : "", name));
  write_manifest(cfg, "lcurve",
                 {{"seed", cfg.seed}, {"eps", grid}, {"corner_eps", lc.corner_eps}, {"flat", lc.flat},
                  {"points", lc.points.size()}});
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"Grad-Shafranov equilibrium reconstruction toolkit"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", common.config, "key = value configuration file")->check(CLI::ExistingFile);
    sub->add_option("-s,--set", common.sets, "override a configuration key (key=value)");
    sub->add_option("-o,--output", common.output, "output directory");
    sub->add_option("-j,--jobs", common.jobs, "worker threads (0: OpenMP default)")->check(CLI::NonNegativeNumber);
    sub->add_flag("-q,--quiet", common.quiet, "only errors on stdout/stderr");
  };

  std::vector<double> rect;
  std::string mesh_file;
  auto* mesh_gen = app.add_subcommand("mesh-gen", "write the twin (or a rectangular) mesh");
  add_common(mesh_gen);
  mesh_gen->add_option("--rect", rect, "rectangular mesh: r_min r_max z_min z_max (uses mesh.nr, mesh.nz)")
      ->expected(4);
  mesh_gen->add_option("-f,--file", mesh_file, "mesh file (default: <output>/mesh.txt)");

  auto* forward = app.add_subcommand("forward", "direct fixed-point solve with reference profiles");
  add_common(forward);

  std::string measurements, warm;
  bool realtime = false;
  auto* recon = app.add_subcommand("reconstruct", "identify A, B (and n_e) from a measurement file");
  add_common(recon);
  recon->add_option("-m,--measurements", measurements, "measurement file")->required();
  recon->add_option("-w,--warm-start", warm, "equilibrium file to start from");
  recon->add_flag("--realtime", realtime, "fixed iteration count (realtime_iterations) with a dense K^-1");

  auto* twin = app.add_subcommand("twin", "twin experiment: synthesize, reconstruct, compare");
  add_common(twin);
  auto* stats = app.add_subcommand("stats", "replicated noisy twin experiments per eps");
  add_common(stats);
  auto* lcurve = app.add_subcommand("lcurve", "L-curve for the density (ne) or A/B (ab) problem");
  add_common(lcurve);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*mesh_gen) return cmd_mesh_gen(common, rect, mesh_file);
    if (*forward) return cmd_forward(common);
    if (*recon) return cmd_reconstruct(common, measurements, warm, realtime);
    if (*twin) return cmd_twin(common);
    if (*stats) return cmd_stats(common);
    if (*lcurve) return cmd_lcurve(common);
  } catch (const Error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return exit_code(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 1;
}

}  // namespace gsr::cli
