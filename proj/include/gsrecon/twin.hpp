#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gsrecon/diagnostics.hpp"
#include "gsrecon/forward.hpp"
#include "gsrecon/inverse.hpp"
#include "gsrecon/observation.hpp"

namespace gsr {

/// Geometry, machine and reference profiles of the desk-scale twin problem.
struct TwinScenario {
  double r_min = 1.8, r_max = 4.2, z_min = -1.8, z_max = 1.8;
  int nr = 24, nz = 36;
  Point limiter_center{3.0, 0.0};
  double limiter_half_width = 1.1;
  double limiter_half_height = 1.65;
  int limiter_points = 64;
  MachineParams machine{3.0, 3.0, 1.0e6};
  /// External flux on the boundary: offset + vertical·(r² − r0²) + shaping·(r⁴ − 4r²z² − r0⁴),
  /// a combination of vacuum (Δ*-harmonic) fields.
  double flux_offset = 1.5;
  double vertical_field = -0.01;
  double shaping_field = 0.0;
  /// Reference profiles are tabulated on this many uniform points.
  int table_points = 21;
  /// Peak of the reference density, m⁻³.
  double ne_peak = 5.0e19;
  /// Vertical and horizontal interferometry/polarimetry chords.
  int vertical_chords = 5;
  int horizontal_chords = 3;
};

Mesh make_twin_mesh(const TwinScenario& s);

/// External vacuum flux on the boundary loop.
std::vector<double> twin_boundary_flux(const Mesh& mesh, const TwinScenario& s);

/// Tabulated reference A and B (monotone cubic between table points).
ReferenceProfiles twin_reference_profiles(const TwinScenario& s);

/// Reference density (m⁻³) as a function of ψ̄.
double twin_reference_density(const TwinScenario& s, double psibar);

/// Chord endpoints spanning the limiter box.
std::vector<ChordMeasurement> twin_chords(const TwinScenario& s);

/// Converged reference equilibrium plus its true profiles and derived table.
struct TwinReference {
  Equilibrium eq;
  ReferenceProfiles truth;
  double lambda = 1.0;      ///< true λ on the converged domain
  Eigen::VectorXd ne;       ///< reference density coefficients in units of the density scale
  double ne_scale = 1e19;
  ProfileTable table;       ///< profiles of the truth
};

TwinReference make_twin_reference(const FemSystem& fem, const TwinScenario& s, const ForwardOptions& options = {});

/// g_D = ψ at the boundary nodes; g_N = C0 Ψ at `neumann_points`; γ and α by
/// chord quadrature of the reference density and ψ (zero when `ne` is empty).
MeasurementSet synthesize_measurements(const Mesh& mesh, const Equilibrium& eq, std::span<const ChordMeasurement> chords,
                                       std::span<const Point> neumann_points,
                                       const std::optional<Eigen::VectorXd>& ne, double ne_scale = 1e19);

/// Deterministic normal variates: mt19937_64 feeding the Box–Muller
/// transform, so streams are identical across standard libraries.
class NormalRng {
 public:
  explicit NormalRng(std::uint64_t seed);
  double operator()();
  static constexpr const char* algorithm = "mt19937_64 + Box-Muller";

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

/// splitmix64 step, used to derive independent replicate seeds.
std::uint64_t mix_seed(std::uint64_t master, std::uint64_t index);

/// Each value m of g_D, g_N, γ and α becomes m + η with η ~ N(0, (rate·|m|)²).
/// Ip, B0 and all positions are left untouched.
MeasurementSet perturb(const MeasurementSet& ms, double rate, std::uint64_t seed);

struct ProfileStats {
  std::vector<double> mean, median, std;
  std::vector<int> count;  ///< replicates contributing at each grid point
};

struct ReplicateStats {
  double eps = 0.0;
  std::vector<double> psibar;
  ProfileStats lambda_a, lambda_b_weighted, j_mean, q, ne;
  int requested = 0;
  int converged = 0;
  int failed = 0;
  std::uint64_t seed = 0;
};

struct StatsConfig {
  int replicates = 50;
  std::vector<double> eps{1e-2, 1e-1, 1.0};
  double noise = 0.01;
  std::uint64_t seed = 12345;
  bool use_internal = false;
  double eps_ne = 1e-2;
  double tol = 1e-6;
  int max_iter = 30;
  int jobs = 0;  ///< 0: OpenMP default
};

/// For each ε, `replicates` reconstructions from independently perturbed
/// copies of `clean` (replicate k uses the same noise draw for every ε).
/// Non-converged replicates are excluded and counted. Throws
/// ErrorKind::EmptyStats when every replicate of some ε fails.
std::vector<ReplicateStats> replicate_stats(const FemSystem& fem, const MeasurementSet& clean, double r0,
                                            const StatsConfig& config, const SplineBasis& basis = SplineBasis());

/// Pointwise mean / median / sample std of equally sized samples; missing
/// entries are skipped.
ProfileStats pointwise_stats(const std::vector<std::vector<std::optional<double>>>& samples);

struct LCurvePoint {
  double eps = 0.0;
  double x = 0.0;  ///< log(misfit)
  double y = 0.0;  ///< log(penalty)
};

struct LCurve {
  std::vector<LCurvePoint> points;
  std::vector<double> curvature;  ///< signed curvature in the log-log plane
  int corner_index = -1;
  double corner_eps = 0.0;
  bool flat = false;  ///< no well-defined corner
};

/// Corner by maximum curvature of (x, y) parametrized by log ε (central
/// differences). Throws ErrorKind::Argument for fewer than three points.
LCurve l_curve(std::vector<LCurvePoint> points);

/// L-curve of the density identification: misfit ½‖D½(α B v̂ − γ)‖², penalty ½ v̂ᵀΛv̂.
LCurve ne_l_curve(const Eigen::MatrixXd& b_int, const Eigen::VectorXd& gamma, const Eigen::VectorXd& sqrt_w,
                  const Eigen::MatrixXd& lambda_reg, double alpha_scale, const std::vector<double>& eps_grid);

/// L-curve of the A/B identification from complete reconstructions per ε:
/// misfit ½‖Ẽu − f̃‖², penalty ½ uᵀ diag(Λ, Λ) u.
LCurve ab_l_curve(const FemSystem& fem, const MeasurementSet& ms, const RegularizationConfig& reg,
                  const ReconstructOptions& options, const std::vector<double>& eps_grid);

std::vector<double> log_grid(double lo, double hi, int points);

/// CSV: psibar, then mean_/median_/std_ columns for each profile.
std::string format_stats_csv(const ReplicateStats& s);
std::string format_lcurve_csv(const LCurve& c);

}  // namespace gsr
