#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gsrecon/forward.hpp"
#include "gsrecon/spline_basis.hpp"
#include "gsrecon/twin.hpp"

namespace gsr {

/// Everything a command needs, resolved from a `key = value` file plus
/// command-line overrides. Keys mirror the member names (see format_config).
struct RunConfig {
  MachineParams machine{3.0, 3.0, 1.0e6};

  /// "twin" builds the twin mesh from mesh_nr/mesh_nz; anything else is a mesh file.
  std::string mesh = "twin";
  int mesh_nr = 24, mesh_nz = 36;

  double flux_offset = 1.5;
  double flux_vertical = -0.01;
  double flux_shaping = 0.0;

  /// "twin" or comma-separated values on a uniform ψ̄ grid.
  std::string profile_a = "twin";
  std::string profile_b = "twin";
  double ne_peak = 5.0e19;

  int basis_m = 8;
  int basis_degree = 3;

  double eps = 1e-5;
  double eps_ne = 1e-2;
  double sigma_mag = 0.0;  ///< 0: derived from Ip and the boundary length
  double sigma_polar = 0.1;
  double sigma_inter = 1e18;

  double tol = 1e-6;
  int max_iter = 30;
  int realtime_iterations = 2;
  bool use_internal = false;

  /// "twin", "none" or a chord file (lines "r1 z1 r2 z2").
  std::string chords = "twin";

  std::uint64_t seed = 12345;
  double noise = 0.01;       ///< stats and lcurve
  double twin_noise = 0.0;   ///< twin command
  int replicates = 50;
  std::vector<double> stats_eps{1e-2, 1e-1, 1.0};
  int stats_max_iter = 100;

  std::string lcurve_kind = "ne";
  double lcurve_min = 1e-5;
  double lcurve_max = 1e2;
  int lcurve_points = 22;

  std::filesystem::path output = "out";

  /// Throws ErrorKind::Validation (nonpositive tolerances, missing files, ...).
  void validate() const;

  SplineBasis basis() const;
  TwinScenario scenario() const;
  WeightConfig weights(double Ip, double boundary_length, std::size_t n_mag, std::size_t n_chords) const;
};

/// `key = value` lines; '#' starts a comment. Throws ErrorKind::Parse.
std::map<std::string, std::string> parse_key_values(const std::string& text);

/// Applies entries onto `cfg`; unknown keys and bad values throw ErrorKind::Parse.
void apply_settings(RunConfig& cfg, const std::map<std::string, std::string>& kv);

RunConfig load_config(const std::filesystem::path& path);

/// Resolved configuration in the same `key = value` syntax.
std::string format_config(const RunConfig& cfg);

/// Chord file: one "r1 z1 r2 z2" per line, '#' comments.
std::vector<ChordMeasurement> load_chords(const std::filesystem::path& path);

/// "twin" or a comma-separated list (tabulated on a uniform grid over [0, 1]).
ProfileFunction make_profile(const std::string& text, const ProfileFunction& twin_default);

}  // namespace gsr
