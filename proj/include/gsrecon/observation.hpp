#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gsrecon/fem.hpp"
#include "gsrecon/mesh.hpp"
#include "gsrecon/plasma_domain.hpp"
#include "gsrecon/spline_basis.hpp"

namespace gsr {

/// Straight line of sight with a composite-midpoint quadrature located on a
/// mesh once at construction.
struct Chord {
  Point start{};
  Point end{};
  double length = 0.0;
  /// Unit normal: the chord direction rotated by -90° (vertical upward chord → +r̂).
  Point normal{};
  std::vector<Point> nodes;
  std::vector<double> weights;
  std::vector<std::optional<Location>> locations;
};

/// Quadrature step defaults to half the mesh size.
Chord make_chord(const Mesh& mesh, Point start, Point end, double max_step = 0.0);

struct PointValue {
  Point p{};
  double value = 0.0;
};

struct ChordMeasurement {
  Point start{};
  Point end{};
  double gamma = 0.0;  ///< ∫ nₑ dl, m⁻²
  double alpha = 0.0;  ///< polarimetry line integral, rad
};

/// Boundary magnetics, chord integrals and global scalars.
struct MeasurementSet {
  std::vector<PointValue> g_D;  ///< ψ at boundary points, Wb/rad
  std::vector<PointValue> g_N;  ///< (1/r) ∂ψ/∂n at the points M_k, T
  std::vector<ChordMeasurement> chords;
  double Ip = 0.0;
  double B0 = 0.0;

  /// Throws ErrorKind::Validation on non-finite values or an empty g_N.
  void validate() const;
};

/// Dirichlet values in boundary-loop order, matched to the mesh by position.
std::vector<double> dirichlet_values(const Mesh& mesh, const MeasurementSet& ms);

/// Text format (sections in this order, '#' comments allowed):
///   Ip <value>
///   B0 <value>
///   gD <count>      then <count> lines "r z value"
///   gN <count>      then <count> lines "r z value"
///   chords <count>  then <count> lines "r1 z1 r2 z2 gamma alpha"
std::string format_measurements(const MeasurementSet& ms);
MeasurementSet parse_measurements(const std::string& text);
void save_measurements(const MeasurementSet& ms, const std::filesystem::path& path);
MeasurementSet load_measurements(const std::filesystem::path& path);

/// Measurement uncertainties and the derived misfit weights
/// w = 1 / (√count · σ).
struct WeightConfig {
  double sigma_mag = 1.0;
  double sigma_polar = 1e-1;
  double sigma_inter = 1e18;
  std::size_t n_mag = 1;
  std::size_t n_chords = 1;

  double w_mag() const;
  double w_polar() const;
  double w_inter() const;
  void validate() const;
};

/// σ_mag = 1% of B_m = μ0 |Ip| / |Γ|; σ_polar = 0.1 rad; σ_inter = 1e18.
WeightConfig default_weights(double Ip, double boundary_length, std::size_t n_mag, std::size_t n_chords,
                             double mu0 = kMu0);

/// C0 (N × n): row k maps nodal ψ to (1/r) ∂ψ/∂n at M_k using the
/// area-weighted P1 gradient of the triangles touching M_k.
SparseMatrix build_neumann_observer(const Mesh& mesh, std::span<const Point> points);

/// Every boundary node, in loop order.
std::vector<Point> boundary_points(const Mesh& mesh);

/// N_c × m matrix of ∫_c Φ_j(ψ̄) χ_Ωp dl.
Eigen::MatrixXd build_interferometry_matrix(const Mesh& mesh, std::span<const Chord> chords,
                                            const PlasmaState& state, const SplineBasis& basis);

/// C1 (N_c × n): row k maps nodal ψ to ∫_c (nₑ(ψ̄)/r) ∂ψ/∂n χ dl, with nₑ in
/// units of the density scale. Throws ErrorKind::State when nₑ is absent.
Eigen::MatrixXd build_polarimetry_observer(const Mesh& mesh, std::span<const Chord> chords,
                                           const std::optional<Eigen::VectorXd>& ne_coeffs,
                                           const PlasmaState& state, const SplineBasis& basis);

}  // namespace gsr
