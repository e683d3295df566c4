#pragma once

#include <array>
#include <optional>
#include <vector>

#include "gsrecon/mesh.hpp"

namespace gsr {

enum class BoundaryMode { Limiter, XPoint };

/// Refined critical point of a nodal field.
struct CriticalPoint {
  Point location{};
  double psi = 0.0;
  int node = -1;
};

/// Free-boundary bookkeeping. Sign convention: ψ is maximal on the magnetic
/// axis and the plasma is {ψ ≥ ψ_b}. Fields with the opposite sign must be
/// negated by the caller.
struct PlasmaDomain {
  double psi_axis = 0.0;
  double psi_boundary = 0.0;
  Point axis{};
  int axis_node = -1;
  std::optional<Point> xpoint;
  BoundaryMode mode = BoundaryMode::Limiter;
};

/// Domain plus the per-node normalized flux and the set of triangles
/// belonging to the plasma component connected to the axis.
struct PlasmaState {
  PlasmaDomain domain;
  NodalField psibar;
  std::vector<char> active;  ///< per triangle
  /// Set when the state was built from a flat ψ: ψ̄ ≡ 0 inside the limiter.
  bool cold = false;
};

/// Magnetic axis: largest strict local maximum of ψ over interior nodes inside
/// the limiter, refined by a quadratic least-squares fit on the 1-ring
/// (2-ring fallback). Throws ErrorKind::NoPlasma when none exists.
CriticalPoint find_axis(const Mesh& mesh, const NodalField& psi);

struct XPointOptions {
  /// Hessian determinant threshold, relative to (max|ψ| / h²)².
  double det_tolerance = 1e-12;
};

/// Largest-ψ saddle of ψ inside the limiter, or nothing.
std::optional<CriticalPoint> find_xpoint(const Mesh& mesh, const NodalField& psi,
                                         const XPointOptions& options = {});

struct BoundaryFlux {
  double psi_boundary = 0.0;
  BoundaryMode mode = BoundaryMode::Limiter;
};

/// ψ_b = max of ψ along the limiter, or ψ(X) when an X-point lies at or above
/// that value (ties go to the X-point). Throws ErrorKind::DegeneratePlasma
/// when ψ_b equals ψ_a.
BoundaryFlux boundary_flux(const Mesh& mesh, const NodalField& psi, double psi_axis,
                           const std::optional<CriticalPoint>& xpoint);

/// Maximum of the interpolated field along the limiter contour.
double limiter_max(const Mesh& mesh, const NodalField& psi);

/// ψ̄ = (ψ − ψ_a) / (ψ_b − ψ_a).
NodalField normalized_flux(const NodalField& psi, double psi_axis, double psi_boundary);

/// Runs axis search, X-point search, boundary flux and the plasma component fill.
PlasmaState locate_plasma(const Mesh& mesh, const NodalField& psi, const XPointOptions& options = {});

/// Starting state for a flat ψ: whole limiter interior, ψ̄ ≡ 0.
PlasmaState cold_plasma_state(const Mesh& mesh, double psi_value);

/// True when every value of ψ is the same to within relative 1e-14.
bool is_flat(const NodalField& psi);

/// Characteristic function of Ω_p at a point (1 inside, 0 outside).
double plasma_mask(const Mesh& mesh, const PlasmaState& state, Point p, PointLocator& locator);

/// One node of the mid-edge source quadrature restricted to the plasma.
struct QuadPoint {
  int triangle = -1;
  Point p{};
  std::array<double, 3> bary{};
  double weight = 0.0;
  double psibar = 0.0;
};

/// 3-point mid-edge rule on every active triangle, keeping points with ψ̄ ≤ 1.
std::vector<QuadPoint> plasma_quadrature(const Mesh& mesh, const PlasmaState& state);

/// Σ mask·weight / area over the 3-point rule of one triangle.
double triangle_plasma_coverage(const Mesh& mesh, const PlasmaState& state, int triangle);

}  // namespace gsr
