#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gsrecon/forward.hpp"
#include "gsrecon/mesh.hpp"
#include "gsrecon/plasma_domain.hpp"

namespace gsr {

/// Closed level line of ψ̄ around the magnetic axis.
struct FluxContour {
  double level = 0.0;
  std::vector<Point> points;      ///< closed: front() == back(), counter-clockwise
  std::vector<double> grad_psi;   ///< |∇ψ| on each segment (P1 gradient of its triangle)
  std::vector<double> bp;         ///< B_p = |∇ψ| / r at each segment midpoint

  double length() const;
};

/// Marching-triangles level line of ψ̄ = level, chained into loops; returns the
/// innermost closed loop enclosing the axis. Throws ErrorKind::Argument for a
/// level outside (0, 1) and ErrorKind::OpenContour when the level line around
/// the axis leaves the mesh or no loop encloses the axis.
FluxContour extract_contour(const Mesh& mesh, const NodalField& psi, const PlasmaState& state, double level);

/// ⟨Q⟩ = ∮ Q dl/B_p / ∮ dl/B_p with dl/B_p = r dl/|∇ψ|, trapezoid rule along
/// the polyline. Throws ErrorKind::DegenerateSurface on a vanishing denominator.
double flux_surface_average(const FluxContour& c, const std::function<double(Point)>& q);

/// Diamagnetic function f(ψ̄) from f² = (B0 r0)² + 2 λ μ0 r0 (ψ_a − ψ_b) ∫_ψ̄^1 B(x) dx,
/// integrated by the trapezoid rule from the boundary inward.
class FProfile {
 public:
  FProfile(std::vector<double> grid, std::vector<double> values);
  /// Linear interpolation; f(1) is B0 r0 exactly.
  double operator()(double psibar) const;
  const std::vector<double>& grid() const { return grid_; }
  const std::vector<double>& values() const { return values_; }

 private:
  std::vector<double> grid_, values_;
};

/// Throws ErrorKind::NonphysicalProfile when the radicand goes negative.
FProfile integrate_f(const std::function<double(double)>& b, double lambda, double psi_axis, double psi_boundary,
                     double B0, double r0, double mu0, int intervals = 1000);
FProfile integrate_f(const Equilibrium& eq, int intervals = 1000);

/// q = (1/2π) ∮ f / (r² B_p) dl on one contour.
double safety_factor(const FluxContour& c, double f);

/// r0⟨j/r⟩ = λ A + λ r0² ⟨1/r²⟩ B.
double mean_current_density(double lambda, double a, double b, double r0, double inv_r2);

struct ProfileTableOptions {
  int points = 101;
  double margin = 0.02;  ///< levels in [margin, 1 − margin] are traced; the rest extrapolated
  bool parallel = true;
};

/// Profiles on a uniform ψ̄ grid over [0, 1]. Entries whose contour could not
/// be traced (and cannot be extrapolated) are empty.
struct ProfileTable {
  std::vector<double> psibar;
  std::vector<double> lambda_a;
  std::vector<std::optional<double>> lambda_b_weighted;  ///< λ r0² ⟨1/r²⟩ B
  std::vector<std::optional<double>> j_mean;             ///< r0 ⟨j/r⟩
  std::vector<std::optional<double>> q;
  std::vector<std::optional<double>> inv_r2;              ///< ⟨1/r²⟩
  std::vector<double> f;
  std::vector<std::optional<double>> ne;                  ///< m⁻³, when identified
  /// Levels traced near an X-point, where q is unreliable.
  std::vector<char> near_separatrix;
};

/// Profile functions and scale feeding a table; `ne` (m⁻³) may be empty.
struct ProfileSource {
  std::function<double(double)> a;
  std::function<double(double)> b;
  std::function<double(double)> ne;
  double lambda = 1.0;
};

ProfileTable compute_profile_table(const Mesh& mesh, const NodalField& psi, const PlasmaState& state,
                                   const MachineParams& machine, const ProfileSource& source,
                                   const ProfileTableOptions& options = {});
ProfileTable compute_profile_table(const Equilibrium& eq, const Mesh& mesh, double ne_scale = 1e19,
                                   const ProfileTableOptions& options = {});

/// CSV: psibar,lambdaA,lambdaB_weighted,j_mean,q,f,ne; absent entries are left empty.
std::string format_profile_csv(const ProfileTable& t);

/// Mean relative error Σ|x − ref| / Σ|ref| over entries present in both.
double mean_relative_error(const std::vector<std::optional<double>>& x, const std::vector<std::optional<double>>& ref);
double mean_relative_error(const std::vector<double>& x, const std::vector<double>& ref);

}  // namespace gsr
