#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gsrecon/error.hpp"
#include "gsrecon/fem.hpp"
#include "gsrecon/mesh.hpp"
#include "gsrecon/plasma_domain.hpp"
#include "gsrecon/spline_basis.hpp"

namespace gsr {

struct MachineParams {
  double r0 = 1.0;   ///< major radius, m
  double B0 = 1.0;   ///< vacuum toroidal field at (r0, 0), T
  double Ip = 1.0;   ///< plasma current, A
  double mu0 = kMu0;

  void validate() const;
};

/// Monotone piecewise-cubic interpolant (Fritsch–Carlson) of tabulated
/// values; constant extrapolation outside the table.
class TabulatedProfile {
 public:
  TabulatedProfile(std::vector<double> x, std::vector<double> y);
  double operator()(double x) const;
  const std::vector<double>& x() const { return x_; }
  const std::vector<double>& y() const { return y_; }

 private:
  std::vector<double> x_, y_, d_;
};

using ProfileFunction = std::function<double(double)>;

/// A and B of the source term as plain functions of ψ̄.
struct ReferenceProfiles {
  ProfileFunction a;
  ProfileFunction b;
};

ReferenceProfiles profiles_from_expansion(const SplineBasis& basis, const ProfileExpansion& p);

/// Stiffness matrix with Dirichlet rows and its factorization, built once
/// per mesh. Keeps a reference to the mesh, which must outlive it.
class FemSystem {
 public:
  explicit FemSystem(const Mesh& mesh, double mu0 = kMu0,
                     InverseRadiusQuadrature rule = InverseRadiusQuadrature::Centroid);

  const Mesh& mesh() const { return *mesh_; }
  double mu0() const { return mu0_; }
  const StiffnessMatrix& stiffness() const { return k_; }
  const Factorization& lu() const { return lu_; }
  Eigen::VectorXd dirichlet(std::span<const double> g_boundary) const;
  /// Dense K⁻¹, computed on first use (thread-safe) and shared by copies.
  const Eigen::MatrixXd& dense_inverse() const;

 private:
  struct Cache;
  const Mesh* mesh_;
  double mu0_;
  StiffnessMatrix k_;
  Factorization lu_;
  std::shared_ptr<Cache> cache_;
};

struct Equilibrium {
  NodalField psi;
  PlasmaState plasma;
  SplineBasis basis;
  ProfileExpansion profiles;
  double lambda = 1.0;
  MachineParams machine;
  std::vector<double> residuals;       ///< entry k: relative change after solve k+1
  std::vector<double> lambda_history;  ///< λ used in each solve
  int iterations = 0;
  bool converged = false;
};

/// Raised when the fixed point exhausts its iteration budget.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, std::vector<double> residuals)
      : Error(ErrorKind::Convergence, what), residuals_(std::move(residuals)) {}
  const std::vector<double>& residuals() const { return residuals_; }

 private:
  std::vector<double> residuals_;
};

/// n × 2m matrix Y of the linearized source. Throws ErrorKind::EmptySource
/// when the plasma quadrature is empty.
Eigen::MatrixXd assemble_source_matrix(const Mesh& mesh, const PlasmaState& state, const SplineBasis& basis,
                                       double lambda, double r0);

/// ∫_Ωp [(r/r0) A(ψ̄) + (r0/r) B(ψ̄)] dx over the plasma quadrature.
double current_integral(const Mesh& mesh, const PlasmaState& state, const ReferenceProfiles& p, double r0);

/// λ = Ip / ∫_Ωp [(r/r0) A + (r0/r) B]. Throws ErrorKind::DivergentLambda when the
/// integral is below 1e-12 of ∫_Ωp (r/r0 + r0/r), ErrorKind::EmptySource when Ω_p
/// has no quadrature points.
double compute_lambda(const Mesh& mesh, const PlasmaState& state, const ReferenceProfiles& p, double Ip, double r0);

/// Total toroidal current λ ∫_Ωp [(r/r0) A + (r0/r) B].
double plasma_current(const Mesh& mesh, const PlasmaState& state, const ReferenceProfiles& p, double lambda,
                      double r0);

/// ψ_new = K⁻¹ (Y u + g).
NodalField direct_step(const Factorization& lu, const Eigen::MatrixXd& y, const Eigen::VectorXd& u,
                       const Eigen::VectorXd& g);

struct IterationInfo {
  int iteration = 0;
  double lambda = 0.0;
  double residual = 0.0;
  const PlasmaState* state = nullptr;  ///< domain the λ update used
};

struct ForwardOptions {
  double tol = 1e-6;
  int max_iter = 30;
  double relaxation = 1.0;
  std::optional<NodalField> warm_start;
  /// Basis for the stored profile expansion.
  SplineBasis basis{};
  std::function<void(const IterationInfo&)> on_iteration;
};

/// Picard iteration for the free-boundary problem: locate Ω_p, update λ,
/// solve K ψ = y(ψ̄) + g until ‖ψⁿ⁺¹ − ψⁿ‖ / ‖ψⁿ‖ ≤ tol. The returned
/// equilibrium stores the least-squares projection of the reference profiles
/// and λ recomputed for it on the final domain. Throws ConvergenceError on
/// budget exhaustion.
Equilibrium forward_fixed_point(const FemSystem& fem, const MachineParams& machine, const ReferenceProfiles& ref,
                                std::span<const double> g_boundary, const ForwardOptions& options = {});

/// Plain-text equilibrium file: machine parameters, λ, basis, coefficient
/// vectors and nodal ψ. Loading rebuilds the plasma state on the given mesh.
std::string format_equilibrium(const Equilibrium& eq);
Equilibrium parse_equilibrium(const std::string& text, const Mesh& mesh);
void save_equilibrium(const Equilibrium& eq, const std::filesystem::path& path);
Equilibrium load_equilibrium(const std::filesystem::path& path, const Mesh& mesh);

/// Plasma state for any ψ: the cold state when ψ is flat, else locate_plasma.
PlasmaState plasma_state_for(const Mesh& mesh, const NodalField& psi);

}  // namespace gsr
