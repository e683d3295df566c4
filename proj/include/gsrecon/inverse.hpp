#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gsrecon/forward.hpp"
#include "gsrecon/observation.hpp"

namespace gsr {

struct RegularizationConfig {
  double eps = 1e-5;      ///< ε_A = ε_B
  double eps_ne = 1e-2;   ///< used directly as the nondimensional ε̂ of the nₑ system
  double ne_scale = 1e19; ///< α, m⁻³

  void validate() const;
};

/// Defaults by use case: 1e-5 noise-free, 1e-1 noisy magnetics, 5e-2 with
/// internal measurements.
double default_eps(bool noisy, bool use_internal);

/// v̂ solving (α² (D½B)ᵀ(D½B) + ε̂ Λ) v̂ = α (D½B)ᵀ D½ γ, so nₑ = α Σ v̂_j Φ_j.
/// `sqrt_w` is the diagonal of D½. Throws ErrorKind::Regularization when the
/// system is singular.
Eigen::VectorXd identify_ne(const Eigen::MatrixXd& b_int, const Eigen::VectorXd& gamma, const Eigen::VectorXd& sqrt_w,
                            double eps_ne, const Eigen::MatrixXd& lambda_reg, double alpha_scale);

/// Weighted linear least-squares problem in the profile coefficients:
/// Ẽ = D½ C K⁻¹ Y and f̃ = D½ (d − C K⁻¹ g).
struct ABSystem {
  Eigen::MatrixXd e;  ///< Ẽ, rows = observations, cols = 2m
  Eigen::VectorXd f;  ///< f̃
};

ABSystem build_ab_system(const Eigen::MatrixXd& c, const Eigen::MatrixXd& kinv_y, const Eigen::VectorXd& kinv_g,
                         const Eigen::VectorXd& d, const Eigen::VectorXd& sqrt_w);

/// Minimizer of ½‖Ẽu − f̃‖² + (ε/2) uᵀ diag(Λ, Λ) u. Under the end constraint
/// the last A and B coefficients are eliminated (held at zero). Throws
/// ErrorKind::Regularization when the reduced system is singular and
/// ErrorKind::State when Ẽ holds non-finite values.
Eigen::VectorXd identify_ab(const ABSystem& sys, double eps, const Eigen::MatrixXd& lambda_reg, bool end_constraint);

/// ½‖Ẽu − f̃‖² + (ε/2) uᵀ diag(Λ, Λ) u.
double ab_objective(const ABSystem& sys, double eps, const Eigen::MatrixXd& lambda_reg, const Eigen::VectorXd& u);

struct RescaledDofs {
  Eigen::VectorXd u;
  double lambda = 1.0;
  bool skipped = false;  ///< all a_i = 0: scale left alone
};

/// (u / m̂, λ m̂) with m̂ = max|a_i| over the first m entries.
RescaledDofs rescale_dofs(const Eigen::VectorXd& u, double lambda, int m);

struct CostBreakdown {
  double j0 = 0.0;      ///< magnetics misfit
  double j1 = 0.0;      ///< interferometry misfit
  double j2 = 0.0;      ///< polarimetry misfit
  double j_eps = 0.0;   ///< (ε/2) uᵀΛu over A and B
  double j_eps_ne = 0.0;
  double total() const { return j0 + j1 + j2 + j_eps + j_eps_ne; }
};

struct ReconstructOptions {
  double r0 = 0.0;  ///< required
  bool use_internal = false;
  double tol = 1e-6;
  int max_iter = 30;
  /// Start from a previous state instead of a constant ψ and A = B = 1 − x, λ = 1.
  std::optional<Equilibrium> warm_start;
  /// Default: computed from Ip, |Γ| and the measurement counts.
  std::optional<WeightConfig> weights;
  SplineBasis basis{};
  /// Use a precomputed dense K⁻¹ instead of per-iteration sparse solves.
  bool dense_inverse = false;
  /// Run exactly max_iter iterations (real-time regime); `converged` then
  /// reports whether the last residual met tol.
  bool fixed_iterations = false;
};

struct ReconstructionResult {
  Equilibrium equilibrium;
  CostBreakdown cost;
  std::vector<double> residuals;
  std::vector<double> lambda_history;
  int iterations = 0;
  bool converged = false;
  /// Set when the loop stopped on a plasma failure (lost axis, empty domain, ...).
  std::optional<ErrorKind> error;
  std::string message;
};

/// Identification fixed point: λ update, nₑ identification (with internal
/// data), A/B identification, direct step, domain update; repeated until the
/// relative ψ change is ≤ tol or max_iter is reached. Non-convergence and
/// plasma loss are reported in the result, not thrown.
ReconstructionResult reconstruct(const FemSystem& fem, const MeasurementSet& ms, const RegularizationConfig& reg,
                                 const ReconstructOptions& options);

/// Reusable pieces of one reconstruction setup (chords, C0, weights, K⁻¹g).
struct ObservationSetup {
  std::vector<Chord> chords;
  SparseMatrix c0;
  WeightConfig weights;
  Eigen::VectorXd g;       ///< Dirichlet vector
  Eigen::VectorXd kinv_g;  ///< K⁻¹ g
};

ObservationSetup make_observation_setup(const FemSystem& fem, const MeasurementSet& ms,
                                        const std::optional<WeightConfig>& weights);

}  // namespace gsr
