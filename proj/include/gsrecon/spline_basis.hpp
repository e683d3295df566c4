#pragma once

#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Core>

namespace gsr {

/// B-spline basis (Φ_i) on [0, 1] with an open uniform knot vector.
///
/// With `end_constraint` set, the A and B expansions are required to vanish
/// at x = 1. For an open knot vector only the last basis function is nonzero
/// there, so the constraint amounts to fixing the last coefficient to zero.
class SplineBasis {
 public:
  explicit SplineBasis(int m = 8, int degree = 3, bool end_constraint = true);

  int size() const { return m_; }
  int degree() const { return degree_; }
  bool end_constraint() const { return end_constraint_; }
  const std::vector<double>& knots() const { return knots_; }

  /// Values of all Φ_i at x (Cox–de Boor). Out-of-range x is clamped to
  /// [0, 1]; `clamped` is set when that happened.
  Eigen::VectorXd eval(double x, bool* clamped = nullptr) const;

  /// Row k holds the k-th derivative of every Φ_i at x, k = 0..order.
  Eigen::MatrixXd derivatives(double x, int order) const;

  /// Greville abscissae; coefficients c_i = f(ξ_i) reproduce affine f exactly.
  std::vector<double> greville() const;

  /// Index of the knot span containing x (x already in [0, 1]).
  int find_span(double x) const;

  /// Distinct breakpoints 0 = x_0 < ... < x_s = 1.
  std::vector<double> breakpoints() const;

 private:
  void basis_functions(int span, double x, double* out) const;

  int m_;
  int degree_;
  bool end_constraint_;
  std::vector<double> knots_;
};

/// Λ_ij = ∫_0^1 Φ''_i Φ''_j dx by Gauss–Legendre quadrature per knot span.
/// Throws ErrorKind::Argument (unsupported basis) when degree < 2.
Eigen::MatrixXd regularization_matrix(const SplineBasis& basis);

enum class ProfileKind { A, B, Ne };

/// Coefficients of A, B and (optionally) nₑ in the spline basis. nₑ
/// coefficients are in units of the density scale (1e19 m⁻³ by default).
struct ProfileExpansion {
  Eigen::VectorXd a;
  Eigen::VectorXd b;
  std::optional<Eigen::VectorXd> ne;

  /// u = (a_1..a_m, b_1..b_m)
  Eigen::VectorXd stacked() const;
  static ProfileExpansion from_stacked(const Eigen::VectorXd& u, int m);
};

/// Σ coeff_i Φ_i(x); the last A/B coefficient is ignored under the end constraint.
/// Throws ErrorKind::State when nₑ is requested but absent.
double eval_expansion(const SplineBasis& basis, const ProfileExpansion& p, ProfileKind which, double x);

double eval_coefficients(const SplineBasis& basis, const Eigen::VectorXd& coeffs, double x);

/// Least-squares projection of a function onto the basis (sampled densely).
/// With `vanish_at_one` the last coefficient is forced to zero.
Eigen::VectorXd fit_coefficients(const SplineBasis& basis, const std::function<double(double)>& f,
                                 bool vanish_at_one);

/// Coefficients of the affine function c0 + c1 x (exact via Greville abscissae).
Eigen::VectorXd affine_coefficients(const SplineBasis& basis, double c0, double c1);

}  // namespace gsr
