#pragma once

#include <memory>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "gsrecon/mesh.hpp"

namespace gsr {

inline constexpr double kMu0 = 4.0e-7 * 3.14159265358979323846;

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;

enum class InverseRadiusQuadrature {
  Centroid,  ///< one-point rule: area / r_centroid
  Exact,     ///< closed-form element integral of 1/r
};

/// Integral of 1/r over one triangle under the chosen rule.
double inverse_radius_integral(const Mesh& mesh, int triangle, InverseRadiusQuadrature rule);

/// Sparse matrix of ∫ (1/(μ0 r)) ∇v_i·∇v_j, optionally with Dirichlet rows replaced.
class StiffnessMatrix {
 public:
  StiffnessMatrix(SparseMatrix matrix, bool dirichlet_applied, std::vector<int> constrained)
      : matrix_(std::move(matrix)), dirichlet_applied_(dirichlet_applied), constrained_(std::move(constrained)) {}

  const SparseMatrix& matrix() const { return matrix_; }
  bool dirichlet_applied() const { return dirichlet_applied_; }
  const std::vector<int>& constrained_rows() const { return constrained_; }
  Eigen::Index size() const { return matrix_.rows(); }

 private:
  SparseMatrix matrix_;
  bool dirichlet_applied_ = false;
  std::vector<int> constrained_;
};

StiffnessMatrix assemble_stiffness(const Mesh& mesh, double mu0 = kMu0,
                                   InverseRadiusQuadrature rule = InverseRadiusQuadrature::Centroid);

/// Replaces each constrained row by the identity row. Throws ErrorKind::State
/// when applied twice.
StiffnessMatrix impose_dirichlet(const StiffnessMatrix& k, std::span<const int> boundary_nodes);

/// Reusable sparse LU factorization of the Dirichlet-modified matrix.
/// Immutable once built; solves with distinct right-hand sides may run concurrently.
class Factorization {
 public:
  Eigen::Index size() const { return n_; }

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;
  /// Column-by-column solves, OpenMP-parallel over columns.
  Eigen::MatrixXd solve_multi(const Eigen::MatrixXd& columns) const;
  /// Dense K⁻¹, for callers that want to precompute it once.
  Eigen::MatrixXd dense_inverse() const;

 private:
  friend Factorization factorize(const StiffnessMatrix& k);
  struct Impl;
  std::shared_ptr<const Impl> impl_;
  Eigen::Index n_ = 0;
};

Factorization factorize(const StiffnessMatrix& k);

/// Right-hand side g carrying Dirichlet data at the boundary rows.
Eigen::VectorXd dirichlet_vector(const Mesh& mesh, std::span<const double> g_boundary);

}  // namespace gsr
