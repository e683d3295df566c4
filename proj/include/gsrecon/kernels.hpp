#pragma once

// Data-parallel inner loops. Each kernel has a straightforward serial
// reference in `serial::` and an OpenMP version in `omp::`; the library calls
// the OpenMP ones, tests check both agree, and bench/ compares their speed.

#include <functional>
#include <span>

#include <Eigen/Core>

#include "gsrecon/fem.hpp"
#include "gsrecon/mesh.hpp"
#include "gsrecon/plasma_domain.hpp"
#include "gsrecon/spline_basis.hpp"

namespace gsr {
struct Chord;
}

namespace gsr::kernels {

using ProfileFn = std::function<double(double)>;

namespace serial {

/// n × 2m matrix Y: column j < m holds ∫ λ (r/r0) Φ_j(ψ̄) v_i, column m + j
/// holds ∫ λ (r0/r) Φ_j(ψ̄) v_i, over the plasma quadrature. Boundary rows are zero.
Eigen::MatrixXd source_matrix(const Mesh& mesh, std::span<const QuadPoint> quad, const SplineBasis& basis,
                              double lambda, double r0);

/// y_i = ∫ λ [(r/r0) A(ψ̄) + (r0/r) B(ψ̄)] v_i; boundary rows are zero.
Eigen::VectorXd source_vector(const Mesh& mesh, std::span<const QuadPoint> quad, const ProfileFn& a,
                              const ProfileFn& b, double lambda, double r0);

Eigen::MatrixXd solve_multi(const Factorization& lu, const Eigen::MatrixXd& columns);

/// N_c × m matrix of ∫_chord Φ_j(ψ̄) χ dl.
Eigen::MatrixXd chord_basis_matrix(const Mesh& mesh, std::span<const Chord> chords, const PlasmaState& state,
                                   const SplineBasis& basis);

}  // namespace serial

namespace omp {

Eigen::MatrixXd source_matrix(const Mesh& mesh, std::span<const QuadPoint> quad, const SplineBasis& basis,
                              double lambda, double r0);
Eigen::VectorXd source_vector(const Mesh& mesh, std::span<const QuadPoint> quad, const ProfileFn& a,
                              const ProfileFn& b, double lambda, double r0);
Eigen::MatrixXd solve_multi(const Factorization& lu, const Eigen::MatrixXd& columns);
Eigen::MatrixXd chord_basis_matrix(const Mesh& mesh, std::span<const Chord> chords, const PlasmaState& state,
                                   const SplineBasis& basis);

}  // namespace omp

/// Number of OpenMP threads the parallel kernels will use.
int max_threads();

}  // namespace gsr::kernels
