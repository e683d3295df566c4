#include "gsrecon/kernels.hpp"

#include <omp.h>

#include "gsrecon/error.hpp"
#include "gsrecon/observation.hpp"

namespace gsr::kernels {

namespace {

// Per quadrature point: node index for each vertex (or -1 on Dirichlet rows)
// and the two radial factors of the source.
struct PointFactors {
  double w_a;  // weight · λ · r/r0
  double w_b;  // weight · λ · r0/r
};

PointFactors factors(const QuadPoint& q, double lambda, double r0) {
  return {q.weight * lambda * q.p.r / r0, q.weight * lambda * r0 / q.p.r};
}

double chord_psibar(const Mesh& mesh, const PlasmaState& state, const Location& loc) {
  const auto& tri = mesh.triangle(loc.triangle);
  double pb = 0.0;
  for (std::size_t a = 0; a < 3; ++a) pb += loc.bary[a] * state.psibar[tri[a]];
  return pb;
}

void check_r0(double r0) {
  if (!(r0 > 0.0)) throw Error(ErrorKind::Domain, "r0 must be positive");
}

}  // namespace

namespace serial {

Eigen::MatrixXd source_matrix(const Mesh& mesh, std::span<const QuadPoint> quad, const SplineBasis& basis,
                              double lambda, double r0) {
  check_r0(r0);
  const int m = basis.size();
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(mesh.num_nodes()), 2 * m);
  for (const auto& q : quad) {
    const Eigen::VectorXd phi = basis.eval(q.psibar);
    const auto f = factors(q, lambda, r0);
    const auto& tri = mesh.triangle(q.triangle);
    for (std::size_t k = 0; k < 3; ++k) {
      if (mesh.is_boundary(tri[k])) continue;
      y.row(tri[k]).head(m) += (f.w_a * q.bary[k]) * phi.transpose();
      y.row(tri[k]).tail(m) += (f.w_b * q.bary[k]) * phi.transpose();
    }
  }
  return y;
}

Eigen::VectorXd source_vector(const Mesh& mesh, std::span<const QuadPoint> quad, const ProfileFn& a,
                              const ProfileFn& b, double lambda, double r0) {
  check_r0(r0);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mesh.num_nodes()));
  for (const auto& q : quad) {
    const auto f = factors(q, lambda, r0);
    const double s = f.w_a * a(q.psibar) + f.w_b * b(q.psibar);
    const auto& tri = mesh.triangle(q.triangle);
    for (std::size_t k = 0; k < 3; ++k)
      if (!mesh.is_boundary(tri[k])) y[tri[k]] += s * q.bary[k];
  }
  return y;
}

Eigen::MatrixXd solve_multi(const Factorization& lu, const Eigen::MatrixXd& columns) {
  if (columns.rows() != lu.size()) throw Error(ErrorKind::Argument, "right-hand side size mismatch");
  Eigen::MatrixXd out(columns.rows(), columns.cols());
  for (Eigen::Index j = 0; j < columns.cols(); ++j) out.col(j) = lu.solve(columns.col(j));
  return out;
}

Eigen::MatrixXd chord_basis_matrix(const Mesh& mesh, std::span<const Chord> chords, const PlasmaState& state,
                                   const SplineBasis& basis) {
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(chords.size()), basis.size());
  for (std::size_t k = 0; k < chords.size(); ++k) {
    const Chord& c = chords[k];
    for (std::size_t q = 0; q < c.nodes.size(); ++q) {
      const auto& loc = c.locations[q];
      if (!loc || !state.active[static_cast<std::size_t>(loc->triangle)]) continue;
      const double pb = chord_psibar(mesh, state, *loc);
      if (!(pb <= 1.0)) continue;
      b.row(static_cast<Eigen::Index>(k)) += c.weights[q] * basis.eval(pb).transpose();
    }
  }
  return b;
}

}  // namespace serial

namespace omp {

Eigen::MatrixXd source_matrix(const Mesh& mesh, std::span<const QuadPoint> quad, const SplineBasis& basis,
                              double lambda, double r0) {
  check_r0(r0);
  const int m = basis.size();
  const auto np = static_cast<std::ptrdiff_t>(quad.size());

  // Basis values per point, then a row-parallel gather through the
  // node→triangle adjacency so no two threads write the same row.
  Eigen::MatrixXd phi(m, np);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < np; ++i) phi.col(i) = basis.eval(quad[static_cast<std::size_t>(i)].psibar);

  const std::size_t nt = mesh.num_triangles();
  std::vector<int> first(nt + 1, 0);
  for (const auto& q : quad) ++first[static_cast<std::size_t>(q.triangle) + 1];
  for (std::size_t t = 0; t < nt; ++t) first[t + 1] += first[t];
  std::vector<int> order(quad.size());
  {
    std::vector<int> fill(first.begin(), first.end() - 1);
    for (std::size_t i = 0; i < quad.size(); ++i)
      order[static_cast<std::size_t>(fill[static_cast<std::size_t>(quad[i].triangle)]++)] = static_cast<int>(i);
  }

  const auto n = static_cast<std::ptrdiff_t>(mesh.num_nodes());
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(n, 2 * m);
#pragma omp parallel
  {
    Eigen::VectorXd ra(m), rb(m);
#pragma omp for schedule(dynamic, 64)
    for (std::ptrdiff_t node = 0; node < n; ++node) {
      const int v = static_cast<int>(node);
      if (mesh.is_boundary(v)) continue;
      ra.setZero();
      rb.setZero();
      for (int t : mesh.node_triangles(v)) {
        const auto& tri = mesh.triangle(t);
        const std::size_t k = tri[0] == v ? 0 : (tri[1] == v ? 1 : 2);
        for (int s = first[static_cast<std::size_t>(t)]; s < first[static_cast<std::size_t>(t) + 1]; ++s) {
          const int i = order[static_cast<std::size_t>(s)];
          const auto& q = quad[static_cast<std::size_t>(i)];
          const auto f = factors(q, lambda, r0);
          ra += (f.w_a * q.bary[k]) * phi.col(i);
          rb += (f.w_b * q.bary[k]) * phi.col(i);
        }
      }
      y.row(node).head(m) = ra.transpose();
      y.row(node).tail(m) = rb.transpose();
    }
  }
  return y;
}

Eigen::VectorXd source_vector(const Mesh& mesh, std::span<const QuadPoint> quad, const ProfileFn& a,
                              const ProfileFn& b, double lambda, double r0) {
  check_r0(r0);
  const auto np = static_cast<std::ptrdiff_t>(quad.size());
  std::vector<double> s(quad.size());
  // Profile callables may not be thread-safe; evaluate them serially.
  for (std::ptrdiff_t i = 0; i < np; ++i) {
    const auto& q = quad[static_cast<std::size_t>(i)];
    const auto f = factors(q, lambda, r0);
    s[static_cast<std::size_t>(i)] = f.w_a * a(q.psibar) + f.w_b * b(q.psibar);
  }
  Eigen::VectorXd y = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mesh.num_nodes()));
  for (std::ptrdiff_t i = 0; i < np; ++i) {
    const auto& q = quad[static_cast<std::size_t>(i)];
    const auto& tri = mesh.triangle(q.triangle);
    for (std::size_t k = 0; k < 3; ++k)
      if (!mesh.is_boundary(tri[k])) y[tri[k]] += s[static_cast<std::size_t>(i)] * q.bary[k];
  }
  return y;
}

Eigen::MatrixXd solve_multi(const Factorization& lu, const Eigen::MatrixXd& columns) {
  if (columns.rows() != lu.size()) throw Error(ErrorKind::Argument, "right-hand side size mismatch");
  Eigen::MatrixXd out(columns.rows(), columns.cols());
  const auto nc = static_cast<std::ptrdiff_t>(columns.cols());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t j = 0; j < nc; ++j) out.col(j) = lu.solve(columns.col(j));
  return out;
}

Eigen::MatrixXd chord_basis_matrix(const Mesh& mesh, std::span<const Chord> chords, const PlasmaState& state,
                                   const SplineBasis& basis) {
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(chords.size()), basis.size());
  const auto nc = static_cast<std::ptrdiff_t>(chords.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t k = 0; k < nc; ++k) {
    const Chord& c = chords[static_cast<std::size_t>(k)];
    for (std::size_t q = 0; q < c.nodes.size(); ++q) {
      const auto& loc = c.locations[q];
      if (!loc || !state.active[static_cast<std::size_t>(loc->triangle)]) continue;
      const double pb = chord_psibar(mesh, state, *loc);
      if (!(pb <= 1.0)) continue;
      b.row(k) += c.weights[q] * basis.eval(pb).transpose();
    }
  }
  return b;
}

}  // namespace omp

int max_threads() { return omp_get_max_threads(); }

}  // namespace gsr::kernels
