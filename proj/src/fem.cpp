#include "gsrecon/fem.hpp"

#include <cmath>

#include <Eigen/SparseLU>
#include <fmt/format.h>

#include "gsrecon/error.hpp"
#include "gsrecon/kernels.hpp"

namespace gsr {

namespace {

// ∫_0^1 ln(r1 + t (r2 - r1)) dt
double mean_log(double r1, double r2) {
  const double d = r2 - r1;
  if (std::abs(d) <= 1e-12 * std::max(r1, r2)) return std::log(0.5 * (r1 + r2));
  return (r2 * std::log(r2) - r1 * std::log(r1)) / d - 1.0;
}

}  // namespace

double inverse_radius_integral(const Mesh& mesh, int triangle, InverseRadiusQuadrature rule) {
  const auto& g = mesh.element(triangle);
  if (rule == InverseRadiusQuadrature::Centroid) return g.area / g.centroid.r;
  // divergence theorem: ∫_T ∂_r(ln r) dA = ∮ ln r n_r ds, and n_r ds = dz on a ccw loop
  const auto& tri = mesh.triangle(triangle);
  double sum = 0.0;
  for (std::size_t k = 0; k < 3; ++k) {
    const Point a = mesh.node(tri[k]);
    const Point b = mesh.node(tri[(k + 1) % 3]);
    sum += (b.z - a.z) * mean_log(a.r, b.r);
  }
  return sum;
}

StiffnessMatrix assemble_stiffness(const Mesh& mesh, double mu0, InverseRadiusQuadrature rule) {
  if (!(mu0 > 0.0)) throw Error(ErrorKind::Argument, "mu0 must be positive");
  const auto n = static_cast<Eigen::Index>(mesh.num_nodes());
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(9 * mesh.num_triangles());
  for (int t = 0; t < static_cast<int>(mesh.num_triangles()); ++t) {
    const auto& tri = mesh.triangle(t);
    const auto& g = mesh.element(t);
    const double coeff = inverse_radius_integral(mesh, t, rule) / mu0;
    for (std::size_t a = 0; a < 3; ++a) {
      for (std::size_t b = 0; b < 3; ++b) {
        trip.emplace_back(tri[a], tri[b], coeff * dot(g.grad[a], g.grad[b]));
      }
    }
  }
  SparseMatrix k(n, n);
  k.setFromTriplets(trip.begin(), trip.end());
  k.makeCompressed();
  return StiffnessMatrix(std::move(k), false, {});
}

StiffnessMatrix impose_dirichlet(const StiffnessMatrix& k, std::span<const int> boundary_nodes) {
  if (k.dirichlet_applied())
    throw Error(ErrorKind::State, "Dirichlet rows were already imposed on this stiffness matrix");
  const Eigen::Index n = k.size();
  std::vector<char> constrained(static_cast<std::size_t>(n), 0);
  for (int b : boundary_nodes) {
    if (b < 0 || b >= n) throw Error(ErrorKind::Argument, fmt::format("boundary node {} out of range", b));
    constrained[static_cast<std::size_t>(b)] = 1;
  }
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(k.matrix().nonZeros()));
  for (Eigen::Index col = 0; col < k.matrix().outerSize(); ++col) {
    for (SparseMatrix::InnerIterator it(k.matrix(), col); it; ++it) {
      if (!constrained[static_cast<std::size_t>(it.row())]) trip.emplace_back(it.row(), it.col(), it.value());
    }
  }
  for (Eigen::Index i = 0; i < n; ++i)
    if (constrained[static_cast<std::size_t>(i)]) trip.emplace_back(i, i, 1.0);
  SparseMatrix m(n, n);
  m.setFromTriplets(trip.begin(), trip.end());
  m.makeCompressed();
  return StiffnessMatrix(std::move(m), true, std::vector<int>(boundary_nodes.begin(), boundary_nodes.end()));
}

// The identity rows are condensed out: x_B = b_B exactly, and the free block
// K_FF x_F = b_F − K_FB b_B is factored on its own. This is the same solution
// of the modified system without mixing unit rows with entries of order 1/μ0
// in one factorization.
struct Factorization::Impl {
  Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu;
  std::vector<int> free, fixed;
  SparseMatrix k_fb;
};

Factorization factorize(const StiffnessMatrix& k) {
  if (!k.dirichlet_applied())
    throw Error(ErrorKind::State, "factorize requires the Dirichlet-modified stiffness matrix");
  const Eigen::Index n = k.size();
  auto impl = std::make_shared<Factorization::Impl>();
  std::vector<int> pos(static_cast<std::size_t>(n), -1);
  std::vector<char> fixed(static_cast<std::size_t>(n), 0);
  for (int b : k.constrained_rows()) fixed[static_cast<std::size_t>(b)] = 1;
  for (int i = 0; i < n; ++i) {
    auto& list = fixed[static_cast<std::size_t>(i)] ? impl->fixed : impl->free;
    pos[static_cast<std::size_t>(i)] = static_cast<int>(list.size());
    list.push_back(i);
  }
  const auto nf = static_cast<Eigen::Index>(impl->free.size());
  const auto nb = static_cast<Eigen::Index>(impl->fixed.size());
  std::vector<Eigen::Triplet<double>> ff, fb;
  for (Eigen::Index col = 0; col < k.matrix().outerSize(); ++col) {
    for (SparseMatrix::InnerIterator it(k.matrix(), col); it; ++it) {
      const auto r = static_cast<std::size_t>(it.row()), c = static_cast<std::size_t>(it.col());
      if (fixed[r]) continue;
      if (fixed[c])
        fb.emplace_back(pos[r], pos[c], it.value());
      else
        ff.emplace_back(pos[r], pos[c], it.value());
    }
  }
  SparseMatrix kff(nf, nf);
  kff.setFromTriplets(ff.begin(), ff.end());
  kff.makeCompressed();
  impl->k_fb.resize(nf, nb);
  impl->k_fb.setFromTriplets(fb.begin(), fb.end());
  impl->k_fb.makeCompressed();
  if (nf > 0) {
    impl->lu.analyzePattern(kff);
    impl->lu.factorize(kff);
    if (impl->lu.info() != Eigen::Success)
      throw Error(ErrorKind::Factorization,
                  fmt::format("sparse LU failed ({}); check the mesh and Dirichlet rows", impl->lu.lastErrorMessage()));
    // SparseLU reports success on exactly singular pivots in some builds; check the diagonal of U
    const double logdet = impl->lu.logAbsDeterminant();
    if (!std::isfinite(logdet)) throw Error(ErrorKind::Factorization, "stiffness matrix is singular");
  }
  Factorization f;
  f.impl_ = std::move(impl);
  f.n_ = n;
  return f;
}

Eigen::VectorXd Factorization::solve(const Eigen::VectorXd& rhs) const {
  if (!impl_) throw Error(ErrorKind::State, "factorization is empty");
  if (rhs.size() != n_)
    throw Error(ErrorKind::Argument, fmt::format("rhs has length {}, expected {}", rhs.size(), n_));
  const Impl& d = *impl_;
  Eigen::VectorXd x(n_);
  Eigen::VectorXd xb(static_cast<Eigen::Index>(d.fixed.size()));
  for (std::size_t i = 0; i < d.fixed.size(); ++i) {
    xb[static_cast<Eigen::Index>(i)] = rhs[d.fixed[i]];
    x[d.fixed[i]] = rhs[d.fixed[i]];
  }
  if (d.free.empty()) return x;
  Eigen::VectorXd bf(static_cast<Eigen::Index>(d.free.size()));
  for (std::size_t i = 0; i < d.free.size(); ++i) bf[static_cast<Eigen::Index>(i)] = rhs[d.free[i]];
  if (xb.size() > 0) bf -= d.k_fb * xb;
  const Eigen::VectorXd xf = d.lu.solve(bf);
  for (std::size_t i = 0; i < d.free.size(); ++i) x[d.free[i]] = xf[static_cast<Eigen::Index>(i)];
  return x;
}

Eigen::MatrixXd Factorization::solve_multi(const Eigen::MatrixXd& columns) const {
  return kernels::omp::solve_multi(*this, columns);
}

Eigen::MatrixXd Factorization::dense_inverse() const {
  return solve_multi(Eigen::MatrixXd::Identity(n_, n_));
}

Eigen::VectorXd dirichlet_vector(const Mesh& mesh, std::span<const double> g_boundary) {
  if (g_boundary.size() != mesh.boundary().size())
    throw Error(ErrorKind::Argument, fmt::format("Dirichlet data has {} values for {} boundary nodes",
                                                 g_boundary.size(), mesh.boundary().size()));
  Eigen::VectorXd g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mesh.num_nodes()));
  for (std::size_t i = 0; i < g_boundary.size(); ++i) g[mesh.boundary()[i]] = g_boundary[i];
  return g;
}

}  // namespace gsr
