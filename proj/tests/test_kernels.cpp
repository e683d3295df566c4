#include <doctest.h>

#include <cmath>

#include "gsrecon/kernels.hpp"
#include "gsrecon/observation.hpp"
#include "twin_fixture.hpp"

using namespace gsr;
using gsr::test::TwinFixture;

namespace {

double rel_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  REQUIRE(a.rows() == b.rows());
  REQUIRE(a.cols() == b.cols());
  const double n = b.norm();
  return n == 0.0 ? (a - b).norm() : (a - b).norm() / n;
}

}  // namespace

TEST_SUITE("kernels") {
  TEST_CASE("serial and OpenMP kernels agree on the desk twin") {
    const auto& t = TwinFixture::get();
    const auto& eq = t.ref.eq;
    const auto quad = plasma_quadrature(t.mesh, eq.plasma);
    REQUIRE_FALSE(quad.empty());
    MESSAGE("threads: " << kernels::max_threads());

    const Eigen::MatrixXd ys = kernels::serial::source_matrix(t.mesh, quad, eq.basis, eq.lambda, 3.0);
    const Eigen::MatrixXd yo = kernels::omp::source_matrix(t.mesh, quad, eq.basis, eq.lambda, 3.0);
    CHECK(ys.norm() > 0.0);
    CHECK(rel_diff(yo, ys) <= 1e-14);

    auto a = [](double x) { return (1.0 - x) * std::exp(-x); };
    auto b = [](double x) { return 0.5 * (1.0 - x * x); };
    const Eigen::VectorXd vs = kernels::serial::source_vector(t.mesh, quad, a, b, eq.lambda, 3.0);
    const Eigen::VectorXd vo = kernels::omp::source_vector(t.mesh, quad, a, b, eq.lambda, 3.0);
    CHECK(rel_diff(vo, vs) <= 1e-14);

    const Eigen::MatrixXd xs = kernels::serial::solve_multi(t.fem.lu(), ys);
    const Eigen::MatrixXd xo = kernels::omp::solve_multi(t.fem.lu(), ys);
    CHECK(rel_diff(xo, xs) <= 1e-14);

    std::vector<Chord> chords;
    for (const auto& c : t.clean.chords) chords.push_back(make_chord(t.mesh, c.start, c.end));
    const Eigen::MatrixXd bs = kernels::serial::chord_basis_matrix(t.mesh, chords, eq.plasma, eq.basis);
    const Eigen::MatrixXd bo = kernels::omp::chord_basis_matrix(t.mesh, chords, eq.plasma, eq.basis);
    CHECK(bs.norm() > 0.0);
    CHECK(rel_diff(bo, bs) <= 1e-14);
  }

  TEST_CASE("empty inputs") {
    const auto& t = TwinFixture::get();
    const std::vector<QuadPoint> none;
    const SplineBasis basis;
    const Eigen::MatrixXd y = kernels::omp::source_matrix(t.mesh, none, basis, 1.0, 3.0);
    CHECK(y.rows() == t.mesh.num_nodes());
    CHECK(y.cols() == 2 * basis.size());
    CHECK(y.isZero(0.0));
    const Eigen::MatrixXd x = kernels::omp::solve_multi(t.fem.lu(), Eigen::MatrixXd(t.mesh.num_nodes(), 0));
    CHECK(x.cols() == 0);
  }
}
