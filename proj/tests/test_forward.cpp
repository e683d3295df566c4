#include <doctest.h>

#include <cmath>
#include <functional>

#include "gsrecon/forward.hpp"
#include "gsrecon/twin.hpp"
#include "test_util.hpp"

using namespace gsr;
using gsr::test::kind_of;
using gsr::test::sample;

namespace {

// ψ̄ ≡ 0 on the chosen triangles, so only Φ_0 (= 1 at x = 0) is active
PlasmaState flat_state(const Mesh& m, const std::function<bool(int)>& keep) {
  PlasmaState st;
  st.psibar = NodalField::Zero(static_cast<Eigen::Index>(m.num_nodes()));
  st.active.assign(m.num_triangles(), 0);
  for (std::size_t t = 0; t < m.num_triangles(); ++t) st.active[t] = keep(static_cast<int>(t)) ? 1 : 0;
  return st;
}

struct Twin {
  TwinScenario s;
  Mesh mesh = make_twin_mesh(s);
  FemSystem fem{mesh};
  std::vector<double> g = twin_boundary_flux(mesh, s);
  ReferenceProfiles ref = twin_reference_profiles(s);
};

}  // namespace

TEST_SUITE("forward_solver") {
  TEST_CASE("source matrix: zero coefficients, Dirichlet rows and the area moment") {
    const Mesh m = build_rect_mesh(2.0, 4.0, -1.0, 1.0, 10, 10);
    auto interior = [&](int t) {
      for (int v : m.triangle(t))
        if (m.is_boundary(v)) return false;
      return true;
    };
    const PlasmaState st = flat_state(m, interior);
    const SplineBasis basis;
    const double r0 = 3.0;
    const Eigen::MatrixXd y = assemble_source_matrix(m, st, basis, 1.0, r0);
    CHECK((y * Eigen::VectorXd::Zero(16)).norm() == 0.0);
    for (int b : m.boundary()) CHECK(y.row(b).cwiseAbs().maxCoeff() == 0.0);

    // A ≡ 1, B = 0: Σ y_i = ∫ r/r0 over the active triangles
    double moment = 0.0;
    for (std::size_t t = 0; t < m.num_triangles(); ++t) {
      if (!st.active[t]) continue;
      const auto& tri = m.triangle(static_cast<int>(t));
      const double rc = (m.node(tri[0]).r + m.node(tri[1]).r + m.node(tri[2]).r) / 3.0;
      moment += m.element(static_cast<int>(t)).area * rc / r0;
    }
    const Eigen::VectorXd ya = y * Eigen::VectorXd::Unit(16, 0);
    CHECK(ya.sum() == doctest::Approx(moment).epsilon(1e-12));
  }

  TEST_CASE("lambda on a small patch at r0") {
    const double r0 = 3.0, d = 0.01;
    const Mesh m = build_rect_mesh(r0 - d / 2, r0 + d / 2, -d / 2, d / 2, 4, 4);
    const PlasmaState st = flat_state(m, [](int) { return true; });
    const ReferenceProfiles one{[](double) { return 1.0; }, [](double) { return 0.0; }};
    const double lam = compute_lambda(m, st, one, 1e6, r0);
    CHECK(lam == doctest::Approx(1e6 / (d * d)).epsilon(1e-12));
    CHECK(compute_lambda(m, st, one, 2e6, r0) == doctest::Approx(2.0 * lam).epsilon(1e-14));

    const ReferenceProfiles zero{[](double) { return 0.0; }, [](double) { return 0.0; }};
    CHECK(kind_of([&] { compute_lambda(m, st, zero, 1e6, r0); }) == ErrorKind::DivergentLambda);
  }

  TEST_CASE("direct step: harmonic extension, exact boundary, superposition") {
    Twin t;
    const Eigen::VectorXd g = t.fem.dirichlet(t.g);
    const PlasmaState st = cold_plasma_state(t.mesh, 1.5);
    const SplineBasis basis;
    const Eigen::MatrixXd y = assemble_source_matrix(t.mesh, st, basis, 1e5, t.s.machine.r0);

    const NodalField psi0 = direct_step(t.fem.lu(), y, Eigen::VectorXd::Zero(16), g);
    const NodalField harmonic = t.fem.lu().solve(g);
    CHECK((psi0 - harmonic).norm() == 0.0);
    const auto& bnd = t.mesh.boundary();
    for (std::size_t k = 0; k < bnd.size(); ++k) CHECK(psi0[bnd[k]] == t.g[k]);

    const Eigen::VectorXd u1 = Eigen::VectorXd::LinSpaced(16, 0.1, 0.4);
    const Eigen::VectorXd u2 = Eigen::VectorXd::LinSpaced(16, -0.2, 0.3);
    const NodalField p1 = direct_step(t.fem.lu(), y, u1, g), p2 = direct_step(t.fem.lu(), y, u2, g),
                     p12 = direct_step(t.fem.lu(), y, u1 + u2, g);
    CHECK(((p12 - psi0) - (p1 - psi0) - (p2 - psi0)).cwiseAbs().maxCoeff() <= 1e-10);
  }

  TEST_CASE("fixed point on the desk twin") {
    Twin t;
    ForwardOptions opt;
    double worst_ip = 0.0;
    opt.on_iteration = [&](const IterationInfo& info) {
      const double ip = plasma_current(t.mesh, *info.state, t.ref, info.lambda, t.s.machine.r0);
      worst_ip = std::max(worst_ip, std::abs(ip - t.s.machine.Ip) / t.s.machine.Ip);
    };
    const Equilibrium eq = forward_fixed_point(t.fem, t.s.machine, t.ref, t.g, opt);
    CHECK(eq.converged);
    CHECK(eq.iterations <= 15);
    CHECK(eq.residuals.back() <= 1e-6);
    CHECK(worst_ip <= 1e-12);
    // strictly decreasing once the plasma has formed
    for (std::size_t k = 3; k < eq.residuals.size(); ++k) CHECK(eq.residuals[k] < eq.residuals[k - 1]);

    // fixed-point consistency: one more iteration barely moves ψ
    ForwardOptions more;
    more.warm_start = eq.psi;
    more.max_iter = 1;
    more.tol = 1.0;
    const Equilibrium again = forward_fixed_point(t.fem, t.s.machine, t.ref, t.g, more);
    CHECK(again.residuals.front() <= 1e-6);

    // warm start at a loose tolerance
    ForwardOptions warm;
    warm.warm_start = eq.psi;
    warm.tol = 1e-2;
    CHECK(forward_fixed_point(t.fem, t.s.machine, t.ref, t.g, warm).iterations <= 2);

    // the stored expansion honours the current constraint
    const double ip = plasma_current(t.mesh, eq.plasma, profiles_from_expansion(eq.basis, eq.profiles), eq.lambda,
                                     t.s.machine.r0);
    CHECK(ip == doctest::Approx(t.s.machine.Ip).epsilon(1e-12));
  }

  TEST_CASE("zero profiles diverge on the first iteration") {
    Twin t;
    const ReferenceProfiles zero{[](double) { return 0.0; }, [](double) { return 0.0; }};
    int calls = 0;
    ForwardOptions opt;
    opt.on_iteration = [&](const IterationInfo&) { ++calls; };
    CHECK(kind_of([&] { forward_fixed_point(t.fem, t.s.machine, zero, t.g, opt); }) == ErrorKind::DivergentLambda);
    CHECK(calls == 0);
  }

  TEST_CASE("iteration budget exhaustion reports the residual history") {
    Twin t;
    ForwardOptions opt;
    opt.max_iter = 3;
    try {
      forward_fixed_point(t.fem, t.s.machine, t.ref, t.g, opt);
      FAIL("expected a convergence error");
    } catch (const ConvergenceError& e) {
      CHECK(e.kind() == ErrorKind::Convergence);
      CHECK(e.residuals().size() == 3);
    }
  }

  TEST_CASE("equilibrium file round trip") {
    Twin t;
    const Equilibrium eq = forward_fixed_point(t.fem, t.s.machine, t.ref, t.g);
    const Equilibrium back = parse_equilibrium(format_equilibrium(eq), t.mesh);
    CHECK((back.psi - eq.psi).norm() == 0.0);
    CHECK(back.lambda == eq.lambda);
    CHECK((back.profiles.a - eq.profiles.a).norm() == 0.0);
    CHECK((back.profiles.b - eq.profiles.b).norm() == 0.0);
    CHECK(back.machine.Ip == eq.machine.Ip);
    CHECK(back.plasma.domain.psi_axis == eq.plasma.domain.psi_axis);
    CHECK(back.plasma.active == eq.plasma.active);
    CHECK(kind_of([&] { parse_equilibrium("gsrecon-equilibrium 1\nr0 x\n", t.mesh); }) == ErrorKind::Parse);
  }

  TEST_CASE("monotone tabulated profiles") {
    const TabulatedProfile p({0.0, 0.5, 1.0}, {1.0, 0.2, 0.0});
    CHECK(p(0.0) == 1.0);
    CHECK(p(0.5) == 0.2);
    CHECK(p(1.0) == 0.0);
    CHECK(p(1.3) == 0.0);
    double prev = p(0.0);
    for (int i = 1; i <= 100; ++i) {
      const double v = p(i / 100.0);
      CHECK(v <= prev);
      prev = v;
    }
  }
}
