#include <doctest.h>

#include <cmath>
#include <functional>

#include "gsrecon/error.hpp"
#include "gsrecon/plasma_domain.hpp"
#include "test_util.hpp"

using namespace gsr;
using gsr::test::kind_of;
using gsr::test::sample;

namespace {

// two peaks on the z axis; the upper one is taller, the saddle sits in between
double two_peaks(Point p) {
  const double lo = std::exp(-((p.r - 2.0) * (p.r - 2.0) + (p.z + 0.45) * (p.z + 0.45)) / 0.12);
  const double hi = 1.3 * std::exp(-((p.r - 2.0) * (p.r - 2.0) + (p.z - 0.45) * (p.z - 0.45)) / 0.12);
  return lo + hi;
}

}  // namespace

TEST_SUITE("plasma_geometry") {
  TEST_CASE("axis of an off-node paraboloid") {
    for (int n : {20, 40}) {
      const Mesh m = build_rect_mesh(1.0, 2.0, -0.5, 0.5, n, n);
      const auto ax = find_axis(m, sample(m, [](Point p) {
        return -((p.r - 1.53) * (p.r - 1.53) + (p.z - 0.02) * (p.z - 0.02));
      }));
      const double h = 1.0 / n;
      // the fit is exact for quadratics, so O(h²) is comfortably met
      CHECK(std::hypot(ax.location.r - 1.53, ax.location.z - 0.02) <= h * h);
      CHECK(std::abs(ax.psi) <= h * h);
    }
  }

  TEST_CASE("no interior maximum means no plasma") {
    const Mesh m = build_rect_mesh(1.0, 2.0, -0.5, 0.5, 10, 10);
    CHECK(kind_of([&] { find_axis(m, sample(m, [](Point) { return 2.0; })); }) == ErrorKind::NoPlasma);
    CHECK(kind_of([&] { find_axis(m, sample(m, [](Point p) { return 3.0 * p.z; })); }) == ErrorKind::NoPlasma);
  }

  TEST_CASE("saddle detection") {
    const Mesh m = build_rect_mesh(1.0, 2.0, -0.5, 0.5, 30, 30);
    const auto x = find_xpoint(m, sample(m, [](Point p) {
      return (p.r - 1.51) * (p.r - 1.51) - (p.z + 0.03) * (p.z + 0.03);
    }));
    REQUIRE(x.has_value());
    const double h = 1.0 / 30;
    CHECK(std::hypot(x->location.r - 1.51, x->location.z + 0.03) <= h * h);
    CHECK_FALSE(find_xpoint(m, sample(m, [](Point p) { return -((p.r - 1.5) * (p.r - 1.5) + p.z * p.z); })));
  }

  TEST_CASE("limiter and X-point boundary flux") {
    const Mesh m = build_rect_mesh(1.0, 3.0, -1.5, 1.5, 40, 60);
    // pure maximum: limiter mode and ψ_b equals the limiter maximum
    const NodalField bowl = sample(m, [](Point p) { return -((p.r - 2.1) * (p.r - 2.1) + p.z * p.z); });
    const auto ax = find_axis(m, bowl);
    const auto bf = boundary_flux(m, bowl, ax.psi, find_xpoint(m, bowl));
    CHECK(bf.mode == BoundaryMode::Limiter);
    CHECK(bf.psi_boundary == limiter_max(m, bowl));

    // two peaks: the saddle flux exceeds anything on the limiter
    const NodalField pk = sample(m, two_peaks);
    const auto st = locate_plasma(m, pk);
    CHECK(st.domain.mode == BoundaryMode::XPoint);
    REQUIRE(st.domain.xpoint.has_value());
    CHECK(std::abs(st.domain.xpoint->z) < 0.1);
    CHECK(st.domain.axis.z == doctest::Approx(0.45).epsilon(0.05));
    CHECK(st.domain.psi_boundary > limiter_max(m, pk));
    CHECK(st.domain.psi_boundary < st.domain.psi_axis);
    // private region below the X-point is excluded
    for (std::size_t t = 0; t < m.num_triangles(); ++t) {
      if (!st.active[t]) continue;
      const auto& tri = m.triangle(static_cast<int>(t));
      CHECK(m.node(tri[0]).z > -0.1);
    }

    CHECK(kind_of([&] { boundary_flux(m, sample(m, [](Point) { return 1.0; }), 1.0, std::nullopt); }) ==
          ErrorKind::DegeneratePlasma);
  }

  TEST_CASE("normalized flux") {
    NodalField psi(3);
    psi << 5.0, 2.0, 3.5;
    const NodalField pb = normalized_flux(psi, 5.0, 2.0);
    CHECK(pb[0] == 0.0);
    CHECK(pb[1] == 1.0);
    CHECK(pb[2] == doctest::Approx(0.5));
  }

  TEST_CASE("normalized flux is invariant under affine rescaling") {
    const Mesh m = build_rect_mesh(1.0, 3.0, -1.0, 1.0, 24, 24);
    const NodalField psi = sample(m, [](Point p) { return -((p.r - 2.05) * (p.r - 2.05) + 0.7 * p.z * p.z); });
    const auto a = locate_plasma(m, psi);
    const auto b = locate_plasma(m, (3.0 * psi.array() + 7.0).matrix());
    CHECK((a.psibar - b.psibar).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(a.active == b.active);
  }

  TEST_CASE("plasma shrinks as the boundary flux approaches the axis") {
    const Mesh m = build_rect_mesh(1.0, 3.0, -1.0, 1.0, 16, 16);
    const NodalField psi = sample(m, [](Point p) { return -((p.r - 2.0) * (p.r - 2.0) + p.z * p.z); });
    std::vector<char> prev(m.num_nodes(), 1);
    for (double pb : {-0.9, -0.5, -0.2, -0.05}) {
      const NodalField x = normalized_flux(psi, 0.0, pb);
      for (std::size_t i = 0; i < m.num_nodes(); ++i) {
        const char in = x[static_cast<Eigen::Index>(i)] <= 1.0;
        CHECK((!in || prev[i]));
        prev[i] = in;
      }
    }
  }

  TEST_CASE("plasma mask and fractional coverage") {
    const Mesh m = build_rect_mesh(1.0, 3.0, -1.0, 1.0, 20, 20);
    const NodalField psi = sample(m, [](Point p) { return -((p.r - 2.0) * (p.r - 2.0) + p.z * p.z); });
    const auto st = locate_plasma(m, psi);
    PointLocator loc(m);
    CHECK(plasma_mask(m, st, st.domain.axis, loc) == 1.0);
    for (std::size_t i = 0; i < m.num_nodes(); ++i)
      if (st.psibar[static_cast<Eigen::Index>(i)] > 1.0 + 1e-12)
        CHECK(plasma_mask(m, st, m.node(static_cast<int>(i)), loc) == 0.0);

    // linear ψ̄ across a single triangle straddling 1
    const Mesh one({{1, 0}, {2, 0}, {1, 1}}, {Triangle{0, 1, 2}}, {0, 1, 2}, {{1.1, 0.1}});
    PlasmaState lin;
    lin.psibar = NodalField(3);
    lin.psibar << 0.5, 1.5, 0.5;  // edge midpoints: 1.0, 1.0, 0.5
    lin.active = {1};
    CHECK(triangle_plasma_coverage(one, lin, 0) == doctest::Approx(1.0));
    lin.psibar << 0.6, 1.5, 1.5;  // midpoints 1.5, 1.05, 1.05
    CHECK(triangle_plasma_coverage(one, lin, 0) == 0.0);
    lin.psibar << 0.2, 1.6, 0.8;  // midpoints 1.2, 0.5, 0.9
    const double cov = triangle_plasma_coverage(one, lin, 0);
    CHECK(cov > 0.0);
    CHECK(cov < 1.0);
    CHECK(cov == doctest::Approx(2.0 / 3.0));
  }
}
