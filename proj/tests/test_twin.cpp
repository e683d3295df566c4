#include <doctest.h>

#include <cmath>

#include "gsrecon/diagnostics.hpp"
#include "gsrecon/inverse.hpp"
#include "gsrecon/twin.hpp"
#include "test_util.hpp"
#include "twin_fixture.hpp"

using namespace gsr;
using gsr::test::kind_of;
using gsr::test::TwinFixture;

namespace {

std::vector<LCurvePoint> softplus_curve(const std::vector<double>& eps) {
  std::vector<LCurvePoint> pts;
  for (double e : eps) {
    const double t = std::log(e);
    pts.push_back({e, std::log1p(std::exp(t)), std::log1p(std::exp(-t))});
  }
  return pts;
}

bool same_stats(const ProfileStats& a, const ProfileStats& b) {
  auto eq = [](const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i)
      if (!(x[i] == y[i] || (std::isnan(x[i]) && std::isnan(y[i])))) return false;
    return true;
  };
  return eq(a.mean, b.mean) && eq(a.median, b.median) && eq(a.std, b.std) && a.count == b.count;
}

}  // namespace

TEST_SUITE("twin_lab") {
  TEST_CASE("synthesized measurements") {
    const auto& t = TwinFixture::get();
    const auto& bnd = t.mesh.boundary();
    REQUIRE(t.clean.g_D.size() == bnd.size());
    for (std::size_t k = 0; k < bnd.size(); ++k) CHECK(t.clean.g_D[k].value == t.ref.eq.psi[bnd[k]]);
    CHECK(t.clean.chords.size() == 8);
    for (const auto& c : t.clean.chords) {
      CHECK(c.gamma > 0.0);
      CHECK(std::isfinite(c.alpha));
    }

    const auto chords = twin_chords(t.s);
    const auto pts = boundary_points(t.mesh);
    const MeasurementSet none =
        synthesize_measurements(t.mesh, t.ref.eq, chords, pts, Eigen::VectorXd::Zero(t.ref.ne.size()));
    for (const auto& c : none.chords) {
      CHECK(c.gamma == 0.0);
      CHECK(c.alpha == 0.0);
    }
  }

  TEST_CASE("closure on noise-free data") {
    const auto& t = TwinFixture::get();
    RegularizationConfig reg;
    reg.eps = 1e-5;
    ReconstructOptions opt;
    opt.r0 = t.s.machine.r0;
    const auto res = reconstruct(t.fem, t.clean, reg, opt);
    REQUIRE(res.converged);
    const double psi_err = (res.equilibrium.psi - t.ref.eq.psi).norm() / t.ref.eq.psi.norm();
    MESSAGE("psi closure error " << psi_err);
    CHECK(psi_err <= 1e-3);
    const auto tab = compute_profile_table(res.equilibrium, t.mesh);
    CHECK(mean_relative_error(tab.j_mean, t.ref.table.j_mean) <= 0.02);
  }

  TEST_CASE("perturbation") {
    const auto& t = TwinFixture::get();
    const MeasurementSet same = perturb(t.clean, 0.0, 7);
    CHECK(format_measurements(same) == format_measurements(t.clean));
    const MeasurementSet a = perturb(t.clean, 0.01, 7), b = perturb(t.clean, 0.01, 7), c = perturb(t.clean, 0.01, 8);
    CHECK(format_measurements(a) == format_measurements(b));
    CHECK(format_measurements(a) != format_measurements(c));
    CHECK(a.Ip == t.clean.Ip);
    CHECK(a.B0 == t.clean.B0);
    CHECK(a.g_D[3].p.r == t.clean.g_D[3].p.r);
    CHECK(kind_of([&] { perturb(t.clean, -0.1, 1); }) == ErrorKind::Argument);

    // 1e5 draws at m = 1
    MeasurementSet one;
    one.g_N.assign(100000, PointValue{{1.0, 0.0}, 1.0});
    const MeasurementSet noisy = perturb(one, 0.01, 2024);
    double s = 0.0, ss = 0.0;
    for (const auto& v : noisy.g_N) s += v.value - 1.0;
    const double mean = s / 1e5;
    for (const auto& v : noisy.g_N) ss += (v.value - 1.0 - mean) * (v.value - 1.0 - mean);
    const double sd = std::sqrt(ss / (1e5 - 1));
    CHECK(std::abs(sd - 0.01) <= 0.01 * 0.01);
    CHECK(std::abs(mean) <= 4.0 * 0.01 / std::sqrt(1e5));
  }

  TEST_CASE("normal variates are reproducible") {
    NormalRng a(42), b(42);
    for (int i = 0; i < 1000; ++i) CHECK(a() == b());
    CHECK(mix_seed(1, 0) != mix_seed(1, 1));
    CHECK(mix_seed(1, 0) != mix_seed(2, 0));
    CHECK(mix_seed(5, 3) == mix_seed(5, 3));
  }

  TEST_CASE("pointwise statistics") {
    const std::vector<std::vector<std::optional<double>>> s{{1.0, 2.0, std::nullopt}, {3.0, 2.0, std::nullopt},
                                                             {5.0, std::nullopt, std::nullopt}};
    const ProfileStats st = pointwise_stats(s);
    CHECK(st.mean[0] == 3.0);
    CHECK(st.median[0] == 3.0);
    CHECK(st.std[0] == 2.0);
    CHECK(st.count[1] == 2);
    CHECK(st.median[1] == 2.0);
    CHECK(st.std[1] == 0.0);
    CHECK(st.count[2] == 0);
    CHECK(std::isnan(st.mean[2]));
  }

  TEST_CASE("replicate statistics are deterministic and thread-count independent") {
    const auto& t = TwinFixture::get();
    StatsConfig cfg;
    cfg.replicates = 3;
    cfg.eps = {1e-1};
    cfg.max_iter = 100;
    cfg.seed = 31;
    cfg.jobs = 1;
    const auto a = replicate_stats(t.fem, t.clean, t.s.machine.r0, cfg);
    cfg.jobs = 2;
    const auto b = replicate_stats(t.fem, t.clean, t.s.machine.r0, cfg);
    REQUIRE(a.size() == 1);
    CHECK(a[0].requested == 3);
    CHECK(a[0].converged + a[0].failed == 3);
    CHECK(a[0].converged == b[0].converged);
    CHECK(same_stats(a[0].j_mean, b[0].j_mean));
    CHECK(same_stats(a[0].lambda_a, b[0].lambda_a));
    CHECK(format_stats_csv(a[0]) == format_stats_csv(b[0]));
    CHECK(format_stats_csv(a[0]).rfind("psibar,mean_lambdaA,median_lambdaA,std_lambdaA,", 0) == 0);

    // a budget of one iteration converges nowhere
    cfg.max_iter = 1;
    CHECK(kind_of([&] { replicate_stats(t.fem, t.clean, t.s.machine.r0, cfg); }) == ErrorKind::EmptyStats);
  }

  TEST_CASE("L-curve corner and flatness") {
    const auto grid = log_grid(1e-4, 1e4, 33);
    CHECK(grid.front() == 1e-4);
    CHECK(grid.back() == doctest::Approx(1e4));
    const LCurve c = l_curve(softplus_curve(grid));
    CHECK_FALSE(c.flat);
    CHECK(std::abs(std::log10(c.corner_eps)) <= 0.25 + 1e-12);  // one grid step

    // x nearly constant: an almost vertical line
    std::vector<LCurvePoint> vertical;
    for (double e : grid) vertical.push_back({e, 1e-3 * std::log(e), -std::log(e)});
    CHECK(l_curve(vertical).flat);

    CHECK(kind_of([] { l_curve({{1.0, 0.0, 0.0}, {2.0, 1.0, 1.0}}); }) == ErrorKind::Argument);
    CHECK(kind_of([] { log_grid(0.0, 1.0, 5); }) == ErrorKind::Argument);
    const std::string csv = format_lcurve_csv(c);
    CHECK(csv.rfind("eps,x,y,curvature,corner\n", 0) == 0);
  }

  TEST_CASE("density L-curve arms are monotone") {
    const auto& t = TwinFixture::get();
    const MeasurementSet noisy = perturb(t.clean, 0.01, mix_seed(777, 0));
    std::vector<Chord> chords;
    Eigen::VectorXd gamma(static_cast<Eigen::Index>(noisy.chords.size()));
    for (std::size_t k = 0; k < noisy.chords.size(); ++k) {
      chords.push_back(make_chord(t.mesh, noisy.chords[k].start, noisy.chords[k].end));
      gamma[static_cast<Eigen::Index>(k)] = noisy.chords[k].gamma;
    }
    const WeightConfig w = default_weights(noisy.Ip, 1.0, 1, chords.size());
    const auto b = build_interferometry_matrix(t.mesh, chords, t.ref.eq.plasma, t.ref.eq.basis);
    const LCurve c = ne_l_curve(b, gamma, Eigen::VectorXd::Constant(gamma.size(), w.w_inter()),
                                regularization_matrix(t.ref.eq.basis), t.ref.ne_scale, log_grid(1e-5, 1e2, 22));
    for (std::size_t i = 1; i < c.points.size(); ++i) {
      CHECK(c.points[i].x >= c.points[i - 1].x - 1e-9);
      CHECK(c.points[i].y <= c.points[i - 1].y + 1e-9);
    }
  }
}
