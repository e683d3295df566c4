#include <doctest.h>

#include <filesystem>
#include <random>

#include "gsrecon/error.hpp"
#include "gsrecon/mesh.hpp"

using namespace gsr;

TEST_SUITE("mesh") {
  TEST_CASE("rect mesh combinatorics") {
    const Mesh m = build_rect_mesh(1, 2, -1, 1, 2, 2);
    CHECK(m.num_nodes() == 9);
    CHECK(m.num_triangles() == 8);
    CHECK(m.boundary().size() == 8);
    for (auto [nr, nz] : {std::pair{3, 5}, std::pair{7, 2}, std::pair{20, 20}})
      CHECK(build_rect_mesh(1, 2, -1, 1, nr, nz).boundary().size() == static_cast<std::size_t>(2 * (nr + nz)));
  }

  TEST_CASE("rect mesh argument errors") {
    auto kind = [](auto&& f) {
      try {
        f();
      } catch (const Error& e) {
        return e.kind();
      }
      return ErrorKind::Io;
    };
    CHECK(kind([] { build_rect_mesh(0, 1, 0, 1, 2, 2); }) == ErrorKind::Domain);
    CHECK(kind([] { build_rect_mesh(1, 2, 0, 1, 0, 2); }) == ErrorKind::Argument);
  }

  TEST_CASE("area and boundary length of a rectangle") {
    const Mesh m = build_rect_mesh(1.5, 2.7, -0.4, 0.9, 13, 11);
    CHECK(m.total_area() == doctest::Approx(1.2 * 1.3).epsilon(1e-12));
    CHECK(m.boundary_length() == doctest::Approx(2 * (1.2 + 1.3)).epsilon(1e-12));
    for (std::size_t t = 0; t < m.num_triangles(); ++t) CHECK(m.element(static_cast<int>(t)).area > 0.0);
  }

  TEST_CASE("boundary is counter-clockwise and the limiter lies inside") {
    const Mesh m = build_rect_mesh(1, 2, -1, 1, 6, 6);
    double s = 0.0;
    const auto& b = m.boundary();
    for (std::size_t i = 0; i < b.size(); ++i) s += cross(m.node(b[i]), m.node(b[(i + 1) % b.size()]));
    CHECK(s > 0.0);
    for (const Point& p : m.limiter()) {
      CHECK(p.r > 1.0);
      CHECK(p.r < 2.0);
      CHECK(p.z > -1.0);
      CHECK(p.z < 1.0);
    }
  }

  TEST_CASE("save and load round-trip") {
    const Mesh m = build_rect_mesh(1, 2, -1, 1, 2, 2);
    const auto path = std::filesystem::temp_directory_path() / "gsrecon_mesh_roundtrip.txt";
    save_mesh(m, path);
    const Mesh l = load_mesh(path);
    std::filesystem::remove(path);
    REQUIRE(l.num_nodes() == m.num_nodes());
    for (std::size_t i = 0; i < m.num_nodes(); ++i) CHECK(l.nodes()[i] == m.nodes()[i]);
    CHECK(l.triangles() == m.triangles());
    CHECK(l.boundary() == m.boundary());
    CHECK(l.limiter() == m.limiter());
  }

  TEST_CASE("triangle with an out-of-range node is a validation error") {
    std::string text = format_mesh(build_rect_mesh(1, 2, -1, 1, 1, 1));
    // first triangle line follows the 4 node lines
    std::vector<std::string> lines;
    std::size_t a = 0;
    for (std::size_t b; (b = text.find('\n', a)) != std::string::npos; a = b + 1) lines.push_back(text.substr(a, b - a));
    lines[5] = "0 1 9";
    std::string bad;
    for (const auto& l : lines) bad += l + "\n";
    try {
      parse_mesh(bad);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Validation);
    }
  }

  TEST_CASE("malformed mesh file reports the line") {
    try {
      parse_mesh("nodes 3 triangles 1 boundary 3 limiter 1\n1 0\n2 x\n");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Parse);
      CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
  }

  TEST_CASE("clockwise triangle is reoriented with a warning") {
    const Mesh m({{1, 0}, {2, 0}, {1, 1}}, {Triangle{0, 2, 1}}, {0, 1, 2}, {{1.2, 0.2}});
    CHECK(m.warnings().size() >= 1);
    CHECK(m.element(0).area == doctest::Approx(0.5));
  }

  TEST_CASE("interpolation") {
    const Mesh m = build_rect_mesh(1, 2, -1, 1, 5, 7);
    NodalField parity(static_cast<Eigen::Index>(m.num_nodes()));
    NodalField affine(parity.size());
    for (int i = 0; i < parity.size(); ++i) {
      parity[i] = i % 2;
      affine[i] = 2 * m.node(i).r + m.node(i).z;
    }
    for (int i = 0; i < parity.size(); ++i) CHECK(*interpolate(m, parity, m.node(i)) == parity[i]);

    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> ur(1.0, 2.0), uz(-1.0, 1.0);
    PointLocator loc(m);
    for (int k = 0; k < 200; ++k) {
      const Point p{ur(rng), uz(rng)};
      const auto v = interpolate(m, affine, p, loc);
      REQUIRE(v);
      CHECK(*v == doctest::Approx(2 * p.r + p.z).epsilon(1e-12));
    }
    CHECK_FALSE(interpolate(m, affine, Point{2.5, 0.0}));

    const auto& tri = m.triangle(3);
    NodalField hat = NodalField::Zero(parity.size());
    hat[tri[0]] = 1.0;
    CHECK(*interpolate(m, hat, m.element(3).centroid) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  }
}
