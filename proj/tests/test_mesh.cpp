#include "twophase/mesh.hpp"

#include "doctest.h"

#include <random>

using namespace twophase;

namespace {

/// Brute-force containment: lowest triangle id whose barycentric coordinates are all >= -tol.
int brute_force_locate(const Mesh2D& mesh, const Vec2& x) {
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    const auto b = mesh.barycentric(t, x);
    if (b[0] >= -kBaryTolerance && b[1] >= -kBaryTolerance && b[2] >= -kBaryTolerance) return t;
  }
  return -1;
}

}  // namespace

TEST_CASE("rectangle mesh counts") {
  const Mesh2D single = build_rectangle_mesh(1, 2, 1, 1);
  CHECK(single.triangle_count() == 2);
  CHECK(single.vertex_count() == 4);
  CHECK(single.edge_count() == 5);
  CHECK(single.p2_node_count() == 9);

  CHECK(build_rectangle_mesh(1, 2, 40, 80).triangle_count() == 6400);

  const Mesh2D disc = build_rectangle_mesh(8, 8, 20, 20);
  CHECK(disc.triangle_count() == 800);
  CHECK(disc.vertex_count() == 441);
}

TEST_CASE("rectangle mesh invariants") {
  for (auto [nx, ny] : {std::pair{1, 1}, {3, 5}, {20, 20}, {7, 2}}) {
    const Mesh2D m = build_rectangle_mesh(1.5, 2.5, nx, ny);
    CHECK(m.vertex_count() - m.edge_count() + m.triangle_count() == 1);
    double area = 0.0;
    for (int t = 0; t < m.triangle_count(); ++t) {
      CHECK(m.signed_area(t) > 0);
      area += m.signed_area(t);
    }
    CHECK(area == doctest::Approx(1.5 * 2.5).epsilon(1e-12));
    int boundary = 0;
    for (const Edge& e : m.edges()) {
      CHECK(e.v[0] < e.v[1]);
      CHECK(e.tri[0] >= 0);
      if (e.tri[1] < 0) {
        ++boundary;
        CHECK(e.side != kInterior);
      } else {
        CHECK(e.side == kInterior);
      }
      CHECK(m.find_edge(e.v[1], e.v[0]) == m.find_edge(e.v[0], e.v[1]));
    }
    CHECK(boundary == 2 * (nx + ny));
  }
}

TEST_CASE("boundary tags follow the rectangle sides") {
  const Mesh2D m = build_rectangle_mesh(Rect{-1, 0, 1, 3}, 4, 6);
  for (const Edge& e : m.edges()) {
    if (e.tri[1] >= 0) continue;
    const Vec2 mid = 0.5 * (m.vertices()[e.v[0]] + m.vertices()[e.v[1]]);
    if (mid.x() == -1) CHECK(e.side == kLeft);
    if (mid.x() == 1) CHECK(e.side == kRight);
    if (mid.y() == 0) CHECK(e.side == kBottom);
    if (mid.y() == 3) CHECK(e.side == kTop);
  }
  // Corner vertex carries both sides; its P2 neighbours carry one.
  int corners = 0;
  for (int v = 0; v < m.vertex_count(); ++v)
    if (m.node_sides(v) == (kLeft | kTop) || m.node_sides(v) == (kRight | kBottom)) ++corners;
  CHECK(corners == 2);
}

TEST_CASE("element nodes follow the local P2 numbering") {
  const Mesh2D m = build_rectangle_mesh(1, 1, 2, 2);
  for (int t = 0; t < m.triangle_count(); ++t) {
    const auto nodes = m.element_nodes(t);
    const auto pts = m.triangle_points(t);
    CHECK((m.node_position(nodes[3]) - 0.5 * (pts[0] + pts[1])).norm() < 1e-15);
    CHECK((m.node_position(nodes[4]) - 0.5 * (pts[1] + pts[2])).norm() < 1e-15);
    CHECK((m.node_position(nodes[5]) - 0.5 * (pts[2] + pts[0])).norm() < 1e-15);
  }
}

TEST_CASE("invalid meshes are rejected") {
  CHECK_THROWS(build_rectangle_mesh(0, 1, 1, 1));
  CHECK_THROWS(build_rectangle_mesh(1, 1, 0, 1));
  std::vector<Vec2> pts{{0, 0}, {1, 0}, {2, 0}};
  CHECK_THROWS_AS(Mesh2D(pts, {{0, 1, 2}}, Rect{0, 0, 2, 1}), MeshError);
}

TEST_CASE("locate_point") {
  const Mesh2D m = build_rectangle_mesh(1, 2, 40, 80);
  const SpatialIndex index(m);

  SUBCASE("centroids") {
    for (int t = 0; t < m.triangle_count(); t += 97) {
      const auto p = m.triangle_points(t);
      const auto loc = locate_point(m, index, (p[0] + p[1] + p[2]) / 3.0);
      REQUIRE(loc);
      CHECK(loc->triangle == t);
      for (double b : loc->bary) CHECK(b == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    }
  }
  SUBCASE("shared vertex goes to the lowest incident triangle") {
    const int v = 41 * 10 + 7;
    int lowest = m.triangle_count();
    for (int t = 0; t < m.triangle_count(); ++t)
      for (int k : m.triangles()[t])
        if (k == v) lowest = std::min(lowest, t);
    const auto loc = locate_point(m, index, m.vertices()[v]);
    REQUIRE(loc);
    CHECK(loc->triangle == lowest);
    CHECK(*std::max_element(loc->bary.begin(), loc->bary.end()) == doctest::Approx(1.0));
  }
  SUBCASE("random points agree with brute force") {
    std::mt19937 rng(1234);
    std::uniform_real_distribution<double> ux(0.0, 1.0), uy(0.0, 2.0);
    for (int i = 0; i < 10000; ++i) {
      const Vec2 x(ux(rng), uy(rng));
      const auto loc = locate_point(m, index, x);
      REQUIRE(loc);
      CHECK(loc->triangle == brute_force_locate(m, x));
      const auto& b = loc->bary;
      CHECK(b[0] + b[1] + b[2] == doctest::Approx(1.0).epsilon(1e-12));
      const auto p = m.triangle_points(loc->triangle);
      const Vec2 back = b[0] * p[0] + b[1] * p[1] + b[2] * p[2];
      CHECK((back - x).norm() < 1e-10 * m.domain().diameter());
    }
  }
  SUBCASE("outside points") {
    CHECK_FALSE(locate_point(m, index, Vec2(-0.01, 0.5)));
    CHECK_FALSE(locate_point(m, index, Vec2(0.5, 2.001)));
    const PointLocation near = locate_nearest(m, index, Vec2(-1e-9, 0.5));
    CHECK(near.triangle >= 0);
  }
  SUBCASE("stale index") {
    const Mesh2D other = build_rectangle_mesh(1, 2, 40, 80);
    CHECK_THROWS_AS(locate_point(other, index, Vec2(0.5, 0.5)), MeshError);
  }
}

TEST_CASE("spatial index covers bounding boxes") {
  const Mesh2D m = build_rectangle_mesh(3, 1, 13, 7);
  const SpatialIndex index(m);
  for (int t = 0; t < m.triangle_count(); ++t) {
    const auto p = m.triangle_points(t);
    const Vec2 lo = p[0].cwiseMin(p[1]).cwiseMin(p[2]);
    const Vec2 hi = p[0].cwiseMax(p[1]).cwiseMax(p[2]);
    const auto [i0, j0] = index.cell_of(lo);
    const auto [i1, j1] = index.cell_of(hi);
    for (int j = j0; j <= j1; ++j)
      for (int i = i0; i <= i1; ++i) {
        const auto& c = index.cell(i, j);
        CHECK(std::find(c.begin(), c.end(), t) != c.end());
      }
  }
}

TEST_CASE("metric lengths") {
  const double h = 0.37;
  CHECK(metric_length(Mat2::Identity() / (h * h), Mat2::Identity() / (h * h), Vec2(h, 0)) ==
        doctest::Approx(1.0));
  const double a = 0.2, b = 3.0;
  Mat2 m = Mat2::Zero();
  m(0, 0) = 1 / (a * a);
  m(1, 1) = 1 / (b * b);
  CHECK(metric_length(m, m, Vec2(a, 0)) == doctest::Approx(1.0));

  // Dense quadrature of the distorted length with a linearly interpolated tensor.
  Mat2 m0, m1;
  m0 << 40.0, 12.0, 12.0, 9.0;
  m1 << 25.0, -4.0, -4.0, 16.0;
  const Vec2 e(0.3, -0.2);
  double dense = 0.0;
  const int n = 1000;
  for (int k = 0; k < n; ++k) {
    const double s = (k + 0.5) / n;
    const Mat2 ms = (1 - s) * m0 + s * m1;
    dense += std::sqrt(e.dot(ms * e)) / n;
  }
  CHECK(std::abs(metric_length(m0, m1, e) - dense) < 0.02 * dense);

  const Mesh2D mesh = build_rectangle_mesh(1, 1, 2, 2);
  MetricField field{std::vector<Mat2>(mesh.vertex_count(), Mat2::Identity() * 4.0)};
  for (int k = 0; k < mesh.edge_count(); ++k) {
    const auto& ed = mesh.edges()[k];
    const double len = (mesh.vertices()[ed.v[1]] - mesh.vertices()[ed.v[0]]).norm();
    CHECK(metric_edge_length(field, mesh, k) == doctest::Approx(2 * len));
  }
  field.tensors[0] << 1.0, 2.0, 2.0, 1.0;  // indefinite
  int bad = -1;
  for (int k = 0; k < mesh.edge_count(); ++k)
    if (mesh.edges()[k].v[0] == 0) bad = k;
  CHECK_THROWS_AS(metric_edge_length(field, mesh, bad), MeshError);
  CHECK(is_spd(Mat2::Identity()));
  CHECK_FALSE(is_spd(Mat2::Zero()));
}
