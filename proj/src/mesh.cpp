#include "twophase/mesh.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <sstream>

namespace twophase {

namespace {

std::atomic<std::uint64_t> g_next_mesh_id{1};

double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

std::uint8_t side_of_point(const Rect& d, const Vec2& p, double tol) {
  std::uint8_t s = kInterior;
  if (std::abs(p.x() - d.x0) <= tol) s |= kLeft;
  if (std::abs(p.x() - d.x1) <= tol) s |= kRight;
  if (std::abs(p.y() - d.y0) <= tol) s |= kBottom;
  if (std::abs(p.y() - d.y1) <= tol) s |= kTop;
  return s;
}

// Distance from x to the closed triangle and the barycentric coordinates of the
// closest point.
std::pair<double, std::array<double, 3>> closest_on_triangle(const std::array<Vec2, 3>& p,
                                                             const std::array<double, 3>& bary,
                                                             const Vec2& x) {
  if (bary[0] >= 0 && bary[1] >= 0 && bary[2] >= 0) return {0.0, bary};
  double best = std::numeric_limits<double>::max();
  std::array<double, 3> best_bary{};
  for (int k = 0; k < 3; ++k) {
    const Vec2& a = p[k];
    const Vec2& b = p[(k + 1) % 3];
    const Vec2 e = b - a;
    double s = std::clamp((x - a).dot(e) / e.squaredNorm(), 0.0, 1.0);
    double d = (a + s * e - x).norm();
    if (d < best) {
      best = d;
      best_bary = {0.0, 0.0, 0.0};
      best_bary[k] = 1.0 - s;
      best_bary[(k + 1) % 3] = s;
    }
  }
  return {best, best_bary};
}

}  // namespace

std::uint64_t Mesh2D::key(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
         static_cast<std::uint32_t>(b);
}

Mesh2D::Mesh2D(std::vector<Vec2> vertices, std::vector<std::array<int, 3>> triangles, Rect domain)
    : vertices_(std::move(vertices)), triangles_(std::move(triangles)), domain_(domain),
      id_(g_next_mesh_id.fetch_add(1)) {
  const int nv = vertex_count();
  for (std::size_t t = 0; t < triangles_.size(); ++t) {
    auto& tri = triangles_[t];
    for (int v : tri) {
      if (v < 0 || v >= nv) throw MeshError("triangle references a missing vertex");
    }
    double a2 = cross(vertices_[tri[1]] - vertices_[tri[0]], vertices_[tri[2]] - vertices_[tri[0]]);
    if (a2 == 0.0) {
      std::ostringstream msg;
      msg << "degenerate triangle " << t;
      throw MeshError(msg.str());
    }
    if (a2 < 0) std::swap(tri[1], tri[2]);
  }

  edges_.reserve(triangles_.size() * 3 / 2 + vertices_.size());
  tri_edges_.resize(triangles_.size());
  edge_lookup_.reserve(triangles_.size() * 2);
  for (int t = 0; t < triangle_count(); ++t) {
    const auto& tri = triangles_[t];
    for (int k = 0; k < 3; ++k) {
      int a = tri[k], b = tri[(k + 1) % 3];
      auto [it, inserted] = edge_lookup_.try_emplace(key(a, b), edge_count());
      if (inserted) {
        Edge e;
        e.v = {std::min(a, b), std::max(a, b)};
        e.tri = {t, -1};
        edges_.push_back(e);
      } else {
        Edge& e = edges_[it->second];
        if (e.tri[1] != -1) throw MeshError("non-manifold edge: shared by more than two triangles");
        e.tri[1] = t;
      }
      tri_edges_[t][k] = it->second;
    }
  }

  const double tol = 1e-12 * domain_.diameter();
  node_sides_.assign(p2_node_count(), kInterior);
  for (int e = 0; e < edge_count(); ++e) {
    Edge& edge = edges_[e];
    if (edge.tri[1] != -1) continue;
    const std::uint8_t s = side_of_point(domain_, vertices_[edge.v[0]], tol) &
                           side_of_point(domain_, vertices_[edge.v[1]], tol);
    if (s == kInterior) throw MeshError("boundary edge does not lie on the domain rectangle");
    // A boundary edge lies on exactly one side; corners are resolved by the other endpoint.
    edge.side = (s & kLeft) ? kLeft : (s & kRight) ? kRight : (s & kBottom) ? kBottom : kTop;
    node_sides_[nv + e] = edge.side;
    node_sides_[edge.v[0]] |= side_of_point(domain_, vertices_[edge.v[0]], tol);
    node_sides_[edge.v[1]] |= side_of_point(domain_, vertices_[edge.v[1]], tol);
  }
}

std::array<int, 6> Mesh2D::element_nodes(int t) const {
  const auto& tri = triangles_[t];
  const auto& te = tri_edges_[t];
  const int nv = vertex_count();
  return {tri[0], tri[1], tri[2], nv + te[0], nv + te[1], nv + te[2]};
}

Vec2 Mesh2D::node_position(int node) const {
  if (node < vertex_count()) return vertices_[node];
  const Edge& e = edges_[node - vertex_count()];
  return 0.5 * (vertices_[e.v[0]] + vertices_[e.v[1]]);
}

std::optional<int> Mesh2D::find_edge(int a, int b) const {
  auto it = edge_lookup_.find(key(a, b));
  if (it == edge_lookup_.end()) return std::nullopt;
  return it->second;
}

double Mesh2D::signed_area(int t) const {
  const auto& tri = triangles_[t];
  return 0.5 * cross(vertices_[tri[1]] - vertices_[tri[0]], vertices_[tri[2]] - vertices_[tri[0]]);
}

std::array<Vec2, 3> Mesh2D::triangle_points(int t) const {
  const auto& tri = triangles_[t];
  return {vertices_[tri[0]], vertices_[tri[1]], vertices_[tri[2]]};
}

std::array<double, 3> Mesh2D::barycentric(int t, const Vec2& x) const {
  const auto p = triangle_points(t);
  const double a2 = cross(p[1] - p[0], p[2] - p[0]);
  const double l1 = cross(x - p[0], p[2] - p[0]) / a2;
  const double l2 = cross(p[1] - p[0], x - p[0]) / a2;
  return {1.0 - l1 - l2, l1, l2};
}

Mesh2D build_rectangle_mesh(const Rect& d, int nx, int ny) {
  if (nx < 1 || ny < 1) throw MeshError("rectangle mesh needs nx, ny >= 1");
  if (!(d.width() > 0) || !(d.height() > 0)) throw MeshError("rectangle dimensions must be positive");
  std::vector<Vec2> verts;
  verts.reserve(static_cast<std::size_t>(nx + 1) * (ny + 1));
  for (int j = 0; j <= ny; ++j) {
    // Exact boundary coordinates keep side classification free of round-off.
    const double y = (j == ny) ? d.y1 : d.y0 + d.height() * j / ny;
    for (int i = 0; i <= nx; ++i) {
      const double x = (i == nx) ? d.x1 : d.x0 + d.width() * i / nx;
      verts.emplace_back(x, y);
    }
  }
  auto vid = [nx](int i, int j) { return j * (nx + 1) + i; };
  std::vector<std::array<int, 3>> tris;
  tris.reserve(2 * static_cast<std::size_t>(nx) * ny);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const int a = vid(i, j), b = vid(i + 1, j), c = vid(i + 1, j + 1), e = vid(i, j + 1);
      if ((i + j) % 2 == 0) {
        tris.push_back({a, b, c});
        tris.push_back({a, c, e});
      } else {
        tris.push_back({a, b, e});
        tris.push_back({b, c, e});
      }
    }
  }
  return Mesh2D(std::move(verts), std::move(tris), d);
}

Mesh2D build_rectangle_mesh(double width, double height, int nx, int ny) {
  return build_rectangle_mesh(Rect{0.0, 0.0, width, height}, nx, ny);
}

SpatialIndex::SpatialIndex(const Mesh2D& mesh) : mesh_id_(mesh.id()) {
  const Rect& d = mesh.domain();
  const double target_cells = std::max(1.0, mesh.triangle_count() / 2.0);
  const double aspect = d.width() / d.height();
  nx_ = std::max(1, static_cast<int>(std::ceil(std::sqrt(target_cells * aspect))));
  ny_ = std::max(1, static_cast<int>(std::ceil(target_cells / nx_)));
  x0_ = d.x0;
  y0_ = d.y0;
  dx_ = d.width() / nx_;
  dy_ = d.height() / ny_;
  cells_.assign(static_cast<std::size_t>(nx_) * ny_, {});
  const double pad = kBaryTolerance * d.diameter() * 10;
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    const auto p = mesh.triangle_points(t);
    double xmin = std::min({p[0].x(), p[1].x(), p[2].x()}) - pad;
    double xmax = std::max({p[0].x(), p[1].x(), p[2].x()}) + pad;
    double ymin = std::min({p[0].y(), p[1].y(), p[2].y()}) - pad;
    double ymax = std::max({p[0].y(), p[1].y(), p[2].y()}) + pad;
    auto [i0, j0] = cell_of(Vec2(xmin, ymin));
    auto [i1, j1] = cell_of(Vec2(xmax, ymax));
    for (int j = j0; j <= j1; ++j)
      for (int i = i0; i <= i1; ++i) cells_[j * nx_ + i].push_back(t);
  }
}

std::pair<int, int> SpatialIndex::cell_of(const Vec2& x) const {
  int i = static_cast<int>(std::floor((x.x() - x0_) / dx_));
  int j = static_cast<int>(std::floor((x.y() - y0_) / dy_));
  return {std::clamp(i, 0, nx_ - 1), std::clamp(j, 0, ny_ - 1)};
}

const std::vector<int>& SpatialIndex::candidates(const Vec2& x) const {
  auto [i, j] = cell_of(x);
  return cells_[j * nx_ + i];
}

std::optional<PointLocation> locate_point(const Mesh2D& mesh, const SpatialIndex& index,
                                          const Vec2& x) {
  if (index.mesh_id() != mesh.id()) throw MeshError("spatial index is stale for this mesh");
  for (int t : index.candidates(x)) {
    auto b = mesh.barycentric(t, x);
    if (b[0] >= -kBaryTolerance && b[1] >= -kBaryTolerance && b[2] >= -kBaryTolerance) {
      return PointLocation{t, b};
    }
  }
  return std::nullopt;
}

PointLocation locate_nearest(const Mesh2D& mesh, const SpatialIndex& index, const Vec2& x) {
  if (auto hit = locate_point(mesh, index, x)) return *hit;
  double best = std::numeric_limits<double>::max();
  PointLocation loc;
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    auto [d, b] = closest_on_triangle(mesh.triangle_points(t), mesh.barycentric(t, x), x);
    if (d < best) {
      best = d;
      loc = PointLocation{t, b};
    }
  }
  return loc;
}

bool is_spd(const Mat2& m) {
  const double scale = m.cwiseAbs().maxCoeff();
  if (!(scale > 0) || !std::isfinite(scale)) return false;
  if (std::abs(m(0, 1) - m(1, 0)) > 1e-12 * scale) return false;
  const double mean = 0.5 * (m(0, 0) + m(1, 1));
  const double rad = std::hypot(0.5 * (m(0, 0) - m(1, 1)), m(0, 1));
  const double lmax = mean + rad, lmin = mean - rad;
  return lmax > 0 && lmin > 1e-12 * lmax;
}

double metric_length(const Mat2& m0, const Mat2& m1, const Vec2& e) {
  const double l0 = std::sqrt(e.dot(m0 * e));
  const double l1 = std::sqrt(e.dot(m1 * e));
  return std::sqrt(l0 * l1);
}

double metric_edge_length(const MetricField& metric, const Mesh2D& mesh, int edge) {
  const Edge& e = mesh.edges()[edge];
  const Mat2& m0 = metric.tensors.at(e.v[0]);
  const Mat2& m1 = metric.tensors.at(e.v[1]);
  if (!is_spd(m0) || !is_spd(m1)) throw MeshError("metric tensor is not SPD at an edge endpoint");
  return metric_length(m0, m1, mesh.vertices()[e.v[1]] - mesh.vertices()[e.v[0]]);
}

}  // namespace twophase
