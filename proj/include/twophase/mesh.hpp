/// \file mesh.hpp
/// \brief Unstructured linear triangle mesh with P2 (edge-midpoint) node numbering,
///        rectangle boundary classification, point location and metric lengths.

#ifndef TWOPHASE_MESH_HPP
#define TWOPHASE_MESH_HPP

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <unordered_map>
#include <vector>

namespace twophase {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

/// Axis-aligned rectangular computational domain.
struct Rect {
  double x0 = 0.0, y0 = 0.0, x1 = 1.0, y1 = 1.0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const { return width() * height(); }
  double diameter() const { return std::hypot(width(), height()); }
};

/// Boundary sides of the rectangle, usable as bit flags on nodes.
enum BoundarySide : std::uint8_t {
  kInterior = 0,
  kLeft = 1,
  kRight = 2,
  kBottom = 4,
  kTop = 8,
};

class MeshError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Edge {
  std::array<int, 2> v{};        ///< vertex indices, v[0] < v[1]
  std::array<int, 2> tri{-1, -1}; ///< adjacent triangles; tri[1] == -1 on the boundary
  std::uint8_t side = kInterior;  ///< boundary side for boundary edges
};

/// Triangle mesh with linear geometry. Quadratic fields live on the P2 nodes:
/// vertices first, then one node per edge midpoint.
///
/// Local P2 numbering inside triangle (a, b, c): 0..2 are the vertices,
/// 3 = mid(a,b), 4 = mid(b,c), 5 = mid(c,a).
class Mesh2D {
 public:
  Mesh2D() = default;
  /// Builds the edge table and boundary tags. Triangles are reoriented to be
  /// counter-clockwise; zero-area triangles are rejected.
  Mesh2D(std::vector<Vec2> vertices, std::vector<std::array<int, 3>> triangles, Rect domain);

  const std::vector<Vec2>& vertices() const { return vertices_; }
  const std::vector<std::array<int, 3>>& triangles() const { return triangles_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const Rect& domain() const { return domain_; }

  int vertex_count() const { return static_cast<int>(vertices_.size()); }
  int triangle_count() const { return static_cast<int>(triangles_.size()); }
  int edge_count() const { return static_cast<int>(edges_.size()); }
  int p2_node_count() const { return vertex_count() + edge_count(); }

  /// Edge ids of a triangle in local order (ab, bc, ca).
  const std::array<int, 3>& triangle_edges(int t) const { return tri_edges_[t]; }
  /// Six global P2 node ids of a triangle.
  std::array<int, 6> element_nodes(int t) const;
  Vec2 node_position(int node) const;
  /// Boundary side flags of a P2 node (bitwise or of BoundarySide).
  std::uint8_t node_sides(int node) const { return node_sides_[node]; }

  std::optional<int> find_edge(int a, int b) const;
  double signed_area(int t) const;
  std::array<Vec2, 3> triangle_points(int t) const;
  std::array<double, 3> barycentric(int t, const Vec2& x) const;

  /// Unique identity of this mesh instance, used to detect stale indices.
  std::uint64_t id() const { return id_; }

 private:
  static std::uint64_t key(int a, int b);

  std::vector<Vec2> vertices_;
  std::vector<std::array<int, 3>> triangles_;
  std::vector<Edge> edges_;
  std::vector<std::array<int, 3>> tri_edges_;
  std::vector<std::uint8_t> node_sides_;
  std::unordered_map<std::uint64_t, int> edge_lookup_;
  Rect domain_;
  std::uint64_t id_ = 0;
};

/// Structured nx-by-ny rectangle mesh, each cell split along one diagonal with the
/// diagonal direction alternating in a checkerboard pattern.
Mesh2D build_rectangle_mesh(double width, double height, int nx, int ny);
Mesh2D build_rectangle_mesh(const Rect& domain, int nx, int ny);

/// Uniform background grid mapping cells to overlapping triangles.
class SpatialIndex {
 public:
  explicit SpatialIndex(const Mesh2D& mesh);

  std::uint64_t mesh_id() const { return mesh_id_; }
  /// Candidate triangles whose bounding box overlaps the cell containing x.
  const std::vector<int>& candidates(const Vec2& x) const;
  int cell_count() const { return nx_ * ny_; }
  const std::vector<int>& cell(int i, int j) const { return cells_[j * nx_ + i]; }
  int nx() const { return nx_; }
  int ny() const { return ny_; }
  std::pair<int, int> cell_of(const Vec2& x) const;

 private:
  std::uint64_t mesh_id_ = 0;
  double x0_ = 0, y0_ = 0, dx_ = 1, dy_ = 1;
  int nx_ = 1, ny_ = 1;
  std::vector<std::vector<int>> cells_;
};

struct PointLocation {
  int triangle = -1;
  std::array<double, 3> bary{};
};

inline constexpr double kBaryTolerance = 1e-10;

/// Finds the lowest-id triangle containing x (barycentric coordinates >= -1e-10).
/// Throws MeshError if the index was built for a different mesh.
std::optional<PointLocation> locate_point(const Mesh2D& mesh, const SpatialIndex& index,
                                          const Vec2& x);

/// Nearest triangle by clamped barycentric projection; used as a round-off fallback.
PointLocation locate_nearest(const Mesh2D& mesh, const SpatialIndex& index, const Vec2& x);

/// Node-wise symmetric positive-definite tensors (one per mesh vertex).
struct MetricField {
  std::vector<Mat2> tensors;
};

/// True when m is symmetric positive-definite up to the relative tolerance 1e-12.
bool is_spd(const Mat2& m);

/// Metric length sqrt(l0 * l1) of the vector e, with l_i = sqrt(e^T M_i e).
double metric_length(const Mat2& m0, const Mat2& m1, const Vec2& e);

/// Distorted length of a mesh edge. Throws MeshError on a non-SPD endpoint tensor.
double metric_edge_length(const MetricField& metric, const Mesh2D& mesh, int edge);

}  // namespace twophase

#endif  // TWOPHASE_MESH_HPP
