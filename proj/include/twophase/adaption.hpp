/// \file adaption.hpp
/// \brief Anisotropic metric-based adaption for P2 fields: sensor, patch recovery of
///        derivatives up to fourth order, bound matrix, complexity-constrained metric,
///        local-modification remesher and field transfer.

#ifndef TWOPHASE_ADAPTION_HPP
#define TWOPHASE_ADAPTION_HPP

#include "twophase/mesh.hpp"
#include "twophase/p2.hpp"
#include "twophase/solver.hpp"

#include <array>
#include <memory>
#include <string>
#include <vector>

namespace twophase {

/// s = (H_eps(phi^n), H_eps(2 phi^n - phi^{n-1})).
struct SensorField {
  P2Field current;
  P2Field extrapolated;
};

SensorField build_sensor(const P2Field& phi_n, const P2Field& phi_nm1, double eps);

/// Derivatives of a recovered local polynomial at a vertex. Symmetric storage:
/// hess (xx, xy, yy), third (xxx, xxy, xyy, yyy), fourth (xxxx, ..., yyyy).
struct RecoveredDerivatives {
  Vec2 grad = Vec2::Zero();
  std::array<double, 3> hess{};
  std::array<double, 4> third{};
  std::array<double, 5> fourth{};
  int degree = 4;  ///< 3 when the patch only supported a cubic fit

  /// Hessian of the first derivative along x_j.
  Mat2 third_slice(int j) const;
};

/// Vertex to incident-triangle adjacency.
class VertexStars {
 public:
  explicit VertexStars(const Mesh2D& mesh);
  const std::vector<int>& of(int vertex) const { return stars_[vertex]; }

 private:
  std::vector<std::vector<int>> stars_;
};

inline constexpr int kMinPatchNodes = 30;

/// Least-squares quartic fit over the P2 nodes of a ring patch around the vertex.
RecoveredDerivatives spr_fit(const P2Field& field, const Mesh2D& mesh, int vertex);
/// Recovers every vertex for each field, sharing one factorization per patch.
/// Result is indexed [vertex][field].
std::vector<std::vector<RecoveredDerivatives>> recover_derivatives(
    const std::vector<const P2Field*>& fields, const Mesh2D& mesh);

/// Edge-length bounds applied to the metric.
struct MetricBounds {
  double h_min = 0.0;
  double h_max = 0.0;
  /// diameter * 1e-4 and diameter / 4.
  static MetricBounds for_domain(const Rect& domain);
};

Mat2 spd_log(const Mat2& m);
Mat2 spd_exp(const Mat2& m);
/// Symmetrizes and replaces the eigenvalues by max(|lambda|, floor).
Mat2 spd_abs_floor(const Mat2& a, double floor);

/// Log-Euclidean mean of the matrices after the absolute-value floor.
Mat2 bound_matrix_Q(const std::vector<Mat2>& slices, double floor);
/// Q at every vertex from recovered derivatives of all sensor components.
std::vector<Mat2> bound_matrix_field(const std::vector<std::vector<RecoveredDerivatives>>& derivs,
                                     double floor);

/// One third of the area of the incident triangles.
std::vector<double> lumped_vertex_weights(const Mesh2D& mesh);
/// Lumped integral of sqrt(det M): the number of vertices the metric asks for.
double metric_complexity(const MetricField& metric, const Mesh2D& mesh);

/// M = N (int det(Q)^{3/8})^{-1} det(Q)^{-1/8} Q. With bounds, eigenvalues are clamped to
/// [1/h_max^2, 1/h_min^2] afterwards.
MetricField metric_M(const std::vector<Mat2>& q, double n, const Mesh2D& mesh,
                     const MetricBounds* bounds = nullptr);

/// Element quality in a metric: 4 sqrt(3) area_M / sum(l_M^2) * exp(-|mean l_M - 1|).
double metric_quality(const std::array<Vec2, 3>& p, const std::array<Mat2, 3>& m);

struct RemeshConfig {
  int max_passes = 10;
};

struct RemeshStats {
  int passes = 0;
  int splits = 0;
  int collapses = 0;
  int swaps = 0;
  int moves = 0;
  int total() const { return splits + collapses + swaps + moves; }
};

/// Local-modification remeshing towards unit metric edge lengths.
Mesh2D adapt_mesh(const Mesh2D& mesh, const MetricField& metric, const RemeshConfig& config = {},
                  RemeshStats* stats = nullptr);

/// P2 interpolation of a field at the P2 nodes of another mesh covering the same domain.
/// Throws MeshError naming the node position if location fails.
P2Field transfer_field(const P2Field& field, const Mesh2D& old_mesh, const SpatialIndex& index,
                       const Mesh2D& new_mesh);
CoupledState transfer_fields(const CoupledState& state, std::shared_ptr<const Mesh2D> new_mesh);

struct AdaptionOptions {
  double complexity = 1000.0;  ///< target vertex count N
  MetricBounds bounds;         ///< zero entries take the domain defaults
  RemeshConfig remesh;
};

struct AdaptionResult {
  std::shared_ptr<const Mesh2D> mesh;
  MetricField metric;  ///< on the input mesh
  RemeshStats stats;
};

/// Sensor -> recovered derivatives -> Q -> M -> remeshed mesh.
AdaptionResult adapt_to_sensor(const Mesh2D& mesh, const SensorField& sensor,
                               const AdaptionOptions& options);

/// Legacy VTK dump of the metric: principal directions scaled by the target sizes.
void write_metric_vtk(const Mesh2D& mesh, const MetricField& metric, const std::string& path);

}  // namespace twophase

#endif  // TWOPHASE_ADAPTION_HPP
