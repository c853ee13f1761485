/// \file p2.hpp
/// \brief Quadratic Lagrange basis on triangles, quadrature, and P2 field evaluation.

#ifndef TWOPHASE_P2_HPP
#define TWOPHASE_P2_HPP

#include "twophase/mesh.hpp"

#include <array>
#include <functional>
#include <vector>

namespace twophase {

/// Barycentric coordinates (l0, l1, l2). Reference coordinates are xi = l1, eta = l2.
using Bary = std::array<double, 3>;

/// Values, reference gradients and reference Hessians of the six P2 basis functions.
struct ShapeEval {
  std::array<double, 6> value{};
  std::array<Vec2, 6> grad;
  std::array<Mat2, 6> hess;
};

ShapeEval shape_eval(const Bary& ref_point);

/// Barycentric locations of the six P2 nodes of the reference triangle.
const std::array<Bary, 6>& p2_node_bary();

/// Symmetric triangle quadrature; weights sum to one (multiply by the element area).
struct QuadratureRule {
  std::vector<Bary> points;
  std::vector<double> weights;
  int degree = 0;
};

/// 12-point rule exact for polynomials of degree 6.
const QuadratureRule& default_quadrature();

/// Affine reference-to-physical map x = origin + jac * (xi, eta).
struct ElementMap {
  Vec2 origin;
  Mat2 jac;
  Mat2 jac_inv;
  double det = 0.0;  ///< twice the triangle area

  static ElementMap of(const Mesh2D& mesh, int tri);
  Vec2 to_physical(const Bary& b) const { return origin + jac * Vec2(b[1], b[2]); }
  Vec2 physical_gradient(const Vec2& ref_grad) const { return jac_inv.transpose() * ref_grad; }
  Mat2 physical_hessian(const Mat2& ref_hess) const {
    return jac_inv.transpose() * ref_hess * jac_inv;
  }
};

/// Scalar piecewise-quadratic field: one value per P2 node of a mesh.
struct P2Field {
  std::vector<double> values;

  P2Field() = default;
  explicit P2Field(std::vector<double> v) : values(std::move(v)) {}
  explicit P2Field(const Mesh2D& mesh, double fill = 0.0)
      : values(static_cast<std::size_t>(mesh.p2_node_count()), fill) {}

  std::size_t size() const { return values.size(); }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
  bool matches(const Mesh2D& mesh) const {
    return values.size() == static_cast<std::size_t>(mesh.p2_node_count());
  }
};

/// Nodal interpolant of an analytic function.
P2Field sample_p2(const Mesh2D& mesh, const std::function<double(const Vec2&)>& fn);

/// Value with its physical gradient and Hessian at a point.
struct FieldJet {
  double value = 0.0;
  Vec2 grad = Vec2::Zero();
  Mat2 hess = Mat2::Zero();
};

FieldJet interpolate(const P2Field& field, const Mesh2D& mesh, int tri, const Bary& ref_point);

/// Value only, at a physical point already located in triangle tri.
double evaluate(const P2Field& field, const Mesh2D& mesh, int tri, const Bary& ref_point);

}  // namespace twophase

#endif  // TWOPHASE_P2_HPP
