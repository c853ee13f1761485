/// \file levelset.hpp
/// \brief Regularized Heaviside/delta, material blending, curvature, surface tension
///        force density, interface extraction and geometric reinitialization.

#ifndef TWOPHASE_LEVELSET_HPP
#define TWOPHASE_LEVELSET_HPP

#include "twophase/mesh.hpp"
#include "twophase/p2.hpp"

#include <functional>
#include <string>
#include <vector>

namespace twophase {

/// Two immiscible fluids. Fluid 1 occupies phi > 0, fluid 2 occupies phi < 0.
struct FluidPair {
  double rho1 = 1.0, rho2 = 1.0;  ///< densities
  double mu1 = 0.0, mu2 = 0.0;    ///< dynamic viscosities
  double sigma = 0.0;             ///< surface tension coefficient
  double g = 0.0;                 ///< gravity acceleration along -y
  double eps = 0.1;               ///< regularization half-thickness

  /// Throws std::invalid_argument when a field is out of range.
  void validate() const;
};

double heaviside_eps(double phi, double eps);
/// Analytic derivative of heaviside_eps.
double delta_eps(double phi, double eps);

struct Material {
  double rho = 0.0;
  double mu = 0.0;
};

Material blend_properties(double phi, const FluidPair& fluids);

inline constexpr double kGradientFloor = 1e-10;

struct Curvature {
  double kappa = 0.0;
  bool degenerate = false;  ///< |grad phi| below kGradientFloor; kappa reported as 0
};

/// kappa = (g.H.g - |g|^2 tr(H)) / |g|^3. A disc with phi < 0 inside gives -1/R.
Curvature curvature_from_jet(const Vec2& grad, const Mat2& hess);
Curvature curvature(const P2Field& phi, const Mesh2D& mesh, int tri, const Bary& ref_point);

/// Replaces the computed curvature by a prescribed one (exact-curvature runs).
using CurvatureOverride = std::function<double(const Vec2&)>;

/// How the gradient of the regularized Heaviside is discretized in the surface force.
enum class CsfForm {
  /// Gradient of the P2 interpolant of H_eps(phi_h): sum_a H_eps(phi_a) grad N_a.
  NodalHeaviside,
  /// Chain rule delta_eps(phi_h) grad phi_h, pointwise.
  ChainRule,
};

/// Surface tension force density sigma * kappa * grad H_eps(phi_h).
Vec2 csf_integrand(const P2Field& phi, const FluidPair& fluids, const Mesh2D& mesh, int tri,
                   const Bary& ref_point, CsfForm form = CsfForm::NodalHeaviside,
                   const CurvatureOverride& kappa_override = {});

/// Straight segment of the zero level; the phi > 0 side lies to the left of a -> b.
struct InterfaceSegment {
  Vec2 a;
  Vec2 b;
  double length() const { return (b - a).norm(); }
};

struct InterfaceMesh {
  std::vector<InterfaceSegment> segments;

  bool empty() const { return segments.empty(); }
  double length() const;
};

/// Splits every triangle twice (16 sub-triangles), samples phi_h at the sub-vertices
/// and runs marching triangles on each sub-triangle.
InterfaceMesh extract_interface(const P2Field& phi, const Mesh2D& mesh);

double point_segment_distance(const Vec2& x, const Vec2& a, const Vec2& b);

struct Reinitialization {
  P2Field phi;
  bool interface_empty = false;  ///< no zero level found: phi returned unchanged
};

/// New nodal values sign(phi) * min(distance to the extracted interface, 2 eps).
Reinitialization reinitialize(const P2Field& phi, const Mesh2D& mesh, double eps);
Reinitialization reinitialize(const P2Field& phi, const Mesh2D& mesh, double eps,
                              const InterfaceMesh& iface);

/// Writes one segment per row: x0,y0,x1,y1.
void write_interface_csv(const InterfaceMesh& iface, const std::string& path);

}  // namespace twophase

#endif  // TWOPHASE_LEVELSET_HPP
