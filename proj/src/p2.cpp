#include "twophase/p2.hpp"

#include <stdexcept>

namespace twophase {

namespace {

const std::array<Vec2, 3> kBaryGrad = {Vec2(-1.0, -1.0), Vec2(1.0, 0.0), Vec2(0.0, 1.0)};
constexpr std::array<std::array<int, 2>, 3> kEdgeVerts = {{{0, 1}, {1, 2}, {2, 0}}};

QuadratureRule make_degree6_rule() {
  // Dunavant 12-point rule.
  QuadratureRule q;
  q.degree = 6;
  auto add_orbit3 = [&](double a, double w) {
    const double b = 1.0 - 2.0 * a;
    q.points.push_back({b, a, a});
    q.points.push_back({a, b, a});
    q.points.push_back({a, a, b});
    for (int k = 0; k < 3; ++k) q.weights.push_back(w);
  };
  add_orbit3(0.063089014491502228340331602870819, 0.050844906370206816920936809106869);
  add_orbit3(0.24928674517091042129163855310702, 0.11678627572637936602528961138558);
  const double a = 0.053145049844816947353249671631398;
  const double b = 0.31035245103378440541660773395655;
  const double c = 1.0 - a - b;
  const double w = 0.082851075618373575193553456420442;
  for (const Bary& p : {Bary{a, b, c}, Bary{b, c, a}, Bary{c, a, b}, Bary{a, c, b}, Bary{c, b, a},
                        Bary{b, a, c}}) {
    q.points.push_back(p);
    q.weights.push_back(w);
  }
  return q;
}

}  // namespace

ShapeEval shape_eval(const Bary& l) {
  ShapeEval s;
  for (int i = 0; i < 3; ++i) {
    s.value[i] = l[i] * (2.0 * l[i] - 1.0);
    s.grad[i] = (4.0 * l[i] - 1.0) * kBaryGrad[i];
    s.hess[i] = 4.0 * kBaryGrad[i] * kBaryGrad[i].transpose();
  }
  for (int k = 0; k < 3; ++k) {
    const int i = kEdgeVerts[k][0], j = kEdgeVerts[k][1];
    s.value[3 + k] = 4.0 * l[i] * l[j];
    s.grad[3 + k] = 4.0 * (l[j] * kBaryGrad[i] + l[i] * kBaryGrad[j]);
    s.hess[3 + k] = 4.0 * (kBaryGrad[i] * kBaryGrad[j].transpose() +
                           kBaryGrad[j] * kBaryGrad[i].transpose());
  }
  return s;
}

const std::array<Bary, 6>& p2_node_bary() {
  static const std::array<Bary, 6> nodes = {Bary{1, 0, 0},     Bary{0, 1, 0},     Bary{0, 0, 1},
                                            Bary{0.5, 0.5, 0}, Bary{0, 0.5, 0.5}, Bary{0.5, 0, 0.5}};
  return nodes;
}

const QuadratureRule& default_quadrature() {
  static const QuadratureRule rule = make_degree6_rule();
  return rule;
}

ElementMap ElementMap::of(const Mesh2D& mesh, int tri) {
  const auto p = mesh.triangle_points(tri);
  ElementMap m;
  m.origin = p[0];
  m.jac.col(0) = p[1] - p[0];
  m.jac.col(1) = p[2] - p[0];
  m.det = m.jac.determinant();
  if (!(m.det > 0)) throw MeshError("element map with non-positive Jacobian");
  m.jac_inv = m.jac.inverse();
  return m;
}

P2Field sample_p2(const Mesh2D& mesh, const std::function<double(const Vec2&)>& fn) {
  P2Field f(mesh);
  for (int n = 0; n < mesh.p2_node_count(); ++n) f[n] = fn(mesh.node_position(n));
  return f;
}

FieldJet interpolate(const P2Field& field, const Mesh2D& mesh, int tri, const Bary& ref_point) {
  if (!field.matches(mesh)) throw std::invalid_argument("P2 field size does not match mesh");
  const ElementMap map = ElementMap::of(mesh, tri);
  const ShapeEval s = shape_eval(ref_point);
  const auto nodes = mesh.element_nodes(tri);
  FieldJet jet;
  Vec2 g = Vec2::Zero();
  Mat2 h = Mat2::Zero();
  for (int a = 0; a < 6; ++a) {
    const double u = field[nodes[a]];
    jet.value += u * s.value[a];
    g += u * s.grad[a];
    h += u * s.hess[a];
  }
  jet.grad = map.physical_gradient(g);
  jet.hess = map.physical_hessian(h);
  return jet;
}

double evaluate(const P2Field& field, const Mesh2D& mesh, int tri, const Bary& ref_point) {
  const auto nodes = mesh.element_nodes(tri);
  const ShapeEval s = shape_eval(ref_point);
  double v = 0.0;
  for (int a = 0; a < 6; ++a) v += field[nodes[a]] * s.value[a];
  return v;
}

}  // namespace twophase
