#include "twophase/levelset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace twophase {

void FluidPair::validate() const {
  if (!(rho1 > 0) || !(rho2 > 0)) throw std::invalid_argument("densities must be positive");
  if (mu1 < 0 || mu2 < 0) throw std::invalid_argument("viscosities must be non-negative");
  if (!(eps > 0)) throw std::invalid_argument("regularization thickness eps must be positive");
  if (sigma < 0) throw std::invalid_argument("surface tension must be non-negative");
}

double heaviside_eps(double phi, double eps) {
  if (phi > eps) return 1.0;
  if (phi < -eps) return 0.0;
  constexpr double pi = std::numbers::pi;
  return std::clamp(0.5 * (1.0 + phi / eps + std::sin(pi * phi / eps) / pi), 0.0, 1.0);
}

double delta_eps(double phi, double eps) {
  if (std::abs(phi) > eps) return 0.0;
  return (1.0 + std::cos(std::numbers::pi * phi / eps)) / (2.0 * eps);
}

Material blend_properties(double phi, const FluidPair& fluids) {
  const double h = heaviside_eps(phi, fluids.eps);
  return {h * fluids.rho1 + (1.0 - h) * fluids.rho2, h * fluids.mu1 + (1.0 - h) * fluids.mu2};
}

Curvature curvature_from_jet(const Vec2& g, const Mat2& h) {
  const double n2 = g.squaredNorm();
  const double n = std::sqrt(n2);
  if (n < kGradientFloor) return {0.0, true};
  return {(g.dot(h * g) - n2 * h.trace()) / (n2 * n), false};
}

Curvature curvature(const P2Field& phi, const Mesh2D& mesh, int tri, const Bary& ref_point) {
  const FieldJet jet = interpolate(phi, mesh, tri, ref_point);
  return curvature_from_jet(jet.grad, jet.hess);
}

Vec2 csf_integrand(const P2Field& phi, const FluidPair& fluids, const Mesh2D& mesh, int tri,
                   const Bary& ref_point, CsfForm form, const CurvatureOverride& kappa_override) {
  const ElementMap map = ElementMap::of(mesh, tri);
  const ShapeEval s = shape_eval(ref_point);
  const auto nodes = mesh.element_nodes(tri);

  Vec2 grad_h = Vec2::Zero();
  if (form == CsfForm::NodalHeaviside) {
    for (int a = 0; a < 6; ++a) grad_h += heaviside_eps(phi[nodes[a]], fluids.eps) * s.grad[a];
    grad_h = map.physical_gradient(grad_h);
  } else {
    double value = 0.0;
    Vec2 g = Vec2::Zero();
    for (int a = 0; a < 6; ++a) {
      value += phi[nodes[a]] * s.value[a];
      g += phi[nodes[a]] * s.grad[a];
    }
    grad_h = delta_eps(value, fluids.eps) * map.physical_gradient(g);
  }
  if (grad_h.squaredNorm() == 0.0) return Vec2::Zero();

  double kappa = 0.0;
  if (kappa_override) {
    kappa = kappa_override(map.to_physical(ref_point));
  } else {
    kappa = curvature(phi, mesh, tri, ref_point).kappa;
  }
  return fluids.sigma * kappa * grad_h;
}

double InterfaceMesh::length() const {
  double total = 0.0;
  for (const auto& s : segments) total += s.length();
  return total;
}

namespace {

constexpr int kSub = 4;  // two hierarchical subdivisions: 4 x 4 lattice

int lattice_index(int i, int j) {
  // Row j has kSub + 1 - j points.
  int idx = 0;
  for (int r = 0; r < j; ++r) idx += kSub + 1 - r;
  return idx + i;
}

void march(const std::array<Vec2, 3>& p, const std::array<double, 3>& f,
           std::vector<InterfaceSegment>& out, double min_length) {
  const int positive = (f[0] >= 0) + (f[1] >= 0) + (f[2] >= 0);
  if (positive == 0 || positive == 3) return;
  int lone = 0;
  for (int k = 0; k < 3; ++k) {
    if ((f[k] >= 0) == (positive == 1)) lone = k;
  }
  auto crossing = [&](int k, int m) {
    const double t = f[k] / (f[k] - f[m]);
    return Vec2(p[k] + t * (p[m] - p[k]));
  };
  Vec2 a = crossing(lone, (lone + 1) % 3);
  Vec2 b = crossing(lone, (lone + 2) % 3);
  if ((b - a).norm() <= min_length) return;
  // Orient so the positive side is on the left: compare with the linear gradient.
  const Vec2 e1 = p[1] - p[0], e2 = p[2] - p[0];
  const double det = e1.x() * e2.y() - e1.y() * e2.x();
  const Vec2 grad((f[1] - f[0]) * e2.y() - (f[2] - f[0]) * e1.y(),
                  -(f[1] - f[0]) * e2.x() + (f[2] - f[0]) * e1.x());
  const Vec2 d = b - a;
  const Vec2 left(-d.y(), d.x());
  if (left.dot(grad) * det < 0) std::swap(a, b);
  out.push_back({a, b});
}

}  // namespace

InterfaceMesh extract_interface(const P2Field& phi, const Mesh2D& mesh) {
  if (!phi.matches(mesh)) throw std::invalid_argument("level-set field does not match mesh");
  constexpr int kPoints = (kSub + 1) * (kSub + 2) / 2;
  static const auto lattice_shapes = [] {
    std::array<ShapeEval, kPoints> shapes;
    for (int j = 0; j <= kSub; ++j)
      for (int i = 0; i + j <= kSub; ++i) {
        const double xi = static_cast<double>(i) / kSub, eta = static_cast<double>(j) / kSub;
        shapes[lattice_index(i, j)] = shape_eval({1.0 - xi - eta, xi, eta});
      }
    return shapes;
  }();

  InterfaceMesh iface;
  const double min_length = 1e-14 * mesh.domain().diameter();
  std::array<Vec2, kPoints> pts;
  std::array<double, kPoints> vals{};
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    const auto nodes = mesh.element_nodes(t);
    double lo = std::numeric_limits<double>::max(), hi = -lo;
    for (int n : nodes) {
      lo = std::min(lo, phi[n]);
      hi = std::max(hi, phi[n]);
    }
    // A P2 function can dip below its nodal range by at most (hi - lo) / 8 per node
    // pair; skip elements that cannot cross zero.
    const double margin = 0.25 * (hi - lo);
    if (lo - margin > 0 || hi + margin < 0) continue;

    const ElementMap map = ElementMap::of(mesh, t);
    for (int j = 0; j <= kSub; ++j)
      for (int i = 0; i + j <= kSub; ++i) {
        const int idx = lattice_index(i, j);
        double v = 0.0;
        for (int a = 0; a < 6; ++a) v += phi[nodes[a]] * lattice_shapes[idx].value[a];
        vals[idx] = v;
        pts[idx] = map.to_physical({1.0 - static_cast<double>(i + j) / kSub,
                                    static_cast<double>(i) / kSub, static_cast<double>(j) / kSub});
      }
    for (int j = 0; j < kSub; ++j)
      for (int i = 0; i + j < kSub; ++i) {
        const int a = lattice_index(i, j), b = lattice_index(i + 1, j), c = lattice_index(i, j + 1);
        march({pts[a], pts[b], pts[c]}, {vals[a], vals[b], vals[c]}, iface.segments, min_length);
        if (i + j + 1 < kSub) {
          const int d = lattice_index(i + 1, j + 1);
          march({pts[b], pts[d], pts[c]}, {vals[b], vals[d], vals[c]}, iface.segments, min_length);
        }
      }
  }
  return iface;
}

double point_segment_distance(const Vec2& x, const Vec2& a, const Vec2& b) {
  const Vec2 e = b - a;
  const double len2 = e.squaredNorm();
  const double s = len2 > 0 ? std::clamp((x - a).dot(e) / len2, 0.0, 1.0) : 0.0;
  return (a + s * e - x).norm();
}

namespace {

/// Uniform bins over segment bounding boxes for truncated distance queries.
class SegmentGrid {
 public:
  SegmentGrid(const InterfaceMesh& iface, const Rect& domain, double cell) : iface_(iface) {
    const double pad = cell;
    x0_ = domain.x0 - pad;
    y0_ = domain.y0 - pad;
    const double w = domain.width() + 2 * pad, h = domain.height() + 2 * pad;
    nx_ = std::clamp(static_cast<int>(w / cell), 1, 2048);
    ny_ = std::clamp(static_cast<int>(h / cell), 1, 2048);
    dx_ = w / nx_;
    dy_ = h / ny_;
    cells_.assign(static_cast<std::size_t>(nx_) * ny_, {});
    for (int s = 0; s < static_cast<int>(iface.segments.size()); ++s) {
      const auto& seg = iface.segments[s];
      auto [i0, j0] = cell_of(seg.a.cwiseMin(seg.b));
      auto [i1, j1] = cell_of(seg.a.cwiseMax(seg.b));
      for (int j = j0; j <= j1; ++j)
        for (int i = i0; i <= i1; ++i) cells_[j * nx_ + i].push_back(s);
    }
  }

  /// Minimum distance to the segments, or `cap` if none is closer than `cap`.
  double distance(const Vec2& x, double cap) const {
    auto [i0, j0] = cell_of(x - Vec2(cap, cap));
    auto [i1, j1] = cell_of(x + Vec2(cap, cap));
    double best = cap;
    for (int j = j0; j <= j1; ++j)
      for (int i = i0; i <= i1; ++i)
        for (int s : cells_[j * nx_ + i]) {
          const auto& seg = iface_.segments[s];
          best = std::min(best, point_segment_distance(x, seg.a, seg.b));
        }
    return best;
  }

 private:
  std::pair<int, int> cell_of(const Vec2& p) const {
    const int i = static_cast<int>(std::floor((p.x() - x0_) / dx_));
    const int j = static_cast<int>(std::floor((p.y() - y0_) / dy_));
    return {std::clamp(i, 0, nx_ - 1), std::clamp(j, 0, ny_ - 1)};
  }

  const InterfaceMesh& iface_;
  double x0_ = 0, y0_ = 0, dx_ = 1, dy_ = 1;
  int nx_ = 1, ny_ = 1;
  std::vector<std::vector<int>> cells_;
};

}  // namespace

Reinitialization reinitialize(const P2Field& phi, const Mesh2D& mesh, double eps,
                              const InterfaceMesh& iface) {
  if (!(eps > 0)) throw std::invalid_argument("reinitialize needs eps > 0");
  if (iface.empty()) return {phi, true};
  const double cap = 2.0 * eps;
  const SegmentGrid grid(iface, mesh.domain(), std::max(cap, mesh.domain().diameter() / 2048));
  Reinitialization out{P2Field(mesh), false};
  for (int n = 0; n < mesh.p2_node_count(); ++n) {
    const double d = grid.distance(mesh.node_position(n), cap);
    out.phi[n] = phi[n] >= 0 ? d : -d;
  }
  return out;
}

Reinitialization reinitialize(const P2Field& phi, const Mesh2D& mesh, double eps) {
  return reinitialize(phi, mesh, eps, extract_interface(phi, mesh));
}

void write_interface_csv(const InterfaceMesh& iface, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out.precision(10);
  out << "x0,y0,x1,y1\n";
  for (const auto& s : iface.segments)
    out << s.a.x() << ',' << s.a.y() << ',' << s.b.x() << ',' << s.b.y() << '\n';
}

}  // namespace twophase
