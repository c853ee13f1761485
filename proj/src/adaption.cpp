#include "twophase/adaption.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_set>

namespace twophase {

SensorField build_sensor(const P2Field& phi_n, const P2Field& phi_nm1, double eps) {
  if (phi_n.size() != phi_nm1.size()) {
    throw std::invalid_argument("sensor level sets live on different meshes");
  }
  SensorField s{P2Field(std::vector<double>(phi_n.size())),
                P2Field(std::vector<double>(phi_n.size()))};
  for (std::size_t i = 0; i < phi_n.size(); ++i) {
    s.current[i] = heaviside_eps(phi_n[i], eps);
    s.extrapolated[i] = heaviside_eps(2.0 * phi_n[i] - phi_nm1[i], eps);
  }
  return s;
}

Mat2 RecoveredDerivatives::third_slice(int j) const {
  Mat2 m;
  if (j == 0) {
    m << third[0], third[1], third[1], third[2];
  } else {
    m << third[1], third[2], third[2], third[3];
  }
  return m;
}

VertexStars::VertexStars(const Mesh2D& mesh) : stars_(mesh.vertex_count()) {
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    for (int v : mesh.triangles()[t]) stars_[v].push_back(t);
  }
}

namespace {

constexpr double kFactorial[] = {1, 1, 2, 6, 24};

int monomial_count(int degree) { return (degree + 1) * (degree + 2) / 2; }

// Monomials ordered by total degree, x powers descending: 1, x, y, x^2, xy, y^2, ...
void fill_monomials(double x, double y, int degree, double* row) {
  int k = 0;
  for (int d = 0; d <= degree; ++d) {
    for (int a = d; a >= 0; --a) row[k++] = std::pow(x, a) * std::pow(y, d - a);
  }
}

int monomial_index(int a, int b) {
  const int d = a + b;
  return d * (d + 1) / 2 + (d - a);
}

struct Patch {
  Vec2 center;
  double radius = 1.0;
  int degree = 4;
  std::vector<int> nodes;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr;
};

std::vector<int> patch_nodes(const Mesh2D& mesh, const std::vector<int>& tris) {
  std::vector<int> nodes;
  for (int t : tris) {
    for (int n : mesh.element_nodes(t)) nodes.push_back(n);
  }
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  return nodes;
}

void grow_ring(const Mesh2D& mesh, const VertexStars& stars, std::vector<int>& tris) {
  std::vector<int> verts;
  for (int t : tris) {
    for (int v : mesh.triangles()[t]) verts.push_back(v);
  }
  std::sort(verts.begin(), verts.end());
  verts.erase(std::unique(verts.begin(), verts.end()), verts.end());
  for (int v : verts) {
    for (int t : stars.of(v)) tris.push_back(t);
  }
  std::sort(tris.begin(), tris.end());
  tris.erase(std::unique(tris.begin(), tris.end()), tris.end());
}

bool factor_patch(const Mesh2D& mesh, Patch& patch) {
  const int cols = monomial_count(patch.degree);
  const int rows = static_cast<int>(patch.nodes.size());
  if (rows < cols) return false;
  Eigen::MatrixXd a(rows, cols);
  std::vector<double> row(cols);
  for (int i = 0; i < rows; ++i) {
    const Vec2 d = (mesh.node_position(patch.nodes[i]) - patch.center) / patch.radius;
    fill_monomials(d.x(), d.y(), patch.degree, row.data());
    for (int j = 0; j < cols; ++j) a(i, j) = row[j];
  }
  patch.qr.setThreshold(1e-10);
  patch.qr.compute(a);
  return patch.qr.rank() == cols;
}

Patch build_patch(const Mesh2D& mesh, const VertexStars& stars, int vertex) {
  Patch patch;
  patch.center = mesh.vertices()[vertex];
  std::vector<int> tris = stars.of(vertex);
  patch.nodes = patch_nodes(mesh, tris);
  while (static_cast<int>(patch.nodes.size()) < kMinPatchNodes) {
    const std::size_t before = tris.size();
    grow_ring(mesh, stars, tris);
    patch.nodes = patch_nodes(mesh, tris);
    if (tris.size() == before) break;
  }
  auto set_radius = [&] {
    double r = 0.0;
    for (int n : patch.nodes) r = std::max(r, (mesh.node_position(n) - patch.center).norm());
    patch.radius = r > 0 ? r : 1.0;
  };
  set_radius();
  if (factor_patch(mesh, patch)) return patch;
  grow_ring(mesh, stars, tris);
  patch.nodes = patch_nodes(mesh, tris);
  set_radius();
  if (factor_patch(mesh, patch)) return patch;
  patch.degree = 3;
  if (factor_patch(mesh, patch)) return patch;
  std::ostringstream msg;
  msg << "derivative recovery: rank-deficient patch at vertex " << vertex;
  throw MeshError(msg.str());
}

RecoveredDerivatives solve_patch(const Patch& patch, const P2Field& field) {
  Eigen::VectorXd b(patch.nodes.size());
  for (std::size_t i = 0; i < patch.nodes.size(); ++i) b(i) = field[patch.nodes[i]];
  const Eigen::VectorXd c = patch.qr.solve(b);
  auto deriv = [&](int a, int bpow) {
    if (a + bpow > patch.degree) return 0.0;
    return c(monomial_index(a, bpow)) * kFactorial[a] * kFactorial[bpow] /
           std::pow(patch.radius, a + bpow);
  };
  RecoveredDerivatives r;
  r.degree = patch.degree;
  r.grad = Vec2(deriv(1, 0), deriv(0, 1));
  r.hess = {deriv(2, 0), deriv(1, 1), deriv(0, 2)};
  r.third = {deriv(3, 0), deriv(2, 1), deriv(1, 2), deriv(0, 3)};
  r.fourth = {deriv(4, 0), deriv(3, 1), deriv(2, 2), deriv(1, 3), deriv(0, 4)};
  return r;
}

}  // namespace

RecoveredDerivatives spr_fit(const P2Field& field, const Mesh2D& mesh, int vertex) {
  if (!field.matches(mesh)) throw std::invalid_argument("field does not match the mesh");
  VertexStars stars(mesh);
  return solve_patch(build_patch(mesh, stars, vertex), field);
}

std::vector<std::vector<RecoveredDerivatives>> recover_derivatives(
    const std::vector<const P2Field*>& fields, const Mesh2D& mesh) {
  for (const P2Field* f : fields) {
    if (!f->matches(mesh)) throw std::invalid_argument("field does not match the mesh");
  }
  VertexStars stars(mesh);
  const int nv = mesh.vertex_count();
  std::vector<std::vector<RecoveredDerivatives>> out(nv);
#pragma omp parallel for schedule(dynamic, 64)
  for (int v = 0; v < nv; ++v) {
    const Patch patch = build_patch(mesh, stars, v);
    out[v].reserve(fields.size());
    for (const P2Field* f : fields) out[v].push_back(solve_patch(patch, *f));
  }
  return out;
}

MetricBounds MetricBounds::for_domain(const Rect& domain) {
  return {domain.diameter() * 1e-4, domain.diameter() / 4.0};
}

namespace {

template <typename Fn>
Mat2 spectral_map(const Mat2& m, Fn fn) {
  const Mat2 sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Mat2> es(sym);
  const Vec2 lam = es.eigenvalues();
  const Mat2& q = es.eigenvectors();
  return q * Vec2(fn(lam(0)), fn(lam(1))).asDiagonal() * q.transpose();
}

}  // namespace

Mat2 spd_log(const Mat2& m) {
  return spectral_map(m, [](double l) {
    if (!(l > 0)) throw std::domain_error("matrix logarithm of a non-SPD matrix");
    return std::log(l);
  });
}

Mat2 spd_exp(const Mat2& m) {
  return spectral_map(m, [](double l) { return std::exp(l); });
}

Mat2 spd_abs_floor(const Mat2& a, double floor) {
  return spectral_map(a, [floor](double l) { return std::max(std::abs(l), floor); });
}

Mat2 bound_matrix_Q(const std::vector<Mat2>& slices, double floor) {
  if (slices.empty()) throw std::invalid_argument("bound matrix of an empty set");
  if (!(floor > 0)) throw std::invalid_argument("bound matrix floor must be positive");
  Mat2 sum = Mat2::Zero();
  for (const Mat2& a : slices) sum += spd_log(spd_abs_floor(a, floor));
  return spd_exp(sum / static_cast<double>(slices.size()));
}

std::vector<Mat2> bound_matrix_field(const std::vector<std::vector<RecoveredDerivatives>>& derivs,
                                     double floor) {
  std::vector<Mat2> q(derivs.size());
  std::vector<Mat2> slices;
  for (std::size_t v = 0; v < derivs.size(); ++v) {
    slices.clear();
    for (const RecoveredDerivatives& d : derivs[v]) {
      slices.push_back(d.third_slice(0));
      slices.push_back(d.third_slice(1));
    }
    q[v] = bound_matrix_Q(slices, floor);
  }
  return q;
}

std::vector<double> lumped_vertex_weights(const Mesh2D& mesh) {
  std::vector<double> w(mesh.vertex_count(), 0.0);
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    const double a = std::abs(mesh.signed_area(t)) / 3.0;
    for (int v : mesh.triangles()[t]) w[v] += a;
  }
  return w;
}

double metric_complexity(const MetricField& metric, const Mesh2D& mesh) {
  if (static_cast<int>(metric.tensors.size()) != mesh.vertex_count()) {
    throw std::invalid_argument("metric does not match the mesh");
  }
  const std::vector<double> w = lumped_vertex_weights(mesh);
  double sum = 0.0;
  for (std::size_t v = 0; v < w.size(); ++v) {
    sum += w[v] * std::sqrt(std::max(metric.tensors[v].determinant(), 0.0));
  }
  return sum;
}

MetricField metric_M(const std::vector<Mat2>& q, double n, const Mesh2D& mesh,
                     const MetricBounds* bounds) {
  if (static_cast<int>(q.size()) != mesh.vertex_count()) {
    throw std::invalid_argument("bound matrices do not match the mesh");
  }
  if (!(n > 0)) throw std::invalid_argument("target complexity must be positive");
  const std::vector<double> w = lumped_vertex_weights(mesh);
  double integral = 0.0;
  for (std::size_t v = 0; v < q.size(); ++v) {
    if (!is_spd(q[v])) throw std::domain_error("bound matrix is not SPD");
    integral += w[v] * std::pow(q[v].determinant(), 3.0 / 8.0);
  }
  MetricField m;
  m.tensors.resize(q.size());
  for (std::size_t v = 0; v < q.size(); ++v) {
    m.tensors[v] = (n / integral) * std::pow(q[v].determinant(), -1.0 / 8.0) * q[v];
  }
  if (bounds) {
    const double lo = 1.0 / (bounds->h_max * bounds->h_max);
    const double hi = 1.0 / (bounds->h_min * bounds->h_min);
    for (Mat2& t : m.tensors) {
      t = spectral_map(t, [lo, hi](double l) { return std::clamp(l, lo, hi); });
    }
  }
  return m;
}

double metric_quality(const std::array<Vec2, 3>& p, const std::array<Mat2, 3>& m) {
  const Vec2 e1 = p[1] - p[0];
  const Vec2 e2 = p[2] - p[0];
  const double area = 0.5 * (e1.x() * e2.y() - e1.y() * e2.x());
  const double scale = std::max({e1.squaredNorm(), e2.squaredNorm(), (p[2] - p[1]).squaredNorm()});
  if (!(area > 1e-12 * scale)) return -1.0;
  const Mat2 mt = (m[0] + m[1] + m[2]) / 3.0;
  const double area_m = area * std::sqrt(mt.determinant());
  double sum_sq = 0.0, sum = 0.0;
  for (int k = 0; k < 3; ++k) {
    const int a = k, b = (k + 1) % 3;
    const double l = metric_length(m[a], m[b], p[b] - p[a]);
    sum_sq += l * l;
    sum += l;
  }
  return 4.0 * std::sqrt(3.0) * area_m / sum_sq * std::exp(-std::abs(sum / 3.0 - 1.0));
}

namespace {

/// Log-Euclidean interpolation of the vertex metric on the mesh it was computed on.
class BackgroundMetric {
 public:
  BackgroundMetric(const Mesh2D& mesh, const MetricField& metric)
      : mesh_(mesh), index_(mesh), logs_(metric.tensors.size()) {
    for (std::size_t v = 0; v < logs_.size(); ++v) logs_[v] = spd_log(metric.tensors[v]);
  }

  Mat2 at(const Vec2& x) const {
    const PointLocation loc = locate_nearest(mesh_, index_, x);
    const auto& tri = mesh_.triangles()[loc.triangle];
    Mat2 sum = Mat2::Zero();
    for (int k = 0; k < 3; ++k) sum += loc.bary[k] * logs_[tri[k]];
    return spd_exp(sum);
  }

 private:
  const Mesh2D& mesh_;
  SpatialIndex index_;
  std::vector<Mat2> logs_;
};

constexpr double kImprovement = 1e-12;
const double kLongEdge = 1.2;
const double kShortEdge = 0.85;

bool is_corner(std::uint8_t s) { return (s & (s - 1)) != 0; }

/// Mutable triangulation used during remeshing.
class WorkMesh {
 public:
  WorkMesh(const Mesh2D& mesh, const MetricField& metric, const BackgroundMetric& bg)
      : bg_(bg), domain_(mesh.domain()) {
    const int nv = mesh.vertex_count();
    pos_ = mesh.vertices();
    metric_ = metric.tensors;
    sides_.resize(nv);
    for (int v = 0; v < nv; ++v) sides_[v] = mesh.node_sides(v);
    vtris_.resize(nv);
    for (const auto& t : mesh.triangles()) add_triangle(t);
  }

  double edge_length(int a, int b) const {
    return metric_length(metric_[a], metric_[b], pos_[b] - pos_[a]);
  }

  std::vector<std::pair<int, int>> edges() const {
    std::vector<std::pair<int, int>> out;
    for (std::size_t t = 0; t < tris_.size(); ++t) {
      if (!alive_[t]) continue;
      for (int k = 0; k < 3; ++k) {
        const int a = tris_[t][k], b = tris_[t][(k + 1) % 3];
        // Interior edges appear twice; keep the one with a < b, boundary edges once.
        if (a < b || edge_triangles(a, b).size() == 1) out.emplace_back(a, b);
      }
    }
    return out;
  }

  std::vector<int> edge_triangles(int a, int b) const {
    std::vector<int> out;
    for (int t : vtris_[a]) {
      const auto& tri = tris_[t];
      if (tri[0] == b || tri[1] == b || tri[2] == b) out.push_back(t);
    }
    return out;
  }

  bool split(int a, int b) {
    const std::vector<int> ts = edge_triangles(a, b);
    if (ts.empty()) return false;
    std::uint8_t side = kInterior;
    if (ts.size() == 1) {
      side = sides_[a] & sides_[b];
      if (side == kInterior) return false;
    }
    const Vec2 pm = 0.5 * (pos_[a] + pos_[b]);
    const Mat2 mm = bg_.at(pm);
    double old_q = std::numeric_limits<double>::max();
    double new_q = std::numeric_limits<double>::max();
    std::vector<std::array<int, 3>> created;
    const int m = static_cast<int>(pos_.size());
    for (int t : ts) {
      old_q = std::min(old_q, quality(tris_[t]));
      const auto& tri = tris_[t];
      int k = 0;
      while (!((tri[k] == a && tri[(k + 1) % 3] == b) || (tri[k] == b && tri[(k + 1) % 3] == a))) {
        ++k;
      }
      const int x = tri[k], y = tri[(k + 1) % 3], z = tri[(k + 2) % 3];
      created.push_back({x, m, z});
      created.push_back({m, y, z});
    }
    pos_.push_back(pm);
    metric_.push_back(mm);
    sides_.push_back(side);
    vtris_.emplace_back();
    for (const auto& c : created) new_q = std::min(new_q, quality(c));
    if (!(new_q > old_q + kImprovement)) {
      pos_.pop_back();
      metric_.pop_back();
      sides_.pop_back();
      vtris_.pop_back();
      return false;
    }
    for (int t : ts) kill_triangle(t);
    for (const auto& c : created) add_triangle(c);
    return true;
  }

  /// Removes a by merging it into b, with b kept in place or moved to the edge midpoint.
  bool collapse(int a, int b) {
    if (vtris_[a].empty() || is_corner(sides_[a])) return false;
    const std::vector<int> ts = edge_triangles(a, b);
    if (ts.empty()) return false;
    if (sides_[a] != kInterior) {
      if (ts.size() != 1 || (sides_[a] & sides_[b]) != sides_[a]) return false;
    }
    // Link condition: common neighbours are exactly the apexes of the shared triangles.
    std::vector<int> na = neighbours(a), nb = neighbours(b), common;
    std::set_intersection(na.begin(), na.end(), nb.begin(), nb.end(), std::back_inserter(common));
    if (common.size() != ts.size()) return false;

    auto shared = [&](int t) { return std::find(ts.begin(), ts.end(), t) != ts.end(); };
    std::vector<std::array<int, 3>> merged;
    for (int t : vtris_[a]) {
      if (shared(t)) continue;
      auto tri = tris_[t];
      for (int& v : tri) {
        if (v == a) v = b;
      }
      merged.push_back(tri);
    }
    if (merged.empty()) return false;
    std::vector<int> b_only;
    for (int t : vtris_[b]) {
      if (!shared(t)) b_only.push_back(t);
    }

    const Vec2 b_pos = pos_[b];
    const Mat2 b_metric = metric_[b];
    auto min_quality = [&](bool with_b_star) {
      double q = std::numeric_limits<double>::max();
      for (const auto& tri : merged) q = std::min(q, quality(tri));
      if (with_b_star) {
        for (int t : b_only) q = std::min(q, quality(tris_[t]));
      }
      return q;
    };
    double old_a = std::numeric_limits<double>::max(), old_b = old_a;
    for (int t : vtris_[a]) old_a = std::min(old_a, quality(tris_[t]));
    for (int t : b_only) old_b = std::min(old_b, quality(tris_[t]));

    bool accepted = min_quality(false) > old_a + kImprovement;
    if (!accepted && sides_[a] == sides_[b] && !is_corner(sides_[b])) {
      // Relocate the merged vertex: edge midpoint, then the centroid of the merged star.
      std::vector<Vec2> candidates{0.5 * (pos_[a] + b_pos)};
      if (sides_[b] == kInterior) {
        Vec2 c = Vec2::Zero();
        int count = 0;
        for (int u : na) {
          if (u != b) c += pos_[u], ++count;
        }
        for (int u : nb) {
          if (u != a && !std::binary_search(na.begin(), na.end(), u)) c += pos_[u], ++count;
        }
        candidates.push_back(c / count);
      }
      for (const Vec2& p : candidates) {
        pos_[b] = p;
        metric_[b] = bg_.at(p);
        if (min_quality(true) > std::min(old_a, old_b) + kImprovement) {
          accepted = true;
          break;
        }
      }
      if (!accepted) {
        pos_[b] = b_pos;
        metric_[b] = b_metric;
      }
    }
    if (!accepted) return false;
    const std::vector<int> star = vtris_[a];
    for (int t : star) kill_triangle(t);
    for (const auto& tri : merged) add_triangle(tri);
    return true;
  }

  bool swap(int a, int b) {
    const std::vector<int> ts = edge_triangles(a, b);
    if (ts.size() != 2) return false;
    auto apex = [&](int t) {
      for (int v : tris_[t]) {
        if (v != a && v != b) return v;
      }
      return -1;
    };
    // Orient so that tris_[t1] = (a, b, c) cyclically.
    int t1 = ts[0], t2 = ts[1];
    {
      const auto& tri = tris_[t1];
      int k = 0;
      while (tri[k] != a) ++k;
      if (tri[(k + 1) % 3] != b) std::swap(t1, t2);
    }
    const int c = apex(t1), d = apex(t2);
    if (!edge_triangles(c, d).empty()) return false;
    const std::array<int, 3> n1{a, d, c}, n2{d, b, c};
    const double old_q = std::min(quality(tris_[t1]), quality(tris_[t2]));
    const double new_q = std::min(quality(n1), quality(n2));
    if (!(new_q > old_q + kImprovement)) return false;
    kill_triangle(t1);
    kill_triangle(t2);
    add_triangle(n1);
    add_triangle(n2);
    return true;
  }

  bool smooth(int v) {
    if (vtris_[v].empty() || is_corner(sides_[v])) return false;
    Vec2 target = Vec2::Zero();
    if (sides_[v] == kInterior) {
      const std::vector<int> nb = neighbours(v);
      for (int n : nb) target += pos_[n];
      target /= static_cast<double>(nb.size());
    } else {
      int count = 0;
      for (int n : neighbours(v)) {
        if ((sides_[n] & sides_[v]) && edge_triangles(v, n).size() == 1) {
          target += pos_[n];
          ++count;
        }
      }
      if (count != 2) return false;
      target /= 2.0;
      // Stay exactly on the side.
      if (sides_[v] & (kLeft | kRight)) target.x() = pos_[v].x();
      if (sides_[v] & (kBottom | kTop)) target.y() = pos_[v].y();
    }
    const Vec2 old_pos = pos_[v];
    const Mat2 old_metric = metric_[v];
    double old_q = std::numeric_limits<double>::max();
    for (int t : vtris_[v]) old_q = std::min(old_q, quality(tris_[t]));
    for (double step : {1.0, 0.5}) {
      const Vec2 p = old_pos + step * (target - old_pos);
      pos_[v] = p;
      metric_[v] = bg_.at(p);
      double new_q = std::numeric_limits<double>::max();
      for (int t : vtris_[v]) new_q = std::min(new_q, quality(tris_[t]));
      if (new_q > old_q + kImprovement) return true;
    }
    pos_[v] = old_pos;
    metric_[v] = old_metric;
    return false;
  }

  int vertex_slots() const { return static_cast<int>(pos_.size()); }

  Mesh2D compact() const {
    std::vector<int> remap(pos_.size(), -1);
    std::vector<Vec2> verts;
    for (std::size_t v = 0; v < pos_.size(); ++v) {
      if (vtris_[v].empty()) continue;
      remap[v] = static_cast<int>(verts.size());
      Vec2 p = pos_[v];
      if (sides_[v] & kLeft) p.x() = domain_.x0;
      if (sides_[v] & kRight) p.x() = domain_.x1;
      if (sides_[v] & kBottom) p.y() = domain_.y0;
      if (sides_[v] & kTop) p.y() = domain_.y1;
      verts.push_back(p);
    }
    std::vector<std::array<int, 3>> tris;
    for (std::size_t t = 0; t < tris_.size(); ++t) {
      if (!alive_[t]) continue;
      tris.push_back({remap[tris_[t][0]], remap[tris_[t][1]], remap[tris_[t][2]]});
    }
    return Mesh2D(std::move(verts), std::move(tris), domain_);
  }

 private:
  double quality(const std::array<int, 3>& t) const {
    return metric_quality({pos_[t[0]], pos_[t[1]], pos_[t[2]]},
                          {metric_[t[0]], metric_[t[1]], metric_[t[2]]});
  }

  std::vector<int> neighbours(int v) const {
    std::vector<int> out;
    for (int t : vtris_[v]) {
      for (int u : tris_[t]) {
        if (u != v) out.push_back(u);
      }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  void add_triangle(const std::array<int, 3>& t) {
    const int id = static_cast<int>(tris_.size());
    tris_.push_back(t);
    alive_.push_back(1);
    for (int v : t) vtris_[v].push_back(id);
  }

  void kill_triangle(int id) {
    alive_[id] = 0;
    for (int v : tris_[id]) {
      auto& s = vtris_[v];
      s.erase(std::find(s.begin(), s.end(), id));
    }
  }

  const BackgroundMetric& bg_;
  Rect domain_;
  std::vector<Vec2> pos_;
  std::vector<Mat2> metric_;
  std::vector<std::uint8_t> sides_;
  std::vector<std::vector<int>> vtris_;
  std::vector<std::array<int, 3>> tris_;
  std::vector<char> alive_;
};

}  // namespace

Mesh2D adapt_mesh(const Mesh2D& mesh, const MetricField& metric, const RemeshConfig& config,
                  RemeshStats* stats) {
  if (static_cast<int>(metric.tensors.size()) != mesh.vertex_count()) {
    throw std::invalid_argument("metric does not match the mesh");
  }
  for (const Mat2& m : metric.tensors) {
    if (!is_spd(m)) throw MeshError("metric tensor is not SPD");
  }
  BackgroundMetric bg(mesh, metric);
  WorkMesh work(mesh, metric, bg);
  RemeshStats local;
  for (int pass = 0; pass < config.max_passes; ++pass) {
    ++local.passes;
    const int before = local.total();

    auto by_length = [&](bool longest_first) {
      std::vector<std::pair<double, std::pair<int, int>>> list;
      for (const auto& e : work.edges()) {
        const double l = work.edge_length(e.first, e.second);
        if (longest_first ? l > kLongEdge : l < kShortEdge) list.push_back({l, e});
      }
      if (longest_first) {
        std::sort(list.begin(), list.end(), [](const auto& x, const auto& y) { return x.first > y.first; });
      } else {
        std::sort(list.begin(), list.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
      }
      return list;
    };

    for (const auto& [l, e] : by_length(true)) {
      if (work.edge_triangles(e.first, e.second).empty()) continue;
      if (work.split(e.first, e.second)) ++local.splits;
    }
    for (const auto& [l, e] : by_length(false)) {
      if (work.edge_triangles(e.first, e.second).empty()) continue;
      if (work.edge_length(e.first, e.second) >= kShortEdge) continue;
      if (work.collapse(e.first, e.second) || work.collapse(e.second, e.first)) ++local.collapses;
    }
    for (const auto& e : work.edges()) {
      if (work.swap(e.first, e.second)) ++local.swaps;
    }
    for (int v = 0; v < work.vertex_slots(); ++v) {
      if (work.smooth(v)) ++local.moves;
    }
    if (local.total() == before) break;
  }
  if (stats) *stats = local;
  return work.compact();
}

P2Field transfer_field(const P2Field& field, const Mesh2D& old_mesh, const SpatialIndex& index,
                       const Mesh2D& new_mesh) {
  if (!field.matches(old_mesh)) throw std::invalid_argument("field does not match the old mesh");
  P2Field out(new_mesh);
  for (int n = 0; n < new_mesh.p2_node_count(); ++n) {
    const Vec2 x = new_mesh.node_position(n);
    const PointLocation loc = locate_nearest(old_mesh, index, x);
    if (loc.triangle < 0) {
      std::ostringstream msg;
      msg << "transfer: node at (" << x.x() << ", " << x.y() << ") not located";
      throw MeshError(msg.str());
    }
    out[n] = evaluate(field, old_mesh, loc.triangle, loc.bary);
  }
  return out;
}

CoupledState transfer_fields(const CoupledState& state, std::shared_ptr<const Mesh2D> new_mesh) {
  const Mesh2D& old_mesh = *state.mesh;
  SpatialIndex index(old_mesh);
  CoupledState out(new_mesh);
  const Mesh2D& nm = *new_mesh;
  const int nn = nm.p2_node_count();
  std::vector<PointLocation> locs(nn);
  for (int n = 0; n < nn; ++n) {
    locs[n] = locate_nearest(old_mesh, index, nm.node_position(n));
    if (locs[n].triangle < 0) {
      const Vec2 x = nm.node_position(n);
      std::ostringstream msg;
      msg << "transfer: node at (" << x.x() << ", " << x.y() << ") not located";
      throw MeshError(msg.str());
    }
  }
  auto move = [&](const P2Field& from, P2Field& to) {
    for (int n = 0; n < nn; ++n) to[n] = evaluate(from, old_mesh, locs[n].triangle, locs[n].bary);
  };
  move(state.vx, out.vx);
  move(state.vy, out.vy);
  move(state.p, out.p);
  move(state.phi, out.phi);
  return out;
}

AdaptionResult adapt_to_sensor(const Mesh2D& mesh, const SensorField& sensor,
                               const AdaptionOptions& options) {
  MetricBounds bounds = MetricBounds::for_domain(mesh.domain());
  if (options.bounds.h_min > 0) bounds.h_min = options.bounds.h_min;
  if (options.bounds.h_max > 0) bounds.h_max = options.bounds.h_max;
  const double floor = 1.0 / (bounds.h_max * bounds.h_max);
  const auto derivs = recover_derivatives({&sensor.current, &sensor.extrapolated}, mesh);
  const std::vector<Mat2> q = bound_matrix_field(derivs, floor);
  AdaptionResult result;
  result.metric = metric_M(q, options.complexity, mesh, &bounds);
  result.mesh = std::make_shared<const Mesh2D>(
      adapt_mesh(mesh, result.metric, options.remesh, &result.stats));
  return result;
}

void write_metric_vtk(const Mesh2D& mesh, const MetricField& metric, const std::string& path) {
  if (static_cast<int>(metric.tensors.size()) != mesh.vertex_count()) {
    throw std::invalid_argument("metric does not match the mesh");
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out.precision(12);
  out << "# vtk DataFile Version 3.0\nmetric\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << mesh.vertex_count() << " double\n";
  for (const Vec2& p : mesh.vertices()) out << p.x() << ' ' << p.y() << " 0\n";
  out << "CELLS " << mesh.triangle_count() << ' ' << 4 * mesh.triangle_count() << '\n';
  for (const auto& t : mesh.triangles()) out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  out << "CELL_TYPES " << mesh.triangle_count() << '\n';
  for (int t = 0; t < mesh.triangle_count(); ++t) out << "5\n";
  out << "POINT_DATA " << mesh.vertex_count() << '\n';
  out << "TENSORS metric double\n";
  for (const Mat2& m : metric.tensors) {
    out << m(0, 0) << ' ' << m(0, 1) << " 0\n" << m(1, 0) << ' ' << m(1, 1) << " 0\n0 0 1\n\n";
  }
  // Principal directions scaled by the requested edge lengths 1/sqrt(lambda).
  for (int k = 0; k < 2; ++k) {
    out << "VECTORS size_axis" << k << " double\n";
    for (const Mat2& m : metric.tensors) {
      Eigen::SelfAdjointEigenSolver<Mat2> es(m);
      const Vec2 d = es.eigenvectors().col(k) / std::sqrt(es.eigenvalues()(k));
      out << d.x() << ' ' << d.y() << " 0\n";
    }
  }
}

}  // namespace twophase
