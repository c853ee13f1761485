#include "twophase/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <utility>

namespace twophase {

namespace {

constexpr int kQuad = 12;
constexpr int kLocal = 24;

/// Reference shape values at the default quadrature points.
struct QuadTables {
  std::array<std::array<double, 6>, kQuad> value{};
  std::array<std::array<Vec2, 6>, kQuad> grad{};
  std::array<double, kQuad> weight{};
  std::array<Mat2, 6> hess;  ///< reference Hessians are constant
};

const QuadTables& quad_tables() {
  static const QuadTables tables = [] {
    const QuadratureRule& rule = default_quadrature();
    if (static_cast<int>(rule.points.size()) != kQuad)
      throw std::logic_error("solver expects the 12-point quadrature rule");
    QuadTables t;
    for (int q = 0; q < kQuad; ++q) {
      const ShapeEval s = shape_eval(rule.points[q]);
      t.value[q] = s.value;
      t.grad[q] = s.grad;
      t.weight[q] = rule.weights[q];
      if (q == 0) t.hess = s.hess;
    }
    return t;
  }();
  return tables;
}

template <bool kAbs>
inline void add(double& target, double term) {
  if constexpr (kAbs) {
    target += std::abs(term);
  } else {
    target += term;
  }
}

}  // namespace

WallCondition BoundaryConditions::on(BoundarySide side) const {
  switch (side) {
    case kLeft: return left;
    case kRight: return right;
    case kBottom: return bottom;
    case kTop: return top;
    default: throw std::invalid_argument("not a boundary side");
  }
}

void SolverConfig::validate() const {
  if (!(dt_max > 0)) throw std::invalid_argument("dt_max must be positive");
  if (!(newton_tol > 0) || !(linear_tol > 0) || !(nd_perturbation > 0))
    throw std::invalid_argument("tolerances must be positive");
  if (max_newton_iters < 1) throw std::invalid_argument("max_newton_iters must be >= 1");
  if (!(c_i > 0)) throw std::invalid_argument("C_I must be positive");
  if (!(dt_growth > 1.0) || !(dt_shrink > 0.0 && dt_shrink < 1.0))
    throw std::invalid_argument("need dt_growth > 1 > dt_shrink > 0");
  if (!(ilu_droptol >= 0) || ilu_fill < 1)
    throw std::invalid_argument("ilu_droptol must be non-negative and ilu_fill positive");
  if (gmres_restart < 1 || gmres_max_iters < 1)
    throw std::invalid_argument("GMRES restart and iteration limits must be positive");
}

AssemblyError::AssemblyError(int element, std::string group)
    : SolverError("non-finite " + group + " residual in element " + std::to_string(element)),
      element_(element),
      group_(std::move(group)) {}

const char* to_string(NewtonReport::Status s) {
  switch (s) {
    case NewtonReport::Status::Converged: return "converged";
    case NewtonReport::Status::MaxIterations: return "max-iterations";
    case NewtonReport::Status::Diverged: return "diverged";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------------------------
// CoupledState

CoupledState::CoupledState(std::shared_ptr<const Mesh2D> m)
    : mesh(std::move(m)), vx(*mesh), vy(*mesh), p(*mesh), phi(*mesh) {}

Eigen::VectorXd CoupledState::pack() const {
  if (!consistent()) throw std::invalid_argument("inconsistent coupled state");
  const int n = mesh->p2_node_count();
  Eigen::VectorXd u(kDofsPerNode * n);
  for (int i = 0; i < n; ++i) {
    u[kDofsPerNode * i + kVx] = vx[i];
    u[kDofsPerNode * i + kVy] = vy[i];
    u[kDofsPerNode * i + kP] = p[i];
    u[kDofsPerNode * i + kPhi] = phi[i];
  }
  return u;
}

CoupledState CoupledState::unpack(std::shared_ptr<const Mesh2D> m, const Eigen::VectorXd& u) {
  CoupledState s(std::move(m));
  const int n = s.mesh->p2_node_count();
  if (u.size() != kDofsPerNode * n) throw std::invalid_argument("unknown vector size mismatch");
  for (int i = 0; i < n; ++i) {
    s.vx[i] = u[kDofsPerNode * i + kVx];
    s.vy[i] = u[kDofsPerNode * i + kVy];
    s.p[i] = u[kDofsPerNode * i + kP];
    s.phi[i] = u[kDofsPerNode * i + kPhi];
  }
  return s;
}

double CoupledState::max_speed() const {
  double m = 0.0;
  for (std::size_t i = 0; i < vx.size(); ++i) m = std::max(m, std::hypot(vx[i], vy[i]));
  return m;
}

bool CoupledState::consistent() const {
  return mesh && vx.matches(*mesh) && vy.matches(*mesh) && p.matches(*mesh) &&
         phi.matches(*mesh);
}

// ---------------------------------------------------------------------------------------------
// Pointwise pieces

Mat2 element_metric_G(const Mesh2D& mesh, int tri) {
  const ElementMap map = ElementMap::of(mesh, tri);
  if (!(std::abs(map.det) > 0)) throw MeshError("degenerate triangle " + std::to_string(tri));
  return map.jac_inv.transpose() * map.jac_inv;
}

Taus stabilization_taus(const Vec2& velocity, double rho, double mu, const Mat2& g, double dt,
                        double c_i) {
  const double nu = mu / rho;
  const double base = 4.0 / (dt * dt) + velocity.dot(g * velocity);
  Taus t;
  t.v = 1.0 / std::sqrt(base + c_i * nu * nu * g.squaredNorm());
  t.p = 1.0 / (g.trace() * t.v);
  t.phi = 1.0 / std::sqrt(base);
  return t;
}

FineScales fine_scale(const StrongResiduals& r, const Taus& taus, double rho) {
  return {-(taus.v / rho) * r.momentum, -taus.p * rho * r.continuity, -taus.phi * r.advection};
}

// ---------------------------------------------------------------------------------------------
// RbvmsSystem

RbvmsSystem::RbvmsSystem(std::shared_ptr<const Mesh2D> mesh, FluidPair fluids,
                         BoundaryConditions bc, SolverConfig config)
    : mesh_(std::move(mesh)), fluids_(fluids), bc_(bc), config_(std::move(config)) {
  if (!mesh_) throw std::invalid_argument("null mesh");
  fluids_.validate();
  config_.validate();
  const Mesh2D& m = *mesh_;
  const QuadTables& qt = quad_tables();
  const int ntri = m.triangle_count();

  geom_.resize(ntri);
  for (int t = 0; t < ntri; ++t) {
    ElementGeom& eg = geom_[t];
    const ElementMap map = ElementMap::of(m, t);
    eg.nodes = m.element_nodes(t);
    eg.area = 0.5 * std::abs(map.det);
    eg.g = map.jac_inv.transpose() * map.jac_inv;
    eg.tr_g = eg.g.trace();
    eg.g_dot_g = eg.g.squaredNorm();
    const Mat2 bt = map.jac_inv.transpose();
    for (int a = 0; a < 6; ++a) {
      for (int q = 0; q < kQuad; ++q) {
        const Vec2 d = bt * qt.grad[q][a];
        eg.dnx[a][q] = d.x();
        eg.dny[a][q] = d.y();
      }
      const Mat2 h = map.physical_hessian(qt.hess[a]);
      eg.hess[a] = {h(0, 0), h(0, 1), h(1, 1)};
    }
    if (config_.exact_curvature) {
      const QuadratureRule& rule = default_quadrature();
      for (int q = 0; q < kQuad; ++q) eg.kappa[q] = config_.exact_curvature(map.to_physical(rule.points[q]));
    }
  }

  // Constrained dofs.
  const int nnodes = m.p2_node_count();
  dirichlet_mask_.assign(static_cast<std::size_t>(kDofsPerNode) * nnodes, 0);
  bool any_natural = false;
  for (BoundarySide s : {kLeft, kRight, kBottom, kTop})
    any_natural = any_natural || bc_.on(s) == WallCondition::Natural;
  for (int n = 0; n < nnodes; ++n) {
    const std::uint8_t sides = m.node_sides(n);
    for (BoundarySide s : {kLeft, kRight, kBottom, kTop}) {
      if (!(sides & s)) continue;
      const WallCondition c = bc_.on(s);
      if (c == WallCondition::NoSlip) {
        dirichlet_mask_[kDofsPerNode * n + kVx] = 1;
        dirichlet_mask_[kDofsPerNode * n + kVy] = 1;
      } else if (c == WallCondition::FreeSlip) {
        const int normal = (s == kLeft || s == kRight) ? kVx : kVy;
        dirichlet_mask_[kDofsPerNode * n + normal] = 1;
      }
    }
  }
  if (!any_natural) {
    // Enclosed flow: pressure is defined up to a constant; pin the top-left corner.
    for (int n = 0; n < m.vertex_count(); ++n) {
      if ((m.node_sides(n) & (kLeft | kTop)) == (kLeft | kTop)) {
        pressure_node_ = n;
        break;
      }
    }
    if (pressure_node_ < 0) throw MeshError("no top-left corner vertex for the pressure reference");
    dirichlet_mask_[kDofsPerNode * pressure_node_ + kP] = 1;
  }
  for (int i = 0; i < static_cast<int>(dirichlet_mask_.size()); ++i)
    if (dirichlet_mask_[i]) dirichlet_.push_back(i);

  // Sparsity pattern and element scatter maps.
  const int ndof = kDofsPerNode * nnodes;
  std::vector<std::vector<int>> cols(ndof);
  for (int t = 0; t < ntri; ++t) {
    for (int a = 0; a < 6; ++a)
      for (int ca = 0; ca < kDofsPerNode; ++ca) {
        auto& row = cols[kDofsPerNode * geom_[t].nodes[a] + ca];
        for (int b = 0; b < 6; ++b)
          for (int cb = 0; cb < kDofsPerNode; ++cb)
            row.push_back(kDofsPerNode * geom_[t].nodes[b] + cb);
      }
  }
  std::vector<Eigen::Triplet<double>> trips;
  for (int r = 0; r < ndof; ++r) {
    auto& row = cols[r];
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
    for (int c : row) trips.emplace_back(r, c, 0.0);
  }
  pattern_.resize(ndof, ndof);
  pattern_.setFromTriplets(trips.begin(), trips.end());
  pattern_.makeCompressed();

  const int* outer = pattern_.outerIndexPtr();
  const int* inner = pattern_.innerIndexPtr();
  auto slot = [&](int r, int c) {
    const int* begin = inner + outer[r];
    const int* end = inner + outer[r + 1];
    return static_cast<int>(std::lower_bound(begin, end, c) - inner);
  };
  scatter_.resize(ntri);
  for (int t = 0; t < ntri; ++t) {
    for (int i = 0; i < kLocal; ++i) {
      const int r = kDofsPerNode * geom_[t].nodes[i / kDofsPerNode] + i % kDofsPerNode;
      for (int j = 0; j < kLocal; ++j) {
        const int c = kDofsPerNode * geom_[t].nodes[j / kDofsPerNode] + j % kDofsPerNode;
        scatter_[t][i * kLocal + j] = slot(r, c);
      }
    }
  }
}

void RbvmsSystem::apply_dirichlet(Eigen::VectorXd& u) const {
  for (int d : dirichlet_) u[d] = 0.0;
}

void RbvmsSystem::gather(int tri, const Eigen::VectorXd& u, double* out) const {
  const auto& nodes = geom_[tri].nodes;
  for (int a = 0; a < 6; ++a)
    for (int c = 0; c < kDofsPerNode; ++c) out[kDofsPerNode * a + c] = u[kDofsPerNode * nodes[a] + c];
}

template <bool kAbs>
void RbvmsSystem::element_kernel(const ElementGeom& eg, const double* u, const double* uo,
                                 double dt, double* r) const {
  const QuadTables& qt = quad_tables();
  const FluidPair& f = fluids_;
  const bool stab = config_.stabilized;
  const bool override_kappa = static_cast<bool>(config_.exact_curvature);
  std::fill(r, r + kLocal, 0.0);

  // Constant second derivatives of vx, vy, phi: (xx, xy, yy).
  double hvx[3] = {0, 0, 0}, hvy[3] = {0, 0, 0}, hphi[3] = {0, 0, 0};
  for (int a = 0; a < 6; ++a)
    for (int k = 0; k < 3; ++k) {
      hvx[k] += eg.hess[a][k] * u[4 * a + kVx];
      hvy[k] += eg.hess[a][k] * u[4 * a + kVy];
      hphi[k] += eg.hess[a][k] * u[4 * a + kPhi];
    }
  const double lap_vx = hvx[0] + hvx[2], lap_vy = hvy[0] + hvy[2];
  // grad(div v) = (vx_xx + vy_xy, vx_xy + vy_yy)
  const double gdiv_x = hvx[0] + hvy[1], gdiv_y = hvx[1] + hvy[2];
  Mat2 hess_phi;
  hess_phi << hphi[0], hphi[1], hphi[1], hphi[2];

  // Nodal Heaviside values for the balanced-force surface term.
  double h_nodal[6];
  bool band = false;
  for (int a = 0; a < 6; ++a) {
    h_nodal[a] = heaviside_eps(u[4 * a + kPhi], f.eps);
    band = band || (h_nodal[a] > 0.0 && h_nodal[a] < 1.0);
  }
  bool h_varies = band;
  for (int a = 1; a < 6 && !h_varies; ++a) h_varies = h_nodal[a] != h_nodal[0];

  const double rho_diff = f.rho1 - f.rho2, mu_diff = f.mu1 - f.mu2;

  for (int q = 0; q < kQuad; ++q) {
    const auto& nv = qt.value[q];
    double vx = 0, vy = 0, vox = 0, voy = 0, p = 0, phi = 0, phio = 0;
    double vx_x = 0, vx_y = 0, vy_x = 0, vy_y = 0, p_x = 0, p_y = 0, phi_x = 0, phi_y = 0;
    double hx = 0, hy = 0;
    for (int a = 0; a < 6; ++a) {
      const double n = nv[a], dx = eg.dnx[a][q], dy = eg.dny[a][q];
      const double* ua = u + 4 * a;
      vx += n * ua[kVx];
      vy += n * ua[kVy];
      vox += n * uo[4 * a + kVx];
      voy += n * uo[4 * a + kVy];
      p += n * ua[kP];
      phi += n * ua[kPhi];
      phio += n * uo[4 * a + kPhi];
      vx_x += dx * ua[kVx];
      vx_y += dy * ua[kVx];
      vy_x += dx * ua[kVy];
      vy_y += dy * ua[kVy];
      p_x += dx * ua[kP];
      p_y += dy * ua[kP];
      phi_x += dx * ua[kPhi];
      phi_y += dy * ua[kPhi];
      hx += dx * h_nodal[a];
      hy += dy * h_nodal[a];
    }
    const double heps = heaviside_eps(phi, f.eps);
    const double deps = delta_eps(phi, f.eps);
    const double rho = f.rho2 + heps * rho_diff;
    const double mu = f.mu2 + heps * mu_diff;

    // Surface tension force density.
    double fsx = 0, fsy = 0;
    if (config_.csf_form == CsfForm::ChainRule) {
      hx = deps * phi_x;
      hy = deps * phi_y;
      h_varies = deps > 0.0;
    }
    if (h_varies && f.sigma != 0.0 && (hx != 0.0 || hy != 0.0)) {
      const double kappa =
          override_kappa ? eg.kappa[q] : curvature_from_jet(Vec2(phi_x, phi_y), hess_phi).kappa;
      fsx = f.sigma * kappa * hx;
      fsy = f.sigma * kappa * hy;
    }
    const double fgy = -rho * f.g;

    const double ax = (vx - vox) / dt, ay = (vy - voy) / dt;
    const double cx = vx * vx_x + vy * vx_y, cy = vx * vy_x + vy * vy_y;
    const double div = vx_x + vy_y;
    const double adv = (phi - phio) / dt + vx * phi_x + vy * phi_y;

    const double w = qt.weight[q] * eg.area;

    double vpx = 0, vpy = 0, pp = 0, phip = 0;
    if (stab) {
      // Viscous divergence with variable viscosity.
      const double dmu = mu_diff * deps;
      const double mux = dmu * phi_x, muy = dmu * phi_y;
      const double visc_x = mu * (lap_vx + gdiv_x) + mux * (2 * vx_x) + muy * (vx_y + vy_x);
      const double visc_y = mu * (lap_vy + gdiv_y) + mux * (vy_x + vx_y) + muy * (2 * vy_y);
      const double rmx = rho * (ax + cx) - visc_x + p_x - fsx;
      const double rmy = rho * (ay + cy) - visc_y + p_y - fgy - fsy;
      const double base = 4.0 / (dt * dt) + vx * (eg.g(0, 0) * vx + eg.g(0, 1) * vy) +
                          vy * (eg.g(1, 0) * vx + eg.g(1, 1) * vy);
      const double nu = mu / rho;
      const double tau_v = 1.0 / std::sqrt(base + config_.c_i * nu * nu * eg.g_dot_g);
      const double tau_p = 1.0 / (eg.tr_g * tau_v);
      const double tau_phi = 1.0 / std::sqrt(base);
      vpx = -(tau_v / rho) * rmx;
      vpy = -(tau_v / rho) * rmy;
      pp = -tau_p * rho * div;
      phip = -tau_phi * adv;
    }
    // (v' . grad) v
    const double vgx = vpx * vx_x + vpy * vx_y, vgy = vpx * vy_x + vpy * vy_y;

    for (int a = 0; a < 6; ++a) {
      const double n = nv[a], dx = eg.dnx[a][q], dy = eg.dny[a][q];
      double* ra = r + 4 * a;
      // Momentum, x.
      add<kAbs>(ra[kVx], w * n * rho * (ax + cx));
      add<kAbs>(ra[kVx], w * mu * (dx * 2 * vx_x + dy * (vx_y + vy_x)));
      add<kAbs>(ra[kVx], -w * p * dx);
      add<kAbs>(ra[kVx], -w * n * fsx);
      // Momentum, y.
      add<kAbs>(ra[kVy], w * n * rho * (ay + cy));
      add<kAbs>(ra[kVy], w * mu * (dx * (vy_x + vx_y) + dy * 2 * vy_y));
      add<kAbs>(ra[kVy], -w * p * dy);
      add<kAbs>(ra[kVy], -w * n * fgy);
      add<kAbs>(ra[kVy], -w * n * fsy);
      // Mass.
      add<kAbs>(ra[kP], -w * n * div);
      // Level set.
      add<kAbs>(ra[kPhi], w * n * adv);
      if (stab) {
        const double vgrad_n = vx * dx + vy * dy;
        add<kAbs>(ra[kVx], -w * rho * vgrad_n * vpx);
        add<kAbs>(ra[kVy], -w * rho * vgrad_n * vpy);
        add<kAbs>(ra[kVx], w * rho * n * vgx);
        add<kAbs>(ra[kVy], w * rho * n * vgy);
        add<kAbs>(ra[kVx], -w * rho * (dx * vpx * vpx + dy * vpx * vpy));
        add<kAbs>(ra[kVy], -w * rho * (dx * vpy * vpx + dy * vpy * vpy));
        add<kAbs>(ra[kVx], -w * dx * pp);
        add<kAbs>(ra[kVy], -w * dy * pp);
        add<kAbs>(ra[kP], w * (dx * vpx + dy * vpy));
        add<kAbs>(ra[kPhi], -w * vgrad_n * phip);
      }
    }
  }
}

void RbvmsSystem::check_finite(int tri, const double* r) const {
  static constexpr const char* kGroups[kDofsPerNode] = {"momentum-x", "momentum-y", "mass",
                                                        "level-set"};
  for (int i = 0; i < kLocal; ++i)
    if (!std::isfinite(r[i])) throw AssemblyError(tri, kGroups[i % kDofsPerNode]);
}

std::array<double, 24> RbvmsSystem::element_residual(int tri, const Eigen::VectorXd& u,
                                                     const Eigen::VectorXd& u_old,
                                                     double dt) const {
  double ul[kLocal], uol[kLocal];
  gather(tri, u, ul);
  gather(tri, u_old, uol);
  std::array<double, 24> r{};
  element_kernel<false>(geom_[tri], ul, uol, dt, r.data());
  return r;
}

Eigen::VectorXd RbvmsSystem::residual(const Eigen::VectorXd& u, const Eigen::VectorXd& u_old,
                                      double dt) const {
  if (u.size() != dof_count() || u_old.size() != dof_count())
    throw std::invalid_argument("state size does not match the system mesh");
  if (!(dt > 0)) throw std::invalid_argument("dt must be positive");
  Eigen::VectorXd res = Eigen::VectorXd::Zero(dof_count());
  double ul[kLocal], uol[kLocal], r[kLocal];
  for (int t = 0; t < static_cast<int>(geom_.size()); ++t) {
    gather(t, u, ul);
    gather(t, u_old, uol);
    element_kernel<false>(geom_[t], ul, uol, dt, r);
    check_finite(t, r);
    const auto& nodes = geom_[t].nodes;
    for (int i = 0; i < kLocal; ++i) res[kDofsPerNode * nodes[i / 4] + i % 4] += r[i];
  }
  // Constrained rows: value minus the (zero) prescribed value.
  for (int d : dirichlet_) res[d] = u[d];
  return res;
}

double RbvmsSystem::term_magnitude(const Eigen::VectorXd& u, const Eigen::VectorXd& u_old,
                                   double dt) const {
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(dof_count());
  double ul[kLocal], uol[kLocal], r[kLocal];
  for (int t = 0; t < static_cast<int>(geom_.size()); ++t) {
    gather(t, u, ul);
    gather(t, u_old, uol);
    element_kernel<true>(geom_[t], ul, uol, dt, r);
    const auto& nodes = geom_[t].nodes;
    for (int i = 0; i < kLocal; ++i) acc[kDofsPerNode * nodes[i / 4] + i % 4] += r[i];
  }
  return masked_norm(acc);
}

SparseMatrix RbvmsSystem::jacobian(const Eigen::VectorXd& u, const Eigen::VectorXd& u_old,
                                   double dt) const {
  if (u.size() != dof_count() || u_old.size() != dof_count())
    throw std::invalid_argument("state size does not match the system mesh");
  SparseMatrix jac = pattern_;
  double* values = jac.valuePtr();
  std::fill(values, values + jac.nonZeros(), 0.0);
  const double delta = config_.nd_perturbation;
  const int ntri = static_cast<int>(geom_.size());

  std::vector<std::array<double, kLocal * kLocal>> local(ntri);
#pragma omp parallel for schedule(static)
  for (int t = 0; t < ntri; ++t) {
    double ul[kLocal], uol[kLocal], r0[kLocal], r1[kLocal];
    gather(t, u, ul);
    gather(t, u_old, uol);
    element_kernel<false>(geom_[t], ul, uol, dt, r0);
    auto& block = local[t];
    for (int j = 0; j < kLocal; ++j) {
      const double saved = ul[j];
      ul[j] = saved + delta;
      element_kernel<false>(geom_[t], ul, uol, dt, r1);
      ul[j] = saved;
      for (int i = 0; i < kLocal; ++i) block[i * kLocal + j] = (r1[i] - r0[i]) / delta;
    }
  }
  for (int t = 0; t < ntri; ++t) {
    check_finite(t, local[t].data());
    const auto& map = scatter_[t];
    for (int k = 0; k < kLocal * kLocal; ++k) values[map[k]] += local[t][k];
  }

  const int* outer = jac.outerIndexPtr();
  const int* inner = jac.innerIndexPtr();
  for (int d : dirichlet_) {
    for (int k = outer[d]; k < outer[d + 1]; ++k) values[k] = inner[k] == d ? 1.0 : 0.0;
  }
  return jac;
}

double RbvmsSystem::masked_norm(const Eigen::VectorXd& r) const {
  double s = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i)
    if (!dirichlet_mask_[i]) s += r[i] * r[i];
  return std::sqrt(s);
}

NewtonReport RbvmsSystem::newton_solve(Eigen::VectorXd& u, const Eigen::VectorXd& u_old,
                                       double dt) const {
  NewtonReport report;
  apply_dirichlet(u);
  Eigen::VectorXd res = residual(u, u_old, dt);
  const double r0 = masked_norm(res);
  // Differences below this are round-off in the assembled sums.
  const double floor = 1e-12 * term_magnitude(u, u_old, dt);
  report.initial_norm = report.final_norm = r0;
  if (r0 <= floor) {
    report.status = NewtonReport::Status::Converged;
    return report;
  }

  KrylovOptions kopt;
  kopt.rel_tol = config_.linear_tol;
  kopt.restart = config_.gmres_restart;
  kopt.max_iters = config_.gmres_max_iters;
  kopt.ilu_droptol = config_.ilu_droptol;
  kopt.ilu_fill = config_.ilu_fill;

  // The preconditioner from the first iteration is reused while it keeps GMRES converging.
  IlutGmres linear(kopt);
  double previous = r0;
  for (int it = 1; it <= config_.max_newton_iters; ++it) {
    const SparseMatrix jac = jacobian(u, u_old, dt);
    const Eigen::VectorXd rhs = -res;
    Eigen::VectorXd step = Eigen::VectorXd::Zero(u.size());
    const bool fresh = !linear.factored();
    if (fresh) linear.factor(jac);
    KrylovResult kr = linear.solve(jac, rhs, step);
    if (!kr.converged && !fresh) {
      report.linear_iterations += kr.iterations;
      linear.factor(jac);
      step.setZero();
      kr = linear.solve(jac, rhs, step);
    }
    report.linear_iterations += kr.iterations;
    if (!kr.converged) ++report.linear_failures;
    u += step;
    apply_dirichlet(u);
    report.iterations = it;
    try {
      res = residual(u, u_old, dt);
    } catch (const AssemblyError&) {
      report.status = NewtonReport::Status::Diverged;
      report.final_norm = std::numeric_limits<double>::infinity();
      return report;
    }
    const double norm = masked_norm(res);
    report.final_norm = norm;
    if (!std::isfinite(norm)) {
      report.status = NewtonReport::Status::Diverged;
      return report;
    }
    if (norm <= config_.newton_tol * r0 || norm <= floor) {
      report.status = NewtonReport::Status::Converged;
      return report;
    }
    if (norm > previous) {
      report.status = NewtonReport::Status::Diverged;
      return report;
    }
    previous = norm;
  }
  report.status = NewtonReport::Status::MaxIterations;
  return report;
}

double RbvmsSystem::fluid2_mass(const Eigen::VectorXd& u) const {
  const QuadTables& qt = quad_tables();
  double total = 0.0;
  for (const auto& eg : geom_) {
    for (int q = 0; q < kQuad; ++q) {
      double phi = 0.0;
      for (int a = 0; a < 6; ++a) phi += qt.value[q][a] * u[kDofsPerNode * eg.nodes[a] + kPhi];
      total += qt.weight[q] * eg.area * (1.0 - heaviside_eps(phi, fluids_.eps));
    }
  }
  return total;
}

// ---------------------------------------------------------------------------------------------
// Free functions

namespace {

void check_pair(const CoupledState& a, const CoupledState& b) {
  if (!a.consistent() || !b.consistent() || a.mesh.get() != b.mesh.get())
    throw std::invalid_argument("states must share one mesh");
}

}  // namespace

Eigen::VectorXd assemble_residual(const CoupledState& state_new, const CoupledState& state_old,
                                  double dt, const FluidPair& fluids, const BoundaryConditions& bc,
                                  const SolverConfig& config) {
  check_pair(state_new, state_old);
  const RbvmsSystem system(state_new.mesh, fluids, bc, config);
  return system.residual(state_new.pack(), state_old.pack(), dt);
}

SparseMatrix assemble_jacobian_nd(const CoupledState& state_new, const CoupledState& state_old,
                                  double dt, const FluidPair& fluids, const BoundaryConditions& bc,
                                  const SolverConfig& config) {
  check_pair(state_new, state_old);
  const RbvmsSystem system(state_new.mesh, fluids, bc, config);
  return system.jacobian(state_new.pack(), state_old.pack(), dt);
}

IncrementResult advance_increment(const RbvmsSystem& system, const CoupledState& old,
                                  double dt_current) {
  const SolverConfig& cfg = system.config();
  if (old.mesh.get() != &system.mesh()) throw std::invalid_argument("state is on another mesh");
  if (!(dt_current > 0)) throw std::invalid_argument("dt must be positive");
  const double dt_min = cfg.dt_max * std::ldexp(1.0, -20);
  double dt = std::min(dt_current, cfg.dt_max);

  const Eigen::VectorXd u_old = old.pack();
  IncrementResult result;
  for (;;) {
    Eigen::VectorXd u = u_old;
    NewtonReport report = system.newton_solve(u, u_old, dt);
    result.total_newton_iterations += report.iterations;
    result.total_linear_iterations += report.linear_iterations;
    if (report.converged()) {
      result.newton = report;
      result.dt_used = dt;
      result.dt_next = result.halvings == 0 ? std::min(cfg.dt_growth * dt, cfg.dt_max) : dt;
      result.state = CoupledState::unpack(system.mesh_ptr(), u);
      break;
    }
    dt *= cfg.dt_shrink;
    ++result.halvings;
    if (dt < dt_min) {
      std::ostringstream msg;
      msg << "time step underflow: dt = " << dt << " after " << result.halvings
          << " halvings (last Newton status " << to_string(report.status) << ")";
      throw TimeStepUnderflow(msg.str());
    }
  }

  Reinitialization reinit = reinitialize(result.state.phi, system.mesh(), system.fluids().eps);
  result.reinit_skipped = reinit.interface_empty;
  result.state.phi = std::move(reinit.phi);
  return result;
}

}  // namespace twophase
