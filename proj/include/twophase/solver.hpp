/// \file solver.hpp
/// \brief Monolithic backward-Euler residual-based variational multiscale (RBVMS) solver for
///        the coupled velocity / pressure / level-set system on equal-order P2 elements.
///
/// Unknowns are stored node-interleaved: dof = 4 * node + component with components
/// (vx, vy, p, phi). The Jacobian is built element by element with forward differences
/// of the element residual and solved with ILUT-preconditioned GMRES inside Newton's
/// method; the time-step controller halves dt on Newton failure and grows it by a fixed
/// factor after first-try successes.

#ifndef TWOPHASE_SOLVER_HPP
#define TWOPHASE_SOLVER_HPP

#include "twophase/krylov.hpp"
#include "twophase/levelset.hpp"
#include "twophase/mesh.hpp"
#include "twophase/p2.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <array>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace twophase {

inline constexpr int kDofsPerNode = 4;
enum Component : int { kVx = 0, kVy = 1, kP = 2, kPhi = 3 };

enum class WallCondition {
  NoSlip,    ///< v = 0
  FreeSlip,  ///< v.n = 0, zero tangential traction
  Natural,   ///< homogeneous Neumann
};

struct BoundaryConditions {
  WallCondition left = WallCondition::NoSlip;
  WallCondition right = WallCondition::NoSlip;
  WallCondition bottom = WallCondition::NoSlip;
  WallCondition top = WallCondition::NoSlip;

  WallCondition on(BoundarySide side) const;
  static BoundaryConditions all(WallCondition c) { return {c, c, c, c}; }
};

struct SolverConfig {
  double dt_max = 0.01;
  double newton_tol = 1e-6;
  double linear_tol = 1e-10;
  double nd_perturbation = 1e-8;
  int max_newton_iters = 10;
  double c_i = 36.0;
  double dt_growth = 1.5;
  double dt_shrink = 0.5;
  int gmres_restart = 200;
  int gmres_max_iters = 2000;
  double ilu_droptol = 1e-7;
  int ilu_fill = 30;
  /// Fine-scale terms on/off; off leaves the plain Galerkin form (used by tests).
  bool stabilized = true;
  CsfForm csf_form = CsfForm::NodalHeaviside;
  /// When set, replaces the curvature computed from phi_h.
  CurvatureOverride exact_curvature;

  void validate() const;
};

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values during assembly; the message names the element and term group.
class AssemblyError : public SolverError {
 public:
  AssemblyError(int element, std::string group);
  int element() const { return element_; }
  const std::string& group() const { return group_; }

 private:
  int element_;
  std::string group_;
};

/// Time step fell below dt_max * 2^-20 without a converged Newton solve.
class TimeStepUnderflow : public SolverError {
 public:
  using SolverError::SolverError;
};

/// {velocity, pressure, level set} on one mesh at one time level.
struct CoupledState {
  std::shared_ptr<const Mesh2D> mesh;
  P2Field vx, vy, p, phi;

  CoupledState() = default;
  explicit CoupledState(std::shared_ptr<const Mesh2D> m);

  Eigen::VectorXd pack() const;
  static CoupledState unpack(std::shared_ptr<const Mesh2D> m, const Eigen::VectorXd& u);
  /// Largest nodal velocity magnitude.
  double max_speed() const;
  bool consistent() const;
};

/// G = B^T B with B the inverse of the reference-to-physical Jacobian.
Mat2 element_metric_G(const Mesh2D& mesh, int tri);

struct Taus {
  double v = 0.0;    ///< momentum
  double p = 0.0;    ///< continuity
  double phi = 0.0;  ///< level-set advection
};

Taus stabilization_taus(const Vec2& velocity, double rho, double mu, const Mat2& g, double dt,
                        double c_i);

/// Strong-form residuals of the coarse-scale equations at a point.
struct StrongResiduals {
  Vec2 momentum = Vec2::Zero();
  double continuity = 0.0;  ///< div v
  double advection = 0.0;   ///< d(phi)/dt + v . grad(phi)
};

struct FineScales {
  Vec2 v = Vec2::Zero();
  double p = 0.0;
  double phi = 0.0;
};

FineScales fine_scale(const StrongResiduals& r, const Taus& taus, double rho);

struct NewtonReport {
  enum class Status { Converged, MaxIterations, Diverged };
  Status status = Status::MaxIterations;
  int iterations = 0;
  double initial_norm = 0.0;
  double final_norm = 0.0;
  int linear_iterations = 0;
  int linear_failures = 0;

  bool converged() const { return status == Status::Converged; }
};

const char* to_string(NewtonReport::Status s);

/// Discrete system on a fixed mesh: residual, numerical Jacobian and Newton solve.
class RbvmsSystem {
 public:
  RbvmsSystem(std::shared_ptr<const Mesh2D> mesh, FluidPair fluids, BoundaryConditions bc,
              SolverConfig config);

  const Mesh2D& mesh() const { return *mesh_; }
  const std::shared_ptr<const Mesh2D>& mesh_ptr() const { return mesh_; }
  const FluidPair& fluids() const { return fluids_; }
  const SolverConfig& config() const { return config_; }
  const BoundaryConditions& boundary_conditions() const { return bc_; }
  int dof_count() const { return kDofsPerNode * mesh_->p2_node_count(); }

  /// Sorted constrained dofs (velocity walls and the pressure reference node).
  const std::vector<int>& dirichlet_dofs() const { return dirichlet_; }
  bool is_dirichlet(int dof) const { return dirichlet_mask_[dof] != 0; }
  /// P2 node whose pressure is pinned to zero, or -1 when some wall is natural.
  int pressure_reference_node() const { return pressure_node_; }
  void apply_dirichlet(Eigen::VectorXd& u) const;

  /// Global residual; constrained rows hold (value - prescribed).
  Eigen::VectorXd residual(const Eigen::VectorXd& u, const Eigen::VectorXd& u_old,
                           double dt) const;
  /// Forward-difference Jacobian, constrained rows replaced by identity rows.
  SparseMatrix jacobian(const Eigen::VectorXd& u, const Eigen::VectorXd& u_old, double dt) const;
  /// Euclidean norm over unconstrained rows.
  double masked_norm(const Eigen::VectorXd& r) const;
  /// Norm of the per-row sums of absolute term contributions; sets the round-off floor.
  double term_magnitude(const Eigen::VectorXd& u, const Eigen::VectorXd& u_old, double dt) const;

  NewtonReport newton_solve(Eigen::VectorXd& u, const Eigen::VectorXd& u_old, double dt) const;

  /// Unconstrained element residual (24 entries, node-interleaved).
  std::array<double, 24> element_residual(int tri, const Eigen::VectorXd& u,
                                          const Eigen::VectorXd& u_old, double dt) const;

  /// Integral of (1 - H_eps(phi)), the area of fluid 2.
  double fluid2_mass(const Eigen::VectorXd& u) const;

 private:
  struct ElementGeom {
    std::array<int, 6> nodes{};
    double area = 0.0;
    Mat2 g;
    double tr_g = 0.0;
    double g_dot_g = 0.0;
    std::array<std::array<double, 12>, 6> dnx{};  ///< physical d/dx of N_a at each point
    std::array<std::array<double, 12>, 6> dny{};
    std::array<std::array<double, 3>, 6> hess{};  ///< (xx, xy, yy), constant per element
    std::array<double, 12> kappa{};               ///< prescribed curvature at each point
  };

  template <bool kAbs>
  void element_kernel(const ElementGeom& eg, const double* u, const double* uo, double dt,
                      double* r) const;
  void gather(int tri, const Eigen::VectorXd& u, double* out) const;
  void check_finite(int tri, const double* r) const;

  std::shared_ptr<const Mesh2D> mesh_;
  FluidPair fluids_;
  BoundaryConditions bc_;
  SolverConfig config_;
  std::vector<ElementGeom> geom_;
  std::vector<int> dirichlet_;
  std::vector<char> dirichlet_mask_;
  int pressure_node_ = -1;
  SparseMatrix pattern_;
  std::vector<std::array<int, 576>> scatter_;
};

Eigen::VectorXd assemble_residual(const CoupledState& state_new, const CoupledState& state_old,
                                  double dt, const FluidPair& fluids, const BoundaryConditions& bc,
                                  const SolverConfig& config = {});
SparseMatrix assemble_jacobian_nd(const CoupledState& state_new, const CoupledState& state_old,
                                  double dt, const FluidPair& fluids, const BoundaryConditions& bc,
                                  const SolverConfig& config = {});

struct IncrementResult {
  CoupledState state;
  double dt_used = 0.0;
  double dt_next = 0.0;
  int halvings = 0;
  NewtonReport newton;           ///< report of the accepted attempt
  int total_newton_iterations = 0;
  int total_linear_iterations = 0;
  bool reinit_skipped = false;   ///< the zero level vanished; phi left untouched
};

/// One accepted backward-Euler increment from `old`, with step halving on Newton failure
/// and reinitialization of phi afterwards. Throws TimeStepUnderflow.
IncrementResult advance_increment(const RbvmsSystem& system, const CoupledState& old,
                                  double dt_current);

}  // namespace twophase

#endif  // TWOPHASE_SOLVER_HPP
