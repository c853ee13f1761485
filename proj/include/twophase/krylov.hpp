/// \file krylov.hpp
/// \brief Restarted right-preconditioned GMRES with an incomplete LU (threshold) preconditioner.

#ifndef TWOPHASE_KRYLOV_HPP
#define TWOPHASE_KRYLOV_HPP

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>

namespace twophase {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct KrylovOptions {
  double rel_tol = 1e-10;
  int restart = 200;
  int max_iters = 2000;
  double ilu_droptol = 1e-7;
  int ilu_fill = 30;
};

struct KrylovResult {
  int iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
};

/// GMRES with a stored ILUT factorization that may be older than the matrix being solved.
class IlutGmres {
 public:
  explicit IlutGmres(KrylovOptions options = {}) : options_(options) {}

  /// Factors the preconditioner from a; returns false if the factorization failed.
  bool factor(const SparseMatrix& a);
  bool factored() const { return factored_; }
  /// Solves A x = b from the given x using the current preconditioner (identity if none).
  KrylovResult solve(const SparseMatrix& a, const Eigen::VectorXd& b, Eigen::VectorXd& x) const;

  const KrylovOptions& options() const { return options_; }

 private:
  KrylovOptions options_;
  Eigen::IncompleteLUT<double> ilu_;
  bool factored_ = false;
};

/// Factors and solves A x = b starting from the given x. The residual reported is the true
/// residual ||b - A x|| / ||b||.
KrylovResult gmres_ilut(const SparseMatrix& a, const Eigen::VectorXd& b, Eigen::VectorXd& x,
                        const KrylovOptions& options);

}  // namespace twophase

#endif  // TWOPHASE_KRYLOV_HPP
