#include "twophase/krylov.hpp"

#include <cmath>
#include <vector>

namespace twophase {

bool IlutGmres::factor(const SparseMatrix& a) {
  ilu_.setDroptol(options_.ilu_droptol);
  ilu_.setFillfactor(options_.ilu_fill);
  ilu_.compute(a);
  factored_ = ilu_.info() == Eigen::Success;
  return factored_;
}

KrylovResult gmres_ilut(const SparseMatrix& a, const Eigen::VectorXd& b, Eigen::VectorXd& x,
                        const KrylovOptions& options) {
  IlutGmres solver(options);
  solver.factor(a);
  return solver.solve(a, b, x);
}

KrylovResult IlutGmres::solve(const SparseMatrix& a, const Eigen::VectorXd& b,
                              Eigen::VectorXd& x) const {
  using Eigen::VectorXd;
  const KrylovOptions& options = options_;
  KrylovResult result;
  const Eigen::Index n = b.size();
  if (x.size() != n) x = VectorXd::Zero(n);
  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    x.setZero();
    result.converged = true;
    return result;
  }

  auto precond = [&](const VectorXd& v) -> VectorXd {
    return factored_ ? VectorXd(ilu_.solve(v)) : v;
  };

  const int m = options.restart;
  std::vector<VectorXd> basis(m + 1);
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(m + 1, m);
  VectorXd cs(m), sn(m), g(m + 1);

  VectorXd r = b - a * x;
  double rnorm = r.norm();
  while (result.iterations < options.max_iters) {
    result.relative_residual = rnorm / bnorm;
    if (result.relative_residual <= options.rel_tol) {
      result.converged = true;
      return result;
    }
    basis[0] = r / rnorm;
    g.setZero();
    g(0) = rnorm;
    int k = 0;
    for (; k < m && result.iterations < options.max_iters; ++k) {
      ++result.iterations;
      VectorXd w = a * precond(basis[k]);
      // Modified Gram-Schmidt.
      for (int i = 0; i <= k; ++i) {
        h(i, k) = w.dot(basis[i]);
        w -= h(i, k) * basis[i];
      }
      h(k + 1, k) = w.norm();
      basis[k + 1] = h(k + 1, k) > 0 ? VectorXd(w / h(k + 1, k)) : VectorXd(w);
      for (int i = 0; i < k; ++i) {
        const double tmp = cs(i) * h(i, k) + sn(i) * h(i + 1, k);
        h(i + 1, k) = -sn(i) * h(i, k) + cs(i) * h(i + 1, k);
        h(i, k) = tmp;
      }
      const double denom = std::hypot(h(k, k), h(k + 1, k));
      cs(k) = denom > 0 ? h(k, k) / denom : 1.0;
      sn(k) = denom > 0 ? h(k + 1, k) / denom : 0.0;
      h(k, k) = denom;
      h(k + 1, k) = 0.0;
      g(k + 1) = -sn(k) * g(k);
      g(k) = cs(k) * g(k);
      if (std::abs(g(k + 1)) / bnorm <= options.rel_tol || denom == 0.0) {
        ++k;
        break;
      }
    }
    // Back substitution for the least-squares coefficients.
    VectorXd y = VectorXd::Zero(k);
    for (int i = k - 1; i >= 0; --i) {
      double s = g(i);
      for (int j = i + 1; j < k; ++j) s -= h(i, j) * y(j);
      y(i) = h(i, i) != 0.0 ? s / h(i, i) : 0.0;
    }
    VectorXd update = VectorXd::Zero(n);
    for (int i = 0; i < k; ++i) update += y(i) * basis[i];
    x += precond(update);
    r = b - a * x;
    const double new_norm = r.norm();
    if (!std::isfinite(new_norm)) break;
    // Stagnation: a full cycle without progress will not converge.
    if (new_norm >= rnorm && k == m) {
      rnorm = new_norm;
      break;
    }
    rnorm = new_norm;
  }
  result.relative_residual = rnorm / bnorm;
  result.converged = result.relative_residual <= options.rel_tol;
  return result;
}

}  // namespace twophase
