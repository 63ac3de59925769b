#pragma once

// Convex quadratic programs by a primal active-set method:
//   minimize ½ xᵀHx + fᵀx  subject to  E x = e,  G x ≥ g.
// H must be positive semidefinite and positive definite on the null space of
// the working constraints; otherwise a small ridge is added and reported.

#include <Eigen/Dense>

#include <vector>

namespace icpp {

struct QpProblem {
  Eigen::MatrixXd H;
  Eigen::VectorXd f;
  Eigen::MatrixXd E;   // may have zero rows
  Eigen::VectorXd e;
  Eigen::MatrixXd G;   // may have zero rows
  Eigen::VectorXd g;
};

struct QpOptions {
  double tol = 1e-10;
  int max_iters = 1000;
  double ridge = 1e-10;
};

struct QpResult {
  Eigen::VectorXd x;
  Eigen::VectorXd eq_multipliers;
  Eigen::VectorXd ineq_multipliers;   // one per row of G, zero when inactive
  std::vector<int> working_set;
  double kkt_residual = 0.0;
  int iterations = 0;
  bool ridge_added = false;
  bool converged = false;
};

// `x0` must be feasible; throws Error(InfeasibleStart) otherwise.
QpResult solve_qp(const QpProblem& problem, const Eigen::VectorXd& x0, const QpOptions& options = {});

// min ‖Bx − y‖² subject to x ≥ 0.
Eigen::VectorXd nnls(const Eigen::MatrixXd& B, const Eigen::VectorXd& y);

}  // namespace icpp
