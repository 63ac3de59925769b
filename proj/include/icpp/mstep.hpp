#pragma once

// M-steps: constrained concave maximization for the component coefficients and
// the Gamma score parameters.

#include "icpp/model.hpp"

#include <span>
#include <vector>

namespace icpp {

struct InnerOptions {
  double tol = 1e-6;
  int max_iters = 500;
};

// One component's subproblem, with W = Σ_p w_p:
//   maximize  (1/W) [ Σ_p w_p log(b_pᵀ c) − penalty_scale · cᵀ Ω c ]
//   subject to aᵀc = 1, c ≥ 0.
// The 1/W normalisation makes the tolerance scale-free.
struct ComponentProblem {
  const Eigen::MatrixXd* rows = nullptr;   // N × q basis rows
  Eigen::VectorXd weights;                 // N responsibilities
  Eigen::VectorXd a;
  const Eigen::MatrixXd* omega = nullptr;
  double penalty_scale = 0.0;              // n·ζ
};

struct ComponentSolve {
  Eigen::VectorXd c;
  double objective = 0.0;
  double kkt_residual = 0.0;
  int iterations = 0;
  bool converged = false;
  bool degenerate = false;
};

double component_objective(const ComponentProblem& prob, const Eigen::VectorXd& c);
Eigen::VectorXd component_gradient(const ComponentProblem& prob, const Eigen::VectorXd& c);
// Stationarity residual after removing the aᵀc = 1 multiplier: |reduced
// gradient| on free coordinates, its positive part on coordinates at zero.
double kkt_residual(const Eigen::VectorXd& c, const Eigen::VectorXd& grad, const Eigen::VectorXd& a);

// Spectral projected-gradient ascent with Armijo backtracking along the
// projection arc. Throws InfeasibleStart if `start` is not feasible.
ComponentSolve maximize_component(const ComponentProblem& prob, const Eigen::VectorXd& start,
                                  const InnerOptions& options);

struct ComponentsUpdate {
  Eigen::MatrixXd coeffs;
  std::vector<ComponentSolve> solves;
  std::vector<bool> degenerate;   // Σ responsibilities < 1e-3
};

inline constexpr double kStarvationMass = 1e-3;

// Stacks responsibilities from `stats` in design order.
ComponentsUpdate m_step_components(const EStepStats& stats, const PatternDesign& design,
                                   const BasisSystem& basis, double zeta,
                                   const Eigen::MatrixXd& start, const InnerOptions& options = {});

ComponentsUpdate m_step_components(const EStepStats& stats, std::span<const PointPattern> patterns,
                                   const BasisSystem& basis, double zeta,
                                   const Eigen::MatrixXd& start, const InnerOptions& options = {});

// Σ_i Σ_k [ (α_k−1) E log U_ik − E U_ik / β − α_k log β − log Γ(α_k) ]
double gamma_objective(const EStepStats& stats, const ScoreParams& params);

// Maximizes gamma_objective. β is profiled out in closed form
// (β = Σ E U / (n Σα)) and α is updated by safeguarded Newton steps on the
// profile. Throws DegenerateStatistics on Jensen violations or when the
// averaged E log U equals log of the averaged E U for every component.
ScoreParams m_step_gamma(const EStepStats& stats, const InnerOptions& options = {});

}  // namespace icpp
