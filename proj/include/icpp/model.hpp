#pragma once

// Model parameters θ = (C, α, β), replicated point patterns and the likelihood
// quantities of the independent-component Cox model
//   Λ(t) = Σ_k U_k φ_k(t),  φ_k = c_kᵀ β(t),  U_k ~ Gamma(α_k, scale β).

#include "icpp/basis.hpp"
#include "icpp/geometry.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace icpp {

struct PointPattern {
  std::string id;
  std::vector<Point> points;

  std::size_t size() const { return points.size(); }
};

// Shape–scale Gamma parameters: E[U_k] = α_k β.
struct ScoreParams {
  Eigen::VectorXd alphas;
  double beta = 1.0;

  std::size_t size() const { return static_cast<std::size_t>(alphas.size()); }
  double mean(std::size_t k) const { return alphas[static_cast<Eigen::Index>(k)] * beta; }
  // Posterior scale β/(1+β) of U_k given the labels.
  double posterior_scale() const { return beta / (1.0 + beta); }
};

struct ModelParams {
  Eigen::MatrixXd coeffs;  // p × q, row k = c_kᵀ
  ScoreParams scores;

  std::size_t components() const { return static_cast<std::size_t>(coeffs.rows()); }
  std::size_t basis_size() const { return static_cast<std::size_t>(coeffs.cols()); }

  // Reorders components by E[U_k] descending, ties broken by the larger
  // coefficient row in lexicographic order. Returns the applied permutation:
  // new index i holds old component perm[i].
  std::vector<std::size_t> canonicalize();
};

// Checks aᵀc_k = 1 ± tol, C ≥ 0, α > 0, β > 0 and dimensions against `basis`.
void validate(const ModelParams& model, const BasisSystem& basis, double tol = 1e-8);

// Projects each coefficient row onto {c ≥ 0, aᵀc = 1} in the Euclidean norm.
Eigen::VectorXd project_to_constraint(const Eigen::VectorXd& c, const Eigen::VectorXd& a);

// Basis rows for every point of a set of patterns, stacked in pattern order.
struct PatternDesign {
  Eigen::MatrixXd rows;               // N × q, column-major
  std::vector<std::size_t> offsets;   // n + 1 entries; pattern i owns [offsets[i], offsets[i+1])

  std::size_t patterns() const { return offsets.empty() ? 0 : offsets.size() - 1; }
  std::size_t points(std::size_t i) const { return offsets[i + 1] - offsets[i]; }
};

PatternDesign build_design(const BasisSystem& basis, std::span<const PointPattern> patterns);

// N × p matrix of φ_k evaluated at the design rows.
Eigen::MatrixXd component_matrix(const Eigen::MatrixXd& design_rows, const Eigen::MatrixXd& coeffs);

// φ_k at the points (k is 0-based). Throws for k ≥ p or points outside B.
Eigen::VectorXd component_density(const ModelParams& model, const BasisSystem& basis, std::size_t k,
                                  std::span<const Point> points);

// Λ(t) = Σ_k u_k φ_k(t). Throws for negative scores.
Eigen::VectorXd intensity(const ModelParams& model, const BasisSystem& basis,
                          const Eigen::VectorXd& u, std::span<const Point> points);

// log[ e^{−Σu} ∏_j u_{y_j} φ_{y_j}(t_j) ] + Σ_k log Gamma(u_k; α_k, β).
// Labels are 0-based. Returns −∞ when some φ_{y_j}(t_j) = 0.
double complete_loglik(const ModelParams& model, const BasisSystem& basis,
                       const PointPattern& pattern, const Eigen::VectorXd& u,
                       std::span<const std::size_t> labels);

enum class LogLikMethod { Exact, MonteCarlo };

struct LogLikResult {
  double value = 0.0;
  double mc_std_err = 0.0;
  LogLikMethod method = LogLikMethod::Exact;
};

struct MarginalOptions {
  enum class Mode { Auto, Exact, MonteCarlo };
  Mode mode = Mode::Auto;
  std::size_t draws = 4000;
  std::uint64_t seed = 0;
  // Auto switches to enumeration when p^m ≤ this.
  double enumeration_budget = 1e6;
};

// log f(x_B; θ), the marginal density of the pattern (set density, no m!).
LogLikResult marginal_loglik(const ModelParams& model, const BasisSystem& basis,
                             const PointPattern& pattern, const MarginalOptions& options);

// Same, from a precomputed m × p matrix of φ_k(t_j).
LogLikResult marginal_loglik_phi(const Eigen::MatrixXd& phi, const ScoreParams& scores,
                                 const MarginalOptions& options);

// Exact enumeration over label vectors; throws EnumerationBudget if p^m > budget.
double marginal_loglik_exact(const Eigen::MatrixXd& phi, const ScoreParams& scores,
                             double budget = 1e6);

// Per-replication posterior expectations under θ.
struct ReplicationStats {
  Eigen::MatrixXd gamma;   // m × p, rows sum to 1
  Eigen::VectorXd euk;     // E[U_k | x]
  Eigen::VectorXd elogu;   // E[log U_k | x]
};

struct EStepStats {
  std::vector<ReplicationStats> reps;

  std::size_t size() const { return reps.size(); }
  // Reorders the component axis: new k takes old perm[k].
  void permute(const std::vector<std::size_t>& perm);
};

// λ̂(t) = Σ_k E[U_k | x] φ_k(t) on the requested points.
Eigen::VectorXd posterior_intensity(const ModelParams& model, const BasisSystem& basis,
                                    const PointPattern& pattern, const ReplicationStats& stats,
                                    std::span<const Point> grid);

bool enumeration_feasible(std::size_t m, std::size_t p, double budget);

}  // namespace icpp
