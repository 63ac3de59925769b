#pragma once

// Large-sample behaviour of the penalized estimator: Fisher information from
// per-pattern scores, the tangent cone of the constraint set at θ̂, Monte-Carlo
// draws of the limiting perturbation δ(Z), the closed-form interior variance
// and per-coordinate confidence intervals.
//
// Parameter vectors are laid out as (c_1, …, c_p, α_1, …, α_p, β): the
// coefficient rows first, then the score parameters; d = p·q + p + 1.

#include "icpp/basis.hpp"
#include "icpp/model.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace icpp {

Eigen::VectorXd flatten_params(const ModelParams& model);
std::vector<std::string> parameter_names(std::size_t p, std::size_t q);

// ∇P(θ): 2Ωc_k on the coefficient blocks, zero on (α, β).
Eigen::VectorXd penalty_gradient(const ModelParams& model, const BasisSystem& basis);

// Gradient of log f(x; θ) by Fisher's identity from the posterior expectations
// of one pattern. `phi` is the m × p matrix of φ_k(t_j), `rows` the m × q basis rows.
Eigen::VectorXd pattern_score(const ModelParams& model, const Eigen::MatrixXd& rows,
                              const Eigen::MatrixXd& phi, const ReplicationStats& stats);

struct FisherOptions {
  enum class Source { Empirical, Generative };
  Source source = Source::Empirical;
  // Gibbs sweeps per pattern when enumeration is too large; in generative
  // mode also the number of simulated patterns.
  std::size_t mc_draws = 1000;
  double exact_budget = 4096;
  std::uint64_t seed = 1;
  int sampler_resolution = 256;   // generative mode
};

struct FisherInfo {
  Eigen::MatrixXd matrix;
  std::size_t mc_draws = 0;
  std::size_t patterns_used = 0;
  double min_eigenvalue = 0.0;
  double max_eigenvalue = 0.0;
  double condition = 0.0;          // max/min eigenvalue, ∞ when min ≤ 0
  bool singular_warning = false;   // fewer patterns than parameters

  std::size_t dim() const { return static_cast<std::size_t>(matrix.rows()); }
};

// Average of score outer products, over `patterns` (empirical) or over
// options.mc_draws patterns simulated from the model (generative; `patterns`
// ignored). Throws InvalidArgument for mc_draws < 100.
FisherInfo estimate_fisher(const ModelParams& model, const BasisSystem& basis,
                           std::span<const PointPattern> patterns, const FisherOptions& options);

// Wraps an externally computed information matrix (symmetrized, diagnosed).
FisherInfo make_fisher(const Eigen::MatrixXd& matrix, std::size_t patterns_used = 0);

struct TangentCone {
  std::size_t dim = 0;
  std::vector<std::vector<std::size_t>> active;   // per component, indices into 0..q−1
  Eigen::MatrixXd equality;                        // rows: aᵀv_k = 0 (p × d)
  std::vector<std::size_t> nonnegative;            // coordinates of θ constrained to ≥ 0
  std::size_t free_dim = 0;                        // unconstrained (α, β) block

  bool interior() const { return nonnegative.empty(); }
  // Cone without any constraint, used for the reduced-space check.
  static TangentCone whole_space(std::size_t dim);
};

// activation_tol < 0 selects 10⁻⁶ · max ĉ.
TangentCone tangent_cone(const ModelParams& model, const Eigen::VectorXd& a, double activation_tol = -1.0);

struct DeltaSolve {
  Eigen::VectorXd delta;
  double kkt_residual = 0.0;
  bool ridge_added = false;
};

// argmax over the cone of bᵀδ − ½ δᵀFδ, with b = Z − κ∇P.
DeltaSolve solve_delta(const Eigen::MatrixXd& fisher, const TangentCone& cone, const Eigen::VectorXd& b);

struct ConfidenceInterval {
  double estimate = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

struct AsymptoticResult {
  enum class Method { InteriorClosedForm, QpMonteCarlo };
  Method method = Method::QpMonteCarlo;
  double kappa = 0.0;
  Eigen::VectorXd theta;             // θ̂, flattened
  std::size_t coefficients = 0;      // leading entries of θ that are coefficients
  std::vector<bool> active;          // per coordinate of θ
  Eigen::MatrixXd draws;             // M × d, empty for the closed form
  Eigen::VectorXd mean;
  Eigen::VectorXd variances;
  Eigen::MatrixXd covariance;
  bool ridge_added = false;
  double max_kkt_residual = 0.0;
};

std::string to_string(AsymptoticResult::Method m);

// M ≥ 100 draws Z ~ N(0, F) through the symmetric square root of F; one QP
// per draw with its own seed stream.
AsymptoticResult simulate_delta(const FisherInfo& fisher, const TangentCone& cone, double kappa,
                                const Eigen::VectorXd& grad_penalty, std::size_t draws, std::uint64_t seed);

struct InteriorVariance {
  Eigen::MatrixXd gamma;        // pq × (pq − p), orthonormal, (I_p ⊗ aᵀ)Γ = 0
  Eigen::MatrixXd A;            // d × (d − p) = blockdiag(Γ, I_{p+1})
  Eigen::MatrixXd reduced;      // F̃ = AᵀFA
  Eigen::MatrixXd covariance;   // A F̃⁻¹ Aᵀ
  Eigen::VectorXd mean;         // A F̃⁻¹ μ, μ = −κ Aᵀ∇P
};

// Orthonormal basis of {v ∈ ℝ^{pq} : aᵀv_k = 0 for every block k}.
Eigen::MatrixXd constraint_null_space(const Eigen::VectorXd& a, std::size_t p);

// Throws RankDeficient (with the offending direction) when F̃ is singular.
InteriorVariance variance_interior(const FisherInfo& fisher, const Eigen::VectorXd& a, double kappa,
                                   const Eigen::VectorXd& grad_penalty);

// Closed form when no coefficient is active, Monte-Carlo QP otherwise.
AsymptoticResult analyze(const ModelParams& model, const BasisSystem& basis, const FisherInfo& fisher,
                         double kappa, std::size_t draws, std::uint64_t seed, double activation_tol = -1.0);

// Interior: θ̂_j ± z·√(var_j / n). Monte-Carlo: quantiles of θ̂ + δ/√n.
// Coefficient intervals are intersected with [0, ∞) and start at exactly 0 on
// active coordinates.
std::vector<ConfidenceInterval> confidence_intervals(const AsymptoticResult& result, std::size_t n,
                                                     double level);

}  // namespace icpp
