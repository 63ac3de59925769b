#pragma once

// Penalized maximum likelihood by Monte-Carlo EM.

#include "icpp/estep.hpp"
#include "icpp/model.hpp"
#include "icpp/mstep.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace icpp {

struct FitConfig {
  double zeta = 1e-6;
  int max_outer_iters = 200;
  // Base Gibbs sweeps; iteration t uses base · (1 + t/5).
  std::size_t gibbs_sweeps = 20;
  InnerOptions inner{};
  double outer_tol = 1e-5;
  // Consecutive small changes required to stop.
  int patience = 3;
  std::uint64_t seed = 1;
  // The exact E-step is used when every replication has p^m at most this.
  double exact_budget = 4096;
  // Draws per replication for the MC-monitored objective.
  std::size_t monitor_draws = 400;
  // Squared-extrapolation acceleration: each outer iteration takes two EM
  // steps, extrapolates, and keeps the extrapolated point (after one more EM
  // step) only if ρ does not drop.
  bool accelerate = true;
  // Warm start; replaces initialize() when set.
  std::optional<ModelParams> start;

  void validate() const;
};

struct FitResult {
  ModelParams params;
  std::vector<double> objective_trace;   // ρ at the start point, then after each outer iteration
  EStepStats e_stats;                    // at the returned params, canonical order
  bool converged = false;
  int iterations = 0;                    // outer iterations
  int em_steps = 0;                      // E+M passes, including extrapolation checks
  bool exact_e_step = false;
  std::vector<bool> starved;             // per component, canonical order
};

// k-means on pooled points, then a non-negative basis fit of a smoothed
// histogram per cluster. Rows ordered by α_k β descending.
ModelParams initialize(std::span<const PointPattern> patterns, const BasisSystem& basis,
                       std::size_t p, std::uint64_t seed);

// ρ_n(θ) = (1/n) Σ_i log f(x_i; θ) − ζ Σ_k c_kᵀ Ω c_k
double penalized_objective(const ModelParams& model, const BasisSystem& basis,
                           std::span<const PointPattern> patterns, double zeta,
                           const MarginalOptions& options);

// Patterns are used in the order given; replication ids must be unique.
FitResult fit(std::span<const PointPattern> patterns, const BasisSystem& basis, std::size_t p,
              const FitConfig& config);

}  // namespace icpp
