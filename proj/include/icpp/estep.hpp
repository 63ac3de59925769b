#pragma once

// E-step: posterior expectations of the latent labels y and scores U given
// each pattern, under the current θ.

#include "icpp/model.hpp"

#include <cstdint>
#include <span>

namespace icpp {

// Exact posterior by enumerating all label vectors; `phi` is m × p.
// Throws EnumerationBudget when p^m > budget.
ReplicationStats exact_replication_stats(const Eigen::MatrixXd& phi, const ScoreParams& scores,
                                         double budget = 1e6);

// Conjugate Gibbs sampler alternating y | u and u | y. The first 20% of sweeps
// are discarded; the rest are averaged as conditional expectations
// (E[y | u], E[log U | y]); E[U] comes from the averaged E[y | u], with a
// matching correction to E[log U] unless that would break Jensen.
ReplicationStats gibbs_replication_stats(const Eigen::MatrixXd& phi, const ScoreParams& scores,
                                         std::size_t sweeps, std::uint64_t seed);

EStepStats e_step_exact(const ModelParams& model, const BasisSystem& basis,
                        std::span<const PointPattern> patterns, double budget = 1e6);

// Deterministic given seed; each replication draws from its own stream keyed
// on the replication id.
EStepStats e_step_gibbs(const ModelParams& model, const BasisSystem& basis,
                        std::span<const PointPattern> patterns, std::size_t sweeps,
                        std::uint64_t seed);

// Variants on a precomputed N × p component matrix laid out as `design`.
EStepStats e_step_exact_phi(const Eigen::MatrixXd& phi, const PatternDesign& design,
                            const ScoreParams& scores, double budget = 1e6);
EStepStats e_step_gibbs_phi(const Eigen::MatrixXd& phi, const PatternDesign& design,
                            std::span<const PointPattern> patterns, const ScoreParams& scores,
                            std::size_t sweeps, std::uint64_t seed);

inline constexpr std::size_t kMinGibbsSweeps = 10;

}  // namespace icpp
