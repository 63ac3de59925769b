#pragma once

// K-fold cross-validation over (p, ζ) grids.

#include "icpp/fit.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace icpp {

struct CvPlan {
  std::size_t folds = 5;
  std::vector<double> zeta_grid;
  std::vector<std::size_t> p_grid;
  std::uint64_t seed = 1;
  FitConfig fit;                       // template; zeta and seed are set per cell
  std::size_t heldout_draws = 4000;
  // Fit each (p, fold) along ζ in ascending order, starting each fit from
  // the previous one. Off by default.
  bool warm_start = false;
  // Outer-iteration cap for warm-started fits; 0 keeps fit.max_outer_iters.
  int warm_max_outer_iters = 0;
  // Optional start for every fold fit of a cell, e.g. the full-data fit at
  // the same (p, ζ). Takes precedence over warm_start when it returns a value.
  std::function<std::optional<ModelParams>(std::size_t p, double zeta)> start;

  void validate(std::size_t replications) const;
};

// Default grid: 8 log-spaced values 1e-8 … 1e-1.
std::vector<double> default_zeta_grid();

struct CvCell {
  std::size_t p = 0;
  double zeta = 0.0;
  double score = 0.0;                 // Σ over held-out replications
  double std_err = 0.0;               // MC std-err of the score
  std::size_t invalid_folds = 0;
  std::vector<double> fold_scores;
  std::vector<std::string> diagnostics;

  bool valid() const { return invalid_folds == 0; }
};

struct CvReport {
  std::vector<CvCell> cells;           // valid cells by score descending, then invalid ones
  std::size_t selected_p = 0;
  double selected_zeta = 0.0;
  std::vector<std::string> ids;        // replication ids, sorted
  std::vector<std::size_t> fold_of;    // fold index per entry of ids
};

// Replications sorted by id, then partitioned by a seeded shuffle.
std::vector<std::vector<std::size_t>> make_folds(std::span<const PointPattern> sorted_patterns,
                                                 std::size_t folds, std::uint64_t seed);

std::vector<PointPattern> sorted_by_id(std::span<const PointPattern> patterns);

CvReport kfold_cv(std::span<const PointPattern> patterns, const BasisSystem& basis, const CvPlan& plan);

// Throws SelectionFailed when every cell is invalid.
std::pair<FitResult, CvReport> select_model(std::span<const PointPattern> patterns,
                                            const BasisSystem& basis, const CvPlan& plan);

}  // namespace icpp
