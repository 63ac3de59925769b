#include "icpp/selection.hpp"

#include "icpp/errors.hpp"
#include "icpp/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace icpp {

void CvPlan::validate(std::size_t replications) const {
  if (zeta_grid.empty() || p_grid.empty()) throw Error(ErrorKind::Config, "CV grids must be nonempty");
  if (folds < 2) throw Error(ErrorKind::Config, "need at least 2 folds");
  if (folds > replications) {
    throw Error(ErrorKind::Config, "fold count " + std::to_string(folds) + " exceeds the number of replications (" +
                                       std::to_string(replications) + ")");
  }
  for (double z : zeta_grid) {
    if (!(z >= 0.0) || !std::isfinite(z)) throw Error(ErrorKind::Config, "zeta grid values must be finite and >= 0");
  }
  for (std::size_t p : p_grid) {
    if (p < 1) throw Error(ErrorKind::Config, "p grid values must be >= 1");
  }
  if (heldout_draws < 1) throw Error(ErrorKind::Config, "held-out draws must be >= 1");
  fit.validate();
}

std::vector<double> default_zeta_grid() {
  std::vector<double> g;
  for (int e = -8; e <= -1; ++e) g.push_back(std::pow(10.0, e));
  return g;
}

std::vector<PointPattern> sorted_by_id(std::span<const PointPattern> patterns) {
  std::vector<PointPattern> out(patterns.begin(), patterns.end());
  std::stable_sort(out.begin(), out.end(), [](const PointPattern& a, const PointPattern& b) { return a.id < b.id; });
  return out;
}

std::vector<std::vector<std::size_t>> make_folds(std::span<const PointPattern> sorted_patterns,
                                                 std::size_t folds, std::uint64_t seed) {
  std::vector<std::size_t> order(sorted_patterns.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(derive_seed(seed, "folds"));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out(folds);
  for (std::size_t i = 0; i < order.size(); ++i) out[i % folds].push_back(order[i]);
  for (auto& f : out) std::sort(f.begin(), f.end());
  return out;
}

CvReport kfold_cv(std::span<const PointPattern> patterns, const BasisSystem& basis, const CvPlan& plan) {
  plan.validate(patterns.size());
  const std::vector<PointPattern> sorted = sorted_by_id(patterns);
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i].id == sorted[i - 1].id) throw Error(ErrorKind::InvalidArgument, "duplicate replication id '" + sorted[i].id + "'");
  }
  const auto folds = make_folds(sorted, plan.folds, plan.seed);

  CvReport rep;
  rep.ids.reserve(sorted.size());
  rep.fold_of.assign(sorted.size(), 0);
  for (const auto& p : sorted) rep.ids.push_back(p.id);
  {
    // Partition check: every replication lands in exactly one fold.
    std::vector<int> seen(sorted.size(), 0);
    for (std::size_t f = 0; f < folds.size(); ++f) {
      for (std::size_t i : folds[f]) {
        ++seen[i];
        rep.fold_of[i] = f;
      }
    }
    if (std::any_of(seen.begin(), seen.end(), [](int s) { return s != 1; })) {
      throw Error(ErrorKind::Internal, "fold assignment is not a partition");
    }
  }

  std::vector<std::vector<PointPattern>> train(folds.size());
  for (std::size_t f = 0; f < folds.size(); ++f) {
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      if (rep.fold_of[i] != f) train[f].push_back(sorted[i]);
    }
  }

  // ζ order per p: as given, or ascending for warm starts (a fit at small ζ is a
  // good start for a slightly larger one; the reverse carries oversmoothing down).
  std::vector<std::size_t> zeta_order(plan.zeta_grid.size());
  std::iota(zeta_order.begin(), zeta_order.end(), 0);
  if (plan.warm_start) {
    std::stable_sort(zeta_order.begin(), zeta_order.end(),
                     [&](std::size_t a, std::size_t b) { return plan.zeta_grid[a] < plan.zeta_grid[b]; });
  }

  for (std::size_t p : plan.p_grid) {
    std::vector<CvCell> cells(plan.zeta_grid.size());
    for (std::size_t z = 0; z < cells.size(); ++z) {
      cells[z].p = p;
      cells[z].zeta = plan.zeta_grid[z];
      cells[z].fold_scores.assign(folds.size(), 0.0);
    }
    std::vector<double> var(cells.size(), 0.0);
    for (std::size_t f = 0; f < folds.size(); ++f) {
      std::optional<ModelParams> previous;
      for (std::size_t z : zeta_order) {
        CvCell& cell = cells[z];
        FitConfig cfg = plan.fit;
        cfg.zeta = plan.zeta_grid[z];
        cfg.seed = derive_seed(plan.seed, "cv-fit", {f, p});
        if (plan.warm_start && previous) {
          cfg.start = previous;
          if (plan.warm_max_outer_iters > 0) cfg.max_outer_iters = plan.warm_max_outer_iters;
        }
        if (plan.start) {
          if (auto s = plan.start(p, cfg.zeta)) cfg.start = std::move(s);
        }
        try {
          const FitResult fr = fit(train[f], basis, p, cfg);
          if (plan.warm_start) previous = fr.params;
          if (!fr.converged) cell.diagnostics.push_back("fold " + std::to_string(f) + ": EM hit the iteration cap");
          double s = 0.0;
          double v = 0.0;
          for (std::size_t i : folds[f]) {
            MarginalOptions mo;
            mo.draws = plan.heldout_draws;
            mo.seed = derive_seed(plan.seed, "cv-heldout", {fnv1a(sorted[i].id)});
            const LogLikResult ll = marginal_loglik(fr.params, basis, sorted[i], mo);
            s += ll.value;
            v += ll.mc_std_err * ll.mc_std_err;
          }
          if (!std::isfinite(s)) throw Error(ErrorKind::Internal, "non-finite held-out log-likelihood");
          cell.fold_scores[f] = s;
          var[z] += v;
        } catch (const std::exception& e) {
          ++cell.invalid_folds;
          cell.fold_scores[f] = std::nan("");
          cell.diagnostics.push_back("fold " + std::to_string(f) + ": " + e.what());
        }
      }
    }
    for (std::size_t z = 0; z < cells.size(); ++z) {
      if (cells[z].valid()) {
        cells[z].score = std::accumulate(cells[z].fold_scores.begin(), cells[z].fold_scores.end(), 0.0);
        cells[z].std_err = std::sqrt(var[z]);
      } else {
        cells[z].score = std::nan("");
        cells[z].std_err = std::nan("");
      }
      rep.cells.push_back(std::move(cells[z]));
    }
  }

  std::stable_sort(rep.cells.begin(), rep.cells.end(), [](const CvCell& a, const CvCell& b) {
    if (a.valid() != b.valid()) return a.valid();
    if (!a.valid()) return false;
    return a.score > b.score;
  });
  if (!rep.cells.empty() && rep.cells.front().valid()) {
    rep.selected_p = rep.cells.front().p;
    rep.selected_zeta = rep.cells.front().zeta;
  }
  return rep;
}

std::pair<FitResult, CvReport> select_model(std::span<const PointPattern> patterns,
                                            const BasisSystem& basis, const CvPlan& plan) {
  CvReport rep = kfold_cv(patterns, basis, plan);
  if (rep.cells.empty() || !rep.cells.front().valid()) {
    std::string why = "every CV cell failed";
    if (!rep.cells.empty() && !rep.cells.front().diagnostics.empty()) why += ": " + rep.cells.front().diagnostics.front();
    throw Error(ErrorKind::SelectionFailed, why);
  }
  FitConfig cfg = plan.fit;
  cfg.zeta = rep.selected_zeta;
  const std::vector<PointPattern> sorted = sorted_by_id(patterns);
  FitResult fr = fit(sorted, basis, rep.selected_p, cfg);
  return {std::move(fr), std::move(rep)};
}

}  // namespace icpp
