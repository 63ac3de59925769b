#include "icpp/simulation.hpp"

#include "icpp/errors.hpp"
#include "icpp/parallel.hpp"
#include "icpp/random.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace icpp {

GaussianBump GaussianBump::normalized(double center, double rate) {
  GaussianBump b;
  b.center = center;
  b.rate = rate;
  const double s = std::sqrt(rate);
  b.norm = 0.5 * std::sqrt(M_PI / rate) * (std::erf(s * (1.0 - center)) + std::erf(s * center));
  return b;
}

double GaussianBump::operator()(double t) const {
  const double d = t - center;
  return std::exp(-rate * d * d) / norm;
}

LognormalParams lognormal_from_moments(double mean, double variance) {
  if (!(mean > 0.0) || !(variance > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "lognormal scores need positive mean and variance");
  }
  LognormalParams p;
  p.sigma2 = std::log1p(variance / (mean * mean));
  p.mu = std::log(mean) - 0.5 * p.sigma2;
  return p;
}

GenModel GenModel::model1() {
  GenModel g;
  g.name = "model1";
  g.components = {GaussianBump::normalized(0.3, 100.0), GaussianBump::normalized(0.7, 100.0)};
  g.score_means = {30.0, 20.0};
  g.score_vars = {10.0, 1.0};
  return g;
}

GenModel GenModel::model2() {
  GenModel g = model1();
  g.name = "model2";
  g.components = {GaussianBump::normalized(0.3, 20.0), GaussianBump::normalized(0.7, 20.0)};
  return g;
}

GenModel GenModel::by_name(const std::string& name) {
  if (name == "model1" || name == "1") return model1();
  if (name == "model2" || name == "2") return model2();
  throw Error(ErrorKind::InvalidArgument, "unknown generating model '" + name + "'");
}

Eigen::MatrixXd sample_scores(const GenModel& gen, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw Error(ErrorKind::InvalidArgument, "need n >= 1");
  const std::size_t p = gen.size();
  std::vector<LognormalParams> law;
  for (std::size_t k = 0; k < p; ++k) law.push_back(lognormal_from_moments(gen.score_means[k], gen.score_vars[k]));
  Eigen::MatrixXd u(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  Rng rng = make_rng(derive_seed(seed, "scores"));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < p; ++k) {
      std::lognormal_distribution<double> d(law[k].mu, std::sqrt(law[k].sigma2));
      u(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = d(rng);
    }
  }
  return u;
}

PatternSampler::PatternSampler(Region region, std::vector<Density> densities, int resolution)
    : region_(std::move(region)), densities_(std::move(densities)), quad_(build_quadrature(region_, resolution)) {
  const std::size_t cells = quad_.cells.size();
  for (const auto& dens : densities_) {
    std::vector<double> env(cells, 0.0);
    for (std::size_t r = 0; r < quad_.size(); ++r) {
      const std::size_t c = quad_.cell_of_node[r];
      env[c] = std::max(env[c], dens(quad_.nodes[r]));
    }
    for (std::size_t c = 0; c < cells; ++c) {
      const Box& b = quad_.cells[c];
      const Point probes[] = {b.lo, b.hi, {b.lo.x, b.hi.y}, {b.hi.x, b.lo.y}};
      for (const Point& t : probes) {
        if (region_.contains(t)) env[c] = std::max(env[c], dens(t));
      }
      env[c] *= 1.1;
    }
    std::vector<double> cdf(cells);
    double acc = 0.0;
    for (std::size_t c = 0; c < cells; ++c) {
      const Box& b = quad_.cells[c];
      const double area = region_.dimension() == 1 ? b.hi.x - b.lo.x : (b.hi.x - b.lo.x) * (b.hi.y - b.lo.y);
      acc += env[c] * area;
      cdf[c] = acc;
    }
    envelope_.push_back(std::move(env));
    cdf_.push_back(std::move(cdf));
  }
}

Point PatternSampler::draw_from(std::size_t k, Rng& rng) const {
  const auto& env = envelope_[k];
  const auto& cdf = cdf_[k];
  for (;;) {
    const double target = uniform01(rng) * cdf.back();
    const auto c = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), target) - cdf.begin());
    const std::size_t cell = std::min(c, cdf.size() - 1);
    const Box& b = quad_.cells[cell];
    Point t{b.lo.x + uniform01(rng) * (b.hi.x - b.lo.x), 0.0};
    if (region_.dimension() == 2) t.y = b.lo.y + uniform01(rng) * (b.hi.y - b.lo.y);
    if (!region_.contains(t)) continue;
    const double f = densities_[k](t);
    if (f > env[cell]) ++violations_;
    if (uniform01(rng) * env[cell] <= f) return t;
  }
}

PointPattern PatternSampler::sample(const Eigen::VectorXd& u, std::uint64_t seed, std::string id) const {
  if (u.size() != static_cast<Eigen::Index>(densities_.size())) {
    throw Error(ErrorKind::InvalidArgument, "score vector length differs from the number of components");
  }
  if (u.minCoeff() < 0.0) throw Error(ErrorKind::InvalidArgument, "scores must be non-negative");
  PointPattern pat;
  pat.id = std::move(id);
  const double total = u.sum();
  if (!(total > 0.0)) return pat;
  Rng rng = make_rng(seed);
  const auto m = std::poisson_distribution<long>(total)(rng);
  pat.points.reserve(static_cast<std::size_t>(m));
  for (long j = 0; j < m; ++j) {
    double target = uniform01(rng) * total;
    std::size_t k = 0;
    for (; k + 1 < densities_.size(); ++k) {
      target -= u[static_cast<Eigen::Index>(k)];
      if (target < 0.0) break;
    }
    while (u[static_cast<Eigen::Index>(k)] == 0.0 && k > 0) --k;
    pat.points.push_back(draw_from(k, rng));
  }
  return pat;
}

PatternSampler make_sampler(const GenModel& gen, int resolution) {
  std::vector<PatternSampler::Density> d;
  for (const auto& b : gen.components) d.push_back([b](const Point& t) { return b(t.x); });
  return PatternSampler(gen.region(), std::move(d), resolution);
}

PointPattern sample_intensity(const std::function<double(const Point&)>& lambda, const Region& region,
                              std::uint64_t seed, std::string id, int resolution) {
  const QuadratureRule quad = build_quadrature(region, resolution);
  double mass = 0.0;
  for (std::size_t r = 0; r < quad.size(); ++r) mass += quad.weights[r] * lambda(quad.nodes[r]);
  if (!(mass > 0.0)) {
    PointPattern empty;
    empty.id = std::move(id);
    return empty;
  }
  PatternSampler s(region, {[&lambda, mass](const Point& t) { return lambda(t) / mass; }}, resolution);
  return s.sample(Eigen::VectorXd::Constant(1, mass), seed, std::move(id));
}

EvalGrid trapezoid_grid(double lo, double hi, std::size_t points) {
  if (points < 2) throw Error(ErrorKind::InvalidArgument, "grid needs at least 2 points");
  EvalGrid g;
  g.weights = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(points), (hi - lo) / static_cast<double>(points - 1));
  g.weights[0] *= 0.5;
  g.weights[static_cast<Eigen::Index>(points) - 1] *= 0.5;
  for (std::size_t i = 0; i < points; ++i) {
    g.points.push_back({lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1), 0.0});
  }
  return g;
}

ErrorTriple error_triple(const std::vector<Eigen::VectorXd>& estimates, const Eigen::VectorXd& truth,
                         const Eigen::VectorXd& weights) {
  if (estimates.size() < 2) throw Error(ErrorKind::InvalidArgument, "need at least two estimates");
  if (truth.size() != weights.size()) throw Error(ErrorKind::InvalidArgument, "grid mismatch");
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(truth.size());
  for (const auto& e : estimates) {
    if (e.size() != truth.size()) throw Error(ErrorKind::InvalidArgument, "grid mismatch");
    mean += e;
  }
  mean /= static_cast<double>(estimates.size());
  Eigen::VectorXd var = Eigen::VectorXd::Zero(truth.size());
  for (const auto& e : estimates) var += (e - mean).cwiseAbs2();
  var /= static_cast<double>(estimates.size());
  ErrorTriple t;
  const double b2 = weights.dot((mean - truth).cwiseAbs2());
  const double s2 = weights.dot(var);
  t.bias = std::sqrt(b2);
  t.std = std::sqrt(s2);
  t.rmse = std::sqrt(b2 + s2);
  return t;
}

std::vector<std::size_t> match_components(const Eigen::MatrixXd& estimate, const Eigen::MatrixXd& truth,
                                          const Eigen::VectorXd& weights) {
  const auto p = static_cast<std::size_t>(truth.rows());
  if (estimate.rows() != truth.rows() || estimate.cols() != truth.cols()) {
    throw Error(ErrorKind::InvalidArgument, "estimate and truth shapes differ");
  }
  std::vector<std::size_t> perm(p);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<std::size_t> best = perm;
  double best_cost = std::numeric_limits<double>::infinity();
  do {
    double cost = 0.0;
    for (std::size_t k = 0; k < p; ++k) {
      cost += weights.dot((estimate.row(static_cast<Eigen::Index>(perm[k])) - truth.row(static_cast<Eigen::Index>(k)))
                              .transpose()
                              .cwiseAbs2());
    }
    if (cost < best_cost) {
      best_cost = cost;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

IntensityError intensity_error(const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth,
                               const Eigen::VectorXd& weights) {
  if (estimate.size() != truth.size() || truth.size() != weights.size()) {
    throw Error(ErrorKind::InvalidArgument, "grid mismatch");
  }
  IntensityError e;
  const Eigen::VectorXd diff = estimate - truth;
  e.intensity_sq = weights.dot(diff.cwiseAbs2());
  const double mh = weights.dot(estimate);
  const double mt = weights.dot(truth);
  if (!(mh > 0.0) || !(mt > 0.0)) throw Error(ErrorKind::InvalidArgument, "intensity has no mass on the grid");
  e.density_sq = weights.dot((estimate / mh - truth / mt).cwiseAbs2());
  return e;
}

std::string to_string(ZetaPolicy p) { return p == ZetaPolicy::Cv ? "cv" : "opt"; }

GeneratedData generate_data(const GenModel& gen, std::size_t n, std::uint64_t seed) {
  GeneratedData out;
  out.scores = sample_scores(gen, n, seed);
  const PatternSampler sampler = make_sampler(gen);
  const int width = std::max(4, static_cast<int>(std::to_string(n).size()));
  out.patterns.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.patterns[i] = sampler.sample(out.scores.row(static_cast<Eigen::Index>(i)).transpose(),
                                     derive_seed(seed, "points", {i}), fmt::format("r{:0{}}", i + 1, width));
  }
  return out;
}

FitChecks fit_checks(const FitResult& fit, const BasisSystem& basis) {
  FitChecks c;
  const Eigen::VectorXd mass = fit.params.coeffs * basis.integrals();
  c.mass_error = (mass.array() - 1.0).abs().maxCoeff();
  c.min_coeff = fit.params.coeffs.minCoeff();
  c.gamma_error = 0.0;
  for (const auto& rep : fit.e_stats.reps) {
    if (rep.gamma.rows() > 0) c.gamma_error = std::max(c.gamma_error, (rep.gamma.rowwise().sum().array() - 1.0).abs().maxCoeff());
  }
  return c;
}

namespace {

double sq_norm(const Eigen::VectorXd& v, const Eigen::VectorXd& w) { return w.dot(v.cwiseAbs2()); }

RepOutcome run_replication(const StudyConfig& cfg, const BasisSystem& basis, const EvalGrid& grid,
                           const Eigen::MatrixXd& truth, const Eigen::MatrixXd& grid_rows, std::size_t r) {
  RepOutcome out;
  const std::size_t nz = cfg.zeta_grid.size();
  const std::size_t p = cfg.gen.size();
  out.components.resize(nz);
  out.fit_ok.assign(nz, false);
  out.intensity_sq.assign(nz, std::nan(""));
  out.density_sq.assign(nz, std::nan(""));
  out.checks.resize(nz);
  try {
    const GeneratedData data = generate_data(cfg.gen, cfg.n, derive_seed(cfg.seed, "data", {r}));
    // True per-replication intensities on the grid.
    std::vector<Eigen::VectorXd> lam(cfg.n);
    for (std::size_t i = 0; i < cfg.n; ++i) lam[i] = truth.transpose() * data.scores.row(static_cast<Eigen::Index>(i)).transpose();

    std::vector<std::size_t> order(nz);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return cfg.zeta_grid[a] < cfg.zeta_grid[b]; });
    std::optional<ModelParams> previous;
    std::vector<std::optional<ModelParams>> full(nz);
    for (std::size_t z : order) {
      FitConfig fc = cfg.fit;
      fc.zeta = cfg.zeta_grid[z];
      fc.seed = derive_seed(cfg.seed, "fit", {r});
      fc.start = previous;
      try {
        const FitResult fr = fit(data.patterns, basis, p, fc);
        previous = fr.params;
        full[z] = fr.params;
        const Eigen::MatrixXd est = (grid_rows * fr.params.coeffs.transpose()).transpose();
        const std::vector<std::size_t> perm = match_components(est, truth, grid.weights);
        Eigen::MatrixXd matched(est.rows(), est.cols());
        for (std::size_t k = 0; k < p; ++k) matched.row(static_cast<Eigen::Index>(k)) = est.row(static_cast<Eigen::Index>(perm[k]));
        out.components[z] = std::move(matched);
        double si = 0.0;
        double sd = 0.0;
        for (std::size_t i = 0; i < cfg.n; ++i) {
          const Eigen::VectorXd lhat = (grid_rows * (fr.params.coeffs.transpose() * fr.e_stats.reps[i].euk)).cwiseMax(0.0);
          const IntensityError e = intensity_error(lhat, lam[i], grid.weights);
          si += e.intensity_sq;
          sd += e.density_sq;
        }
        out.intensity_sq[z] = si / static_cast<double>(cfg.n);
        out.density_sq[z] = sd / static_cast<double>(cfg.n);
        out.checks[z] = fit_checks(fr, basis);
        out.fit_ok[z] = true;
      } catch (const std::exception& e) {
        if (out.error.empty()) out.error = fmt::format("zeta {}: {}", cfg.zeta_grid[z], e.what());
      }
    }
    if (cfg.run_cv) {
      CvPlan plan;
      plan.folds = cfg.folds;
      plan.zeta_grid = cfg.zeta_grid;
      plan.p_grid = {p};
      plan.seed = derive_seed(cfg.seed, "cv", {r});
      plan.fit = cfg.fit;
      plan.heldout_draws = cfg.cv_draws;
      plan.warm_start = true;
      plan.warm_max_outer_iters = cfg.cv_warm_iters;
      const CvReport rep = kfold_cv(data.patterns, basis, plan);
      if (rep.cells.empty() || !rep.cells.front().valid()) throw Error(ErrorKind::SelectionFailed, "every CV cell failed");
      const auto it = std::find(cfg.zeta_grid.begin(), cfg.zeta_grid.end(), rep.selected_zeta);
      out.cv_choice = static_cast<std::size_t>(it - cfg.zeta_grid.begin());
    }
    out.ok = true;
  } catch (const std::exception& e) {
    out.ok = false;
    out.error = e.what();
  }
  return out;
}

bool rep_usable(const RepOutcome& r, std::size_t z) { return r.ok && r.fit_ok[z]; }

std::size_t choice_for(const RepOutcome& r, ZetaPolicy policy, std::size_t opt) {
  return policy == ZetaPolicy::Cv ? r.cv_choice : opt;
}

template <typename F>
double jackknife_se(std::size_t count, F&& stat_without) {
  if (count < 3) return std::nan("");
  std::vector<double> v(count);
  for (std::size_t i = 0; i < count; ++i) v[i] = stat_without(i);
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(count);
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return std::sqrt(s * static_cast<double>(count - 1) / static_cast<double>(count));
}

}  // namespace

StudyResult run_study(const StudyConfig& config) {
  if (config.reps < 2) throw Error(ErrorKind::InvalidArgument, "need at least 2 replications");
  if (config.zeta_grid.empty()) throw Error(ErrorKind::InvalidArgument, "zeta grid is empty");
  StudyResult s;
  s.config = config;
  const Region region = config.gen.region();
  const QuadratureRule quad = build_quadrature(region, config.quadrature_resolution);
  BasisLayout layout;
  layout.knots = config.knots;
  const BasisSystem basis = build_basis(BasisFamily::CubicBSpline1D, region, layout, quad);
  s.grid = trapezoid_grid(0.0, 1.0, config.grid_points);
  const std::size_t p = config.gen.size();
  s.truth.resize(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(config.grid_points));
  for (std::size_t k = 0; k < p; ++k) {
    for (std::size_t g = 0; g < config.grid_points; ++g) {
      s.truth(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(g)) = config.gen.components[k](s.grid.points[g].x);
    }
  }
  const Eigen::MatrixXd grid_rows = basis.evaluate(s.grid.points);
  s.reps.resize(config.reps);
  parallel_for(config.reps, [&](std::size_t r) { s.reps[r] = run_replication(config, basis, s.grid, s.truth, grid_rows, r); });
  return s;
}

std::size_t optimal_zeta_index(const StudyResult& study) {
  const std::size_t nz = study.config.zeta_grid.size();
  std::size_t best = 0;
  double best_mse = std::numeric_limits<double>::infinity();
  for (std::size_t z = 0; z < nz; ++z) {
    double s = 0.0;
    std::size_t used = 0;
    for (const auto& r : study.reps) {
      if (!rep_usable(r, z)) continue;
      for (Eigen::Index k = 0; k < study.truth.rows(); ++k) {
        s += sq_norm((r.components[z].row(k) - study.truth.row(k)).transpose(), study.grid.weights);
      }
      ++used;
    }
    // A ζ where most replications failed cannot be the benchmark.
    if (used * 5 < study.reps.size() * 4 || used < 2) continue;
    const double mse = s / static_cast<double>(used);
    if (mse < best_mse) {
      best_mse = mse;
      best = z;
    }
  }
  return best;
}

std::vector<Table1Row> table1_rows(const StudyResult& study, ZetaPolicy policy) {
  const std::size_t opt = optimal_zeta_index(study);
  const std::size_t p = static_cast<std::size_t>(study.truth.rows());
  std::vector<std::vector<Eigen::VectorXd>> est(p);
  std::size_t failed = 0;
  for (const auto& r : study.reps) {
    const std::size_t z = choice_for(r, policy, opt);
    if (!rep_usable(r, z)) {
      ++failed;
      continue;
    }
    for (std::size_t k = 0; k < p; ++k) est[k].push_back(r.components[z].row(static_cast<Eigen::Index>(k)).transpose());
  }
  std::vector<Table1Row> rows;
  for (std::size_t k = 0; k < p; ++k) {
    Table1Row row;
    row.model = study.config.gen.name;
    row.n = study.config.n;
    row.knots = study.config.knots;
    row.policy = policy;
    row.component = k + 1;
    row.zeta = policy == ZetaPolicy::Optimal ? study.config.zeta_grid[opt] : std::nan("");
    row.reps_ok = est[k].size();
    row.reps_failed = failed;
    row.valid = failed * 5 <= study.reps.size() && est[k].size() >= 2;
    const Eigen::VectorXd truth = study.truth.row(static_cast<Eigen::Index>(k)).transpose();
    if (est[k].size() >= 2) {
      row.err = error_triple(est[k], truth, study.grid.weights);
      auto without = [&](std::size_t drop) {
        std::vector<Eigen::VectorXd> sub;
        for (std::size_t i = 0; i < est[k].size(); ++i) {
          if (i != drop) sub.push_back(est[k][i]);
        }
        return error_triple(sub, truth, study.grid.weights);
      };
      row.se.bias = jackknife_se(est[k].size(), [&](std::size_t i) { return without(i).bias; });
      row.se.std = jackknife_se(est[k].size(), [&](std::size_t i) { return without(i).std; });
      row.se.rmse = jackknife_se(est[k].size(), [&](std::size_t i) { return without(i).rmse; });
    } else {
      row.err = {std::nan(""), std::nan(""), std::nan("")};
      row.se = row.err;
    }
    rows.push_back(row);
  }
  return rows;
}

std::vector<Table2Row> table2_rows(const StudyResult& study, ZetaPolicy policy) {
  const std::size_t opt = optimal_zeta_index(study);
  std::vector<double> li;
  std::vector<double> ld;
  std::size_t failed = 0;
  for (const auto& r : study.reps) {
    const std::size_t z = choice_for(r, policy, opt);
    if (!rep_usable(r, z)) {
      ++failed;
      continue;
    }
    li.push_back(r.intensity_sq[z]);
    ld.push_back(r.density_sq[z]);
  }
  Table2Row row;
  row.model = study.config.gen.name;
  row.n = study.config.n;
  row.knots = study.config.knots;
  row.policy = policy;
  row.reps_ok = li.size();
  row.reps_failed = failed;
  row.valid = failed * 5 <= study.reps.size() && li.size() >= 2;
  auto root_mean = [](const std::vector<double>& v, std::size_t drop) {
    double s = 0.0;
    std::size_t c = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i == drop) continue;
      s += v[i];
      ++c;
    }
    return std::sqrt(s / static_cast<double>(c));
  };
  if (!li.empty()) {
    const std::size_t none = li.size();
    row.intensity_rmse = root_mean(li, none);
    row.density_rmse = root_mean(ld, none);
    row.intensity_se = jackknife_se(li.size(), [&](std::size_t i) { return root_mean(li, i); });
    row.density_se = jackknife_se(ld.size(), [&](std::size_t i) { return root_mean(ld, i); });
  } else {
    row.intensity_rmse = row.density_rmse = row.intensity_se = row.density_se = std::nan("");
  }
  return {row};
}

std::vector<Table1Row> run_table1(const StudyConfig& config, const std::vector<ZetaPolicy>& policies) {
  StudyConfig c = config;
  c.run_cv = std::find(policies.begin(), policies.end(), ZetaPolicy::Cv) != policies.end();
  const StudyResult s = run_study(c);
  std::vector<Table1Row> rows;
  for (ZetaPolicy p : policies) {
    auto r = table1_rows(s, p);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  return rows;
}

std::vector<Table2Row> run_table2(const StudyConfig& config) {
  StudyConfig c = config;
  c.run_cv = true;
  return table2_rows(run_study(c), ZetaPolicy::Cv);
}

}  // namespace icpp
