#include "icpp/fit.hpp"

#include "icpp/errors.hpp"
#include "icpp/parallel.hpp"
#include "icpp/qp.hpp"
#include "icpp/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <utility>

namespace icpp {
namespace {

double sq_dist(const Point& a, const Point& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return dx * dx + dy * dy;
}

// Lloyd iterations from a k-means++ start. Returns a label per point.
std::vector<std::size_t> kmeans(const std::vector<Point>& pts, std::size_t k, std::uint64_t seed) {
  Rng rng = make_rng(derive_seed(seed, "kmeans"));
  const std::size_t n = pts.size();
  std::vector<Point> centers;
  centers.push_back(pts[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)]);
  std::vector<double> d2(n);
  while (centers.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centers) best = std::min(best, sq_dist(pts[i], c));
      d2[i] = best;
      total += best;
    }
    double target = uniform01(rng) * total;
    std::size_t pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      target -= d2[i];
      if (target < 0.0 && d2[i] > 0.0) {
        pick = i;
        break;
      }
    }
    while (d2[pick] == 0.0 && pick > 0) --pick;
    centers.push_back(pts[pick]);
  }
  std::vector<std::size_t> label(n, 0);
  for (int it = 0; it < 100; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double bd = sq_dist(pts[i], centers[0]);
      for (std::size_t c = 1; c < k; ++c) {
        const double d = sq_dist(pts[i], centers[c]);
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      if (best != label[i] || it == 0) changed = changed || best != label[i];
      label[i] = best;
    }
    std::vector<Point> sum(k);
    std::vector<std::size_t> cnt(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sum[label[i]].x += pts[i].x;
      sum[label[i]].y += pts[i].y;
      ++cnt[label[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (cnt[c] > 0) centers[c] = {sum[c].x / static_cast<double>(cnt[c]), sum[c].y / static_cast<double>(cnt[c])};
    }
    if (!changed && it > 0) break;
  }
  return label;
}

// Gaussian kernel density estimate of `pts` at `nodes` (bandwidth by
// Silverman's rule per coordinate, floored at 1% of the region width).
Eigen::VectorXd smoothed_histogram(const std::vector<Point>& pts, const std::vector<Point>& nodes,
                                   const Region& region) {
  constexpr std::size_t kMaxPoints = 2000;
  const std::size_t stride = std::max<std::size_t>(1, pts.size() / kMaxPoints);
  std::vector<Point> use;
  for (std::size_t i = 0; i < pts.size(); i += stride) use.push_back(pts[i]);
  const double n = static_cast<double>(use.size());
  const Box box = region.bounds();
  auto bw = [&](auto get, double width) {
    double mean = 0.0;
    for (const auto& t : use) mean += get(t);
    mean /= n;
    double var = 0.0;
    for (const auto& t : use) var += (get(t) - mean) * (get(t) - mean);
    var /= std::max(1.0, n - 1.0);
    const double exponent = region.dimension() == 1 ? -0.2 : -1.0 / 6.0;
    return std::max(1.06 * std::sqrt(var) * std::pow(n, exponent), 0.01 * width);
  };
  const double hx = bw([](const Point& t) { return t.x; }, box.hi.x - box.lo.x);
  const double hy = region.dimension() == 2 ? bw([](const Point& t) { return t.y; }, box.hi.y - box.lo.y) : 1.0;
  Eigen::VectorXd out(static_cast<Eigen::Index>(nodes.size()));
  for (std::size_t r = 0; r < nodes.size(); ++r) {
    double s = 0.0;
    for (const auto& t : use) {
      const double zx = (nodes[r].x - t.x) / hx;
      double e = zx * zx;
      if (region.dimension() == 2) {
        const double zy = (nodes[r].y - t.y) / hy;
        e += zy * zy;
      }
      s += std::exp(-0.5 * e);
    }
    out[static_cast<Eigen::Index>(r)] = s / n;
  }
  return out;
}

Eigen::VectorXd uniform_feasible(const Eigen::VectorXd& a) { return a / a.squaredNorm(); }

double roughness(const ModelParams& model, const BasisSystem& basis) {
  double s = 0.0;
  for (Eigen::Index k = 0; k < model.coeffs.rows(); ++k) {
    const Eigen::VectorXd c = model.coeffs.row(k).transpose();
    s += c.dot(basis.penalty() * c);
  }
  return s;
}

// Σ_i log f(x_i; θ) from a precomputed component matrix.
double total_loglik(const Eigen::MatrixXd& phi, const PatternDesign& design,
                    std::span<const PointPattern> patterns, const ScoreParams& scores, bool exact,
                    double budget, std::size_t draws, std::uint64_t seed) {
  std::vector<double> parts(design.patterns());
  parallel_for(design.patterns(), [&](std::size_t i) {
    MarginalOptions opt;
    opt.mode = exact ? MarginalOptions::Mode::Exact : MarginalOptions::Mode::Auto;
    opt.enumeration_budget = exact ? std::max(budget, 1.0) : 1.0;
    opt.draws = draws;
    opt.seed = derive_seed(seed, "monitor", {fnv1a(patterns[i].id)});
    const auto start = static_cast<Eigen::Index>(design.offsets[i]);
    const auto len = static_cast<Eigen::Index>(design.points(i));
    parts[i] = marginal_loglik_phi(phi.middleRows(start, len), scores, opt).value;
  });
  double s = 0.0;
  for (double v : parts) s += v;
  return s;
}

Eigen::VectorXd flatten(const ModelParams& m) {
  const Eigen::Index pq = m.coeffs.size();
  const Eigen::Index p = m.scores.alphas.size();
  Eigen::VectorXd v(pq + p + 1);
  Eigen::Index i = 0;
  for (Eigen::Index k = 0; k < m.coeffs.rows(); ++k) {
    for (Eigen::Index j = 0; j < m.coeffs.cols(); ++j) v[i++] = m.coeffs(k, j);
  }
  for (Eigen::Index k = 0; k < p; ++k) v[i++] = std::log(m.scores.alphas[k]);
  v[i] = std::log(m.scores.beta);
  return v;
}

// Squared extrapolation from θ0 → θ1 → θ2 (two EM steps); scores are
// extrapolated on the log scale and coefficient rows projected back onto the
// constraint set. Returns nothing when plain EM is as good a guess.
std::optional<ModelParams> extrapolate(const ModelParams& t0, const ModelParams& t1, const ModelParams& t2,
                                       const Eigen::VectorXd& a) {
  const Eigen::VectorXd v0 = flatten(t0);
  const Eigen::VectorXd r = flatten(t1) - v0;
  const Eigen::VectorXd v = flatten(t2) - flatten(t1) - r;
  const double vn = v.norm();
  if (!(vn > 0.0)) return std::nullopt;
  const double step = std::max(-r.norm() / vn, -100.0);
  if (!(step < -1.0)) return std::nullopt;
  const Eigen::VectorXd x = v0 - 2.0 * step * r + step * step * v;
  if (!x.allFinite()) return std::nullopt;
  ModelParams out;
  out.coeffs.resize(t0.coeffs.rows(), t0.coeffs.cols());
  Eigen::Index i = 0;
  for (Eigen::Index k = 0; k < out.coeffs.rows(); ++k) {
    Eigen::VectorXd c(out.coeffs.cols());
    for (Eigen::Index j = 0; j < c.size(); ++j) c[j] = x[i++];
    out.coeffs.row(k) = project_to_constraint(c, a).transpose();
  }
  out.scores.alphas.resize(t0.scores.alphas.size());
  for (Eigen::Index k = 0; k < out.scores.alphas.size(); ++k) out.scores.alphas[k] = std::exp(x[i++]);
  out.scores.beta = std::exp(x[i]);
  if (!out.scores.alphas.allFinite() || !(out.scores.alphas.minCoeff() > 0.0) || !std::isfinite(out.scores.beta) ||
      !(out.scores.beta > 0.0)) {
    return std::nullopt;
  }
  return out;
}

bool supported(const Eigen::MatrixXd& phi) {
  for (Eigen::Index r = 0; r < phi.rows(); ++r) {
    if (!(phi.row(r).maxCoeff() > 0.0)) return false;
  }
  return true;
}

}  // namespace

void FitConfig::validate() const {
  if (!(zeta >= 0.0) || !std::isfinite(zeta)) throw Error(ErrorKind::Config, "zeta must be finite and >= 0");
  if (max_outer_iters < 1) throw Error(ErrorKind::Config, "max outer iterations must be >= 1");
  if (gibbs_sweeps < kMinGibbsSweeps) throw Error(ErrorKind::Config, "Gibbs sweeps must be >= 10");
  if (!(inner.tol > 0.0) || !(outer_tol > 0.0)) throw Error(ErrorKind::Config, "tolerances must be > 0");
  if (inner.max_iters < 1 || patience < 1) throw Error(ErrorKind::Config, "iteration limits must be >= 1");
  if (monitor_draws < 1) throw Error(ErrorKind::Config, "monitor draws must be >= 1");
}

ModelParams initialize(std::span<const PointPattern> patterns, const BasisSystem& basis,
                       std::size_t p, std::uint64_t seed) {
  if (p < 1) throw Error(ErrorKind::InvalidArgument, "p must be >= 1");
  std::vector<Point> pooled;
  for (const auto& pat : patterns) pooled.insert(pooled.end(), pat.points.begin(), pat.points.end());
  if (pooled.size() < basis.size()) {
    throw Error(ErrorKind::TooFewPoints, "pooled point count is below the basis size");
  }
  std::set<std::pair<double, double>> distinct;
  for (const auto& t : pooled) {
    distinct.emplace(t.x, t.y);
    if (distinct.size() >= p) break;
  }
  if (distinct.size() < p) throw Error(ErrorKind::TooFewPoints, "fewer distinct points than components");

  const std::vector<std::size_t> label = kmeans(pooled, p, seed);
  const QuadratureRule quad = build_quadrature(basis.region(), basis.region().dimension() == 1 ? 64 : 40);
  const Eigen::MatrixXd node_rows = basis.evaluate(quad.nodes);
  Eigen::VectorXd sw(static_cast<Eigen::Index>(quad.size()));
  for (std::size_t r = 0; r < quad.size(); ++r) sw[static_cast<Eigen::Index>(r)] = std::sqrt(quad.weights[r]);
  const Eigen::MatrixXd B = sw.asDiagonal() * node_rows;
  const Eigen::VectorXd& a = basis.integrals();
  const Eigen::VectorXd flat = uniform_feasible(a);

  ModelParams model;
  model.coeffs.resize(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(basis.size()));
  model.scores.alphas.resize(static_cast<Eigen::Index>(p));
  model.scores.beta = 1.0;
  const double mean_count = static_cast<double>(pooled.size()) / static_cast<double>(patterns.size());
  for (std::size_t k = 0; k < p; ++k) {
    std::vector<Point> members;
    for (std::size_t i = 0; i < pooled.size(); ++i) {
      if (label[i] == k) members.push_back(pooled[i]);
    }
    Eigen::VectorXd c = flat;
    if (!members.empty()) {
      const Eigen::VectorXd target = sw.cwiseProduct(smoothed_histogram(members, quad.nodes, basis.region()));
      const Eigen::VectorXd x = nnls(B, target);
      const double mass = a.dot(x);
      if (mass > 0.0) c = x / mass;
    }
    // A small uniform share keeps every data point supported by some component.
    model.coeffs.row(static_cast<Eigen::Index>(k)) = (0.95 * c + 0.05 * flat).transpose();
    const double share = static_cast<double>(members.size()) / static_cast<double>(pooled.size());
    model.scores.alphas[static_cast<Eigen::Index>(k)] = std::max(share * mean_count, 1e-3);
  }
  model.canonicalize();
  return model;
}

double penalized_objective(const ModelParams& model, const BasisSystem& basis,
                           std::span<const PointPattern> patterns, double zeta,
                           const MarginalOptions& options) {
  if (patterns.empty()) throw Error(ErrorKind::InvalidArgument, "no patterns");
  const PatternDesign design = build_design(basis, patterns);
  const Eigen::MatrixXd phi = component_matrix(design.rows, model.coeffs);
  bool exact = options.mode == MarginalOptions::Mode::Exact;
  if (options.mode == MarginalOptions::Mode::Auto) {
    exact = std::all_of(patterns.begin(), patterns.end(), [&](const PointPattern& pat) {
      return enumeration_feasible(pat.size(), model.components(), options.enumeration_budget);
    });
  }
  const double ll = total_loglik(phi, design, patterns, model.scores, exact, options.enumeration_budget,
                                 options.draws, options.seed);
  return ll / static_cast<double>(patterns.size()) - zeta * roughness(model, basis);
}

FitResult fit(std::span<const PointPattern> patterns, const BasisSystem& basis, std::size_t p,
              const FitConfig& config) {
  config.validate();
  if (patterns.empty()) throw Error(ErrorKind::InvalidArgument, "no patterns to fit");
  {
    std::set<std::string> ids;
    for (const auto& pat : patterns) {
      if (!ids.insert(pat.id).second) throw Error(ErrorKind::InvalidArgument, "duplicate replication id '" + pat.id + "'");
    }
  }
  ModelParams params = config.start ? *config.start : initialize(patterns, basis, p, config.seed);
  if (params.components() != p) throw Error(ErrorKind::InvalidArgument, "start has the wrong number of components");
  validate(params, basis, 1e-8);

  const PatternDesign design = build_design(basis, patterns);
  const double n = static_cast<double>(patterns.size());
  const bool exact = std::all_of(patterns.begin(), patterns.end(), [&](const PointPattern& pat) {
    return enumeration_feasible(pat.size(), p, config.exact_budget);
  });
  const std::uint64_t monitor_seed = derive_seed(config.seed, "monitor");

  auto objective = [&](const ModelParams& m, const Eigen::MatrixXd& phi) {
    return total_loglik(phi, design, patterns, m.scores, exact, config.exact_budget, config.monitor_draws,
                        monitor_seed) / n - config.zeta * roughness(m, basis);
  };
  // Sweeps grow with the outer iteration. All E-steps of one outer iteration
  // share a stream, so the extrapolation sees a smooth map rather than MC noise.
  auto e_step = [&](const ModelParams& m, const Eigen::MatrixXd& phi, int outer) {
    if (exact) return e_step_exact_phi(phi, design, m.scores, config.exact_budget);
    const std::size_t sweeps = config.gibbs_sweeps + config.gibbs_sweeps * static_cast<std::size_t>(outer) / 5;
    return e_step_gibbs_phi(phi, design, patterns, m.scores, sweeps,
                            derive_seed(config.seed, "estep", {static_cast<std::uint64_t>(outer)}));
  };

  FitResult res;
  res.exact_e_step = exact;
  res.starved.assign(p, false);
  int step = 0;
  int t = 0;
  // One EM pass from m; returns the updated parameters.
  auto em_step = [&](const ModelParams& m, const Eigen::MatrixXd& phi_m) {
    const EStepStats stats = e_step(m, phi_m, t);
    ++step;
    ComponentsUpdate cu = m_step_components(stats, design, basis, config.zeta, m.coeffs, config.inner);
    ModelParams next;
    next.scores = m_step_gamma(stats, config.inner);
    for (std::size_t k = 0; k < p; ++k) {
      if (cu.degenerate[k]) {
        const auto kk = static_cast<Eigen::Index>(k);
        next.scores.alphas[kk] = 0.1 + 0.5 * (m.scores.alphas[kk] - 0.1);
        res.starved[k] = true;
      }
    }
    next.coeffs = std::move(cu.coeffs);
    return next;
  };

  Eigen::MatrixXd phi = component_matrix(design.rows, params.coeffs);
  res.objective_trace.push_back(objective(params, phi));
  int calm = 0;
  for (; t < config.max_outer_iters; ++t) {
    ModelParams next = em_step(params, phi);
    Eigen::MatrixXd next_phi = component_matrix(design.rows, next.coeffs);
    double rho = 0.0;
    if (config.accelerate) {
      ModelParams second = em_step(next, next_phi);
      Eigen::MatrixXd second_phi = component_matrix(design.rows, second.coeffs);
      rho = objective(second, second_phi);
      if (auto ext = extrapolate(params, next, second, basis.integrals())) {
        Eigen::MatrixXd ext_phi = component_matrix(design.rows, ext->coeffs);
        if (supported(ext_phi)) {
          try {
            ModelParams third = em_step(*ext, ext_phi);
            Eigen::MatrixXd third_phi = component_matrix(design.rows, third.coeffs);
            const double rho3 = objective(third, third_phi);
            if (rho3 >= rho) {
              second = std::move(third);
              second_phi = std::move(third_phi);
              rho = rho3;
            }
          } catch (const Error&) {
            // Extrapolated point unusable; keep the plain EM iterate.
          }
        }
      }
      next = std::move(second);
      next_phi = std::move(second_phi);
    } else {
      rho = objective(next, next_phi);
    }
    params = std::move(next);
    phi = std::move(next_phi);
    const double change = std::abs(rho - res.objective_trace.back());
    res.objective_trace.push_back(rho);
    calm = change < config.outer_tol ? calm + 1 : 0;
    if (calm >= config.patience) {
      res.converged = true;
      ++t;
      break;
    }
  }
  res.iterations = t;
  res.em_steps = step;
  res.e_stats = e_step(params, phi, t);
  const std::vector<std::size_t> perm = params.canonicalize();
  res.e_stats.permute(perm);
  std::vector<bool> starved(p);
  for (std::size_t k = 0; k < p; ++k) starved[k] = res.starved[perm[k]];
  res.starved = std::move(starved);
  res.params = std::move(params);
  return res;
}

}  // namespace icpp
