#include "icpp/model.hpp"

#include "enumerate.hpp"
#include "icpp/errors.hpp"
#include "icpp/kernels.hpp"
#include "icpp/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace icpp {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

kernels::ConstMatrixView view(const Eigen::MatrixXd& m) {
  return {m.data(), static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())};
}

void check_points(const BasisSystem& basis, std::span<const Point> points) {
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!basis.region().contains(points[i])) {
      throw Error(ErrorKind::OutOfRegion, "point " + std::to_string(i) + " outside region");
    }
  }
}

void check_supported(const Eigen::MatrixXd& phi) {
  for (Eigen::Index j = 0; j < phi.rows(); ++j) {
    if (!(phi.row(j).maxCoeff() > 0.0)) {
      throw Error(ErrorKind::PatternUnsupported,
                  "all component densities vanish at point " + std::to_string(j));
    }
  }
}

}  // namespace

std::vector<std::size_t> ModelParams::canonicalize() {
  const std::size_t p = components();
  std::vector<std::size_t> perm(p);
  std::iota(perm.begin(), perm.end(), 0);
  std::stable_sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) {
    const double ma = scores.mean(a);
    const double mb = scores.mean(b);
    if (ma != mb) return ma > mb;
    const auto ra = coeffs.row(static_cast<Eigen::Index>(a));
    const auto rb = coeffs.row(static_cast<Eigen::Index>(b));
    for (Eigen::Index j = 0; j < ra.size(); ++j) {
      if (ra[j] != rb[j]) return ra[j] > rb[j];
    }
    return false;
  });
  Eigen::MatrixXd c(coeffs.rows(), coeffs.cols());
  Eigen::VectorXd al(scores.alphas.size());
  for (std::size_t i = 0; i < p; ++i) {
    c.row(static_cast<Eigen::Index>(i)) = coeffs.row(static_cast<Eigen::Index>(perm[i]));
    al[static_cast<Eigen::Index>(i)] = scores.alphas[static_cast<Eigen::Index>(perm[i])];
  }
  coeffs = std::move(c);
  scores.alphas = std::move(al);
  return perm;
}

void validate(const ModelParams& model, const BasisSystem& basis, double tol) {
  const auto& a = basis.integrals();
  if (model.coeffs.cols() != a.size()) {
    throw Error(ErrorKind::InvalidArgument, "coefficient matrix width does not match basis size");
  }
  if (model.coeffs.rows() < 1 || model.scores.alphas.size() != model.coeffs.rows()) {
    throw Error(ErrorKind::InvalidArgument, "need p >= 1 components with one alpha each");
  }
  if (!(model.scores.beta > 0.0) || !std::isfinite(model.scores.beta)) {
    throw Error(ErrorKind::InvalidArgument, "beta must be positive");
  }
  for (Eigen::Index k = 0; k < model.coeffs.rows(); ++k) {
    if (!(model.scores.alphas[k] > 0.0) || !std::isfinite(model.scores.alphas[k])) {
      throw Error(ErrorKind::InvalidArgument, "alpha must be positive");
    }
    if (!model.coeffs.row(k).allFinite() || model.coeffs.row(k).minCoeff() < 0.0) {
      throw Error(ErrorKind::InvalidArgument, "coefficients must be finite and non-negative");
    }
    const double mass = model.coeffs.row(k).dot(a);
    if (std::abs(mass - 1.0) > tol) {
      throw Error(ErrorKind::InvalidArgument,
                  "component " + std::to_string(k) + " violates a'c = 1 (got " + std::to_string(mass) + ")");
    }
  }
}

Eigen::VectorXd project_to_constraint(const Eigen::VectorXd& c, const Eigen::VectorXd& a) {
  const Eigen::Index q = c.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(q));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](Eigen::Index i, Eigen::Index j) { return c[i] / a[i] > c[j] / a[j]; });
  double s_ac = 0.0;
  double s_aa = 0.0;
  double tau = 0.0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    const Eigen::Index j = order[r];
    s_ac += a[j] * c[j];
    s_aa += a[j] * a[j];
    tau = (s_ac - 1.0) / s_aa;
    const bool last = r + 1 == order.size();
    if (last || tau >= c[order[r + 1]] / a[order[r + 1]]) break;
  }
  Eigen::VectorXd x = (c - tau * a).cwiseMax(0.0);
  // One rescale removes the rounding drift in aᵀx.
  const double mass = x.dot(a);
  if (mass > 0.0) x /= mass;
  return x;
}

PatternDesign build_design(const BasisSystem& basis, std::span<const PointPattern> patterns) {
  PatternDesign d;
  d.offsets.reserve(patterns.size() + 1);
  d.offsets.push_back(0);
  for (const auto& pat : patterns) d.offsets.push_back(d.offsets.back() + pat.size());
  const std::size_t n_points = d.offsets.back();
  const std::size_t q = basis.size();
  d.rows.resize(static_cast<Eigen::Index>(n_points), static_cast<Eigen::Index>(q));
  std::vector<double> row(q);
  std::size_t r = 0;
  for (std::size_t i = 0; i < patterns.size(); ++i) {
    for (std::size_t j = 0; j < patterns[i].size(); ++j, ++r) {
      const Point& t = patterns[i].points[j];
      if (!basis.region().contains(t)) {
        throw Error(ErrorKind::OutOfRegion, "replication '" + patterns[i].id + "' point " +
                                                std::to_string(j) + " outside region");
      }
      basis.values_at(t, row);
      for (std::size_t c = 0; c < q; ++c) {
        d.rows(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row[c];
      }
    }
  }
  return d;
}

Eigen::MatrixXd component_matrix(const Eigen::MatrixXd& design_rows, const Eigen::MatrixXd& coeffs) {
  Eigen::MatrixXd phi(design_rows.rows(), coeffs.rows());
  Eigen::VectorXd ck(coeffs.cols());
  for (Eigen::Index k = 0; k < coeffs.rows(); ++k) {
    ck = coeffs.row(k).transpose();
    kernels::gemv(view(design_rows), {ck.data(), static_cast<std::size_t>(ck.size())},
                  {phi.col(k).data(), static_cast<std::size_t>(phi.rows())});
  }
  return phi;
}

Eigen::VectorXd component_density(const ModelParams& model, const BasisSystem& basis, std::size_t k,
                                  std::span<const Point> points) {
  if (k >= model.components()) {
    throw Error(ErrorKind::InvalidArgument, "component index " + std::to_string(k) + " out of range");
  }
  const Eigen::MatrixXd rows = basis.evaluate(points);
  return rows * model.coeffs.row(static_cast<Eigen::Index>(k)).transpose();
}

Eigen::VectorXd intensity(const ModelParams& model, const BasisSystem& basis,
                          const Eigen::VectorXd& u, std::span<const Point> points) {
  if (u.size() != model.coeffs.rows()) throw Error(ErrorKind::InvalidArgument, "score vector has wrong length");
  if ((u.array() < 0.0).any()) throw Error(ErrorKind::InvalidArgument, "scores must be non-negative");
  const Eigen::MatrixXd rows = basis.evaluate(points);
  return rows * (model.coeffs.transpose() * u);
}

double complete_loglik(const ModelParams& model, const BasisSystem& basis,
                       const PointPattern& pattern, const Eigen::VectorXd& u,
                       std::span<const std::size_t> labels) {
  const std::size_t p = model.components();
  if (labels.size() != pattern.size()) throw Error(ErrorKind::InvalidArgument, "one label per point required");
  if (u.size() != static_cast<Eigen::Index>(p) || !(u.array() > 0.0).all()) {
    throw Error(ErrorKind::InvalidArgument, "scores must be positive, one per component");
  }
  const auto& s = model.scores;
  double value = -u.sum();
  for (std::size_t k = 0; k < p; ++k) {
    const double a = s.alphas[static_cast<Eigen::Index>(k)];
    const double uk = u[static_cast<Eigen::Index>(k)];
    value += (a - 1.0) * std::log(uk) - uk / s.beta - a * std::log(s.beta) - std::lgamma(a);
  }
  if (pattern.size() == 0) return value;
  const Eigen::MatrixXd rows = basis.evaluate(pattern.points);
  for (std::size_t j = 0; j < labels.size(); ++j) {
    if (labels[j] >= p) throw Error(ErrorKind::InvalidArgument, "label out of range");
    const auto k = static_cast<Eigen::Index>(labels[j]);
    const double phi = rows.row(static_cast<Eigen::Index>(j)).dot(model.coeffs.row(k));
    if (!(phi > 0.0)) return kNegInf;
    value += std::log(u[k]) + std::log(phi);
  }
  return value;
}

bool enumeration_feasible(std::size_t m, std::size_t p, double budget) {
  if (p <= 1 || m == 0) return true;
  return static_cast<double>(m) * std::log(static_cast<double>(p)) <= std::log(budget) + 1e-12;
}

double marginal_loglik_exact(const Eigen::MatrixXd& phi, const ScoreParams& scores, double budget) {
  const auto m = static_cast<std::size_t>(phi.rows());
  const auto p = static_cast<std::size_t>(phi.cols());
  if (!enumeration_feasible(m, p, budget)) {
    throw Error(ErrorKind::EnumerationBudget, "p^m exceeds the enumeration budget");
  }
  check_supported(phi);
  const double log_prior_mass = -scores.alphas.sum() * std::log1p(scores.beta);
  if (p == 1) {
    const double a = scores.alphas[0];
    double v = log_prior_mass + std::lgamma(a + static_cast<double>(m)) - std::lgamma(a) +
               static_cast<double>(m) * std::log(scores.posterior_scale());
    for (std::size_t j = 0; j < m; ++j) v += std::log(phi(static_cast<Eigen::Index>(j), 0));
    return v;
  }
  const Eigen::MatrixXd table = detail::count_weight_table(scores.alphas, std::log(scores.posterior_scale()), m);
  const Eigen::MatrixXd log_phi = phi.array().log().matrix();
  detail::LogSumExp lse;
  detail::enumerate_labelings(log_phi, [&](auto, std::span<const std::size_t> counts, double lp) {
    if (lp == kNegInf) return;
    double w = lp;
    for (std::size_t k = 0; k < p; ++k) w += table(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(counts[k]));
    lse.add(w);
  });
  return log_prior_mass + lse.value();
}

LogLikResult marginal_loglik_phi(const Eigen::MatrixXd& phi, const ScoreParams& scores,
                                 const MarginalOptions& options) {
  const auto m = static_cast<std::size_t>(phi.rows());
  const auto p = static_cast<std::size_t>(phi.cols());
  if (static_cast<Eigen::Index>(p) != scores.alphas.size()) {
    throw Error(ErrorKind::InvalidArgument, "phi columns do not match the number of components");
  }
  check_supported(phi);
  bool exact = false;
  switch (options.mode) {
    case MarginalOptions::Mode::Exact: exact = true; break;
    case MarginalOptions::Mode::MonteCarlo: exact = false; break;
    case MarginalOptions::Mode::Auto: exact = enumeration_feasible(m, p, options.enumeration_budget); break;
  }
  if (exact) return {marginal_loglik_exact(phi, scores, options.enumeration_budget), 0.0, LogLikMethod::Exact};
  if (options.draws < 1) throw Error(ErrorKind::InvalidArgument, "need at least one Monte-Carlo draw");

  // f(x) = (1+β)^{-Σα} E[S'^m] E_W[∏_j Σ_k W_k φ_k(t_j)], with S' ~ Gamma(Σα, β/(1+β))
  // independent of W ~ Dirichlet(α); the first expectation is closed form.
  const double alpha_sum = scores.alphas.sum();
  const double md = static_cast<double>(m);
  const double constant = -alpha_sum * std::log1p(scores.beta) + std::lgamma(alpha_sum + md) -
                          std::lgamma(alpha_sum) + md * std::log(scores.posterior_scale());
  if (p == 1 || m == 0) {
    double v = constant;
    for (std::size_t j = 0; j < m; ++j) v += std::log(phi.row(static_cast<Eigen::Index>(j)).sum());
    // p == 1: W ≡ 1, so the estimator is exact.
    return {v, 0.0, LogLikMethod::MonteCarlo};
  }

  const std::size_t draws = options.draws;
  std::vector<double> weights(p * draws);
  Rng rng = make_rng(options.seed);
  for (std::size_t d = 0; d < draws; ++d) {
    double total = 0.0;
    for (std::size_t k = 0; k < p; ++k) {
      const double v = gamma_draw(rng, scores.alphas[static_cast<Eigen::Index>(k)], 1.0);
      weights[k * draws + d] = v;
      total += v;
    }
    for (std::size_t k = 0; k < p; ++k) weights[k * draws + d] /= total;
  }
  std::vector<double> logs(draws);
  kernels::log_mixture_products(view(phi), weights, logs);

  const double mx = *std::max_element(logs.begin(), logs.end());
  double mean = 0.0;
  for (double l : logs) mean += std::exp(l - mx);
  mean /= static_cast<double>(draws);
  double var = 0.0;
  for (double l : logs) {
    const double e = std::exp(l - mx) - mean;
    var += e * e;
  }
  double se = 0.0;
  if (draws > 1) {
    var /= static_cast<double>(draws - 1);
    se = std::sqrt(var / static_cast<double>(draws)) / mean;
  }
  return {constant + mx + std::log(mean), se, LogLikMethod::MonteCarlo};
}

LogLikResult marginal_loglik(const ModelParams& model, const BasisSystem& basis,
                             const PointPattern& pattern, const MarginalOptions& options) {
  const Eigen::MatrixXd rows = basis.evaluate(pattern.points);
  return marginal_loglik_phi(component_matrix(rows, model.coeffs), model.scores, options);
}

void EStepStats::permute(const std::vector<std::size_t>& perm) {
  for (auto& r : reps) {
    Eigen::MatrixXd g(r.gamma.rows(), r.gamma.cols());
    Eigen::VectorXd e(r.euk.size());
    Eigen::VectorXd l(r.elogu.size());
    for (std::size_t k = 0; k < perm.size(); ++k) {
      const auto nk = static_cast<Eigen::Index>(k);
      const auto ok = static_cast<Eigen::Index>(perm[k]);
      g.col(nk) = r.gamma.col(ok);
      e[nk] = r.euk[ok];
      l[nk] = r.elogu[ok];
    }
    r.gamma = std::move(g);
    r.euk = std::move(e);
    r.elogu = std::move(l);
  }
}

Eigen::VectorXd posterior_intensity(const ModelParams& model, const BasisSystem& basis,
                                    const PointPattern& pattern, const ReplicationStats& stats,
                                    std::span<const Point> grid) {
  if (stats.gamma.rows() != static_cast<Eigen::Index>(pattern.size()) ||
      stats.euk.size() != static_cast<Eigen::Index>(model.components())) {
    throw Error(ErrorKind::InvalidArgument, "E-step statistics do not belong to this pattern/model");
  }
  check_points(basis, grid);
  const Eigen::MatrixXd rows = basis.evaluate(grid);
  return (rows * (model.coeffs.transpose() * stats.euk)).cwiseMax(0.0);
}

}  // namespace icpp
