#include "icpp/asymptotics.hpp"

#include "icpp/errors.hpp"
#include "icpp/estep.hpp"
#include "icpp/parallel.hpp"
#include "icpp/qp.hpp"
#include "icpp/random.hpp"
#include "icpp/simulation.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/digamma.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace icpp {
namespace {

Eigen::MatrixXd symmetric_sqrt(const Eigen::MatrixXd& f) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(f);
  const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

double quantile_sorted(const std::vector<double>& v, double prob) {
  const double h = prob * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

Eigen::VectorXd flatten_params(const ModelParams& model) {
  const auto p = model.coeffs.rows();
  const auto q = model.coeffs.cols();
  Eigen::VectorXd x(p * q + p + 1);
  for (Eigen::Index k = 0; k < p; ++k) x.segment(k * q, q) = model.coeffs.row(k).transpose();
  x.segment(p * q, p) = model.scores.alphas;
  x[p * q + p] = model.scores.beta;
  return x;
}

std::vector<std::string> parameter_names(std::size_t p, std::size_t q) {
  std::vector<std::string> names;
  for (std::size_t k = 0; k < p; ++k) {
    for (std::size_t j = 0; j < q; ++j) names.push_back("c[" + std::to_string(k + 1) + "][" + std::to_string(j + 1) + "]");
  }
  for (std::size_t k = 0; k < p; ++k) names.push_back("alpha[" + std::to_string(k + 1) + "]");
  names.emplace_back("beta");
  return names;
}

Eigen::VectorXd penalty_gradient(const ModelParams& model, const BasisSystem& basis) {
  const auto p = model.coeffs.rows();
  const auto q = model.coeffs.cols();
  Eigen::VectorXd g = Eigen::VectorXd::Zero(p * q + p + 1);
  for (Eigen::Index k = 0; k < p; ++k) g.segment(k * q, q) = 2.0 * basis.penalty() * model.coeffs.row(k).transpose();
  return g;
}

Eigen::VectorXd pattern_score(const ModelParams& model, const Eigen::MatrixXd& rows, const Eigen::MatrixXd& phi,
                              const ReplicationStats& stats) {
  const auto p = model.coeffs.rows();
  const auto q = model.coeffs.cols();
  Eigen::VectorXd s = Eigen::VectorXd::Zero(p * q + p + 1);
  // c-block: Σ_j γ_jk β(t_j) / φ_k(t_j); terms with γ_jk = 0 drop out.
  for (Eigen::Index k = 0; k < p; ++k) {
    Eigen::VectorXd w(rows.rows());
    for (Eigen::Index j = 0; j < rows.rows(); ++j) {
      const double g = stats.gamma(j, k);
      w[j] = g == 0.0 ? 0.0 : g / phi(j, k);
    }
    s.segment(k * q, q) = rows.transpose() * w;
  }
  const double beta = model.scores.beta;
  const double log_beta = std::log(beta);
  double db = 0.0;
  for (Eigen::Index k = 0; k < p; ++k) {
    const double a = model.scores.alphas[k];
    s[p * q + k] = stats.elogu[k] - log_beta - boost::math::digamma(a);
    db += stats.euk[k] / (beta * beta) - a / beta;
  }
  s[p * q + p] = db;
  return s;
}

FisherInfo make_fisher(const Eigen::MatrixXd& matrix, std::size_t patterns_used) {
  if (matrix.rows() != matrix.cols() || matrix.rows() == 0) {
    throw Error(ErrorKind::InvalidArgument, "information matrix must be square and non-empty");
  }
  FisherInfo info;
  info.matrix = 0.5 * (matrix + matrix.transpose());
  info.patterns_used = patterns_used;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(info.matrix, Eigen::EigenvaluesOnly);
  info.min_eigenvalue = es.eigenvalues().minCoeff();
  info.max_eigenvalue = es.eigenvalues().maxCoeff();
  info.condition = info.min_eigenvalue > 0.0 ? info.max_eigenvalue / info.min_eigenvalue
                                             : std::numeric_limits<double>::infinity();
  info.singular_warning = patterns_used > 0 && patterns_used < info.dim();
  return info;
}

FisherInfo estimate_fisher(const ModelParams& model, const BasisSystem& basis,
                           std::span<const PointPattern> patterns, const FisherOptions& options) {
  if (options.mc_draws < 100) throw Error(ErrorKind::InvalidArgument, "Fisher estimation needs at least 100 draws");
  validate(model, basis, 1e-6);
  const std::size_t p = model.components();

  std::vector<PointPattern> simulated;
  if (options.source == FisherOptions::Source::Generative) {
    std::vector<PatternSampler::Density> dens;
    for (std::size_t k = 0; k < p; ++k) {
      dens.push_back([&model, &basis, k](const Point& t) {
        Eigen::VectorXd b(static_cast<Eigen::Index>(basis.size()));
        basis.values_at(t, {b.data(), basis.size()});
        return std::max(0.0, model.coeffs.row(static_cast<Eigen::Index>(k)).dot(b));
      });
    }
    const PatternSampler sampler(basis.region(), std::move(dens), options.sampler_resolution);
    simulated.resize(options.mc_draws);
    parallel_for(options.mc_draws, [&](std::size_t i) {
      Rng rng = make_rng(derive_seed(options.seed, "fisher-scores", {i}));
      Eigen::VectorXd u(static_cast<Eigen::Index>(p));
      for (std::size_t k = 0; k < p; ++k) u[static_cast<Eigen::Index>(k)] = gamma_draw(rng, model.scores.alphas[static_cast<Eigen::Index>(k)], model.scores.beta);
      simulated[i] = sampler.sample(u, derive_seed(options.seed, "fisher-pattern", {i}), "g" + std::to_string(i + 1));
    });
    patterns = simulated;
  }
  if (patterns.empty()) throw Error(ErrorKind::InvalidArgument, "no patterns for Fisher estimation");

  const std::size_t d = p * model.basis_size() + p + 1;
  std::vector<Eigen::VectorXd> scores(patterns.size());
  parallel_for(patterns.size(), [&](std::size_t i) {
    const Eigen::MatrixXd rows = basis.evaluate(patterns[i].points);
    const Eigen::MatrixXd phi = rows * model.coeffs.transpose();
    const ReplicationStats st =
        enumeration_feasible(patterns[i].size(), p, options.exact_budget)
            ? exact_replication_stats(phi, model.scores, options.exact_budget)
            : gibbs_replication_stats(phi, model.scores, options.mc_draws,
                                      derive_seed(options.seed, "fisher-gibbs", {fnv1a(patterns[i].id)}));
    scores[i] = pattern_score(model, rows, phi, st);
  });
  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  for (const auto& s : scores) f.selfadjointView<Eigen::Lower>().rankUpdate(s);
  const Eigen::MatrixXd full = Eigen::MatrixXd(f.selfadjointView<Eigen::Lower>()) / static_cast<double>(patterns.size());
  FisherInfo info = make_fisher(full, patterns.size());
  info.mc_draws = options.mc_draws;
  return info;
}

TangentCone TangentCone::whole_space(std::size_t dim) {
  TangentCone c;
  c.dim = dim;
  c.equality.resize(0, static_cast<Eigen::Index>(dim));
  c.free_dim = dim;
  return c;
}

TangentCone tangent_cone(const ModelParams& model, const Eigen::VectorXd& a, double activation_tol) {
  const auto p = model.coeffs.rows();
  const auto q = model.coeffs.cols();
  if (a.size() != q) throw Error(ErrorKind::InvalidArgument, "basis integrals do not match the coefficient width");
  const double tol = activation_tol < 0.0 ? 1e-6 * model.coeffs.maxCoeff() : activation_tol;
  TangentCone cone;
  cone.dim = static_cast<std::size_t>(p * q + p + 1);
  cone.free_dim = static_cast<std::size_t>(p + 1);
  cone.active.resize(static_cast<std::size_t>(p));
  cone.equality = Eigen::MatrixXd::Zero(p, static_cast<Eigen::Index>(cone.dim));
  for (Eigen::Index k = 0; k < p; ++k) {
    cone.equality.block(k, k * q, 1, q) = a.transpose();
    for (Eigen::Index j = 0; j < q; ++j) {
      if (model.coeffs(k, j) <= tol) {
        cone.active[static_cast<std::size_t>(k)].push_back(static_cast<std::size_t>(j));
        cone.nonnegative.push_back(static_cast<std::size_t>(k * q + j));
      }
    }
  }
  return cone;
}

DeltaSolve solve_delta(const Eigen::MatrixXd& fisher, const TangentCone& cone, const Eigen::VectorXd& b) {
  const auto d = static_cast<Eigen::Index>(cone.dim);
  if (fisher.rows() != d || b.size() != d) throw Error(ErrorKind::InvalidArgument, "dimension mismatch in the δ problem");
  QpProblem qp;
  qp.H = fisher;
  qp.f = -b;
  qp.E = cone.equality;
  qp.e = Eigen::VectorXd::Zero(cone.equality.rows());
  qp.G = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(cone.nonnegative.size()), d);
  for (std::size_t i = 0; i < cone.nonnegative.size(); ++i) {
    qp.G(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(cone.nonnegative[i])) = 1.0;
  }
  qp.g = Eigen::VectorXd::Zero(qp.G.rows());
  QpResult r = solve_qp(qp, Eigen::VectorXd::Zero(d));
  if (!r.converged) throw Error(ErrorKind::Internal, "δ quadratic program did not converge");
  return {std::move(r.x), r.kkt_residual, r.ridge_added};
}

std::string to_string(AsymptoticResult::Method m) {
  return m == AsymptoticResult::Method::InteriorClosedForm ? "interior-closed-form" : "qp-monte-carlo";
}

AsymptoticResult simulate_delta(const FisherInfo& fisher, const TangentCone& cone, double kappa,
                                const Eigen::VectorXd& grad_penalty, std::size_t draws, std::uint64_t seed) {
  if (draws < 100) throw Error(ErrorKind::InvalidArgument, "need at least 100 δ draws");
  const auto d = static_cast<Eigen::Index>(fisher.dim());
  if (grad_penalty.size() != d) throw Error(ErrorKind::InvalidArgument, "penalty gradient has the wrong length");
  if (fisher.min_eigenvalue < -1e-8 * std::max(1.0, std::abs(fisher.max_eigenvalue))) {
    throw Error(ErrorKind::InvalidArgument, "information matrix is not positive semidefinite");
  }
  const Eigen::MatrixXd root = symmetric_sqrt(fisher.matrix);
  const Eigen::VectorXd shift = kappa * grad_penalty;

  AsymptoticResult res;
  res.method = AsymptoticResult::Method::QpMonteCarlo;
  res.kappa = kappa;
  res.active.assign(static_cast<std::size_t>(d), false);
  for (std::size_t j : cone.nonnegative) res.active[j] = true;
  res.draws.resize(static_cast<Eigen::Index>(draws), d);
  std::vector<double> kkt(draws, 0.0);
  std::vector<char> ridge(draws, 0);
  parallel_for(draws, [&](std::size_t i) {
    Rng rng = make_rng(derive_seed(seed, "delta", {i}));
    std::normal_distribution<double> normal;
    Eigen::VectorXd xi(d);
    for (Eigen::Index j = 0; j < d; ++j) xi[j] = normal(rng);
    const DeltaSolve s = solve_delta(fisher.matrix, cone, root * xi - shift);
    res.draws.row(static_cast<Eigen::Index>(i)) = s.delta.transpose();
    kkt[i] = s.kkt_residual;
    ridge[i] = s.ridge_added;
  });
  res.max_kkt_residual = *std::max_element(kkt.begin(), kkt.end());
  res.ridge_added = std::any_of(ridge.begin(), ridge.end(), [](char c) { return c != 0; });
  res.mean = res.draws.colwise().mean().transpose();
  const Eigen::MatrixXd centered = res.draws.rowwise() - res.mean.transpose();
  res.covariance = centered.transpose() * centered / static_cast<double>(draws - 1);
  res.variances = res.covariance.diagonal();
  return res;
}

Eigen::MatrixXd constraint_null_space(const Eigen::VectorXd& a, std::size_t p) {
  const Eigen::Index q = a.size();
  if (q < 1 || !(a.norm() > 0.0)) throw Error(ErrorKind::InvalidArgument, "basis integrals must be non-zero");
  // The Householder reflector of a maps a to a multiple of e₁; its other
  // columns span aᗮ and are orthonormal.
  const Eigen::MatrixXd column = a;
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(column);
  const Eigen::MatrixXd Q = qr.householderQ();
  const Eigen::MatrixXd block = Q.rightCols(q - 1);
  const auto pp = static_cast<Eigen::Index>(p);
  Eigen::MatrixXd gamma = Eigen::MatrixXd::Zero(pp * q, pp * (q - 1));
  for (Eigen::Index k = 0; k < pp; ++k) gamma.block(k * q, k * (q - 1), q, q - 1) = block;
  return gamma;
}

InteriorVariance variance_interior(const FisherInfo& fisher, const Eigen::VectorXd& a, double kappa,
                                   const Eigen::VectorXd& grad_penalty) {
  const auto d = static_cast<Eigen::Index>(fisher.dim());
  const Eigen::Index q = a.size();
  // d = p·q + p + 1
  if ((d - 1) % (q + 1) != 0) throw Error(ErrorKind::InvalidArgument, "information size does not match the basis");
  const Eigen::Index p = (d - 1) / (q + 1);
  if (grad_penalty.size() != d) throw Error(ErrorKind::InvalidArgument, "penalty gradient has the wrong length");

  InteriorVariance out;
  out.gamma = constraint_null_space(a, static_cast<std::size_t>(p));
  const Eigen::Index r = p + 1;
  out.A = Eigen::MatrixXd::Zero(d, out.gamma.cols() + r);
  out.A.topLeftCorner(p * q, out.gamma.cols()) = out.gamma;
  out.A.bottomRightCorner(r, r).setIdentity();
  out.reduced = out.A.transpose() * fisher.matrix * out.A;
  out.reduced = 0.5 * (out.reduced + out.reduced.transpose());

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(out.reduced);
  const double top = es.eigenvalues().cwiseAbs().maxCoeff();
  const double low = es.eigenvalues().minCoeff();
  if (!(low > 1e-10 * top)) {
    std::ostringstream msg;
    msg << "reduced information is singular (eigenvalue " << low << "); null direction in θ:";
    const Eigen::VectorXd dir = out.A * es.eigenvectors().col(0);
    for (Eigen::Index j = 0; j < dir.size(); ++j) msg << ' ' << dir[j];
    throw Error(ErrorKind::RankDeficient, msg.str());
  }
  const Eigen::MatrixXd inv =
      es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
  out.covariance = out.A * inv * out.A.transpose();
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose());
  if (kappa == 0.0) {
    out.mean = Eigen::VectorXd::Zero(d);
  } else {
    const Eigen::VectorXd mu = -kappa * (out.A.transpose() * grad_penalty);
    out.mean = out.A * (inv * mu);
  }
  return out;
}

AsymptoticResult analyze(const ModelParams& model, const BasisSystem& basis, const FisherInfo& fisher,
                         double kappa, std::size_t draws, std::uint64_t seed, double activation_tol) {
  const TangentCone cone = tangent_cone(model, basis.integrals(), activation_tol);
  const Eigen::VectorXd grad = penalty_gradient(model, basis);
  AsymptoticResult res;
  if (cone.interior()) {
    const InteriorVariance iv = variance_interior(fisher, basis.integrals(), kappa, grad);
    res.method = AsymptoticResult::Method::InteriorClosedForm;
    res.kappa = kappa;
    res.active.assign(cone.dim, false);
    res.mean = iv.mean;
    res.covariance = iv.covariance;
    res.variances = iv.covariance.diagonal();
  } else {
    res = simulate_delta(fisher, cone, kappa, grad, draws, seed);
  }
  res.theta = flatten_params(model);
  res.coefficients = model.components() * model.basis_size();
  return res;
}

std::vector<ConfidenceInterval> confidence_intervals(const AsymptoticResult& result, std::size_t n,
                                                     double level) {
  if (!(level > 0.0 && level < 1.0)) throw Error(ErrorKind::InvalidArgument, "confidence level must lie in (0, 1)");
  if (n < 1) throw Error(ErrorKind::InvalidArgument, "n must be >= 1");
  const auto d = result.theta.size();
  if (result.variances.size() != d) throw Error(ErrorKind::InvalidArgument, "result has no estimate for θ");
  const double root_n = std::sqrt(static_cast<double>(n));
  std::vector<ConfidenceInterval> out(static_cast<std::size_t>(d));
  const bool closed = result.method == AsymptoticResult::Method::InteriorClosedForm;
  const double z = boost::math::quantile(boost::math::normal(), 0.5 * (1.0 + level));
  std::vector<double> col(static_cast<std::size_t>(result.draws.rows()));
  for (Eigen::Index j = 0; j < d; ++j) {
    auto& ci = out[static_cast<std::size_t>(j)];
    ci.estimate = result.theta[j];
    if (closed) {
      const double half = z * std::sqrt(std::max(result.variances[j], 0.0) / static_cast<double>(n));
      ci.lower = ci.estimate - half;
      ci.upper = ci.estimate + half;
    } else {
      for (std::size_t i = 0; i < col.size(); ++i) col[i] = ci.estimate + result.draws(static_cast<Eigen::Index>(i), j) / root_n;
      std::sort(col.begin(), col.end());
      ci.lower = quantile_sorted(col, 0.5 * (1.0 - level));
      ci.upper = quantile_sorted(col, 0.5 * (1.0 + level));
    }
    if (static_cast<std::size_t>(j) < result.coefficients) {
      const bool active = static_cast<std::size_t>(j) < result.active.size() && result.active[static_cast<std::size_t>(j)];
      // Coefficients live on [0, ∞); intersect, so an interval lying wholly
      // below zero collapses to [0, 0] instead of inverting.
      ci.lower = active ? 0.0 : std::max(ci.lower, 0.0);
      ci.upper = std::max(ci.upper, 0.0);
    }
  }
  return out;
}

}  // namespace icpp
