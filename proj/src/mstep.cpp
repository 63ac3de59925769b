#include "icpp/mstep.hpp"

#include "icpp/errors.hpp"
#include "icpp/kernels.hpp"
#include "icpp/parallel.hpp"

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace icpp {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

kernels::ConstMatrixView view(const Eigen::MatrixXd& m) {
  return {m.data(), static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())};
}

std::span<double> span_of(Eigen::VectorXd& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }
std::span<const double> span_of(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

// Evaluation workspace for one component subproblem.
struct Evaluator {
  const ComponentProblem& prob;
  double total_weight;
  Eigen::VectorXd phi;
  Eigen::VectorXd ratio;

  explicit Evaluator(const ComponentProblem& p)
      : prob(p), total_weight(p.weights.sum()), phi(p.rows->rows()), ratio(p.rows->rows()) {}

  double value(const Eigen::VectorXd& c) {
    kernels::gemv(view(*prob.rows), span_of(c), span_of(phi));
    const double s = kernels::weighted_log_sum(span_of(prob.weights), span_of(phi));
    if (s == kNegInf) return kNegInf;
    const double pen = prob.penalty_scale == 0.0 ? 0.0 : prob.penalty_scale * c.dot(*prob.omega * c);
    return (s - pen) / total_weight;
  }

  // Uses phi from the preceding value() call at the same c.
  Eigen::VectorXd gradient(const Eigen::VectorXd& c) {
    kernels::safe_ratio(span_of(prob.weights), span_of(phi), span_of(ratio));
    Eigen::VectorXd g(c.size());
    kernels::gemv_t(view(*prob.rows), span_of(ratio), span_of(g));
    if (prob.penalty_scale != 0.0) g.noalias() -= (2.0 * prob.penalty_scale) * (*prob.omega * c);
    return g / total_weight;
  }
};

}  // namespace

double component_objective(const ComponentProblem& prob, const Eigen::VectorXd& c) {
  Evaluator ev(prob);
  return ev.value(c);
}

Eigen::VectorXd component_gradient(const ComponentProblem& prob, const Eigen::VectorXd& c) {
  Evaluator ev(prob);
  ev.value(c);
  return ev.gradient(c);
}

double kkt_residual(const Eigen::VectorXd& c, const Eigen::VectorXd& grad, const Eigen::VectorXd& a) {
  double num = 0.0;
  double den = 0.0;
  for (Eigen::Index j = 0; j < c.size(); ++j) {
    if (c[j] > 0.0) {
      num += a[j] * grad[j];
      den += a[j] * a[j];
    }
  }
  const double mu = den > 0.0 ? num / den : 0.0;
  double r = 0.0;
  for (Eigen::Index j = 0; j < c.size(); ++j) {
    const double reduced = grad[j] - mu * a[j];
    r = std::max(r, c[j] > 0.0 ? std::abs(reduced) : std::max(0.0, reduced));
  }
  return r;
}

ComponentSolve maximize_component(const ComponentProblem& prob, const Eigen::VectorXd& start,
                                  const InnerOptions& options) {
  const Eigen::VectorXd& a = prob.a;
  if (start.size() != a.size() || start.minCoeff() < 0.0 || std::abs(a.dot(start) - 1.0) > 1e-8) {
    throw Error(ErrorKind::InfeasibleStart, "start point violates a'c = 1, c >= 0");
  }
  ComponentSolve out;
  Evaluator ev(prob);
  Eigen::VectorXd c = start;
  double f = ev.value(c);
  if (f == kNegInf) {
    throw Error(ErrorKind::InfeasibleStart, "start point gives zero density at a weighted point");
  }
  Eigen::VectorXd g = ev.gradient(c);
  double step = 1.0 / std::max(g.cwiseAbs().maxCoeff(), 1e-12);
  constexpr double kArmijo = 1e-4;
  constexpr double kStepMin = 1e-12;
  constexpr double kStepMax = 1e12;

  int it = 0;
  double res = kkt_residual(c, g, a);
  for (; it < options.max_iters && res > options.tol; ++it) {
    const Eigen::VectorXd d = project_to_constraint(c + step * g, a) - c;
    const double slope = g.dot(d);
    if (!(slope > 0.0)) break;
    double lambda = 1.0;
    Eigen::VectorXd c_new;
    double f_new = kNegInf;
    for (int bt = 0; bt < 60; ++bt) {
      c_new = c + lambda * d;
      f_new = ev.value(c_new);
      if (f_new >= f + kArmijo * lambda * slope) break;
      lambda *= 0.5;
    }
    if (!(f_new >= f)) break;
    const Eigen::VectorXd g_new = ev.gradient(c_new);
    const Eigen::VectorXd s = c_new - c;
    const Eigen::VectorXd yv = g_new - g;
    const double sy = -s.dot(yv);
    step = sy > 0.0 ? std::clamp(s.squaredNorm() / sy, kStepMin, kStepMax) : kStepMax;
    c = c_new;
    f = f_new;
    g = g_new;
    res = kkt_residual(c, g, a);
  }
  // c is a convex combination of feasible points; remove rounding drift in aᵀc.
  c = c.cwiseMax(0.0);
  c /= a.dot(c);
  out.c = c;
  out.objective = f;
  out.kkt_residual = res;
  out.iterations = it;
  out.converged = res <= options.tol;
  return out;
}

ComponentsUpdate m_step_components(const EStepStats& stats, const PatternDesign& design,
                                   const BasisSystem& basis, double zeta,
                                   const Eigen::MatrixXd& start, const InnerOptions& options) {
  if (zeta < 0.0) throw Error(ErrorKind::InvalidArgument, "zeta must be non-negative");
  const auto p = static_cast<std::size_t>(start.rows());
  if (stats.size() != design.patterns()) {
    throw Error(ErrorKind::InvalidArgument, "E-step statistics and design cover different patterns");
  }
  const auto n_points = static_cast<Eigen::Index>(design.offsets.back());
  Eigen::MatrixXd resp(n_points, static_cast<Eigen::Index>(p));
  for (std::size_t i = 0; i < stats.size(); ++i) {
    const auto& g = stats.reps[i].gamma;
    if (g.rows() != static_cast<Eigen::Index>(design.points(i)) || g.cols() != static_cast<Eigen::Index>(p)) {
      throw Error(ErrorKind::InvalidArgument, "responsibility block has wrong shape");
    }
    resp.middleRows(static_cast<Eigen::Index>(design.offsets[i]), g.rows()) = g;
  }
  const double n = static_cast<double>(stats.size());

  ComponentsUpdate up;
  up.coeffs = start;
  up.solves.resize(p);
  up.degenerate.assign(p, false);
  parallel_for(p, [&](std::size_t k) {
    const auto kk = static_cast<Eigen::Index>(k);
    ComponentProblem prob{&design.rows, resp.col(kk), basis.integrals(), &basis.penalty(), n * zeta};
    if (!(prob.weights.sum() >= kStarvationMass)) {
      up.degenerate[k] = true;
      up.solves[k].c = start.row(kk).transpose();
      up.solves[k].degenerate = true;
      return;
    }
    up.solves[k] = maximize_component(prob, start.row(kk).transpose(), options);
  });
  for (std::size_t k = 0; k < p; ++k) up.coeffs.row(static_cast<Eigen::Index>(k)) = up.solves[k].c.transpose();
  return up;
}

ComponentsUpdate m_step_components(const EStepStats& stats, std::span<const PointPattern> patterns,
                                   const BasisSystem& basis, double zeta,
                                   const Eigen::MatrixXd& start, const InnerOptions& options) {
  const PatternDesign design = build_design(basis, patterns);
  return m_step_components(stats, design, basis, zeta, start, options);
}

double gamma_objective(const EStepStats& stats, const ScoreParams& params) {
  double v = 0.0;
  const double log_beta = std::log(params.beta);
  for (const auto& r : stats.reps) {
    for (Eigen::Index k = 0; k < params.alphas.size(); ++k) {
      const double a = params.alphas[k];
      v += (a - 1.0) * r.elogu[k] - r.euk[k] / params.beta - a * log_beta - std::lgamma(a);
    }
  }
  return v;
}

ScoreParams m_step_gamma(const EStepStats& stats, const InnerOptions& options) {
  if (stats.size() == 0) throw Error(ErrorKind::DegenerateStatistics, "no replications");
  const Eigen::Index p = stats.reps[0].euk.size();
  const double n = static_cast<double>(stats.size());
  Eigen::VectorXd mean_log = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd mean_u = Eigen::VectorXd::Zero(p);
  for (const auto& r : stats.reps) {
    for (Eigen::Index k = 0; k < p; ++k) {
      if (!(r.euk[k] > 0.0)) throw Error(ErrorKind::DegenerateStatistics, "E[U] must be positive");
      const double gap = std::log(r.euk[k]) - r.elogu[k];
      if (gap < -1e-12 * (1.0 + std::abs(r.elogu[k]))) {
        throw Error(ErrorKind::DegenerateStatistics, "E[log U] exceeds log E[U] (Jensen violation)");
      }
    }
    mean_log += r.elogu;
    mean_u += r.euk;
  }
  mean_log /= n;
  mean_u /= n;
  // Shapes are identified by the pooled gap log Ē − mean E log U, which stays
  // positive for point-mass statistics as long as the scores vary.
  double max_gap = 0.0;
  for (Eigen::Index k = 0; k < p; ++k) max_gap = std::max(max_gap, std::log(mean_u[k]) - mean_log[k]);
  if (!(max_gap > 1e-14)) {
    throw Error(ErrorKind::DegenerateStatistics, "E[log U] = log E[U] for constant scores; shapes not identifiable");
  }
  const double log_total = std::log(mean_u.sum());

  // Profile objective per replication: Σ_k (α_k−1) s_k − A − A log(Ē/A) − Σ_k log Γ(α_k).
  auto profile = [&](const Eigen::VectorXd& al) {
    const double A = al.sum();
    double v = -A - A * (log_total - std::log(A));
    for (Eigen::Index k = 0; k < p; ++k) v += (al[k] - 1.0) * mean_log[k] - std::lgamma(al[k]);
    return v;
  };

  // Start from the per-component closed-form approximation to the Gamma MLE.
  Eigen::VectorXd alpha(p);
  for (Eigen::Index k = 0; k < p; ++k) {
    const double s = std::max(std::log(mean_u[k]) - mean_log[k], 1e-12);
    alpha[k] = (3.0 - s + std::sqrt((s - 3.0) * (s - 3.0) + 24.0 * s)) / (12.0 * s);
  }
  double f = profile(alpha);
  for (int it = 0; it < std::max(options.max_iters, 50); ++it) {
    const double A = alpha.sum();
    Eigen::VectorXd grad(p);
    Eigen::MatrixXd neg_hess = Eigen::MatrixXd::Constant(p, p, -1.0 / A);
    for (Eigen::Index k = 0; k < p; ++k) {
      grad[k] = mean_log[k] + std::log(A) - log_total - boost::math::digamma(alpha[k]);
      neg_hess(k, k) += boost::math::trigamma(alpha[k]);
    }
    Eigen::VectorXd delta = neg_hess.ldlt().solve(grad);
    if (!delta.allFinite()) break;
    double t = 1.0;
    for (Eigen::Index k = 0; k < p; ++k) {
      if (delta[k] < 0.0) t = std::min(t, 0.9 * alpha[k] / -delta[k]);
    }
    Eigen::VectorXd next = alpha + t * delta;
    double f_next = profile(next);
    for (int bt = 0; bt < 50 && !(f_next >= f); ++bt) {
      t *= 0.5;
      next = alpha + t * delta;
      f_next = profile(next);
    }
    if (!(f_next >= f)) break;
    const double rel = (t * delta).cwiseQuotient(alpha).cwiseAbs().maxCoeff();
    alpha = next;
    f = f_next;
    if (rel < std::min(options.tol, 1e-10)) break;
  }
  ScoreParams out;
  out.alphas = alpha;
  out.beta = mean_u.sum() / alpha.sum();
  return out;
}

}  // namespace icpp
