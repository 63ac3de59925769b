#include "icpp/errors.hpp"
#include "icpp/estep.hpp"
#include "icpp/fit.hpp"
#include "icpp/mstep.hpp"
#include "icpp/simulation.hpp"

#include "support.hpp"

#include <boost/math/special_functions/digamma.hpp>
#include <gtest/gtest.h>

#include <cmath>

using namespace icpp;
using icpp::testing::random_model;
using icpp::testing::uniform_pattern;
using icpp::testing::unit_spline;

namespace {

// Small patterns (m ≤ 3) so the exact E-step applies.
std::vector<PointPattern> small_patterns(std::size_t n, Rng& rng) {
  std::vector<PointPattern> pats;
  for (std::size_t i = 0; i < n; ++i) pats.push_back(uniform_pattern(1 + i % 3, rng, "r" + std::to_string(i)));
  return pats;
}

// Patterns drawn from the model itself: u ~ Gamma, then Poisson points from Σ u_k φ_k.
std::vector<PointPattern> model_patterns(const ModelParams& model, const BasisSystem& basis, std::size_t n,
                                         std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::vector<PointPattern> pats;
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::VectorXd u(model.scores.alphas.size());
    for (Eigen::Index k = 0; k < u.size(); ++k) u[k] = gamma_draw(rng, model.scores.alphas[k], model.scores.beta);
    auto lambda = [&](const Point& t) {
      const std::vector<Point> one{t};
      return intensity(model, basis, u, one)[0];
    };
    pats.push_back(sample_intensity(lambda, basis.region(), derive_seed(seed, "pattern", {i}), "r" + std::to_string(i)));
  }
  return pats;
}

Eigen::VectorXd random_feasible(const Eigen::VectorXd& a, Rng& rng, bool sparse) {
  Eigen::VectorXd c(a.size());
  for (Eigen::Index j = 0; j < c.size(); ++j) {
    c[j] = -std::log(uniform01(rng) + 1e-300);
    if (sparse && uniform01(rng) < 0.5) c[j] = 0.0;
  }
  if (!(c.sum() > 0.0)) c[0] = 1.0;
  return c / a.dot(c);
}

}  // namespace

TEST(FitEm, ExactEStepAscent) {
  const BasisSystem b = unit_spline(5);
  for (bool accelerate : {false, true}) {
    Rng rng = make_rng(21);
    const std::vector<PointPattern> pats = small_patterns(40, rng);
    FitConfig cfg;
    cfg.zeta = 1e-6;
    cfg.max_outer_iters = 40;
    cfg.outer_tol = 1e-12;
    cfg.accelerate = accelerate;
    const FitResult r = fit(pats, b, 2, cfg);
    ASSERT_TRUE(r.exact_e_step);
    ASSERT_GE(r.objective_trace.size(), 10u);
    for (std::size_t i = 1; i < r.objective_trace.size(); ++i) {
      EXPECT_GE(r.objective_trace[i] - r.objective_trace[i - 1], -1e-8) << "step " << i << " accelerate " << accelerate;
    }
  }
}

TEST(FitEm, IteratesStayFeasible) {
  const BasisSystem b = unit_spline(8);
  Rng rng = make_rng(22);
  const ModelParams truth = random_model(2, b, rng, 2.0, 4.0);
  const std::vector<PointPattern> pats = model_patterns(truth, b, 30, 5);
  for (int iters : {1, 2, 5, 15}) {
    FitConfig cfg;
    cfg.max_outer_iters = iters;
    const FitResult r = fit(pats, b, 2, cfg);
    EXPECT_NO_THROW(validate(r.params, b, 1e-8));
    EXPECT_GE(r.params.coeffs.minCoeff(), 0.0);
    EXPECT_EQ(r.iterations, iters);
    EXPECT_EQ(r.objective_trace.size(), static_cast<std::size_t>(iters) + 1);
    EXPECT_GE(r.params.scores.mean(0), r.params.scores.mean(1));
    for (const auto& rep : r.e_stats.reps) {
      for (Eigen::Index j = 0; j < rep.gamma.rows(); ++j) EXPECT_NEAR(rep.gamma.row(j).sum(), 1.0, 1e-8);
    }
  }
}

TEST(FitEm, SeededGibbsRunIsReproducible) {
  const BasisSystem b = unit_spline(8);
  Rng rng = make_rng(23);
  const ModelParams truth = random_model(2, b, rng, 3.0, 6.0);
  const std::vector<PointPattern> pats = model_patterns(truth, b, 25, 9);
  FitConfig cfg;
  cfg.max_outer_iters = 6;
  cfg.seed = 77;
  cfg.exact_budget = 1.0;
  const FitResult r1 = fit(pats, b, 2, cfg);
  const FitResult r2 = fit(pats, b, 2, cfg);
  ASSERT_FALSE(r1.exact_e_step);
  EXPECT_EQ(r1.params.coeffs, r2.params.coeffs);
  EXPECT_EQ(r1.params.scores.alphas, r2.params.scores.alphas);
  EXPECT_EQ(r1.params.scores.beta, r2.params.scores.beta);
  EXPECT_EQ(r1.objective_trace, r2.objective_trace);
  cfg.seed = 78;
  const FitResult r3 = fit(pats, b, 2, cfg);
  EXPECT_NE(r1.params.coeffs, r3.params.coeffs);
}

TEST(FitEm, SingleComponentRecoversMeanCount) {
  const BasisSystem b = unit_spline(10);
  ASSERT_EQ(b.size(), 13u);
  Rng rng = make_rng(24);
  ModelParams truth = random_model(1, b, rng);
  truth.scores.alphas[0] = 8.0;
  truth.scores.beta = 1.25;
  const std::vector<PointPattern> pats = model_patterns(truth, b, 100, 31);
  FitConfig cfg;
  cfg.zeta = 1e-6;
  const FitResult r = fit(pats, b, 1, cfg);
  const double expect = truth.scores.mean(0);
  EXPECT_NEAR(r.params.scores.mean(0), expect, 0.1 * expect);
}

TEST(FitEm, PermutedStartGivesSameCanonicalFit) {
  const BasisSystem b = unit_spline(5);
  Rng rng = make_rng(25);
  const ModelParams truth = random_model(2, b, rng, 1.0, 2.0);
  const std::vector<PointPattern> pats = model_patterns(truth, b, 40, 12);
  ModelParams start = random_model(2, b, rng);
  start.canonicalize();
  ModelParams swapped = start;
  swapped.coeffs.row(0) = start.coeffs.row(1);
  swapped.coeffs.row(1) = start.coeffs.row(0);
  std::swap(swapped.scores.alphas[0], swapped.scores.alphas[1]);
  FitConfig cfg;
  cfg.max_outer_iters = 15;
  cfg.exact_budget = 1e7;
  cfg.start = start;
  const FitResult r1 = fit(pats, b, 2, cfg);
  cfg.start = swapped;
  const FitResult r2 = fit(pats, b, 2, cfg);
  ASSERT_TRUE(r1.exact_e_step);
  // Only summation order differs between the two runs.
  const double scale = r1.params.coeffs.cwiseAbs().maxCoeff();
  EXPECT_LT((r1.params.coeffs - r2.params.coeffs).cwiseAbs().maxCoeff(), 1e-6 * scale);
  for (Eigen::Index k = 0; k < 2; ++k) {
    EXPECT_NEAR(r1.params.scores.alphas[k], r2.params.scores.alphas[k], 1e-6 * r1.params.scores.alphas[k]);
  }
  EXPECT_NEAR(r1.params.scores.beta, r2.params.scores.beta, 1e-6 * r1.params.scores.beta);
  for (std::size_t i = 0; i < r1.e_stats.size(); ++i) {
    const auto& g1 = r1.e_stats.reps[i].gamma;
    const auto& g2 = r2.e_stats.reps[i].gamma;
    for (Eigen::Index j = 0; j < g1.rows(); ++j) {
      Eigen::Index a1 = 0, a2 = 0;
      g1.row(j).maxCoeff(&a1);
      g2.row(j).maxCoeff(&a2);
      if (std::abs(g1(j, 0) - g1(j, 1)) > 1e-6) {
        EXPECT_EQ(a1, a2);
      }
    }
  }
}

TEST(FitEm, RejectsBadInput) {
  const BasisSystem b = unit_spline(5);
  Rng rng = make_rng(26);
  std::vector<PointPattern> pats = small_patterns(10, rng);
  EXPECT_THROW(fit(std::span<const PointPattern>{}, b, 2, {}), Error);
  pats[3].id = pats[0].id;
  EXPECT_THROW(fit(pats, b, 2, {}), Error);
  FitConfig bad;
  bad.gibbs_sweeps = 9;
  EXPECT_THROW(bad.validate(), Error);
  bad = {};
  bad.outer_tol = 0.0;
  EXPECT_THROW(bad.validate(), Error);
  bad = {};
  bad.zeta = -1.0;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(Initialize, SingleComponentUsesMeanCount) {
  const BasisSystem b = unit_spline(6);
  Rng rng = make_rng(27);
  const std::vector<PointPattern> pats = small_patterns(30, rng);
  const ModelParams m = initialize(pats, b, 1, 3);
  EXPECT_NO_THROW(validate(m, b, 1e-8));
  EXPECT_DOUBLE_EQ(m.scores.alphas[0], 2.0);
  EXPECT_DOUBLE_EQ(m.scores.beta, 1.0);
}

TEST(Initialize, SeparatedClustersGiveModesNearCenters) {
  const BasisSystem b = unit_spline(10);
  Rng rng = make_rng(28);
  std::normal_distribution<double> noise(0.0, 0.04);
  std::vector<PointPattern> pats;
  for (int i = 0; i < 20; ++i) {
    PointPattern pat{"r" + std::to_string(i), {}};
    for (int j = 0; j < 6; ++j) pat.points.push_back({std::clamp(0.2 + noise(rng), 0.0, 1.0), 0.0});
    for (int j = 0; j < 3; ++j) pat.points.push_back({std::clamp(0.75 + noise(rng), 0.0, 1.0), 0.0});
    pats.push_back(pat);
  }
  const ModelParams m = initialize(pats, b, 2, 1);
  EXPECT_NO_THROW(validate(m, b, 1e-8));
  const std::vector<Point> grid = icpp::testing::unit_grid(1001);
  const double spacing = 0.1;
  const double centers[] = {0.2, 0.75};   // larger cluster first in canonical order
  for (std::size_t k = 0; k < 2; ++k) {
    const Eigen::VectorXd v = component_density(m, b, k, grid);
    Eigen::Index arg = 0;
    v.maxCoeff(&arg);
    EXPECT_NEAR(grid[static_cast<std::size_t>(arg)].x, centers[k], spacing) << "component " << k;
  }
  EXPECT_NEAR(m.scores.alphas[0], 6.0, 0.5);
  EXPECT_NEAR(m.scores.alphas[1], 3.0, 0.5);
}

TEST(Initialize, TooFewDistinctPointsThrows) {
  const BasisSystem b = unit_spline(2);
  std::vector<PointPattern> pats{{"a", std::vector<Point>(10, {0.3, 0.0})}};
  EXPECT_THROW(initialize(pats, b, 2, 1), Error);
  EXPECT_NO_THROW(initialize(pats, b, 1, 1));
  EXPECT_THROW(initialize(pats, b, 0, 1), Error);
}

TEST(MStepComponents, BeatsRandomFeasiblePoints) {
  const BasisSystem b = unit_spline(8);
  Rng rng = make_rng(29);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t N = 60;
    std::vector<Point> pts;
    for (std::size_t i = 0; i < N; ++i) pts.push_back({std::pow(uniform01(rng), 1.0 + trial), 0.0});
    const Eigen::MatrixXd rows = b.evaluate(pts);
    ComponentProblem prob;
    prob.rows = &rows;
    prob.weights = Eigen::VectorXd::NullaryExpr(static_cast<Eigen::Index>(N), [&] { return uniform01(rng); });
    prob.a = b.integrals();
    prob.omega = &b.penalty();
    prob.penalty_scale = trial * 1e-4;
    const Eigen::VectorXd start = random_feasible(prob.a, rng, false);
    const ComponentSolve s = maximize_component(prob, start, {});
    EXPECT_TRUE(s.converged);
    EXPECT_LE(s.kkt_residual, 1e-6);
    EXPECT_NEAR(prob.a.dot(s.c), 1.0, 1e-8);
    EXPECT_GE(s.c.minCoeff(), 0.0);
    EXPECT_GE(s.objective, component_objective(prob, start));
    for (int i = 0; i < 1000; ++i) {
      const Eigen::VectorXd c = random_feasible(prob.a, rng, i % 2 == 1);
      const double v = component_objective(prob, c);
      if (std::isfinite(v)) {
        EXPECT_GE(s.objective, v - 1e-12);
      }
    }
  }
}

TEST(MStepComponents, ConstantBasisIsDeterminedByConstraint) {
  const Region r = Region::interval(0.0, 2.5);
  const BasisSystem b = build_basis(BasisFamily::Constant, r, {}, build_quadrature(r, 8));
  const Eigen::MatrixXd rows = Eigen::MatrixXd::Ones(5, 1);
  ComponentProblem prob;
  prob.rows = &rows;
  prob.weights = Eigen::VectorXd::LinSpaced(5, 0.1, 1.0);
  prob.a = b.integrals();
  prob.omega = &b.penalty();
  const ComponentSolve s = maximize_component(prob, Eigen::VectorXd::Constant(1, 1.0 / prob.a[0]), {});
  EXPECT_DOUBLE_EQ(s.c[0], 1.0 / 2.5);
}

TEST(MStepComponents, DisjointSupportsMatchGridSearch) {
  // Two basis functions with disjoint support: each point loads on one column.
  Eigen::MatrixXd rows(6, 2);
  rows << 2.0, 0.0, 1.5, 0.0, 0.5, 0.0, 0.0, 1.0, 0.0, 3.0, 0.0, 0.7;
  ComponentProblem prob;
  prob.rows = &rows;
  prob.weights.resize(6);
  prob.weights << 0.9, 0.2, 0.4, 1.0, 0.1, 0.6;
  prob.a = Eigen::Vector2d(0.4, 0.6);
  const Eigen::MatrixXd omega = Eigen::MatrixXd::Zero(2, 2);
  prob.omega = &omega;
  const ComponentSolve s = maximize_component(prob, Eigen::Vector2d(1.0, 1.0), {});
  const double w1 = 1.5, w2 = 1.7, W = w1 + w2;
  EXPECT_NEAR(s.c[0], w1 / (W * 0.4), 1e-6);
  EXPECT_NEAR(s.c[1], w2 / (W * 0.6), 1e-6);
  // Dense grid along the constraint line.
  double best = -std::numeric_limits<double>::infinity();
  for (int i = 1; i < 100000; ++i) {
    const double c1 = (i / 100000.0) / 0.4;
    const Eigen::Vector2d c(c1, (1.0 - 0.4 * c1) / 0.6);
    best = std::max(best, component_objective(prob, c));
  }
  EXPECT_GE(s.objective, best - 1e-12);
  EXPECT_NEAR(s.objective, best, 1e-8);
}

TEST(MStepComponents, LargePenaltyMinimizesRoughness) {
  const BasisSystem b = unit_spline(8);
  Rng rng = make_rng(30);
  std::vector<Point> pts;
  for (int i = 0; i < 40; ++i) pts.push_back({0.5 * uniform01(rng), 0.0});
  const Eigen::MatrixXd rows = b.evaluate(pts);
  ComponentProblem prob;
  prob.rows = &rows;
  prob.weights = Eigen::VectorXd::Ones(40);
  prob.a = b.integrals();
  prob.omega = &b.penalty();
  prob.penalty_scale = 1e8;
  const ComponentSolve s = maximize_component(prob, random_feasible(prob.a, rng, false), {});
  const double rough = s.c.dot(b.penalty() * s.c);
  for (int i = 0; i < 1000; ++i) {
    const Eigen::VectorXd c = random_feasible(prob.a, rng, i % 2 == 1);
    EXPECT_LE(rough, c.dot(b.penalty() * c) + 1e-10);
  }
}

TEST(MStepComponents, InfeasibleStartThrows) {
  const BasisSystem b = unit_spline(4);
  const std::vector<Point> pts{{0.3, 0.0}};
  const Eigen::MatrixXd rows = b.evaluate(pts);
  ComponentProblem prob;
  prob.rows = &rows;
  prob.weights = Eigen::VectorXd::Ones(1);
  prob.a = b.integrals();
  prob.omega = &b.penalty();
  Eigen::VectorXd bad = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(b.size()), 2.0);
  EXPECT_THROW(maximize_component(prob, bad, {}), Error);
  bad /= prob.a.dot(bad);
  bad[0] = -0.1;
  EXPECT_THROW(maximize_component(prob, bad, {}), Error);
}

TEST(MStepComponents, StarvedComponentIsFlagged) {
  const BasisSystem b = unit_spline(5);
  Rng rng = make_rng(31);
  const std::vector<PointPattern> pats = small_patterns(8, rng);
  ModelParams m = random_model(2, b, rng);
  EStepStats stats = e_step_exact(m, b, pats);
  for (auto& r : stats.reps) {
    r.gamma.col(0).setOnes();
    r.gamma.col(1).setZero();
  }
  const ComponentsUpdate up = m_step_components(stats, pats, b, 1e-6, m.coeffs);
  EXPECT_FALSE(up.degenerate[0]);
  EXPECT_TRUE(up.degenerate[1]);
  EXPECT_NEAR(b.integrals().dot(up.coeffs.row(1).transpose()), 1.0, 1e-8);
  EXPECT_GE(up.coeffs.minCoeff(), 0.0);
}

TEST(MStepGamma, RecoversShapeAndScaleFromSamples) {
  Rng rng = make_rng(32);
  EStepStats stats;
  for (int i = 0; i < 100000; ++i) {
    const double u = gamma_draw(rng, 2.0, 3.0);
    stats.reps.push_back({Eigen::MatrixXd(0, 1), Eigen::VectorXd::Constant(1, u), Eigen::VectorXd::Constant(1, std::log(u))});
  }
  const ScoreParams s = m_step_gamma(stats);
  EXPECT_NEAR(s.alphas[0], 2.0, 0.04);
  EXPECT_NEAR(s.beta, 3.0, 0.06);
}

TEST(MStepGamma, MaximizesObjectiveWithSymmetricStats) {
  Rng rng = make_rng(33);
  EStepStats stats;
  for (int i = 0; i < 200; ++i) {
    // Posterior-style stats: U | x ~ Gamma(a, s) gives E U = a s and E log U = ψ(a) + log s.
    const double a = 1.0 + 5.0 * uniform01(rng);
    const double sc = 0.5 + uniform01(rng);
    const double eu = a * sc;
    const double el = boost::math::digamma(a) + std::log(sc);
    stats.reps.push_back({Eigen::MatrixXd(0, 2), Eigen::Vector2d(eu, eu), Eigen::Vector2d(el, el)});
  }
  const ScoreParams s = m_step_gamma(stats);
  EXPECT_NEAR(s.alphas[0], s.alphas[1], 1e-10 * s.alphas[0]);
  const double best = gamma_objective(stats, s);
  for (double da : {-0.01, 0.01}) {
    for (double db : {-0.01, 0.01}) {
      ScoreParams other = s;
      other.alphas[0] *= 1.0 + da;
      other.beta *= 1.0 + db;
      EXPECT_GT(best, gamma_objective(stats, other));
    }
  }
}

TEST(MStepGamma, DegenerateStatisticsThrow) {
  EStepStats stats;
  stats.reps.push_back({Eigen::MatrixXd(0, 1), Eigen::VectorXd::Constant(1, 2.0), Eigen::VectorXd::Constant(1, std::log(2.0) + 0.1)});
  EXPECT_THROW(m_step_gamma(stats), Error);
  stats.reps.clear();
  for (int i = 0; i < 5; ++i) {
    stats.reps.push_back({Eigen::MatrixXd(0, 1), Eigen::VectorXd::Constant(1, 2.0), Eigen::VectorXd::Constant(1, std::log(2.0))});
  }
  EXPECT_THROW(m_step_gamma(stats), Error);
  EXPECT_THROW(m_step_gamma(EStepStats{}), Error);
}
