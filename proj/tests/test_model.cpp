#include "icpp/errors.hpp"
#include "icpp/estep.hpp"
#include "icpp/model.hpp"

#include "support.hpp"

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/digamma.hpp>
#include <gtest/gtest.h>

#include <cmath>

using namespace icpp;
using icpp::testing::phi_matrix;
using icpp::testing::random_model;
using icpp::testing::uniform_pattern;
using icpp::testing::unit_spline;

namespace {

double gamma_log_pdf(double u, double alpha, double beta) {
  return (alpha - 1.0) * std::log(u) - u / beta - alpha * std::log(beta) - std::lgamma(alpha);
}

}  // namespace

TEST(Components, ConstantBasisGivesUniformDensity) {
  const Region r = Region::interval(0.0, 4.0);
  const BasisSystem b = build_basis(BasisFamily::Constant, r, {}, build_quadrature(r, 8));
  ModelParams m;
  m.coeffs = Eigen::MatrixXd::Constant(1, 1, 1.0 / b.integrals()[0]);
  m.scores.alphas = Eigen::VectorXd::Ones(1);
  const std::vector<Point> pts{{0.0, 0.0}, {1.3, 0.0}, {4.0, 0.0}};
  const Eigen::VectorXd v = component_density(m, b, 0, pts);
  for (Eigen::Index i = 0; i < v.size(); ++i) EXPECT_NEAR(v[i], 0.25, 1e-15);
  EXPECT_THROW(component_density(m, b, 1, pts), Error);
  const std::vector<Point> outside{{4.5, 0.0}};
  EXPECT_THROW(component_density(m, b, 0, outside), Error);
}

TEST(Components, RandomFeasibleIntegrateToOne) {
  const BasisSystem b = unit_spline(10);
  Rng rng = make_rng(1);
  const QuadratureRule fine = build_quadrature(Region::interval(0, 1), 200);
  for (int trial = 0; trial < 20; ++trial) {
    const ModelParams m = random_model(3, b, rng);
    for (std::size_t k = 0; k < 3; ++k) {
      const Eigen::VectorXd v = component_density(m, b, k, fine.nodes);
      double s = 0.0;
      for (std::size_t i = 0; i < fine.size(); ++i) s += fine.weights[i] * v[static_cast<Eigen::Index>(i)];
      EXPECT_NEAR(s, 1.0, 1e-6);
      EXPECT_GE(v.minCoeff(), 0.0);
    }
  }
}

TEST(Intensity, SumsComponentsAndIntegratesToTotalScore) {
  const BasisSystem b = unit_spline(10);
  Rng rng = make_rng(2);
  const ModelParams m = random_model(2, b, rng);
  const QuadratureRule fine = build_quadrature(Region::interval(0, 1), 200);
  const Eigen::VectorXd zero = intensity(m, b, Eigen::VectorXd::Zero(2), fine.nodes);
  EXPECT_EQ(zero.cwiseAbs().maxCoeff(), 0.0);
  const Eigen::VectorXd e1 = intensity(m, b, Eigen::Vector2d(1.0, 0.0), fine.nodes);
  const Eigen::VectorXd phi1 = component_density(m, b, 0, fine.nodes);
  EXPECT_LT((e1 - phi1).cwiseAbs().maxCoeff(), 1e-14);
  const Eigen::VectorXd lam = intensity(m, b, Eigen::Vector2d(30.0, 20.0), fine.nodes);
  double s = 0.0;
  for (std::size_t i = 0; i < fine.size(); ++i) s += fine.weights[i] * lam[static_cast<Eigen::Index>(i)];
  EXPECT_NEAR(s, 50.0, 1e-4);
  EXPECT_THROW(intensity(m, b, Eigen::Vector2d(-1.0, 1.0), fine.nodes), Error);
}

TEST(CompleteLoglik, MatchesDirectFormula) {
  const BasisSystem b = unit_spline(6);
  Rng rng = make_rng(3);
  const ModelParams m = random_model(2, b, rng);
  const PointPattern empty{"e", {}};
  const Eigen::Vector2d u(1.7, 0.4);
  const double prior = gamma_log_pdf(u[0], m.scores.alphas[0], m.scores.beta) +
                       gamma_log_pdf(u[1], m.scores.alphas[1], m.scores.beta);
  EXPECT_NEAR(complete_loglik(m, b, empty, u, {}), -u.sum() + prior, 1e-12);

  const PointPattern two = uniform_pattern(2, rng);
  const Eigen::MatrixXd phi = phi_matrix(m, b, two);
  const std::vector<std::size_t> labels{1, 0};
  const double expect = -u.sum() + std::log(u[1] * phi(0, 1)) + std::log(u[0] * phi(1, 0)) + prior;
  EXPECT_NEAR(complete_loglik(m, b, two, u, labels), expect, 1e-12);
}

TEST(MarginalLoglik, EmptyPatternClosedForm) {
  const BasisSystem b = unit_spline(6);
  Rng rng = make_rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const ModelParams m = random_model(3, b, rng);
    const double expect = -m.scores.alphas.sum() * std::log1p(m.scores.beta);
    const PointPattern empty{"e", {}};
    const LogLikResult r = marginal_loglik(m, b, empty, {});
    EXPECT_NEAR(r.value, expect, 1e-12);
    EXPECT_EQ(r.method, LogLikMethod::Exact);
  }
}

TEST(MarginalLoglik, SingleComponentGammaPoisson) {
  const BasisSystem b = unit_spline(8);
  Rng rng = make_rng(5);
  for (std::size_t m = 0; m <= 12; m += 3) {
    const ModelParams model = random_model(1, b, rng);
    const PointPattern pat = uniform_pattern(m, rng);
    const double a = model.scores.alphas[0];
    const double be = model.scores.beta;
    double logphi = 0.0;
    const Eigen::MatrixXd phi = phi_matrix(model, b, pat);
    for (Eigen::Index j = 0; j < phi.rows(); ++j) logphi += std::log(phi(j, 0));
    const double md = static_cast<double>(m);
    const double expect = std::lgamma(a + md) - std::lgamma(a) - a * std::log1p(be) + md * std::log(be / (1.0 + be)) + logphi;
    MarginalOptions opt;
    opt.mode = MarginalOptions::Mode::Exact;
    EXPECT_NEAR(marginal_loglik(model, b, pat, opt).value, expect, 1e-10);
  }
}

// Two-dimensional integral over (u1, u2) of the complete density, written
// without label enumeration.
TEST(MarginalLoglik, ExactMatchesDirectIntegration) {
  const BasisSystem b = unit_spline(5);
  Rng rng = make_rng(6);
  // tanh–sinh copes with the u^(α−1) endpoint behaviour of the Gamma density.
  boost::math::quadrature::tanh_sinh<double> ts;
  for (std::size_t m : {1u, 2u, 3u}) {
    const ModelParams model = random_model(2, b, rng, 1.0, 2.5);
    const PointPattern pat = uniform_pattern(m, rng);
    const Eigen::MatrixXd phi = phi_matrix(model, b, pat);
    const double a1 = model.scores.alphas[0], a2 = model.scores.alphas[1], be = model.scores.beta;
    const double hi = 60.0 * be + 40.0;
    auto integrand = [&](double u1, double u2) {
      double v = std::exp(gamma_log_pdf(u1, a1, be) + gamma_log_pdf(u2, a2, be) - u1 - u2);
      for (Eigen::Index j = 0; j < phi.rows(); ++j) v *= u1 * phi(j, 0) + u2 * phi(j, 1);
      return v;
    };
    const double f = ts.integrate(
        [&](double u1) { return ts.integrate([&](double u2) { return integrand(u1, u2); }, 0.0, hi, 1e-13); }, 0.0,
        hi, 1e-12);
    EXPECT_NEAR(marginal_loglik_exact(phi, model.scores), std::log(f), 1e-7);
  }
}

TEST(MarginalLoglik, MonteCarloWithinThreeStdErr) {
  const BasisSystem b = unit_spline(6);
  Rng rng = make_rng(7);
  int ok = 0;
  const int instances = 50;
  for (int i = 0; i < instances; ++i) {
    const std::size_t p = 2 + static_cast<std::size_t>(i % 2);
    const ModelParams model = random_model(p, b, rng);
    const PointPattern pat = uniform_pattern(1 + static_cast<std::size_t>(i % 5), rng);
    MarginalOptions mc;
    mc.mode = MarginalOptions::Mode::MonteCarlo;
    mc.draws = 4000;
    mc.seed = static_cast<std::uint64_t>(i);
    const LogLikResult r = marginal_loglik(model, b, pat, mc);
    EXPECT_EQ(r.method, LogLikMethod::MonteCarlo);
    EXPECT_GT(r.mc_std_err, 0.0);
    const double exact = marginal_loglik_exact(phi_matrix(model, b, pat), model.scores);
    if (std::abs(r.value - exact) <= 3.0 * r.mc_std_err) ++ok;
  }
  EXPECT_GE(ok, 48);
}

TEST(MarginalLoglik, AutoModeAndBudget) {
  const BasisSystem b = unit_spline(6);
  Rng rng = make_rng(8);
  const ModelParams model = random_model(2, b, rng);
  const PointPattern small = uniform_pattern(4, rng);
  EXPECT_EQ(marginal_loglik(model, b, small, {}).method, LogLikMethod::Exact);
  const PointPattern big = uniform_pattern(25, rng);
  EXPECT_EQ(marginal_loglik(model, b, big, {}).method, LogLikMethod::MonteCarlo);
  EXPECT_THROW(marginal_loglik_exact(phi_matrix(model, b, big), model.scores, 1e6), Error);
}

TEST(MarginalLoglik, UnsupportedPointIsReported) {
  const BasisSystem b = unit_spline(4);
  ModelParams m;
  // Mass only on the first basis function: zero density near t = 1.
  m.coeffs = Eigen::MatrixXd::Zero(1, static_cast<Eigen::Index>(b.size()));
  m.coeffs(0, 0) = 1.0 / b.integrals()[0];
  m.scores.alphas = Eigen::VectorXd::Ones(1);
  const PointPattern pat{"x", {{0.95, 0.0}}};
  EXPECT_THROW(marginal_loglik(m, b, pat, {}), Error);
}

TEST(Params, ValidateAndProjection) {
  const BasisSystem b = unit_spline(6);
  Rng rng = make_rng(9);
  ModelParams m = random_model(2, b, rng);
  EXPECT_NO_THROW(validate(m, b));
  ModelParams bad = m;
  bad.coeffs(0, 0) = -1e-3;
  EXPECT_THROW(validate(bad, b), Error);
  bad = m;
  bad.coeffs.row(1) *= 1.01;
  EXPECT_THROW(validate(bad, b), Error);
  bad = m;
  bad.scores.beta = 0.0;
  EXPECT_THROW(validate(bad, b), Error);

  // Projection onto {x ≥ 0, aᵀx = 1}: x_j = max(c_j − λ a_j, 0) for one λ.
  const Eigen::VectorXd& a = b.integrals();
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXd c(a.size());
    for (Eigen::Index j = 0; j < c.size(); ++j) c[j] = 6.0 * uniform01(rng) - 2.0;
    const Eigen::VectorXd x = project_to_constraint(c, a);
    EXPECT_NEAR(a.dot(x), 1.0, 1e-12);
    EXPECT_GE(x.minCoeff(), 0.0);
    double lambda = std::nan("");
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      if (x[j] > 0.0) lambda = (c[j] - x[j]) / a[j];
    }
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      EXPECT_NEAR(x[j], std::max(c[j] - lambda * a[j], 0.0), 1e-10);
    }
  }
}

TEST(Params, CanonicalOrderByMeanScore) {
  const BasisSystem b = unit_spline(6);
  Rng rng = make_rng(10);
  ModelParams m = random_model(3, b, rng);
  m.scores.alphas << 1.0, 3.0, 2.0;
  const Eigen::MatrixXd before = m.coeffs;
  const auto perm = m.canonicalize();
  EXPECT_EQ(perm, (std::vector<std::size_t>{1, 2, 0}));
  EXPECT_EQ(m.scores.alphas[0], 3.0);
  EXPECT_EQ(m.scores.alphas[2], 1.0);
  EXPECT_EQ(m.coeffs.row(0), before.row(1));
  // Ties fall back to the coefficient rows.
  ModelParams t = random_model(2, b, rng);
  t.scores.alphas << 2.0, 2.0;
  ModelParams swapped = t;
  swapped.coeffs.row(0) = t.coeffs.row(1);
  swapped.coeffs.row(1) = t.coeffs.row(0);
  t.canonicalize();
  swapped.canonicalize();
  EXPECT_EQ(t.coeffs, swapped.coeffs);
}

TEST(EStep, ExactSingleComponentConjugate) {
  const BasisSystem b = unit_spline(6);
  Rng rng = make_rng(11);
  for (std::size_t m : {0u, 1u, 5u}) {
    const ModelParams model = random_model(1, b, rng);
    const PointPattern pat = uniform_pattern(m, rng);
    const ReplicationStats s = exact_replication_stats(phi_matrix(model, b, pat), model.scores);
    const double a = model.scores.alphas[0] + static_cast<double>(m);
    const double scale = model.scores.posterior_scale();
    EXPECT_NEAR(s.euk[0], a * scale, 1e-12);
    EXPECT_NEAR(s.elogu[0], boost::math::digamma(a) + std::log(scale), 1e-12);
    for (Eigen::Index j = 0; j < s.gamma.rows(); ++j) EXPECT_NEAR(s.gamma(j, 0), 1.0, 1e-15);
  }
}

TEST(EStep, ExactSinglePointResponsibilities) {
  const BasisSystem b = unit_spline(6);
  Rng rng = make_rng(12);
  const ModelParams model = random_model(2, b, rng);
  const PointPattern pat = uniform_pattern(1, rng);
  const Eigen::MatrixXd phi = phi_matrix(model, b, pat);
  const ReplicationStats s = exact_replication_stats(phi, model.scores);
  const Eigen::VectorXd& al = model.scores.alphas;
  const double z = al[0] * phi(0, 0) + al[1] * phi(0, 1);
  EXPECT_NEAR(s.gamma(0, 0), al[0] * phi(0, 0) / z, 1e-12);
  EXPECT_NEAR(s.gamma(0, 1), al[1] * phi(0, 1) / z, 1e-12);
  // Equal φ everywhere: responsibilities proportional to α.
  const Eigen::MatrixXd flat = Eigen::MatrixXd::Constant(3, 2, 0.7);
  const ReplicationStats f = exact_replication_stats(flat, model.scores);
  for (Eigen::Index j = 0; j < 3; ++j) EXPECT_NEAR(f.gamma(j, 0), al[0] / al.sum(), 1e-12);
}

TEST(EStep, StatsInvariants) {
  const BasisSystem b = unit_spline(8);
  Rng rng = make_rng(13);
  const ModelParams model = random_model(3, b, rng);
  std::vector<PointPattern> pats;
  for (std::size_t i = 0; i < 6; ++i) pats.push_back(uniform_pattern(i, rng, "r" + std::to_string(i)));
  for (const EStepStats& st : {e_step_exact(model, b, pats), e_step_gibbs(model, b, pats, 200, 5)}) {
    for (const auto& r : st.reps) {
      for (Eigen::Index j = 0; j < r.gamma.rows(); ++j) EXPECT_NEAR(r.gamma.row(j).sum(), 1.0, 1e-8);
      for (Eigen::Index k = 0; k < 3; ++k) {
        EXPECT_GT(r.euk[k], 0.0);
        EXPECT_LE(r.elogu[k], std::log(r.euk[k]));
      }
    }
  }
}

// Short chains on large patterns are where noisy statistics could break Jensen.
TEST(EStep, ShortGibbsChainsKeepJensen) {
  const BasisSystem b = unit_spline(8);
  Rng rng = make_rng(15);
  for (int trial = 0; trial < 200; ++trial) {
    const ModelParams model = random_model(2 + static_cast<std::size_t>(trial % 3), b, rng, 0.2, 3.0);
    const PointPattern pat = uniform_pattern(1 + static_cast<std::size_t>(uniform01(rng) * 80.0), rng);
    const ReplicationStats s = gibbs_replication_stats(phi_matrix(model, b, pat), model.scores, 10, 500 + static_cast<std::uint64_t>(trial));
    for (Eigen::Index k = 0; k < s.euk.size(); ++k) {
      EXPECT_GT(s.euk[k], 0.0);
      EXPECT_LT(s.elogu[k], std::log(s.euk[k]));
    }
  }
}

TEST(EStep, GibbsAgreesWithExact) {
  const BasisSystem b = unit_spline(6);
  Rng rng = make_rng(14);
  for (int trial = 0; trial < 10; ++trial) {
    const ModelParams model = random_model(2, b, rng);
    const PointPattern pat = uniform_pattern(1 + static_cast<std::size_t>(trial % 3), rng);
    const Eigen::MatrixXd phi = phi_matrix(model, b, pat);
    const ReplicationStats ex = exact_replication_stats(phi, model.scores);
    const ReplicationStats gs = gibbs_replication_stats(phi, model.scores, 50000, 100 + static_cast<std::uint64_t>(trial));
    EXPECT_LE((ex.gamma - gs.gamma).cwiseAbs().maxCoeff(), 0.02);
    for (Eigen::Index k = 0; k < 2; ++k) EXPECT_LE(std::abs(ex.euk[k] - gs.euk[k]) / ex.euk[k], 0.02);
  }
}

TEST(EStep, GibbsSingleComponentAndDeterminism) {
  const BasisSystem b = unit_spline(6);
  Rng rng = make_rng(15);
  const ModelParams model = random_model(1, b, rng);
  const PointPattern pat = uniform_pattern(7, rng);
  const Eigen::MatrixXd phi = phi_matrix(model, b, pat);
  const ReplicationStats g = gibbs_replication_stats(phi, model.scores, 100, 3);
  EXPECT_NEAR(g.euk[0], (model.scores.alphas[0] + 7.0) * model.scores.posterior_scale(), 1e-12);
  for (Eigen::Index j = 0; j < 7; ++j) EXPECT_EQ(g.gamma(j, 0), 1.0);
  const ModelParams m2 = random_model(2, b, rng);
  const Eigen::MatrixXd phi2 = phi_matrix(m2, b, pat);
  const ReplicationStats a1 = gibbs_replication_stats(phi2, m2.scores, 50, 9);
  const ReplicationStats a2 = gibbs_replication_stats(phi2, m2.scores, 50, 9);
  EXPECT_EQ(a1.gamma, a2.gamma);
  EXPECT_EQ(a1.euk, a2.euk);
}

TEST(EStep, ZeroDensityPointIsUnsupported) {
  Eigen::MatrixXd phi(2, 2);
  phi << 0.5, 0.3, 0.0, 0.0;
  ScoreParams s;
  s.alphas = Eigen::Vector2d(1.0, 1.0);
  EXPECT_THROW(gibbs_replication_stats(phi, s, 50, 1), Error);
  EXPECT_THROW(exact_replication_stats(phi, s), Error);
}

TEST(PosteriorIntensity, ConjugateOracle) {
  const BasisSystem b = unit_spline(6);
  Rng rng = make_rng(16);
  const ModelParams model = random_model(1, b, rng);
  const std::vector<Point> grid = icpp::testing::unit_grid(50);
  const Eigen::VectorXd phi = component_density(model, b, 0, grid);
  for (std::size_t m : {0u, 4u}) {
    const PointPattern pat = uniform_pattern(m, rng);
    const ReplicationStats s = exact_replication_stats(phi_matrix(model, b, pat), model.scores);
    const Eigen::VectorXd lam = posterior_intensity(model, b, pat, s, grid);
    const double scale = (model.scores.alphas[0] + static_cast<double>(m)) * model.scores.posterior_scale();
    EXPECT_LT((lam - scale * phi).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_GE(lam.minCoeff(), 0.0);
  }
}
