#include "icpp/estep.hpp"

#include "enumerate.hpp"
#include "icpp/errors.hpp"
#include "icpp/parallel.hpp"
#include "icpp/random.hpp"

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include <cmath>

namespace icpp {
namespace {

void check_supported(const Eigen::MatrixXd& phi) {
  for (Eigen::Index j = 0; j < phi.rows(); ++j) {
    if (!(phi.row(j).maxCoeff() > 0.0)) {
      throw Error(ErrorKind::PatternUnsupported,
                  "all component densities vanish at point " + std::to_string(j));
    }
  }
}

// ψ(α_k + c) for c = 0..m.
Eigen::MatrixXd digamma_table(const Eigen::VectorXd& alphas, std::size_t m) {
  Eigen::MatrixXd t(alphas.size(), static_cast<Eigen::Index>(m + 1));
  for (Eigen::Index k = 0; k < alphas.size(); ++k) {
    for (std::size_t c = 0; c <= m; ++c) {
      t(k, static_cast<Eigen::Index>(c)) = boost::math::digamma(alphas[k] + static_cast<double>(c));
    }
  }
  return t;
}

}  // namespace

ReplicationStats exact_replication_stats(const Eigen::MatrixXd& phi, const ScoreParams& scores,
                                         double budget) {
  const auto m = static_cast<std::size_t>(phi.rows());
  const auto p = static_cast<std::size_t>(phi.cols());
  if (!enumeration_feasible(m, p, budget)) {
    throw Error(ErrorKind::EnumerationBudget, "p^m exceeds the enumeration budget");
  }
  check_supported(phi);
  const double scale = scores.posterior_scale();
  const double log_scale = std::log(scale);
  ReplicationStats st;
  st.gamma = Eigen::MatrixXd::Zero(phi.rows(), phi.cols());
  st.euk = Eigen::VectorXd::Zero(phi.cols());
  st.elogu = Eigen::VectorXd::Zero(phi.cols());

  if (p == 1) {
    const double a = scores.alphas[0] + static_cast<double>(m);
    st.gamma.setOnes();
    st.euk[0] = a * scale;
    st.elogu[0] = boost::math::digamma(a) + log_scale;
    return st;
  }

  const Eigen::MatrixXd table = detail::count_weight_table(scores.alphas, log_scale, m);
  const Eigen::MatrixXd psi = digamma_table(scores.alphas, m);
  const Eigen::MatrixXd log_phi = phi.array().log().matrix();
  auto log_weight = [&](std::span<const std::size_t> counts, double lp) {
    double w = lp;
    for (std::size_t k = 0; k < p; ++k) w += table(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(counts[k]));
    return w;
  };

  detail::LogSumExp lse;
  detail::enumerate_labelings(log_phi, [&](auto, std::span<const std::size_t> counts, double lp) {
    if (std::isfinite(lp)) lse.add(log_weight(counts, lp));
  });
  const double log_total = lse.value();

  detail::enumerate_labelings(log_phi, [&](std::span<const std::size_t> y,
                                           std::span<const std::size_t> counts, double lp) {
    if (!std::isfinite(lp)) return;
    const double w = std::exp(log_weight(counts, lp) - log_total);
    if (w == 0.0) return;
    for (std::size_t j = 0; j < m; ++j) st.gamma(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(y[j])) += w;
    for (std::size_t k = 0; k < p; ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      const auto c = static_cast<Eigen::Index>(counts[k]);
      st.euk[kk] += w * (scores.alphas[kk] + static_cast<double>(counts[k])) * scale;
      st.elogu[kk] += w * (psi(kk, c) + log_scale);
    }
  });
  // Remove rounding drift in the row sums.
  for (Eigen::Index j = 0; j < st.gamma.rows(); ++j) st.gamma.row(j) /= st.gamma.row(j).sum();
  return st;
}

ReplicationStats gibbs_replication_stats(const Eigen::MatrixXd& phi, const ScoreParams& scores,
                                         std::size_t sweeps, std::uint64_t seed) {
  if (sweeps < kMinGibbsSweeps) {
    throw Error(ErrorKind::InvalidArgument, "Gibbs E-step needs at least 10 sweeps");
  }
  check_supported(phi);
  const auto m = static_cast<std::size_t>(phi.rows());
  const auto p = static_cast<std::size_t>(phi.cols());
  const double scale = scores.posterior_scale();
  const double log_scale = std::log(scale);

  ReplicationStats st;
  st.gamma = Eigen::MatrixXd::Zero(phi.rows(), phi.cols());
  st.euk = Eigen::VectorXd::Zero(phi.cols());
  st.elogu = Eigen::VectorXd::Zero(phi.cols());
  if (p == 1) {
    // Both conditionals are degenerate; the conditional expectations are exact.
    const double a = scores.alphas[0] + static_cast<double>(m);
    st.gamma.setOnes();
    st.euk[0] = a * scale;
    st.elogu[0] = boost::math::digamma(a) + log_scale;
    return st;
  }

  const Eigen::MatrixXd psi = digamma_table(scores.alphas, m);
  const double alpha_sum = scores.alphas.sum();
  Rng rng = make_rng(seed);
  std::vector<double> u(p);
  for (std::size_t k = 0; k < p; ++k) {
    const double a = scores.alphas[static_cast<Eigen::Index>(k)];
    u[k] = (a + static_cast<double>(m) * a / alpha_sum) * scale;
  }
  // Row-major copy of φ for the per-point loop.
  std::vector<double> phi_rm(m * p);
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t k = 0; k < p; ++k) phi_rm[j * p + k] = phi(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k));
  }
  std::vector<double> gamma_rm(m * p, 0.0);
  std::vector<double> w(p);
  std::vector<std::size_t> counts(p);
  Eigen::VectorXd count_sum = Eigen::VectorXd::Zero(phi.cols());

  const std::size_t burn = sweeps / 5;
  for (std::size_t s = 0; s < sweeps; ++s) {
    const bool keep = s >= burn;
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t j = 0; j < m; ++j) {
      const double* row = &phi_rm[j * p];
      double total = 0.0;
      for (std::size_t k = 0; k < p; ++k) {
        w[k] = u[k] * row[k];
        total += w[k];
      }
      if (keep) {
        const double inv = 1.0 / total;
        for (std::size_t k = 0; k < p; ++k) gamma_rm[j * p + k] += w[k] * inv;
      }
      double target = uniform01(rng) * total;
      std::size_t label = 0;
      for (; label + 1 < p; ++label) {
        target -= w[label];
        if (target < 0.0) break;
      }
      // Guard against rounding landing on a zero-weight tail component.
      while (w[label] == 0.0 && label > 0) --label;
      ++counts[label];
    }
    for (std::size_t k = 0; k < p; ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      const double shape = scores.alphas[kk] + static_cast<double>(counts[k]);
      u[k] = std::max(gamma_draw(rng, shape, scale), 1e-300);
      if (keep) {
        count_sum[kk] += static_cast<double>(counts[k]);
        st.elogu[kk] += psi(kk, static_cast<Eigen::Index>(counts[k])) + log_scale;
      }
    }
  }
  const double kept = static_cast<double>(sweeps - burn);
  st.elogu /= kept;
  for (std::size_t j = 0; j < m; ++j) {
    double total = 0.0;
    for (std::size_t k = 0; k < p; ++k) total += gamma_rm[j * p + k];
    for (std::size_t k = 0; k < p; ++k) {
      st.gamma(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) = gamma_rm[j * p + k] / total;
    }
  }
  // E[U_k | x] = scale (α_k + E[m_k | x]) and E[m_k | x] = Σ_j γ_jk, which the
  // averaged responsibilities estimate with less noise than the drawn counts.
  // E[log U] gets the matching first-order correction. The plain averages
  // satisfy Jensen exactly; keep them if the corrected pair does not.
  const Eigen::VectorXd mean_count = count_sum / kept;
  const Eigen::VectorXd rb_count = st.gamma.colwise().sum().transpose();
  Eigen::VectorXd euk = scale * (scores.alphas + rb_count);
  Eigen::VectorXd elogu = st.elogu;
  bool consistent = true;
  for (Eigen::Index k = 0; k < phi.cols(); ++k) {
    elogu[k] += boost::math::trigamma(scores.alphas[k] + mean_count[k]) * (rb_count[k] - mean_count[k]);
    consistent = consistent && elogu[k] < std::log(euk[k]);
  }
  if (consistent) {
    st.euk = euk;
    st.elogu = elogu;
  } else {
    st.euk = scale * (scores.alphas + mean_count);
  }
  return st;
}

EStepStats e_step_exact_phi(const Eigen::MatrixXd& phi, const PatternDesign& design,
                            const ScoreParams& scores, double budget) {
  EStepStats out;
  out.reps.resize(design.patterns());
  parallel_for(design.patterns(), [&](std::size_t i) {
    const auto start = static_cast<Eigen::Index>(design.offsets[i]);
    const auto len = static_cast<Eigen::Index>(design.points(i));
    out.reps[i] = exact_replication_stats(phi.middleRows(start, len), scores, budget);
  });
  return out;
}

EStepStats e_step_gibbs_phi(const Eigen::MatrixXd& phi, const PatternDesign& design,
                            std::span<const PointPattern> patterns, const ScoreParams& scores,
                            std::size_t sweeps, std::uint64_t seed) {
  if (patterns.size() != design.patterns()) {
    throw Error(ErrorKind::InvalidArgument, "design and pattern list differ in length");
  }
  EStepStats out;
  out.reps.resize(patterns.size());
  parallel_for(patterns.size(), [&](std::size_t i) {
    const auto start = static_cast<Eigen::Index>(design.offsets[i]);
    const auto len = static_cast<Eigen::Index>(design.points(i));
    out.reps[i] = gibbs_replication_stats(phi.middleRows(start, len), scores, sweeps,
                                          derive_seed(seed, "gibbs", {fnv1a(patterns[i].id)}));
  });
  return out;
}

EStepStats e_step_exact(const ModelParams& model, const BasisSystem& basis,
                        std::span<const PointPattern> patterns, double budget) {
  for (const auto& pat : patterns) {
    if (!enumeration_feasible(pat.size(), model.components(), budget)) {
      throw Error(ErrorKind::EnumerationBudget, "replication '" + pat.id + "' exceeds the enumeration budget");
    }
  }
  const PatternDesign design = build_design(basis, patterns);
  return e_step_exact_phi(component_matrix(design.rows, model.coeffs), design, model.scores, budget);
}

EStepStats e_step_gibbs(const ModelParams& model, const BasisSystem& basis,
                        std::span<const PointPattern> patterns, std::size_t sweeps,
                        std::uint64_t seed) {
  const PatternDesign design = build_design(basis, patterns);
  return e_step_gibbs_phi(component_matrix(design.rows, model.coeffs), design, patterns, model.scores,
                          sweeps, seed);
}

}  // namespace icpp
