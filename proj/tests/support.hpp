#pragma once

// Shared fixtures: random feasible models, small synthetic patterns.

#include "icpp/basis.hpp"
#include "icpp/geometry.hpp"
#include "icpp/model.hpp"
#include "icpp/random.hpp"

#include <string>
#include <vector>

namespace icpp::testing {

inline BasisSystem unit_spline(int knots) {
  const Region r = Region::interval(0.0, 1.0);
  BasisLayout layout;
  layout.knots = knots;
  return build_basis(BasisFamily::CubicBSpline1D, r, layout, build_quadrature(r, 64));
}

// Coefficients uniform on [0.2, 1.2] (strictly interior), rescaled to aᵀc = 1.
inline ModelParams random_model(std::size_t p, const BasisSystem& basis, Rng& rng, double alpha_lo = 0.8,
                                double alpha_hi = 3.0) {
  const auto q = static_cast<Eigen::Index>(basis.size());
  ModelParams m;
  m.coeffs.resize(static_cast<Eigen::Index>(p), q);
  for (Eigen::Index k = 0; k < m.coeffs.rows(); ++k) {
    for (Eigen::Index j = 0; j < q; ++j) m.coeffs(k, j) = 0.2 + uniform01(rng);
    m.coeffs.row(k) /= basis.integrals().dot(m.coeffs.row(k).transpose());
  }
  m.scores.alphas.resize(static_cast<Eigen::Index>(p));
  for (Eigen::Index k = 0; k < m.scores.alphas.size(); ++k) {
    m.scores.alphas[k] = alpha_lo + (alpha_hi - alpha_lo) * uniform01(rng);
  }
  m.scores.beta = 0.5 + 1.5 * uniform01(rng);
  return m;
}

inline PointPattern uniform_pattern(std::size_t m, Rng& rng, std::string id = "r") {
  PointPattern pat{std::move(id), {}};
  for (std::size_t j = 0; j < m; ++j) pat.points.push_back({uniform01(rng), 0.0});
  return pat;
}

inline std::vector<Point> unit_grid(std::size_t n) {
  std::vector<Point> g;
  for (std::size_t i = 0; i < n; ++i) g.push_back({static_cast<double>(i) / static_cast<double>(n - 1), 0.0});
  return g;
}

// φ matrix (m × p) at the points of a pattern.
inline Eigen::MatrixXd phi_matrix(const ModelParams& model, const BasisSystem& basis, const PointPattern& pat) {
  return component_matrix(basis.evaluate(pat.points), model.coeffs);
}

}  // namespace icpp::testing
