#pragma once

// Non-negative basis families β(t) on a region, their integrals a = ∫_B β and
// the roughness penalty Gram matrix Ω with g(cᵀβ) = cᵀ Ω c.

#include "icpp/geometry.hpp"

#include <Eigen/Dense>

#include <span>
#include <string>
#include <vector>

namespace icpp {

enum class BasisFamily { CubicBSpline1D, GaussianRbf2D, Constant };

std::string to_string(BasisFamily f);
BasisFamily basis_family_from_string(const std::string& s);

struct BasisLayout {
  // Cubic B-splines: number of equal knot spans on [l, u]; q = knots + 3.
  int knots = 10;
  // Gaussian RBFs: centre grid spanning the bounding box, rows × cols.
  int center_rows = 7;
  int center_cols = 7;
  // <= 0 selects 1.2 × centre spacing.
  double bandwidth = 0.0;
};

// Rows of a second-derivative evaluation: d²β_j/dx², d²β_j/dxdy, d²β_j/dy².
struct BasisHessian {
  Eigen::VectorXd xx;
  Eigen::VectorXd xy;
  Eigen::VectorXd yy;
};

class BasisSystem {
 public:
  BasisFamily family() const { return family_; }
  std::size_t size() const { return size_; }
  const Region& region() const { return region_; }
  const BasisLayout& layout() const { return layout_; }

  const std::vector<double>& knot_vector() const { return knots_; }
  const std::vector<Point>& centers() const { return centers_; }
  double bandwidth() const { return bandwidth_; }

  // a_j = ∫_B β_j
  const Eigen::VectorXd& integrals() const { return integrals_; }
  // Ω_jl = ∫_B ⟨Hβ_j, Hβ_l⟩_F
  const Eigen::MatrixXd& penalty() const { return penalty_; }

  // Writes β(t) into out (size q). No region check.
  void values_at(const Point& t, std::span<double> out) const;
  BasisHessian hessian_at(const Point& t) const;

  // |points| × q, column-major. Throws OutOfRegion for points outside B.
  Eigen::MatrixXd evaluate(std::span<const Point> points) const;

 private:
  friend BasisSystem build_basis(BasisFamily, const Region&, const BasisLayout&,
                                 const QuadratureRule&);
  BasisSystem(BasisFamily family, Region region) : family_(family), region_(std::move(region)) {}

  std::size_t find_span(double t) const;

  BasisFamily family_;
  Region region_;
  BasisLayout layout_{};
  std::size_t size_ = 0;
  std::vector<double> knots_;
  std::vector<Point> centers_;
  double bandwidth_ = 0.0;
  Eigen::VectorXd integrals_;
  Eigen::MatrixXd penalty_;
};

BasisSystem build_basis(BasisFamily family, const Region& region, const BasisLayout& layout,
                        const QuadratureRule& quad);

// Recomputes Ω for `basis` on the given quadrature (cross term counted twice).
Eigen::MatrixXd penalty_gram(const BasisSystem& basis, const QuadratureRule& quad);

}  // namespace icpp
