#include "icpp/basis.hpp"

#include "icpp/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace icpp {
namespace {

constexpr int kDegree = 3;

// Non-zero cubic B-spline values and first two derivatives at t in span i
// (Piegl & Tiller A2.3). ders[k][r] is the k-th derivative of N_{i-3+r}.
void bspline_derivatives(const std::vector<double>& U, std::size_t span, double t,
                         std::array<std::array<double, kDegree + 1>, 3>& ders) {
  constexpr int p = kDegree;
  double ndu[p + 1][p + 1];
  double left[p + 1];
  double right[p + 1];
  ndu[0][0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = t - U[span + 1 - j];
    right[j] = U[span + j] - t;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      ndu[j][r] = right[r + 1] + left[j - r];
      const double temp = ndu[r][j - 1] / ndu[j][r];
      ndu[r][j] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    ndu[j][j] = saved;
  }
  for (int j = 0; j <= p; ++j) ders[0][j] = ndu[j][p];

  double a[2][p + 1];
  for (int r = 0; r <= p; ++r) {
    int s1 = 0, s2 = 1;
    a[0][0] = 1.0;
    for (int k = 1; k <= 2; ++k) {
      double d = 0.0;
      const int rk = r - k;
      const int pk = p - k;
      if (r >= k) {
        a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
        d = a[s2][0] * ndu[rk][pk];
      }
      const int j1 = rk >= -1 ? 1 : -rk;
      const int j2 = (r - 1 <= pk) ? k - 1 : p - r;
      for (int j = j1; j <= j2; ++j) {
        a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][rk + j];
        d += a[s2][j] * ndu[rk + j][pk];
      }
      if (r <= pk) {
        a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
        d += a[s2][k] * ndu[r][pk];
      }
      ders[k][r] = d;
      std::swap(s1, s2);
    }
  }
  double factor = p;
  for (int k = 1; k <= 2; ++k) {
    for (int j = 0; j <= p; ++j) ders[k][j] *= factor;
    factor *= (p - k);
  }
}

}  // namespace

std::string to_string(BasisFamily f) {
  switch (f) {
    case BasisFamily::CubicBSpline1D: return "bspline";
    case BasisFamily::GaussianRbf2D: return "rbf";
    case BasisFamily::Constant: return "constant";
  }
  return "unknown";
}

BasisFamily basis_family_from_string(const std::string& s) {
  if (s == "bspline") return BasisFamily::CubicBSpline1D;
  if (s == "rbf") return BasisFamily::GaussianRbf2D;
  if (s == "constant") return BasisFamily::Constant;
  throw Error(ErrorKind::InvalidArgument, "unknown basis family '" + s + "'");
}

std::size_t BasisSystem::find_span(double t) const {
  // Last non-degenerate span for t == u so the right endpoint is covered.
  const std::size_t last = size_ - 1;
  if (t >= knots_[last + 1]) return last;
  const auto it = std::upper_bound(knots_.begin() + kDegree, knots_.begin() + last + 1, t);
  return static_cast<std::size_t>(it - knots_.begin()) - 1;
}

void BasisSystem::values_at(const Point& t, std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  switch (family_) {
    case BasisFamily::Constant:
      out[0] = 1.0;
      return;
    case BasisFamily::CubicBSpline1D: {
      const std::size_t span = find_span(t.x);
      std::array<std::array<double, kDegree + 1>, 3> ders{};
      bspline_derivatives(knots_, span, t.x, ders);
      for (int r = 0; r <= kDegree; ++r) out[span - kDegree + r] = ders[0][r];
      return;
    }
    case BasisFamily::GaussianRbf2D: {
      const double inv = 1.0 / (2.0 * bandwidth_ * bandwidth_);
      for (std::size_t j = 0; j < size_; ++j) {
        const double dx = t.x - centers_[j].x;
        const double dy = t.y - centers_[j].y;
        out[j] = std::exp(-(dx * dx + dy * dy) * inv);
      }
      return;
    }
  }
}

BasisHessian BasisSystem::hessian_at(const Point& t) const {
  BasisHessian h{Eigen::VectorXd::Zero(size_), Eigen::VectorXd::Zero(size_),
                 Eigen::VectorXd::Zero(size_)};
  switch (family_) {
    case BasisFamily::Constant:
      break;
    case BasisFamily::CubicBSpline1D: {
      const std::size_t span = find_span(t.x);
      std::array<std::array<double, kDegree + 1>, 3> ders{};
      bspline_derivatives(knots_, span, t.x, ders);
      for (int r = 0; r <= kDegree; ++r) h.xx[span - kDegree + r] = ders[2][r];
      break;
    }
    case BasisFamily::GaussianRbf2D: {
      const double h2 = bandwidth_ * bandwidth_;
      const double h4 = h2 * h2;
      for (std::size_t j = 0; j < size_; ++j) {
        const double dx = t.x - centers_[j].x;
        const double dy = t.y - centers_[j].y;
        const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * h2));
        h.xx[j] = v * (dx * dx / h4 - 1.0 / h2);
        h.yy[j] = v * (dy * dy / h4 - 1.0 / h2);
        h.xy[j] = v * dx * dy / h4;
      }
      break;
    }
  }
  return h;
}

Eigen::MatrixXd BasisSystem::evaluate(std::span<const Point> points) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(points.size()), static_cast<Eigen::Index>(size_));
  std::vector<double> row(size_);
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!region_.contains(points[i])) {
      throw Error(ErrorKind::OutOfRegion, "evaluation point " + std::to_string(i) + " outside region");
    }
    values_at(points[i], row);
    for (std::size_t j = 0; j < size_; ++j) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
  }
  return out;
}

Eigen::MatrixXd penalty_gram(const BasisSystem& basis, const QuadratureRule& quad) {
  const auto q = static_cast<Eigen::Index>(basis.size());
  Eigen::MatrixXd omega = Eigen::MatrixXd::Zero(q, q);
  if (basis.family() == BasisFamily::Constant) return omega;
  for (std::size_t i = 0; i < quad.size(); ++i) {
    const BasisHessian h = basis.hessian_at(quad.nodes[i]);
    const double w = quad.weights[i];
    omega.noalias() += w * (h.xx * h.xx.transpose());
    if (basis.region().dimension() == 2) {
      omega.noalias() += (2.0 * w) * (h.xy * h.xy.transpose());
      omega.noalias() += w * (h.yy * h.yy.transpose());
    }
  }
  return 0.5 * (omega + omega.transpose());
}

BasisSystem build_basis(BasisFamily family, const Region& region, const BasisLayout& layout,
                        const QuadratureRule& quad) {
  BasisSystem basis(family, region);
  basis.layout_ = layout;
  switch (family) {
    case BasisFamily::Constant:
      basis.size_ = 1;
      break;
    case BasisFamily::CubicBSpline1D: {
      if (region.dimension() != 1) throw Error(ErrorKind::InvalidArgument, "B-splines need a 1-D region");
      if (layout.knots < 2) {
        throw Error(ErrorKind::InvalidArgument, "B-spline layout needs at least one interior knot (knots >= 2)");
      }
      const double lo = region.bounds().lo.x;
      const double hi = region.bounds().hi.x;
      const int spans = layout.knots;
      for (int i = 0; i <= kDegree; ++i) basis.knots_.push_back(lo);
      for (int i = 1; i < spans; ++i) basis.knots_.push_back(lo + (hi - lo) * i / spans);
      for (int i = 0; i <= kDegree; ++i) basis.knots_.push_back(hi);
      basis.size_ = static_cast<std::size_t>(spans + kDegree);
      break;
    }
    case BasisFamily::GaussianRbf2D: {
      if (region.dimension() != 2) throw Error(ErrorKind::InvalidArgument, "RBF basis needs a 2-D region");
      if (layout.center_rows < 2 || layout.center_cols < 2) {
        throw Error(ErrorKind::InvalidArgument, "RBF layout needs at least a 2x2 centre grid");
      }
      const Box b = region.bounds();
      const double dx = (b.hi.x - b.lo.x) / (layout.center_cols - 1);
      const double dy = (b.hi.y - b.lo.y) / (layout.center_rows - 1);
      for (int r = 0; r < layout.center_rows; ++r) {
        for (int c = 0; c < layout.center_cols; ++c) {
          basis.centers_.push_back({b.lo.x + c * dx, b.lo.y + r * dy});
        }
      }
      basis.bandwidth_ = layout.bandwidth > 0.0 ? layout.bandwidth : 1.2 * std::min(dx, dy);
      if (layout.bandwidth < 0.0 || !(basis.bandwidth_ > 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "RBF bandwidth must be positive");
      }
      basis.size_ = basis.centers_.size();
      break;
    }
  }

  // Splines are piecewise cubic: Gauss–Legendre panels aligned with the knot
  // spans integrate a and Ω exactly, whatever rule the caller passed.
  const QuadratureRule rule =
      family == BasisFamily::CubicBSpline1D ? build_quadrature(region, layout.knots) : quad;
  const auto q = static_cast<Eigen::Index>(basis.size_);
  basis.integrals_ = Eigen::VectorXd::Zero(q);
  std::vector<double> row(basis.size_);
  for (std::size_t i = 0; i < rule.size(); ++i) {
    basis.values_at(rule.nodes[i], row);
    for (Eigen::Index j = 0; j < q; ++j) basis.integrals_[j] += rule.weights[i] * row[static_cast<std::size_t>(j)];
  }
  for (Eigen::Index j = 0; j < q; ++j) {
    if (!(basis.integrals_[j] > 0.0)) {
      throw Error(ErrorKind::InvalidArgument, "basis function " + std::to_string(j) + " has no mass in the region");
    }
  }
  basis.penalty_ = penalty_gram(basis, rule);
  return basis;
}

}  // namespace icpp
