#pragma once

// Enumeration over all label vectors y ∈ {0..p-1}^m, shared by the exact
// marginal likelihood and the exact E-step.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace icpp::detail {

// leaf(y, counts, Σ_j log φ_{y_j}(t_j)) is called once per label vector.
template <class Leaf>
void enumerate_labelings(const Eigen::MatrixXd& log_phi, Leaf&& leaf) {
  const auto m = static_cast<std::size_t>(log_phi.rows());
  const auto p = static_cast<std::size_t>(log_phi.cols());
  std::vector<std::size_t> y(m, 0);
  std::vector<std::size_t> counts(p, 0);
  counts[0] = m;
  std::vector<double> prefix(m + 1, 0.0);
  for (std::size_t i = 0; i < m; ++i) prefix[i + 1] = prefix[i] + log_phi(static_cast<Eigen::Index>(i), 0);
  for (;;) {
    leaf(std::span<const std::size_t>(y), std::span<const std::size_t>(counts), prefix[m]);
    std::size_t j = m;
    bool advanced = false;
    while (j-- > 0) {
      --counts[y[j]];
      if (y[j] + 1 < p) {
        ++y[j];
        ++counts[y[j]];
        advanced = true;
        break;
      }
      y[j] = 0;
      ++counts[0];
    }
    if (!advanced) break;
    for (std::size_t i = j; i < m; ++i) {
      prefix[i + 1] = prefix[i] + log_phi(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(y[i]));
    }
  }
}

// Streaming log-sum-exp.
class LogSumExp {
 public:
  void add(double x) {
    if (x == -std::numeric_limits<double>::infinity()) return;
    if (x > max_) {
      sum_ = sum_ * std::exp(max_ - x) + 1.0;
      max_ = x;
    } else {
      sum_ += std::exp(x - max_);
    }
  }
  double value() const {
    return sum_ == 0.0 ? -std::numeric_limits<double>::infinity() : max_ + std::log(sum_);
  }

 private:
  double max_ = -std::numeric_limits<double>::infinity();
  double sum_ = 0.0;
};

// log Γ(α_k + c) − log Γ(α_k) + c log s for c = 0..m, per component.
inline Eigen::MatrixXd count_weight_table(const Eigen::VectorXd& alphas, double log_scale,
                                          std::size_t m) {
  Eigen::MatrixXd t(alphas.size(), static_cast<Eigen::Index>(m + 1));
  for (Eigen::Index k = 0; k < alphas.size(); ++k) {
    const double base = std::lgamma(alphas[k]);
    for (std::size_t c = 0; c <= m; ++c) {
      t(k, static_cast<Eigen::Index>(c)) =
          std::lgamma(alphas[k] + static_cast<double>(c)) - base + static_cast<double>(c) * log_scale;
    }
  }
  return t;
}

}  // namespace icpp::detail
