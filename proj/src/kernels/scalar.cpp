#include "icpp/kernels.hpp"
#include "log_product_detail.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>

namespace icpp::kernels::scalar {

double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  // Four partial sums, matching the lane structure of the vector variants.
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  const std::size_t n = a.size();
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  double s = (s0 + s1) + (s2 + s3);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

double weighted_log_sum(std::span<const double> w, std::span<const double> x) {
  assert(w.size() == x.size());
  double s[4] = {0.0, 0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] == 0.0) continue;
    if (!(x[i] > 0.0)) return -std::numeric_limits<double>::infinity();
    s[i % 4] += w[i] * std::log(x[i]);
  }
  return (s[0] + s[1]) + (s[2] + s[3]);
}

void gemv(ConstMatrixView a, std::span<const double> x, std::span<double> y) {
  assert(x.size() == a.cols && y.size() == a.rows);
  for (std::size_t r = 0; r < a.rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < a.cols; ++c) s += x[c] * a.col(c)[r];
    y[r] = s;
  }
}

void gemv_t(ConstMatrixView a, std::span<const double> y, std::span<double> x) {
  assert(x.size() == a.cols && y.size() == a.rows);
  for (std::size_t c = 0; c < a.cols; ++c) x[c] = dot({a.col(c), a.rows}, y);
}

void safe_ratio(std::span<const double> num, std::span<const double> den, std::span<double> out) {
  assert(num.size() == den.size() && out.size() == num.size());
  for (std::size_t i = 0; i < num.size(); ++i) out[i] = num[i] == 0.0 ? 0.0 : num[i] / den[i];
}

void log_mixture_products(ConstMatrixView phi, std::span<const double> weights,
                          std::span<double> out) {
  const std::size_t m = phi.rows;
  const std::size_t p = phi.cols;
  const std::size_t draws = out.size();
  assert(weights.size() == p * draws);
  for (std::size_t d = 0; d < draws; ++d) {
    double acc = 0.0;
    for (std::size_t j0 = 0; j0 < m; j0 += kLogProductChunk) {
      const std::size_t j1 = std::min(m, j0 + kLogProductChunk);
      double prod = 1.0;
      bool safe = true;
      for (std::size_t j = j0; j < j1; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < p; ++k) s += weights[k * draws + d] * phi.col(k)[j];
        safe = safe && detail::in_product_range(s);
        prod *= s;
      }
      acc += safe ? std::log(prod) : detail::chunk_log_sum(phi, weights, draws, d, j0, j1);
    }
    out[d] = acc;
  }
}

}  // namespace icpp::kernels::scalar
