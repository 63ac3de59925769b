#pragma once

#include "icpp/kernels.hpp"

#include <cmath>

namespace icpp::kernels::detail {

// Factors inside this range keep a product of kLogProductChunk terms well
// inside the normal double range.
inline constexpr double kFactorLow = 1e-30;
inline constexpr double kFactorHigh = 1e30;

inline bool in_product_range(double s) { return s >= kFactorLow && s <= kFactorHigh; }

// Slow path: log-space sum over one chunk for a single draw.
inline double chunk_log_sum(ConstMatrixView phi, std::span<const double> weights,
                            std::size_t draws, std::size_t d, std::size_t j0, std::size_t j1) {
  double acc = 0.0;
  for (std::size_t j = j0; j < j1; ++j) {
    double s = 0.0;
    for (std::size_t k = 0; k < phi.cols; ++k) s += weights[k * draws + d] * phi.col(k)[j];
    acc += std::log(s);
  }
  return acc;
}

}  // namespace icpp::kernels::detail
