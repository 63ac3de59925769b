#pragma once

// Data-parallel inner loops shared by the likelihood, E-step and M-step code.
//
// Every kernel has a scalar reference implementation (namespace `scalar`) and,
// when the build supports it, an AVX2/FMA variant (namespace `avx2`). The free
// functions in `icpp::kernels` dispatch to the variant selected at startup:
// AVX2 when the CPU reports avx2+fma, scalar otherwise. Setting the environment
// variable ICPP_SIMD=scalar forces the reference path.
//
// Matrices are column-major with leading dimension == rows.

#include <cstddef>
#include <span>
#include <string_view>

namespace icpp::kernels {

struct ConstMatrixView {
  const double* data = nullptr;
  std::size_t rows = 0;
  std::size_t cols = 0;

  const double* col(std::size_t c) const { return data + c * rows; }
};

enum class Backend { Scalar, Avx2 };

std::string_view backend_name(Backend b);
bool backend_available(Backend b);
Backend active_backend();
// Throws std::invalid_argument when the requested backend was not compiled in
// or is not supported by the running CPU.
void set_backend(Backend b);

// Σ a_i b_i
double dot(std::span<const double> a, std::span<const double> b);

// y = A x
void gemv(ConstMatrixView a, std::span<const double> x, std::span<double> y);

// x = Aᵀ y
void gemv_t(ConstMatrixView a, std::span<const double> y, std::span<double> x);

// out_i = num_i / den_i, with out_i = 0 whenever num_i == 0 (so a zero weight
// on a zero density contributes nothing).
void safe_ratio(std::span<const double> num, std::span<const double> den, std::span<double> out);

// Σ_i w_i log x_i over entries with w_i ≠ 0; −∞ if such an x_i is ≤ 0.
double weighted_log_sum(std::span<const double> w, std::span<const double> x);

// Mixture log-products used by the Monte-Carlo marginal likelihood:
//   out_d = Σ_j log( Σ_k w_kd · φ_jk )
// `phi` is m×p (column k holds φ_k at the m points); `weights` is p×D, stored
// component-major: weights[k * D + d].
void log_mixture_products(ConstMatrixView phi, std::span<const double> weights,
                          std::span<double> out);

namespace scalar {
double dot(std::span<const double> a, std::span<const double> b);
double weighted_log_sum(std::span<const double> w, std::span<const double> x);
void gemv(ConstMatrixView a, std::span<const double> x, std::span<double> y);
void gemv_t(ConstMatrixView a, std::span<const double> y, std::span<double> x);
void safe_ratio(std::span<const double> num, std::span<const double> den, std::span<double> out);
void log_mixture_products(ConstMatrixView phi, std::span<const double> weights,
                          std::span<double> out);
}  // namespace scalar

#if defined(ICPP_HAVE_AVX2)
namespace avx2 {
double dot(std::span<const double> a, std::span<const double> b);
double weighted_log_sum(std::span<const double> w, std::span<const double> x);
void gemv(ConstMatrixView a, std::span<const double> x, std::span<double> y);
void gemv_t(ConstMatrixView a, std::span<const double> y, std::span<double> x);
void safe_ratio(std::span<const double> num, std::span<const double> den, std::span<double> out);
void log_mixture_products(ConstMatrixView phi, std::span<const double> weights,
                          std::span<double> out);
}  // namespace avx2
#endif

// Chunk length of the product-then-log accumulation in log_mixture_products.
// Both variants use the same chunking so they agree to rounding.
inline constexpr std::size_t kLogProductChunk = 8;

}  // namespace icpp::kernels
