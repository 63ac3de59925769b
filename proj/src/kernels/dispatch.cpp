#include "icpp/kernels.hpp"

#include <cstdlib>
#include <stdexcept>
#include <string>

namespace icpp::kernels {
namespace {

struct Table {
  Backend backend;
  double (*dot)(std::span<const double>, std::span<const double>);
  double (*weighted_log_sum)(std::span<const double>, std::span<const double>);
  void (*gemv)(ConstMatrixView, std::span<const double>, std::span<double>);
  void (*gemv_t)(ConstMatrixView, std::span<const double>, std::span<double>);
  void (*safe_ratio)(std::span<const double>, std::span<const double>, std::span<double>);
  void (*log_mixture_products)(ConstMatrixView, std::span<const double>, std::span<double>);
};

constexpr Table kScalar{Backend::Scalar, scalar::dot, scalar::weighted_log_sum, scalar::gemv, scalar::gemv_t,
                        scalar::safe_ratio, scalar::log_mixture_products};
#if defined(ICPP_HAVE_AVX2)
constexpr Table kAvx2{Backend::Avx2, avx2::dot, avx2::weighted_log_sum, avx2::gemv, avx2::gemv_t, avx2::safe_ratio,
                      avx2::log_mixture_products};
#endif

bool cpu_has_avx2() {
#if defined(ICPP_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const Table* initial_table() {
  const char* env = std::getenv("ICPP_SIMD");
  if (env != nullptr && std::string(env) == "scalar") return &kScalar;
#if defined(ICPP_HAVE_AVX2)
  if (cpu_has_avx2()) return &kAvx2;
#endif
  return &kScalar;
}

const Table*& current() {
  static const Table* table = initial_table();
  return table;
}

}  // namespace

std::string_view backend_name(Backend b) { return b == Backend::Avx2 ? "avx2" : "scalar"; }

bool backend_available(Backend b) {
  if (b == Backend::Scalar) return true;
  return cpu_has_avx2();
}

Backend active_backend() { return current()->backend; }

void set_backend(Backend b) {
  if (!backend_available(b)) {
    throw std::invalid_argument("kernel backend not available: " + std::string(backend_name(b)));
  }
#if defined(ICPP_HAVE_AVX2)
  current() = b == Backend::Avx2 ? &kAvx2 : &kScalar;
#else
  current() = &kScalar;
#endif
}

double dot(std::span<const double> a, std::span<const double> b) { return current()->dot(a, b); }

double weighted_log_sum(std::span<const double> w, std::span<const double> x) {
  return current()->weighted_log_sum(w, x);
}

void gemv(ConstMatrixView a, std::span<const double> x, std::span<double> y) {
  current()->gemv(a, x, y);
}

void gemv_t(ConstMatrixView a, std::span<const double> y, std::span<double> x) {
  current()->gemv_t(a, y, x);
}

void safe_ratio(std::span<const double> num, std::span<const double> den, std::span<double> out) {
  current()->safe_ratio(num, den, out);
}

void log_mixture_products(ConstMatrixView phi, std::span<const double> weights,
                          std::span<double> out) {
  current()->log_mixture_products(phi, weights, out);
}

}  // namespace icpp::kernels
