#include "icpp/kernels.hpp"
#include "log_product_detail.hpp"

#include <immintrin.h>

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>

namespace icpp::kernels::avx2 {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

// log for positive normal doubles (fdlibm's __ieee754_log reduction and
// polynomial, lane-wise). Accurate to about one ulp.
inline __m256d log_pd(__m256d x) {
  const __m256i bits = _mm256_castpd_si256(x);
  const __m256i mant_mask = _mm256_set1_epi64x(0x000FFFFFFFFFFFFFLL);
  const __m256i one_bits = _mm256_set1_epi64x(0x3FF0000000000000LL);
  __m256d m = _mm256_castsi256_pd(_mm256_or_si256(_mm256_and_si256(bits, mant_mask), one_bits));
  // Biased exponent as a double via the 2^52 trick.
  const __m256i biased = _mm256_srli_epi64(bits, 52);
  const __m256d two52 = _mm256_set1_pd(4503599627370496.0);
  __m256d k = _mm256_sub_pd(_mm256_castsi256_pd(_mm256_or_si256(biased, _mm256_castpd_si256(two52))), two52);
  k = _mm256_sub_pd(k, _mm256_set1_pd(1023.0));
  const __m256d big = _mm256_cmp_pd(m, _mm256_set1_pd(1.4142135623730951), _CMP_GT_OQ);
  m = _mm256_blendv_pd(m, _mm256_mul_pd(m, _mm256_set1_pd(0.5)), big);
  k = _mm256_add_pd(k, _mm256_and_pd(big, _mm256_set1_pd(1.0)));

  const __m256d f = _mm256_sub_pd(m, _mm256_set1_pd(1.0));
  const __m256d s = _mm256_div_pd(f, _mm256_add_pd(_mm256_set1_pd(2.0), f));
  const __m256d z = _mm256_mul_pd(s, s);
  const __m256d w = _mm256_mul_pd(z, z);
  __m256d t1 = _mm256_fmadd_pd(w, _mm256_set1_pd(1.531383769920937332e-01), _mm256_set1_pd(2.222219843214978396e-01));
  t1 = _mm256_fmadd_pd(w, t1, _mm256_set1_pd(3.999999999940941908e-01));
  t1 = _mm256_mul_pd(w, t1);
  __m256d t2 = _mm256_fmadd_pd(w, _mm256_set1_pd(1.479819860511658591e-01), _mm256_set1_pd(1.818357216161805012e-01));
  t2 = _mm256_fmadd_pd(w, t2, _mm256_set1_pd(2.857142874366239149e-01));
  t2 = _mm256_fmadd_pd(w, t2, _mm256_set1_pd(6.666666666666735130e-01));
  t2 = _mm256_mul_pd(z, t2);
  const __m256d r = _mm256_add_pd(t2, t1);
  const __m256d hfsq = _mm256_mul_pd(_mm256_set1_pd(0.5), _mm256_mul_pd(f, f));
  const __m256d ln2_hi = _mm256_set1_pd(6.93147180369123816490e-01);
  const __m256d ln2_lo = _mm256_set1_pd(1.90821492927058770002e-10);
  // k·ln2_hi − ((hfsq − (s·(hfsq + R) + k·ln2_lo)) − f)
  const __m256d inner = _mm256_fmadd_pd(s, _mm256_add_pd(hfsq, r), _mm256_mul_pd(k, ln2_lo));
  return _mm256_sub_pd(_mm256_mul_pd(k, ln2_hi), _mm256_sub_pd(_mm256_sub_pd(hfsq, inner), f));
}

}  // namespace

double weighted_log_sum(std::span<const double> w, std::span<const double> x) {
  assert(w.size() == x.size());
  const std::size_t n = w.size();
  const __m256d zero = _mm256_setzero_pd();
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d tiny = _mm256_set1_pd(2.2250738585072014e-308);
  const __m256d huge = _mm256_set1_pd(1.7976931348623157e308);
  __m256d acc = zero;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d wv = _mm256_loadu_pd(w.data() + i);
    const __m256d xv = _mm256_loadu_pd(x.data() + i);
    const __m256d used = _mm256_cmp_pd(wv, zero, _CMP_NEQ_UQ);
    const __m256d normal = _mm256_and_pd(_mm256_cmp_pd(xv, tiny, _CMP_GE_OQ), _mm256_cmp_pd(xv, huge, _CMP_LE_OQ));
    if (_mm256_movemask_pd(_mm256_andnot_pd(normal, used)) != 0) {
      // Non-positive, subnormal or non-finite entries: exact scalar handling.
      for (std::size_t j = i; j < i + 4; ++j) {
        if (w[j] == 0.0) continue;
        if (!(x[j] > 0.0)) return -std::numeric_limits<double>::infinity();
      }
      double tail = 0.0;
      for (std::size_t j = i; j < i + 4; ++j) {
        if (w[j] != 0.0) tail += w[j] * std::log(x[j]);
      }
      acc = _mm256_add_pd(acc, _mm256_set_pd(0.0, 0.0, 0.0, tail));
      continue;
    }
    const __m256d lx = log_pd(_mm256_blendv_pd(one, xv, used));
    acc = _mm256_fmadd_pd(_mm256_and_pd(wv, used), lx, acc);
  }
  double s = hsum(acc);
  for (; i < n; ++i) {
    if (w[i] == 0.0) continue;
    if (!(x[i] > 0.0)) return -std::numeric_limits<double>::infinity();
    s += w[i] * std::log(x[i]);
  }
  return s;
}

double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  const std::size_t n = a.size();
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(a.data() + i), _mm256_loadu_pd(b.data() + i), acc);
  }
  double s = hsum(acc);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void gemv(ConstMatrixView a, std::span<const double> x, std::span<double> y) {
  assert(x.size() == a.cols && y.size() == a.rows);
  const std::size_t rows = a.rows;
  const std::size_t cols = a.cols;
  // Row blocks of 8 accumulate across all columns in registers.
  std::size_t r = 0;
  for (; r + 8 <= rows; r += 8) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    for (std::size_t c = 0; c < cols; ++c) {
      const __m256d xv = _mm256_set1_pd(x[c]);
      const double* col = a.col(c) + r;
      acc0 = _mm256_fmadd_pd(xv, _mm256_loadu_pd(col), acc0);
      acc1 = _mm256_fmadd_pd(xv, _mm256_loadu_pd(col + 4), acc1);
    }
    _mm256_storeu_pd(y.data() + r, acc0);
    _mm256_storeu_pd(y.data() + r + 4, acc1);
  }
  for (; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += x[c] * a.col(c)[r];
    y[r] = s;
  }
}

void gemv_t(ConstMatrixView a, std::span<const double> y, std::span<double> x) {
  assert(x.size() == a.cols && y.size() == a.rows);
  const std::size_t rows = a.rows;
  for (std::size_t c = 0; c < a.cols; ++c) {
    const double* col = a.col(c);
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    __m256d acc2 = _mm256_setzero_pd();
    __m256d acc3 = _mm256_setzero_pd();
    std::size_t r = 0;
    for (; r + 16 <= rows; r += 16) {
      acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(col + r), _mm256_loadu_pd(y.data() + r), acc0);
      acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(col + r + 4), _mm256_loadu_pd(y.data() + r + 4), acc1);
      acc2 = _mm256_fmadd_pd(_mm256_loadu_pd(col + r + 8), _mm256_loadu_pd(y.data() + r + 8), acc2);
      acc3 = _mm256_fmadd_pd(_mm256_loadu_pd(col + r + 12), _mm256_loadu_pd(y.data() + r + 12), acc3);
    }
    for (; r + 4 <= rows; r += 4) {
      acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(col + r), _mm256_loadu_pd(y.data() + r), acc0);
    }
    double s = hsum(_mm256_add_pd(_mm256_add_pd(acc0, acc1), _mm256_add_pd(acc2, acc3)));
    for (; r < rows; ++r) s += col[r] * y[r];
    x[c] = s;
  }
}

void safe_ratio(std::span<const double> num, std::span<const double> den, std::span<double> out) {
  assert(num.size() == den.size() && out.size() == num.size());
  const std::size_t n = num.size();
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d nv = _mm256_loadu_pd(num.data() + i);
    const __m256d q = _mm256_div_pd(nv, _mm256_loadu_pd(den.data() + i));
    const __m256d is_zero = _mm256_cmp_pd(nv, zero, _CMP_EQ_OQ);
    _mm256_storeu_pd(out.data() + i, _mm256_blendv_pd(q, zero, is_zero));
  }
  for (; i < n; ++i) out[i] = num[i] == 0.0 ? 0.0 : num[i] / den[i];
}

void log_mixture_products(ConstMatrixView phi, std::span<const double> weights,
                          std::span<double> out) {
  const std::size_t m = phi.rows;
  const std::size_t p = phi.cols;
  const std::size_t draws = out.size();
  assert(weights.size() == p * draws);
  const __m256d lo = _mm256_set1_pd(detail::kFactorLow);
  const __m256d hi = _mm256_set1_pd(detail::kFactorHigh);

  std::size_t d = 0;
  alignas(32) double prod_lanes[4];
  for (; d + 4 <= draws; d += 4) {
    double acc[4] = {0.0, 0.0, 0.0, 0.0};
    for (std::size_t j0 = 0; j0 < m; j0 += kLogProductChunk) {
      const std::size_t j1 = std::min(m, j0 + kLogProductChunk);
      __m256d prod = _mm256_set1_pd(1.0);
      __m256d ok = _mm256_castsi256_pd(_mm256_set1_epi64x(-1));
      for (std::size_t j = j0; j < j1; ++j) {
        __m256d s = _mm256_setzero_pd();
        for (std::size_t k = 0; k < p; ++k) {
          s = _mm256_fmadd_pd(_mm256_loadu_pd(weights.data() + k * draws + d),
                              _mm256_set1_pd(phi.col(k)[j]), s);
        }
        ok = _mm256_and_pd(ok, _mm256_and_pd(_mm256_cmp_pd(s, lo, _CMP_GE_OQ),
                                             _mm256_cmp_pd(s, hi, _CMP_LE_OQ)));
        prod = _mm256_mul_pd(prod, s);
      }
      _mm256_store_pd(prod_lanes, prod);
      const int ok_mask = _mm256_movemask_pd(ok);
      for (int lane = 0; lane < 4; ++lane) {
        acc[lane] += (ok_mask >> lane) & 1
                         ? std::log(prod_lanes[lane])
                         : detail::chunk_log_sum(phi, weights, draws, d + lane, j0, j1);
      }
    }
    for (int lane = 0; lane < 4; ++lane) out[d + lane] = acc[lane];
  }
  if (d < draws) {
    // Tail draws: run the reference loop on the remaining columns.
    for (; d < draws; ++d) {
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
}

}  // namespace icpp::kernels::avx2
