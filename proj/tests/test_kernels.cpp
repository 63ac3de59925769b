#include "icpp/kernels.hpp"
#include "icpp/random.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

namespace k = icpp::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, icpp::Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

// Sizes straddling the 4-wide vector length and the unrolled loops.
const std::size_t kSizes[] = {0, 1, 3, 4, 5, 7, 8, 9, 15, 16, 17, 31, 64, 101};

void expect_close(double a, double b, double scale) {
  EXPECT_NEAR(a, b, 1e-12 * std::max(1.0, scale));
}

}  // namespace

TEST(Kernels, ScalarMatchesNaiveLoops) {
  icpp::Rng rng = icpp::make_rng(1);
  for (std::size_t n : kSizes) {
    const auto a = random_vec(n, rng);
    const auto b = random_vec(n, rng);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    expect_close(k::scalar::dot(a, b), s, 1.0);

    const std::size_t cols = 3;
    const auto m = random_vec(n * cols, rng);
    const auto x = random_vec(cols, rng);
    std::vector<double> y(n);
    k::scalar::gemv({m.data(), n, cols}, x, y);
    for (std::size_t r = 0; r < n; ++r) {
      double e = 0.0;
      for (std::size_t c = 0; c < cols; ++c) e += m[c * n + r] * x[c];
      expect_close(y[r], e, 1.0);
    }
    std::vector<double> xt(cols);
    k::scalar::gemv_t({m.data(), n, cols}, a, xt);
    for (std::size_t c = 0; c < cols; ++c) {
      double e = 0.0;
      for (std::size_t r = 0; r < n; ++r) e += m[c * n + r] * a[r];
      expect_close(xt[c], e, 1.0);
    }
  }
}

TEST(Kernels, SafeRatioZeroNumerator) {
  const std::vector<double> num{0.0, 1.0, 0.0, 6.0, 0.0};
  const std::vector<double> den{0.0, 2.0, 5.0, 3.0, 0.0};
  std::vector<double> out(5);
  k::safe_ratio(num, den, out);
  EXPECT_EQ(out[0], 0.0);
  EXPECT_EQ(out[1], 0.5);
  EXPECT_EQ(out[2], 0.0);
  EXPECT_EQ(out[3], 2.0);
  EXPECT_EQ(out[4], 0.0);
}

TEST(Kernels, WeightedLogSumSkipsZeroWeights) {
  const auto before = k::active_backend();
  for (auto backend : {k::Backend::Scalar, k::Backend::Avx2}) {
    if (!k::backend_available(backend)) continue;
    k::set_backend(backend);
    std::vector<double> w{1.0, 0.0, 2.0, 0.0, 0.5};
    std::vector<double> x{2.0, -1.0, 3.0, 0.0, 4.0};
    EXPECT_NEAR(k::weighted_log_sum(w, x), std::log(2.0) + 2.0 * std::log(3.0) + 0.5 * std::log(4.0), 1e-14);
    x[2] = 0.0;
    EXPECT_EQ(k::weighted_log_sum(w, x), -std::numeric_limits<double>::infinity());
  }
  k::set_backend(before);
}

TEST(Kernels, LogMixtureProductsMatchesDirectSum) {
  icpp::Rng rng = icpp::make_rng(2);
  for (std::size_t m : {std::size_t{0}, std::size_t{1}, std::size_t{7}, std::size_t{8}, std::size_t{23}}) {
    const std::size_t p = 3;
    const std::size_t draws = 9;
    const auto phi = random_vec(m * p, rng, 0.1, 3.0);
    const auto w = random_vec(p * draws, rng, 0.0, 5.0);
    std::vector<double> out(draws);
    k::scalar::log_mixture_products({phi.data(), m, p}, w, out);
    for (std::size_t d = 0; d < draws; ++d) {
      double e = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < p; ++c) s += w[c * draws + d] * phi[c * m + j];
        e += std::log(s);
      }
      EXPECT_NEAR(out[d], e, 1e-11 * std::max(1.0, std::abs(e)));
    }
  }
}

class Avx2Equivalence : public ::testing::Test {
 protected:
  void SetUp() override {
    if (!k::backend_available(k::Backend::Avx2)) GTEST_SKIP() << "AVX2 variant not available on this machine";
  }
};

#if defined(ICPP_HAVE_AVX2)
TEST_F(Avx2Equivalence, AllKernels) {
  icpp::Rng rng = icpp::make_rng(3);
  for (std::size_t n : kSizes) {
    const auto a = random_vec(n, rng);
    const auto b = random_vec(n, rng);
    expect_close(k::avx2::dot(a, b), k::scalar::dot(a, b), 1.0);

    const auto w = random_vec(n, rng, 0.0, 2.0);
    auto x = random_vec(n, rng, 0.01, 10.0);
    expect_close(k::avx2::weighted_log_sum(w, x), k::scalar::weighted_log_sum(w, x), 10.0);

    for (std::size_t cols : {std::size_t{1}, std::size_t{2}, std::size_t{5}}) {
      const auto m = random_vec(n * cols, rng);
      const auto v = random_vec(cols, rng);
      std::vector<double> y1(n), y2(n);
      k::scalar::gemv({m.data(), n, cols}, v, y1);
      k::avx2::gemv({m.data(), n, cols}, v, y2);
      for (std::size_t i = 0; i < n; ++i) expect_close(y1[i], y2[i], 1.0);
      std::vector<double> t1(cols), t2(cols);
      k::scalar::gemv_t({m.data(), n, cols}, a, t1);
      k::avx2::gemv_t({m.data(), n, cols}, a, t2);
      for (std::size_t i = 0; i < cols; ++i) expect_close(t1[i], t2[i], 1.0);
    }

    auto num = random_vec(n, rng);
    for (std::size_t i = 0; i < n; i += 3) num[i] = 0.0;
    auto den = random_vec(n, rng, 0.5, 2.0);
    for (std::size_t i = 0; i < n; i += 6) den[i] = 0.0;
    std::vector<double> r1(n), r2(n);
    k::scalar::safe_ratio(num, den, r1);
    k::avx2::safe_ratio(num, den, r2);
    for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(r1[i], r2[i]);

    const std::size_t p = 3;
    const std::size_t draws = 13;
    const auto phi = random_vec(n * p, rng, 0.0, 3.0);
    const auto mw = random_vec(p * draws, rng, 0.1, 5.0);
    std::vector<double> l1(draws), l2(draws);
    k::scalar::log_mixture_products({phi.data(), n, p}, mw, l1);
    k::avx2::log_mixture_products({phi.data(), n, p}, mw, l2);
    for (std::size_t d = 0; d < draws; ++d) EXPECT_NEAR(l1[d], l2[d], 1e-11 * std::max(1.0, std::abs(l1[d])));
  }
}

TEST_F(Avx2Equivalence, WeightedLogSumNonPositiveInput) {
  std::vector<double> w(11, 1.0);
  std::vector<double> x(11, 2.0);
  x[9] = -0.5;
  EXPECT_EQ(k::avx2::weighted_log_sum(w, x), k::scalar::weighted_log_sum(w, x));
  w[9] = 0.0;
  expect_close(k::avx2::weighted_log_sum(w, x), k::scalar::weighted_log_sum(w, x), 10.0);
}
#endif

TEST(Kernels, BackendSelection) {
  EXPECT_TRUE(k::backend_available(k::Backend::Scalar));
  const auto before = k::active_backend();
  k::set_backend(k::Backend::Scalar);
  EXPECT_EQ(k::active_backend(), k::Backend::Scalar);
  EXPECT_EQ(k::backend_name(k::Backend::Scalar), "scalar");
  if (!k::backend_available(k::Backend::Avx2)) {
    EXPECT_THROW(k::set_backend(k::Backend::Avx2), std::invalid_argument);
  }
  k::set_backend(before);
}
