// Scalar reference vs AVX2 kernels on random shapes, including ragged edges
// that exercise the packed-panel padding.

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "deepsum/kernels.hpp"

using namespace deepsum::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST(Kernels, DispatchReportsAnIsa) {
  EXPECT_TRUE(detected_isa() == Isa::Scalar || detected_isa() == Isa::Avx2);
  {
    ScopedIsa force(Isa::Scalar);
    EXPECT_EQ(active_isa(), Isa::Scalar);
  }
}

TEST(Kernels, GemmVariantsAgree) {
  if (detected_isa() != Isa::Avx2) GTEST_SKIP() << "no AVX2 on this machine";
  std::mt19937_64 rng(7);
  const std::size_t shapes[][3] = {{1, 1, 1}, {5, 7, 3}, {6, 8, 256}, {13, 17, 300}, {97, 33, 19}, {200, 9, 513}};
  for (const auto& s : shapes) {
    const std::size_t m = s[0], n = s[1], k = s[2];
    for (Trans ta : {Trans::No, Trans::Yes}) {
      for (Trans tb : {Trans::No, Trans::Yes}) {
        const auto a = random_vec(m * k, rng);
        const auto b = random_vec(k * n, rng);
        const auto c0 = random_vec(m * n, rng);
        const std::size_t lda = ta == Trans::No ? k : m;
        const std::size_t ldb = tb == Trans::No ? n : k;
        for (double beta : {0.0, 1.0, -0.5}) {
          auto c_ref = c0;
          auto c_simd = c0;
          table(Isa::Scalar).gemm(ta, tb, m, n, k, 0.75, a.data(), lda, b.data(), ldb, beta, c_ref.data(), n);
          table(Isa::Avx2).gemm(ta, tb, m, n, k, 0.75, a.data(), lda, b.data(), ldb, beta, c_simd.data(), n);
          EXPECT_LT(max_abs_diff(c_ref, c_simd), 1e-11 * static_cast<double>(k))
              << m << "x" << n << "x" << k << " ta=" << int(ta) << " tb=" << int(tb) << " beta=" << beta;
        }
      }
    }
  }
}

TEST(Kernels, GemmBetaZeroIgnoresGarbage) {
  const double a[] = {1, 2, 3, 4};
  const double b[] = {5, 6, 7, 8};
  for (Isa isa : {Isa::Scalar, Isa::Avx2}) {
    double c[] = {NAN, NAN, NAN, NAN};
    table(isa).gemm(Trans::No, Trans::No, 2, 2, 2, 1.0, a, 2, b, 2, 0.0, c, 2);
    EXPECT_DOUBLE_EQ(c[0], 19);
    EXPECT_DOUBLE_EQ(c[1], 22);
    EXPECT_DOUBLE_EQ(c[2], 43);
    EXPECT_DOUBLE_EQ(c[3], 50);
  }
}

TEST(Kernels, VectorKernelsAgree) {
  if (detected_isa() != Isa::Avx2) GTEST_SKIP() << "no AVX2 on this machine";
  std::mt19937_64 rng(11);
  for (std::size_t n : {0u, 1u, 3u, 4u, 9u, 64u, 1001u}) {
    const auto x = random_vec(n, rng);
    auto y_ref = random_vec(n, rng);
    auto y_simd = y_ref;
    table(Isa::Scalar).axpy(n, -1.25, x.data(), y_ref.data());
    table(Isa::Avx2).axpy(n, -1.25, x.data(), y_simd.data());
    EXPECT_LT(max_abs_diff(y_ref, y_simd), 1e-15);

    EXPECT_NEAR(table(Isa::Scalar).dot(n, x.data(), y_ref.data()), table(Isa::Avx2).dot(n, x.data(), y_ref.data()),
                1e-12 * static_cast<double>(n + 1));

    std::vector<double> r_ref(n), r_simd(n);
    table(Isa::Scalar).leaky_relu(n, 0.2, x.data(), r_ref.data());
    table(Isa::Avx2).leaky_relu(n, 0.2, x.data(), r_simd.data());
    EXPECT_EQ(r_ref, r_simd);
  }
}
