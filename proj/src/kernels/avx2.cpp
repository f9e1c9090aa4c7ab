// AVX2 + FMA kernels. This translation unit is compiled with -mavx2 -mfma and
// must only be entered after a CPUID check (see dispatch.cpp).

#include <immintrin.h>

#include <algorithm>
#include <vector>

#include "deepsum/kernels.hpp"

namespace deepsum::kernels::avx2 {
namespace {

constexpr std::size_t kMr = 6;
constexpr std::size_t kNr = 8;
constexpr std::size_t kKc = 256;
constexpr std::size_t kMc = 96;
constexpr std::size_t kNc = 2048;

inline double op_at(Trans t, const double* m, std::size_t ld, std::size_t row, std::size_t col) {
  return t == Trans::No ? m[row * ld + col] : m[col * ld + row];
}

// Packs op(A)[i0:i0+mc, p0:p0+kc] into kMr-row slivers, k-major, zero padded.
void pack_a(Trans ta, const double* a, std::size_t lda, std::size_t i0, std::size_t p0, std::size_t mc,
            std::size_t kc, double* out) {
  for (std::size_t ir = 0; ir < mc; ir += kMr) {
    const std::size_t rows = std::min(kMr, mc - ir);
    for (std::size_t p = 0; p < kc; ++p) {
      for (std::size_t i = 0; i < rows; ++i) out[i] = op_at(ta, a, lda, i0 + ir + i, p0 + p);
      for (std::size_t i = rows; i < kMr; ++i) out[i] = 0.0;
      out += kMr;
    }
  }
}

// Packs op(B)[p0:p0+kc, j0:j0+nc] into kNr-column slivers, k-major, zero padded.
void pack_b(Trans tb, const double* b, std::size_t ldb, std::size_t p0, std::size_t j0, std::size_t kc,
            std::size_t nc, double* out) {
  for (std::size_t jr = 0; jr < nc; jr += kNr) {
    const std::size_t cols = std::min(kNr, nc - jr);
    for (std::size_t p = 0; p < kc; ++p) {
      if (tb == Trans::No && cols == kNr) {
        const double* src = b + (p0 + p) * ldb + j0 + jr;
        _mm256_storeu_pd(out, _mm256_loadu_pd(src));
        _mm256_storeu_pd(out + 4, _mm256_loadu_pd(src + 4));
      } else {
        for (std::size_t j = 0; j < cols; ++j) out[j] = op_at(tb, b, ldb, p0 + p, j0 + jr + j);
        for (std::size_t j = cols; j < kNr; ++j) out[j] = 0.0;
      }
      out += kNr;
    }
  }
}

// acc[6x8] = sum_p pa[p] * pb[p]
inline void micro_kernel(std::size_t kc, const double* pa, const double* pb, double* acc) {
  __m256d c00 = _mm256_setzero_pd(), c01 = _mm256_setzero_pd();
  __m256d c10 = _mm256_setzero_pd(), c11 = _mm256_setzero_pd();
  __m256d c20 = _mm256_setzero_pd(), c21 = _mm256_setzero_pd();
  __m256d c30 = _mm256_setzero_pd(), c31 = _mm256_setzero_pd();
  __m256d c40 = _mm256_setzero_pd(), c41 = _mm256_setzero_pd();
  __m256d c50 = _mm256_setzero_pd(), c51 = _mm256_setzero_pd();
  for (std::size_t p = 0; p < kc; ++p) {
    const __m256d b0 = _mm256_loadu_pd(pb);
    const __m256d b1 = _mm256_loadu_pd(pb + 4);
    __m256d av = _mm256_broadcast_sd(pa + 0);
    c00 = _mm256_fmadd_pd(av, b0, c00);
    c01 = _mm256_fmadd_pd(av, b1, c01);
    av = _mm256_broadcast_sd(pa + 1);
    c10 = _mm256_fmadd_pd(av, b0, c10);
    c11 = _mm256_fmadd_pd(av, b1, c11);
    av = _mm256_broadcast_sd(pa + 2);
    c20 = _mm256_fmadd_pd(av, b0, c20);
    c21 = _mm256_fmadd_pd(av, b1, c21);
    av = _mm256_broadcast_sd(pa + 3);
    c30 = _mm256_fmadd_pd(av, b0, c30);
    c31 = _mm256_fmadd_pd(av, b1, c31);
    av = _mm256_broadcast_sd(pa + 4);
    c40 = _mm256_fmadd_pd(av, b0, c40);
    c41 = _mm256_fmadd_pd(av, b1, c41);
    av = _mm256_broadcast_sd(pa + 5);
    c50 = _mm256_fmadd_pd(av, b0, c50);
    c51 = _mm256_fmadd_pd(av, b1, c51);
    pa += kMr;
    pb += kNr;
  }
  _mm256_storeu_pd(acc + 0, c00);
  _mm256_storeu_pd(acc + 4, c01);
  _mm256_storeu_pd(acc + 8, c10);
  _mm256_storeu_pd(acc + 12, c11);
  _mm256_storeu_pd(acc + 16, c20);
  _mm256_storeu_pd(acc + 20, c21);
  _mm256_storeu_pd(acc + 24, c30);
  _mm256_storeu_pd(acc + 28, c31);
  _mm256_storeu_pd(acc + 32, c40);
  _mm256_storeu_pd(acc + 36, c41);
  _mm256_storeu_pd(acc + 40, c50);
  _mm256_storeu_pd(acc + 44, c51);
}

struct PackBuffers {
  std::vector<double> a;
  std::vector<double> b;
};

PackBuffers& thread_buffers() {
  thread_local PackBuffers buffers;
  return buffers;
}

}  // namespace

void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, double alpha, const double* a,
          std::size_t lda, const double* b, std::size_t ldb, double beta, double* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * ldc;
    if (beta == 0.0) {
      std::fill(crow, crow + n, 0.0);
    } else if (beta != 1.0) {
      for (std::size_t j = 0; j < n; ++j) crow[j] *= beta;
    }
  }
  if (alpha == 0.0 || k == 0 || m == 0 || n == 0) return;

  PackBuffers& buf = thread_buffers();
  const std::size_t nc_max = std::min(kNc, n);
  const std::size_t kc_max = std::min(kKc, k);
  const std::size_t mc_max = std::min(kMc, m);
  buf.b.resize(((nc_max + kNr - 1) / kNr) * kNr * kc_max);
  buf.a.resize(((mc_max + kMr - 1) / kMr) * kMr * kc_max);
  alignas(32) double acc[kMr * kNr];
  const __m256d valpha = _mm256_set1_pd(alpha);

  for (std::size_t jc = 0; jc < n; jc += kNc) {
    const std::size_t nc = std::min(kNc, n - jc);
    for (std::size_t pc = 0; pc < k; pc += kKc) {
      const std::size_t kc = std::min(kKc, k - pc);
      pack_b(tb, b, ldb, pc, jc, kc, nc, buf.b.data());
      for (std::size_t ic = 0; ic < m; ic += kMc) {
        const std::size_t mc = std::min(kMc, m - ic);
        pack_a(ta, a, lda, ic, pc, mc, kc, buf.a.data());
        for (std::size_t jr = 0; jr < nc; jr += kNr) {
          const std::size_t cols = std::min(kNr, nc - jr);
          const double* pb = buf.b.data() + (jr / kNr) * kNr * kc;
          for (std::size_t ir = 0; ir < mc; ir += kMr) {
            const std::size_t rows = std::min(kMr, mc - ir);
            const double* pa = buf.a.data() + (ir / kMr) * kMr * kc;
            micro_kernel(kc, pa, pb, acc);
            double* cblk = c + (ic + ir) * ldc + jc + jr;
            if (cols == kNr) {
              for (std::size_t i = 0; i < rows; ++i) {
                double* crow = cblk + i * ldc;
                _mm256_storeu_pd(crow, _mm256_fmadd_pd(valpha, _mm256_load_pd(acc + i * kNr),
                                                       _mm256_loadu_pd(crow)));
                _mm256_storeu_pd(crow + 4, _mm256_fmadd_pd(valpha, _mm256_load_pd(acc + i * kNr + 4),
                                                           _mm256_loadu_pd(crow + 4)));
              }
            } else {
              for (std::size_t i = 0; i < rows; ++i) {
                for (std::size_t j = 0; j < cols; ++j) cblk[i * ldc + j] += alpha * acc[i * kNr + j];
              }
            }
          }
        }
      }
    }
  }
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    _mm256_storeu_pd(y + i + 4, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4)));
  }
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

double dot(std::size_t n, const double* x, const double* y) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, _mm256_add_pd(acc0, acc1));
  double total = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
  for (; i < n; ++i) total += x[i] * y[i];
  return total;
}

void leaky_relu(std::size_t n, double slope, const double* x, double* y) {
  const __m256d vs = _mm256_set1_pd(slope);
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    const __m256d neg = _mm256_cmp_pd(v, zero, _CMP_LT_OQ);
    _mm256_storeu_pd(y + i, _mm256_blendv_pd(v, _mm256_mul_pd(v, vs), neg));
  }
  for (; i < n; ++i) y[i] = x[i] >= 0.0 ? x[i] : slope * x[i];
}

}  // namespace deepsum::kernels::avx2
