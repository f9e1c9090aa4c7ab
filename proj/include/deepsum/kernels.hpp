#pragma once

// Arithmetic inner loops used by the tensor engine. Every kernel has a scalar
// reference implementation and, where the CPU supports it, an AVX2+FMA
// variant. The variant is picked once at startup from CPUID and can be
// overridden (tests force each ISA to check equivalence).

#include <cstddef>
#include <string_view>

namespace deepsum::kernels {

enum class Isa { Scalar, Avx2 };

enum class Trans { No, Yes };

std::string_view isa_name(Isa isa);

/// Best ISA this CPU and build support.
Isa detected_isa();

/// ISA used by the dispatching entry points below.
Isa active_isa();
void set_active_isa(Isa isa);

/// Restores the previous ISA on scope exit.
class ScopedIsa {
 public:
  explicit ScopedIsa(Isa isa) : previous_(active_isa()) { set_active_isa(isa); }
  ~ScopedIsa() { set_active_isa(previous_); }
  ScopedIsa(const ScopedIsa&) = delete;
  ScopedIsa& operator=(const ScopedIsa&) = delete;

 private:
  Isa previous_;
};

using GemmFn = void (*)(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, double alpha,
                        const double* a, std::size_t lda, const double* b, std::size_t ldb, double beta,
                        double* c, std::size_t ldc);
using AxpyFn = void (*)(std::size_t n, double alpha, const double* x, double* y);
using DotFn = double (*)(std::size_t n, const double* x, const double* y);
using LeakyReluFn = void (*)(std::size_t n, double slope, const double* x, double* y);

struct KernelTable {
  GemmFn gemm;
  AxpyFn axpy;
  DotFn dot;
  LeakyReluFn leaky_relu;
};

/// Kernel table for a specific ISA. Requesting Avx2 on a machine without it
/// returns the scalar table.
const KernelTable& table(Isa isa);

// Row-major BLAS-style GEMM: C = alpha * op(A) * op(B) + beta * C, where
// op(A) is m x k and op(B) is k x n. beta == 0 overwrites C (NaNs in C are
// not propagated).
inline void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, double alpha,
                 const double* a, std::size_t lda, const double* b, std::size_t ldb, double beta,
                 double* c, std::size_t ldc) {
  table(active_isa()).gemm(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

/// y += alpha * x
inline void axpy(std::size_t n, double alpha, const double* x, double* y) {
  table(active_isa()).axpy(n, alpha, x, y);
}

inline double dot(std::size_t n, const double* x, const double* y) {
  return table(active_isa()).dot(n, x, y);
}

/// y = x >= 0 ? x : slope * x  (x and y may alias)
inline void leaky_relu(std::size_t n, double slope, const double* x, double* y) {
  table(active_isa()).leaky_relu(n, slope, x, y);
}

namespace scalar {
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, double alpha, const double* a,
          std::size_t lda, const double* b, std::size_t ldb, double beta, double* c, std::size_t ldc);
void axpy(std::size_t n, double alpha, const double* x, double* y);
double dot(std::size_t n, const double* x, const double* y);
void leaky_relu(std::size_t n, double slope, const double* x, double* y);
}  // namespace scalar

#if defined(DEEPSUM_HAVE_AVX2)
namespace avx2 {
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, double alpha, const double* a,
          std::size_t lda, const double* b, std::size_t ldb, double beta, double* c, std::size_t ldc);
void axpy(std::size_t n, double alpha, const double* x, double* y);
double dot(std::size_t n, const double* x, const double* y);
void leaky_relu(std::size_t n, double slope, const double* x, double* y);
}  // namespace avx2
#endif

}  // namespace deepsum::kernels
