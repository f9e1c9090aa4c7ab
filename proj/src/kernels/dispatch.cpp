#include <atomic>
#include <cstdlib>
#include <string_view>

#include "deepsum/kernels.hpp"

namespace deepsum::kernels {
namespace {

constexpr KernelTable kScalarTable{&scalar::gemm, &scalar::axpy, &scalar::dot, &scalar::leaky_relu};

#if defined(DEEPSUM_HAVE_AVX2)
constexpr KernelTable kAvx2Table{&avx2::gemm, &avx2::axpy, &avx2::dot, &avx2::leaky_relu};
#endif

Isa probe_cpu() {
#if defined(DEEPSUM_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) return Isa::Avx2;
#endif
  return Isa::Scalar;
}

// DEEPSUM_ISA=scalar forces the reference kernels process-wide.
Isa initial_isa() {
  const Isa best = probe_cpu();
  if (const char* env = std::getenv("DEEPSUM_ISA")) {
    if (std::string_view(env) == "scalar") return Isa::Scalar;
  }
  return best;
}

std::atomic<Isa>& active() {
  static std::atomic<Isa> isa{initial_isa()};
  return isa;
}

}  // namespace

std::string_view isa_name(Isa isa) { return isa == Isa::Avx2 ? "avx2" : "scalar"; }

Isa detected_isa() {
  static const Isa isa = probe_cpu();
  return isa;
}

Isa active_isa() { return active().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
  if (isa == Isa::Avx2 && detected_isa() != Isa::Avx2) isa = Isa::Scalar;
  active().store(isa, std::memory_order_relaxed);
}

const KernelTable& table(Isa isa) {
#if defined(DEEPSUM_HAVE_AVX2)
  if (isa == Isa::Avx2 && detected_isa() == Isa::Avx2) return kAvx2Table;
#else
  (void)isa;
#endif
  return kScalarTable;
}

}  // namespace deepsum::kernels
