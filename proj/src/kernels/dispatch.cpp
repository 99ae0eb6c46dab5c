#include <atomic>

#include "graingraph/kernels.hpp"

namespace graingraph::kernels {

namespace {

#if defined(__x86_64__) || defined(_M_X64)
constexpr bool kHaveAvx2Build = true;
constexpr bool kHaveNeonBuild = false;
#elif defined(__aarch64__)
constexpr bool kHaveAvx2Build = false;
constexpr bool kHaveNeonBuild = true;
#else
constexpr bool kHaveAvx2Build = false;
constexpr bool kHaveNeonBuild = false;
#endif

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{detected_isa()};
  return isa;
}

}  // namespace

const char* to_string(Isa isa) noexcept {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
    case Isa::neon:
      return "neon";
  }
  return "unknown";
}

bool isa_available(Isa isa) noexcept {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
#if defined(__x86_64__) || defined(_M_X64)
      return kHaveAvx2Build && __builtin_cpu_supports("avx2");
#else
      return false;
#endif
    case Isa::neon:
      return kHaveNeonBuild;
  }
  return false;
}

Isa detected_isa() noexcept {
  if (isa_available(Isa::avx2)) return Isa::avx2;
  if (isa_available(Isa::neon)) return Isa::neon;
  return Isa::scalar;
}

Isa active_isa() noexcept { return current().load(std::memory_order_relaxed); }

void set_isa(Isa isa) noexcept { current().store(isa_available(isa) ? isa : Isa::scalar, std::memory_order_relaxed); }

void gemm_rows(const float* x, std::size_t n, std::size_t k, const float* w, std::size_t m, float* y) {
  switch (active_isa()) {
#if defined(__x86_64__) || defined(_M_X64)
    case Isa::avx2:
      return avx2::gemm_rows(x, n, k, w, m, y);
#endif
#if defined(__aarch64__)
    case Isa::neon:
      return neon::gemm_rows(x, n, k, w, m, y);
#endif
    default:
      return scalar::gemm_rows(x, n, k, w, m, y);
  }
}

std::size_t count_mismatches(const std::uint32_t* a, const std::uint32_t* b, std::size_t n) {
  switch (active_isa()) {
#if defined(__x86_64__) || defined(_M_X64)
    case Isa::avx2:
      return avx2::count_mismatches(a, b, n);
#endif
#if defined(__aarch64__)
    case Isa::neon:
      return neon::count_mismatches(a, b, n);
#endif
    default:
      return scalar::count_mismatches(a, b, n);
  }
}

}  // namespace graingraph::kernels
