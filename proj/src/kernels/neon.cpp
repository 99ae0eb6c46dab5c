#include <arm_neon.h>

#include "graingraph/kernels.hpp"

namespace graingraph::kernels::neon {

namespace {

float dot(const float* a, const float* b, std::size_t k) {
  float32x4_t lo = vdupq_n_f32(0.0f);
  float32x4_t hi = vdupq_n_f32(0.0f);
  std::size_t c = 0;
  for (; c + 8 <= k; c += 8) {
    lo = vaddq_f32(lo, vmulq_f32(vld1q_f32(a + c), vld1q_f32(b + c)));
    hi = vaddq_f32(hi, vmulq_f32(vld1q_f32(a + c + 4), vld1q_f32(b + c + 4)));
  }
  const float32x4_t q = vaddq_f32(lo, hi);
  const float32x2_t h = vadd_f32(vget_low_f32(q), vget_high_f32(q));
  float s = vget_lane_f32(h, 0) + vget_lane_f32(h, 1);
  for (; c < k; ++c) {
    const float p = a[c] * b[c];
    s = s + p;
  }
  return s;
}

}  // namespace

void gemm_rows(const float* x, std::size_t n, std::size_t k, const float* w, std::size_t m, float* y) {
  for (std::size_t i = 0; i < n; ++i) {
    const float* xi = x + i * k;
    for (std::size_t r = 0; r < m; ++r) y[i * m + r] = dot(xi, w + r * k, k);
  }
}

std::size_t count_mismatches(const std::uint32_t* a, const std::uint32_t* b, std::size_t n) {
  std::size_t count = 0;
  std::size_t p = 0;
  uint32x4_t ones = vdupq_n_u32(0);
  for (; p + 4 <= n; p += 4) {
    const uint32x4_t eq = vceqq_u32(vld1q_u32(a + p), vld1q_u32(b + p));
    ones = vsubq_u32(ones, eq);  // eq lanes are all-ones, i.e. -1
  }
  count = p - static_cast<std::size_t>(vaddvq_u32(ones));
  for (; p < n; ++p) count += a[p] != b[p];
  return count;
}

}  // namespace graingraph::kernels::neon
