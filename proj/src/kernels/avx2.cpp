#include <immintrin.h>

#include "graingraph/kernels.hpp"

namespace graingraph::kernels::avx2 {

namespace {

float dot(const float* a, const float* b, std::size_t k) {
  __m256 acc = _mm256_setzero_ps();
  std::size_t c = 0;
  for (; c + 8 <= k; c += 8) {
    const __m256 p = _mm256_mul_ps(_mm256_loadu_ps(a + c), _mm256_loadu_ps(b + c));
    acc = _mm256_add_ps(acc, p);
  }
  __m128 q = _mm_add_ps(_mm256_castps256_ps128(acc), _mm256_extractf128_ps(acc, 1));
  q = _mm_add_ps(q, _mm_movehl_ps(q, q));
  q = _mm_add_ss(q, _mm_shuffle_ps(q, q, 1));
  float s = _mm_cvtss_f32(q);
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
  for (; p + 8 <= n; p += 8) {
    const __m256i va = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(a + p));
    const __m256i vb = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(b + p));
    const int eq = _mm256_movemask_ps(_mm256_castsi256_ps(_mm256_cmpeq_epi32(va, vb)));
    count += 8 - static_cast<std::size_t>(__builtin_popcount(static_cast<unsigned>(eq)));
  }
  for (; p < n; ++p) count += a[p] != b[p];
  return count;
}

}  // namespace graingraph::kernels::avx2
