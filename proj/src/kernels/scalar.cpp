#include "graingraph/kernels.hpp"

namespace graingraph::kernels::scalar {

namespace {

float dot(const float* a, const float* b, std::size_t k) {
  float lane[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t c = 0;
  for (; c + 8 <= k; c += 8) {
    for (int l = 0; l < 8; ++l) {
      const float p = a[c + l] * b[c + l];
      lane[l] = lane[l] + p;
    }
  }
  for (int l = 0; l < 4; ++l) lane[l] = lane[l] + lane[l + 4];
  for (int l = 0; l < 2; ++l) lane[l] = lane[l] + lane[l + 2];
  float s = lane[0] + lane[1];
  for (; c < k; ++c) {
    const float p = a[c] * b[c];
    s = s + p;
  }
  return s;
}

}  // namespace

void gemm_rows(const float* x, std::size_t n, std::size_t k, const float* w, std::size_t m, float* y) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t r = 0; r < m; ++r) y[i * m + r] = dot(x + i * k, w + r * k, k);
  }
}

std::size_t count_mismatches(const std::uint32_t* a, const std::uint32_t* b, std::size_t n) {
  std::size_t count = 0;
  for (std::size_t p = 0; p < n; ++p) count += a[p] != b[p];
  return count;
}

}  // namespace graingraph::kernels::scalar
