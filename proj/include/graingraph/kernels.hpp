#pragma once

#include <cstddef>
#include <cstdint>

namespace graingraph::kernels {

enum class Isa { scalar, avx2, neon };

const char* to_string(Isa isa) noexcept;

/// Best instruction set supported by this build and CPU.
Isa detected_isa() noexcept;
/// Instruction set used by the dispatching entry points.
Isa active_isa() noexcept;
/// Forces an instruction set (tests, benchmarks); falls back to scalar if unsupported.
void set_isa(Isa isa) noexcept;
bool isa_available(Isa isa) noexcept;

/// y[i * m + r] = dot(x[i * k .. i * k + k), w[r * k .. r * k + k)) for i < n, r < m.
///
/// Every variant reduces a dot product in the same order: eight float lanes over full blocks
/// of eight, folded (l + l+4), (l + l+2), (l + l+1), then the tail added in sequence. All
/// variants therefore return bitwise identical results.
void gemm_rows(const float* x, std::size_t n, std::size_t k, const float* w, std::size_t m, float* y);

/// Number of positions where a[p] != b[p].
std::size_t count_mismatches(const std::uint32_t* a, const std::uint32_t* b, std::size_t n);

namespace scalar {
void gemm_rows(const float* x, std::size_t n, std::size_t k, const float* w, std::size_t m, float* y);
std::size_t count_mismatches(const std::uint32_t* a, const std::uint32_t* b, std::size_t n);
}  // namespace scalar

namespace avx2 {
void gemm_rows(const float* x, std::size_t n, std::size_t k, const float* w, std::size_t m, float* y);
std::size_t count_mismatches(const std::uint32_t* a, const std::uint32_t* b, std::size_t n);
}  // namespace avx2

namespace neon {
void gemm_rows(const float* x, std::size_t n, std::size_t k, const float* w, std::size_t m, float* y);
std::size_t count_mismatches(const std::uint32_t* a, const std::uint32_t* b, std::size_t n);
}  // namespace neon

}  // namespace graingraph::kernels
