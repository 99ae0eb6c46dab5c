#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "graingraph/substrate.hpp"

namespace graingraph {

enum class ModelTag { regressor, classifier };

const char* to_string(ModelTag tag) noexcept;

/// Vertex features are zero-padded to 11 slots plus a kind flag (0 junction, 1 grain).
inline constexpr std::size_t kPaddedWidth = 11;
inline constexpr std::size_t kVertexInputWidth = kPaddedWidth + 1;

/// Row-major float matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0f) {}

  float& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  float operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

/// One transformer operator. W1, W2, W4, W5 are D_h x (12 + D_h), W3 is D_h x 1.
struct GateWeights {
  Matrix w1, w2, w3, w4, w5;
  std::vector<float> b;
};

enum Gate : std::size_t { gate_i = 0, gate_f, gate_c, gate_o };
inline constexpr std::array<char, 4> kGateNames{'i', 'f', 'c', 'o'};

struct LayerWeights {
  std::array<GateWeights, 4> gates;
};

/// Single-layer perceptron head.
struct Dense {
  Matrix w;
  float b = 0.0f;
};

struct WeightBundle {
  ModelTag tag = ModelTag::regressor;
  std::size_t hidden_dim = 0;
  std::vector<LayerWeights> layers;
  // regressor heads (1 x D_h)
  Dense hx, hy, hs, hv;
  // classifier head (1 x (2 D_h + 1))
  Dense hc;

  std::size_t input_width() const { return kVertexInputWidth + hidden_dim; }
  std::size_t parameter_count() const;
  /// Throws Error{input} naming the first tensor whose shape disagrees with hidden_dim.
  void check() const;
};

WeightBundle zero_weights(ModelTag tag, std::size_t hidden_dim, std::size_t layer_count);
/// Uniform draws in [-scale / sqrt(fan_in), scale / sqrt(fan_in)].
WeightBundle random_weights(ModelTag tag, std::size_t hidden_dim, std::size_t layer_count, Rng& rng,
                            double scale = 1.0);

/// Manifest JSON and raw little-endian f32 blob, tensors in canonical order.
struct SerializedWeights {
  std::string manifest;
  std::vector<unsigned char> blob;
};

SerializedWeights serialize_weights(const WeightBundle& bundle);
/// Throws Error{format} naming the offending tensor on unknown names, missing tensors, shape
/// mismatches, a truncated blob, or D_h / layer count disagreeing with the manifest header.
WeightBundle deserialize_weights(std::string_view manifest, std::span<const unsigned char> blob);

void save_weights(const WeightBundle& bundle, const std::filesystem::path& manifest,
                  const std::filesystem::path& blob);
WeightBundle load_weights(const std::filesystem::path& manifest, const std::filesystem::path& blob);

}  // namespace graingraph
