#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <vector>

#include "graingraph/features.hpp"
#include "graingraph/graph.hpp"

namespace graingraph {

/// Row-major grain-index image of one layer cross-section.
struct IndexImage {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<std::uint32_t> data;
  DomainSpec domain{};
  double z_l = 0.0;

  IndexImage() = default;
  IndexImage(std::uint32_t w, std::uint32_t h, DomainSpec d = {}, double z = 0.0)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, 0), domain(d), z_l(z) {}

  std::uint32_t& at(std::uint32_t col, std::uint32_t row) { return data[static_cast<std::size_t>(row) * width + col]; }
  std::uint32_t at(std::uint32_t col, std::uint32_t row) const {
    return data[static_cast<std::size_t>(row) * width + col];
  }
};

struct IndexVolume {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint32_t depth = 0;
  double dz = 0.0;
  std::vector<std::uint32_t> data;  // layer-major, then row-major

  std::uint32_t at(std::uint32_t col, std::uint32_t row, std::uint32_t layer) const {
    return data[(static_cast<std::size_t>(layer) * height + row) * width + col];
  }
};

struct Extraction {
  GrainGraph graph;
  FeatureSet features;
  /// Pixels whose 8-neighbourhood held four or more indices; harmless when every
  /// triplet near them was also seen at a clean three-index pixel.
  std::size_t crowded_pixels = 0;
};

/// Builds the grain graph of a periodic index image. Orientations default to +z.
/// Throws Error{input} for a broken partition and Error{degenerate} for quadruple junctions.
Extraction image_to_graph(const IndexImage& img, const std::map<GrainId, Vec3>& orientations = {});

/// Pixel dimensions for a domain at a raster resolution in pixels per micrometre.
std::pair<std::uint32_t, std::uint32_t> raster_size(const DomainSpec& domain, double pixels_per_um);
inline constexpr double kDefaultPixelsPerMicron = 12.5;

/// Rasterizes straight-edged grain polygons; every pixel receives exactly one grain id.
IndexImage graph_to_image(const GrainGraph& graph, std::uint32_t width, std::uint32_t height);

IndexVolume stack_layers(std::span<const IndexImage> images, double dz);

inline constexpr std::uint16_t kIndexFormatVersion = 1;

void write_index_image(const IndexImage& img, const std::filesystem::path& path);
/// The file does not carry domain constants; the caller supplies them.
IndexImage read_index_image(const std::filesystem::path& path, const DomainSpec& domain = {});
void write_index_volume(const IndexVolume& vol, const std::filesystem::path& path);
IndexVolume read_index_volume(const std::filesystem::path& path);

/// Byte-level encoders used by the file functions.
std::vector<std::uint8_t> encode_index_image(const IndexImage& img);
IndexImage decode_index_image(std::span<const std::uint8_t> bytes, const DomainSpec& domain = {});
std::vector<std::uint8_t> encode_index_volume(const IndexVolume& vol);
IndexVolume decode_index_volume(std::span<const std::uint8_t> bytes);

}  // namespace graingraph
