#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "graingraph/graph.hpp"

namespace graingraph {

inline constexpr std::size_t kJunctionWidth = 8;
inline constexpr std::size_t kGrainWidth = 11;

using JunctionRow = std::array<double, kJunctionWidth>;
using GrainRow = std::array<double, kGrainWidth>;

// Junction slots: x, y, z, G, R, dx, dy, dz.
// Grain slots: x, y, z, s, v, cos(theta_x), sin(theta_x), cos(theta_z), sin(theta_z), ds, dz.
enum JunctionSlot : std::size_t { jx = 0, jy, jz, jg, jr, jdx, jdy, jdz };
enum GrainSlot : std::size_t { gx = 0, gy, gz, gs, gv, gcx, gsx, gcz, gsz, gds, gdz };

struct EdgeFeature {
  std::uint32_t a = 0;  // junction id
  std::uint32_t b = 0;  // junction id (e_jj) or grain id (e_jg)
  double length = 0.0;
};

/// Per-layer feature table. Rows follow ascending vertex id.
///
/// The same layout holds either physical values (um, K/um, m/s, um^2, um^3) or values
/// normalized by the reference-domain divisors; which one is up to the producer.
struct FeatureSet {
  std::vector<JunctionId> junction_ids;
  std::vector<JunctionRow> junction;
  std::vector<GrainId> grain_ids;
  std::vector<GrainRow> grain;
  std::vector<EdgeFeature> jj_edges;
  std::vector<EdgeFeature> jg_edges;

  /// Row index of a vertex id; throws Error{lookup} when absent.
  std::size_t junction_row(JunctionId id) const;
  std::size_t grain_row(GrainId id) const;
};

/// Changes of vertex features between consecutive layers, normalized like FeatureSet.
/// Rows follow ascending ids of the earlier layer.
struct DeltaF {
  std::vector<JunctionId> junction_ids;
  std::vector<double> dx;
  std::vector<double> dy;
  std::vector<GrainId> grain_ids;
  std::vector<double> ds;
  std::vector<double> v;
};

struct FeatureOptions {
  /// Replace the layer height by the reference height once it exceeds it.
  bool clamp_height = false;
};

JunctionRow junction_divisors(const DomainSpec& d);
GrainRow grain_divisors(const DomainSpec& d);
double length_divisor(const DomainSpec& d);

/// Physical feature values of a graph.
FeatureSet physical_features(const GrainGraph& graph);

/// Divides by the reference-domain constants of `d`. Throws Error{config} on bad constants.
FeatureSet normalize(const FeatureSet& physical, const DomainSpec& d, FeatureOptions opt = {});
FeatureSet denormalize_features(const FeatureSet& normalized, const DomainSpec& d);

FeatureSet normalize_features(const GrainGraph& graph, FeatureOptions opt = {});

}  // namespace graingraph
