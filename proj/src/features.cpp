#include "graingraph/features.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "graingraph/error.hpp"

namespace graingraph {

namespace {

template <typename Id>
std::size_t find_row(const std::vector<Id>& ids, Id id, const char* what) {
  auto it = std::lower_bound(ids.begin(), ids.end(), id);
  if (it == ids.end() || *it != id) throw Error(ErrorKind::lookup, fmt::format("no feature row for {} {}", what, id));
  return static_cast<std::size_t>(it - ids.begin());
}

}  // namespace

std::size_t FeatureSet::junction_row(JunctionId id) const { return find_row(junction_ids, id, "junction"); }

std::size_t FeatureSet::grain_row(GrainId id) const { return find_row(grain_ids, id, "grain"); }

JunctionRow junction_divisors(const DomainSpec& d) {
  return {d.ref_lx, d.ref_ly, d.ref_lz, d.g_max, d.r_max, d.ref_lx, d.ref_ly, d.ref_lz};
}

GrainRow grain_divisors(const DomainSpec& d) {
  const double a = d.ref_area();
  return {d.ref_lx, d.ref_ly, d.ref_lz, a, a * d.ref_lz, 1.0, 1.0, 1.0, 1.0, a, d.ref_lz};
}

double length_divisor(const DomainSpec& d) { return d.ref_lx; }

FeatureSet physical_features(const GrainGraph& graph) {
  const DomainSpec& d = graph.domain();
  FeatureSet fs;
  fs.junction_ids.reserve(graph.junction_count());
  fs.junction.reserve(graph.junction_count());
  for (const auto& [id, j] : graph.junctions()) {
    fs.junction_ids.push_back(id);
    fs.junction.push_back({j.pos.x * d.lx, j.pos.y * d.ly, graph.z(), d.g_z, d.r_z, j.delta.x * d.lx,
                           j.delta.y * d.ly, graph.dz()});
  }
  const double area = d.area();
  const double volume = area * d.lz;
  fs.grain_ids.reserve(graph.grain_count());
  fs.grain.reserve(graph.grain_count());
  for (const auto& [id, g] : graph.grains()) {
    fs.grain_ids.push_back(id);
    fs.grain.push_back({g.centroid.x * d.lx, g.centroid.y * d.ly, graph.z(), g.area * area, g.excess_volume * volume,
                        std::cos(g.theta_x), std::sin(g.theta_x), std::cos(g.theta_z), std::sin(g.theta_z),
                        g.delta_area * area, graph.dz()});
  }
  for (const auto& [a, b] : graph.edges()) {
    fs.jj_edges.push_back({a, b, graph.edge_length(a, b)});
  }
  fs.jg_edges.reserve(graph.jg_edge_count());
  for (const auto& [id, j] : graph.junctions()) {
    for (std::size_t k = 0; k < 3; ++k) {
      if (k > 0 && j.triplet[k] == j.triplet[k - 1]) continue;
      const GrainId g = j.triplet[k];
      const double len = graph.has_grain(g) ? graph.physical_distance(j.pos, graph.grain(g).centroid) : 0.0;
      fs.jg_edges.push_back({id, g, len});
    }
  }
  return fs;
}

FeatureSet normalize(const FeatureSet& physical, const DomainSpec& d, FeatureOptions opt) {
  d.check();
  FeatureSet fs = physical;
  const JunctionRow jd = junction_divisors(d);
  const GrainRow gd = grain_divisors(d);
  for (auto& row : fs.junction) {
    if (opt.clamp_height) row[jz] = std::min(row[jz], d.ref_lz);
    for (std::size_t k = 0; k < kJunctionWidth; ++k) row[k] /= jd[k];
  }
  for (auto& row : fs.grain) {
    if (opt.clamp_height) row[gz] = std::min(row[gz], d.ref_lz);
    for (std::size_t k = 0; k < kGrainWidth; ++k) row[k] /= gd[k];
  }
  const double ld = length_divisor(d);
  for (auto& e : fs.jj_edges) e.length /= ld;
  for (auto& e : fs.jg_edges) e.length /= ld;
  return fs;
}

FeatureSet denormalize_features(const FeatureSet& normalized, const DomainSpec& d) {
  d.check();
  FeatureSet fs = normalized;
  const JunctionRow jd = junction_divisors(d);
  const GrainRow gd = grain_divisors(d);
  for (auto& row : fs.junction) {
    for (std::size_t k = 0; k < kJunctionWidth; ++k) row[k] *= jd[k];
  }
  for (auto& row : fs.grain) {
    for (std::size_t k = 0; k < kGrainWidth; ++k) row[k] *= gd[k];
  }
  const double ld = length_divisor(d);
  for (auto& e : fs.jj_edges) e.length *= ld;
  for (auto& e : fs.jg_edges) e.length *= ld;
  return fs;
}

FeatureSet normalize_features(const GrainGraph& graph, FeatureOptions opt) {
  return normalize(physical_features(graph), graph.domain(), opt);
}

}  // namespace graingraph
