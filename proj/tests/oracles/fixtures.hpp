#pragma once

#include <cstdint>
#include <set>
#include <utility>
#include <vector>

#include "graingraph/graph.hpp"
#include "graingraph/substrate.hpp"

namespace fixture {

using graingraph::DomainSpec;
using graingraph::GrainGraph;
using graingraph::GrainId;
using graingraph::JunctionId;
using graingraph::Triplet;

struct Seeded {
  std::vector<graingraph::Vec2> seeds;
  GrainGraph graph;
};

Seeded uniform_voronoi(std::size_t n, std::uint64_t seed, const DomainSpec& d = {});
Seeded hex_voronoi(double d0, double amplitude, std::uint64_t seed, const DomainSpec& d = {});

/// Substrate whose grain 1 is a regular k-gon (3 <= k <= 8) surrounded by a hexagonal field.
GrainGraph grain_with_sides(int k, const DomainSpec& d = {});

/// Regular hexagonal tiling: nx x ny cells (ny even) on a domain of width lx sized so the
/// seed lattice is equilateral. Every grain has orientation (0, 0, 1).
GrainGraph regular_hex(int nx, int ny, double lx = 40.0);

std::multiset<Triplet> triplets(const GrainGraph& g);
/// Edges expressed by endpoint triplets (smaller first), independent of junction ids.
std::multiset<std::pair<Triplet, Triplet>> edge_triplets(const GrainGraph& g);

/// Pairwise scan: every junction pair whose triplets share exactly two grains.
std::vector<std::pair<JunctionId, JunctionId>> brute_force_edges(const GrainGraph& g);

}  // namespace fixture
