#include "oracles/fixtures.hpp"

#include <cmath>
#include <numbers>

namespace fixture {

using namespace graingraph;

Seeded uniform_voronoi(std::size_t n, std::uint64_t seed, const DomainSpec& d) {
  Rng rng(seed);
  auto seeds = uniform_seeds(n, rng);
  auto orient = sample_orientations(n, rng);
  GrainGraph g = periodic_voronoi(seeds, orient, d);
  return {std::move(seeds), std::move(g)};
}

Seeded hex_voronoi(double d0, double amplitude, std::uint64_t seed, const DomainSpec& d) {
  Rng rng(seed);
  auto seeds = hex_perturbed_seeds(d, HexPerturbed{d0, amplitude}, rng);
  auto orient = sample_orientations(seeds.size(), rng);
  GrainGraph g = periodic_voronoi(seeds, orient, d);
  return {std::move(seeds), std::move(g)};
}

GrainGraph grain_with_sides(int k, const DomainSpec& d) {
  std::vector<Vec2> seeds;
  const Vec2 centre{0.5, 0.5};
  seeds.push_back(centre);
  const double ring = 3.0;
  for (int m = 0; m < k; ++m) {
    const double a = 2.0 * std::numbers::pi * m / k + 0.1;
    seeds.push_back({centre.x + ring * std::cos(a) / d.lx, centre.y + ring * std::sin(a) / d.ly});
  }
  const double spacing = 4.0;
  const int nx = static_cast<int>(d.lx / spacing);
  const int ny = 2 * static_cast<int>(d.ly / (spacing * std::sqrt(3.0)));
  for (int r = 0; r < ny; ++r) {
    for (int c = 0; c < nx; ++c) {
      const Vec2 p{(c + 0.5 * (r % 2)) / nx, (r + 0.5) / ny};
      const double dx = min_image(p.x - centre.x) * d.lx;
      const double dy = min_image(p.y - centre.y) * d.ly;
      if (std::hypot(dx, dy) < 7.0) continue;
      seeds.push_back(p);
    }
  }
  std::vector<Vec3> orient(seeds.size(), Vec3{0.0, 0.0, 1.0});
  return periodic_voronoi(seeds, orient, d);
}

GrainGraph regular_hex(int nx, int ny, double lx) {
  DomainSpec d;
  d.lx = lx;
  d.ly = lx / nx * ny * std::sqrt(3.0) / 2.0;
  std::vector<Vec2> seeds;
  for (int r = 0; r < ny; ++r) {
    for (int c = 0; c < nx; ++c) seeds.push_back({(c + 0.5 * (r % 2) + 0.25) / nx, (r + 0.5) / ny});
  }
  std::vector<Vec3> orient(seeds.size(), Vec3{0.0, 0.0, 1.0});
  return periodic_voronoi(seeds, orient, d);
}

std::multiset<Triplet> triplets(const GrainGraph& g) {
  std::multiset<Triplet> out;
  for (const auto& [id, j] : g.junctions()) out.insert(j.triplet);
  return out;
}

std::multiset<std::pair<Triplet, Triplet>> edge_triplets(const GrainGraph& g) {
  std::multiset<std::pair<Triplet, Triplet>> out;
  for (const auto& [id, j] : g.junctions()) {
    for (JunctionId o : j.links) {
      if (id > o) continue;
      Triplet a = j.triplet;
      Triplet b = g.junction(o).triplet;
      if (b < a) std::swap(a, b);
      out.insert({a, b});
    }
  }
  return out;
}

std::vector<std::pair<JunctionId, JunctionId>> brute_force_edges(const GrainGraph& g) {
  std::vector<std::pair<JunctionId, JunctionId>> out;
  for (auto a = g.junctions().begin(); a != g.junctions().end(); ++a) {
    for (auto b = std::next(a); b != g.junctions().end(); ++b) {
      if (shared_count(a->second.triplet, b->second.triplet) == 2) out.emplace_back(a->first, b->first);
    }
  }
  return out;
}

}  // namespace fixture
