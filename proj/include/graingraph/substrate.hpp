#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <variant>
#include <vector>

#include "graingraph/graph.hpp"

namespace graingraph {

using Rng = std::mt19937_64;

struct HexPerturbed {
  double d0 = 4.1;         // mean equivalent diameter (um)
  double amplitude = 0.1;  // perturbation scale as a fraction of lx
};

struct UniformSeeds {
  std::size_t n_seeds = 100;
};

/// Misorientation concentrated around a mode theta0 (radians): theta_z is a folded normal
/// with standard deviation 1/concentration, the azimuth is uniform.
struct PeakedOrientation {
  double theta0 = 0.0;
  double concentration = 4.0;
};

struct SubstrateSpec {
  DomainSpec domain{};
  std::variant<HexPerturbed, UniformSeeds> sampler = HexPerturbed{};
  std::optional<PeakedOrientation> orientation_mode;
  std::uint64_t rng_seed = 0;

  /// Throws Error{config} on invalid sampler parameters.
  void check() const;
};

/// Unit vectors uniform on the sphere (normalized Gaussian draws).
std::vector<Vec3> sample_orientations(std::size_t n, Rng& rng);
std::vector<Vec3> sample_peaked_orientations(std::size_t n, const PeakedOrientation& mode, Rng& rng);

/// Perturbed hexagonal lattice seeds in unit-period coordinates, one per cell.
std::vector<Vec2> hex_perturbed_seeds(const DomainSpec& domain, const HexPerturbed& hex, Rng& rng);
/// Row and column counts of the lattice used by hex_perturbed_seeds (columns, rows).
std::pair<int, int> hex_lattice_shape(const DomainSpec& domain, double d0);

std::vector<Vec2> uniform_seeds(std::size_t n, Rng& rng);

struct VoronoiOptions {
  /// First jitter magnitude as a fraction of lx; escalated tenfold per retry.
  double jitter = 1e-9;
  int max_attempts = 6;
};

/// Periodic Voronoi tessellation of unit-period seeds. Grain k+1 is the cell of seeds[k].
/// Cocircular configurations are broken by deterministic per-seed jitter; the seeds
/// themselves are not modified.
GrainGraph periodic_voronoi(std::span<const Vec2> seeds, std::span<const Vec3> orientations,
                            const DomainSpec& domain, VoronoiOptions opt = {});

/// Seeds, orientations and tessellation from one spec and its rng seed.
GrainGraph generate_substrate(const SubstrateSpec& spec);

}  // namespace graingraph
