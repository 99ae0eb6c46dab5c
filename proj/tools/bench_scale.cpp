// Baseline rollout timing over substrate sizes; grain size is held fixed by scaling the domain.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <vector>

#include "graingraph/evolution.hpp"
#include "graingraph/substrate.hpp"

using namespace graingraph;

int main(int argc, char** argv) {
  const int steps = argc > 1 ? std::atoi(argv[1]) : 15;
  std::vector<std::size_t> sizes;
  for (int k = 2; k < argc; ++k) sizes.push_back(std::strtoul(argv[k], nullptr, 10));
  if (sizes.empty()) sizes = {100, 1000, 10000};
  std::printf("n_g,final_n_g,steps,seconds,seconds_per_step\n");
  for (std::size_t n : sizes) {
    SubstrateSpec spec;
    spec.sampler = UniformSeeds{n};
    spec.domain.lx = spec.domain.ly = 40.0 * std::sqrt(static_cast<double>(n) / 100.0);
    spec.rng_seed = 1;
    GrainGraph g = generate_substrate(spec);
    RolloutOptions opt;
    opt.n_l = steps + 1;
    const auto t0 = std::chrono::steady_clock::now();
    const Trajectory t = rollout(g, BaselinePredictor(), opt);
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (t.failure) {
      std::fprintf(stderr, "n_g %zu: %s\n", n, t.failure->what());
      return 1;
    }
    std::printf("%zu,%zu,%d,%.4f,%.5f\n", n, t.layers.back().grain_count(), steps, s, s / steps);
  }
  return 0;
}
