#include "graingraph/substrate.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include <fmt/format.h>

#include "graingraph/error.hpp"

namespace graingraph {

void SubstrateSpec::check() const {
  domain.check();
  if (const auto* hex = std::get_if<HexPerturbed>(&sampler)) {
    if (!(hex->d0 > 0.0)) throw Error(ErrorKind::config, fmt::format("d0 must be positive, got {}", hex->d0));
    if (!(hex->amplitude >= 0.0 && hex->amplitude < 0.5)) {
      throw Error(ErrorKind::config, fmt::format("amplitude must lie in [0, 0.5), got {}", hex->amplitude));
    }
  } else if (std::get<UniformSeeds>(sampler).n_seeds < 2) {
    throw Error(ErrorKind::config, "uniform sampler needs at least 2 seeds");
  }
  if (orientation_mode && !(orientation_mode->concentration > 0.0)) {
    throw Error(ErrorKind::config, "orientation concentration must be positive");
  }
}

std::vector<Vec3> sample_orientations(std::size_t n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Vec3> out;
  out.reserve(n);
  while (out.size() < n) {
    Vec3 v{normal(rng), normal(rng), normal(rng)};
    const double len = v.norm();
    if (len < 1e-12) continue;
    out.push_back({v.x / len, v.y / len, v.z / len});
  }
  return out;
}

std::vector<Vec3> sample_peaked_orientations(std::size_t n, const PeakedOrientation& mode, Rng& rng) {
  std::normal_distribution<double> normal(mode.theta0, 1.0 / mode.concentration);
  std::uniform_real_distribution<double> azimuth(0.0, 2.0 * std::numbers::pi);
  std::vector<Vec3> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    // fold into [0, pi/2]
    double t = std::fmod(std::abs(normal(rng)), std::numbers::pi);
    if (t > std::numbers::pi / 2) t = std::numbers::pi - t;
    const double phi = azimuth(rng);
    out.push_back({std::sin(t) * std::cos(phi), std::sin(t) * std::sin(phi), std::cos(t)});
  }
  return out;
}

std::pair<int, int> hex_lattice_shape(const DomainSpec& domain, double d0) {
  const double cell_area = std::numbers::pi * d0 * d0 / 4.0;
  const double a = std::sqrt(2.0 * cell_area / std::sqrt(3.0));
  const int nx = static_cast<int>(std::lround(domain.lx / a));
  int ny = static_cast<int>(std::lround(domain.ly / (a * std::sqrt(3.0) / 2.0)));
  // odd rows are offset by half a cell, so the row count must be even to close on the torus
  if (ny % 2 != 0) ny = (domain.ly / (a * std::sqrt(3.0) / 2.0) >= ny) ? ny + 1 : ny - 1;
  return {nx, ny};
}

std::vector<Vec2> hex_perturbed_seeds(const DomainSpec& domain, const HexPerturbed& hex, Rng& rng) {
  const auto [nx, ny] = hex_lattice_shape(domain, hex.d0);
  if (nx < 2 || ny < 2) {
    throw Error(ErrorKind::config, fmt::format("domain {}x{} um is too small for a hexagonal lattice with d0={} um",
                                               domain.lx, domain.ly, hex.d0));
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  const double sx = hex.amplitude;
  const double sy = hex.amplitude * domain.lx / domain.ly;
  std::vector<Vec2> seeds;
  seeds.reserve(static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny));
  for (int r = 0; r < ny; ++r) {
    for (int c = 0; c < nx; ++c) {
      const double x = (c + 0.25 + 0.5 * (r % 2)) / nx;
      const double y = (r + 0.5) / ny;
      const double ex = normal(rng);
      const double ey = normal(rng);
      seeds.push_back(wrap_unit(Vec2{x + sx * ex, y + sy * ey}));
    }
  }
  return seeds;
}

std::vector<Vec2> uniform_seeds(std::size_t n, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Vec2> seeds(n);
  for (auto& s : seeds) {
    s.x = u(rng);
    s.y = u(rng);
    s = wrap_unit(s);
  }
  return seeds;
}

// ---------------------------------------------------------------------------
// Periodic Voronoi by half-plane clipping

namespace {

struct Site {
  std::uint32_t seed = 0;
  std::int32_t ox = 0;
  std::int32_t oy = 0;

  auto operator<=>(const Site&) const = default;
  Site shifted(std::int32_t dx, std::int32_t dy) const { return {seed, ox + dx, oy + dy}; }
};

using VertexKey = std::array<Site, 3>;
using EdgeKey = std::array<Site, 2>;

// Lattice translations of the same physical vertex or edge map to one representative.
template <std::size_t N>
std::array<Site, N> canonical(std::array<Site, N> key) {
  std::array<Site, N> best{};
  bool first = true;
  for (std::size_t e = 0; e < N; ++e) {
    std::array<Site, N> t;
    for (std::size_t k = 0; k < N; ++k) t[k] = key[k].shifted(-key[e].ox, -key[e].oy);
    std::sort(t.begin(), t.end());
    if (first || t < best) best = t;
    first = false;
  }
  return best;
}

struct Cell {
  std::vector<Vec2> verts;   // relative to the seed, physical units
  std::vector<Site> labels;  // labels[k]: site across the edge verts[k] -> verts[k+1]
};

enum class ClipResult { ok, degenerate };

ClipResult clip(Cell& cell, Vec2 d, Site label, double tol) {
  const double dd = d.x * d.x + d.y * d.y;
  const double inv = 1.0 / std::sqrt(dd);
  const std::size_t n = cell.verts.size();
  std::vector<double> s(n);
  bool any_out = false;
  for (std::size_t k = 0; k < n; ++k) {
    s[k] = (cell.verts[k].x * d.x + cell.verts[k].y * d.y - 0.5 * dd) * inv;
    if (std::abs(s[k]) <= tol) return ClipResult::degenerate;
    any_out |= s[k] > 0.0;
  }
  if (!any_out) return ClipResult::ok;

  Cell out;
  out.verts.reserve(n + 1);
  out.labels.reserve(n + 1);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t m = (k + 1) % n;
    const bool in_cur = s[k] < 0.0;
    const bool in_next = s[m] < 0.0;
    if (in_cur) {
      out.verts.push_back(cell.verts[k]);
      out.labels.push_back(cell.labels[k]);
    }
    if (in_cur != in_next) {
      const double t = s[k] / (s[k] - s[m]);
      const Vec2 p = cell.verts[k] + (cell.verts[m] - cell.verts[k]) * t;
      out.verts.push_back(p);
      out.labels.push_back(in_cur ? label : cell.labels[k]);
    }
  }
  if (out.verts.size() < 3) return ClipResult::degenerate;
  cell = std::move(out);
  return ClipResult::ok;
}

struct BucketGrid {
  int bx = 1;
  int by = 1;
  std::vector<std::vector<std::uint32_t>> buckets;

  BucketGrid(std::span<const Vec2> pts, const DomainSpec& d) {
    const double n = static_cast<double>(pts.size());
    bx = std::max(1, static_cast<int>(std::lround(std::sqrt(n * d.lx / d.ly))));
    by = std::max(1, static_cast<int>(std::lround(std::sqrt(n * d.ly / d.lx))));
    buckets.resize(static_cast<std::size_t>(bx) * static_cast<std::size_t>(by));
    for (std::uint32_t i = 0; i < pts.size(); ++i) buckets[index(cell_x(pts[i].x), cell_y(pts[i].y))].push_back(i);
  }
  int cell_x(double x) const { return std::min(bx - 1, static_cast<int>(x * bx)); }
  int cell_y(double y) const { return std::min(by - 1, static_cast<int>(y * by)); }
  std::size_t index(int cx, int cy) const {
    return static_cast<std::size_t>(cy) * static_cast<std::size_t>(bx) + static_cast<std::size_t>(cx);
  }
};

int floor_div(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

struct Tessellation {
  std::vector<Cell> cells;
  bool degenerate = false;
};

Tessellation tessellate(std::span<const Vec2> seeds, const DomainSpec& d) {
  const double lx = d.lx;
  const double ly = d.ly;
  const double tol = 1e-11 * std::max(lx, ly);
  const BucketGrid grid(seeds, d);
  const double w_min = std::min(lx / grid.bx, ly / grid.by);

  Tessellation tess;
  tess.cells.resize(seeds.size());
  for (std::uint32_t i = 0; i < seeds.size(); ++i) {
    Cell& cell = tess.cells[i];
    // bisectors with the seed's own periodic images bound the cell by half a period
    cell.verts = {{-lx / 2, -ly / 2}, {lx / 2, -ly / 2}, {lx / 2, ly / 2}, {-lx / 2, ly / 2}};
    cell.labels = {{i, 0, -1}, {i, 1, 0}, {i, 0, 1}, {i, -1, 0}};
    const Vec2 p{seeds[i].x * lx, seeds[i].y * ly};
    const int cx = grid.cell_x(seeds[i].x);
    const int cy = grid.cell_y(seeds[i].y);

    auto r_max = [&cell] {
      double r = 0.0;
      for (const Vec2& v : cell.verts) r = std::max(r, std::hypot(v.x, v.y));
      return r;
    };
    double reach = r_max();
    for (int r = 0;; ++r) {
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          if (std::max(std::abs(dx), std::abs(dy)) != r) continue;
          const int gx = cx + dx;
          const int gy = cy + dy;
          const int ox = floor_div(gx, grid.bx);
          const int oy = floor_div(gy, grid.by);
          const auto& bucket = grid.buckets[grid.index(gx - ox * grid.bx, gy - oy * grid.by)];
          for (std::uint32_t j : bucket) {
            if (j == i) continue;  // own images are already encoded in the initial box
            const Vec2 q{(seeds[j].x + ox) * lx, (seeds[j].y + oy) * ly};
            const Vec2 rel = q - p;
            if (std::hypot(rel.x, rel.y) >= 2.0 * reach) continue;
            if (clip(cell, rel, Site{j, ox, oy}, tol) == ClipResult::degenerate) {
              tess.degenerate = true;
              return tess;
            }
            reach = r_max();
          }
        }
      }
      if (r * w_min >= 2.0 * reach) break;
    }
  }
  return tess;
}

double polygon_area(const std::vector<Vec2>& v) {
  double a = 0.0;
  for (std::size_t k = 0; k < v.size(); ++k) {
    const Vec2& p = v[k];
    const Vec2& q = v[(k + 1) % v.size()];
    a += p.x * q.y - q.x * p.y;
  }
  return 0.5 * a;
}

std::vector<Vec2> jittered(std::span<const Vec2> seeds, const DomainSpec& d, double magnitude) {
  std::vector<Vec2> out(seeds.begin(), seeds.end());
  if (magnitude == 0.0) return out;
  constexpr double golden = 0.6180339887498949;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double frac = std::fmod(static_cast<double>(i + 1) * golden, 1.0);
    const double phi = 2.0 * std::numbers::pi * frac;
    // magnitude is a fraction of lx in both directions
    out[i] = wrap_unit(Vec2{out[i].x + magnitude * std::cos(phi), out[i].y + magnitude * d.lx / d.ly * std::sin(phi)});
  }
  return out;
}

std::optional<GrainGraph> assemble(const Tessellation& tess, std::span<const Vec2> seeds,
                                   std::span<const Vec3> orientations, const DomainSpec& d) {
  GrainGraph graph(d);
  const double total = d.area();
  for (std::uint32_t i = 0; i < seeds.size(); ++i) {
    const Vec3& o = orientations[i];
    graph.add_grain(i + 1, o, polygon_area(tess.cells[i].verts) / total);
  }

  struct VertexInfo {
    JunctionId id = 0;
    int count = 0;
  };
  std::map<VertexKey, VertexInfo> vertices;
  std::vector<std::vector<JunctionId>> cell_junctions(tess.cells.size());
  for (std::uint32_t i = 0; i < tess.cells.size(); ++i) {
    const Cell& cell = tess.cells[i];
    const std::size_t n = cell.verts.size();
    const Site self{i, 0, 0};
    for (std::size_t k = 0; k < n; ++k) {
      const VertexKey key = canonical<3>({self, cell.labels[(k + n - 1) % n], cell.labels[k]});
      auto [it, inserted] = vertices.try_emplace(key);
      if (inserted) {
        const Vec2 p{seeds[i].x + cell.verts[k].x / d.lx, seeds[i].y + cell.verts[k].y / d.ly};
        it->second.id = graph.add_junction(p, make_triplet(key[0].seed + 1, key[1].seed + 1, key[2].seed + 1));
      }
      ++it->second.count;
      cell_junctions[i].push_back(it->second.id);
    }
  }
  for (const auto& [key, info] : vertices) {
    if (info.count != 3) return std::nullopt;
  }

  std::map<EdgeKey, bool> seen;
  for (std::uint32_t i = 0; i < tess.cells.size(); ++i) {
    const Cell& cell = tess.cells[i];
    const std::size_t n = cell.verts.size();
    for (std::size_t k = 0; k < n; ++k) {
      const EdgeKey key = canonical<2>({Site{i, 0, 0}, cell.labels[k]});
      if (!seen.try_emplace(key, true).second) continue;
      const JunctionId a = cell_junctions[i][k];
      const JunctionId b = cell_junctions[i][(k + 1) % n];
      if (a == b) return std::nullopt;
      graph.link(a, b);
    }
  }
  graph.refresh_centroids();
  return graph;
}

}  // namespace

GrainGraph periodic_voronoi(std::span<const Vec2> seeds, std::span<const Vec3> orientations,
                            const DomainSpec& domain, VoronoiOptions opt) {
  domain.check();
  if (seeds.size() < 2) throw Error(ErrorKind::input, "periodic_voronoi needs at least 2 seeds");
  if (orientations.size() != seeds.size()) {
    throw Error(ErrorKind::input,
                fmt::format("{} orientations given for {} seeds", orientations.size(), seeds.size()));
  }
  std::vector<Vec2> wrapped;
  wrapped.reserve(seeds.size());
  for (const Vec2& s : seeds) {
    if (!std::isfinite(s.x) || !std::isfinite(s.y)) throw Error(ErrorKind::input, "seed coordinates must be finite");
    wrapped.push_back(wrap_unit(s));
  }
  {
    // coincidence up to roundoff of the periodic wrap
    constexpr double eps = 1e-12;
    std::vector<std::pair<Vec2, std::size_t>> sorted;
    for (std::size_t k = 0; k < wrapped.size(); ++k) sorted.emplace_back(wrapped[k], k);
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
      return a.first.x != b.first.x ? a.first.x < b.first.x : a.first.y < b.first.y;
    });
    const std::size_t n = sorted.size();
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t m = 1; m < n; ++m) {
        const auto& a = sorted[k];
        const auto& b = sorted[(k + m) % n];
        if (std::abs(min_image(b.first.x - a.first.x)) > eps) break;
        if (std::abs(min_image(b.first.y - a.first.y)) <= eps) {
          throw Error(ErrorKind::input, fmt::format("seeds {} and {} coincide", std::min(a.second, b.second),
                                                    std::max(a.second, b.second)));
        }
      }
    }
  }

  double magnitude = 0.0;
  for (int attempt = 0; attempt < opt.max_attempts; ++attempt) {
    const std::vector<Vec2> pts = jittered(wrapped, domain, magnitude);
    const Tessellation tess = tessellate(pts, domain);
    if (!tess.degenerate) {
      if (auto graph = assemble(tess, pts, orientations, domain)) return std::move(*graph);
    }
    magnitude = magnitude == 0.0 ? opt.jitter : magnitude * 10.0;
  }
  throw Error(ErrorKind::degenerate, "periodic_voronoi: degeneracy persisted after jitter escalation");
}

GrainGraph generate_substrate(const SubstrateSpec& spec) {
  spec.check();
  Rng rng(spec.rng_seed);
  std::vector<Vec2> seeds;
  if (const auto* hex = std::get_if<HexPerturbed>(&spec.sampler)) {
    seeds = hex_perturbed_seeds(spec.domain, *hex, rng);
  } else {
    seeds = uniform_seeds(std::get<UniformSeeds>(spec.sampler).n_seeds, rng);
  }
  const std::vector<Vec3> orientations = spec.orientation_mode
                                             ? sample_peaked_orientations(seeds.size(), *spec.orientation_mode, rng)
                                             : sample_orientations(seeds.size(), rng);
  return periodic_voronoi(seeds, orientations, spec.domain);
}

}  // namespace graingraph
