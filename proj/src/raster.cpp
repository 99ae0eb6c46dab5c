#include "graingraph/raster.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <deque>
#include <fstream>
#include <iterator>
#include <numbers>
#include <optional>
#include <set>

#include <fmt/format.h>

#include "graingraph/error.hpp"

namespace graingraph {

namespace {

std::size_t wrap_index(long long v, std::uint32_t n) {
  const long long m = static_cast<long long>(n);
  long long r = v % m;
  if (r < 0) r += m;
  return static_cast<std::size_t>(r);
}

// Periodic 8-connected components of equal nonzero labels; 0 marks unlabeled pixels.
std::vector<std::uint32_t> label_components(const std::vector<std::uint32_t>& data, std::uint32_t w, std::uint32_t h,
                                            std::vector<std::size_t>& sizes) {
  std::vector<std::uint32_t> comp(data.size(), 0);
  sizes.assign(1, 0);
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < data.size(); ++start) {
    if (comp[start] != 0 || data[start] == 0) continue;
    const std::uint32_t label = data[start];
    const auto id = static_cast<std::uint32_t>(sizes.size());
    sizes.push_back(0);
    comp[start] = id;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      ++sizes[id];
      const long long c = static_cast<long long>(p % w);
      const long long r = static_cast<long long>(p / w);
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          const std::size_t q = wrap_index(r + dr, h) * w + wrap_index(c + dc, w);
          if (comp[q] == 0 && data[q] == label) {
            comp[q] = id;
            stack.push_back(q);
          }
        }
      }
    }
  }
  return comp;
}

// Rasterized straight boundaries leave staircase tips that touch only diagonally, so
// connectivity is taken over the 8-neighbourhood.
void check_partition(const IndexImage& img) {
  std::vector<std::size_t> sizes;
  const std::vector<std::uint32_t> comp = label_components(img.data, img.width, img.height, sizes);
  std::map<std::uint32_t, std::uint32_t> first;
  for (std::size_t p = 0; p < img.data.size(); ++p) {
    auto [it, inserted] = first.try_emplace(img.data[p], comp[p]);
    if (!inserted && it->second != comp[p]) {
      throw Error(ErrorKind::input,
                  fmt::format("grain {} is not connected (second component at pixel col {} row {})", img.data[p],
                              p % img.width, p / img.width));
    }
  }
}

}  // namespace

Extraction image_to_graph(const IndexImage& img, const std::map<GrainId, Vec3>& orientations) {
  const std::uint32_t w = img.width;
  const std::uint32_t h = img.height;
  if (w < 8 || h < 8) throw Error(ErrorKind::input, fmt::format("index image {}x{} is smaller than 8x8", w, h));
  if (img.data.size() != static_cast<std::size_t>(w) * h) {
    throw Error(ErrorKind::input, "index image data does not match its dimensions");
  }
  for (std::size_t p = 0; p < img.data.size(); ++p) {
    if (img.data[p] == 0) {
      throw Error(ErrorKind::input, fmt::format("pixel col {} row {} has index 0", p % w, p / w));
    }
  }
  check_partition(img);

  // A triplet is a junction candidate when its three grains pairwise share a pixel edge inside
  // the 3x3 window. Three grains seen together without touching are two grains facing each
  // other across a boundary thinner than the window, not a junction.
  struct Candidate {
    int crowded = 0;  // 1 when the window held four or more grains
    int score = 0;    // sum of squared 8-neighbourhood counts; lower is more even
    std::size_t pixel = 0;
    auto operator<=>(const Candidate&) const = default;
  };
  std::map<Triplet, Candidate> best;
  std::optional<std::size_t> first_crowded;
  std::size_t crowded = 0;
  std::uint32_t win[3][3];
  for (std::uint32_t r = 0; r < h; ++r) {
    for (std::uint32_t c = 0; c < w; ++c) {
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          win[dr + 1][dc + 1] = img.data[wrap_index(static_cast<long long>(r) + dr, h) * w +
                                         wrap_index(static_cast<long long>(c) + dc, w)];
        }
      }
      std::uint32_t ids[8];
      int counts[8];
      int distinct = 0;
      for (int k = 0; k < 9; ++k) {
        if (k == 4) continue;
        const std::uint32_t v = win[k / 3][k % 3];
        int m = 0;
        while (m < distinct && ids[m] != v) ++m;
        if (m == distinct) {
          ids[distinct] = v;
          counts[distinct++] = 0;
        }
        ++counts[m];
      }
      if (distinct < 3) continue;
      const std::size_t pixel = static_cast<std::size_t>(r) * w + c;
      const bool is_crowded = distinct >= 4;
      if (is_crowded) {
        ++crowded;
        if (!first_crowded) first_crowded = pixel;
      }
      auto touch = [&win](std::uint32_t a, std::uint32_t b) {
        for (int i = 0; i < 3; ++i) {
          for (int j = 0; j < 3; ++j) {
            const std::uint32_t v = win[i][j];
            if (v != a && v != b) continue;
            const std::uint32_t other = v == a ? b : a;
            if (j + 1 < 3 && win[i][j + 1] == other) return true;
            if (i + 1 < 3 && win[i + 1][j] == other) return true;
          }
        }
        // a 2x2 block of four grains is a pixel-scale quadruple point; it is split by joining
        // the diagonal holding the smallest grain id
        for (int i = 0; i < 2; ++i) {
          for (int j = 0; j < 2; ++j) {
            const std::uint32_t p = win[i][j], q = win[i][j + 1], u = win[i + 1][j], v = win[i + 1][j + 1];
            if (p == q || p == u || p == v || q == u || q == v || u == v) continue;
            const bool main_diagonal = std::min(p, v) < std::min(q, u);
            const auto [x, y] = main_diagonal ? std::minmax(p, v) : std::minmax(q, u);
            if (std::min(a, b) == x && std::max(a, b) == y) return true;
          }
        }
        return false;
      };
      for (int x = 0; x < distinct; ++x) {
        for (int y = x + 1; y < distinct; ++y) {
          if (!touch(ids[x], ids[y])) continue;
          for (int z = y + 1; z < distinct; ++z) {
            if (!touch(ids[x], ids[z]) || !touch(ids[y], ids[z])) continue;
            const Candidate cand{is_crowded ? 1 : 0,
                                 counts[x] * counts[x] + counts[y] * counts[y] + counts[z] * counts[z], pixel};
            auto [it, inserted] = best.try_emplace(make_triplet(ids[x], ids[y], ids[z]), cand);
            // row-major scan: an equal key never replaces the earlier pixel
            if (!inserted && cand < it->second) it->second = cand;
          }
        }
      }
    }
  }

  std::map<GrainId, std::size_t> pixel_counts;
  for (std::uint32_t v : img.data) ++pixel_counts[v];
  const double total = static_cast<double>(img.data.size());

  GrainGraph graph(img.domain, img.z_l, 0.0);
  for (const auto& [id, count] : pixel_counts) {
    auto o = orientations.find(id);
    graph.add_grain(id, o == orientations.end() ? Vec3{0.0, 0.0, 1.0} : o->second,
                    static_cast<double>(count) / total);
  }
  std::map<std::pair<GrainId, GrainId>, std::vector<JunctionId>> boundaries;
  for (const auto& [t, cand] : best) {
    const Vec2 pos{(static_cast<double>(cand.pixel % w) + 0.5) / w, (static_cast<double>(cand.pixel / w) + 0.5) / h};
    const JunctionId j = graph.add_junction(pos, t);
    boundaries[{t[0], t[1]}].push_back(j);
    boundaries[{t[0], t[2]}].push_back(j);
    boundaries[{t[1], t[2]}].push_back(j);
  }
  for (const auto& [pair, js] : boundaries) {
    if (js.size() == 2) graph.link(js[0], js[1]);
  }
  graph.refresh_centroids();

  if (first_crowded && !validate(graph).ok()) {
    throw Error(ErrorKind::degenerate,
                fmt::format("quadruple junction: pixel col {} row {} sees four or more grains", *first_crowded % w,
                            *first_crowded / w));
  }
  Extraction out{std::move(graph), {}, crowded};
  out.features = normalize_features(out.graph);
  return out;
}

std::pair<std::uint32_t, std::uint32_t> raster_size(const DomainSpec& domain, double pixels_per_um) {
  if (!(pixels_per_um > 0.0)) throw Error(ErrorKind::config, "raster resolution must be positive");
  const auto w = static_cast<std::uint32_t>(std::max(8L, std::lround(domain.lx * pixels_per_um)));
  const auto h = static_cast<std::uint32_t>(std::max(8L, std::lround(domain.ly * pixels_per_um)));
  return {w, h};
}

IndexImage graph_to_image(const GrainGraph& graph, std::uint32_t width, std::uint32_t height) {
  if (width < 8 || height < 8) throw Error(ErrorKind::input, "raster must be at least 8x8 pixels");
  if (graph.grain_count() == 0) throw Error(ErrorKind::input, "cannot rasterize a graph without grains");
  const DomainSpec& d = graph.domain();
  IndexImage img(width, height, d, graph.z());
  std::vector<std::uint32_t>& owner = img.data;
  const double w = width;
  const double h = height;

  auto centroid_distance = [&](GrainId g, double px, double py) {
    const Vec2 c = graph.grain(g).centroid;
    return graph.physical_distance({px / w, py / h}, c);
  };

  std::vector<Vec2> poly;
  std::vector<std::pair<double, Vec2>> ordered;
  std::vector<double> xs;
  for (const auto& [id, g] : graph.grains()) {
    if (g.ring.size() < 3) {
      throw Error(ErrorKind::input, fmt::format("grain {} has {} junctions; cannot draw its polygon", id, g.ring.size()));
    }
    ordered.clear();
    for (JunctionId j : g.ring) {
      const Vec2 rel = min_image(graph.junction(j).pos - g.centroid);
      ordered.emplace_back(std::atan2(rel.y * d.ly, rel.x * d.lx), rel);
    }
    std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    poly.clear();
    double ymin = 1e300;
    double ymax = -1e300;
    for (const auto& [angle, rel] : ordered) {
      const Vec2 p{(g.centroid.x + rel.x) * w, (g.centroid.y + rel.y) * h};
      poly.push_back(p);
      ymin = std::min(ymin, p.y);
      ymax = std::max(ymax, p.y);
    }
    const long long r0 = static_cast<long long>(std::ceil(ymin - 0.5));
    const long long r1 = static_cast<long long>(std::floor(ymax - 0.5));
    for (long long r = r0; r <= r1; ++r) {
      const double y = static_cast<double>(r) + 0.5;
      xs.clear();
      for (std::size_t k = 0; k < poly.size(); ++k) {
        const Vec2& a = poly[k];
        const Vec2& b = poly[(k + 1) % poly.size()];
        if ((a.y <= y) != (b.y <= y)) xs.push_back(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
      }
      std::sort(xs.begin(), xs.end());
      const std::size_t row = wrap_index(r, height);
      for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
        const long long c0 = static_cast<long long>(std::ceil(xs[k] - 0.5));
        const long long c1 = static_cast<long long>(std::ceil(xs[k + 1] - 0.5));
        for (long long c = c0; c < c1; ++c) {
          const std::size_t col = wrap_index(c, width);
          std::uint32_t& o = owner[row * width + col];
          if (o == 0 || o == id) {
            o = id;
            continue;
          }
          const double px = static_cast<double>(col) + 0.5;
          const double py = static_cast<double>(row) + 0.5;
          const double d_new = centroid_distance(id, px, py);
          const double d_old = centroid_distance(o, px, py);
          if (d_new < d_old || (d_new == d_old && id < o)) o = id;
        }
      }
    }
  }

  // fragments cut off by overlapping polygons are released to the hole fill, keeping
  // each grain's largest component
  std::vector<std::size_t> sizes;
  const std::vector<std::uint32_t> comp = label_components(owner, width, height, sizes);
  std::map<std::uint32_t, std::uint32_t> main_comp;
  for (std::size_t p = 0; p < owner.size(); ++p) {
    if (owner[p] == 0) continue;
    auto [it, inserted] = main_comp.try_emplace(owner[p], comp[p]);
    if (!inserted && sizes[comp[p]] > sizes[it->second]) it->second = comp[p];
  }
  std::deque<std::size_t> queue;
  for (std::size_t p = 0; p < owner.size(); ++p) {
    if (owner[p] != 0 && main_comp[owner[p]] != comp[p]) owner[p] = 0;
  }
  for (std::size_t p = 0; p < owner.size(); ++p) {
    if (owner[p] != 0) queue.push_back(p);
  }
  if (queue.empty()) throw Error(ErrorKind::degenerate, "no pixel was covered by any grain polygon");
  while (!queue.empty()) {
    const std::size_t p = queue.front();
    queue.pop_front();
    const long long c = static_cast<long long>(p % width);
    const long long r = static_cast<long long>(p / width);
    const std::size_t nbrs[4] = {r * width + wrap_index(c + 1, width), r * width + wrap_index(c - 1, width),
                                 wrap_index(r + 1, height) * width + c, wrap_index(r - 1, height) * width + c};
    for (std::size_t q : nbrs) {
      if (owner[q] == 0) {
        owner[q] = owner[p];
        queue.push_back(q);
      }
    }
  }
  return img;
}

IndexVolume stack_layers(std::span<const IndexImage> images, double dz) {
  if (images.empty()) throw Error(ErrorKind::input, "stack_layers needs at least one layer");
  IndexVolume vol;
  vol.width = images.front().width;
  vol.height = images.front().height;
  vol.depth = static_cast<std::uint32_t>(images.size());
  vol.dz = dz;
  vol.data.reserve(static_cast<std::size_t>(vol.width) * vol.height * vol.depth);
  for (std::size_t l = 0; l < images.size(); ++l) {
    const IndexImage& img = images[l];
    if (img.width != vol.width || img.height != vol.height) {
      throw Error(ErrorKind::input, fmt::format("layer {} is {}x{}, expected {}x{}", l, img.width, img.height,
                                                vol.width, vol.height));
    }
    vol.data.insert(vol.data.end(), img.data.begin(), img.data.end());
  }
  return vol;
}

// ---------------------------------------------------------------------------
// Binary formats

namespace {

class Writer {
 public:
  void bytes(const char* s, std::size_t n) { out_.insert(out_.end(), s, s + n); }
  template <typename T>
  void le(T v) {
    using U = std::make_unsigned_t<T>;
    const U u = static_cast<U>(v);
    for (std::size_t k = 0; k < sizeof(T); ++k) out_.push_back(static_cast<std::uint8_t>(u >> (8 * k)));
  }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> in, const char* what) : in_(in), what_(what) {}
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw Error(ErrorKind::format, fmt::format("{}: truncated file", what_));
  }
  void magic(const char* m) {
    need(4);
    if (std::memcmp(in_.data() + pos_, m, 4) != 0) {
      throw Error(ErrorKind::format, fmt::format("{}: bad magic bytes (expected {})", what_, m));
    }
    pos_ += 4;
  }
  template <typename T>
  T le() {
    need(sizeof(T));
    std::make_unsigned_t<T> u = 0;
    for (std::size_t k = 0; k < sizeof(T); ++k) {
      u |= static_cast<std::make_unsigned_t<T>>(static_cast<std::make_unsigned_t<T>>(in_[pos_ + k]) << (8 * k));
    }
    pos_ += sizeof(T);
    return static_cast<T>(u);
  }
  double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }
  void finish() const {
    if (pos_ != in_.size()) throw Error(ErrorKind::format, fmt::format("{}: trailing bytes", what_));
  }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
  const char* what_;
};

std::vector<std::uint8_t> read_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::input, fmt::format("cannot open {}", path.string()));
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_binary(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::input, fmt::format("cannot write {}", path.string()));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::input, fmt::format("short write to {}", path.string()));
}

}  // namespace

std::vector<std::uint8_t> encode_index_image(const IndexImage& img) {
  Writer w;
  w.bytes("GIDX", 4);
  w.le<std::uint16_t>(kIndexFormatVersion);
  w.le<std::uint32_t>(img.width);
  w.le<std::uint32_t>(img.height);
  w.f64(img.z_l);
  for (std::uint32_t v : img.data) w.le<std::uint32_t>(v);
  return w.take();
}

IndexImage decode_index_image(std::span<const std::uint8_t> bytes, const DomainSpec& domain) {
  Reader r(bytes, "GIDX");
  r.magic("GIDX");
  const auto version = r.le<std::uint16_t>();
  if (version != kIndexFormatVersion) throw Error(ErrorKind::format, fmt::format("GIDX: unsupported version {}", version));
  const auto w = r.le<std::uint32_t>();
  const auto h = r.le<std::uint32_t>();
  const double z = r.f64();
  const std::size_t n = static_cast<std::size_t>(w) * h;
  r.need(n * 4);
  IndexImage img(w, h, domain, z);
  for (auto& v : img.data) v = r.le<std::uint32_t>();
  r.finish();
  return img;
}

std::vector<std::uint8_t> encode_index_volume(const IndexVolume& vol) {
  Writer w;
  w.bytes("GVOL", 4);
  w.le<std::uint16_t>(kIndexFormatVersion);
  w.le<std::uint32_t>(vol.width);
  w.le<std::uint32_t>(vol.height);
  w.le<std::uint32_t>(vol.depth);
  w.f64(vol.dz);
  for (std::uint32_t v : vol.data) w.le<std::uint32_t>(v);
  return w.take();
}

IndexVolume decode_index_volume(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, "GVOL");
  r.magic("GVOL");
  const auto version = r.le<std::uint16_t>();
  if (version != kIndexFormatVersion) throw Error(ErrorKind::format, fmt::format("GVOL: unsupported version {}", version));
  IndexVolume vol;
  vol.width = r.le<std::uint32_t>();
  vol.height = r.le<std::uint32_t>();
  vol.depth = r.le<std::uint32_t>();
  vol.dz = r.f64();
  const std::size_t n = static_cast<std::size_t>(vol.width) * vol.height * vol.depth;
  r.need(n * 4);
  vol.data.resize(n);
  for (auto& v : vol.data) v = r.le<std::uint32_t>();
  r.finish();
  return vol;
}

void write_index_image(const IndexImage& img, const std::filesystem::path& path) {
  write_binary(path, encode_index_image(img));
}

IndexImage read_index_image(const std::filesystem::path& path, const DomainSpec& domain) {
  return decode_index_image(read_binary(path), domain);
}

void write_index_volume(const IndexVolume& vol, const std::filesystem::path& path) {
  write_binary(path, encode_index_volume(vol));
}

IndexVolume read_index_volume(const std::filesystem::path& path) { return decode_index_volume(read_binary(path)); }

}  // namespace graingraph
