#include "graingraph/graph.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "graingraph/error.hpp"

namespace graingraph {

void DomainSpec::check() const {
  const auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
  if (!positive(lx) || !positive(ly) || !positive(lz)) {
    throw Error(ErrorKind::config, fmt::format("domain lengths must be positive (lx={}, ly={}, lz={})", lx, ly, lz));
  }
  if (!positive(ref_lx) || !positive(ref_ly) || !positive(ref_lz)) {
    throw Error(ErrorKind::config, "reference lengths must be positive");
  }
  if (!positive(g_max) || !positive(r_max)) {
    throw Error(ErrorKind::config, "normalization bounds g_max and r_max must be positive");
  }
  if (!positive(g_z) || g_z > g_max) {
    throw Error(ErrorKind::config, fmt::format("g_z={} must lie in (0, g_max={}]", g_z, g_max));
  }
  if (!positive(r_z) || r_z > r_max) {
    throw Error(ErrorKind::config, fmt::format("r_z={} must lie in (0, r_max={}]", r_z, r_max));
  }
}

Triplet make_triplet(GrainId a, GrainId b, GrainId c) {
  Triplet t{a, b, c};
  std::sort(t.begin(), t.end());
  return t;
}

int shared_count(const Triplet& a, const Triplet& b) {
  int n = 0;
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < 3 && j < 3) {
    if (a[i] == b[j]) {
      ++n;
      ++i;
      ++j;
    } else if (a[i] < b[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  return n;
}

std::pair<double, double> orientation_angles(const Vec3& o) {
  const double n = o.norm();
  if (n == 0.0) return {0.0, 0.0};
  const double cz = std::clamp(std::abs(o.z) / n, 0.0, 1.0);
  const double theta_z = std::acos(cz);
  const double theta_x = (o.x == 0.0 && o.y == 0.0) ? 0.0 : std::atan2(o.y, o.x);
  return {theta_x, theta_z};
}

GrainGraph::GrainGraph(DomainSpec domain, double z, double dz) : domain_(domain), z_(z), dz_(dz) {}

const Grain& GrainGraph::grain(GrainId id) const {
  auto it = grains_.find(id);
  if (it == grains_.end()) throw Error(ErrorKind::lookup, fmt::format("unknown grain {}", id));
  return it->second;
}

Grain& GrainGraph::grain(GrainId id) {
  auto it = grains_.find(id);
  if (it == grains_.end()) throw Error(ErrorKind::lookup, fmt::format("unknown grain {}", id));
  return it->second;
}

const Junction& GrainGraph::junction(JunctionId id) const {
  auto it = junctions_.find(id);
  if (it == junctions_.end()) throw Error(ErrorKind::lookup, fmt::format("unknown junction {}", id));
  return it->second;
}

Junction& GrainGraph::junction(JunctionId id) {
  auto it = junctions_.find(id);
  if (it == junctions_.end()) throw Error(ErrorKind::lookup, fmt::format("unknown junction {}", id));
  return it->second;
}

Grain& GrainGraph::add_grain(GrainId id, Vec3 orientation, double area, double excess_volume) {
  if (id == 0) throw Error(ErrorKind::input, "grain ids are 1-based");
  auto [it, inserted] = grains_.try_emplace(id);
  if (!inserted) throw Error(ErrorKind::input, fmt::format("duplicate grain {}", id));
  Grain& g = it->second;
  g.id = id;
  g.orientation = orientation;
  std::tie(g.theta_x, g.theta_z) = orientation_angles(orientation);
  g.area = area;
  g.excess_volume = excess_volume;
  return g;
}

JunctionId GrainGraph::add_junction(Vec2 pos, const Triplet& triplet, Vec2 delta) {
  const JunctionId id = next_junction_id_;
  insert_junction(id, pos, triplet, delta);
  return id;
}

void GrainGraph::insert_junction(JunctionId id, Vec2 pos, const Triplet& triplet, Vec2 delta) {
  auto [it, inserted] = junctions_.try_emplace(id);
  if (!inserted) throw Error(ErrorKind::input, fmt::format("duplicate junction {}", id));
  Junction& j = it->second;
  j.id = id;
  j.pos = wrap_unit(pos);
  j.delta = delta;
  j.triplet = triplet;
  std::sort(j.triplet.begin(), j.triplet.end());
  for (std::size_t k = 0; k < 3; ++k) {
    if (k > 0 && j.triplet[k] == j.triplet[k - 1]) continue;
    auto git = grains_.find(j.triplet[k]);
    if (git == grains_.end()) continue;  // reported by validate()
    auto& ring = git->second.ring;
    ring.insert(std::lower_bound(ring.begin(), ring.end(), id), id);
  }
  next_junction_id_ = std::max(next_junction_id_, id + 1);
}

void GrainGraph::erase_junction(JunctionId id) {
  auto it = junctions_.find(id);
  if (it == junctions_.end()) throw Error(ErrorKind::lookup, fmt::format("unknown junction {}", id));
  for (JunctionId other : it->second.links) {
    if (other == id) continue;
    auto oit = junctions_.find(other);
    if (oit == junctions_.end()) continue;
    auto& l = oit->second.links;
    l.erase(std::remove(l.begin(), l.end(), id), l.end());
  }
  for (GrainId g : it->second.triplet) {
    auto git = grains_.find(g);
    if (git == grains_.end()) continue;
    auto& ring = git->second.ring;
    auto r = std::lower_bound(ring.begin(), ring.end(), id);
    if (r != ring.end() && *r == id) ring.erase(r);
  }
  junctions_.erase(it);
}

void GrainGraph::erase_grain(GrainId id) {
  if (grains_.erase(id) == 0) throw Error(ErrorKind::lookup, fmt::format("unknown grain {}", id));
}

void GrainGraph::link(JunctionId a, JunctionId b) {
  Junction& ja = junction(a);
  Junction& jb = junction(b);
  ja.links.push_back(b);
  jb.links.push_back(a);
}

void GrainGraph::unlink(JunctionId a, JunctionId b) {
  auto drop_one = [](std::vector<JunctionId>& v, JunctionId x) {
    auto it = std::find(v.begin(), v.end(), x);
    if (it == v.end()) return false;
    v.erase(it);
    return true;
  };
  Junction& ja = junction(a);
  Junction& jb = junction(b);
  if (!drop_one(ja.links, b) || !drop_one(jb.links, a)) {
    throw Error(ErrorKind::topology, fmt::format("junctions {} and {} are not linked", a, b));
  }
}

void GrainGraph::relink(JunctionId at, JunctionId from, JunctionId to) {
  auto& l = junction(at).links;
  auto it = std::find(l.begin(), l.end(), from);
  if (it == l.end()) {
    throw Error(ErrorKind::topology, fmt::format("junction {} has no link to {}", at, from));
  }
  *it = to;
}

bool GrainGraph::linked(JunctionId a, JunctionId b) const {
  auto it = junctions_.find(a);
  if (it == junctions_.end()) return false;
  const auto& l = it->second.links;
  return std::find(l.begin(), l.end(), b) != l.end();
}

std::size_t GrainGraph::edge_count() const {
  std::size_t n = 0;
  for (const auto& [id, j] : junctions_) n += j.links.size();
  return n / 2;
}

std::size_t GrainGraph::distinct_edge_count() const { return edges().size(); }

std::size_t GrainGraph::jg_edge_count() const { return 3 * junctions_.size(); }

std::vector<std::pair<JunctionId, JunctionId>> GrainGraph::edges() const {
  std::vector<std::pair<JunctionId, JunctionId>> out;
  out.reserve(junctions_.size() * 3 / 2);
  for (const auto& [id, j] : junctions_) {
    for (JunctionId other : j.links) {
      if (id < other) out.emplace_back(id, other);
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

Vec2 GrainGraph::physical_delta(Vec2 from, Vec2 to) const {
  const Vec2 d = min_image(to - from);
  return {d.x * domain_.lx, d.y * domain_.ly};
}

double GrainGraph::physical_distance(Vec2 a, Vec2 b) const {
  const Vec2 d = physical_delta(a, b);
  return std::hypot(d.x, d.y);
}

double GrainGraph::edge_length(JunctionId a, JunctionId b) const {
  return physical_distance(junction(a).pos, junction(b).pos);
}

Vec2 GrainGraph::ring_mean(GrainId id) const {
  const Grain& g = grain(id);
  std::vector<Vec2> pts;
  pts.reserve(g.ring.size());
  for (JunctionId j : g.ring) pts.push_back(junction(j).pos);
  if (pts.empty()) return g.centroid;
  return periodic_mean(pts);
}

void GrainGraph::refresh_centroids() {
  for (auto& [id, g] : grains_) g.centroid = ring_mean(id);
}

std::vector<JunctionId> GrainGraph::boundary_junctions(GrainId g, GrainId other) const {
  std::vector<JunctionId> out;
  for (JunctionId j : grain(g).ring) {
    const Triplet& t = junction(j).triplet;
    if (std::find(t.begin(), t.end(), other) != t.end()) out.push_back(j);
  }
  return out;
}

std::vector<GrainId> GrainGraph::neighbor_grains(GrainId g) const {
  std::vector<GrainId> out;
  for (JunctionId j : grain(g).ring) {
    for (GrainId x : junction(j).triplet) {
      if (x != g) out.push_back(x);
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// ---------------------------------------------------------------------------

const char* to_string(IssueKind kind) noexcept {
  switch (kind) {
    case IssueKind::sub_minimal: return "sub-minimal";
    case IssueKind::bad_orientation: return "bad-orientation";
    case IssueKind::negative_area: return "negative-area";
    case IssueKind::position_out_of_range: return "position-out-of-range";
    case IssueKind::bad_triplet: return "bad-triplet";
    case IssueKind::link_degree: return "link-degree";
    case IssueKind::dangling_link: return "dangling-link";
    case IssueKind::self_link: return "self-link";
    case IssueKind::duplicate_edge: return "duplicate-edge";
    case IssueKind::asymmetric_link: return "asymmetric-link";
    case IssueKind::triplet_intersection: return "triplet-intersection";
    case IssueKind::boundary_pairs: return "boundary-pairs";
    case IssueKind::ring_mismatch: return "ring-mismatch";
    case IssueKind::ring_size: return "ring-size";
    case IssueKind::euler_count: return "euler-count";
  }
  return "unknown";
}

bool ValidationReport::has(IssueKind kind) const {
  auto match = [kind](const Issue& i) { return i.kind == kind; };
  return std::any_of(violations.begin(), violations.end(), match) ||
         std::any_of(notes.begin(), notes.end(), match);
}

bool ValidationReport::cites(IssueKind kind, std::uint64_t id) const {
  for (const auto* list : {&violations, &notes}) {
    for (const Issue& i : *list) {
      if (i.kind == kind && std::find(i.ids.begin(), i.ids.end(), id) != i.ids.end()) return true;
    }
  }
  return false;
}

std::string ValidationReport::summary() const {
  std::ostringstream os;
  for (const Issue& i : violations) os << "violation " << to_string(i.kind) << ": " << i.message << '\n';
  for (const Issue& i : notes) os << "note " << to_string(i.kind) << ": " << i.message << '\n';
  return os.str();
}

namespace {

using GrainPair = std::pair<GrainId, GrainId>;

GrainPair pair_of(GrainId a, GrainId b) { return a < b ? GrainPair{a, b} : GrainPair{b, a}; }

// The two grains shared by two triplets; valid only when shared_count == 2.
GrainPair shared_pair(const Triplet& a, const Triplet& b) {
  GrainId out[2] = {0, 0};
  int n = 0;
  for (GrainId g : a) {
    if (n < 2 && std::find(b.begin(), b.end(), g) != b.end()) out[n++] = g;
  }
  return pair_of(out[0], out[1]);
}

}  // namespace

ValidationReport validate(const GrainGraph& graph) {
  ValidationReport report;
  auto violate = [&](IssueKind kind, std::vector<std::uint64_t> ids, std::string msg) {
    report.violations.push_back({kind, std::move(ids), std::move(msg)});
  };

  const bool sub_minimal = graph.grain_count() < 3;
  if (sub_minimal) {
    report.notes.push_back({IssueKind::sub_minimal, {},
                            fmt::format("graph has {} grains; triplet and Euler checks skipped",
                                        graph.grain_count())});
  }

  for (const auto& [id, g] : graph.grains()) {
    if (std::abs(g.orientation.norm() - 1.0) > 1e-9) {
      violate(IssueKind::bad_orientation, {id}, fmt::format("grain {} orientation is not unit length", id));
    }
    if (!(g.area >= 0.0) || !(g.excess_volume >= 0.0)) {
      violate(IssueKind::negative_area, {id}, fmt::format("grain {} has negative area or excess volume", id));
    }
  }

  std::map<GrainId, std::vector<JunctionId>> expected_rings;
  for (const auto& [id, j] : graph.junctions()) {
    if (!(j.pos.x >= 0.0 && j.pos.x < 1.0 && j.pos.y >= 0.0 && j.pos.y < 1.0)) {
      violate(IssueKind::position_out_of_range, {id}, fmt::format("junction {} lies outside [0,1)", id));
    }
    bool triplet_ok = true;
    for (GrainId g : j.triplet) {
      if (!graph.has_grain(g)) triplet_ok = false;
    }
    const bool repeated = j.triplet[0] == j.triplet[1] || j.triplet[1] == j.triplet[2];
    if (!triplet_ok || (repeated && !sub_minimal)) {
      violate(IssueKind::bad_triplet, {id},
              fmt::format("junction {} triplet ({}, {}, {}) is not 3 distinct known grains", id,
                          j.triplet[0], j.triplet[1], j.triplet[2]));
    }
    for (std::size_t k = 0; k < 3; ++k) {
      if (k > 0 && j.triplet[k] == j.triplet[k - 1]) continue;
      expected_rings[j.triplet[k]].push_back(id);
    }

    if (j.links.size() != 3) {
      violate(IssueKind::link_degree, {id},
              fmt::format("junction {} has {} junction links, expected 3", id, j.links.size()));
    }
    std::map<JunctionId, int> multiplicity;
    for (JunctionId other : j.links) ++multiplicity[other];
    for (const auto& [other, count] : multiplicity) {
      if (other == id) {
        violate(IssueKind::self_link, {id}, fmt::format("junction {} links to itself", id));
        continue;
      }
      if (!graph.has_junction(other)) {
        violate(IssueKind::dangling_link, {id, other}, fmt::format("junction {} links to missing {}", id, other));
        continue;
      }
      const auto& back = graph.junction(other).links;
      if (std::count(back.begin(), back.end(), id) != count) {
        violate(IssueKind::asymmetric_link, {id, other},
                fmt::format("link {}-{} is not symmetric", id, other));
      }
      if (count > 1 && id < other) {
        // on a sub-minimal torus parallel edges are distinct periodic images, not an error
        Issue issue{IssueKind::duplicate_edge, {id, other}, fmt::format("edge {}-{} appears {} times", id, other, count)};
        (sub_minimal ? report.notes : report.violations).push_back(std::move(issue));
      }
      if (!sub_minimal && id < other && shared_count(j.triplet, graph.junction(other).triplet) != 2) {
        violate(IssueKind::triplet_intersection, {id, other},
                fmt::format("edge {}-{} endpoints do not share exactly two grains", id, other));
      }
    }

    if (!sub_minimal && !repeated && j.links.size() == 3) {
      std::set<GrainPair> pairs;
      bool all_two = true;
      for (JunctionId other : j.links) {
        if (!graph.has_junction(other)) continue;
        const Triplet& t = graph.junction(other).triplet;
        if (shared_count(j.triplet, t) != 2) {
          all_two = false;
          break;
        }
        pairs.insert(shared_pair(j.triplet, t));
      }
      if (all_two && pairs.size() != 3) {
        violate(IssueKind::boundary_pairs, {id},
                fmt::format("junction {} links do not cover its three grain boundaries", id));
      }
    }
  }

  for (const auto& [id, g] : graph.grains()) {
    auto it = expected_rings.find(id);
    const std::vector<JunctionId> empty;
    const auto& expected = it == expected_rings.end() ? empty : it->second;
    if (expected != g.ring) {
      violate(IssueKind::ring_mismatch, {id}, fmt::format("grain {} ring disagrees with junction triplets", id));
    }
    if (!sub_minimal && g.ring.size() < 3) {
      violate(IssueKind::ring_size, {id}, fmt::format("grain {} has {} junctions", id, g.ring.size()));
    }
  }

  if (!sub_minimal) {
    const std::size_t ng = graph.grain_count();
    const std::size_t nj = graph.junction_count();
    const std::size_t ejj = graph.distinct_edge_count();
    const std::size_t ejg = graph.jg_edge_count();
    if (nj != 2 * ng || ejj != 3 * ng || ejg != 6 * ng) {
      violate(IssueKind::euler_count, {},
              fmt::format("n_g={} n_j={} |e_jj|={} |e_jg|={} break n_j=2n_g, |e_jj|=3n_g, |e_jg|=6n_g", ng,
                          nj, ejj, ejg));
    }
  }
  return report;
}

NeighborSet neighbors(const GrainGraph& graph, VertexRef vertex) {
  NeighborSet out;
  if (vertex.kind == VertexKind::junction) {
    const Junction& j = graph.junction(vertex.id);
    for (std::size_t k = 0; k < 3; ++k) {
      if (k == 0 || j.triplet[k] != j.triplet[k - 1]) out.grains.push_back(j.triplet[k]);
    }
    out.junctions = j.links;
    std::sort(out.junctions.begin(), out.junctions.end());
  } else {
    out.junctions = graph.grain(vertex.id).ring;
  }
  return out;
}

}  // namespace graingraph
