#include "graingraph/topology.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include <fmt/format.h>
#include <json.hpp>

#include "graingraph/error.hpp"
#include "graingraph/graph_io.hpp"

namespace graingraph {

using nlohmann::json;

namespace {

void refresh_centroid(GrainGraph& graph, GrainId g) {
  if (!graph.has_grain(g)) return;
  Grain& grain = graph.grain(g);
  if (!grain.ring.empty()) grain.centroid = graph.ring_mean(g);
}

bool contains(const Triplet& t, GrainId g) { return std::find(t.begin(), t.end(), g) != t.end(); }

EdgeFlip flip_edge(GrainGraph& graph, JunctionId j1, JunctionId j2, const std::set<GrainId>& eliminating,
                   bool any_two_sided = false) {
  if (j1 == j2 || !graph.has_junction(j1) || !graph.has_junction(j2) || !graph.linked(j1, j2)) {
    throw Error(ErrorKind::input, fmt::format("junctions {} and {} do not form an edge", j1, j2));
  }
  const Junction& a = graph.junction(j1);
  const Junction& b = graph.junction(j2);
  if (std::count(a.links.begin(), a.links.end(), j2) != 1) {
    throw Error(ErrorKind::topology, fmt::format("edge ({}, {}) is a parallel edge", j1, j2));
  }
  if (shared_count(a.triplet, b.triplet) != 2) {
    throw Error(ErrorKind::topology, fmt::format("junctions {} and {} do not share exactly two grains", j1, j2));
  }
  EdgeFlip f;
  f.j1 = j1;
  f.j2 = j2;
  std::vector<GrainId> shared;
  for (GrainId g : a.triplet) {
    if (contains(b.triplet, g)) {
      shared.push_back(g);
    } else {
      f.g1 = g;
    }
  }
  for (GrainId g : b.triplet) {
    if (!contains(a.triplet, g)) f.g2 = g;
  }
  f.g3 = shared[0];
  f.g4 = shared[1];
  if (f.g1 == f.g2) {
    throw Error(ErrorKind::topology, fmt::format("flip of ({}, {}) would repeat grain {}", j1, j2, f.g1));
  }
  for (GrainId lose : {f.g3, f.g4}) {
    const std::size_t sides = graph.grain(lose).ring.size();
    if (sides <= 2 || (sides == 3 && !any_two_sided && !eliminating.count(lose))) {
      throw Error(ErrorKind::topology,
                  fmt::format("flip of ({}, {}) would leave grain {} with {} junctions", j1, j2, lose, sides - 1));
    }
  }

  std::vector<JunctionId> outer;
  bool skipped = false;
  for (JunctionId o : a.links) {
    if (o == j2 && !skipped) {
      skipped = true;
      continue;
    }
    outer.push_back(o);
  }
  skipped = false;
  for (JunctionId o : b.links) {
    if (o == j1 && !skipped) {
      skipped = true;
      continue;
    }
    outer.push_back(o);
  }
  const Vec2 mid = wrap_unit(a.pos + 0.5 * min_image(b.pos - a.pos));

  graph.erase_junction(j1);
  graph.erase_junction(j2);
  f.new_j1 = graph.add_junction(mid, make_triplet(f.g1, f.g2, f.g3));
  f.new_j2 = graph.add_junction(mid, make_triplet(f.g1, f.g2, f.g4));
  const Triplet t1 = graph.junction(f.new_j1).triplet;
  const Triplet t2 = graph.junction(f.new_j2).triplet;
  int load1 = 0;
  int load2 = 0;
  for (JunctionId o : outer) {
    const Triplet& t = graph.junction(o).triplet;
    const int s1 = shared_count(t, t1);
    const int s2 = shared_count(t, t2);
    const bool first = s1 != s2 ? s1 > s2 : load1 <= load2;
    graph.link(first ? f.new_j1 : f.new_j2, o);
    ++(first ? load1 : load2);
  }
  graph.link(f.new_j1, f.new_j2);
  for (GrainId g : {f.g1, f.g2, f.g3, f.g4}) refresh_centroid(graph, g);
  return f;
}

}  // namespace

EdgeFlip apply_edge_flip(GrainGraph& graph, JunctionId j1, JunctionId j2, std::optional<GrainId> eliminating) {
  std::set<GrainId> allowed;
  if (eliminating) allowed.insert(*eliminating);
  return flip_edge(graph, j1, j2, allowed);
}

EdgeFlip flip_allowing_two_sided(GrainGraph& graph, JunctionId j1, JunctionId j2) {
  return flip_edge(graph, j1, j2, {}, true);
}

GrainRemoval remove_grain(GrainGraph& graph, GrainId g) {
  const Grain& grain = graph.grain(g);
  if (grain.ring.size() != 2) {
    throw Error(ErrorKind::topology,
                fmt::format("grain {} has {} junctions; removal needs exactly 2", g, grain.ring.size()));
  }
  GrainRemoval r;
  r.grain = g;
  r.removed[0] = grain.ring[0];
  r.removed[1] = grain.ring[1];
  for (int k = 0; k < 2; ++k) {
    const JunctionId self = r.removed[k];
    const JunctionId other = r.removed[1 - k];
    std::vector<JunctionId> outer;
    for (JunctionId o : graph.junction(self).links) {
      if (o != other) outer.push_back(o);
    }
    if (outer.size() != 1) {
      throw Error(ErrorKind::topology, fmt::format("junction {} of two-sided grain {} has {} outer links", self, g,
                                                   outer.size()));
    }
    r.bridge[k] = outer[0];
  }
  if (r.bridge[0] == r.bridge[1] || r.bridge[0] == r.removed[1] || r.bridge[1] == r.removed[0]) {
    throw Error(ErrorKind::degenerate, fmt::format("removing grain {} would close a loop on junction {}", g, r.bridge[0]));
  }
  std::set<GrainId> touched;
  for (JunctionId j : r.removed) {
    for (GrainId t : graph.junction(j).triplet) {
      if (t != g) touched.insert(t);
    }
  }
  graph.erase_junction(r.removed[0]);
  graph.erase_junction(r.removed[1]);
  graph.link(r.bridge[0], r.bridge[1]);
  graph.erase_grain(g);
  for (GrainId t : touched) refresh_centroid(graph, t);
  return r;
}

namespace {

void eliminate(GrainGraph& graph, GrainId g, const NeighborRank& rank, std::set<GrainId>& active,
               std::vector<Elimination>& out, std::vector<CascadeStep>* realized) {
  active.insert(g);
  Elimination e;
  e.grain = g;
  while (graph.grain(g).ring.size() > 2) {
    const std::vector<BoundaryEdge> spokes = spoke_edges(graph, g);
    if (spokes.empty()) {
      throw Error(ErrorKind::topology, fmt::format("grain {} has no boundary edge to flip", g));
    }
    const BoundaryEdge* pick = &spokes.front();
    double key = rank(pick->neighbor);
    for (const BoundaryEdge& s : spokes) {
      const double k = rank(s.neighbor);
      if (k < key || (k == key && s.neighbor < pick->neighbor)) {
        pick = &s;
        key = k;
      }
    }
    const GrainId n = pick->neighbor;
    if (graph.grain(n).ring.size() <= 3 && !active.count(n)) {
      eliminate(graph, n, rank, active, out, realized);
      continue;
    }
    e.flips.push_back(flip_edge(graph, pick->a, pick->b, active));
    if (realized) realized->push_back({g, n, e.flips.back(), std::nullopt});
  }
  if (graph.grain(g).ring.size() < 2) {
    throw Error(ErrorKind::degenerate, fmt::format("grain {} collapsed to {} junctions during elimination", g,
                                                   graph.grain(g).ring.size()));
  }
  e.removal = remove_grain(graph, g);
  if (realized) realized->push_back({g, 0, std::nullopt, e.removal});
  active.erase(g);
  out.push_back(std::move(e));
}

}  // namespace

void eliminate_grain(GrainGraph& graph, GrainId g, const NeighborRank& rank, std::vector<Elimination>& out,
                     std::vector<CascadeStep>* realized) {
  std::set<GrainId> active;
  eliminate(graph, g, rank, active, out, realized);
}

std::vector<BoundaryEdge> spoke_edges(const GrainGraph& graph, GrainId g) {
  const Grain& grain = graph.grain(g);
  std::vector<BoundaryEdge> out;
  for (JunctionId a : grain.ring) {
    const Junction& ja = graph.junction(a);
    for (JunctionId b : ja.links) {
      if (b <= a || !std::binary_search(grain.ring.begin(), grain.ring.end(), b)) continue;
      if (std::any_of(out.begin(), out.end(), [&](const BoundaryEdge& e) { return e.a == a && e.b == b; })) continue;
      const Junction& jb = graph.junction(b);
      GrainId nb = 0;
      for (GrainId t : ja.triplet) {
        if (t != g && contains(jb.triplet, t)) nb = t;
      }
      out.push_back({a, b, nb});
    }
  }
  std::sort(out.begin(), out.end(), [](const BoundaryEdge& x, const BoundaryEdge& y) {
    return std::pair(x.a, x.b) < std::pair(y.a, y.b);
  });
  return out;
}

double MatchResult::masked_fraction() const {
  if (junction_mask.empty()) return 0.0;
  return static_cast<double>(std::count(junction_mask.begin(), junction_mask.end(), 1)) / junction_mask.size();
}

MatchResult match_graphs(const GrainGraph& prev, const GrainGraph& next) {
  MatchResult m;
  for (const auto& [id, g] : prev.grains()) {
    if (next.has_grain(id)) {
      m.grains.push_back(id);
    } else {
      m.eliminated.push_back(id);
    }
  }
  if (m.grains.empty() && prev.grain_count() > 0 && next.grain_count() > 0) {
    throw Error(ErrorKind::input, "graphs share no grain id; they are not consecutive layers of one run");
  }

  // triplets that occur more than once cannot identify a junction
  auto index = [](const GrainGraph& g) {
    std::map<Triplet, JunctionId> out;
    std::set<Triplet> repeated;
    for (const auto& [id, j] : g.junctions()) {
      if (!out.emplace(j.triplet, id).second) repeated.insert(j.triplet);
    }
    for (const Triplet& t : repeated) out.erase(t);
    return out;
  };
  const auto prev_index = index(prev);
  const auto next_index = index(next);

  std::map<JunctionId, JunctionId> successor;
  std::set<JunctionId> unmatched;
  for (const auto& [id, j] : prev.junctions()) {
    auto pi = prev_index.find(j.triplet);
    auto ni = next_index.find(j.triplet);
    if (pi != prev_index.end() && ni != next_index.end()) {
      successor[id] = ni->second;
      m.junctions.emplace_back(id, ni->second);
    } else {
      unmatched.insert(id);
    }
  }

  const auto edges = prev.edges();
  std::map<JunctionId, int> event_count;
  std::vector<std::pair<std::pair<JunctionId, JunctionId>, std::pair<JunctionId, JunctionId>>> candidates;
  for (const auto& [a, b] : edges) {
    if (!unmatched.count(a) || !unmatched.count(b)) continue;
    const Triplet& ta = prev.junction(a).triplet;
    const Triplet& tb = prev.junction(b).triplet;
    if (shared_count(ta, tb) != 2) continue;
    GrainId g1 = 0, g2 = 0;
    std::vector<GrainId> shared;
    for (GrainId g : ta) {
      if (contains(tb, g)) {
        shared.push_back(g);
      } else {
        g1 = g;
      }
    }
    for (GrainId g : tb) {
      if (!contains(ta, g)) g2 = g;
    }
    if (g1 == g2) continue;
    auto s1 = next_index.find(make_triplet(g1, g2, shared[0]));
    auto s2 = next_index.find(make_triplet(g1, g2, shared[1]));
    if (s1 == next_index.end() || s2 == next_index.end()) continue;
    candidates.push_back({{a, b}, {s1->second, s2->second}});
    ++event_count[a];
    ++event_count[b];
  }
  for (const auto& [edge, succ] : candidates) {
    const auto [a, b] = edge;
    if (event_count[a] > 1 || event_count[b] > 1) continue;
    m.edge_events.push_back(edge);
    const Vec2 pa = prev.junction(a).pos;
    const Vec2 pb = prev.junction(b).pos;
    const Vec2 p1 = next.junction(succ.first).pos;
    const Vec2 p2 = next.junction(succ.second).pos;
    auto dist = [&](Vec2 x, Vec2 y) { return prev.physical_distance(x, y); };
    const bool straight = dist(pa, p1) + dist(pb, p2) <= dist(pa, p2) + dist(pb, p1);
    successor[a] = straight ? succ.first : succ.second;
    successor[b] = straight ? succ.second : succ.first;
  }

  const DomainSpec& d = prev.domain();
  const double sx = d.lx / d.ref_lx;
  const double sy = d.ly / d.ref_ly;
  const double sa = d.area() / d.ref_area();
  const double sv = d.area() * d.lz / (d.ref_area() * d.ref_lz);
  DeltaF& delta = m.delta;
  for (const auto& [id, j] : prev.junctions()) {
    delta.junction_ids.push_back(id);
    auto s = successor.find(id);
    if (s == successor.end()) {
      delta.dx.push_back(0.0);
      delta.dy.push_back(0.0);
      m.junction_mask.push_back(1);
      continue;
    }
    const Vec2 dp = min_image(next.junction(s->second).pos - j.pos);
    delta.dx.push_back(dp.x * sx);
    delta.dy.push_back(dp.y * sy);
    m.junction_mask.push_back(0);
  }
  for (const auto& [id, g] : prev.grains()) {
    delta.grain_ids.push_back(id);
    if (next.has_grain(id)) {
      const Grain& n = next.grain(id);
      delta.ds.push_back((n.area - g.area) * sa);
      delta.v.push_back(n.excess_volume * sv);
    } else {
      delta.ds.push_back(-g.area * sa);
      delta.v.push_back(0.0);
    }
  }

  std::set<std::pair<JunctionId, JunctionId>> events(m.edge_events.begin(), m.edge_events.end());
  m.edges = edges;
  for (const auto& e : edges) {
    m.edge_label.push_back(events.count(e) ? 1 : 0);
    const std::size_t ra = static_cast<std::size_t>(
        std::lower_bound(delta.junction_ids.begin(), delta.junction_ids.end(), e.first) - delta.junction_ids.begin());
    const std::size_t rb = static_cast<std::size_t>(
        std::lower_bound(delta.junction_ids.begin(), delta.junction_ids.end(), e.second) - delta.junction_ids.begin());
    m.edge_mask.push_back(m.junction_mask[ra] || m.junction_mask[rb] ? 1 : 0);
  }
  return m;
}

std::string training_record(const GrainGraph& prev, const GrainGraph& next, const MatchResult& match) {
  json rec;
  rec["prev"] = json::parse(serialize_graph(prev));
  rec["next"] = json::parse(serialize_graph(next));
  const DeltaF& d = match.delta;
  rec["delta"] = {{"junction_ids", d.junction_ids}, {"dx", d.dx}, {"dy", d.dy},
                  {"grain_ids", d.grain_ids},       {"ds", d.ds}, {"v", d.v}};
  rec["edge_events"] = match.edge_events;
  rec["eliminated"] = match.eliminated;
  rec["junction_mask"] = match.junction_mask;
  rec["edges"] = match.edges;
  rec["edge_label"] = match.edge_label;
  rec["edge_mask"] = match.edge_mask;
  return rec.dump();
}

LayerPlan delta_z_policy(double g_z, double r_z, const std::vector<EliminationSample>& table, const DomainSpec& d,
                         double l_z) {
  if (table.empty()) throw Error(ErrorKind::config, "elimination table is empty");
  if (!(l_z > 0.0)) throw Error(ErrorKind::config, fmt::format("domain height {} must be positive", l_z));
  const EliminationSample* best = nullptr;
  double best_d = std::numeric_limits<double>::infinity();
  for (const EliminationSample& s : table) {
    const double dg = (s.g_z - g_z) / d.g_max;
    const double dr = (s.r_z - r_z) / d.r_max;
    const double dist = dg * dg + dr * dr;
    if (dist < best_d) {
      best_d = dist;
      best = &s;
    }
  }
  if (!(best->fraction >= 0.0 && best->fraction <= 1.0)) {
    throw Error(ErrorKind::config, fmt::format("elimination fraction {} outside [0, 1]", best->fraction));
  }
  LayerPlan plan;
  plan.n_l = std::max(2, static_cast<int>(std::lround(best->fraction / kEliminationPerUpdate)));
  plan.dz = l_z / (plan.n_l - 1);
  return plan;
}

std::vector<EliminationSample> parse_elimination_table(std::string_view text) {
  std::vector<EliminationSample> out;
  try {
    const json doc = json::parse(text);
    if (!doc.is_array()) throw Error(ErrorKind::format, "elimination table must be a JSON array");
    for (const json& e : doc) {
      out.push_back({e.at("g_z").get<double>(), e.at("r_z").get<double>(), e.at("fraction").get<double>()});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::format, fmt::format("elimination table: {}", e.what()));
  }
  return out;
}

}  // namespace graingraph
