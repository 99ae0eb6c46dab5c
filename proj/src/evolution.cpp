#include "graingraph/evolution.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "graingraph/topology.hpp"

namespace graingraph {

using nlohmann::json;

namespace {

bool contains(const Triplet& t, GrainId g) { return std::find(t.begin(), t.end(), g) != t.end(); }

FeatureSet layer_features(const GrainGraph& g) { return normalize_features(g, FeatureOptions{.clamp_height = true}); }

void check_prediction(const GrainGraph& graph, const Prediction& p) {
  const DeltaF& d = p.delta;
  auto fail = [](const std::string& what) { throw Error(ErrorKind::contract, "predictor output: " + what); };
  if (d.junction_ids.size() != graph.junction_count() || d.dx.size() != d.junction_ids.size() ||
      d.dy.size() != d.junction_ids.size()) {
    fail("junction rows do not match the graph");
  }
  if (d.grain_ids.size() != graph.grain_count() || d.ds.size() != d.grain_ids.size() ||
      d.v.size() != d.grain_ids.size()) {
    fail("grain rows do not match the graph");
  }
  std::size_t k = 0;
  for (const auto& [id, j] : graph.junctions()) {
    if (d.junction_ids[k] != id) fail(fmt::format("junction row {} is {}, expected {}", k, d.junction_ids[k], id));
    if (!(std::abs(d.dx[k]) <= 1.0) || !(std::abs(d.dy[k]) <= 1.0)) {
      fail(fmt::format("displacement of junction {} outside [-1, 1]", id));
    }
    ++k;
  }
  k = 0;
  for (const auto& [id, g] : graph.grains()) {
    if (d.grain_ids[k] != id) fail(fmt::format("grain row {} is {}, expected {}", k, d.grain_ids[k], id));
    if (!(std::abs(d.ds[k]) <= 1.0)) fail(fmt::format("ds of grain {} outside [-1, 1]", id));
    if (!(d.v[k] >= 0.0) || !std::isfinite(d.v[k])) fail(fmt::format("v of grain {} is negative or not finite", id));
    ++k;
  }
  if (p.edges.edges != graph.edges() || p.edges.p.size() != p.edges.edges.size()) fail("edge list does not match the graph");
  for (std::size_t e = 0; e < p.edges.p.size(); ++e) {
    if (!(p.edges.p[e] >= 0.0 && p.edges.p[e] <= 1.0)) {
      fail(fmt::format("probability of edge ({}, {}) outside [0, 1]", p.edges.edges[e].first, p.edges.edges[e].second));
    }
  }
}

using GrainPair = std::pair<GrainId, GrainId>;

std::optional<GrainPair> separated(const GrainGraph& g, JunctionId a, JunctionId b) {
  const Triplet& ta = g.junction(a).triplet;
  const Triplet& tb = g.junction(b).triplet;
  std::vector<GrainId> shared;
  for (GrainId x : ta) {
    if (contains(tb, x) && (shared.empty() || shared.back() != x)) shared.push_back(x);
  }
  if (shared.size() != 2) return std::nullopt;
  return GrainPair{shared[0], shared[1]};
}

/// True when flipping (a, b) would give the two gaining grains a second common boundary. Contact
/// through a three-sided losing grain does not count: the sweep removes that grain and merges the
/// two boundaries.
bool pinches(const GrainGraph& g, JunctionId a, JunctionId b, const GrainPair& losers) {
  auto third = [&](JunctionId j) {
    for (GrainId x : g.junction(j).triplet) {
      if (x != losers.first && x != losers.second) return x;
    }
    return GrainId{0};
  };
  const GrainId g1 = third(a);
  const GrainId g2 = third(b);
  if (g1 == 0 || g2 == 0 || g1 == g2) return true;
  std::vector<JunctionId> shared;
  for (JunctionId j : g.grain(g1).ring) {
    if (contains(g.junction(j).triplet, g2)) shared.push_back(j);
  }
  if (shared.empty()) return false;
  if (shared.size() != 2) return true;
  for (GrainId loser : {losers.first, losers.second}) {
    if (g.grain(loser).ring.size() != 3) continue;
    for (JunctionId j : shared) {
      if (contains(g.junction(j).triplet, loser)) return false;
    }
  }
  return true;
}

/// The current e_jj edge separating `pair`, preferring the originally predicted junctions.
std::optional<std::pair<JunctionId, JunctionId>> locate(const GrainGraph& g, JunctionId a, JunctionId b,
                                                        const GrainPair& pair) {
  if (!g.has_grain(pair.first) || !g.has_grain(pair.second)) return std::nullopt;
  if (g.has_junction(a) && g.has_junction(b) && g.linked(a, b)) {
    auto s = separated(g, a, b);
    if (s && *s == pair) return std::pair{a, b};
  }
  const std::vector<JunctionId> ends = g.boundary_junctions(pair.first, pair.second);
  std::vector<std::pair<JunctionId, JunctionId>> found;
  for (std::size_t x = 0; x < ends.size(); ++x) {
    for (std::size_t y = x + 1; y < ends.size(); ++y) {
      if (g.linked(ends[x], ends[y])) found.emplace_back(ends[x], ends[y]);
    }
  }
  if (found.size() != 1) return std::nullopt;
  return found.front();
}

EventRecord flip_record(int step, const EdgeFlip& f, GrainId cascade, double key) {
  return {step, EventKind::flip, {f.j1, f.j2, f.new_j1, f.new_j2}, {f.g1, f.g2, f.g3, f.g4}, cascade, key};
}

EventRecord removal_record(int step, EventKind kind, const GrainRemoval& r, GrainId cascade, double key) {
  return {step, kind, {r.removed[0], r.removed[1], r.bridge[0], r.bridge[1]}, {r.grain}, cascade, key};
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

// ---------------------------------------------------------------------------
// Predictors

Prediction IdentityPredictor::predict(const GrainGraph& graph, const FeatureSet& fs) const {
  Prediction p;
  p.delta.junction_ids = fs.junction_ids;
  p.delta.dx.assign(fs.junction_ids.size(), 0.0);
  p.delta.dy.assign(fs.junction_ids.size(), 0.0);
  p.delta.grain_ids = fs.grain_ids;
  p.delta.ds.assign(fs.grain_ids.size(), 0.0);
  for (const GrainRow& row : fs.grain) p.delta.v.push_back(row[gv]);
  p.edges.edges = graph.edges();
  p.edges.p.assign(p.edges.edges.size(), 0.0);
  return p;
}

Prediction baseline_predict(const GrainGraph& graph, const FeatureSet& fs, const BaselineParams& params) {
  const DomainSpec& d = graph.domain();
  Prediction p;
  DeltaF& delta = p.delta;
  for (const auto& [id, j] : graph.junctions()) {
    Vec2 acc{};
    for (JunctionId l : j.links) acc = acc + min_image(graph.junction(l).pos - j.pos);
    const double inv = j.links.empty() ? 0.0 : 1.0 / static_cast<double>(j.links.size());
    delta.junction_ids.push_back(id);
    delta.dx.push_back(std::clamp(params.kappa * acc.x * inv * d.lx / d.ref_lx, -1.0, 1.0));
    delta.dy.push_back(std::clamp(params.kappa * acc.y * inv * d.ly / d.ref_ly, -1.0, 1.0));
  }
  double mean_cos = 0.0;
  for (const GrainRow& row : fs.grain) mean_cos += row[gcz];
  if (!fs.grain.empty()) mean_cos /= static_cast<double>(fs.grain.size());
  std::size_t k = 0;
  for (const auto& [id, g] : graph.grains()) {
    const GrainRow& row = fs.grain[k++];
    const double s = row[gs];
    const double sides = static_cast<double>(g.ring.size());
    const double ds = params.c1 * (sides - 6.0) * s + params.c2 * (row[gcz] - mean_cos) * s;
    delta.grain_ids.push_back(id);
    delta.ds.push_back(std::clamp(ds, -1.0, 1.0));
    delta.v.push_back(s * row[gdz] / 2.0);
  }
  double mean_len = 0.0;
  for (const EdgeFeature& e : fs.jj_edges) mean_len += e.length;
  if (!fs.jj_edges.empty()) mean_len /= static_cast<double>(fs.jj_edges.size());
  for (const EdgeFeature& e : fs.jj_edges) {
    p.edges.edges.emplace_back(e.a, e.b);
    p.edges.p.push_back(mean_len > 0.0 ? sigmoid(params.c3 * (mean_len - e.length) / mean_len) : 0.5);
  }
  return p;
}

GnnPredictor::GnnPredictor(WeightBundle regressor, WeightBundle classifier)
    : regressor_(std::move(regressor)), classifier_(std::move(classifier)) {
  if (regressor_.tag != ModelTag::regressor || classifier_.tag != ModelTag::classifier) {
    throw Error(ErrorKind::config, "gnn predictor needs a regressor and a classifier bundle");
  }
  regressor_.check();
  classifier_.check();
}

Prediction GnnPredictor::predict(const GrainGraph& graph, const FeatureSet& normalized) const {
  const GraphTensors t = build_tensors(graph, normalized);
  return {regress(t, regressor_), classify(t, classifier_)};
}

void Thresholds::check() const {
  if (!(eps_e > 0.0 && eps_e < 1.0)) throw Error(ErrorKind::config, fmt::format("eps_e = {} is not in (0, 1)", eps_e));
  if (!(eps_g > 0.0)) throw Error(ErrorKind::config, fmt::format("eps_g = {} is not positive", eps_g));
}

// ---------------------------------------------------------------------------
// Event log

const char* to_string(EventKind kind) noexcept {
  switch (kind) {
    case EventKind::flip:
      return "flip";
    case EventKind::remove:
      return "remove";
    case EventKind::sweep:
      return "sweep";
  }
  return "unknown";
}

std::string event_json(const EventRecord& e) {
  json j;
  j["step"] = e.step;
  j["kind"] = to_string(e.kind);
  j["ids"] = e.ids;
  j["grains"] = e.grains;
  j["cascade"] = e.cascade;
  j["key"] = e.key;
  return j.dump();
}

EventRecord parse_event(std::string_view line) {
  try {
    const json j = json::parse(line);
    EventRecord e;
    e.step = j.at("step").get<int>();
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "flip") {
      e.kind = EventKind::flip;
    } else if (kind == "remove") {
      e.kind = EventKind::remove;
    } else if (kind == "sweep") {
      e.kind = EventKind::sweep;
    } else {
      throw Error(ErrorKind::format, fmt::format("unknown event kind '{}'", kind));
    }
    e.ids = j.at("ids").get<std::vector<std::uint32_t>>();
    e.grains = j.at("grains").get<std::vector<GrainId>>();
    e.cascade = j.value("cascade", GrainId{0});
    e.key = j.value("key", 0.0);
    const std::size_t want_ids = 4;
    const std::size_t want_grains = e.kind == EventKind::flip ? 4 : 1;
    if (e.ids.size() != want_ids || e.grains.size() != want_grains) {
      throw Error(ErrorKind::format, fmt::format("{} event needs {} ids and {} grains", kind, want_ids, want_grains));
    }
    return e;
  } catch (const json::exception& ex) {
    throw Error(ErrorKind::format, fmt::format("malformed event record: {}", ex.what()));
  }
}

std::string events_jsonl(const std::vector<EventRecord>& events) {
  std::string out;
  for (const EventRecord& e : events) {
    out += event_json(e);
    out += '\n';
  }
  return out;
}

std::vector<EventRecord> parse_events_jsonl(std::string_view text) {
  std::vector<EventRecord> out;
  std::size_t at = 0;
  while (at < text.size()) {
    std::size_t end = text.find('\n', at);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(at, end - at);
    if (!line.empty()) out.push_back(parse_event(line));
    at = end + 1;
  }
  return out;
}

void replay_events(GrainGraph& graph, const std::vector<EventRecord>& events) {
  for (const EventRecord& e : events) {
    if (e.kind == EventKind::flip) {
      const EdgeFlip f = flip_allowing_two_sided(graph, e.ids[0], e.ids[1]);
      if (f.new_j1 != e.ids[2] || f.new_j2 != e.ids[3]) {
        throw Error(ErrorKind::format, fmt::format("replay diverged at flip ({}, {}): new junctions {}, {} instead of {}, {}",
                                                   e.ids[0], e.ids[1], f.new_j1, f.new_j2, e.ids[2], e.ids[3]));
      }
    } else {
      remove_grain(graph, e.grains[0]);
    }
  }
  graph.refresh_centroids();
}

// ---------------------------------------------------------------------------
// Update

GrainGraph advance_features(const GrainGraph& graph, const Prediction& prediction, double dz) {
  check_prediction(graph, prediction);
  const DomainSpec& d = graph.domain();
  const double to_fraction = d.ref_area() / d.area();
  const double v_to_fraction = d.ref_area() * d.ref_lz / (d.area() * d.lz);
  GrainGraph out = graph;
  const DeltaF& delta = prediction.delta;
  for (std::size_t k = 0; k < delta.junction_ids.size(); ++k) {
    Junction& j = out.junction(delta.junction_ids[k]);
    const Vec2 step{delta.dx[k] * d.ref_lx / d.lx, delta.dy[k] * d.ref_ly / d.ly};
    j.pos = wrap_unit(j.pos + step);
    j.delta = step;
  }
  for (std::size_t k = 0; k < delta.grain_ids.size(); ++k) {
    Grain& g = out.grain(delta.grain_ids[k]);
    const double area = std::max(0.0, g.area + delta.ds[k] * to_fraction);
    g.delta_area = area - g.area;
    g.area = area;
    g.excess_volume = delta.v[k] * v_to_fraction;
  }
  out.set_layer(graph.z() + dz, dz);
  out.refresh_centroids();
  return out;
}

UpdateResult update_graph(const GrainGraph& graph, const Predictor& predictor, const Thresholds& thresholds, double dz,
                          int step) {
  thresholds.check();
  if (graph.grain_count() < 3) {
    throw Error(ErrorKind::degenerate, fmt::format("graph has {} grains; an update needs at least 3", graph.grain_count()));
  }
  const Prediction pred = predictor.predict(graph, layer_features(graph));
  UpdateResult r;
  r.graph = advance_features(graph, pred, dz);
  GrainGraph& g = r.graph;
  const DomainSpec& dom = graph.domain();

  // edge events, keyed by the grain pair they separate
  struct EdgeEvent {
    JunctionId a, b;
    double p;
  };
  std::map<GrainPair, EdgeEvent> edge_events;
  for (std::size_t e = 0; e < pred.edges.p.size(); ++e) {
    if (!(pred.edges.p[e] > thresholds.eps_e)) continue;
    const auto [a, b] = pred.edges.edges[e];
    const auto pair = separated(g, a, b);
    if (!pair) continue;
    auto [it, inserted] = edge_events.try_emplace(*pair, EdgeEvent{a, b, pred.edges.p[e]});
    if (!inserted && pred.edges.p[e] > it->second.p) it->second = {a, b, pred.edges.p[e]};
  }
  r.stats.edge_events = edge_events.size();

  // grain events, ascending by updated normalized area
  std::map<GrainId, double> ds;
  std::map<GrainId, double> s_new;
  std::vector<std::pair<double, GrainId>> grain_events;
  {
    std::size_t k = 0;
    const double to_norm = dom.area() / dom.ref_area();
    for (const auto& [id, gr] : graph.grains()) {
      ds[id] = pred.delta.ds[k];
      const double s = gr.area * to_norm + pred.delta.ds[k];
      s_new[id] = s;
      if (s < thresholds.eps_g) grain_events.emplace_back(s, id);
      ++k;
    }
  }
  std::sort(grain_events.begin(), grain_events.end());
  r.stats.grain_events = grain_events.size();

  auto collapse_check = [&](GrainId last) {
    if (g.grain_count() < 3) {
      throw CollapseError(fmt::format("step {}: removing grain {} left {} grains", step, last, g.grain_count()), r.events);
    }
  };
  const NeighborRank rank = [&](GrainId n) {
    auto it = ds.find(n);
    return it == ds.end() ? 0.0 : it->second;
  };
  for (const auto& [s, id] : grain_events) {
    if (!g.has_grain(id)) continue;
    if (g.grain_count() <= 3) {
      throw CollapseError(fmt::format("step {}: eliminating grain {} would leave fewer than 3 grains", step, id),
                          r.events);
    }
    std::vector<Elimination> done;
    std::vector<CascadeStep> realized;
    try {
      eliminate_grain(g, id, rank, done, &realized);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::topology) throw;
      throw CollapseError(
          fmt::format("step {}: cascade of grain {} failed with {} grains left: {}", step, id, g.grain_count(), e.what()),
          r.events);
    }
    for (const CascadeStep& c : realized) {
      if (c.flip) {
        r.events.push_back(flip_record(step, *c.flip, c.grain, rank(c.neighbor)));
        edge_events.erase({c.flip->g3, c.flip->g4});
        ++r.stats.cascade_flips;
      } else {
        r.events.push_back(removal_record(step, EventKind::remove, *c.removal, c.grain, s_new[c.grain]));
        if (c.grain != id) ++r.stats.eager_eliminations;
      }
    }
    collapse_check(id);
  }

  std::vector<std::pair<GrainPair, EdgeEvent>> ordered(edge_events.begin(), edge_events.end());
  std::stable_sort(ordered.begin(), ordered.end(), [](const auto& x, const auto& y) { return x.second.p > y.second.p; });
  for (const auto& [pair, ev] : ordered) {
    const auto edge = locate(g, ev.a, ev.b, pair);
    if (!edge || pinches(g, edge->first, edge->second, pair)) {
      ++r.stats.skipped_edge_events;
      continue;
    }
    try {
      const EdgeFlip f = flip_allowing_two_sided(g, edge->first, edge->second);
      r.events.push_back(flip_record(step, f, 0, ev.p));
      ++r.stats.edge_flips;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::topology) throw;
      ++r.stats.skipped_edge_events;
    }
  }

  for (;;) {
    std::vector<GrainId> two_sided;
    for (const auto& [id, gr] : g.grains()) {
      if (gr.ring.size() < 2) {
        throw Error(ErrorKind::degenerate, fmt::format("step {}: grain {} has {} junctions", step, id, gr.ring.size()));
      }
      if (gr.ring.size() == 2) two_sided.push_back(id);
    }
    if (two_sided.empty()) break;
    for (GrainId id : two_sided) {
      if (!g.has_grain(id) || g.grain(id).ring.size() != 2) continue;
      if (g.grain_count() <= 3) {
        throw CollapseError(fmt::format("step {}: sweeping grain {} would leave fewer than 3 grains", step, id), r.events);
      }
      GrainRemoval removal;
      try {
        removal = remove_grain(g, id);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::topology) throw;
        throw CollapseError(
            fmt::format("step {}: sweep of grain {} failed with {} grains left: {}", step, id, g.grain_count(), e.what()),
            r.events);
      }
      r.events.push_back(removal_record(step, EventKind::sweep, removal, 0, 0.0));
      ++r.stats.swept;
    }
  }

  g.refresh_centroids();
  const ValidationReport report = validate(g);
  if (!report.ok()) {
    throw Error(ErrorKind::topology, fmt::format("step {}: updated graph is invalid: {}", step, report.summary()));
  }
  return r;
}

// ---------------------------------------------------------------------------
// Rollout

FeatureSet Trajectory::features(std::size_t layer) const { return layer_features(layers.at(layer)); }

Trajectory rollout(const GrainGraph& g0, const Predictor& predictor, const RolloutOptions& options) {
  if (options.n_l < 2) throw Error(ErrorKind::config, fmt::format("n_l = {} but a rollout needs at least 2 layers", options.n_l));
  if (!(options.dz > 0.0)) throw Error(ErrorKind::config, fmt::format("dz = {} is not positive", options.dz));
  options.thresholds.check();
  Trajectory t;
  t.dz = options.dz;
  t.layers.push_back(g0);
  for (int l = 1; l < options.n_l; ++l) {
    try {
      UpdateResult r = update_graph(t.layers.back(), predictor, options.thresholds, options.dz, l);
      t.layers.push_back(std::move(r.graph));
      t.events.push_back(std::move(r.events));
      t.stats.push_back(r.stats);
    } catch (const CollapseError& e) {
      t.events.push_back(e.partial_log());
      t.failure = Error(e.kind(), e.what());
      break;
    } catch (const Error& e) {
      t.failure = e;
      break;
    }
  }
  return t;
}

}  // namespace graingraph
