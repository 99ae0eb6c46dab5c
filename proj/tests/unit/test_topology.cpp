#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include <json.hpp>

#include "graingraph/error.hpp"
#include "graingraph/topology.hpp"
#include "oracles/fixtures.hpp"

using namespace graingraph;

namespace {

bool flippable(const GrainGraph& g, JunctionId a, JunctionId b) {
  const Triplet& ta = g.junction(a).triplet;
  const Triplet& tb = g.junction(b).triplet;
  for (GrainId x : ta) {
    if (std::find(tb.begin(), tb.end(), x) != tb.end() && g.grain(x).ring.size() <= 3) return false;
  }
  return true;
}

std::pair<JunctionId, JunctionId> first_flippable(const GrainGraph& g) {
  for (const auto& [a, b] : g.edges()) {
    if (flippable(g, a, b)) return {a, b};
  }
  FAIL("no flippable edge");
  return {};
}

auto by_id = [](GrainId n) { return static_cast<double>(n); };

}  // namespace

TEST_CASE("flipping an edge preserves counts and validity") {
  GrainGraph g = fixture::uniform_voronoi(40, 1).graph;
  const std::size_t nj = g.junction_count();
  const std::size_t ne = g.edge_count();
  const std::size_t njg = g.jg_edge_count();
  const auto [a, b] = first_flippable(g);
  const Triplet ta = g.junction(a).triplet;
  const Triplet tb = g.junction(b).triplet;
  const EdgeFlip f = apply_edge_flip(g, a, b);
  CHECK(g.junction_count() == nj);
  CHECK(g.edge_count() == ne);
  CHECK(g.jg_edge_count() == njg);
  CHECK(validate(g).ok());
  CHECK_FALSE(g.has_junction(a));
  CHECK_FALSE(g.has_junction(b));
  CHECK(g.junction(f.new_j1).triplet == make_triplet(f.g1, f.g2, f.g3));
  CHECK(g.junction(f.new_j2).triplet == make_triplet(f.g1, f.g2, f.g4));
  CHECK(g.linked(f.new_j1, f.new_j2));
  CHECK(g.junction(f.new_j1).delta == Vec2{});
  CHECK(g.junction(f.new_j1).pos == g.junction(f.new_j2).pos);
  CHECK(shared_count(ta, tb) == 2);
}

TEST_CASE("flip rewires junction-grain edges as in the quadruple-junction picture") {
  GrainGraph g = fixture::uniform_voronoi(40, 2).graph;
  const auto [a, b] = first_flippable(g);
  std::map<GrainId, std::size_t> before;
  for (const auto& [id, gr] : g.grains()) before[id] = gr.ring.size();
  const EdgeFlip f = apply_edge_flip(g, a, b);
  // (j1', g2) and (j2', g1) present; j1' and j2' are the only new vertices
  const Triplet& t1 = g.junction(f.new_j1).triplet;
  const Triplet& t2 = g.junction(f.new_j2).triplet;
  CHECK(std::count(t1.begin(), t1.end(), f.g2) == 1);
  CHECK(std::count(t2.begin(), t2.end(), f.g1) == 1);
  CHECK(std::count(t1.begin(), t1.end(), f.g4) == 0);
  CHECK(std::count(t2.begin(), t2.end(), f.g3) == 0);
  CHECK(g.grain(f.g1).ring.size() == before[f.g1] + 1);
  CHECK(g.grain(f.g2).ring.size() == before[f.g2] + 1);
  CHECK(g.grain(f.g3).ring.size() == before[f.g3] - 1);
  CHECK(g.grain(f.g4).ring.size() == before[f.g4] - 1);
}

TEST_CASE("flip followed by flip of the new edge restores the topology") {
  GrainGraph g = fixture::uniform_voronoi(50, 3).graph;
  const auto original = fixture::edge_triplets(g);
  const auto [a, b] = first_flippable(g);
  const EdgeFlip f = apply_edge_flip(g, a, b);
  REQUIRE(flippable(g, f.new_j1, f.new_j2));
  apply_edge_flip(g, f.new_j1, f.new_j2);
  CHECK(fixture::edge_triplets(g) == original);
  CHECK(validate(g).ok());
}

TEST_CASE("flips are deterministic") {
  GrainGraph g1 = fixture::uniform_voronoi(30, 4).graph;
  GrainGraph g2 = g1;
  const auto [a, b] = first_flippable(g1);
  const EdgeFlip f1 = apply_edge_flip(g1, a, b);
  const EdgeFlip f2 = apply_edge_flip(g2, a, b);
  CHECK(f1.new_j1 == f2.new_j1);
  CHECK(g1.junction(f1.new_j1).pos == g2.junction(f2.new_j1).pos);
  CHECK(g1.junction(f1.new_j1).links == g2.junction(f2.new_j1).links);
}

TEST_CASE("flip preconditions") {
  GrainGraph g = fixture::grain_with_sides(3);
  REQUIRE(g.grain(1).ring.size() == 3);
  const JunctionId j = g.grain(1).ring[0];
  SUBCASE("not an edge") {
    JunctionId far = 0;
    for (const auto& [id, jn] : g.junctions()) {
      if (id != j && !g.linked(j, id)) far = id;
    }
    try {
      apply_edge_flip(g, j, far);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::input);
    }
    CHECK_THROWS_AS(apply_edge_flip(g, j, 99999), Error);
  }
  SUBCASE("a three-sided losing grain is guarded outside its elimination") {
    const auto spokes = spoke_edges(g, 1);
    REQUIRE(spokes.size() == 3);
    try {
      apply_edge_flip(g, spokes[0].a, spokes[0].b);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::topology);
    }
    const EdgeFlip f = apply_edge_flip(g, spokes[0].a, spokes[0].b, GrainId{1});
    CHECK(g.grain(1).ring.size() == 2);
    CHECK((f.g3 == 1 || f.g4 == 1));
  }
}

TEST_CASE("eliminating a three-sided grain takes one flip and one removal") {
  GrainGraph g = fixture::grain_with_sides(3);
  REQUIRE(g.grain(1).ring.size() == 3);
  const std::size_t ng = g.grain_count();
  const std::size_t nj = g.junction_count();
  const std::size_t ne = g.edge_count();
  const std::size_t njg = g.jg_edge_count();
  std::vector<Elimination> out;
  eliminate_grain(g, 1, by_id, out);
  REQUIRE(out.size() == 1);
  CHECK(out[0].flips.size() == 1);
  CHECK(out[0].removal.grain == 1);
  CHECK(g.grain_count() == ng - 1);
  CHECK(g.junction_count() == nj - 2);
  CHECK(g.edge_count() == ne - 3);
  CHECK(g.jg_edge_count() == njg - 6);
  CHECK(g.junction_count() == 2 * g.grain_count());
  CHECK(validate(g).ok());
}

TEST_CASE("removal of a two-sided grain") {
  GrainGraph g = fixture::grain_with_sides(3);
  const auto spokes = spoke_edges(g, 1);
  apply_edge_flip(g, spokes[0].a, spokes[0].b, GrainId{1});
  const std::size_t distinct = g.distinct_edge_count();
  const std::size_t nj = g.junction_count();
  const GrainRemoval r = remove_grain(g, 1);
  CHECK(g.junction_count() == nj - 2);
  CHECK(g.distinct_edge_count() == distinct - 2);
  CHECK(g.linked(r.bridge[0], r.bridge[1]));
  CHECK_FALSE(g.has_grain(1));
  CHECK(validate(g).ok());
}

TEST_CASE("removal requires a two-sided grain") {
  GrainGraph g = fixture::grain_with_sides(5);
  try {
    remove_grain(g, 1);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::topology);
  }
}

TEST_CASE("a k-sided grain is eliminated with k - 2 flips") {
  for (int k = 3; k <= 7; ++k) {
    CAPTURE(k);
    GrainGraph g = fixture::grain_with_sides(k);
    REQUIRE(g.grain(1).ring.size() == static_cast<std::size_t>(k));
    std::vector<Elimination> out;
    eliminate_grain(g, 1, by_id, out);
    REQUIRE(out.size() == 1);
    CHECK(out[0].flips.size() == static_cast<std::size_t>(k - 2));
    CHECK(validate(g).ok());
    CHECK(g.junction_count() == 2 * g.grain_count());
  }
}

TEST_CASE("cascade flips follow the neighbour rank") {
  GrainGraph g = fixture::grain_with_sides(6);
  const auto spokes = spoke_edges(g, 1);
  std::vector<GrainId> nbrs;
  for (const auto& s : spokes) nbrs.push_back(s.neighbor);
  std::sort(nbrs.begin(), nbrs.end());
  // descending id rank: the largest neighbour id is flipped first
  std::vector<Elimination> out;
  eliminate_grain(g, 1, [](GrainId n) { return -static_cast<double>(n); }, out);
  REQUIRE(out.size() == 1);
  REQUIRE(out[0].flips.size() == 4);
  for (std::size_t k = 0; k < 4; ++k) {
    const EdgeFlip& f = out[0].flips[k];
    const GrainId other = f.g3 == 1 ? f.g4 : f.g3;
    CHECK(other == nbrs[nbrs.size() - 1 - k]);
  }
}

TEST_CASE("random legal edit sequences keep the graph valid") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    GrainGraph g = fixture::uniform_voronoi(60, 200 + trial).graph;
    for (int step = 0; step < 30 && g.grain_count() > 10; ++step) {
      if (rng() % 3 == 0) {
        std::vector<GrainId> ids;
        for (const auto& [id, gr] : g.grains()) ids.push_back(id);
        std::vector<Elimination> out;
        eliminate_grain(g, ids[rng() % ids.size()], by_id, out);
      } else {
        const auto edges = g.edges();
        const auto [a, b] = edges[rng() % edges.size()];
        if (!flippable(g, a, b)) continue;
        apply_edge_flip(g, a, b);
      }
      const ValidationReport report = validate(g);
      CHECK_MESSAGE(report.ok(), report.summary());
      CHECK(g.junction_count() == 2 * g.grain_count());
    }
  }
}

TEST_CASE("matching identical graphs") {
  const GrainGraph g = fixture::uniform_voronoi(30, 5).graph;
  const MatchResult m = match_graphs(g, g);
  CHECK(m.junctions.size() == g.junction_count());
  CHECK(m.edge_events.empty());
  CHECK(m.eliminated.empty());
  CHECK(m.masked_fraction() == 0.0);
  for (double v : m.delta.dx) CHECK(v == 0.0);
  for (double v : m.delta.dy) CHECK(v == 0.0);
  for (double v : m.delta.ds) CHECK(v == 0.0);
}

TEST_CASE("matching detects a constructed flip") {
  const GrainGraph prev = fixture::uniform_voronoi(40, 6).graph;
  GrainGraph next = prev;
  const auto [a, b] = first_flippable(next);
  apply_edge_flip(next, a, b);
  const MatchResult m = match_graphs(prev, next);
  REQUIRE(m.edge_events.size() == 1);
  CHECK(m.edge_events[0] == std::pair{a, b});
  CHECK(m.eliminated.empty());
  CHECK(m.masked_fraction() == 0.0);
  std::size_t labelled = 0;
  for (std::size_t k = 0; k < m.edges.size(); ++k) {
    labelled += m.edge_label[k];
    if (m.edge_label[k]) CHECK(m.edges[k] == std::pair{a, b});
  }
  CHECK(labelled == 1);
}

TEST_CASE("matching detects an elimination and masks its junctions") {
  const GrainGraph prev = fixture::grain_with_sides(3);
  GrainGraph next = prev;
  std::vector<Elimination> out;
  eliminate_grain(next, 1, by_id, out);
  const MatchResult m = match_graphs(prev, next);
  CHECK(m.eliminated == std::vector<GrainId>{1});
  CHECK(m.edge_events.empty());
  std::size_t masked = std::count(m.junction_mask.begin(), m.junction_mask.end(), 1);
  CHECK(masked == 3);
  CHECK(m.masked_fraction() < 0.05);
  const std::size_t row = static_cast<std::size_t>(
      std::lower_bound(m.delta.grain_ids.begin(), m.delta.grain_ids.end(), 1u) - m.delta.grain_ids.begin());
  CHECK(m.delta.ds[row] == doctest::Approx(-prev.grain(1).area));
}

TEST_CASE("detection recovers every set of up to three separated flips") {
  std::mt19937_64 rng(99);
  int checked = 0;
  for (int trial = 0; trial < 150; ++trial) {
    const GrainGraph prev = fixture::uniform_voronoi(20 + trial % 31, 1000 + trial).graph;
    GrainGraph next = prev;
    const int want = 1 + trial % 3;
    std::set<JunctionId> blocked;
    std::set<GrainId> touched;
    std::set<std::pair<JunctionId, JunctionId>> applied;
    auto edges = prev.edges();
    std::shuffle(edges.begin(), edges.end(), rng);
    for (const auto& [a, b] : edges) {
      if (static_cast<int>(applied.size()) == want) break;
      if (blocked.count(a) || blocked.count(b) || !flippable(next, a, b)) continue;
      const Triplet& ta = prev.junction(a).triplet;
      const Triplet& tb = prev.junction(b).triplet;
      bool clash = false;
      for (GrainId x : ta) clash |= touched.count(x) > 0;
      for (GrainId x : tb) clash |= touched.count(x) > 0;
      if (clash) continue;
      apply_edge_flip(next, a, b);
      applied.insert({a, b});
      touched.insert(ta.begin(), ta.end());
      touched.insert(tb.begin(), tb.end());
      for (JunctionId j : {a, b}) {
        blocked.insert(j);
        for (JunctionId o : prev.junction(j).links) blocked.insert(o);
      }
    }
    const MatchResult m = match_graphs(prev, next);
    const std::set<std::pair<JunctionId, JunctionId>> found(m.edge_events.begin(), m.edge_events.end());
    CHECK(found == applied);
    CHECK(m.masked_fraction() == 0.0);
    ++checked;
  }
  CHECK(checked == 150);
}

TEST_CASE("graphs without a shared grain id cannot be matched") {
  GrainGraph a(DomainSpec{});
  a.add_grain(1, {0, 0, 1}, 1.0);
  GrainGraph b(DomainSpec{});
  b.add_grain(2, {0, 0, 1}, 1.0);
  try {
    (void)match_graphs(a, b);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::input);
  }
}

TEST_CASE("training record is one JSON line with aligned arrays") {
  const GrainGraph prev = fixture::uniform_voronoi(30, 7).graph;
  GrainGraph next = prev;
  const auto [a, b] = first_flippable(next);
  apply_edge_flip(next, a, b);
  const MatchResult m = match_graphs(prev, next);
  const std::string line = training_record(prev, next, m);
  CHECK(line.find('\n') == std::string::npos);
  const auto doc = nlohmann::json::parse(line);
  CHECK(doc["delta"]["dx"].size() == prev.junction_count());
  CHECK(doc["edge_label"].size() == prev.distinct_edge_count());
  CHECK(doc["edge_events"].size() == 1);
  CHECK(doc["prev"]["format_version"] == 1);
}

TEST_CASE("layer spacing from the elimination table") {
  const DomainSpec d;
  SUBCASE("60 of 100 grains eliminated over the height gives 20 layers") {
    const LayerPlan p = delta_z_policy(1.0, 1.0, {{1.0, 1.0, (100.0 - 40.0) / 100.0}}, d, 50.0);
    CHECK(p.n_l == 20);
    CHECK(p.dz == doctest::Approx(50.0 / 19));
  }
  SUBCASE("no eliminations clamps to two layers") {
    const LayerPlan p = delta_z_policy(1.0, 1.0, {{1.0, 1.0, 0.0}}, d, 50.0);
    CHECK(p.n_l == 2);
    CHECK(p.dz == 50.0);
  }
  SUBCASE("nearest grid point in normalized process space") {
    // G spans 10 K/um and R spans 2 m/s: the query is closer to the second entry in normalized
    // units and to the first in raw units
    const std::vector<EliminationSample> table{{1.904, 1.3, 0.3}, {2.9, 0.558, 0.63}};
    CHECK(delta_z_policy(1.904, 0.558, table, d, 48.0).n_l == 21);
    CHECK(delta_z_policy(1.904, 0.558, table, d, 48.0).dz == doctest::Approx(2.4));
  }
  SUBCASE("empty table") {
    try {
      (void)delta_z_policy(1.0, 1.0, {}, d, 50.0);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::config);
    }
  }
  SUBCASE("table parsing") {
    const auto table = parse_elimination_table(R"([{"g_z": 1.9, "r_z": 0.5, "fraction": 0.6}])");
    REQUIRE(table.size() == 1);
    CHECK(table[0].fraction == 0.6);
    CHECK_THROWS_AS(parse_elimination_table("{}"), Error);
  }
}
