#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "graingraph/error.hpp"
#include "graingraph/features.hpp"
#include "graingraph/gnn.hpp"
#include "graingraph/graph.hpp"

namespace graingraph {

/// Predictor output for one layer. `edges.p` is aligned with GrainGraph::edges().
struct Prediction {
  DeltaF delta;
  EdgeProbabilities edges;
};

class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual const char* name() const = 0;
  /// `normalized` is normalize_features(graph) with the height clamped at the reference height.
  virtual Prediction predict(const GrainGraph& graph, const FeatureSet& normalized) const = 0;
};

/// No motion, no events; v echoes the current excess volume so features stay fixed.
class IdentityPredictor final : public Predictor {
 public:
  const char* name() const override { return "identity"; }
  Prediction predict(const GrainGraph& graph, const FeatureSet& normalized) const override;
};

struct BaselineParams {
  double kappa = 0.3;
  double c1 = 0.005;
  double c2 = 0.02;
  double c3 = 4.0;
};

/// Weight-free geometric predictor: junctions relax towards their neighbours, grains grow
/// with side count and alignment, short edges flip.
Prediction baseline_predict(const GrainGraph& graph, const FeatureSet& normalized, const BaselineParams& params = {});

class BaselinePredictor final : public Predictor {
 public:
  explicit BaselinePredictor(BaselineParams params = {}) : params_(params) {}
  const char* name() const override { return "baseline"; }
  Prediction predict(const GrainGraph& graph, const FeatureSet& normalized) const override {
    return baseline_predict(graph, normalized, params_);
  }

 private:
  BaselineParams params_;
};

class GnnPredictor final : public Predictor {
 public:
  /// Throws Error{config} when the bundle tags are not (regressor, classifier).
  GnnPredictor(WeightBundle regressor, WeightBundle classifier);
  const char* name() const override { return "gnn"; }
  Prediction predict(const GrainGraph& graph, const FeatureSet& normalized) const override;

 private:
  WeightBundle regressor_;
  WeightBundle classifier_;
};

struct Thresholds {
  double eps_e = 0.6;
  double eps_g = 1e-4;

  /// Throws Error{config} unless 0 < eps_e < 1 and eps_g > 0.
  void check() const;
};

enum class EventKind { flip, remove, sweep };

const char* to_string(EventKind kind) noexcept;

/// One applied topological operation.
///
/// flip: ids = (j1, j2, new_j1, new_j2), grains = (g1, g2, g3, g4); key is P for an edge event
/// or the neighbour's predicted ds inside a cascade (cascade != 0).
/// remove / sweep: ids = (removed junction, removed junction, bridge, bridge), grains = (g);
/// key is the predicted area for a cascade removal.
struct EventRecord {
  int step = 0;
  EventKind kind = EventKind::flip;
  std::vector<std::uint32_t> ids;
  std::vector<GrainId> grains;
  GrainId cascade = 0;
  double key = 0.0;
};

std::string event_json(const EventRecord& e);
EventRecord parse_event(std::string_view line);
/// One JSON object per line.
std::string events_jsonl(const std::vector<EventRecord>& events);
std::vector<EventRecord> parse_events_jsonl(std::string_view text);

/// Applies the operations of a log in order. Starting from the graph the log was recorded on,
/// this reproduces the topology of the recorded update.
void replay_events(GrainGraph& graph, const std::vector<EventRecord>& events);

struct UpdateStats {
  std::size_t edge_events = 0;       // |S_E| before cascades
  std::size_t grain_events = 0;      // |S_G|
  std::size_t cascade_flips = 0;
  std::size_t eager_eliminations = 0;
  std::size_t edge_flips = 0;
  std::size_t skipped_edge_events = 0;
  std::size_t swept = 0;
};

struct UpdateResult {
  GrainGraph graph;
  std::vector<EventRecord> events;
  UpdateStats stats;
};

/// Thrown when a graph would drop below three grains; carries the operations applied so far.
class CollapseError : public Error {
 public:
  CollapseError(const std::string& what, std::vector<EventRecord> partial)
      : Error(ErrorKind::degenerate, what), partial_(std::move(partial)) {}
  const std::vector<EventRecord>& partial_log() const { return partial_; }

 private:
  std::vector<EventRecord> partial_;
};

/// Moves junctions, updates areas, excess volumes and lagged deltas from a prediction, and
/// advances the layer height by `dz` (um). Throws Error{contract} on out-of-range predictions.
GrainGraph advance_features(const GrainGraph& graph, const Prediction& prediction, double dz);

/// One graph-to-graph update. Event order: grains with updated area below eps_g ascending by
/// area (ties by id), each eliminated by a cascade ordered by the neighbours' predicted ds;
/// then the remaining edge events with P > eps_e descending by P (ties by edge); then every
/// two-sided grain is removed. Edge events are tracked by the grain pair they separate.
UpdateResult update_graph(const GrainGraph& graph, const Predictor& predictor, const Thresholds& thresholds,
                          double dz, int step = 1);

struct Trajectory {
  std::vector<GrainGraph> layers;
  /// events[l - 1] holds the operations that produced layer l
  std::vector<std::vector<EventRecord>> events;
  std::vector<UpdateStats> stats;
  double dz = 0.0;
  /// Set when the rollout stopped early; layers holds the completed prefix.
  std::optional<Error> failure;

  FeatureSet features(std::size_t layer) const;
};

struct RolloutOptions {
  int n_l = 20;
  double dz = 2.5;
  Thresholds thresholds{};
};

/// n_l layers including the input; heights z_l = z_0 + l dz.
Trajectory rollout(const GrainGraph& g0, const Predictor& predictor, const RolloutOptions& options);

}  // namespace graingraph
