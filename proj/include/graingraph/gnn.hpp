#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "graingraph/features.hpp"
#include "graingraph/graph.hpp"
#include "graingraph/weights.hpp"

namespace graingraph {

/// Dense view of one layer for inference.
///
/// Rows are vertices; the default order is junctions then grains, each ascending by id.
/// Neighbour lists are sorted by content (kind, relative coordinates, edge length, features),
/// never by row or id, so reductions do not depend on the vertex order.
struct GraphTensors {
  std::vector<VertexRef> vertex;
  /// rows x 12: padded normalized features plus kind flag
  std::vector<float> features;
  /// rows x 3: normalized x, y, z
  std::vector<double> coords;
  double period_x = 1.0;
  double period_y = 1.0;

  /// CSR adjacency over rows; rel holds the relative coordinates of each entry (3 per entry).
  std::vector<std::size_t> offsets;
  std::vector<std::size_t> neighbor;
  std::vector<float> rel;
  std::vector<float> edge_length;

  struct Edge {
    JunctionId a = 0;  // lower id
    JunctionId b = 0;
    std::size_t row_a = 0;
    std::size_t row_b = 0;
    float length = 0.0f;
  };
  /// Distinct e_jj edges in GrainGraph::edges() order.
  std::vector<Edge> edges;

  std::size_t rows() const { return vertex.size(); }
};

/// `normalized` must be the normalized feature table of `graph`. `row_order`, when given, is a
/// permutation of the default rows (row r holds default row row_order[r]).
GraphTensors build_tensors(const GrainGraph& graph, const FeatureSet& normalized,
                           std::span<const std::size_t> row_order = {});

struct HiddenState {
  std::size_t dim = 0;
  std::vector<float> h;  // rows x dim
  std::vector<float> c;
};

HiddenState zero_state(std::size_t rows, std::size_t dim);

/// Attention diagnostics: per (layer, gate, row) the sum of the attention coefficients, NaN for
/// vertices without neighbours.
struct AttentionTrace {
  std::vector<double> row_sums;
};

/// output_i = W1 u_i + sum_k beta_ik (W2 u_ki + W3 f_ik), beta = softmax_k((W4 u_i).(W5 u_ki + W3 f_ik) / sqrt(D_h)).
///
/// u = [features, hidden]. The coordinate slots of u_ki hold the relative coordinates of k
/// seen from i; those of u_i hold (0, 0, z). Bias is not added. Accumulation is in double.
std::vector<float> transformer_aggregate(const GraphTensors& t, std::span<const float> hidden, std::size_t dim,
                                         const GateWeights& w, std::vector<double>* attention_sums = nullptr);

/// One graph-transformer LSTM layer. Throws Error{numeric} naming the gate on NaN/Inf.
HiddenState lstm_step(const GraphTensors& t, const HiddenState& state, const LayerWeights& w,
                      std::size_t layer_index = 0, AttentionTrace* trace = nullptr);

/// Stacked layers from zero state; returns the last layer's state.
HiddenState encode(const GraphTensors& t, const WeightBundle& bundle, AttentionTrace* trace = nullptr);

/// tanh heads for dx, dy, ds and a ReLU head for v. Throws Error{input} for a classifier bundle.
DeltaF regress(const GraphTensors& t, const WeightBundle& bundle);
DeltaF regress(const GrainGraph& graph, const FeatureSet& normalized, const WeightBundle& bundle);

struct EdgeProbabilities {
  std::vector<std::pair<JunctionId, JunctionId>> edges;
  std::vector<double> p;
  std::vector<double> logit;
};

/// sigma(W_hc [h_lower, h_higher, length] + b_c) per e_jj edge. Throws Error{input} for a regressor bundle.
EdgeProbabilities classify(const GraphTensors& t, const WeightBundle& bundle);
EdgeProbabilities classify(const GrainGraph& graph, const FeatureSet& normalized, const WeightBundle& bundle);

}  // namespace graingraph
