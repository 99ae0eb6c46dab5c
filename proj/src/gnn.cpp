#include "graingraph/gnn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include <fmt/format.h>

#include "graingraph/error.hpp"
#include "graingraph/kernels.hpp"

namespace graingraph {

namespace {

constexpr std::size_t kW = kVertexInputWidth;

std::uint64_t pair_key(std::uint32_t a, std::uint32_t b) {
  if (a > b) std::swap(a, b);
  return (std::uint64_t{a} << 32) | b;
}

struct Entry {
  std::size_t row;
  float rel[3];
  float length;
};

float sigmoid(float x) { return 1.0f / (1.0f + std::exp(-x)); }

void require_finite(std::span<const float> v, std::size_t layer, char gate) {
  for (float x : v) {
    if (!std::isfinite(x)) throw Error(ErrorKind::numeric, fmt::format("non-finite value in layer {} gate {}", layer, gate));
  }
}

void check_width(const Matrix& m, std::size_t rows, std::size_t cols, const char* name) {
  if (m.rows != rows || m.cols != cols) {
    throw Error(ErrorKind::input, fmt::format("weight {} is [{}, {}] but the input needs [{}, {}]", name, m.rows, m.cols,
                                              rows, cols));
  }
}

}  // namespace

GraphTensors build_tensors(const GrainGraph& graph, const FeatureSet& fs, std::span<const std::size_t> row_order) {
  const std::size_t nj = fs.junction_ids.size();
  const std::size_t ng = fs.grain_ids.size();
  if (nj != graph.junction_count() || ng != graph.grain_count()) {
    throw Error(ErrorKind::input, "feature table does not match the graph");
  }
  const std::size_t n = nj + ng;
  if (!row_order.empty()) {
    std::vector<std::size_t> sorted(row_order.begin(), row_order.end());
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t r = 0; r < sorted.size(); ++r) {
      if (sorted[r] != r || sorted.size() != n) throw Error(ErrorKind::input, "row order is not a permutation");
    }
  }
  auto source = [&](std::size_t r) { return row_order.empty() ? r : row_order[r]; };
  std::vector<std::size_t> row_of_default(n);
  for (std::size_t r = 0; r < n; ++r) row_of_default[source(r)] = r;

  const DomainSpec& d = graph.domain();
  GraphTensors t;
  t.period_x = d.lx / d.ref_lx;
  t.period_y = d.ly / d.ref_ly;
  t.vertex.resize(n);
  t.features.assign(n * kW, 0.0f);
  t.coords.assign(n * 3, 0.0);

  std::map<JunctionId, std::size_t> jrow;
  std::map<GrainId, std::size_t> grow;
  for (std::size_t k = 0; k < nj; ++k) jrow[fs.junction_ids[k]] = row_of_default[k];
  for (std::size_t k = 0; k < ng; ++k) grow[fs.grain_ids[k]] = row_of_default[nj + k];

  for (std::size_t k = 0; k < nj; ++k) {
    const std::size_t r = row_of_default[k];
    t.vertex[r] = {VertexKind::junction, fs.junction_ids[k]};
    const JunctionRow& f = fs.junction[k];
    for (std::size_t s = 0; s < kJunctionWidth; ++s) t.features[r * kW + s] = static_cast<float>(f[s]);
    t.coords[r * 3 + 0] = f[jx];
    t.coords[r * 3 + 1] = f[jy];
    t.coords[r * 3 + 2] = f[jz];
  }
  for (std::size_t k = 0; k < ng; ++k) {
    const std::size_t r = row_of_default[nj + k];
    t.vertex[r] = {VertexKind::grain, fs.grain_ids[k]};
    const GrainRow& f = fs.grain[k];
    for (std::size_t s = 0; s < kGrainWidth; ++s) t.features[r * kW + s] = static_cast<float>(f[s]);
    t.features[r * kW + kPaddedWidth] = 1.0f;
    t.coords[r * 3 + 0] = f[gx];
    t.coords[r * 3 + 1] = f[gy];
    t.coords[r * 3 + 2] = f[gz];
  }

  std::map<std::uint64_t, double> jj_len;
  std::map<std::uint64_t, double> jg_len;
  for (const EdgeFeature& e : fs.jj_edges) jj_len[pair_key(e.a, e.b)] = e.length;
  for (const EdgeFeature& e : fs.jg_edges) jg_len[(std::uint64_t{e.a} << 32) | e.b] = e.length;
  auto lookup = [](const std::map<std::uint64_t, double>& m, std::uint64_t key) {
    auto it = m.find(key);
    if (it == m.end()) throw Error(ErrorKind::input, "feature table lacks an edge length present in the graph");
    return it->second;
  };

  std::vector<std::vector<Entry>> lists(n);
  auto entry = [&](std::size_t i, std::size_t k, double length) {
    Entry e{k, {}, static_cast<float>(length)};
    e.rel[0] = static_cast<float>(relative_coordinate(t.coords[k * 3], t.coords[i * 3], t.period_x));
    e.rel[1] = static_cast<float>(relative_coordinate(t.coords[k * 3 + 1], t.coords[i * 3 + 1], t.period_y));
    e.rel[2] = static_cast<float>(t.coords[k * 3 + 2] - t.coords[i * 3 + 2]);
    lists[i].push_back(e);
  };
  for (const auto& [id, j] : graph.junctions()) {
    const std::size_t i = jrow.at(id);
    for (JunctionId l : j.links) entry(i, jrow.at(l), lookup(jj_len, pair_key(id, l)));
    for (std::size_t s = 0; s < 3; ++s) {
      if (s > 0 && j.triplet[s] == j.triplet[s - 1]) continue;
      entry(i, grow.at(j.triplet[s]), lookup(jg_len, (std::uint64_t{id} << 32) | j.triplet[s]));
    }
  }
  for (const auto& [id, g] : graph.grains()) {
    const std::size_t i = grow.at(id);
    for (JunctionId jid : g.ring) entry(i, jrow.at(jid), lookup(jg_len, (std::uint64_t{jid} << 32) | id));
  }

  auto less = [&](const Entry& a, const Entry& b) {
    const auto ka = t.vertex[a.row].kind;
    const auto kb = t.vertex[b.row].kind;
    if (ka != kb) return ka < kb;
    for (int c = 0; c < 3; ++c) {
      if (a.rel[c] != b.rel[c]) return a.rel[c] < b.rel[c];
    }
    if (a.length != b.length) return a.length < b.length;
    return std::lexicographical_compare(t.features.begin() + a.row * kW, t.features.begin() + (a.row + 1) * kW,
                                        t.features.begin() + b.row * kW, t.features.begin() + (b.row + 1) * kW);
  };
  t.offsets.assign(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::stable_sort(lists[i].begin(), lists[i].end(), less);
    t.offsets[i + 1] = t.offsets[i] + lists[i].size();
    for (const Entry& e : lists[i]) {
      t.neighbor.push_back(e.row);
      t.rel.insert(t.rel.end(), e.rel, e.rel + 3);
      t.edge_length.push_back(e.length);
    }
  }

  for (const auto& [a, b] : graph.edges()) {
    t.edges.push_back({a, b, jrow.at(a), jrow.at(b), static_cast<float>(lookup(jj_len, pair_key(a, b)))});
  }
  return t;
}

HiddenState zero_state(std::size_t rows, std::size_t dim) {
  return HiddenState{dim, std::vector<float>(rows * dim, 0.0f), std::vector<float>(rows * dim, 0.0f)};
}

std::vector<float> transformer_aggregate(const GraphTensors& t, std::span<const float> hidden, std::size_t dim,
                                         const GateWeights& w, std::vector<double>* attention_sums) {
  const std::size_t n = t.rows();
  const std::size_t din = kW + dim;
  if (hidden.size() != n * dim) throw Error(ErrorKind::input, "hidden state does not match the vertex count");
  check_width(w.w1, dim, din, "W1");
  check_width(w.w2, dim, din, "W2");
  check_width(w.w3, dim, 1, "W3");
  check_width(w.w4, dim, din, "W4");
  check_width(w.w5, dim, din, "W5");

  // Products with the coordinate slots zeroed; coordinates are added per use below.
  std::vector<float> u(n * din, 0.0f);
  for (std::size_t i = 0; i < n; ++i) {
    float* row = u.data() + i * din;
    std::copy_n(t.features.data() + i * kW + 3, kW - 3, row + 3);
    std::copy_n(hidden.data() + i * dim, dim, row + kW);
  }
  std::vector<float> stacked(4 * dim * din);
  const Matrix* parts[4] = {&w.w1, &w.w2, &w.w4, &w.w5};
  for (std::size_t p = 0; p < 4; ++p) std::copy(parts[p]->data.begin(), parts[p]->data.end(), stacked.begin() + p * dim * din);
  std::vector<float> y(n * 4 * dim);
  kernels::gemm_rows(u.data(), n, din, stacked.data(), 4 * dim, y.data());

  std::vector<float> col(dim * 12);  // W1c2, W4c2, W2c0..2, W5c0..2, W3
  float* w1z = col.data();
  float* w4z = w1z + dim;
  float* w2c = w4z + dim;
  float* w5c = w2c + 3 * dim;
  float* w3 = w5c + 3 * dim;
  for (std::size_t r = 0; r < dim; ++r) {
    w1z[r] = w.w1(r, 2);
    w4z[r] = w.w4(r, 2);
    for (std::size_t c = 0; c < 3; ++c) {
      w2c[c * dim + r] = w.w2(r, c);
      w5c[c * dim + r] = w.w5(r, c);
    }
    w3[r] = w.w3(r, 0);
  }

  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dim));
  std::vector<float> out(n * dim);
  std::vector<float> q(dim);
  std::vector<double> acc(dim);
  std::vector<double> score;
  std::vector<float> vec(dim);
  for (std::size_t i = 0; i < n; ++i) {
    const float* yi = y.data() + i * 4 * dim;
    const float zi = t.features[i * kW + 2];
    for (std::size_t r = 0; r < dim; ++r) {
      acc[r] = static_cast<double>(yi[r] + w1z[r] * zi);
      q[r] = yi[2 * dim + r] + w4z[r] * zi;
    }
    const std::size_t begin = t.offsets[i];
    const std::size_t end = t.offsets[i + 1];
    if (begin == end) {
      if (attention_sums) attention_sums->push_back(std::numeric_limits<double>::quiet_NaN());
    } else {
      score.assign(end - begin, 0.0);
      for (std::size_t e = begin; e < end; ++e) {
        const float* yk = y.data() + t.neighbor[e] * 4 * dim;
        const float* rel = t.rel.data() + 3 * e;
        const float len = t.edge_length[e];
        double s = 0.0;
        for (std::size_t r = 0; r < dim; ++r) {
          float key = yk[3 * dim + r];
          key = key + w5c[r] * rel[0];
          key = key + w5c[dim + r] * rel[1];
          key = key + w5c[2 * dim + r] * rel[2];
          key = key + w3[r] * len;
          s += static_cast<double>(q[r]) * static_cast<double>(key);
        }
        score[e - begin] = s * inv_sqrt;
      }
      const double m = *std::max_element(score.begin(), score.end());
      double z = 0.0;
      for (double& s : score) {
        s = std::exp(s - m);
        z += s;
      }
      double total = 0.0;
      for (std::size_t e = begin; e < end; ++e) {
        const double beta = score[e - begin] / z;
        total += beta;
        const float* yk = y.data() + t.neighbor[e] * 4 * dim;
        const float* rel = t.rel.data() + 3 * e;
        const float len = t.edge_length[e];
        for (std::size_t r = 0; r < dim; ++r) {
          float msg = yk[dim + r];
          msg = msg + w2c[r] * rel[0];
          msg = msg + w2c[dim + r] * rel[1];
          msg = msg + w2c[2 * dim + r] * rel[2];
          msg = msg + w3[r] * len;
          acc[r] += beta * static_cast<double>(msg);
        }
      }
      if (attention_sums) attention_sums->push_back(total);
    }
    for (std::size_t r = 0; r < dim; ++r) out[i * dim + r] = static_cast<float>(acc[r]);
  }
  return out;
}

HiddenState lstm_step(const GraphTensors& t, const HiddenState& state, const LayerWeights& w, std::size_t layer_index,
                      AttentionTrace* trace) {
  const std::size_t dim = state.dim;
  const std::size_t n = t.rows();
  if (state.h.size() != n * dim || state.c.size() != n * dim) {
    throw Error(ErrorKind::input, "hidden state does not match the vertex count");
  }
  std::array<std::vector<float>, 4> gate;
  for (std::size_t g = 0; g < 4; ++g) {
    gate[g] = transformer_aggregate(t, state.h, dim, w.gates[g], trace ? &trace->row_sums : nullptr);
    const std::vector<float>& b = w.gates[g].b;
    if (b.size() != dim) throw Error(ErrorKind::input, fmt::format("bias of gate {} has length {}", kGateNames[g], b.size()));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t r = 0; r < dim; ++r) {
        float& x = gate[g][i * dim + r];
        x = x + b[r];
        x = g == gate_c ? std::tanh(x) : sigmoid(x);
      }
    }
    require_finite(gate[g], layer_index, kGateNames[g]);
  }
  HiddenState next{dim, std::vector<float>(n * dim), std::vector<float>(n * dim)};
  for (std::size_t k = 0; k < n * dim; ++k) {
    const float c = gate[gate_f][k] * state.c[k] + gate[gate_i][k] * gate[gate_c][k];
    next.c[k] = c;
    next.h[k] = gate[gate_o][k] * std::tanh(c);
  }
  require_finite(next.c, layer_index, 'c');
  return next;
}

HiddenState encode(const GraphTensors& t, const WeightBundle& bundle, AttentionTrace* trace) {
  bundle.check();
  HiddenState state = zero_state(t.rows(), bundle.hidden_dim);
  for (std::size_t l = 0; l < bundle.layers.size(); ++l) state = lstm_step(t, state, bundle.layers[l], l, trace);
  return state;
}

namespace {

double head(const Dense& d, const float* h, std::size_t dim) {
  double s = 0.0;
  for (std::size_t r = 0; r < dim; ++r) s += static_cast<double>(d.w.data[r]) * static_cast<double>(h[r]);
  return s + d.b;
}

}  // namespace

DeltaF regress(const GraphTensors& t, const WeightBundle& bundle) {
  if (bundle.tag != ModelTag::regressor) throw Error(ErrorKind::input, "regress needs a regressor bundle");
  const HiddenState s = encode(t, bundle);
  const std::size_t dim = s.dim;
  std::vector<std::pair<std::uint32_t, std::size_t>> junctions;
  std::vector<std::pair<std::uint32_t, std::size_t>> grains;
  for (std::size_t r = 0; r < t.rows(); ++r) {
    (t.vertex[r].kind == VertexKind::junction ? junctions : grains).emplace_back(t.vertex[r].id, r);
  }
  std::sort(junctions.begin(), junctions.end());
  std::sort(grains.begin(), grains.end());
  DeltaF out;
  for (const auto& [id, r] : junctions) {
    const float* h = s.h.data() + r * dim;
    out.junction_ids.push_back(id);
    out.dx.push_back(std::tanh(head(bundle.hx, h, dim)));
    out.dy.push_back(std::tanh(head(bundle.hy, h, dim)));
  }
  for (const auto& [id, r] : grains) {
    const float* h = s.h.data() + r * dim;
    out.grain_ids.push_back(id);
    out.ds.push_back(std::tanh(head(bundle.hs, h, dim)));
    out.v.push_back(std::max(0.0, head(bundle.hv, h, dim)));
  }
  return out;
}

DeltaF regress(const GrainGraph& graph, const FeatureSet& normalized, const WeightBundle& bundle) {
  return regress(build_tensors(graph, normalized), bundle);
}

EdgeProbabilities classify(const GraphTensors& t, const WeightBundle& bundle) {
  if (bundle.tag != ModelTag::classifier) throw Error(ErrorKind::input, "classify needs a classifier bundle");
  const HiddenState s = encode(t, bundle);
  const std::size_t dim = s.dim;
  const std::vector<float>& w = bundle.hc.w.data;
  EdgeProbabilities out;
  for (const GraphTensors::Edge& e : t.edges) {
    const float* ha = s.h.data() + e.row_a * dim;
    const float* hb = s.h.data() + e.row_b * dim;
    double logit = 0.0;
    for (std::size_t r = 0; r < dim; ++r) logit += static_cast<double>(w[r]) * ha[r];
    for (std::size_t r = 0; r < dim; ++r) logit += static_cast<double>(w[dim + r]) * hb[r];
    logit += static_cast<double>(w[2 * dim]) * e.length + bundle.hc.b;
    out.edges.emplace_back(e.a, e.b);
    out.p.push_back(1.0 / (1.0 + std::exp(-logit)));
    out.logit.push_back(logit);
  }
  return out;
}

EdgeProbabilities classify(const GrainGraph& graph, const FeatureSet& normalized, const WeightBundle& bundle) {
  return classify(build_tensors(graph, normalized), bundle);
}

}  // namespace graingraph
