#include "graingraph/weights.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <functional>
#include <map>
#include <set>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <json.hpp>

#include "graingraph/error.hpp"
#include "graingraph/graph_io.hpp"

namespace graingraph {

using nlohmann::json;

namespace {

constexpr int kWeightsFormatVersion = 1;

struct TensorRef {
  std::string name;
  std::vector<std::size_t> shape;
  float* data;
};

std::size_t element_count(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t s : shape) n *= s;
  return n;
}

/// Canonical tensor order of a bundle whose containers are already sized.
std::vector<TensorRef> tensors(WeightBundle& b) {
  std::vector<TensorRef> out;
  auto matrix = [&](std::string name, Matrix& m) { out.push_back({std::move(name), {m.rows, m.cols}, m.data.data()}); };
  for (std::size_t l = 0; l < b.layers.size(); ++l) {
    for (std::size_t g = 0; g < 4; ++g) {
      GateWeights& w = b.layers[l].gates[g];
      const std::string prefix = fmt::format("layer{}.gate{}.", l, kGateNames[g]);
      matrix(prefix + "W1", w.w1);
      matrix(prefix + "W2", w.w2);
      matrix(prefix + "W3", w.w3);
      matrix(prefix + "W4", w.w4);
      matrix(prefix + "W5", w.w5);
      out.push_back({prefix + "b", {w.b.size()}, w.b.data()});
    }
  }
  auto dense = [&](const char* head, Dense& d) {
    matrix(fmt::format("decoder.{}.W", head), d.w);
    out.push_back({fmt::format("decoder.{}.b", head), {1}, &d.b});
  };
  if (b.tag == ModelTag::regressor) {
    dense("hx", b.hx);
    dense("hy", b.hy);
    dense("hs", b.hs);
    dense("hv", b.hv);
  } else {
    dense("hc", b.hc);
  }
  return out;
}

ModelTag parse_tag(const std::string& s) {
  if (s == "regressor") return ModelTag::regressor;
  if (s == "classifier") return ModelTag::classifier;
  throw Error(ErrorKind::format, fmt::format("unknown model tag '{}'", s));
}

}  // namespace

const char* to_string(ModelTag tag) noexcept { return tag == ModelTag::regressor ? "regressor" : "classifier"; }

std::size_t WeightBundle::parameter_count() const {
  WeightBundle copy = *this;
  std::size_t n = 0;
  for (const TensorRef& t : tensors(copy)) n += element_count(t.shape);
  return n;
}

void WeightBundle::check() const {
  const std::size_t din = input_width();
  auto expect = [](const std::string& name, const Matrix& m, std::size_t r, std::size_t c) {
    if (m.rows != r || m.cols != c || m.data.size() != r * c) {
      throw Error(ErrorKind::input, fmt::format("tensor {} has shape [{}, {}], expected [{}, {}]", name, m.rows,
                                                m.cols, r, c));
    }
  };
  if (hidden_dim == 0) throw Error(ErrorKind::input, "hidden_dim must be positive");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    for (std::size_t g = 0; g < 4; ++g) {
      const GateWeights& w = layers[l].gates[g];
      const std::string prefix = fmt::format("layer{}.gate{}.", l, kGateNames[g]);
      expect(prefix + "W1", w.w1, hidden_dim, din);
      expect(prefix + "W2", w.w2, hidden_dim, din);
      expect(prefix + "W3", w.w3, hidden_dim, 1);
      expect(prefix + "W4", w.w4, hidden_dim, din);
      expect(prefix + "W5", w.w5, hidden_dim, din);
      if (w.b.size() != hidden_dim) {
        throw Error(ErrorKind::input, fmt::format("tensor {}b has length {}, expected {}", prefix, w.b.size(),
                                                  hidden_dim));
      }
    }
  }
  if (tag == ModelTag::regressor) {
    expect("decoder.hx.W", hx.w, 1, hidden_dim);
    expect("decoder.hy.W", hy.w, 1, hidden_dim);
    expect("decoder.hs.W", hs.w, 1, hidden_dim);
    expect("decoder.hv.W", hv.w, 1, hidden_dim);
  } else {
    expect("decoder.hc.W", hc.w, 1, 2 * hidden_dim + 1);
  }
}

WeightBundle zero_weights(ModelTag tag, std::size_t hidden_dim, std::size_t layer_count) {
  if (hidden_dim == 0 || layer_count == 0) throw Error(ErrorKind::config, "hidden_dim and layer_count must be positive");
  WeightBundle b;
  b.tag = tag;
  b.hidden_dim = hidden_dim;
  const std::size_t din = b.input_width();
  b.layers.resize(layer_count);
  for (LayerWeights& layer : b.layers) {
    for (GateWeights& w : layer.gates) {
      w.w1 = Matrix(hidden_dim, din);
      w.w2 = Matrix(hidden_dim, din);
      w.w3 = Matrix(hidden_dim, 1);
      w.w4 = Matrix(hidden_dim, din);
      w.w5 = Matrix(hidden_dim, din);
      w.b.assign(hidden_dim, 0.0f);
    }
  }
  if (tag == ModelTag::regressor) {
    for (Dense* d : {&b.hx, &b.hy, &b.hs, &b.hv}) d->w = Matrix(1, hidden_dim);
  } else {
    b.hc.w = Matrix(1, 2 * hidden_dim + 1);
  }
  return b;
}

WeightBundle random_weights(ModelTag tag, std::size_t hidden_dim, std::size_t layer_count, Rng& rng, double scale) {
  WeightBundle b = zero_weights(tag, hidden_dim, layer_count);
  for (const TensorRef& t : tensors(b)) {
    const std::size_t fan_in = t.shape.size() == 2 ? t.shape[1] : hidden_dim;
    const double bound = scale / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    const std::size_t n = element_count(t.shape);
    for (std::size_t k = 0; k < n; ++k) t.data[k] = static_cast<float>(u(rng));
  }
  return b;
}

SerializedWeights serialize_weights(const WeightBundle& bundle) {
  bundle.check();
  WeightBundle copy = bundle;
  SerializedWeights out;
  json records = json::array();
  for (const TensorRef& t : tensors(copy)) {
    const std::size_t n = element_count(t.shape);
    records.push_back({{"name", t.name}, {"shape", t.shape}, {"dtype", "f32"}, {"byte_offset", out.blob.size()}});
    const std::size_t at = out.blob.size();
    out.blob.resize(at + 4 * n);
    for (std::size_t k = 0; k < n; ++k) {
      std::uint32_t bits = std::bit_cast<std::uint32_t>(t.data[k]);
      for (int byte = 0; byte < 4; ++byte) out.blob[at + 4 * k + byte] = static_cast<unsigned char>(bits >> (8 * byte));
    }
  }
  json doc;
  doc["format_version"] = kWeightsFormatVersion;
  doc["model"] = to_string(bundle.tag);
  doc["hidden_dim"] = bundle.hidden_dim;
  doc["layer_count"] = bundle.layers.size();
  doc["vertex_input_width"] = kVertexInputWidth;
  doc["tensors"] = std::move(records);
  out.manifest = doc.dump(2) + "\n";
  return out;
}

WeightBundle deserialize_weights(std::string_view manifest, std::span<const unsigned char> blob) {
  json doc;
  try {
    doc = json::parse(manifest);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::format, fmt::format("weight manifest is not valid JSON: {}", e.what()));
  }
  ModelTag tag;
  std::size_t hidden_dim = 0;
  std::size_t layer_count = 0;
  try {
    if (doc.at("format_version").get<int>() != kWeightsFormatVersion) {
      throw Error(ErrorKind::format, fmt::format("unsupported weight format version {}", doc["format_version"].dump()));
    }
    tag = parse_tag(doc.at("model").get<std::string>());
    hidden_dim = doc.at("hidden_dim").get<std::size_t>();
    layer_count = doc.at("layer_count").get<std::size_t>();
    if (doc.contains("vertex_input_width") && doc["vertex_input_width"].get<std::size_t>() != kVertexInputWidth) {
      throw Error(ErrorKind::format, fmt::format("vertex_input_width must be {}", kVertexInputWidth));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::format, fmt::format("weight manifest header: {}", e.what()));
  }
  if (hidden_dim == 0 || layer_count == 0) throw Error(ErrorKind::format, "hidden_dim and layer_count must be positive");

  const json& records = doc.contains("tensors") ? doc["tensors"] : json();
  if (!records.is_array()) throw Error(ErrorKind::format, "weight manifest has no tensor list");

  // Cross-check the header against the tensors themselves.
  std::set<std::size_t> seen_layers;
  for (const json& r : records) {
    const std::string name = r.value("name", std::string());
    std::size_t layer = 0;
    if (std::sscanf(name.c_str(), "layer%zu.", &layer) == 1) seen_layers.insert(layer);
    if (name == "layer0.gatei.b" && r.contains("shape") && r["shape"].is_array() && r["shape"].size() == 1 &&
        r["shape"][0].get<std::size_t>() != hidden_dim) {
      throw Error(ErrorKind::format, fmt::format("tensor {} implies D_h = {} but the manifest says {}", name,
                                                 r["shape"][0].get<std::size_t>(), hidden_dim));
    }
  }
  if (!seen_layers.empty() && *seen_layers.rbegin() + 1 != layer_count) {
    throw Error(ErrorKind::format, fmt::format("tensors describe {} layers but the manifest says {}",
                                               *seen_layers.rbegin() + 1, layer_count));
  }

  WeightBundle b = zero_weights(tag, hidden_dim, layer_count);
  std::map<std::string, TensorRef> expected;
  for (TensorRef& t : tensors(b)) expected.emplace(t.name, t);
  std::set<std::string> loaded;
  for (const json& r : records) {
    std::string name;
    std::vector<std::size_t> shape;
    std::size_t offset = 0;
    std::string dtype;
    try {
      name = r.at("name").get<std::string>();
      shape = r.at("shape").get<std::vector<std::size_t>>();
      dtype = r.at("dtype").get<std::string>();
      offset = r.at("byte_offset").get<std::size_t>();
    } catch (const json::exception& e) {
      throw Error(ErrorKind::format, fmt::format("tensor record {}: {}", name.empty() ? r.dump() : name, e.what()));
    }
    auto it = expected.find(name);
    if (it == expected.end()) throw Error(ErrorKind::format, fmt::format("unknown tensor name '{}'", name));
    if (dtype != "f32") throw Error(ErrorKind::format, fmt::format("tensor {} has dtype {}, expected f32", name, dtype));
    if (shape != it->second.shape) {
      throw Error(ErrorKind::format, fmt::format("tensor {} has shape [{}], expected [{}]", name,
                                                 fmt::join(shape, ", "), fmt::join(it->second.shape, ", ")));
    }
    if (!loaded.insert(name).second) throw Error(ErrorKind::format, fmt::format("tensor {} listed twice", name));
    const std::size_t n = element_count(shape);
    if (offset > blob.size() || blob.size() - offset < 4 * n) {
      throw Error(ErrorKind::format, fmt::format("truncated blob: tensor {} needs bytes [{}, {}) but the blob has {}",
                                                 name, offset, offset + 4 * n, blob.size()));
    }
    float* dst = it->second.data;
    for (std::size_t k = 0; k < n; ++k) {
      std::uint32_t bits = 0;
      for (int byte = 0; byte < 4; ++byte) bits |= std::uint32_t{blob[offset + 4 * k + byte]} << (8 * byte);
      dst[k] = std::bit_cast<float>(bits);
    }
  }
  for (const auto& [name, t] : expected) {
    if (!loaded.count(name)) throw Error(ErrorKind::format, fmt::format("missing tensor {}", name));
  }
  return b;
}

void save_weights(const WeightBundle& bundle, const std::filesystem::path& manifest, const std::filesystem::path& blob) {
  const SerializedWeights s = serialize_weights(bundle);
  write_text_file(manifest, s.manifest);
  write_text_file(blob, std::string_view(reinterpret_cast<const char*>(s.blob.data()), s.blob.size()));
}

WeightBundle load_weights(const std::filesystem::path& manifest, const std::filesystem::path& blob) {
  const std::string text = read_text_file(manifest);
  const std::string bytes = read_text_file(blob);
  return deserialize_weights(text, std::span(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size()));
}

}  // namespace graingraph
