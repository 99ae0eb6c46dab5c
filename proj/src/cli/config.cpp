#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

#include <fmt/format.h>
#include <json.hpp>
#include <openssl/evp.h>

#include "graingraph/cli.hpp"
#include "graingraph/error.hpp"
#include "graingraph/graph_io.hpp"
#include "graingraph/raster.hpp"
#include "graingraph/weights.hpp"

namespace graingraph::cli {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& msg) { throw Error(ErrorKind::config, "config: " + msg); }

void only_keys(const json& obj, const char* where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) bad(fmt::format("'{}' must be an object", where));
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : obj.items()) {
    if (!ok.count(key)) bad(fmt::format("unknown key '{}' in '{}'", key, where));
  }
}

template <typename T>
T get(const json& obj, const char* key, T fallback) {
  auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    bad(fmt::format("'{}': {}", key, e.what()));
  }
}

template <typename T>
T need(const json& obj, const char* key) {
  if (!obj.contains(key)) bad(fmt::format("missing key '{}'", key));
  return get<T>(obj, key, T{});
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

json domain_json(const DomainSpec& d) {
  return {{"lx", d.lx},       {"ly", d.ly},       {"lz", d.lz},         {"g_z", d.g_z},
          {"r_z", d.r_z},     {"g_max", d.g_max}, {"r_max", d.r_max},   {"ref_lx", d.ref_lx},
          {"ref_ly", d.ref_ly}, {"ref_lz", d.ref_lz}};
}

}  // namespace

RunConfig parse_config(std::string_view text, const fs::path& base) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    bad(fmt::format("not valid JSON: {}", e.what()));
  }
  only_keys(doc, "config",
            {"domain", "substrate", "predictor", "thresholds", "layers", "output", "resolution", "seed", "ensemble", "z0"});
  RunConfig c;

  if (doc.contains("domain")) {
    const json& d = doc["domain"];
    only_keys(d, "domain", {"lx", "ly", "lz", "g_z", "r_z", "g_max", "r_max", "ref_lx", "ref_ly", "ref_lz"});
    DomainSpec& s = c.domain;
    s.lx = get(d, "lx", s.lx);
    s.ly = get(d, "ly", s.ly);
    s.lz = get(d, "lz", s.lz);
    s.g_z = get(d, "g_z", s.g_z);
    s.r_z = get(d, "r_z", s.r_z);
    s.g_max = get(d, "g_max", s.g_max);
    s.r_max = get(d, "r_max", s.r_max);
    s.ref_lx = get(d, "ref_lx", s.ref_lx);
    s.ref_ly = get(d, "ref_ly", s.ref_ly);
    s.ref_lz = get(d, "ref_lz", s.ref_lz);
  }
  c.domain.check();

  c.seed = get<std::uint64_t>(doc, "seed", 0);
  c.z0 = get(doc, "z0", c.z0);
  if (!std::isfinite(c.z0) || c.z0 < 0.0 || c.z0 >= c.domain.lz) bad(fmt::format("z0 = {} outside [0, lz)", c.z0));
  c.output = resolve(base, get<std::string>(doc, "output", "out"));
  if (doc.contains("resolution")) {
    c.resolution = get<double>(doc, "resolution", 0.0);
    if (!(*c.resolution > 0.0)) bad("resolution must be positive");
  }
  c.ensemble = get(doc, "ensemble", 1);
  if (c.ensemble < 1) bad("ensemble must be at least 1");

  if (!doc.contains("substrate")) bad("missing 'substrate'");
  {
    const json& s = doc["substrate"];
    only_keys(s, "substrate", {"kind", "d0", "amplitude", "n_seeds", "orientation", "graph", "image"});
    const int sources = s.contains("kind") + s.contains("graph") + s.contains("image");
    if (sources != 1) bad("substrate needs exactly one of 'kind', 'graph', 'image'");
    if (s.contains("graph")) {
      c.substrate_graph = resolve(base, need<std::string>(s, "graph"));
    } else if (s.contains("image")) {
      c.substrate_image = resolve(base, need<std::string>(s, "image"));
    } else {
      SubstrateSpec spec;
      spec.domain = c.domain;
      const std::string kind = need<std::string>(s, "kind");
      if (kind == "hex") {
        HexPerturbed h;
        h.d0 = get(s, "d0", h.d0);
        h.amplitude = get(s, "amplitude", h.amplitude);
        spec.sampler = h;
      } else if (kind == "uniform") {
        spec.sampler = UniformSeeds{get<std::size_t>(s, "n_seeds", 100)};
      } else {
        bad(fmt::format("unknown substrate kind '{}'", kind));
      }
      if (s.contains("orientation")) {
        const json& o = s["orientation"];
        only_keys(o, "orientation", {"theta0_deg", "concentration"});
        PeakedOrientation p;
        p.theta0 = get(o, "theta0_deg", 0.0) * std::numbers::pi / 180.0;
        p.concentration = get(o, "concentration", p.concentration);
        spec.orientation_mode = p;
      }
      spec.check();
      c.generated = spec;
    }
  }

  if (doc.contains("predictor")) {
    const json& p = doc["predictor"];
    only_keys(p, "predictor", {"kind", "kappa", "c1", "c2", "c3", "regressor", "classifier"});
    const std::string kind = need<std::string>(p, "kind");
    if (kind == "identity") {
      c.predictor.kind = PredictorKind::identity;
    } else if (kind == "baseline") {
      c.predictor.kind = PredictorKind::baseline;
      BaselineParams& b = c.predictor.baseline;
      b.kappa = get(p, "kappa", b.kappa);
      b.c1 = get(p, "c1", b.c1);
      b.c2 = get(p, "c2", b.c2);
      b.c3 = get(p, "c3", b.c3);
    } else if (kind == "gnn") {
      c.predictor.kind = PredictorKind::gnn;
      for (const char* net : {"regressor", "classifier"}) {
        if (!p.contains(net)) bad(fmt::format("gnn predictor needs '{}'", net));
        only_keys(p[net], net, {"manifest", "blob"});
      }
      c.predictor.regressor_manifest = resolve(base, need<std::string>(p["regressor"], "manifest"));
      c.predictor.regressor_blob = resolve(base, need<std::string>(p["regressor"], "blob"));
      c.predictor.classifier_manifest = resolve(base, need<std::string>(p["classifier"], "manifest"));
      c.predictor.classifier_blob = resolve(base, need<std::string>(p["classifier"], "blob"));
    } else {
      bad(fmt::format("unknown predictor kind '{}'", kind));
    }
  }

  if (doc.contains("thresholds")) {
    const json& t = doc["thresholds"];
    only_keys(t, "thresholds", {"eps_e", "eps_g"});
    c.thresholds.eps_e = get(t, "eps_e", c.thresholds.eps_e);
    c.thresholds.eps_g = get(t, "eps_g", c.thresholds.eps_g);
  }
  c.thresholds.check();

  if (doc.contains("layers")) {
    const json& l = doc["layers"];
    only_keys(l, "layers", {"n_l", "dz", "table"});
    const bool explicit_plan = l.contains("n_l") || l.contains("dz");
    if (explicit_plan == l.contains("table")) bad("layers needs exactly one of ('n_l', 'dz') or 'table'");
    if (explicit_plan) {
      LayerPlan plan{need<double>(l, "dz"), need<int>(l, "n_l")};
      if (plan.n_l < 2) bad(fmt::format("n_l = {} but a rollout needs at least 2 layers", plan.n_l));
      if (!(plan.dz > 0.0)) bad(fmt::format("dz = {} must be positive", plan.dz));
      c.layers = plan;
    } else {
      c.elimination_table = resolve(base, need<std::string>(l, "table"));
    }
  } else {
    c.layers = LayerPlan{2.5, 20};
  }
  return c;
}

RunConfig read_config(const fs::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const Error& e) {
    throw Error(ErrorKind::config, e.what());
  }
  return parse_config(text, path.parent_path());
}

std::string RunConfig::canonical() const {
  json doc;
  doc["domain"] = domain_json(domain);
  json s;
  if (generated) {
    if (const auto* h = std::get_if<HexPerturbed>(&generated->sampler)) {
      s = {{"kind", "hex"}, {"d0", h->d0}, {"amplitude", h->amplitude}};
    } else {
      s = {{"kind", "uniform"}, {"n_seeds", std::get<UniformSeeds>(generated->sampler).n_seeds}};
    }
    if (generated->orientation_mode) {
      s["orientation"] = {{"theta0_deg", generated->orientation_mode->theta0 * 180.0 / std::numbers::pi},
                          {"concentration", generated->orientation_mode->concentration}};
    }
  } else if (substrate_graph) {
    s = {{"graph", substrate_graph->generic_string()}};
  } else if (substrate_image) {
    s = {{"image", substrate_image->generic_string()}};
  }
  doc["substrate"] = s;
  json p;
  switch (predictor.kind) {
    case PredictorKind::identity:
      p = {{"kind", "identity"}};
      break;
    case PredictorKind::baseline:
      p = {{"kind", "baseline"},
           {"kappa", predictor.baseline.kappa},
           {"c1", predictor.baseline.c1},
           {"c2", predictor.baseline.c2},
           {"c3", predictor.baseline.c3}};
      break;
    case PredictorKind::gnn:
      p = {{"kind", "gnn"},
           {"regressor",
            {{"manifest", predictor.regressor_manifest.generic_string()}, {"blob", predictor.regressor_blob.generic_string()}}},
           {"classifier",
            {{"manifest", predictor.classifier_manifest.generic_string()},
             {"blob", predictor.classifier_blob.generic_string()}}}};
      break;
  }
  doc["predictor"] = p;
  doc["thresholds"] = {{"eps_e", thresholds.eps_e}, {"eps_g", thresholds.eps_g}};
  if (layers) {
    doc["layers"] = {{"n_l", layers->n_l}, {"dz", layers->dz}};
  } else if (elimination_table) {
    doc["layers"] = {{"table", elimination_table->generic_string()}};
  }
  doc["seed"] = seed;
  doc["z0"] = z0;
  doc["ensemble"] = ensemble;
  if (resolution) doc["resolution"] = *resolution;
  return doc.dump();
}

std::string RunConfig::hash() const {
  const std::string text = canonical();
  return sha256_hex({reinterpret_cast<const unsigned char*>(text.data()), text.size()});
}

std::string sha256_hex(std::span<const unsigned char> bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorKind::numeric, "SHA-256 failed");
  }
  std::string hex;
  for (unsigned int k = 0; k < len; ++k) hex += fmt::format("{:02x}", digest[k]);
  return hex;
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::input, fmt::format("cannot read {}", path.string()));
  const std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return sha256_hex(bytes);
}

LayerPlan layer_plan(const RunConfig& config) {
  if (config.layers) return *config.layers;
  const auto table = parse_elimination_table(read_text_file(*config.elimination_table));
  const DomainSpec& d = config.domain;
  return delta_z_policy(d.g_z, d.r_z, table, d, d.lz - config.z0);
}

GrainGraph load_substrate(const RunConfig& config) {
  GrainGraph g;
  if (config.generated) {
    SubstrateSpec spec = *config.generated;
    spec.rng_seed = config.seed;
    g = generate_substrate(spec);
  } else if (config.substrate_graph) {
    g = read_graph_file(*config.substrate_graph);
  } else {
    g = image_to_graph(read_index_image(*config.substrate_image, config.domain)).graph;
  }
  if (!config.substrate_graph) g.set_layer(config.z0, 0.0);
  return g;
}

std::unique_ptr<Predictor> make_predictor(const RunConfig& config) {
  const PredictorConfig& p = config.predictor;
  switch (p.kind) {
    case PredictorKind::identity:
      return std::make_unique<IdentityPredictor>();
    case PredictorKind::baseline:
      return std::make_unique<BaselinePredictor>(p.baseline);
    case PredictorKind::gnn:
      return std::make_unique<GnnPredictor>(load_weights(p.regressor_manifest, p.regressor_blob),
                                            load_weights(p.classifier_manifest, p.classifier_blob));
  }
  return nullptr;
}

}  // namespace graingraph::cli
