#include "graingraph/graph_io.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "graingraph/error.hpp"

namespace graingraph {

using nlohmann::json;

std::string serialize_graph(const GrainGraph& graph) {
  const DomainSpec& d = graph.domain();
  json doc;
  doc["format_version"] = kGraphFormatVersion;
  doc["domain"] = {{"lx", d.lx},         {"ly", d.ly},         {"lz", d.lz},         {"g_z", d.g_z},
                   {"r_z", d.r_z},       {"g_max", d.g_max},   {"r_max", d.r_max},   {"ref_lx", d.ref_lx},
                   {"ref_ly", d.ref_ly}, {"ref_lz", d.ref_lz}, {"z_l", graph.z()},   {"dz", graph.dz()}};
  doc["next_junction_id"] = graph.next_junction_id();

  json grains = json::array();
  for (const auto& [id, g] : graph.grains()) {
    grains.push_back({{"id", id},
                      {"orientation", {g.orientation.x, g.orientation.y, g.orientation.z}},
                      {"area", g.area},
                      {"excess_volume", g.excess_volume},
                      {"delta_area", g.delta_area}});
  }
  doc["grains"] = std::move(grains);

  json junctions = json::array();
  json ejj = json::array();
  for (const auto& [id, j] : graph.junctions()) {
    junctions.push_back({{"id", id},
                         {"x", j.pos.x},
                         {"y", j.pos.y},
                         {"dx", j.delta.x},
                         {"dy", j.delta.y},
                         {"triplet", {j.triplet[0], j.triplet[1], j.triplet[2]}}});
    for (JunctionId other : j.links) {
      if (id < other) ejj.push_back({id, other});
    }
  }
  doc["junctions"] = std::move(junctions);
  doc["e_jj"] = std::move(ejj);
  return doc.dump() + "\n";
}

namespace {

template <typename T>
T field(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw Error(ErrorKind::format, fmt::format("graph document: missing field '{}'", key));
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::format, fmt::format("graph document: field '{}': {}", key, e.what()));
  }
}

template <typename T>
T field_or(const json& obj, const char* key, T fallback) {
  return obj.contains(key) ? field<T>(obj, key) : fallback;
}

}  // namespace

GrainGraph parse_graph(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::format, fmt::format("graph document is not valid JSON: {}", e.what()));
  }
  if (!doc.is_object()) throw Error(ErrorKind::format, "graph document must be a JSON object");
  const int version = field<int>(doc, "format_version");
  if (version != kGraphFormatVersion) {
    throw Error(ErrorKind::format, fmt::format("unsupported graph format version {}", version));
  }
  const json dom = field<json>(doc, "domain");
  DomainSpec d;
  d.lx = field<double>(dom, "lx");
  d.ly = field<double>(dom, "ly");
  d.lz = field<double>(dom, "lz");
  d.g_z = field<double>(dom, "g_z");
  d.r_z = field<double>(dom, "r_z");
  d.g_max = field<double>(dom, "g_max");
  d.r_max = field<double>(dom, "r_max");
  d.ref_lx = field_or<double>(dom, "ref_lx", d.ref_lx);
  d.ref_ly = field_or<double>(dom, "ref_ly", d.ref_ly);
  d.ref_lz = field_or<double>(dom, "ref_lz", d.ref_lz);
  d.check();
  GrainGraph graph(d, field<double>(dom, "z_l"), field_or<double>(dom, "dz", 0.0));

  for (const json& g : field<json>(doc, "grains")) {
    const auto o = field<std::vector<double>>(g, "orientation");
    if (o.size() != 3) throw Error(ErrorKind::format, "grain orientation must have 3 components");
    Grain& grain = graph.add_grain(field<GrainId>(g, "id"), {o[0], o[1], o[2]}, field<double>(g, "area"),
                                   field<double>(g, "excess_volume"));
    grain.delta_area = field_or<double>(g, "delta_area", 0.0);
  }
  for (const json& j : field<json>(doc, "junctions")) {
    const auto t = field<std::vector<GrainId>>(j, "triplet");
    if (t.size() != 3) throw Error(ErrorKind::format, "junction triplet must have 3 entries");
    graph.insert_junction(field<JunctionId>(j, "id"), {field<double>(j, "x"), field<double>(j, "y")},
                          make_triplet(t[0], t[1], t[2]), {field<double>(j, "dx"), field<double>(j, "dy")});
  }
  for (const json& e : field<json>(doc, "e_jj")) {
    if (!e.is_array() || e.size() != 2) throw Error(ErrorKind::format, "e_jj entries must be id pairs");
    if (!e[0].is_number_unsigned() || !e[1].is_number_unsigned()) {
      throw Error(ErrorKind::format, "e_jj entries must be non-negative integers");
    }
    const auto a = e[0].get<JunctionId>();
    const auto b = e[1].get<JunctionId>();
    if (!graph.has_junction(a) || !graph.has_junction(b)) {
      throw Error(ErrorKind::format, fmt::format("e_jj pair ({}, {}) references an unknown junction", a, b));
    }
    graph.link(a, b);
  }
  graph.reserve_junction_ids(field_or<JunctionId>(doc, "next_junction_id", 0));
  graph.refresh_centroids();
  return graph;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::input, fmt::format("cannot open {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::input, fmt::format("cannot write {}", path.string()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error(ErrorKind::input, fmt::format("short write to {}", path.string()));
}

void write_graph_file(const GrainGraph& graph, const std::filesystem::path& path) {
  write_text_file(path, serialize_graph(graph));
}

GrainGraph read_graph_file(const std::filesystem::path& path) { return parse_graph(read_text_file(path)); }

}  // namespace graingraph
