#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "graingraph/graph.hpp"

namespace graingraph {

inline constexpr int kGraphFormatVersion = 1;

/// JSON document: format_version, domain block (with layer height z_l and dz), grains,
/// junctions and e_jj pairs. Junction-grain edges are implied by the triplets.
std::string serialize_graph(const GrainGraph& graph);

/// Throws Error{format} on malformed documents. Centroids are recomputed.
GrainGraph parse_graph(std::string_view text);

void write_graph_file(const GrainGraph& graph, const std::filesystem::path& path);
GrainGraph read_graph_file(const std::filesystem::path& path);

/// Whole-file helpers shared by the binary and text readers.
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace graingraph
