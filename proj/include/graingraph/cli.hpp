#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "graingraph/evolution.hpp"
#include "graingraph/substrate.hpp"
#include "graingraph/topology.hpp"

namespace graingraph::cli {

namespace fs = std::filesystem;

enum class PredictorKind { identity, baseline, gnn };

struct PredictorConfig {
  PredictorKind kind = PredictorKind::baseline;
  BaselineParams baseline;
  fs::path regressor_manifest, regressor_blob;
  fs::path classifier_manifest, classifier_blob;
};

struct RunConfig {
  DomainSpec domain;
  /// Exactly one substrate source.
  std::optional<SubstrateSpec> generated;
  std::optional<fs::path> substrate_graph;
  std::optional<fs::path> substrate_image;
  double z0 = 2.0;

  PredictorConfig predictor;
  Thresholds thresholds;

  /// Exactly one layer source: explicit (n_l, dz) or an elimination table.
  std::optional<LayerPlan> layers;
  std::optional<fs::path> elimination_table;

  fs::path output = "out";
  std::optional<double> resolution;
  std::uint64_t seed = 0;
  int ensemble = 1;

  /// Canonical document of the effective configuration (after overrides).
  std::string canonical() const;
  std::string hash() const;
};

/// Parses a JSON run configuration; relative paths resolve against `base`.
/// Throws Error{config} on unknown keys, missing sources or conflicting sources.
RunConfig parse_config(std::string_view text, const fs::path& base = {});
RunConfig read_config(const fs::path& path);

std::string sha256_hex(std::span<const unsigned char> bytes);
std::string sha256_file(const fs::path& path);

/// Resolved layer plan: explicit, or the elimination-table policy over lz - z0.
LayerPlan layer_plan(const RunConfig& config);
GrainGraph load_substrate(const RunConfig& config);
std::unique_ptr<Predictor> make_predictor(const RunConfig& config);

/// layer_%04d.graph files, events.log (JSON lines) and a provenance document.
void write_trajectory(const Trajectory& traj, const fs::path& dir);
/// Reads consecutive layer files starting at layer_0000.graph and the event log.
Trajectory read_trajectory(const fs::path& dir);

std::string layer_name(std::size_t layer, std::string_view ext);

/// Entry point of the `graingraph` executable; returns the process exit code.
int run(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace graingraph::cli
