#pragma once

#include <functional>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "graingraph/features.hpp"
#include "graingraph/graph.hpp"

namespace graingraph {

/// One applied edge flip. g3, g4 are the grains that lose the boundary, g1, g2 the grains
/// that gain it; j1' = {g1, g2, g3} and j2' = {g1, g2, g4}.
struct EdgeFlip {
  JunctionId j1 = 0;
  JunctionId j2 = 0;
  GrainId g1 = 0;
  GrainId g2 = 0;
  GrainId g3 = 0;
  GrainId g4 = 0;
  JunctionId new_j1 = 0;
  JunctionId new_j2 = 0;
};

/// Flips the e_jj edge (j1, j2). Both new junctions sit at the periodic midpoint with zero delta.
///
/// A losing grain with three junctions is refused (Error{topology}) unless it is
/// `eliminating`, the grain whose elimination cascade requested the flip.
EdgeFlip apply_edge_flip(GrainGraph& graph, JunctionId j1, JunctionId j2,
                         std::optional<GrainId> eliminating = std::nullopt);

/// Like apply_edge_flip, but either losing grain may drop from three junctions to two; the
/// resulting two-sided grain is left for a later removal.
EdgeFlip flip_allowing_two_sided(GrainGraph& graph, JunctionId j1, JunctionId j2);

struct GrainRemoval {
  GrainId grain = 0;
  JunctionId removed[2] = {0, 0};
  /// External junctions joined by the bridging edge.
  JunctionId bridge[2] = {0, 0};
};

/// Removes a two-sided grain, its two junctions and their edges, and bridges the two
/// outer junctions. Throws Error{topology} if the grain does not have exactly two junctions.
GrainRemoval remove_grain(GrainGraph& graph, GrainId g);

/// Distinct e_jj edges on the boundary of `g` that a cascade may flip: both endpoints in the
/// ring of `g`, keyed by the neighbour grain across the boundary.
struct BoundaryEdge {
  JunctionId a = 0;
  JunctionId b = 0;
  GrainId neighbor = 0;
};
std::vector<BoundaryEdge> spoke_edges(const GrainGraph& graph, GrainId g);

struct Elimination {
  GrainId grain = 0;
  std::vector<EdgeFlip> flips;
  GrainRemoval removal;
};

/// Sort key of a neighbour grain in an elimination cascade; lower keys are flipped first.
using NeighborRank = std::function<double(GrainId)>;

/// One operation of a cascade in the order it was applied. `grain` is the grain being
/// eliminated; `neighbor` the grain across a flipped boundary (0 for the removal).
struct CascadeStep {
  GrainId grain = 0;
  GrainId neighbor = 0;
  std::optional<EdgeFlip> flip;
  std::optional<GrainRemoval> removal;
};

/// Eliminates `g`: repeatedly flips its boundary with the lowest-ranked neighbour (ties by
/// grain id) until two junctions remain, then removes it, for |N_g| - 2 flips. A neighbour
/// that a flip would leave with two junctions is eliminated first. Completed eliminations
/// are appended to `out`, innermost first.
void eliminate_grain(GrainGraph& graph, GrainId g, const NeighborRank& rank, std::vector<Elimination>& out,
                     std::vector<CascadeStep>* realized = nullptr);

struct MatchResult {
  /// earlier-layer junction id -> later-layer junction id, by identical triplet
  std::vector<std::pair<JunctionId, JunctionId>> junctions;
  std::vector<GrainId> grains;
  DeltaF delta;
  std::vector<std::pair<JunctionId, JunctionId>> edge_events;
  std::vector<GrainId> eliminated;
  /// Aligned with delta.junction_ids; 1 = excluded from training.
  std::vector<std::uint8_t> junction_mask;
  /// Aligned with edges() of the earlier graph.
  std::vector<std::pair<JunctionId, JunctionId>> edges;
  std::vector<std::uint8_t> edge_label;
  std::vector<std::uint8_t> edge_mask;

  double masked_fraction() const;
};

/// Matches consecutive layers by junction triplet and grain id and detects the events between
/// them. Junctions of an edge event take the displacement to their flip successor.
/// Throws Error{input} when the graphs share no grain id.
MatchResult match_graphs(const GrainGraph& prev, const GrainGraph& next);

/// One line of the training-pair archive (no trailing newline).
std::string training_record(const GrainGraph& prev, const GrainGraph& next, const MatchResult& match);

struct EliminationSample {
  double g_z = 0.0;
  double r_z = 0.0;
  /// n_G(L_z) / n_g^0 observed at this grid point
  double fraction = 0.0;
};

struct LayerPlan {
  double dz = 0.0;
  int n_l = 0;
};

inline constexpr double kEliminationPerUpdate = 0.03;

/// Layer count so that each update eliminates about 3% of the grains, from the nearest table
/// entry in (G/G_max, R/R_max). Throws Error{config} for an empty table.
LayerPlan delta_z_policy(double g_z, double r_z, const std::vector<EliminationSample>& table, const DomainSpec& d,
                         double l_z);

/// JSON array of {"g_z", "r_z", "fraction"} objects.
std::vector<EliminationSample> parse_elimination_table(std::string_view text);

}  // namespace graingraph
