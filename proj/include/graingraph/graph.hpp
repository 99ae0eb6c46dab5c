#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "graingraph/domain.hpp"
#include "graingraph/periodic.hpp"

namespace graingraph {

using GrainId = std::uint32_t;
using JunctionId = std::uint32_t;

/// Grain ids adjacent to a junction, sorted ascending.
using Triplet = std::array<GrainId, 3>;

Triplet make_triplet(GrainId a, GrainId b, GrainId c);

/// Number of common entries of two sorted triplets (multiset intersection).
int shared_count(const Triplet& a, const Triplet& b);

struct Grain {
  GrainId id = 0;
  Vec3 orientation{0.0, 0.0, 1.0};
  double theta_x = 0.0;
  double theta_z = 0.0;
  Vec2 centroid{};             // unit-period coordinates, cached
  double area = 0.0;           // fraction of the domain cross-section
  double excess_volume = 0.0;  // fraction of the domain volume
  double delta_area = 0.0;     // change of `area` since the previous layer
  std::vector<JunctionId> ring;  // sorted junction ids
};

struct Junction {
  JunctionId id = 0;
  Vec2 pos{};    // unit-period coordinates in [0, 1)
  Vec2 delta{};  // displacement since the previous layer, unit-period units
  Triplet triplet{};
  std::vector<JunctionId> links;  // junction-junction adjacency; may repeat transiently
};

/// Derived angles of a growth-direction vector: theta_z against the z axis (sign-agnostic),
/// theta_x of the in-plane projection against the x axis.
std::pair<double, double> orientation_angles(const Vec3& o);

/// Heterogeneous planar grain graph on a periodic rectangle.
///
/// Junction-grain edges are implicit in junction triplets and mirrored in each grain's ring.
/// Mutating primitives keep rings and link lists symmetric; structural invariants are
/// checked by validate().
class GrainGraph {
 public:
  GrainGraph() = default;
  explicit GrainGraph(DomainSpec domain, double z = 0.0, double dz = 0.0);

  const DomainSpec& domain() const { return domain_; }
  double z() const { return z_; }
  double dz() const { return dz_; }
  void set_layer(double z, double dz) {
    z_ = z;
    dz_ = dz;
  }

  const std::map<GrainId, Grain>& grains() const { return grains_; }
  const std::map<JunctionId, Junction>& junctions() const { return junctions_; }

  bool has_grain(GrainId id) const { return grains_.count(id) != 0; }
  bool has_junction(JunctionId id) const { return junctions_.count(id) != 0; }

  /// Throws Error{lookup} for unknown ids.
  const Grain& grain(GrainId id) const;
  Grain& grain(GrainId id);
  const Junction& junction(JunctionId id) const;
  Junction& junction(JunctionId id);

  Grain& add_grain(GrainId id, Vec3 orientation, double area, double excess_volume = 0.0);
  /// Adds a junction with a freshly allocated id and registers it in the triplet's rings.
  JunctionId add_junction(Vec2 pos, const Triplet& triplet, Vec2 delta = {});
  /// Adds a junction with an explicit id (deserialization); bumps the id allocator.
  void insert_junction(JunctionId id, Vec2 pos, const Triplet& triplet, Vec2 delta = {});

  /// Removes a junction, its ring entries, and every link that refers to it.
  void erase_junction(JunctionId id);
  /// Removes a grain vertex only; junctions referencing it are left for the caller.
  void erase_grain(GrainId id);

  void link(JunctionId a, JunctionId b);
  /// Removes one occurrence of the link a-b from both sides.
  void unlink(JunctionId a, JunctionId b);
  /// Replaces one occurrence of `from` in the link list of `at` with `to` (one-sided).
  void relink(JunctionId at, JunctionId from, JunctionId to);
  bool linked(JunctionId a, JunctionId b) const;

  std::size_t grain_count() const { return grains_.size(); }
  std::size_t junction_count() const { return junctions_.size(); }
  /// Junction-junction edges counted with multiplicity.
  std::size_t edge_count() const;
  /// Distinct unordered junction-junction pairs.
  std::size_t distinct_edge_count() const;
  /// Junction-grain incidences, one per triplet slot.
  std::size_t jg_edge_count() const;

  /// Distinct junction-junction edges as (lower id, higher id), sorted.
  std::vector<std::pair<JunctionId, JunctionId>> edges() const;

  JunctionId next_junction_id() const { return next_junction_id_; }
  /// Raises the id allocator so ids already handed out are never reused.
  void reserve_junction_ids(JunctionId next) { next_junction_id_ = std::max(next_junction_id_, next); }

  /// Physical separation of two unit-period points under the minimum-image rule (um).
  Vec2 physical_delta(Vec2 from, Vec2 to) const;
  double physical_distance(Vec2 a, Vec2 b) const;
  double edge_length(JunctionId a, JunctionId b) const;

  /// Periodic mean of the grain's ring junctions, unwrapped around the first ring entry.
  Vec2 ring_mean(GrainId id) const;
  void refresh_centroids();

  /// Junctions of `g` whose triplets also contain `other` (boundary endpoints), ascending.
  std::vector<JunctionId> boundary_junctions(GrainId g, GrainId other) const;
  /// Distinct grains sharing a junction with `g`, ascending.
  std::vector<GrainId> neighbor_grains(GrainId g) const;

 private:
  DomainSpec domain_{};
  double z_ = 0.0;
  double dz_ = 0.0;
  std::map<GrainId, Grain> grains_;
  std::map<JunctionId, Junction> junctions_;
  JunctionId next_junction_id_ = 1;
};

// ---------------------------------------------------------------------------
// Validation

enum class IssueKind {
  sub_minimal,           // note: fewer than 3 grains
  bad_orientation,
  negative_area,
  position_out_of_range,
  bad_triplet,           // repeated or unknown grain ids
  link_degree,           // junction without exactly 3 links
  dangling_link,
  self_link,
  duplicate_edge,
  asymmetric_link,
  triplet_intersection,  // e_jj endpoints do not share exactly 2 grains
  boundary_pairs,        // a junction's links do not cover its 3 grain pairs
  ring_mismatch,
  ring_size,             // grain with fewer than 3 junctions
  euler_count,
};

const char* to_string(IssueKind kind) noexcept;

struct Issue {
  IssueKind kind;
  std::vector<std::uint64_t> ids;
  std::string message;
};

struct ValidationReport {
  std::vector<Issue> violations;
  std::vector<Issue> notes;

  bool ok() const { return violations.empty(); }
  bool has(IssueKind kind) const;
  bool cites(IssueKind kind, std::uint64_t id) const;
  std::string summary() const;
};

/// Checks every structural invariant and reports each violation with offending ids.
/// Graphs with fewer than 3 grains are reported as a sub-minimal note and skip the
/// triplet and Euler checks, which cannot hold for them; their parallel edges are notes.
ValidationReport validate(const GrainGraph& graph);

// ---------------------------------------------------------------------------
// Neighborhoods

enum class VertexKind { junction, grain };

struct VertexRef {
  VertexKind kind;
  std::uint32_t id;
};

struct NeighborSet {
  std::vector<GrainId> grains;
  std::vector<JunctionId> junctions;
};

/// N_j for a junction (3 grains, 3 junctions) or N_g for a grain (its junction ring).
NeighborSet neighbors(const GrainGraph& graph, VertexRef vertex);

}  // namespace graingraph
