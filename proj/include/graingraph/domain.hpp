#pragma once

namespace graingraph {

/// Physical domain and process parameters of one simulation.
///
/// Lengths are in micrometres, g_z in K/um and r_z in m/s. The ref_* lengths are the
/// training-domain constants used to normalize features; a domain wider than the
/// reference yields normalized coordinates above 1.
struct DomainSpec {
  double lx = 40.0;
  double ly = 40.0;
  double lz = 50.0;
  double g_z = 1.0;
  double r_z = 1.0;
  double g_max = 10.0;
  double r_max = 2.0;
  double ref_lx = 40.0;
  double ref_ly = 40.0;
  double ref_lz = 50.0;

  /// Throws Error{config} on non-positive constants or out-of-bound process parameters.
  void check() const;

  double area() const { return lx * ly; }
  double ref_area() const { return ref_lx * ref_ly; }
};

}  // namespace graingraph
