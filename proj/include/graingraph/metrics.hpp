#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "graingraph/evolution.hpp"
#include "graingraph/features.hpp"
#include "graingraph/raster.hpp"

namespace graingraph {

struct QoIOptions {
  /// Size sample for the CDF (and KS comparisons): grains of the final layer only, or every
  /// grain of the trajectory.
  bool survivors_only = true;
};

struct QoIReport {
  /// Every grain that appears in the trajectory, ascending.
  std::vector<GrainId> grain_ids;
  std::vector<double> volume;  // um^3
  std::vector<double> diameter;  // um
  std::vector<std::uint8_t> survived;

  std::vector<double> z;
  /// Cumulative eliminations (removals and sweeps) when the interface reaches z[l].
  std::vector<std::size_t> eliminated;
  /// Volume-weighted theta_z in degrees, weights = solid volume below z[l].
  std::vector<double> misorientation;

  /// Sorted size sample and its right-continuous empirical CDF.
  std::vector<double> size_sample;
  std::vector<double> size_cdf;
};

/// Grain volume is dz * sum of its cross-section areas over the layers where it exists, plus
/// the final excess volume for survivors. Throws Error{input} for fewer than two layers.
QoIReport qoi_from_trajectory(const Trajectory& traj, QoIOptions options = {});

/// d = (6 V / pi)^(1/3)
double equivalent_diameter(double volume);

/// Fraction of pixels whose index differs. Throws Error{input} on a size mismatch.
double misclassification_rate(const IndexImage& a, const IndexImage& b);

/// sup |F_a - F_b| over the pooled sample points. Throws Error{input} on an empty sample.
double ks_statistic(std::span<const double> a, std::span<const double> b);

/// Rejection threshold sqrt(-ln(alpha / 2) (1 + n / m) / (2 n)) for samples of sizes m and n.
double ks_critical(double alpha, std::size_t m, std::size_t n);

/// 100 sqrt(sum (x - x~)^2 / sum x^2). Throws Error{numeric} when every truth value is 0.
double rrmse(std::span<const double> truth, std::span<const double> pred);

struct PrCurve {
  /// Descending distinct scores; point k predicts positive for score >= thresholds[k].
  std::vector<double> thresholds;
  std::vector<double> precision;
  std::vector<double> recall;
  /// No positive labels: recall is undefined and reported as 0.
  bool degenerate = false;
};

PrCurve pr_curve(std::span<const std::uint8_t> labels, std::span<const double> scores);
/// Trapezoid over recall, starting from (recall 0, precision 1).
double pr_auc(const PrCurve& curve);
/// F1 when scores strictly above `threshold` are predicted positive.
double f1_at(std::span<const std::uint8_t> labels, std::span<const double> scores, double threshold);

struct LossValue {
  double value = 0.0;
  /// Probabilities moved into [1e-12, 1 - 1e-12].
  std::size_t clamped = 0;
  /// Every entry was masked; value is 0.
  bool empty = false;
};

/// Mean squared displacement error over unmasked junctions plus mean squared (ds, v) error over
/// unmasked grains. Masks hold 1 for excluded rows; an empty mask excludes nothing.
LossValue l2_loss(const DeltaF& truth, const DeltaF& pred, std::span<const std::uint8_t> junction_mask = {},
                  std::span<const std::uint8_t> grain_mask = {});

/// Mean binary cross-entropy over unmasked edges.
LossValue bce_loss(std::span<const std::uint8_t> labels, std::span<const double> p,
                   std::span<const std::uint8_t> mask = {});

struct Comparison {
  std::vector<double> mr;
  std::optional<double> ks;
  std::optional<double> ks_critical;
  std::map<std::string, double> scalars;
};

/// Structured report document; `comparison` adds the reference block.
std::string report_json(const QoIReport& report, const std::optional<Comparison>& comparison = std::nullopt);
/// Columns z, eliminated, misorientation.
std::string curves_csv(const QoIReport& report);

}  // namespace graingraph
