#include "graingraph/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "graingraph/error.hpp"
#include "graingraph/kernels.hpp"

namespace graingraph {

using nlohmann::json;

namespace {

constexpr double kDegrees = 180.0 / std::numbers::pi;
constexpr double kProbFloor = 1e-12;

bool masked(std::span<const std::uint8_t> mask, std::size_t k) { return !mask.empty() && mask[k] != 0; }

void check_mask(std::span<const std::uint8_t> mask, std::size_t n, const char* what) {
  if (!mask.empty() && mask.size() != n) {
    throw Error(ErrorKind::input, fmt::format("{} mask has {} entries for {} rows", what, mask.size(), n));
  }
}

void check_labels(std::span<const std::uint8_t> labels) {
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (labels[k] > 1) throw Error(ErrorKind::input, fmt::format("label {} is {}, expected 0 or 1", k, labels[k]));
  }
}

std::vector<double> sorted_sample(std::span<const double> x, const char* name) {
  if (x.empty()) throw Error(ErrorKind::input, fmt::format("sample {} is empty", name));
  std::vector<double> s(x.begin(), x.end());
  for (double v : s) {
    if (std::isnan(v)) throw Error(ErrorKind::input, fmt::format("sample {} contains NaN", name));
  }
  std::sort(s.begin(), s.end());
  return s;
}

}  // namespace

double equivalent_diameter(double volume) { return std::cbrt(6.0 * volume / std::numbers::pi); }

QoIReport qoi_from_trajectory(const Trajectory& traj, QoIOptions options) {
  if (traj.layers.size() < 2) {
    throw Error(ErrorKind::input, fmt::format("trajectory has {} layers; QoIs need at least 2", traj.layers.size()));
  }
  const std::size_t n_l = traj.layers.size();
  const DomainSpec& dom = traj.layers.front().domain();
  const double domain_volume = dom.area() * dom.lz;

  std::map<GrainId, double> area_sum;
  std::map<GrainId, double> theta;
  QoIReport r;
  std::size_t eliminated = 0;
  for (std::size_t l = 0; l < n_l; ++l) {
    const GrainGraph& g = traj.layers[l];
    for (const auto& [id, gr] : g.grains()) {
      area_sum[id] += gr.area * g.domain().area();
      theta.try_emplace(id, gr.theta_z * kDegrees);
    }
    if (l > 0 && l - 1 < traj.events.size()) {
      for (const EventRecord& e : traj.events[l - 1]) eliminated += e.kind != EventKind::flip;
    }
    double weighted = 0.0;
    double total = 0.0;
    for (const auto& [id, a] : area_sum) {
      weighted += traj.dz * a * theta[id];
      total += traj.dz * a;
    }
    r.z.push_back(g.z());
    r.eliminated.push_back(eliminated);
    r.misorientation.push_back(total > 0.0 ? weighted / total : 0.0);
  }

  const GrainGraph& last = traj.layers.back();
  for (const auto& [id, a] : area_sum) {
    const bool alive = last.has_grain(id);
    const double v = traj.dz * a + (alive ? last.grain(id).excess_volume * domain_volume : 0.0);
    r.grain_ids.push_back(id);
    r.volume.push_back(v);
    r.diameter.push_back(equivalent_diameter(v));
    r.survived.push_back(alive ? 1 : 0);
    if (alive || !options.survivors_only) r.size_sample.push_back(r.diameter.back());
  }
  std::sort(r.size_sample.begin(), r.size_sample.end());
  const double n = static_cast<double>(r.size_sample.size());
  for (std::size_t k = 0; k < r.size_sample.size(); ++k) {
    // right-continuous: ties take the height of their last member
    std::size_t end = k + 1;
    while (end < r.size_sample.size() && r.size_sample[end] == r.size_sample[k]) ++end;
    r.size_cdf.push_back(static_cast<double>(end) / n);
  }
  return r;
}

double misclassification_rate(const IndexImage& a, const IndexImage& b) {
  if (a.width != b.width || a.height != b.height) {
    throw Error(ErrorKind::input,
                fmt::format("image sizes differ: {}x{} and {}x{}", a.width, a.height, b.width, b.height));
  }
  if (a.data.empty()) throw Error(ErrorKind::input, "images are empty");
  return static_cast<double>(kernels::count_mismatches(a.data.data(), b.data.data(), a.data.size())) /
         static_cast<double>(a.data.size());
}

double ks_statistic(std::span<const double> a_in, std::span<const double> b_in) {
  const std::vector<double> a = sorted_sample(a_in, "a");
  const std::vector<double> b = sorted_sample(b_in, "b");
  const double m = static_cast<double>(a.size());
  const double n = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() || j < b.size()) {
    const double t = (j >= b.size() || (i < a.size() && a[i] <= b[j])) ? a[i] : b[j];
    while (i < a.size() && a[i] <= t) ++i;
    while (j < b.size() && b[j] <= t) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / m - static_cast<double>(j) / n));
  }
  return d;
}

double ks_critical(double alpha, std::size_t m, std::size_t n) {
  if (!(alpha > 0.0 && alpha < 2.0)) throw Error(ErrorKind::input, fmt::format("alpha = {} is not in (0, 2)", alpha));
  if (m == 0 || n == 0) throw Error(ErrorKind::input, "KS critical value needs non-empty samples");
  const double dn = static_cast<double>(n);
  return std::sqrt(-std::log(alpha / 2.0) * (1.0 + dn / static_cast<double>(m)) / (2.0 * dn));
}

double rrmse(std::span<const double> truth, std::span<const double> pred) {
  if (truth.size() != pred.size()) {
    throw Error(ErrorKind::input, fmt::format("rrmse: {} truth values, {} predictions", truth.size(), pred.size()));
  }
  double num = 0.0;
  double den = 0.0;
  for (std::size_t k = 0; k < truth.size(); ++k) {
    num += (truth[k] - pred[k]) * (truth[k] - pred[k]);
    den += truth[k] * truth[k];
  }
  if (!(den > 0.0)) throw Error(ErrorKind::numeric, "rrmse: truth is identically zero");
  return 100.0 * std::sqrt(num / den);
}

PrCurve pr_curve(std::span<const std::uint8_t> labels, std::span<const double> scores) {
  if (labels.size() != scores.size()) {
    throw Error(ErrorKind::input, fmt::format("pr_curve: {} labels, {} scores", labels.size(), scores.size()));
  }
  check_labels(labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (double s : scores) {
    if (std::isnan(s)) throw Error(ErrorKind::input, "pr_curve: NaN score");
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return scores[x] > scores[y]; });
  const std::size_t positives = std::count(labels.begin(), labels.end(), std::uint8_t{1});

  PrCurve c;
  c.degenerate = positives == 0;
  std::size_t tp = 0, fp = 0;
  for (std::size_t k = 0; k < order.size();) {
    const double t = scores[order[k]];
    for (; k < order.size() && scores[order[k]] == t; ++k) (labels[order[k]] ? tp : fp) += 1;
    c.thresholds.push_back(t);
    c.precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    c.recall.push_back(positives ? static_cast<double>(tp) / static_cast<double>(positives) : 0.0);
  }
  return c;
}

double pr_auc(const PrCurve& curve) {
  double area = 0.0;
  double r0 = 0.0, p0 = 1.0;
  for (std::size_t k = 0; k < curve.recall.size(); ++k) {
    area += (curve.recall[k] - r0) * (curve.precision[k] + p0) / 2.0;
    r0 = curve.recall[k];
    p0 = curve.precision[k];
  }
  return area;
}

double f1_at(std::span<const std::uint8_t> labels, std::span<const double> scores, double threshold) {
  if (labels.size() != scores.size()) {
    throw Error(ErrorKind::input, fmt::format("f1_at: {} labels, {} scores", labels.size(), scores.size()));
  }
  check_labels(labels);
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    const bool predicted = scores[k] > threshold;
    if (predicted && labels[k]) ++tp;
    if (predicted && !labels[k]) ++fp;
    if (!predicted && labels[k]) ++fn;
  }
  const double precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  const double recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

LossValue l2_loss(const DeltaF& truth, const DeltaF& pred, std::span<const std::uint8_t> junction_mask,
                  std::span<const std::uint8_t> grain_mask) {
  if (truth.junction_ids != pred.junction_ids || truth.grain_ids != pred.grain_ids ||
      pred.dx.size() != pred.junction_ids.size() || pred.dy.size() != pred.junction_ids.size() ||
      pred.ds.size() != pred.grain_ids.size() || pred.v.size() != pred.grain_ids.size() ||
      truth.dx.size() != truth.junction_ids.size() || truth.dy.size() != truth.junction_ids.size() ||
      truth.ds.size() != truth.grain_ids.size() || truth.v.size() != truth.grain_ids.size()) {
    throw Error(ErrorKind::input, "l2_loss: truth and prediction rows differ");
  }
  check_mask(junction_mask, truth.junction_ids.size(), "junction");
  check_mask(grain_mask, truth.grain_ids.size(), "grain");
  double sj = 0.0, sg = 0.0;
  std::size_t nj = 0, ng = 0;
  for (std::size_t k = 0; k < truth.junction_ids.size(); ++k) {
    if (masked(junction_mask, k)) continue;
    sj += (truth.dx[k] - pred.dx[k]) * (truth.dx[k] - pred.dx[k]) + (truth.dy[k] - pred.dy[k]) * (truth.dy[k] - pred.dy[k]);
    ++nj;
  }
  for (std::size_t k = 0; k < truth.grain_ids.size(); ++k) {
    if (masked(grain_mask, k)) continue;
    sg += (truth.ds[k] - pred.ds[k]) * (truth.ds[k] - pred.ds[k]) + (truth.v[k] - pred.v[k]) * (truth.v[k] - pred.v[k]);
    ++ng;
  }
  LossValue out;
  out.empty = nj == 0 && ng == 0;
  out.value = (nj ? sj / static_cast<double>(nj) : 0.0) + (ng ? sg / static_cast<double>(ng) : 0.0);
  return out;
}

LossValue bce_loss(std::span<const std::uint8_t> labels, std::span<const double> p, std::span<const std::uint8_t> mask) {
  if (labels.size() != p.size()) {
    throw Error(ErrorKind::input, fmt::format("bce_loss: {} labels, {} probabilities", labels.size(), p.size()));
  }
  check_labels(labels);
  check_mask(mask, labels.size(), "edge");
  LossValue out;
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (masked(mask, k)) continue;
    if (std::isnan(p[k])) throw Error(ErrorKind::input, fmt::format("bce_loss: probability {} is NaN", k));
    const double q = std::clamp(p[k], kProbFloor, 1.0 - kProbFloor);
    out.clamped += q != p[k];
    sum += labels[k] ? -std::log(q) : -std::log(1.0 - q);
    ++n;
  }
  out.empty = n == 0;
  out.value = n ? sum / static_cast<double>(n) : 0.0;
  return out;
}

std::string report_json(const QoIReport& report, const std::optional<Comparison>& comparison) {
  json j;
  j["grains"] = {{"id", report.grain_ids},
                 {"volume_um3", report.volume},
                 {"diameter_um", report.diameter},
                 {"survived", report.survived}};
  j["curves"] = {{"z", report.z}, {"eliminated", report.eliminated}, {"misorientation_deg", report.misorientation}};
  j["size_cdf"] = {{"diameter_um", report.size_sample}, {"cdf", report.size_cdf}};
  if (comparison) {
    json c;
    c["mr"] = comparison->mr;
    if (comparison->ks) c["ks"] = *comparison->ks;
    if (comparison->ks_critical) c["ks_critical"] = *comparison->ks_critical;
    for (const auto& [k, v] : comparison->scalars) c[k] = v;
    j["comparison"] = std::move(c);
  }
  return j.dump(2) + "\n";
}

std::string curves_csv(const QoIReport& report) {
  std::ostringstream out;
  out << "z,eliminated,misorientation_deg\n";
  for (std::size_t l = 0; l < report.z.size(); ++l) {
    out << fmt::format("{},{},{}\n", report.z[l], report.eliminated[l], report.misorientation[l]);
  }
  return out.str();
}

}  // namespace graingraph
