#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "graingraph/error.hpp"
#include "graingraph/metrics.hpp"
#include "oracles/fixtures.hpp"

using namespace graingraph;

namespace {

/// sup over every pooled point of |F_a - F_b| with F counting values <= t.
double ks_brute(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> pts = a;
  pts.insert(pts.end(), b.begin(), b.end());
  double d = 0.0;
  for (double t : pts) {
    const double fa = static_cast<double>(std::count_if(a.begin(), a.end(), [&](double x) { return x <= t; })) / a.size();
    const double fb = static_cast<double>(std::count_if(b.begin(), b.end(), [&](double x) { return x <= t; })) / b.size();
    d = std::max(d, std::abs(fa - fb));
  }
  return d;
}

Trajectory constant_trajectory(std::size_t n_l, double dz) {
  GrainGraph g = fixture::uniform_voronoi(30, 2).graph;
  Trajectory t;
  t.dz = dz;
  for (std::size_t l = 0; l < n_l; ++l) {
    g.set_layer(2.0 + dz * static_cast<double>(l), dz);
    t.layers.push_back(g);
    if (l > 0) t.events.emplace_back();
  }
  return t;
}

}  // namespace

TEST_CASE("volume-equivalent diameter") {
  CHECK(equivalent_diameter(std::numbers::pi / 6.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(equivalent_diameter(0.0) == 0.0);
  CHECK(equivalent_diameter(std::numbers::pi / 6.0 * 27.0) == doctest::Approx(3.0).epsilon(1e-15));
}

TEST_CASE("constant trajectory volumes and curves") {
  Trajectory t = constant_trajectory(20, 2.5);
  const DomainSpec& d = t.layers[0].domain();
  SUBCASE("volumes add dz * area per layer plus the final excess volume") {
    const QoIReport r = qoi_from_trajectory(t);
    REQUIRE(r.grain_ids.size() == 30);
    for (std::size_t k = 0; k < r.grain_ids.size(); ++k) {
      const Grain& gr = t.layers[0].grain(r.grain_ids[k]);
      const double expect = 2.5 * 20.0 * gr.area * d.area() + gr.excess_volume * d.area() * d.lz;
      CHECK(r.volume[k] == doctest::Approx(expect).epsilon(1e-12));
      CHECK(r.survived[k] == 1);
    }
    for (std::size_t l = 0; l < 20; ++l) {
      CHECK(r.eliminated[l] == 0);
      CHECK(r.misorientation[l] == doctest::Approx(r.misorientation[0]).epsilon(1e-12));
      CHECK(r.z[l] == doctest::Approx(2.0 + 2.5 * l));
    }
    CHECK(r.size_cdf.back() == 1.0);
    CHECK(std::is_sorted(r.size_cdf.begin(), r.size_cdf.end()));
  }
  SUBCASE("a single surviving grain with v = 0 has volume dz * n_l * S") {
    double total = 0.0;
    for (std::size_t l = 0; l < t.layers.size(); ++l) {
      for (const auto& [id, gr] : t.layers[l].grains()) t.layers[l].grain(id).excess_volume = 0.0;
    }
    const QoIReport r = qoi_from_trajectory(t);
    for (std::size_t k = 0; k < r.grain_ids.size(); ++k) {
      const double s = t.layers[0].grain(r.grain_ids[k]).area * d.area();
      CHECK(r.volume[k] == doctest::Approx(2.5 * 20 * s).epsilon(1e-12));
      total += r.volume[k];
    }
    CHECK(total == doctest::Approx(2.5 * 20 * d.area()).epsilon(1e-12));
  }
  SUBCASE("uniform misorientation") {
    const double tilt = 10.0 * std::numbers::pi / 180.0;
    for (GrainGraph& g : t.layers) {
      for (const auto& [id, gr] : g.grains()) {
        Grain& m = g.grain(id);
        m.orientation = Vec3{std::sin(tilt), 0.0, std::cos(tilt)};
        std::tie(m.theta_x, m.theta_z) = orientation_angles(m.orientation);
      }
    }
    const QoIReport r = qoi_from_trajectory(t);
    for (double x : r.misorientation) CHECK(x == doctest::Approx(10.0).epsilon(1e-12));
  }
  SUBCASE("too short") {
    t.layers.resize(1);
    CHECK_THROWS_AS(qoi_from_trajectory(t), Error);
  }
}

TEST_CASE("eliminated grains keep their history and the n_G curve follows the log") {
  GrainGraph g = fixture::uniform_voronoi(40, 4).graph;
  RolloutOptions opt;
  opt.n_l = 12;
  const Trajectory t = rollout(g, BaselinePredictor(BaselineParams{.c1 = 0.3}), opt);
  REQUIRE(!t.failure);
  const QoIReport r = qoi_from_trajectory(t);
  for (std::size_t l = 0; l < t.layers.size(); ++l) {
    CHECK(r.eliminated[l] == g.grain_count() - t.layers[l].grain_count());
  }
  CHECK(std::is_sorted(r.eliminated.begin(), r.eliminated.end()));
  REQUIRE(r.eliminated.back() > 0);
  for (std::size_t k = 0; k < r.grain_ids.size(); ++k) {
    CHECK(r.volume[k] >= 0.0);
    CHECK(r.survived[k] == (t.layers.back().has_grain(r.grain_ids[k]) ? 1 : 0));
  }
  const QoIReport all = qoi_from_trajectory(t, {.survivors_only = false});
  CHECK(all.size_sample.size() == g.grain_count());
  CHECK(r.size_sample.size() == t.layers.back().grain_count());
}

TEST_CASE("misclassification rate") {
  IndexImage a(10, 10), b(10, 10);
  for (std::size_t k = 0; k < a.data.size(); ++k) {
    a.data[k] = static_cast<std::uint32_t>(k % 7 + 1);
    b.data[k] = a.data[k];
  }
  CHECK(misclassification_rate(a, b) == 0.0);
  for (std::size_t k = 0; k < 50; ++k) b.data[k * 2] = 99;
  CHECK(misclassification_rate(a, b) == 0.5);
  CHECK(misclassification_rate(b, a) == 0.5);
  for (auto& x : b.data) x += 100;
  CHECK(misclassification_rate(a, b) == 1.0);
  CHECK_THROWS_AS(misclassification_rate(a, IndexImage(10, 9)), Error);
}

TEST_CASE("KS statistic against a brute-force eCDF") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> size(1, 200);
  std::normal_distribution<double> z(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> a(size(rng)), b(size(rng));
    // rounded values so ties occur within and across samples
    for (double& x : a) x = std::round(z(rng) * 4.0) / 4.0;
    for (double& x : b) x = std::round((z(rng) + 0.3) * 4.0) / 4.0;
    CHECK(ks_statistic(a, b) == doctest::Approx(ks_brute(a, b)).epsilon(1e-12));
    CHECK(ks_statistic(a, b) == ks_statistic(b, a));
    CHECK(ks_statistic(a, a) == 0.0);
  }
  const std::vector<double> lo{1, 2, 3}, hi{4, 5};
  CHECK(ks_statistic(lo, hi) == 1.0);
  CHECK_THROWS_AS(ks_statistic(lo, std::vector<double>{}), Error);
}

TEST_CASE("KS critical values") {
  CHECK(ks_critical(0.95, 120, 120) == doctest::Approx(std::sqrt(-std::log(0.475) / 120.0)).epsilon(1e-15));
  CHECK(std::abs(ks_critical(0.95, 120, 120) - 0.079) <= 0.0005);
  CHECK(std::abs(ks_critical(0.95, 400, 400) - 0.043) <= 0.0005);
  CHECK(std::abs(ks_critical(0.95, 1600, 1600) - 0.022) <= 0.0005);
  CHECK(ks_critical(0.95, 100, 300) == doctest::Approx(std::sqrt(-std::log(0.475) * (1.0 + 3.0) / 600.0)));
  CHECK_THROWS_AS(ks_critical(0.0, 10, 10), Error);
  CHECK_THROWS_AS(ks_critical(0.95, 0, 10), Error);
}

TEST_CASE("RRMSE") {
  const std::vector<double> t{1.0, -2.0, 0.5, 3.0};
  CHECK(rrmse(t, t) == 0.0);
  CHECK(rrmse(t, std::vector<double>(4, 0.0)) == 100.0);
  const std::vector<double> p{1.1, -2.0, 0.5, 3.0};
  CHECK(rrmse(t, p) == doctest::Approx(100.0 * std::sqrt(0.01 / 14.25)));
  try {
    rrmse(std::vector<double>(3, 0.0), std::vector<double>(3, 1.0));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::numeric);
  }
  CHECK_THROWS_AS(rrmse(t, std::vector<double>(3, 0.0)), Error);
}

TEST_CASE("precision-recall") {
  const std::vector<std::uint8_t> y{1, 1, 1, 0, 0, 0, 0};
  const std::vector<double> perfect{0.9, 0.8, 0.7, 0.3, 0.2, 0.2, 0.1};
  const PrCurve c = pr_curve(y, perfect);
  CHECK(!c.degenerate);
  CHECK(pr_auc(c) == 1.0);
  for (double th : {0.31, 0.5, 0.69}) CHECK(f1_at(y, perfect, th) == 1.0);
  CHECK(c.thresholds.size() == 6);
  CHECK(c.recall.back() == 1.0);
  CHECK(c.precision.back() == doctest::Approx(3.0 / 7.0));

  SUBCASE("hand-worked curve") {
    const std::vector<std::uint8_t> y2{1, 0, 1, 0};
    const std::vector<double> s2{0.9, 0.8, 0.7, 0.6};
    const PrCurve d = pr_curve(y2, s2);
    // (r, p): (0.5, 1), (0.5, 0.5), (1, 2/3), (1, 0.5)
    CHECK(pr_auc(d) == doctest::Approx(0.5 * 1.0 + 0.5 * (0.5 + 2.0 / 3.0) / 2.0));
    CHECK(f1_at(y2, s2, 0.75) == doctest::Approx(0.5));
  }
  SUBCASE("no positives is flagged") {
    const std::vector<std::uint8_t> none(4, 0);
    const PrCurve d = pr_curve(none, std::vector<double>{0.1, 0.2, 0.3, 0.4});
    CHECK(d.degenerate);
    CHECK(pr_auc(d) == 0.0);
  }
  SUBCASE("shuffled scores on balanced labels") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<std::uint8_t> lab(10000);
    std::vector<double> sc(10000);
    for (std::size_t k = 0; k < lab.size(); ++k) {
      lab[k] = k % 2;
      sc[k] = u(rng);
    }
    CHECK(std::abs(pr_auc(pr_curve(lab, sc)) - 0.5) <= 0.02);
  }
  CHECK_THROWS_AS(pr_curve(std::vector<std::uint8_t>{2}, std::vector<double>{0.5}), Error);
}

TEST_CASE("losses") {
  DeltaF t;
  t.junction_ids = {1, 2, 3};
  t.dx = {0.1, -0.2, 0.0};
  t.dy = {0.0, 0.1, 0.3};
  t.grain_ids = {1, 2};
  t.ds = {0.01, -0.02};
  t.v = {0.0, 0.5};
  CHECK(l2_loss(t, t).value == 0.0);
  DeltaF p = t;
  p.dx[0] = 0.3;  // junction error 0.04
  p.v[1] = 0.0;   // grain error 0.25
  CHECK(l2_loss(t, p).value == doctest::Approx(0.04 / 3.0 + 0.25 / 2.0));
  const std::vector<std::uint8_t> jm{1, 0, 0}, gm{0, 1};
  CHECK(l2_loss(t, p, jm, gm).value == 0.0);
  const LossValue empty = l2_loss(t, p, std::vector<std::uint8_t>{1, 1, 1}, std::vector<std::uint8_t>{1, 1});
  CHECK(empty.empty);
  CHECK(empty.value == 0.0);
  p.grain_ids = {1, 3};
  CHECK_THROWS_AS(l2_loss(t, p), Error);

  const std::vector<std::uint8_t> y{1, 0, 1, 1, 0};
  CHECK(std::abs(bce_loss(y, std::vector<double>(5, 0.5)).value - std::log(2.0)) <= 1e-12);
  const LossValue hard = bce_loss(y, std::vector<double>{1.0, 0.0, 1.0, 1.0, 0.0});
  CHECK(hard.value < 1e-11);
  CHECK(hard.clamped == 5);
  CHECK(bce_loss(y, std::vector<double>{0.8, 0.1, 0.7, 0.9, 0.4}).value ==
        doctest::Approx(-(std::log(0.8) + std::log(0.9) + std::log(0.7) + std::log(0.9) + std::log(0.6)) / 5.0));
  const LossValue none = bce_loss(y, std::vector<double>(5, 0.3), std::vector<std::uint8_t>(5, 1));
  CHECK(none.empty);
  CHECK(none.value == 0.0);
}

TEST_CASE("report documents") {
  const QoIReport r = qoi_from_trajectory(constant_trajectory(3, 2.0));
  Comparison c;
  c.mr = {0.0, 0.01};
  c.ks = 0.05;
  const std::string doc = report_json(r, c);
  CHECK(doc.find("\"misorientation_deg\"") != std::string::npos);
  CHECK(doc.find("\"ks\": 0.05") != std::string::npos);
  const std::string csv = curves_csv(r);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
}
