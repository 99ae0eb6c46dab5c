#pragma once

#include <cmath>
#include <span>

namespace graingraph {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend constexpr Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend constexpr Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend constexpr Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend constexpr Vec2 operator*(Vec2 a, double s) { return {s * a.x, s * a.y}; }
  friend constexpr bool operator==(Vec2 a, Vec2 b) = default;
};

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  double norm() const { return std::sqrt(x * x + y * y + z * z); }
  friend constexpr bool operator==(Vec3 a, Vec3 b) = default;
};

/// Wraps a coordinate in unit-period space into [0, 1).
inline double wrap_unit(double v) {
  double w = v - std::floor(v);
  // v slightly below an integer can round up to exactly 1.0
  return w >= 1.0 ? 0.0 : w;
}

inline Vec2 wrap_unit(Vec2 p) { return {wrap_unit(p.x), wrap_unit(p.y)}; }

/// Minimum-image difference for unit-period coordinates, in [-0.5, 0.5].
inline double min_image(double d) { return d - std::round(d); }

inline Vec2 min_image(Vec2 d) { return {min_image(d.x), min_image(d.y)}; }

/// Relative coordinate of k with respect to i under a period: d - period * nint(d / period).
inline double relative_coordinate(double xk, double xi, double period = 1.0) {
  const double d = xk - xi;
  return d - period * std::round(d / period);
}

/// Periodic mean of unit-period points, unwrapped around the first point; result wrapped.
inline Vec2 periodic_mean(std::span<const Vec2> pts) {
  if (pts.empty()) return {};
  const Vec2 anchor = pts.front();
  Vec2 acc{};
  for (const Vec2& p : pts) acc = acc + min_image(p - anchor);
  const double inv = 1.0 / static_cast<double>(pts.size());
  return wrap_unit(anchor + acc * inv);
}

}  // namespace graingraph
