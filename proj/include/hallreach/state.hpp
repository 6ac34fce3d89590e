#pragma once

#include <array>
#include <cmath>
#include <numbers>

#include "hallreach/interval.hpp"

namespace hallreach {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

/// Kinematic bicycle state: position (m), speed (m/s), heading from +x (rad).
struct CarState {
  double x = 0.0;
  double y = 0.0;
  double v = 0.0;
  double theta = 0.0;

  Vec2 position() const { return {x, y}; }
  friend bool operator==(const CarState&, const CarState&) = default;
};

/// Per-variable interval hull of a set of car states.
struct StateBox {
  Interval x, y, v, theta;

  static StateBox point(const CarState& s) { return {s.x, s.y, s.v, s.theta}; }

  bool contains(const CarState& s) const {
    return x.contains(s.x) && y.contains(s.y) && v.contains(s.v) && theta.contains(s.theta);
  }
  bool contains(const StateBox& b) const {
    return x.contains(b.x) && y.contains(b.y) && v.contains(b.v) && theta.contains(b.theta);
  }
  CarState center() const { return {x.mid(), y.mid(), v.mid(), theta.mid()}; }
  std::array<Interval, 4> as_array() const { return {x, y, v, theta}; }

  friend bool operator==(const StateBox&, const StateBox&) = default;
};

inline StateBox hull(const StateBox& a, const StateBox& b) {
  return {hull(a.x, b.x), hull(a.y, b.y), hull(a.v, b.v), hull(a.theta, b.theta)};
}

/// Fold an angle into (-pi, pi].
inline double normalize_angle(double a) {
  constexpr double pi = std::numbers::pi;
  if (a > -pi && a <= pi) return a;
  a = std::fmod(a, 2 * pi);
  if (a > pi) a -= 2 * pi;
  if (a <= -pi) a += 2 * pi;
  return a;
}

inline constexpr double deg_to_rad(double d) { return d * (std::numbers::pi / 180.0); }
inline constexpr double rad_to_deg(double r) { return r * (180.0 / std::numbers::pi); }

}  // namespace hallreach
