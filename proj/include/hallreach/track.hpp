#pragma once

// Square hallway loop driven clockwise, so every turn is a right turn.
//
// Segment k (k = 0..3) is one hallway plus the corner box at its end. Its
// canonical frame is obtained by rotating the track by k quarter turns about
// the centre; in that frame the hallway runs along +Y with the outer wall at
// X = 0 and the inner wall at X = w, and the corner box is
// [0, w] x [S - w, S]. Segment 0 is the left hallway driven in +y.

#include <algorithm>
#include <limits>
#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "hallreach/errors.hpp"
#include "hallreach/interval.hpp"
#include "hallreach/state.hpp"

namespace hallreach {

inline constexpr int kNumSides = 4;

struct TrackConfig {
  double hallway_width = 1.5;
  double outer_side_length = 10.0;
  double safety_margin = 0.3;

  void validate() const {
    const double w = hallway_width;
    const double s = outer_side_length;
    if (!std::isfinite(w) || !(w > 0.0)) throw ConfigError("hallway_width must be positive");
    if (!std::isfinite(s) || !(s > 2.0 * w)) {
      throw ConfigError("outer_side_length must exceed twice the hallway width");
    }
    if (!std::isfinite(safety_margin) || safety_margin < 0.0 || !(safety_margin < w / 2.0)) {
      throw ConfigError("safety_margin must lie in [0, hallway_width / 2)");
    }
  }
};

struct WallSegment {
  Vec2 a;
  Vec2 b;

  bool vertical() const { return a.x == b.x; }
  double x_lo() const { return std::min(a.x, b.x); }
  double x_hi() const { return std::max(a.x, b.x); }
  double y_lo() const { return std::min(a.y, b.y); }
  double y_hi() const { return std::max(a.y, b.y); }
};

/// Outer square walls first (counter-clockwise from the origin), then the
/// inner block walls.
inline std::vector<WallSegment> wall_segments(const TrackConfig& cfg) {
  cfg.validate();
  const double s = cfg.outer_side_length;
  const double lo = cfg.hallway_width;
  const double hi = s - cfg.hallway_width;
  return {
      {{0, 0}, {s, 0}},    {{s, 0}, {s, s}},      {{s, s}, {0, s}},      {{0, s}, {0, 0}},
      {{lo, lo}, {hi, lo}}, {{hi, lo}, {hi, hi}}, {{hi, hi}, {lo, hi}}, {{lo, hi}, {lo, lo}},
  };
}

enum class Region { Region1 = 1, Region2 = 2, Region3 = 3 };

inline std::string to_string(Region r) {
  switch (r) {
    case Region::Region1: return "Region1";
    case Region::Region2: return "Region2";
    case Region::Region3: return "Region3";
  }
  return "?";
}

/// Global heading of "forward" in segment k.
inline double segment_heading(int k) {
  constexpr double table[kNumSides] = {std::numbers::pi / 2, 0.0, -std::numbers::pi / 2, std::numbers::pi};
  return table[((k % kNumSides) + kNumSides) % kNumSides];
}

/// Rotate a global point into the canonical frame of segment k. Works for any
/// scalar type supporting double - T.
template <class T>
std::pair<T, T> to_canonical(int k, const T& x, const T& y, double s) {
  switch (((k % kNumSides) + kNumSides) % kNumSides) {
    case 0: return {x, y};
    case 1: return {s - y, x};
    case 2: return {s - x, s - y};
    default: return {y, s - x};
  }
}

inline Vec2 from_canonical(int k, Vec2 c, double s) {
  switch (((k % kNumSides) + kNumSides) % kNumSides) {
    case 0: return {c.x, c.y};
    case 1: return {c.y, s - c.x};
    case 2: return {s - c.x, s - c.y};
    default: return {s - c.y, c.x};
  }
}

/// Closed segment domain [0, w] x [w, S] in canonical coordinates, minus the
/// exit line X = w, Y > S - w which belongs to the next segment.
inline bool in_segment(int k, Vec2 p, const TrackConfig& cfg) {
  const double w = cfg.hallway_width;
  const double s = cfg.outer_side_length;
  const auto [cx, cy] = to_canonical(k, p.x, p.y, s);
  if (cx < 0.0 || cx > w || cy < w || cy > s) return false;
  return !(cx == w && cy > s - w);
}

/// Segment containing p, or -1 when p is outside the corridor.
inline int find_segment(Vec2 p, const TrackConfig& cfg) {
  for (int k = 0; k < kNumSides; ++k) {
    if (in_segment(k, p, cfg)) return k;
  }
  return -1;
}

inline bool in_corridor(Vec2 p, const TrackConfig& cfg) {
  const double s = cfg.outer_side_length;
  const double lo = cfg.hallway_width;
  const double hi = s - lo;
  if (p.x < 0.0 || p.x > s || p.y < 0.0 || p.y > s) return false;
  return !(p.x > lo && p.x < hi && p.y > lo && p.y < hi);
}

inline double distance_to_segment(Vec2 p, const WallSegment& seg) {
  const double dx = std::max({seg.x_lo() - p.x, 0.0, p.x - seg.x_hi()});
  const double dy = std::max({seg.y_lo() - p.y, 0.0, p.y - seg.y_hi()});
  return std::hypot(dx, dy);
}

/// Signed distance to the nearest wall: positive inside the corridor.
inline double clearance(Vec2 p, const TrackConfig& cfg) {
  double d = std::numeric_limits<double>::infinity();
  for (const auto& seg : wall_segments(cfg)) d = std::min(d, distance_to_segment(p, seg));
  return in_corridor(p, cfg) ? d : -d;
}

inline double clearance(const CarState& s, const TrackConfig& cfg) { return clearance(s.position(), cfg); }

/// Lower bound on clearance over every point of the box [x] x [y].
inline double box_clearance(const Interval& x, const Interval& y, const TrackConfig& cfg) {
  const auto walls = wall_segments(cfg);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& seg : walls) {
    const double dx = std::max({seg.x_lo() - x.hi(), 0.0, x.lo() - seg.x_hi()});
    const double dy = std::max({seg.y_lo() - y.hi(), 0.0, y.lo() - seg.y_hi()});
    best = std::min(best, std::hypot(dx, dy));
  }
  const double diag = std::hypot(x.width(), y.width());
  if (best <= 1e-12) return -round_up(diag + 1e-12);
  // No wall touches the box, so the box is entirely inside or entirely outside.
  if (!in_corridor({x.mid(), y.mid()}, cfg)) return -round_up(diag + cfg.outer_side_length);
  return std::max(0.0, best * (1.0 - 1e-12) - 1e-12);
}

/// Does the straight move p -> q touch any wall?
inline bool crosses_wall(Vec2 p, Vec2 q, const TrackConfig& cfg) {
  for (const auto& seg : wall_segments(cfg)) {
    if (seg.vertical()) {
      const double c = seg.a.x;
      if ((p.x - c) * (q.x - c) > 0.0 || p.x == q.x) continue;
      const double t = (c - p.x) / (q.x - p.x);
      const double y = p.y + t * (q.y - p.y);
      if (y >= seg.y_lo() && y <= seg.y_hi()) return true;
    } else {
      const double c = seg.a.y;
      if ((p.y - c) * (q.y - c) > 0.0 || p.y == q.y) continue;
      const double t = (c - p.y) / (q.y - p.y);
      const double x = p.x + t * (q.x - p.x);
      if (x >= seg.x_lo() && x <= seg.x_hi()) return true;
    }
  }
  return false;
}

/// Pose relative to the turn at the end of the current segment.
struct LocalPose {
  int segment = 0;
  double X = 0.0;  // canonical lateral coordinate (= d_left)
  double Y = 0.0;  // canonical forward coordinate (= d_back)
  double theta_local = 0.0;
  double d_top = 0.0;
  double d_bottom = 0.0;  // negative before the corner box
  double d_left = 0.0;
  double d_right = 0.0;
  double d_back = 0.0;
  double theta_l = 0.0;   // outer corner (0, S)
  double theta_r = 0.0;   // inner corner (w, S - w)
  double theta_bl = 0.0;  // previous outer corner (0, 0)
  double theta_br = 0.0;  // previous inner corner (w, w)
  Region region = Region::Region1;
};

/// Pose expressed in the frame of segment k without a membership check.
inline LocalPose pose_in_segment(const CarState& s, int k, const TrackConfig& cfg) {
  const double w = cfg.hallway_width;
  const double side = cfg.outer_side_length;
  const auto [cx, cy] = to_canonical(k, s.x, s.y, side);
  LocalPose p;
  p.segment = ((k % kNumSides) + kNumSides) % kNumSides;
  p.X = cx;
  p.Y = cy;
  p.theta_local = normalize_angle(s.theta - segment_heading(k));
  p.d_left = cx;
  p.d_right = w - cx;
  p.d_top = side - cy;
  p.d_bottom = cy - (side - w);
  p.d_back = cy;
  p.theta_l = std::atan2(cx, side - cy);
  p.theta_r = std::atan2(cx - w, side - w - cy);
  p.theta_bl = std::atan2(cx, -cy);
  p.theta_br = std::atan2(cx - w, w - cy);
  // On the inner wall atan2(+0, negative) lands on +pi; the corner is behind-right.
  if (cx - w == 0.0 && p.theta_r > 0.0) p.theta_r = -std::numbers::pi;
  if (cx - w == 0.0 && p.theta_br > 0.0) p.theta_br = -std::numbers::pi;
  p.region = cy > side - w ? Region::Region2 : Region::Region1;
  return p;
}

inline LocalPose localize(const CarState& s, const TrackConfig& cfg) {
  cfg.validate();
  const Vec2 pos = s.position();
  if (!std::isfinite(s.x) || !std::isfinite(s.y) || !std::isfinite(s.theta) || clearance(pos, cfg) <= 0.0) {
    throw OutOfTrackError("car position is not strictly inside the corridor");
  }
  return pose_in_segment(s, find_segment(pos, cfg), cfg);
}

/// Region of p relative to the turn at the end of segment `turn`: Region3 is
/// the crossing hallway past that turn's corner box.
inline Region classify_region(Vec2 p, const TrackConfig& cfg, int turn) {
  const double w = cfg.hallway_width;
  const double s = cfg.outer_side_length;
  if (in_segment(turn, p, cfg)) {
    const auto [cx, cy] = to_canonical(turn, p.x, p.y, s);
    (void)cx;
    return cy > s - w ? Region::Region2 : Region::Region1;
  }
  if (in_segment(turn + 1, p, cfg)) return Region::Region3;
  throw DomainError("position is not in the hallway of this turn or the one after it");
}

}  // namespace hallreach
