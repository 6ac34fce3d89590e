#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "hallreach/affine.hpp"
#include "hallreach/dynamics.hpp"
#include "hallreach/errors.hpp"
#include "hallreach/interval.hpp"
#include "hallreach/state.hpp"
#include "hallreach/track.hpp"

namespace hallreach {

inline constexpr double kMinDistance = 1e-6;

struct RayConfig {
  int count = 21;
  double fov_deg = 230.0;  // rays span [-fov/2, +fov/2] inclusive
  double max_range = 5.0;

  // Full scan of the physical unit, kept for reference.
  static constexpr int kFullScanRays = 1081;
  static constexpr double kFullScanFovDeg = 270.0;

  void validate() const {
    if (count < 3 || count % 2 == 0) throw ConfigError("ray count must be odd and at least 3");
    if (!(fov_deg > 0.0) || !(fov_deg < 360.0)) throw ConfigError("ray field of view must be in (0, 360) degrees");
    if (!std::isfinite(max_range) || !(max_range > kMinDistance)) throw ConfigError("max_range must be positive");
  }

  /// Exactly symmetric, strictly increasing ray angles in radians.
  std::vector<double> angles() const {
    validate();
    std::vector<double> a(count);
    const double half = deg_to_rad(fov_deg / 2.0);
    const int n = count - 1;
    for (int i = 0; i < count; ++i) {
      const int k = 2 * i - n;
      a[i] = k >= 0 ? half * k / n : -(half * -k / n);
    }
    return a;
  }
};

/// The closed-form model assumes every wall farther than the next corner is
/// out of range.
inline void validate_ray_geometry(const RayConfig& rays, const TrackConfig& cfg) {
  rays.validate();
  cfg.validate();
  if (rays.max_range > cfg.outer_side_length - 2.0 * cfg.hallway_width) {
    throw ConfigError("max_range must not exceed outer_side_length - 2 * hallway_width");
  }
}

struct LidarScan {
  std::vector<double> distances;
  std::vector<bool> fault_mask;

  std::size_t size() const { return distances.size(); }
  int fault_count() const { return static_cast<int>(std::count(fault_mask.begin(), fault_mask.end(), true)); }
};

/// Exact raycast against the wall segments.
inline LidarScan raycast_scan(const CarState& s, const RayConfig& rays, const TrackConfig& cfg) {
  if (!std::isfinite(s.x) || !std::isfinite(s.y) || clearance(s.position(), cfg) <= 0.0) {
    throw OutOfTrackError("raycast from outside the corridor");
  }
  const auto walls = wall_segments(cfg);
  const auto alpha = rays.angles();
  // Segment ends are widened slightly so a ray into an outer corner cannot
  // slip between the two walls through rounding.
  const double slack = 1e-12 * cfg.outer_side_length;
  LidarScan scan;
  scan.distances.resize(alpha.size());
  scan.fault_mask.assign(alpha.size(), false);
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    const double psi = s.theta + alpha[i];
    const double dx = std::cos(psi);
    const double dy = std::sin(psi);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& w : walls) {
      if (w.vertical()) {
        if (dx == 0.0) continue;
        const double t = (w.a.x - s.x) / dx;
        if (!(t > 0.0) || t >= best) continue;
        const double y = s.y + t * dy;
        if (y >= w.y_lo() - slack && y <= w.y_hi() + slack) best = t;
      } else {
        if (dy == 0.0) continue;
        const double t = (w.a.y - s.y) / dy;
        if (!(t > 0.0) || t >= best) continue;
        const double x = s.x + t * dx;
        if (x >= w.x_lo() - slack && x <= w.x_hi() + slack) best = t;
      }
    }
    scan.distances[i] = std::clamp(std::min(best, rays.max_range), kMinDistance, rays.max_range);
  }
  return scan;
}

/// Wall hit by a ray in the turn frame, in counter-clockwise order starting
/// from the previous inner corner.
enum class WallCase : std::uint8_t { Right = 0, Bottom = 1, Top = 2, Left = 3, Back = 4, Ambiguous = 5 };

inline constexpr int kNumWallCases = 5;

inline std::string to_string(WallCase c) {
  switch (c) {
    case WallCase::Right: return "Right";
    case WallCase::Bottom: return "Bottom";
    case WallCase::Top: return "Top";
    case WallCase::Left: return "Left";
    case WallCase::Back: return "Back";
    case WallCase::Ambiguous: return "Ambiguous";
  }
  return "?";
}

/// Ray angle folded into (theta_br, theta_br + 2 pi].
inline double fold_ray_angle(double phi, const LocalPose& pose) {
  constexpr double two_pi = 2 * std::numbers::pi;
  while (phi <= pose.theta_br) phi += two_pi;
  while (phi > pose.theta_br + two_pi) phi -= two_pi;
  return phi;
}

inline WallCase classify_ray(double phi, const LocalPose& pose) {
  if (phi <= pose.theta_r) return WallCase::Right;
  if (phi <= -std::numbers::pi / 2) return WallCase::Bottom;
  if (phi <= pose.theta_l) return WallCase::Top;
  if (phi <= pose.theta_bl) return WallCase::Left;
  return WallCase::Back;
}

/// Distance along a ray at folded angle phi to the wall of case c.
inline double wall_distance(WallCase c, double phi, const LocalPose& pose) {
  double num = 0.0;
  double den = 0.0;
  switch (c) {
    case WallCase::Right: num = pose.d_right, den = -std::sin(phi); break;
    case WallCase::Bottom: num = pose.d_bottom, den = -std::cos(phi); break;
    case WallCase::Top: num = pose.d_top, den = std::cos(phi); break;
    case WallCase::Left: num = pose.d_left, den = std::sin(phi); break;
    case WallCase::Back: num = pose.d_back, den = -std::cos(phi); break;
    case WallCase::Ambiguous: throw DomainError("no formula for an ambiguous ray");
  }
  if (!(den > 0.0)) return std::numeric_limits<double>::infinity();
  return num / den;
}

/// Closed-form measurement model: each ray picks its wall by comparing its
/// angle against the corner angles, then uses the matching cosine formula.
inline LidarScan closed_form_scan(const LocalPose& pose, const RayConfig& rays) {
  const auto alpha = rays.angles();
  LidarScan scan;
  scan.distances.resize(alpha.size());
  scan.fault_mask.assign(alpha.size(), false);
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    const double phi = fold_ray_angle(pose.theta_local + alpha[i], pose);
    const double d = wall_distance(classify_ray(phi, pose), phi, pose);
    scan.distances[i] = std::clamp(std::min(d, rays.max_range), kMinDistance, rays.max_range);
  }
  return scan;
}

inline std::vector<WallCase> closed_form_cases(const LocalPose& pose, const RayConfig& rays) {
  std::vector<WallCase> out;
  for (double a : rays.angles()) out.push_back(classify_ray(fold_ray_angle(pose.theta_local + a, pose), pose));
  return out;
}

// ---------------------------------------------------------------------------
// Set-valued scans.

/// Per-ray distance intervals with the wall each ray was attributed to.
struct ScanEnclosure {
  std::vector<Interval> distances;
  std::vector<WallCase> cases;
};

/// Parametrisation of one initial-set symbol on a piece of the initial set:
/// original = offset + scale * current, with the exact composed values
/// enclosed by the intervals.
struct SymbolMap {
  Interval offset{0.0};
  Interval scale{1.0};

  /// Original-coordinate values reachable by current in [-1, 1].
  Interval range() const {
    const Interval r = offset + scale * Interval(-1.0, 1.0);
    return {std::max(r.lo(), -1.0), std::min(r.hi(), 1.0)};
  }
  bool is_identity() const { return offset == Interval(0.0) && scale == Interval(1.0); }
};

using SymbolDomain = std::array<SymbolMap, kNumInitialSymbols>;

inline SymbolDomain full_domain() { return {}; }

/// One consistent wall assignment over one piece of the initial set.
struct ScanPiece {
  AffineState state;  // forms re-parametrised on this piece
  SymbolDomain domain;
  int segment = 0;
  std::vector<AffineForm> distances;
  std::vector<WallCase> cases;

  ScanEnclosure enclosure() const {
    ScanEnclosure e;
    for (const auto& d : distances) e.distances.push_back(d.range());
    e.cases = cases;
    return e;
  }
};

struct ScanOptions {
  int max_assignments = 64;       // cap on pieces per call
  int max_split_depth = 6;        // recursion limit for initial-set splitting
  double max_band_fraction = 0.5; // split only if the undecided band is smaller
};

/// Restrict symbol `id` to [lo, hi] of its current range (within [-1, 1]).
/// The substituted range covers [lo, hi] despite rounding.
inline void restrict_symbol(AffineState& s, SymbolDomain& dom, SymbolId id, double lo, double hi) {
  const double shift = 0.5 * (lo + hi);
  const double scale = round_up(std::max(round_up(hi - shift), round_up(shift - lo)));
  s.substitute(id, shift, scale);
  SymbolMap& m = dom[id];
  m.offset = m.offset + m.scale * Interval(shift);
  m.scale = m.scale * Interval(scale);
}

/// Undecided band of the sign of g along its dominant initial symbol:
/// g <= 0 is certain for eps <= lo, g > 0 certain for eps > hi.
struct SignBand {
  SymbolId id = 0;
  double lo = -1.0;
  double hi = 1.0;
  bool valid = false;
};

inline SignBand sign_band(const AffineForm& g) {
  SignBand b;
  double best = 0.0;
  for (const auto& t : g.terms()) {
    if (t.id >= kNumInitialSymbols) break;
    if (std::fabs(t.coeff) > best) {
      best = std::fabs(t.coeff);
      b.id = t.id;
    }
  }
  if (best == 0.0) return b;
  const double a = g.coeff(b.id);
  const double rest = round_up(g.radius() - std::fabs(a) + 1e-15 * std::fabs(g.center()));
  double e1 = (-g.center() - rest) / a;
  double e2 = (-g.center() + rest) / a;
  if (e1 > e2) std::swap(e1, e2);
  b.lo = std::clamp(round_down(e1), -1.0, 1.0);
  b.hi = std::clamp(round_up(e2), -1.0, 1.0);
  b.valid = true;
  return b;
}

namespace lidar_detail {

enum class Tri { False, True, Unknown };

inline Tri nonpositive(const Interval& r) {
  if (r.hi() <= 0.0) return Tri::True;
  if (r.lo() > 0.0) return Tri::False;
  return Tri::Unknown;
}

/// atan2(a, b) for forms whose true values have sign(a) = side. Picks a
/// branch on which the quotient is well defined.
inline std::optional<AffineForm> corner_angle(const AffineForm& a, const AffineForm& b, int side,
                                              NoiseContext& ctx) {
  const Interval ra = a.range();
  const Interval rb = b.range();
  const bool b_ok = !rb.contains_zero();
  const bool a_ok = !ra.contains_zero();
  if (b_ok && (!a_ok || rb.mig() >= ra.mig())) {
    AffineForm q = mul(a, reciprocal(b, ctx), ctx);
    AffineForm t = atan(q, ctx);
    if (rb.lo() > 0.0) return t;
    return side < 0 ? t - kPi : t + kPi;
  }
  if (a_ok) {
    AffineForm q = mul(b, reciprocal(a, ctx), ctx);
    AffineForm t = atan(q, ctx);
    return ra.lo() > 0.0 ? kHalfPi - t : -kHalfPi - t;
  }
  return std::nullopt;
}

struct Frame {
  AffineForm X, Y, theta_local;
  AffineForm d_right, d_bottom, d_top, d_left, d_back;
  AffineForm theta_l, theta_r, theta_bl, theta_br;
};

inline std::optional<Frame> make_frame(const AffineState& s, int segment, const TrackConfig& cfg, NoiseContext& ctx) {
  const double w = cfg.hallway_width;
  const double side = cfg.outer_side_length;
  Frame f;
  auto xy = to_canonical(segment, s.x, s.y, side);
  f.X = std::move(xy.first);
  f.Y = std::move(xy.second);
  f.theta_local = s.theta - segment_heading(segment);
  const double turns = std::round(f.theta_local.center() / (2 * std::numbers::pi));
  if (turns != 0.0) f.theta_local = f.theta_local - Interval(turns) * kTwoPi;
  f.d_left = f.X;
  f.d_right = w - f.X;
  f.d_top = side - f.Y;
  f.d_bottom = f.Y - (side - w);
  f.d_back = f.Y;
  auto tl = corner_angle(f.X, side - f.Y, +1, ctx);
  auto tr = corner_angle(f.X - w, (side - w) - f.Y, -1, ctx);
  auto tbl = corner_angle(f.X, -f.Y, +1, ctx);
  auto tbr = corner_angle(f.X - w, w - f.Y, -1, ctx);
  if (!tl || !tr || !tbl || !tbr) return std::nullopt;
  f.theta_l = std::move(*tl);
  f.theta_r = std::move(*tr);
  f.theta_bl = std::move(*tbl);
  f.theta_br = std::move(*tbr);
  return f;
}

/// Per-ray analysis on one piece.
struct RayInfo {
  AffineForm phi;                 // folded ray angle
  int wrap = 0;                   // multiples of 2 pi added while folding
  bool folded = true;             // false when the fold itself is undecided
  std::array<bool, kNumWallCases> possible{};
  // Boundary predicates, in case order: phi - theta_r, phi + pi/2,
  // phi - theta_l, phi - theta_bl.
  std::array<AffineForm, 4> g;

  int num_candidates() const { return static_cast<int>(std::count(possible.begin(), possible.end(), true)); }
};

inline RayInfo analyse_ray(const Frame& f, double alpha) {
  constexpr double two_pi = 2 * std::numbers::pi;
  RayInfo r;
  AffineForm phi = f.theta_local + alpha;
  const AffineForm g0 = phi - f.theta_br;
  const Interval rg = g0.range();
  int wrap = 0;
  if (rg.lo() > 0.0 && rg.hi() <= two_pi) {
    wrap = 0;
  } else if (rg.lo() > -two_pi && rg.hi() <= 0.0) {
    wrap = 1;
  } else if (rg.lo() > two_pi && rg.hi() <= 2 * two_pi) {
    wrap = -1;
  } else {
    r.folded = false;
    r.possible.fill(true);
    r.phi = std::move(phi);
    return r;
  }
  if (wrap != 0) phi = phi + Interval(wrap) * kTwoPi;
  r.wrap = wrap;
  r.g = {phi - f.theta_r, phi + kHalfPi, phi - f.theta_l, phi - f.theta_bl};
  // Walk the ordered predicate chain: case j is possible when every earlier
  // predicate can be false and predicate j can be true.
  bool reachable = true;
  for (int j = 0; j < 4 && reachable; ++j) {
    const Tri t = nonpositive(r.g[j].range());
    r.possible[j] = t != Tri::False;
    reachable = t != Tri::True;
  }
  r.possible[4] = reachable;
  r.phi = std::move(phi);
  return r;
}

inline AffineForm full_range_ray(const RayConfig& rays, NoiseContext& ctx) {
  return AffineForm::from_interval(Interval(kMinDistance, rays.max_range), ctx.fresh());
}

inline AffineForm ray_formula(const Frame& f, const RayInfo& r, WallCase c, const RayConfig& rays,
                              NoiseContext& ctx) {
  const AffineForm* num = nullptr;
  AffineForm den;
  switch (c) {
    case WallCase::Right: num = &f.d_right, den = -sin(r.phi, ctx); break;
    case WallCase::Bottom: num = &f.d_bottom, den = -cos(r.phi, ctx); break;
    case WallCase::Top: num = &f.d_top, den = cos(r.phi, ctx); break;
    case WallCase::Left: num = &f.d_left, den = sin(r.phi, ctx); break;
    case WallCase::Back: num = &f.d_back, den = -cos(r.phi, ctx); break;
    case WallCase::Ambiguous: return full_range_ray(rays, ctx);
  }
  const Interval rn = num->range();
  const Interval rd = den.range();
  if (rd.hi() <= 0.0) return AffineForm(rays.max_range);
  if (rd.lo() <= 0.0) {
    // The wall is hit only where den > 0, and there num/den >= num.lo/den.hi.
    double lower = kMinDistance;
    if (rn.lo() > 0.0) lower = std::max(lower, round_down(rn.lo() / rd.hi()));
    if (lower >= rays.max_range) return AffineForm(rays.max_range);
    return AffineForm::from_interval(Interval(lower, rays.max_range), ctx.fresh());
  }
  // All of num/den beyond range: clamp without evaluating.
  if (rn.lo() > 0.0 && round_down(rn.lo() / rd.hi()) >= rays.max_range) return AffineForm(rays.max_range);
  AffineForm d = mul(*num, reciprocal(den, ctx), ctx);
  return clamp(d, kMinDistance, rays.max_range, ctx);
}

inline AffineForm joined_formula(const Frame& f, const RayInfo& r, const RayConfig& rays, NoiseContext& ctx) {
  if (!r.folded) return full_range_ray(rays, ctx);
  std::optional<Interval> h;
  for (int c = 0; c < kNumWallCases; ++c) {
    if (!r.possible[c]) continue;
    const Interval v = ray_formula(f, r, static_cast<WallCase>(c), rays, ctx).range();
    h = h ? hull(*h, v) : v;
  }
  const Interval v{std::max(h->lo(), kMinDistance), std::min(h->hi(), rays.max_range)};
  return AffineForm::from_interval(v, ctx.fresh());
}

/// Enumerate wall assignments that are nondecreasing in the cyclic case order
/// along the rays. Rays whose fold is undecided are left unconstrained.
inline void enumerate_assignments(const std::vector<RayInfo>& info, std::size_t i, int last_key,
                                  std::vector<WallCase>& cur, std::vector<std::vector<WallCase>>& out,
                                  std::size_t cap) {
  if (out.size() > cap) return;
  if (i == info.size()) {
    out.push_back(cur);
    return;
  }
  const RayInfo& r = info[i];
  if (!r.folded) {
    cur[i] = WallCase::Ambiguous;
    enumerate_assignments(info, i + 1, last_key, cur, out, cap);
    return;
  }
  for (int c = 0; c < kNumWallCases; ++c) {
    if (!r.possible[c]) continue;
    const int key = c - kNumWallCases * r.wrap;
    if (key < last_key) continue;
    cur[i] = static_cast<WallCase>(c);
    enumerate_assignments(info, i + 1, key, cur, out, cap);
  }
}

struct ScanContext {
  const RayConfig& rays;
  const TrackConfig& cfg;
  const ScanOptions& opt;
  const std::vector<double>& alpha;
  NoiseContext& ctx;
  std::vector<ScanPiece>& out;
};

inline void emit_piece(ScanContext& sc, const AffineState& s, const SymbolDomain& dom, int segment, const Frame* f,
                       const std::vector<RayInfo>& info, const std::vector<WallCase>& cases) {
  ScanPiece p;
  p.state = s;
  p.domain = dom;
  p.segment = segment;
  p.cases = cases;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    if (f == nullptr) {
      p.distances.push_back(full_range_ray(sc.rays, sc.ctx));
    } else if (cases[i] == WallCase::Ambiguous) {
      p.distances.push_back(joined_formula(*f, info[i], sc.rays, sc.ctx));
    } else {
      p.distances.push_back(ray_formula(*f, info[i], cases[i], sc.rays, sc.ctx));
    }
  }
  sc.out.push_back(std::move(p));
}

/// Emits between 1 and `budget` pieces covering `s`; returns the count.
inline std::size_t scan_piece(ScanContext& sc, const AffineState& s, const SymbolDomain& dom, int segment, int depth,
                              std::size_t budget) {
  const std::size_t n = sc.alpha.size();
  std::vector<WallCase> cases(n, WallCase::Ambiguous);
  auto frame = make_frame(s, segment, sc.cfg, sc.ctx);
  if (!frame) {
    emit_piece(sc, s, dom, segment, nullptr, {}, cases);
    return 1;
  }
  std::vector<RayInfo> info;
  info.reserve(n);
  bool ambiguous = false;
  for (double a : sc.alpha) {
    info.push_back(analyse_ray(*frame, a));
    if (info.back().num_candidates() > 1) ambiguous = true;
  }
  auto fill_decided = [&] {
    for (std::size_t i = 0; i < n; ++i) {
      cases[i] = WallCase::Ambiguous;
      if (!info[i].folded || info[i].num_candidates() != 1) continue;
      for (int c = 0; c < kNumWallCases; ++c) {
        if (info[i].possible[c]) cases[i] = static_cast<WallCase>(c);
      }
    }
  };
  if (!ambiguous) {
    fill_decided();
    emit_piece(sc, s, dom, segment, &*frame, info, cases);
    return 1;
  }

  // Try to separate the first undecided boundary by splitting the initial set.
  if (depth < sc.opt.max_split_depth && budget >= 3) {
    for (std::size_t i = 0; i < n; ++i) {
      const RayInfo& r = info[i];
      if (!r.folded || r.num_candidates() < 2) continue;
      for (const AffineForm& g : r.g) {
        if (nonpositive(g.range()) != Tri::Unknown) continue;
        const SignBand band = sign_band(g);
        if (!band.valid) continue;
        const double frac = 0.5 * (band.hi - band.lo);
        if (frac >= sc.opt.max_band_fraction || (band.lo <= -1.0 && band.hi >= 1.0)) continue;
        std::vector<std::pair<double, double>> parts;
        for (const auto& part : {std::pair{-1.0, band.lo}, std::pair{band.lo, band.hi}, std::pair{band.hi, 1.0}}) {
          if (part.second > part.first) parts.push_back(part);
        }
        std::size_t left = budget;
        std::size_t emitted = 0;
        for (std::size_t j = 0; j < parts.size(); ++j) {
          AffineState sub = s;
          SymbolDomain d = dom;
          restrict_symbol(sub, d, band.id, parts[j].first, parts[j].second);
          const std::size_t allowed = left - (parts.size() - 1 - j);
          const std::size_t k = scan_piece(sc, sub, d, segment, depth + 1, allowed);
          left -= k;
          emitted += k;
        }
        return emitted;
      }
    }
  }

  std::vector<std::vector<WallCase>> assignments;
  std::vector<WallCase> cur(n, WallCase::Ambiguous);
  enumerate_assignments(info, 0, std::numeric_limits<int>::min(), cur, assignments, budget);
  if (assignments.empty() || assignments.size() > budget) {
    // Too many joint cases: join the candidate formulas of every ambiguous ray.
    fill_decided();
    emit_piece(sc, s, dom, segment, &*frame, info, cases);
    return 1;
  }
  for (const auto& a : assignments) emit_piece(sc, s, dom, segment, &*frame, info, a);
  return assignments.size();
}

}  // namespace lidar_detail

/// Sound set-valued scan of every state in `s` (in the frame of `segment`).
/// Returns one piece per consistent wall assignment; together the pieces
/// cover every state of `s` and every true measurement.
inline std::vector<ScanPiece> scan_enclosure(const AffineState& s, const SymbolDomain& domain, int segment,
                                             const RayConfig& rays, const TrackConfig& cfg,
                                             const ScanOptions& opt, NoiseContext& ctx) {
  validate_ray_geometry(rays, cfg);
  const auto alpha = rays.angles();
  std::vector<ScanPiece> out;
  lidar_detail::ScanContext sc{rays, cfg, opt, alpha, ctx, out};
  lidar_detail::scan_piece(sc, s, domain, segment, 0, static_cast<std::size_t>(std::max(1, opt.max_assignments)));
  return out;
}

/// Affine state spanning a box, one initial symbol per variable.
inline AffineState affine_from_box(const StateBox& b) {
  return {AffineForm::from_interval(b.x, 0), AffineForm::from_interval(b.y, 1), AffineForm::from_interval(b.v, 2),
          AffineForm::from_interval(b.theta, 3)};
}

/// Box interface: each result pairs a scan enclosure with the sub-box of
/// states it is valid for. The box must lie in one segment.
inline std::vector<std::pair<ScanEnclosure, StateBox>> scan_enclosure(const StateBox& box, const RayConfig& rays,
                                                                      const TrackConfig& cfg,
                                                                      const ScanOptions& opt = {}) {
  const int seg = find_segment({box.x.mid(), box.y.mid()}, cfg);
  if (seg < 0) throw OutOfTrackError("state box centre outside the corridor");
  NoiseContext ctx;
  auto pieces = scan_enclosure(affine_from_box(box), full_domain(), seg, rays, cfg, opt, ctx);
  std::vector<std::pair<ScanEnclosure, StateBox>> out;
  for (const auto& p : pieces) {
    StateBox sub = p.state.box();
    sub.x = intersect(sub.x, box.x);
    sub.y = intersect(sub.y, box.y);
    sub.v = intersect(sub.v, box.v);
    sub.theta = intersect(sub.theta, box.theta);
    out.emplace_back(p.enclosure(), sub);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fault injection.

struct FaultConfig {
  bool enabled = false;
  int num_faulty_rays = 5;
  double approach_distance = 2.0;  // trigger this far before the corner box
  double window_min_deg = -115.0;  // candidate rays by nominal angle
  double window_max_deg = 0.0;
  std::uint64_t seed = 0;
  std::optional<double> fault_value;  // reading of a faulted ray; max range by default

  void validate(const RayConfig& rays) const {
    if (num_faulty_rays < 0 || num_faulty_rays > rays.count) {
      throw ConfigError("num_faulty_rays must be between 0 and the ray count");
    }
    if (!(approach_distance >= 0.0)) throw ConfigError("fault approach_distance must be nonnegative");
    if (!(window_min_deg <= window_max_deg)) throw ConfigError("fault window is empty");
  }
};

inline bool fault_triggered(const LocalPose& pose, const FaultConfig& f) {
  return f.enabled && (pose.region != Region::Region1 || -pose.d_bottom <= f.approach_distance);
}

namespace lidar_detail {

/// Uniform integer in [0, n) by rejection, independent of the standard
/// library's distribution implementation.
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x = 0;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

}  // namespace lidar_detail

/// Sets `num_faulty_rays` rays drawn without replacement from the window to
/// the fault reading. Deterministic in (seed, step).
inline LidarScan apply_faults(const LidarScan& scan, const LocalPose& pose, const RayConfig& rays,
                              const FaultConfig& faults, std::uint64_t step) {
  if (!fault_triggered(pose, faults) || faults.num_faulty_rays == 0) return scan;
  const auto alpha = rays.angles();
  if (alpha.size() != scan.size()) throw DimensionError("scan length does not match the ray configuration");
  std::vector<std::size_t> window;
  const double lo = deg_to_rad(faults.window_min_deg) - 1e-12;
  const double hi = deg_to_rad(faults.window_max_deg) + 1e-12;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    if (alpha[i] >= lo && alpha[i] <= hi) window.push_back(i);
  }
  std::seed_seq seq{static_cast<std::uint32_t>(faults.seed), static_cast<std::uint32_t>(faults.seed >> 32),
                    static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32)};
  std::mt19937_64 rng(seq);
  const std::size_t k = std::min<std::size_t>(window.size(), static_cast<std::size_t>(faults.num_faulty_rays));
  for (std::size_t j = 0; j < k; ++j) {
    const std::size_t pick = j + lidar_detail::uniform_below(rng, window.size() - j);
    std::swap(window[j], window[pick]);
  }
  LidarScan out = scan;
  if (out.fault_mask.size() != out.size()) out.fault_mask.assign(out.size(), false);
  const double value = faults.fault_value.value_or(rays.max_range);
  for (std::size_t j = 0; j < k; ++j) {
    out.distances[window[j]] = value;
    out.fault_mask[window[j]] = true;
  }
  return out;
}

}  // namespace hallreach
