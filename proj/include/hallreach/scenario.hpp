#pragma once

// Scenario configuration shared by the verifier, the simulator and the
// environment server, plus its JSON file format.

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>

#include "hallreach/dynamics.hpp"
#include "hallreach/errors.hpp"
#include "hallreach/json_util.hpp"
#include "hallreach/lidar.hpp"
#include "hallreach/state.hpp"
#include "hallreach/track.hpp"

namespace hallreach {

enum class AngleUnit { Degrees, Radians };

struct RewardParams {
  double g_p = 10.0;
  double g_n = 0.05;
  double crash_penalty = -100.0;
  bool turn_exemption = true;  // no input penalty while in the corner box
  AngleUnit penalty_unit = AngleUnit::Degrees;

  void validate() const {
    if (!std::isfinite(g_p) || !(g_p > 0.0)) throw ConfigError("reward g_p must be positive");
    if (!std::isfinite(g_n) || g_n < 0.0) throw ConfigError("reward g_n must be nonnegative");
    if (!std::isfinite(crash_penalty)) throw ConfigError("reward crash_penalty must be finite");
  }
};

struct Scenario {
  TrackConfig track;
  RayConfig rays;
  DynamicsParams params;
  double horizon = 7.0;
  double control_period = 0.1;
  double substep = kDefaultSubstep;  // simulator RK4 step
  double initial_lateral_window = 0.2;
  double initial_speed = 0.0;
  int start_segment = 0;
  double start_offset = 2.0;  // forward coordinate of the start, from the back wall
  std::optional<FaultConfig> faults;
  RewardParams reward;
  std::optional<double> episode_horizon;  // training episodes; horizon by default

  int num_steps() const { return static_cast<int>(std::lround(horizon / control_period)); }
  int num_episode_steps() const {
    return static_cast<int>(std::lround(episode_horizon.value_or(horizon) / control_period));
  }

  /// Time of control step k; exact when the control rate is a whole number of hertz.
  double time_at(int k) const {
    const double rate = 1.0 / control_period;
    const double whole = std::round(rate);
    if (std::fabs(rate - whole) < 1e-9 * whole) return static_cast<double>(k) / whole;
    return static_cast<double>(k) * control_period;
  }

  void validate() const {
    track.validate();
    rays.validate();
    validate_ray_geometry(rays, track);
    params.validate();
    reward.validate();
    if (faults) faults->validate(rays);
    if (!std::isfinite(control_period) || !(control_period > 0.0)) throw ConfigError("control_period must be positive");
    if (!std::isfinite(horizon) || !(horizon > 0.0)) throw ConfigError("horizon must be positive");
    const double n = horizon / control_period;
    if (std::fabs(n - std::round(n)) > 1e-9 * std::max(1.0, n)) {
      throw ConfigError("horizon must be a positive multiple of control_period");
    }
    if (episode_horizon) {
      const double m = *episode_horizon / control_period;
      if (!(m >= 1.0) || std::fabs(m - std::round(m)) > 1e-9 * m) {
        throw ConfigError("episode_horizon must be a positive multiple of control_period");
      }
    }
    if (!(substep > 0.0) || !(substep <= control_period)) throw ConfigError("substep must lie in (0, control_period]");
    const double w = track.hallway_width;
    if (!std::isfinite(initial_lateral_window) || initial_lateral_window < 0.0 ||
        initial_lateral_window > w - 2.0 * track.safety_margin) {
      throw ConfigError("initial_lateral_window must lie in [0, hallway_width - 2 safety_margin]");
    }
    if (!std::isfinite(initial_speed) || initial_speed < 0.0) throw ConfigError("initial_speed must be nonnegative");
    if (start_segment < 0 || start_segment >= kNumSides) throw ConfigError("start_segment must be 0..3");
    if (!std::isfinite(start_offset) || !(start_offset > w) || !(start_offset < track.outer_side_length - w)) {
      throw ConfigError("start_offset must place the start inside the straight part of the hallway");
    }
  }

  /// Start state `lateral` metres right of the midline (towards the inner wall).
  CarState initial_state(double lateral) const {
    const double X = 0.5 * track.hallway_width + lateral;
    const Vec2 p = from_canonical(start_segment, {X, start_offset}, track.outer_side_length);
    return {p.x, p.y, initial_speed, segment_heading(start_segment)};
  }

  /// Initial box for lateral offsets in [lo, hi]. Exact in the lateral
  /// coordinate since the frame maps are reflections and translations.
  StateBox initial_box(double lo, double hi) const {
    const CarState a = initial_state(lo);
    const CarState b = initial_state(hi);
    return {hull(Interval(a.x), Interval(b.x)), hull(Interval(a.y), Interval(b.y)), Interval(initial_speed),
            Interval(segment_heading(start_segment))};
  }
};

// ---------------------------------------------------------------------------
// JSON.

namespace scenario_detail {

using namespace json_detail;

inline AngleUnit parse_unit(const nlohmann::json& j, const std::string& what) {
  if (!j.is_string()) throw ParseError(what + " must be a string");
  const std::string u = j.get<std::string>();
  if (u == "deg") return AngleUnit::Degrees;
  if (u == "rad") return AngleUnit::Radians;
  throw ParseError(what + " must be \"deg\" or \"rad\"");
}

}  // namespace scenario_detail

inline FaultConfig parse_faults(const nlohmann::json& j) {
  using namespace scenario_detail;
  const std::string where = "faults";
  if (!j.is_object()) throw ParseError("faults must be an object");
  check_keys(j, {"enabled", "num_faulty_rays", "approach_distance", "window_min_deg", "window_max_deg", "seed",
                 "fault_value"},
             where);
  FaultConfig f;
  f.enabled = true;
  read_bool(j, "enabled", f.enabled, where);
  read_int(j, "num_faulty_rays", f.num_faulty_rays, where);
  read_number(j, "approach_distance", f.approach_distance, where);
  read_number(j, "window_min_deg", f.window_min_deg, where);
  read_number(j, "window_max_deg", f.window_max_deg, where);
  read_u64(j, "seed", f.seed, where);
  if (j.contains("fault_value")) f.fault_value = number(j.at("fault_value"), "faults.fault_value");
  return f;
}

/// Parses a scenario document. Every section and key is optional; missing
/// values keep their defaults. Unknown keys are rejected.
inline Scenario parse_scenario(const nlohmann::json& j) {
  using namespace scenario_detail;
  if (!j.is_object()) throw ParseError("scenario must be a JSON object");
  check_keys(j, {"track", "rays", "dynamics", "timing", "initial_set", "faults", "reward"}, "scenario");
  Scenario s;
  if (j.contains("track")) {
    const auto& t = object(j, "track", "scenario");
    check_keys(t, {"hallway_width", "outer_side_length", "safety_margin"}, "track");
    read_number(t, "hallway_width", s.track.hallway_width, "track");
    read_number(t, "outer_side_length", s.track.outer_side_length, "track");
    read_number(t, "safety_margin", s.track.safety_margin, "track");
  }
  if (j.contains("rays")) {
    const auto& r = object(j, "rays", "scenario");
    check_keys(r, {"count", "fov_deg", "max_range"}, "rays");
    read_int(r, "count", s.rays.count, "rays");
    read_number(r, "fov_deg", s.rays.fov_deg, "rays");
    read_number(r, "max_range", s.rays.max_range, "rays");
  }
  if (j.contains("dynamics")) {
    const auto& d = object(j, "dynamics", "scenario");
    check_keys(d, {"c_a", "c_m", "c_h", "l_f", "l_r", "u"}, "dynamics");
    read_number(d, "c_a", s.params.c_a, "dynamics");
    read_number(d, "c_m", s.params.c_m, "dynamics");
    read_number(d, "c_h", s.params.c_h, "dynamics");
    read_number(d, "l_f", s.params.l_f, "dynamics");
    read_number(d, "l_r", s.params.l_r, "dynamics");
    read_number(d, "u", s.params.u, "dynamics");
  }
  if (j.contains("timing")) {
    const auto& t = object(j, "timing", "scenario");
    check_keys(t, {"horizon", "control_period", "substep", "episode_horizon"}, "timing");
    read_number(t, "horizon", s.horizon, "timing");
    read_number(t, "control_period", s.control_period, "timing");
    read_number(t, "substep", s.substep, "timing");
    if (t.contains("episode_horizon")) s.episode_horizon = number(t.at("episode_horizon"), "timing.episode_horizon");
  }
  if (j.contains("initial_set")) {
    const auto& i = object(j, "initial_set", "scenario");
    check_keys(i, {"lateral_window", "speed", "start_segment", "start_offset"}, "initial_set");
    read_number(i, "lateral_window", s.initial_lateral_window, "initial_set");
    read_number(i, "speed", s.initial_speed, "initial_set");
    read_int(i, "start_segment", s.start_segment, "initial_set");
    read_number(i, "start_offset", s.start_offset, "initial_set");
  }
  if (j.contains("faults") && !j.at("faults").is_null()) s.faults = parse_faults(j.at("faults"));
  if (j.contains("reward")) {
    const auto& r = object(j, "reward", "scenario");
    check_keys(r, {"g_p", "g_n", "crash_penalty", "turn_exemption", "penalty_unit"}, "reward");
    read_number(r, "g_p", s.reward.g_p, "reward");
    read_number(r, "g_n", s.reward.g_n, "reward");
    read_number(r, "crash_penalty", s.reward.crash_penalty, "reward");
    read_bool(r, "turn_exemption", s.reward.turn_exemption, "reward");
    if (r.contains("penalty_unit")) s.reward.penalty_unit = parse_unit(r.at("penalty_unit"), "reward.penalty_unit");
  }
  s.validate();
  return s;
}

inline nlohmann::json to_json(const FaultConfig& f) {
  nlohmann::json j{{"enabled", f.enabled},
                   {"num_faulty_rays", f.num_faulty_rays},
                   {"approach_distance", f.approach_distance},
                   {"window_min_deg", f.window_min_deg},
                   {"window_max_deg", f.window_max_deg},
                   {"seed", f.seed}};
  if (f.fault_value) j["fault_value"] = *f.fault_value;
  return j;
}

inline nlohmann::json to_json(const Scenario& s) {
  nlohmann::json timing{{"horizon", s.horizon}, {"control_period", s.control_period}, {"substep", s.substep}};
  if (s.episode_horizon) timing["episode_horizon"] = *s.episode_horizon;
  nlohmann::json j{
      {"track",
       {{"hallway_width", s.track.hallway_width},
        {"outer_side_length", s.track.outer_side_length},
        {"safety_margin", s.track.safety_margin}}},
      {"rays", {{"count", s.rays.count}, {"fov_deg", s.rays.fov_deg}, {"max_range", s.rays.max_range}}},
      {"dynamics",
       {{"c_a", s.params.c_a},
        {"c_m", s.params.c_m},
        {"c_h", s.params.c_h},
        {"l_f", s.params.l_f},
        {"l_r", s.params.l_r},
        {"u", s.params.u}}},
      {"timing", timing},
      {"initial_set",
       {{"lateral_window", s.initial_lateral_window},
        {"speed", s.initial_speed},
        {"start_segment", s.start_segment},
        {"start_offset", s.start_offset}}},
      {"reward",
       {{"g_p", s.reward.g_p},
        {"g_n", s.reward.g_n},
        {"crash_penalty", s.reward.crash_penalty},
        {"turn_exemption", s.reward.turn_exemption},
        {"penalty_unit", s.reward.penalty_unit == AngleUnit::Degrees ? "deg" : "rad"}}}};
  if (s.faults) j["faults"] = to_json(*s.faults);
  return j;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open scenario file '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("malformed scenario file '" + path + "': " + e.what());
  }
  return parse_scenario(j);
}

}  // namespace hallreach
