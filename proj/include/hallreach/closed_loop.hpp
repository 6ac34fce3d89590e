#pragma once

// Exact closed-loop simulation at the control rate: episodes, rewards,
// outcomes and Monte Carlo campaigns.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "hallreach/controller.hpp"
#include "hallreach/dynamics.hpp"
#include "hallreach/errors.hpp"
#include "hallreach/io_util.hpp"
#include "hallreach/lidar.hpp"
#include "hallreach/scenario.hpp"
#include "hallreach/state.hpp"
#include "hallreach/track.hpp"

namespace hallreach {

enum class Outcome { Completed, Crashed, MarginViolated };

inline std::string to_string(Outcome o) {
  switch (o) {
    case Outcome::Completed: return "Completed";
    case Outcome::Crashed: return "Crashed";
    default: return "MarginViolated";
  }
}

/// Per-step reward. `delta` is the steering angle in radians.
inline double reward(double delta, bool crashed, bool in_turn, const RewardParams& p) {
  if (crashed) return p.crash_penalty;
  if (in_turn && p.turn_exemption) return p.g_p;
  const double d = p.penalty_unit == AngleUnit::Degrees ? rad_to_deg(delta) : delta;
  return p.g_p - p.g_n * d * d;
}

/// SplitMix64 finaliser.
inline std::uint64_t mix64(std::uint64_t x) {
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed of run i in a campaign seeded with `seed`.
inline std::uint64_t run_seed(std::uint64_t seed, std::uint64_t i) {
  return mix64(seed + (i + 1) * 0x9E3779B97F4A7C15ULL);
}

/// Uniform lateral start offset in the scenario window, drawn from `seed`.
inline double lateral_from_seed(const Scenario& sc, std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  std::mt19937_64 rng(seq);
  const double u = static_cast<double>(rng() >> 11) * 0x1p-53;
  return sc.initial_lateral_window * (u - 0.5);
}

struct StepRecord {
  int k = 0;
  double t = 0.0;
  CarState state;  // at t
  double delta = 0.0;
  double reward = 0.0;
  double min_clearance = 0.0;  // over [t, t + period]
  LidarScan scan;
};

struct EpisodeTrace {
  std::vector<StepRecord> steps;
  CarState final_state;
  Outcome outcome = Outcome::Completed;
  double min_clearance = std::numeric_limits<double>::infinity();
  double total_reward = 0.0;
  std::uint64_t seed = 0;

  bool crashed() const { return outcome == Outcome::Crashed; }
};

struct StepResult {
  LidarScan scan;  // observation at the new state
  double reward = 0.0;
  double min_clearance = 0.0;
  bool done = false;
  bool crashed = false;
  CarState state;
  double t = 0.0;
};

/// One episode's state machine. The run loop and the environment server
/// both drive this class so that their traces agree.
class EpisodeSession {
 public:
  EpisodeSession(Scenario scenario, std::optional<FaultConfig> faults, int max_steps)
      : sc_(std::move(scenario)), faults_(std::move(faults)), max_steps_(max_steps) {
    sc_.validate();
    if (faults_) faults_->validate(sc_.rays);
    if (max_steps_ < 1) throw ConfigError("episode length must be at least one step");
  }

  /// Starts an episode at `init`. Throws OutOfTrackError outside the corridor.
  const LidarScan& reset(const CarState& init, std::uint64_t seed) {
    const double c = clearance(init, sc_.track);
    if (!std::isfinite(init.x) || !std::isfinite(init.y) || !std::isfinite(init.v) || !std::isfinite(init.theta) ||
        !(c > 0.0)) {
      throw OutOfTrackError("initial state is not strictly inside the corridor");
    }
    active_faults_.reset();
    if (faults_ && faults_->enabled) {
      active_faults_ = *faults_;
      active_faults_->seed = mix64(faults_->seed ^ mix64(seed));
    }
    seed_ = seed;
    state_ = init;
    k_ = 0;
    started_ = true;
    done_ = false;
    crashed_ = false;
    min_clearance_ = c;
    total_reward_ = 0.0;
    scan_ = observe();
    return scan_;
  }

  /// Applies steering `delta` (radians) for one control period.
  StepResult step(double delta) {
    if (!started_) throw Error("no episode; send reset");
    if (done_) throw Error("episode finished; send reset");
    const double limit = deg_to_rad(kMaxSteeringDeg);
    if (!std::isfinite(delta) || std::fabs(delta) > limit * (1.0 + 1e-12)) {
      throw DomainError("steering must lie within +-15 degrees");
    }
    const bool in_turn = localize(state_, sc_.track).region == Region::Region2;
    const long n = std::max(1L, std::lround(sc_.control_period / sc_.substep));
    const double h = sc_.control_period / static_cast<double>(n);
    double step_min = clearance(state_, sc_.track);
    CarState s = state_;
    for (long i = 0; i < n && !crashed_; ++i) {
      const CarState next = rk4_step(s, delta, h, sc_.params);
      double c = clearance(next, sc_.track);
      if (crosses_wall(s.position(), next.position(), sc_.track)) c = std::min(c, 0.0);
      step_min = std::min(step_min, c);
      crashed_ = !(c > 0.0);
      s = next;
    }
    state_ = s;
    ++k_;
    min_clearance_ = std::min(min_clearance_, step_min);
    StepResult r;
    r.reward = reward(delta, crashed_, in_turn, sc_.reward);
    total_reward_ += r.reward;
    r.min_clearance = step_min;
    r.crashed = crashed_;
    done_ = crashed_ || k_ >= max_steps_;
    r.done = done_;
    r.state = state_;
    r.t = sc_.time_at(k_);
    if (!crashed_) scan_ = observe();
    r.scan = scan_;
    return r;
  }

  bool started() const { return started_; }
  bool done() const { return done_; }
  int steps_taken() const { return k_; }
  double time() const { return sc_.time_at(k_); }
  const CarState& state() const { return state_; }
  const LidarScan& scan() const { return scan_; }
  double min_clearance() const { return min_clearance_; }
  double total_reward() const { return total_reward_; }
  std::uint64_t seed() const { return seed_; }
  const Scenario& scenario() const { return sc_; }

  Outcome outcome() const {
    if (crashed_) return Outcome::Crashed;
    if (min_clearance_ < sc_.track.safety_margin) return Outcome::MarginViolated;
    return Outcome::Completed;
  }

 private:
  LidarScan observe() const {
    LidarScan scan = raycast_scan(state_, sc_.rays, sc_.track);
    if (active_faults_) {
      scan = apply_faults(scan, localize(state_, sc_.track), sc_.rays, *active_faults_, static_cast<std::uint64_t>(k_));
    }
    return scan;
  }

  Scenario sc_;
  std::optional<FaultConfig> faults_;
  std::optional<FaultConfig> active_faults_;
  int max_steps_;
  std::uint64_t seed_ = 0;
  CarState state_;
  LidarScan scan_;
  int k_ = 0;
  bool started_ = false;
  bool done_ = false;
  bool crashed_ = false;
  double min_clearance_ = 0.0;
  double total_reward_ = 0.0;
};

/// Runs one episode of the scenario horizon. The seed drives fault sampling.
inline EpisodeTrace run_episode(const MLPController& controller, const Scenario& sc, const CarState& init,
                                const std::optional<FaultConfig>& faults, std::uint64_t seed) {
  controller.check_rays(sc.rays);
  EpisodeSession session(sc, faults, sc.num_steps());
  session.reset(init, seed);
  EpisodeTrace trace;
  trace.seed = seed;
  trace.steps.reserve(static_cast<std::size_t>(sc.num_steps()));
  while (!session.done()) {
    StepRecord rec;
    rec.k = session.steps_taken();
    rec.t = session.time();
    rec.state = session.state();
    rec.scan = session.scan();
    rec.delta = controller.evaluate(rec.scan);
    const StepResult r = session.step(rec.delta);
    rec.reward = r.reward;
    rec.min_clearance = r.min_clearance;
    trace.steps.push_back(std::move(rec));
  }
  trace.final_state = session.state();
  trace.outcome = session.outcome();
  trace.min_clearance = session.min_clearance();
  trace.total_reward = session.total_reward();
  return trace;
}

/// Episode from the seeded lateral start, as used by Monte Carlo runs and
/// the environment server.
inline EpisodeTrace run_seeded_episode(const MLPController& controller, const Scenario& sc,
                                       const std::optional<FaultConfig>& faults, std::uint64_t seed) {
  return run_episode(controller, sc, sc.initial_state(lateral_from_seed(sc, seed)), faults, seed);
}

inline std::string trace_csv(const EpisodeTrace& trace) {
  std::ostringstream out;
  out << "k,t,x,y,v,theta,delta_rad,reward,min_clearance,fault_count\n";
  for (const auto& r : trace.steps) {
    out << r.k << ',' << format_number(r.t) << ',' << format_number(r.state.x) << ',' << format_number(r.state.y)
        << ',' << format_number(r.state.v) << ',' << format_number(r.state.theta) << ',' << format_number(r.delta)
        << ',' << format_number(r.reward) << ',' << format_number(r.min_clearance) << ',' << r.scan.fault_count()
        << '\n';
  }
  return out.str();
}

/// Sidecar with the observed scan of every step.
inline std::string scan_csv(const EpisodeTrace& trace) {
  std::ostringstream out;
  out << 'k';
  const std::size_t n = trace.steps.empty() ? 0 : trace.steps.front().scan.size();
  for (std::size_t i = 0; i < n; ++i) out << ",r" << i;
  out << '\n';
  for (const auto& r : trace.steps) {
    out << r.k;
    for (double d : r.scan.distances) out << ',' << format_number(d);
    out << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Monte Carlo campaigns.

struct RunSummary {
  std::uint64_t seed = 0;
  double init_lateral = 0.0;
  Outcome outcome = Outcome::Completed;
  double min_clearance = 0.0;
  int steps = 0;
  double total_reward = 0.0;
  int max_fault_count = 0;
};

struct MonteCarloStats {
  std::vector<RunSummary> runs;
  int safe = 0;  // runs without wall contact
  int crashed = 0;
  int margin_violated = 0;

  int total() const { return static_cast<int>(runs.size()); }
  double safe_rate() const { return runs.empty() ? 0.0 : static_cast<double>(safe) / total(); }
  std::string summary() const { return std::to_string(safe) + "/" + std::to_string(total()) + " safe"; }
};

inline nlohmann::json to_json(const MonteCarloStats& s) {
  nlohmann::json runs = nlohmann::json::array();
  for (std::size_t i = 0; i < s.runs.size(); ++i) {
    const auto& r = s.runs[i];
    runs.push_back({{"run", i},
                    {"seed", r.seed},
                    {"init_lateral", r.init_lateral},
                    {"outcome", to_string(r.outcome)},
                    {"min_clearance", r.min_clearance},
                    {"steps", r.steps},
                    {"total_reward", r.total_reward},
                    {"max_fault_count", r.max_fault_count}});
  }
  return {{"summary", s.summary()},
          {"runs_total", s.total()},
          {"safe", s.safe},
          {"crashed", s.crashed},
          {"margin_violated", s.margin_violated},
          {"safe_rate", s.safe_rate()},
          {"runs", runs}};
}

/// Runs `n_runs` seeded episodes on up to `jobs` threads. Results do not
/// depend on `jobs`.
inline MonteCarloStats monte_carlo(const MLPController& controller, const Scenario& sc, int n_runs,
                                   const std::optional<FaultConfig>& faults, std::uint64_t seed, int jobs = 1) {
  if (n_runs < 1) throw ConfigError("monte carlo needs at least one run");
  sc.validate();
  controller.check_rays(sc.rays);
  MonteCarloStats stats;
  stats.runs.resize(static_cast<std::size_t>(n_runs));
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  auto worker = [&] {
    for (int i = next++; i < n_runs && !failed; i = next++) {
      try {
        const std::uint64_t s = run_seed(seed, static_cast<std::uint64_t>(i));
        const EpisodeTrace t = run_seeded_episode(controller, sc, faults, s);
        RunSummary& r = stats.runs[static_cast<std::size_t>(i)];
        r.seed = s;
        r.init_lateral = lateral_from_seed(sc, s);
        r.outcome = t.outcome;
        r.min_clearance = t.min_clearance;
        r.steps = static_cast<int>(t.steps.size());
        r.total_reward = t.total_reward;
        for (const auto& st : t.steps) r.max_fault_count = std::max(r.max_fault_count, st.scan.fault_count());
      } catch (...) {
        if (!failed.exchange(true)) failure = std::current_exception();
      }
    }
  };
  const int threads = std::clamp(jobs, 1, n_runs);
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  for (const auto& r : stats.runs) {
    if (r.outcome == Outcome::Crashed) {
      ++stats.crashed;
    } else {
      ++stats.safe;
      if (r.outcome == Outcome::MarginViolated) ++stats.margin_violated;
    }
  }
  return stats;
}

}  // namespace hallreach
