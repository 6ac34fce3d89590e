#pragma once

// Closed-loop reachability: propagates the initial lateral window through
// scan, controller and flow enclosures at the control rate and checks the
// safety margin at every step.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "hallreach/affine.hpp"
#include "hallreach/closed_loop.hpp"
#include "hallreach/controller.hpp"
#include "hallreach/dynamics.hpp"
#include "hallreach/errors.hpp"
#include "hallreach/io_util.hpp"
#include "hallreach/lidar.hpp"
#include "hallreach/scenario.hpp"
#include "hallreach/state.hpp"
#include "hallreach/track.hpp"

namespace hallreach {

enum class Verdict { Safe, Unknown, Unsafe };

inline std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::Safe: return "Safe";
    case Verdict::Unknown: return "Unknown";
    default: return "Unsafe";
  }
}

/// One lateral sub-interval of the initial window, as offsets from the midline.
struct Subset {
  int index = 0;
  double lo = 0.0;
  double hi = 0.0;
};

/// Splits the lateral window into contiguous subsets of width `size`; the
/// last one may be shorter.
inline std::vector<Subset> subdivide(const Scenario& sc, double size) {
  if (!std::isfinite(size) || !(size > 0.0)) throw ConfigError("subset size must be positive");
  const double w = sc.initial_lateral_window;
  const double ratio = w / size;
  const long n = std::max(1L, static_cast<long>(std::ceil(ratio * (1.0 - 1e-12))));
  if (n > 1'000'000) throw ConfigError("subset size too small for the window");
  std::vector<Subset> out;
  out.reserve(static_cast<std::size_t>(n));
  const double start = -0.5 * w;
  auto edge = [&](long i) { return i >= n ? 0.5 * w : start + static_cast<double>(i) * size; };
  for (long i = 0; i < n; ++i) out.push_back({static_cast<int>(i), edge(i), edge(i + 1)});
  return out;
}

/// The initial-state box of a subset.
inline StateBox subset_box(const Scenario& sc, const Subset& s) { return sc.initial_box(s.lo, s.hi); }

struct VerifyOptions {
  int jobs = 1;
  double budget_seconds = std::numeric_limits<double>::infinity();  // whole run
  long step_cap = 0;              // path-steps per subset; 0 for no cap
  bool auto_refine = false;       // halve Unknown subsets
  int max_refine_depth = 3;
  int keep_symbols = 24;          // fresh symbols kept per path
  int counterexample_samples = 16;
  bool record_tubes = true;
  ScanOptions scan;
  FlowOptions flow;
};

struct Counterexample {
  double lateral = 0.0;
  EpisodeTrace trace;
};

struct SubsetVerdict {
  int subset_index = 0;
  double lo = 0.0;  // lateral offsets from the midline
  double hi = 0.0;
  Verdict verdict = Verdict::Unknown;
  std::string reason;
  int first_failing_step = -1;  // control step whose period failed
  double violated_bound = std::numeric_limits<double>::quiet_NaN();  // clearance lower bound found
  bool resource_exceeded = false;
  double nn_time = 0.0;
  double total_time = 0.0;
  std::vector<int> path_count_per_step;
  int max_paths = 0;
  std::vector<std::vector<StateBox>> reach_tube;  // index k: boxes at t_k
  std::optional<Counterexample> counterexample;
  int refine_depth = 0;

  double mean_paths() const {
    if (path_count_per_step.empty()) return 0.0;
    double s = 0.0;
    for (int c : path_count_per_step) s += c;
    return s / static_cast<double>(path_count_per_step.size());
  }
};

struct VerificationReport {
  double subset_size = 0.0;
  int num_steps = 0;
  std::vector<SubsetVerdict> subsets;

  bool safe() const {
    return !subsets.empty() &&
           std::all_of(subsets.begin(), subsets.end(), [](const auto& s) { return s.verdict == Verdict::Safe; });
  }
  Verdict overall() const {
    if (safe()) return Verdict::Safe;
    for (const auto& s : subsets) {
      if (s.verdict == Verdict::Unsafe) return Verdict::Unsafe;
    }
    return Verdict::Unknown;
  }
  int count(Verdict v) const {
    return static_cast<int>(std::count_if(subsets.begin(), subsets.end(), [&](const auto& s) { return s.verdict == v; }));
  }
  double mean_paths() const { return mean([](const SubsetVerdict& s) { return s.mean_paths(); }); }
  double mean_nn_time() const { return mean([](const SubsetVerdict& s) { return s.nn_time; }); }
  double mean_total_time() const { return mean([](const SubsetVerdict& s) { return s.total_time; }); }

 private:
  template <class F>
  double mean(F f) const {
    if (subsets.empty()) return 0.0;
    double s = 0.0;
    for (const auto& v : subsets) s += f(v);
    return s / static_cast<double>(subsets.size());
  }
};

// ---------------------------------------------------------------------------
// Paths.

/// A live hybrid path: the state as forms over the initial symbols, the
/// piece of the initial set it covers and the hallway frame it is read in.
struct ReachPath {
  AffineState state;
  SymbolDomain domain;
  int segment = 0;
};

namespace reach_detail {

/// Re-expresses symbol `id` of `f` from the map `from` to the map `to`,
/// which must cover `from`'s range.
inline void remap_symbol(AffineForm& f, SymbolId id, const SymbolMap& from, const SymbolMap& to) {
  const double a = f.coeff(id);
  if (a == 0.0) return;
  // original = from.offset + from.scale * e = to.offset + to.scale * e'
  const Interval shift = (to.offset - from.offset) / from.scale;
  const Interval scale = to.scale / from.scale;
  f.substitute(id, shift.mid(), scale.mid());
  f.add_err(affine_detail::finish_bound(std::fabs(a) * (shift.rad() + scale.rad())));
}

inline SymbolMap hull_map(const SymbolMap& a, const SymbolMap& b) {
  if (a.offset == b.offset && a.scale == b.scale) return a;
  const Interval r = hull(a.range(), b.range());
  const double mid = r.mid();
  const double rad = round_up(std::max(round_up(r.hi() - mid), round_up(mid - r.lo())));
  return {Interval(mid), Interval(rad)};
}

/// Form equal to a on a's piece and to b on b's piece, both already over the
/// same symbol maps.
inline AffineForm join(const AffineForm& a, const AffineForm& b) {
  AffineForm z = AffineForm::combine(0.5, a, 0.5, b);
  const AffineForm d = AffineForm::combine(1.0, a, -1.0, b);
  z.add_err(affine_detail::finish_bound(0.5 * (std::fabs(d.center()) + d.radius())));
  return z;
}

inline ReachPath merge(const ReachPath& a, const ReachPath& b) {
  ReachPath out;
  out.segment = a.segment;
  AffineState sa = a.state;
  AffineState sb = b.state;
  for (SymbolId id = 0; id < kNumInitialSymbols; ++id) {
    const SymbolMap m = hull_map(a.domain[id], b.domain[id]);
    if (!(m.offset == a.domain[id].offset && m.scale == a.domain[id].scale)) {
      for (AffineForm* f : sa.forms()) remap_symbol(*f, id, a.domain[id], m);
    }
    if (!(m.offset == b.domain[id].offset && m.scale == b.domain[id].scale)) {
      for (AffineForm* f : sb.forms()) remap_symbol(*f, id, b.domain[id], m);
    }
    out.domain[id] = m;
  }
  out.state = {join(sa.x, sb.x), join(sa.y, sb.y), join(sa.v, sb.v), join(sa.theta, sb.theta)};
  return out;
}

struct FramePiece {
  AffineState state;
  SymbolDomain domain;
  int segment = 0;
};

/// Assigns the path to the hallway frame(s) that can contain its states.
/// An undecided piece is split once along its dominant initial symbol; what
/// stays undecided is evaluated in both candidate frames.
inline void handoff(const ReachPath& p, const TrackConfig& cfg, bool split, std::vector<FramePiece>& out) {
  const double w = cfg.hallway_width;
  const double side = cfg.outer_side_length;
  auto xy = to_canonical(p.segment, p.state.x, p.state.y, side);
  // Past the inner corner (next segment) or behind the back line (previous).
  const AffineForm ahead = xy.first - w;
  const AffineForm behind = w - xy.second;
  const Interval ra = ahead.range();
  const Interval rb = behind.range();
  const int next = (p.segment + 1) % kNumSides;
  const int prev = (p.segment + kNumSides - 1) % kNumSides;
  auto undecided = [](const Interval& r) { return r.lo() <= 0.0 && r.hi() > 0.0; };
  const bool ua = undecided(ra);
  const bool ub = undecided(rb);
  if (!ua && !ub) {
    int seg = p.segment;
    if (ra.lo() > 0.0) seg = next;
    if (rb.lo() > 0.0) seg = prev;
    out.push_back({p.state, p.domain, seg});
    return;
  }
  if (split && ua != ub) {
    const SignBand band = sign_band(ua ? ahead : behind);
    if (band.valid && (band.lo > -1.0 || band.hi < 1.0)) {
      for (const auto& [lo, hi] : {std::pair{-1.0, band.lo}, std::pair{band.lo, band.hi}, std::pair{band.hi, 1.0}}) {
        if (!(hi > lo)) continue;
        ReachPath sub = p;
        restrict_symbol(sub.state, sub.domain, band.id, lo, hi);
        handoff(sub, cfg, false, out);
      }
      return;
    }
  }
  std::vector<int> segs;
  if (ra.hi() > 0.0) segs.push_back(next);
  if (rb.hi() > 0.0) segs.push_back(prev);
  if (ra.lo() <= 0.0 && rb.lo() <= 0.0) segs.push_back(p.segment);
  for (int seg : segs) out.push_back({p.state, p.domain, seg});
}

inline std::vector<FramePiece> handoff(const ReachPath& p, const TrackConfig& cfg) {
  std::vector<FramePiece> out;
  handoff(p, cfg, true, out);
  return out;
}

/// Orders paths by segment so merging is independent of processing order.
inline std::vector<ReachPath> merge_by_segment(std::vector<ReachPath> succ) {
  std::map<int, std::optional<ReachPath>> by;
  for (auto& s : succ) {
    auto& slot = by[s.segment];
    slot = slot ? merge(*slot, s) : std::move(s);
  }
  std::vector<ReachPath> out;
  for (auto& [seg, p] : by) out.push_back(std::move(*p));
  return out;
}

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace reach_detail

/// Result of one control period for one set of paths.
struct StepOutcome {
  std::vector<ReachPath> successors;  // merged per frame
  std::vector<StateBox> piece_boxes;  // end box of every hybrid path
  int path_count = 0;
  double min_clearance = std::numeric_limits<double>::infinity();  // lower bound over the period
  double nn_time = 0.0;
};

/// One control period: scan enclosure, controller enclosure and flow for
/// every path and wall assignment, then per-frame merging.
inline StepOutcome step_reach(const std::vector<ReachPath>& paths, const MLPController& controller,
                              const Scenario& sc, const VerifyOptions& opt, NoiseContext& ctx) {
  using namespace reach_detail;
  StepOutcome out;
  std::vector<ReachPath> succ;
  for (const ReachPath& p : paths) {
    for (const FramePiece& fp : handoff(p, sc.track)) {
      const auto pieces = scan_enclosure(fp.state, fp.domain, fp.segment, sc.rays, sc.track, opt.scan, ctx);
      for (const ScanPiece& sp : pieces) {
        const auto t0 = Clock::now();
        const AffineForm steer = steering_enclosure(controller, sp.distances, ctx);
        out.nn_time += seconds_since(t0);
        AffineFlow flow = flow_enclosure(sp.state, steer, sc.control_period, sc.params, opt.flow, ctx);
        for (const StateBox& b : flow.slices) {
          out.min_clearance = std::min(out.min_clearance, box_clearance(b.x, b.y, sc.track));
        }
        out.piece_boxes.push_back(flow.end.box());
        for (AffineForm* f : flow.end.forms()) f->symbolize_remainder(ctx);
        succ.push_back({std::move(flow.end), sp.domain, fp.segment});
      }
    }
  }
  out.path_count = static_cast<int>(succ.size());
  out.successors = merge_by_segment(std::move(succ));
  for (ReachPath& p : out.successors) {
    auto f = p.state.forms();
    for (AffineForm* g : f) g->symbolize_remainder(ctx);
    reduce_symbols(f, static_cast<std::size_t>(std::max(0, opt.keep_symbols)), ctx);
  }
  return out;
}

/// Box interface: successors of a single box.
inline std::vector<StateBox> step_reach(const StateBox& current, const MLPController& controller, const Scenario& sc,
                                        const VerifyOptions& opt = {}) {
  const int seg = find_segment({current.x.mid(), current.y.mid()}, sc.track);
  if (seg < 0) throw OutOfTrackError("state box centre outside the corridor");
  NoiseContext ctx;
  const StepOutcome o = step_reach({ReachPath{affine_from_box(current), full_domain(), seg}}, controller, sc, opt, ctx);
  return o.piece_boxes;
}

namespace reach_detail {

/// Simulates sample starts of the subset; returns the first that violates
/// the margin.
inline std::optional<Counterexample> find_counterexample(const MLPController& controller, const Scenario& sc,
                                                         double lo, double hi, int samples) {
  std::vector<double> starts{lo, hi, 0.5 * (lo + hi)};
  for (int i = 1; i <= samples; ++i) starts.push_back(lo + (hi - lo) * i / (samples + 1.0));
  for (double l : starts) {
    EpisodeTrace t = run_episode(controller, sc, sc.initial_state(l), std::nullopt, 0);
    if (t.min_clearance < sc.track.safety_margin) return Counterexample{l, std::move(t)};
  }
  return std::nullopt;
}

inline SubsetVerdict verify_interval(const Scenario& sc, const MLPController& controller, int index, double lo,
                                     double hi, const VerifyOptions& opt, Clock::time_point deadline) {
  const auto t0 = Clock::now();
  SubsetVerdict v;
  v.subset_index = index;
  v.lo = lo;
  v.hi = hi;
  const int steps = sc.num_steps();
  const StateBox init = sc.initial_box(lo, hi);
  if (opt.record_tubes) v.reach_tube.push_back({init});
  std::vector<ReachPath> paths{{affine_from_box(init), full_domain(), sc.start_segment}};
  NoiseContext ctx;
  long work = 0;
  bool failed = false;
  try {
    const double c0 = box_clearance(init.x, init.y, sc.track);
    if (c0 < sc.track.safety_margin) {
      failed = true;
      v.first_failing_step = 0;
      v.violated_bound = c0;
      v.reason = "initial set violates the safety margin";
    }
    for (int k = 0; k < steps && !failed; ++k) {
      if (Clock::now() > deadline || (opt.step_cap > 0 && work >= opt.step_cap)) {
        v.resource_exceeded = true;
        v.first_failing_step = k;
        v.reason = "budget exhausted at step " + std::to_string(k);
        break;
      }
      StepOutcome o = step_reach(paths, controller, sc, opt, ctx);
      v.nn_time += o.nn_time;
      work += o.path_count;
      v.path_count_per_step.push_back(o.path_count);
      v.max_paths = std::max(v.max_paths, o.path_count);
      if (opt.record_tubes) v.reach_tube.push_back(std::move(o.piece_boxes));
      if (o.min_clearance < sc.track.safety_margin) {
        failed = true;
        v.first_failing_step = k;
        v.violated_bound = o.min_clearance;
        v.reason = "clearance bound " + format_number(o.min_clearance) + " below the safety margin during step " +
                   std::to_string(k);
        break;
      }
      paths = std::move(o.successors);
    }
  } catch (const EnclosureFailure& e) {
    failed = true;
    v.first_failing_step = static_cast<int>(v.path_count_per_step.size());
    v.reason = std::string("enclosure failure: ") + e.what();
  } catch (const DomainError& e) {
    failed = true;
    v.first_failing_step = static_cast<int>(v.path_count_per_step.size());
    v.reason = std::string("enclosure failure: ") + e.what();
  }
  if (!failed && !v.resource_exceeded) {
    v.verdict = Verdict::Safe;
  } else {
    v.verdict = Verdict::Unknown;
    if (failed) {
      v.counterexample = find_counterexample(controller, sc, lo, hi, opt.counterexample_samples);
      if (v.counterexample) {
        v.verdict = Verdict::Unsafe;
        v.reason += "; simulation from lateral offset " + format_number(v.counterexample->lateral) +
                    " reaches clearance " + format_number(v.counterexample->trace.min_clearance);
      }
    }
  }
  v.total_time = seconds_since(t0);
  return v;
}

/// Verifies [lo, hi], halving Unknown results down to the depth limit.
inline std::vector<SubsetVerdict> verify_refining(const Scenario& sc, const MLPController& controller, int index,
                                                  double lo, double hi, const VerifyOptions& opt,
                                                  Clock::time_point deadline, int depth) {
  SubsetVerdict v = verify_interval(sc, controller, index, lo, hi, opt, deadline);
  v.refine_depth = depth;
  if (!opt.auto_refine || v.verdict != Verdict::Unknown || v.resource_exceeded || depth >= opt.max_refine_depth) {
    return {std::move(v)};
  }
  const double mid = 0.5 * (lo + hi);
  auto a = verify_refining(sc, controller, index, lo, mid, opt, deadline, depth + 1);
  auto b = verify_refining(sc, controller, index, mid, hi, opt, deadline, depth + 1);
  a.insert(a.end(), std::make_move_iterator(b.begin()), std::make_move_iterator(b.end()));
  return a;
}

}  // namespace reach_detail

/// Verifies every subset of the window. Subsets run on up to `opt.jobs`
/// threads; the report does not depend on the thread count.
inline VerificationReport verify(const Scenario& sc, const MLPController& controller, double subset_size,
                                 const VerifyOptions& opt = {}) {
  using namespace reach_detail;
  sc.validate();
  controller.check_rays(sc.rays);
  const auto subsets = subdivide(sc, subset_size);
  const auto start = Clock::now();
  const auto deadline = std::isfinite(opt.budget_seconds)
                            ? start + std::chrono::duration_cast<Clock::duration>(
                                          std::chrono::duration<double>(std::max(0.0, opt.budget_seconds)))
                            : Clock::time_point::max();
  std::vector<std::vector<SubsetVerdict>> rows(subsets.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  auto worker = [&] {
    for (std::size_t i = next++; i < subsets.size() && !failed; i = next++) {
      try {
        rows[i] = verify_refining(sc, controller, subsets[i].index, subsets[i].lo, subsets[i].hi, opt, deadline, 0);
      } catch (...) {
        if (!failed.exchange(true)) failure = std::current_exception();
      }
    }
  };
  const int threads = std::clamp(opt.jobs, 1, static_cast<int>(subsets.size()));
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  VerificationReport report;
  report.subset_size = subset_size;
  report.num_steps = sc.num_steps();
  for (auto& r : rows) {
    for (auto& v : r) report.subsets.push_back(std::move(v));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Soundness audit.

struct AuditResult {
  long trajectories = 0;
  long states_checked = 0;
  long violations = 0;  // states outside their step's tube
};

/// Simulates `samples` random starts per subset (plus the endpoints) and
/// checks every control-step state against the recorded tube.
inline AuditResult containment_audit(const VerificationReport& report, const MLPController& controller,
                                     const Scenario& sc, int samples, std::uint64_t seed = 1) {
  AuditResult res;
  for (const auto& sv : report.subsets) {
    if (sv.reach_tube.empty()) continue;
    std::mt19937_64 rng(mix64(seed ^ mix64(static_cast<std::uint64_t>(sv.subset_index) * 2654435761ULL +
                                            static_cast<std::uint64_t>(sv.refine_depth))));
    std::vector<double> starts{sv.lo, sv.hi};
    for (int i = 0; i < samples; ++i) {
      const double u = static_cast<double>(rng() >> 11) * 0x1p-53;
      starts.push_back(sv.lo + u * (sv.hi - sv.lo));
    }
    for (double l : starts) {
      const EpisodeTrace t = run_episode(controller, sc, sc.initial_state(l), std::nullopt, 0);
      ++res.trajectories;
      auto check = [&](std::size_t k, const CarState& s) {
        if (k >= sv.reach_tube.size()) return;
        ++res.states_checked;
        const auto& boxes = sv.reach_tube[k];
        if (std::none_of(boxes.begin(), boxes.end(), [&](const StateBox& b) { return b.contains(s); })) {
          ++res.violations;
        }
      };
      for (const auto& r : t.steps) check(static_cast<std::size_t>(r.k), r.state);
      if (!t.crashed()) check(t.steps.size(), t.final_state);
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Output.

/// Report without timings, so that repeated runs give identical bytes.
inline nlohmann::json to_json(const VerificationReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& s : r.subsets) {
    nlohmann::json row{{"subset_index", s.subset_index},
                       {"lateral_lo", s.lo},
                       {"lateral_hi", s.hi},
                       {"verdict", to_string(s.verdict)},
                       {"resource_exceeded", s.resource_exceeded},
                       {"mean_paths", s.mean_paths()},
                       {"max_paths", s.max_paths},
                       {"path_count_per_step", s.path_count_per_step},
                       {"refine_depth", s.refine_depth}};
    if (s.verdict != Verdict::Safe) {
      row["reason"] = s.reason;
      row["first_failing_step"] = s.first_failing_step;
      if (std::isfinite(s.violated_bound)) row["violated_bound"] = s.violated_bound;
    }
    if (s.counterexample) {
      row["counterexample"] = {{"lateral", s.counterexample->lateral},
                               {"outcome", to_string(s.counterexample->trace.outcome)},
                               {"min_clearance", s.counterexample->trace.min_clearance}};
    }
    rows.push_back(std::move(row));
  }
  return {{"subset_size", r.subset_size},
          {"num_subsets", r.subsets.size()},
          {"num_steps", r.num_steps},
          {"overall", to_string(r.overall())},
          {"safe_subsets", r.count(Verdict::Safe)},
          {"unknown_subsets", r.count(Verdict::Unknown)},
          {"unsafe_subsets", r.count(Verdict::Unsafe)},
          {"mean_paths", r.mean_paths()},
          {"subsets", rows}};
}

inline nlohmann::json timing_json(const VerificationReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& s : r.subsets) {
    rows.push_back({{"subset_index", s.subset_index}, {"nn_time", s.nn_time}, {"total_time", s.total_time}});
  }
  return {{"mean_nn_time", r.mean_nn_time()}, {"mean_total_time", r.mean_total_time()}, {"subsets", rows}};
}

/// Tube rows: subset, step, path, then lo/hi per state variable.
inline std::string tube_csv(const VerificationReport& r) {
  std::ostringstream out;
  out << "subset,step,path,x_lo,x_hi,y_lo,y_hi,v_lo,v_hi,theta_lo,theta_hi\n";
  for (const auto& s : r.subsets) {
    for (std::size_t k = 0; k < s.reach_tube.size(); ++k) {
      for (std::size_t p = 0; p < s.reach_tube[k].size(); ++p) {
        out << s.subset_index << ',' << k << ',' << p;
        for (const Interval& iv : s.reach_tube[k][p].as_array()) {
          out << ',' << format_number(iv.lo()) << ',' << format_number(iv.hi());
        }
        out << '\n';
      }
    }
  }
  return out.str();
}

/// Summary row: subset size, mean NN time, mean total time, mean paths.
inline std::string summary_row(const VerificationReport& r) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(3);
  out << "subset " << r.subset_size * 100.0 << " cm | NN time " << r.mean_nn_time() << " s | total time "
      << r.mean_total_time() << " s | paths " << r.mean_paths() << " | " << r.count(Verdict::Safe) << "/"
      << r.subsets.size() << " safe";
  return out.str();
}

}  // namespace hallreach
