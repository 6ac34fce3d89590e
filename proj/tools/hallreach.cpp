// Command-line front end: verify, simulate, monte-carlo, serve-env and
// export-fixture.
//
// Exit codes: 0 success (verify: overall Safe), 1 verify found Unknown or
// Unsafe subsets, 2 configuration or input error.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "hallreach/hallreach.hpp"

using namespace hallreach;

namespace {

constexpr int kExitUnverified = 1;
constexpr int kExitConfig = 2;

/// Fault setup: the scenario's own section unless --faults overrides the
/// number of faulty rays (0 disables faults).
std::optional<FaultConfig> resolve_faults(const Scenario& sc, const std::optional<int>& count) {
  if (!count) {
    if (sc.faults && sc.faults->enabled) return sc.faults;
    return std::nullopt;
  }
  if (*count == 0) return std::nullopt;
  FaultConfig f = sc.faults.value_or(FaultConfig{});
  f.enabled = true;
  f.num_faulty_rays = *count;
  f.validate(sc.rays);
  return f;
}

struct Common {
  std::string scenario;
  std::string weights;
};

void add_common(CLI::App* cmd, Common& c, bool weights) {
  cmd->add_option("--scenario", c.scenario, "Scenario JSON file")->required()->check(CLI::ExistingFile);
  if (weights) cmd->add_option("--weights", c.weights, "Controller weight JSON file")->required()->check(CLI::ExistingFile);
}

int run_verify(const Common& c, double subset_size, std::optional<double> horizon, const VerifyOptions& opt,
               const std::string& report_path, const std::string& timing_path, const std::string& tube_path) {
  Scenario sc = load_scenario(c.scenario);
  if (horizon) {
    sc.horizon = *horizon;
    sc.validate();
  }
  const MLPController ctrl = load_weights(c.weights);
  const VerificationReport r = verify(sc, ctrl, subset_size, opt);
  write_file_atomic(report_path, to_json(r).dump(2) + "\n");
  if (!timing_path.empty()) write_file_atomic(timing_path, timing_json(r).dump(2) + "\n");
  if (!tube_path.empty()) write_file_atomic(tube_path, tube_csv(r));
  std::cout << summary_row(r) << "\n";
  std::cout << "overall " << to_string(r.overall()) << "\n";
  return r.safe() ? 0 : kExitUnverified;
}

int run_simulate(const Common& c, std::optional<double> lateral, std::uint64_t seed, std::optional<int> faults,
                 const std::string& trace_path, const std::string& scan_path) {
  const Scenario sc = load_scenario(c.scenario);
  const MLPController ctrl = load_weights(c.weights);
  const double l = lateral.value_or(lateral_from_seed(sc, seed));
  const EpisodeTrace t = run_episode(ctrl, sc, sc.initial_state(l), resolve_faults(sc, faults), seed);
  write_file_atomic(trace_path, trace_csv(t));
  if (!scan_path.empty()) write_file_atomic(scan_path, scan_csv(t));
  std::cout << "init_lateral " << format_number(l) << "\n";
  std::cout << "outcome " << to_string(t.outcome) << "\n";
  std::cout << "min_clearance " << format_number(t.min_clearance) << "\n";
  std::cout << "total_reward " << format_number(t.total_reward) << "\n";
  return 0;
}

int run_monte_carlo(const Common& c, int runs, std::uint64_t seed, int jobs, std::optional<int> faults,
                    const std::string& out_path) {
  const Scenario sc = load_scenario(c.scenario);
  const MLPController ctrl = load_weights(c.weights);
  const MonteCarloStats s = monte_carlo(ctrl, sc, runs, resolve_faults(sc, faults), seed, jobs);
  if (!out_path.empty()) write_file_atomic(out_path, to_json(s).dump(2) + "\n");
  std::cout << s.summary() << "\n";
  std::cout << "crashed " << s.crashed << " margin_violated " << s.margin_violated << "\n";
  return 0;
}

int run_export(const std::string& name, const std::string& out) {
  if (name == "proportional") {
    save_weights(fixtures::proportional(), out);
  } else if (name == "sensitive") {
    save_weights(fixtures::sensitive(), out);
  } else if (name == "straight") {
    save_weights(fixtures::straight(), out);
  } else {
    throw ConfigError("unknown fixture '" + name + "'");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Closed-loop verification of neural steering controllers in a square hallway"};
  app.require_subcommand(1);

  Common common;

  auto* verify_cmd = app.add_subcommand("verify", "Verify the initial window, subset by subset");
  add_common(verify_cmd, common, true);
  double subset_size = 0.005;
  std::optional<double> horizon;
  VerifyOptions vopt;
  std::string report_path = "report.json";
  std::string timing_path;
  std::string tube_path;
  verify_cmd->add_option("--subset-size", subset_size, "Subset width in metres (0.005 = 0.5 cm)")
      ->check(CLI::PositiveNumber);
  verify_cmd->add_option("--horizon", horizon, "Horizon in seconds; overrides the scenario")->check(CLI::PositiveNumber);
  verify_cmd->add_option("--jobs", vopt.jobs, "Worker threads")->check(CLI::PositiveNumber);
  verify_cmd->add_option("--budget-seconds", vopt.budget_seconds, "Wall-clock budget for the whole run")
      ->check(CLI::NonNegativeNumber);
  verify_cmd->add_option("--step-cap", vopt.step_cap, "Path-steps per subset before giving up; 0 for no cap")
      ->check(CLI::NonNegativeNumber);
  verify_cmd->add_flag("--auto-refine", vopt.auto_refine, "Halve Unknown subsets");
  verify_cmd->add_option("--max-refine-depth", vopt.max_refine_depth, "Halvings per subset")
      ->check(CLI::NonNegativeNumber);
  verify_cmd->add_option("--report", report_path, "Report JSON (no timings)");
  verify_cmd->add_option("--timing", timing_path, "Timing JSON");
  verify_cmd->add_option("--tube", tube_path, "Reach tube CSV");

  auto* sim_cmd = app.add_subcommand("simulate", "Run one episode and write its trace");
  add_common(sim_cmd, common, true);
  std::optional<double> init_lateral;
  std::uint64_t seed = 0;
  std::optional<int> faults;
  std::string trace_path = "trace.csv";
  std::string scan_path;
  sim_cmd->add_option("--init-lateral", init_lateral, "Start offset from the midline in metres");
  sim_cmd->add_option("--seed", seed, "Episode seed; picks the start when --init-lateral is absent");
  sim_cmd->add_option("--faults", faults, "Number of faulty rays (0 disables)")->check(CLI::NonNegativeNumber);
  sim_cmd->add_option("--trace", trace_path, "Trace CSV");
  sim_cmd->add_option("--scan-csv", scan_path, "Per-step scans CSV");

  auto* mc_cmd = app.add_subcommand("monte-carlo", "Seeded episodes from random starts in the window");
  add_common(mc_cmd, common, true);
  int runs = 10;
  std::uint64_t mc_seed = 1;
  int mc_jobs = 1;
  std::string stats_path;
  mc_cmd->add_option("--runs", runs, "Number of episodes");
  mc_cmd->add_option("--seed", mc_seed, "Campaign seed");
  mc_cmd->add_option("--jobs", mc_jobs, "Worker threads")->check(CLI::PositiveNumber);
  mc_cmd->add_option("--faults", faults, "Number of faulty rays (0 disables)")->check(CLI::NonNegativeNumber);
  mc_cmd->add_option("--out", stats_path, "Statistics JSON");

  auto* serve_cmd = app.add_subcommand("serve-env", "Serve the training environment over TCP");
  add_common(serve_cmd, common, false);
  std::string bind = "127.0.0.1:5555";
  ServeOptions sopt;
  serve_cmd->add_option("--bind", bind, "host:port to listen on");
  serve_cmd->add_option("--faults", faults, "Number of faulty rays (0 disables)")->check(CLI::NonNegativeNumber);
  serve_cmd->add_option("--max-connections", sopt.max_connections, "Exit after this many clients; 0 serves forever");

  auto* export_cmd = app.add_subcommand("export-fixture", "Write a built-in fixture controller as a weight file");
  std::string fixture = "proportional";
  std::string fixture_out;
  export_cmd->add_option("--name", fixture, "proportional, sensitive or straight");
  export_cmd->add_option("--out", fixture_out, "Output weight file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*verify_cmd) {
      return run_verify(common, subset_size, horizon, vopt, report_path, timing_path, tube_path);
    }
    if (*sim_cmd) return run_simulate(common, init_lateral, seed, faults, trace_path, scan_path);
    if (*mc_cmd) return run_monte_carlo(common, runs, mc_seed, mc_jobs, faults, stats_path);
    if (*serve_cmd) {
      const Scenario sc = load_scenario(common.scenario);
      serve_env(sc, resolve_faults(sc, faults), bind, std::cout, sopt);
      return 0;
    }
    if (*export_cmd) return run_export(fixture, fixture_out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}
