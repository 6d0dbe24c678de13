// crab: command-line front end for the CRAB studies.
//
//   crab run <config>               run a study, write CSVs + manifest
//   crab diagnose <config>          instantaneous level populations (linear_vs_optimal)
//   crab replay <pulse> <config>    recompute the cost of a stored pulse
//
// Exit status: 0 ok, 1 replay mismatch, 2 usage/config error, 3 internal
// consistency failure, 4 other runtime error.

#include "crab/harness/runner.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

using namespace crab;
using namespace crab::harness;

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;
  std::optional<std::size_t> steps;
  std::optional<std::string> out_dir;
  bool trace = false;
};

ExperimentConfig load_with_overrides(const std::string& path, const Overrides& o) {
  json j = read_json_file(path);
  if (o.seed) j["seed"] = *o.seed;
  if (o.workers) j["workers"] = *o.workers;
  if (o.steps) j["propagation"]["n_steps"] = *o.steps;
  if (o.trace) j["output"]["trace"] = true;
  return parse_config(j);
}

void print_tables(const StudyOutput& out, const std::string& dir) {
  for (const auto& [name, t] : out.tables) std::cout << "  " << dir << "/" << name << "  (" << t.size() << " rows)\n";
  if (!out.pulses.empty()) std::cout << "  " << dir << "/pulses/  (" << out.pulses.size() << " pulse documents)\n";
  std::cout << "  " << dir << "/manifest.json\n";
}

int cmd_run(const std::string& config, const Overrides& o) {
  const auto cfg = load_with_overrides(config, o);
  const auto dir = resolve_out_dir(o.out_dir);
  std::cout << "study " << to_string(cfg.study) << " (" << cfg.name << "), seed " << cfg.master_seed << ", " << cfg.workers
            << " worker(s)\n";
  const auto r = run_study(cfg, dir);
  std::cout << "finished in " << r.manifest["wall_clock_seconds"].get<double>() << " s\n";
  print_tables(r.output, dir);
  return 0;
}

int cmd_diagnose(const std::string& config, const Overrides& o) {
  const auto cfg = load_with_overrides(config, o);
  if (cfg.study != Study::LinearVsOptimal)
    throw config_error("study: diagnose needs a linear_vs_optimal config (got " + to_string(cfg.study) + ")");
  const auto dir = resolve_out_dir(o.out_dir);
  const auto r = run_study(cfg, dir);
  for (const auto& p : r.manifest["points"])
    std::cout << "N=" << p["n_spins"].get<int>() << " " << p["protocol"].get<std::string>()
              << ": final P_tot=" << format_double(p["final_p_tot"].get<double>())
              << " final infidelity=" << format_double(p["final_infidelity"].get<double>())
              << " max P_tot=" << format_double(p["max_p_tot"].get<double>()) << "\n";
  print_tables(r.output, dir);
  return 0;
}

int cmd_replay(const std::string& pulse, const std::string& config, const Overrides& o) {
  Overrides cfg_o = o;
  cfg_o.steps.reset();  // the step count is taken from the pulse unless --steps is given
  const auto cfg = load_with_overrides(config, cfg_o);
  const auto doc = read_pulse(pulse);
  const auto r = replay_pulse(doc, cfg, o.steps);
  std::cout << "stored   " << format_double(r.stored_cost) << "\n"
            << "replayed " << format_double(r.replayed_cost) << "  (n_steps " << r.n_steps << ")\n"
            << "relative difference " << format_double(r.relative_difference()) << "\n";
  if (o.steps) return 0;  // different discretization: report only
  if (r.relative_difference() > 1e-12) {
    std::cout << "MISMATCH: the stored cost is not reproduced\n";
    return 1;
  }
  std::cout << "match\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CRAB quantum optimal control studies"};
  app.require_subcommand(1);
  Overrides o;
  std::uint64_t seed = 0;
  unsigned workers = 1;
  std::size_t steps = 0;
  std::string out_dir;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", seed, "master seed (overrides the config)");
    sub->add_option("--workers", workers, "worker threads (overrides the config)")->check(CLI::PositiveNumber);
    sub->add_option("--steps", steps, "propagation steps (overrides the config)")->check(CLI::PositiveNumber);
    sub->add_option("--out-dir", out_dir, std::string("output directory (default $") + out_dir_env + " or ./crab-out)");
  };

  std::string config, pulse;
  auto* run = app.add_subcommand("run", "run a study");
  run->add_option("config", config, "study configuration (JSON)")->required()->check(CLI::ExistingFile);
  run->add_flag("--trace", o.trace, "also write per-evaluation best-cost traces");
  add_common(run);

  auto* diag = app.add_subcommand("diagnose", "instantaneous excitation probabilities");
  diag->add_option("config", config, "linear_vs_optimal configuration (JSON)")->required()->check(CLI::ExistingFile);
  add_common(diag);

  auto* rep = app.add_subcommand("replay", "recompute the cost of a stored pulse");
  rep->add_option("pulse", pulse, "pulse document (JSON)")->required()->check(CLI::ExistingFile);
  rep->add_option("config", config, "the study configuration the pulse came from")->required()->check(CLI::ExistingFile);
  add_common(rep);

  CLI11_PARSE(app, argc, argv);

  for (auto* sub : {run, diag, rep}) {
    if (sub->count("--seed")) o.seed = seed;
    if (sub->count("--workers")) o.workers = workers;
    if (sub->count("--steps")) o.steps = steps;
    if (sub->count("--out-dir")) o.out_dir = out_dir;
  }

  try {
    if (*run) return cmd_run(config, o);
    if (*diag) return cmd_diagnose(config, o);
    return cmd_replay(pulse, config, o);
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const parse_error& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 2;
  } catch (const missing_pulse_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const consistency_error& e) {
    std::cerr << "internal consistency failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
}
