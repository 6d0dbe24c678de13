#pragma once

// Experiment configuration: one JSON document per study (comments allowed).
// Every value actually used, defaults included, is echoed back into the
// manifest so a run can be repeated from the manifest alone.

#include "crab/io.hpp"
#include "crab/optimizer.hpp"

#include <set>

namespace crab::harness {

class config_error : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

enum class Study { TwoQubit, LmgTransition, ChainTransfer, LmgEntropy, LinearVsOptimal };

inline std::string to_string(Study s) {
  switch (s) {
    case Study::TwoQubit: return "two_qubit";
    case Study::LmgTransition: return "lmg_transition";
    case Study::ChainTransfer: return "chain_transfer";
    case Study::LmgEntropy: return "lmg_entropy";
    case Study::LinearVsOptimal: return "linear_vs_optimal";
  }
  return "?";
}

inline Study study_from_string(const std::string& s) {
  for (Study k : {Study::TwoQubit, Study::LmgTransition, Study::ChainTransfer, Study::LmgEntropy, Study::LinearVsOptimal})
    if (s == to_string(k)) return k;
  throw config_error("study: unknown study '" + s +
                     "' (expected two_qubit, lmg_transition, chain_transfer, lmg_entropy or linear_vs_optimal)");
}

/// Reads one JSON object section, recording every value it hands out and
/// rejecting keys nobody asked for.
class Section {
public:
  Section(const json& parent, std::string name, std::string path = {})
      : path_(path.empty() ? name : path + "." + name) {
    if (parent.contains(name)) {
      src_ = parent.at(name);
      if (!src_.is_object()) throw config_error(path_ + ": expected an object");
    } else {
      src_ = json::object();
    }
  }

  template <class T>
  T get(const std::string& key, T fallback) {
    used_.insert(key);
    T v = fallback;
    if (src_.contains(key)) {
      try {
        v = src_.at(key).get<T>();
      } catch (const json::exception&) {
        throw config_error(path_ + "." + key + ": wrong type (got " + src_.at(key).dump() + ")");
      }
    }
    echo_[key] = v;
    return v;
  }

  template <class T>
  std::optional<T> optional(const std::string& key) {
    used_.insert(key);
    if (!src_.contains(key) || src_.at(key).is_null()) return std::nullopt;
    try {
      T v = src_.at(key).get<T>();
      echo_[key] = v;
      return v;
    } catch (const json::exception&) {
      throw config_error(path_ + "." + key + ": wrong type (got " + src_.at(key).dump() + ")");
    }
  }

  /// A list that may also be given as a single scalar.
  template <class T>
  std::vector<T> list(const std::string& key, std::vector<T> fallback) {
    used_.insert(key);
    std::vector<T> v = std::move(fallback);
    if (src_.contains(key)) {
      const json& x = src_.at(key);
      try {
        v = x.is_array() ? x.get<std::vector<T>>() : std::vector<T>{x.get<T>()};
      } catch (const json::exception&) {
        throw config_error(path_ + "." + key + ": wrong type (got " + x.dump() + ")");
      }
    }
    if (v.empty()) throw config_error(path_ + "." + key + ": list must not be empty");
    echo_[key] = v;
    return v;
  }

  void check(bool ok, const std::string& key, const std::string& what) const {
    if (!ok) throw config_error(path_ + "." + key + ": " + what);
  }

  /// Throws on keys that were never read.
  void finish() const {
    for (auto it = src_.begin(); it != src_.end(); ++it)
      if (!used_.count(it.key())) throw config_error(path_ + "." + it.key() + ": unknown field");
  }

  [[nodiscard]] const json& echo() const noexcept { return echo_; }
  [[nodiscard]] const std::string& path() const noexcept { return path_; }

private:
  std::string path_;
  json src_;
  json echo_ = json::object();
  std::set<std::string> used_;
};

struct OptimizerSettings {
  std::size_t budget = 30000;      ///< evaluations per sweep point, split across instances
  std::size_t n_instances = 1;
  double amplitude_step = 0.3;
  double f_tolerance = 1e-14;
  double x_tolerance = 1e-10;
  double restart_step_factor = 0.5;
  std::size_t max_restarts = 1000;
  std::optional<StartPolicy> start;  ///< unset: the study's default
  double random_start_scale = 0.5;
  bool optimize_frequencies = false;
  bool adaptive = false;             ///< dimension-dependent simplex coefficients
};

struct ExperimentConfig {
  Study study = Study::TwoQubit;
  std::string name;
  std::uint64_t master_seed = 1;
  unsigned workers = 1;
  std::size_t n_steps = 500;
  bool trace = false;

  OptimizerSettings optimizer;

  // timing: explicit T, or a multiple of the computed T_QSL
  std::optional<double> total_time;
  double qsl_multiple = 2.0;
  std::size_t scan_points = 2001;

  // two-qubit model
  double e_c = 1.0;
  double e_j = -1.0;
  std::vector<std::string> targets;

  // LMG model
  double lmg_gamma = 0.0;
  double lmg_j = 1.0;
  double initial_field = 10.0;  ///< psi0 = ground state here
  double final_field = 0.0;     ///< target = ground state here
  double ramp_start = 10.0;     ///< start value of the linear pulse guess

  // chain model
  double chain_j = 1.0;
  std::string chain_positions = "unit";  ///< unit: x_n in [0, 1]; integer: x_n = n
  double curvature = 2.0;

  // ansatz and cost
  std::vector<std::size_t> n_components;
  std::vector<double> nc_per_site;  ///< chain: Nc = round(ratio * N) (used when non-empty)
  std::vector<bool> randomized;
  std::string regularizer = "polynomial_bump";
  std::vector<std::string> costs;
  double alpha = 1.0;
  double fluence_weight = 0.0;
  std::size_t fluence_refinement = 4;
  std::optional<Robustness> robustness;

  // sweep axes
  std::vector<int> sizes;
  std::vector<double> times;

  // diagnostics
  int k_levels = 25;
  std::size_t stride = 10;
  std::optional<std::string> pulse_file;

  json echo;  ///< effective configuration
};

inline StartPolicy start_policy_from_string(const std::string& s, const std::string& where) {
  if (s == "zero") return StartPolicy::Zero;
  if (s == "shared_random") return StartPolicy::SharedRandom;
  if (s == "per_instance_random") return StartPolicy::PerInstanceRandom;
  throw config_error(where + ": unknown start policy '" + s + "' (expected zero, shared_random or per_instance_random)");
}

inline std::string to_string(StartPolicy p) {
  switch (p) {
    case StartPolicy::Zero: return "zero";
    case StartPolicy::SharedRandom: return "shared_random";
    case StartPolicy::PerInstanceRandom: return "per_instance_random";
  }
  return "?";
}

inline const std::set<std::string>& two_qubit_target_names() {
  static const std::set<std::string> names{"11", "uniform", "bell"};
  return names;
}

/// Parses and validates a configuration document. Study-dependent defaults
/// follow the shipped example configs.
inline ExperimentConfig parse_config(const json& root) {
  if (!root.is_object()) throw config_error("config: expected a JSON object at top level");
  ExperimentConfig c;
  json echo = json::object();
  std::set<std::string> top_used{"study", "name", "seed", "workers", "propagation", "timing", "model",
                                 "ansatz",  "cost", "optimizer", "sweep", "output", "diagnostics"};
  for (auto it = root.begin(); it != root.end(); ++it)
    if (!top_used.count(it.key())) throw config_error(it.key() + ": unknown top-level field");

  if (!root.contains("study") || !root.at("study").is_string()) throw config_error("study: required string field");
  c.study = study_from_string(root.at("study").get<std::string>());
  echo["study"] = to_string(c.study);
  const bool lmg = c.study == Study::LmgTransition || c.study == Study::LmgEntropy || c.study == Study::LinearVsOptimal;

  auto top = [&](const char* key, auto fallback) {
    using T = decltype(fallback);
    T v = fallback;
    if (root.contains(key)) {
      try {
        v = root.at(key).get<T>();
      } catch (const json::exception&) {
        throw config_error(std::string(key) + ": wrong type (got " + root.at(key).dump() + ")");
      }
    }
    echo[key] = v;
    return v;
  };
  c.name = top("name", to_string(c.study));
  c.master_seed = top("seed", std::uint64_t{1});
  c.workers = top("workers", 1u);
  if (c.workers < 1) throw config_error("workers: must be >= 1");

  {
    Section s(root, "propagation");
    const std::size_t def = c.study == Study::TwoQubit ? 500 : c.study == Study::ChainTransfer ? 200 : 400;
    c.n_steps = s.get<std::size_t>("n_steps", def);
    s.check(c.n_steps >= 1, "n_steps", "must be >= 1");
    c.fluence_refinement = s.get<std::size_t>("fluence_refinement", 4);
    s.check(c.fluence_refinement >= 1, "fluence_refinement", "must be >= 1");
    s.finish();
    echo["propagation"] = s.echo();
  }

  {
    Section s(root, "model");
    switch (c.study) {
      case Study::TwoQubit:
        c.e_c = s.get("e_c", 1.0);
        c.e_j = s.get("e_j", -1.0);
        s.check(c.e_c != 0.0 && std::isfinite(c.e_c), "e_c", "must be finite and nonzero");
        s.check(c.e_j != 0.0 && std::isfinite(c.e_j), "e_j", "must be finite and nonzero");
        break;
      case Study::ChainTransfer:
        c.chain_j = s.get("j", 1.0);
        c.chain_positions = s.get<std::string>("positions", "unit");
        s.check(c.chain_positions == "unit" || c.chain_positions == "integer", "positions", "expected unit or integer");
        c.curvature = s.get("curvature", 2.0);
        s.check(c.curvature > 0.0, "curvature", "must be positive");
        break;
      default:
        c.lmg_gamma = s.get("gamma", 0.0);
        c.lmg_j = s.get("j", 1.0);
        c.initial_field = s.get("initial_field", 10.0);
        c.final_field = s.get("final_field", 0.0);
        s.check(c.initial_field != c.final_field, "final_field", "must differ from initial_field");
        break;
    }
    s.finish();
    echo["model"] = s.echo();
  }

  {
    Section s(root, "timing");
    c.total_time = s.optional<double>("total_time");
    if (c.total_time) s.check(*c.total_time > 0.0, "total_time", "must be positive");
    if (c.study == Study::TwoQubit) {
      if (!c.total_time) c.total_time = pi / std::abs(c.e_j);
    } else if (c.study != Study::LmgEntropy) {
      c.qsl_multiple = s.get("qsl_multiple", 2.0);
      s.check(c.qsl_multiple > 0.0, "qsl_multiple", "must be positive");
      c.scan_points = s.get<std::size_t>("scan_points", 2001);
      s.check(c.scan_points >= 3, "scan_points", "must be >= 3");
    }
    s.finish();
    echo["timing"] = s.echo();
  }

  {
    Section s(root, "ansatz");
    if (c.study == Study::LinearVsOptimal) {
      s.finish();
    } else {
      if (c.study == Study::ChainTransfer && root.contains("ansatz") && root.at("ansatz").contains("nc_per_site")) {
        c.nc_per_site = s.list<double>("nc_per_site", {});
        for (double r : c.nc_per_site) s.check(r > 0.0, "nc_per_site", "ratios must be positive");
      } else {
        const std::vector<std::size_t> def = c.study == Study::TwoQubit        ? std::vector<std::size_t>{1, 2, 3, 4, 5, 6}
                                             : c.study == Study::LmgTransition ? std::vector<std::size_t>{1, 2, 3, 4, 5, 6, 7, 8}
                                             : c.study == Study::LmgEntropy    ? std::vector<std::size_t>{4}
                                                                               : std::vector<std::size_t>{2, 4, 6, 8};
        c.n_components = s.list<std::size_t>("n_components", def);
      }
      c.randomized = s.list<bool>("randomized", c.study == Study::TwoQubit ? std::vector<bool>{true, false}
                                                                           : std::vector<bool>{false});
      c.regularizer = s.get<std::string>("regularizer", "polynomial_bump");
      try {
        regularizer_from_string(c.regularizer);
      } catch (const parse_error& e) {
        throw config_error("ansatz.regularizer: " + std::string(e.what()));
      }
      if (c.study == Study::LmgTransition) {
        c.ramp_start = s.get("ramp_start", c.initial_field);
      } else if (c.study == Study::LmgEntropy) {
        c.ramp_start = s.get("ramp_start", 1.0);
      }
      s.finish();
    }
    echo["ansatz"] = s.echo();
  }
  if (c.study == Study::LinearVsOptimal) c.ramp_start = c.initial_field;

  {
    Section s(root, "cost");
    if (c.study == Study::TwoQubit) {
      c.targets = s.list<std::string>("targets", {"11", "uniform", "bell"});
      for (const auto& t : c.targets)
        s.check(two_qubit_target_names().count(t) == 1, "targets", "unknown target '" + t + "' (expected 11, uniform or bell)");
    }
    if (c.study == Study::LmgTransition) {
      c.costs = s.list<std::string>("kinds", {"infidelity"});
      for (const auto& k : c.costs)
        s.check(k == "infidelity" || k == "final_energy", "kinds", "unknown cost '" + k + "' (expected infidelity or final_energy)");
    }
    if (c.study != Study::LinearVsOptimal) {
      c.alpha = s.get("alpha", 1.0);
      s.check(c.alpha > 0.0, "alpha", "must be positive");
      c.fluence_weight = s.get("fluence_weight", c.study == Study::TwoQubit ? 0.1 : 0.0);
      s.check(c.fluence_weight >= 0.0, "fluence_weight", "must be non-negative");
      if (root.contains("cost") && root.at("cost").contains("robustness")) {
        Section r(root.at("cost"), "robustness", "cost");
        Robustness rob;
        rob.n_samples = r.get<std::size_t>("n_samples", 10);
        rob.epsilon = r.get("epsilon", 0.0);
        const auto target = r.get<std::string>("target", "control_amplitude");
        r.check(target == "control_amplitude" || target == "initial_state", "target",
                "expected control_amplitude or initial_state");
        rob.target = target == "initial_state" ? PerturbationTarget::InitialState : PerturbationTarget::ControlAmplitude;
        rob.seed = r.get<std::uint64_t>("seed", 0);
        r.check(rob.n_samples >= 1, "n_samples", "must be >= 1");
        r.check(rob.epsilon >= 0.0, "epsilon", "must be non-negative");
        r.finish();
        s.get<json>("robustness", r.echo());
        c.robustness = rob;
      }
    }
    s.finish();
    echo["cost"] = s.echo();
  }

  {
    Section s(root, "optimizer");
    if (c.study != Study::LinearVsOptimal) {
      auto& o = c.optimizer;
      o.budget = s.get<std::size_t>("budget", c.study == Study::LmgTransition ? 6000 : c.study == Study::ChainTransfer ? 20000 : 30000);
      o.n_instances = s.get<std::size_t>("n_instances", c.study == Study::TwoQubit ? 30 : 1);
      s.check(o.n_instances >= 1, "n_instances", "must be >= 1");
      s.check(o.budget >= o.n_instances, "budget", "must be at least one evaluation per instance");
      o.amplitude_step = s.get("amplitude_step", 0.3);
      s.check(o.amplitude_step > 0.0, "amplitude_step", "must be positive");
      o.f_tolerance = s.get("f_tolerance", 1e-14);
      o.x_tolerance = s.get("x_tolerance", 1e-10);
      o.restart_step_factor = s.get("restart_step_factor", 0.5);
      s.check(o.restart_step_factor > 0.0 && o.restart_step_factor <= 1.0, "restart_step_factor", "must lie in (0, 1]");
      o.max_restarts = s.get<std::size_t>("max_restarts", 1000);
      // two-qubit default: the study picks shared starts for randomized
      // frequencies and per-instance starts for fixed harmonics
      if (auto st = s.optional<std::string>("start")) o.start = start_policy_from_string(*st, s.path() + ".start");
      o.random_start_scale = s.get("random_start_scale", 0.5);
      s.check(o.random_start_scale >= 0.0, "random_start_scale", "must be non-negative");
      o.optimize_frequencies = s.get("optimize_frequencies", false);
      o.adaptive = s.get("adaptive", c.study == Study::ChainTransfer);
    }
    s.finish();
    echo["optimizer"] = s.echo();
  }

  {
    Section s(root, "sweep");
    switch (c.study) {
      case Study::TwoQubit: break;
      case Study::LmgTransition: c.sizes = s.list<int>("sizes", {10, 16, 32, 50, 64}); break;
      case Study::ChainTransfer: c.sizes = s.list<int>("sizes", {8, 12, 16}); break;
      case Study::LmgEntropy:
        c.sizes = s.list<int>("sizes", {10, 32, 100});
        c.times = s.list<double>("times", {1, 2, 3, 4, 6, 8, 10});
        for (double t : c.times) s.check(t > 0.0, "times", "must be positive");
        break;
      case Study::LinearVsOptimal: c.sizes = s.list<int>("sizes", {50}); break;
    }
    for (int n : c.sizes) s.check(n >= 2, "sizes", "need at least two spins");
    if (c.study == Study::LmgEntropy)
      for (int n : c.sizes) s.check(n % 2 == 0, "sizes", "entropy study uses L = N/2; sizes must be even");
    s.finish();
    echo["sweep"] = s.echo();
  }

  {
    Section s(root, "diagnostics");
    if (c.study == Study::LinearVsOptimal) {
      c.k_levels = s.get("k_levels", 25);
      s.check(c.k_levels >= 1, "k_levels", "must be >= 1");
      c.stride = s.get<std::size_t>("stride", 10);
      s.check(c.stride >= 1, "stride", "must be >= 1");
      c.pulse_file = s.optional<std::string>("pulse_file");
    }
    s.finish();
    echo["diagnostics"] = s.echo();
  }

  {
    Section s(root, "output");
    c.trace = s.get("trace", false);
    s.finish();
    echo["output"] = s.echo();
  }

  (void)lmg;
  c.echo = std::move(echo);
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  json j;
  try {
    j = read_json_file(path);
  } catch (const parse_error& e) {
    throw config_error(e.what());
  }
  return parse_config(j);
}

}  // namespace crab::harness
