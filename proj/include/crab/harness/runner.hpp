#pragma once

// Output directory layout, manifest, and pulse replay.

#include "crab/harness/studies.hpp"

#include <ctime>
#include <filesystem>

#ifndef CRAB_VERSION
#define CRAB_VERSION "0.1.0"
#endif

namespace crab::harness {

inline constexpr const char* tool_version = CRAB_VERSION;
inline constexpr const char* out_dir_env = "CRAB_OUT_DIR";

/// --out-dir, else $CRAB_OUT_DIR, else ./crab-out.
inline std::string resolve_out_dir(const std::optional<std::string>& flag) {
  if (flag && !flag->empty()) return *flag;
  if (const char* e = std::getenv(out_dir_env); e && *e) return e;
  return "crab-out";
}

inline std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline json build_manifest(const ExperimentConfig& c, const StudyOutput& out, double wall_seconds, const std::string& started) {
  json m;
  m["tool"] = "crab";
  m["version"] = tool_version;
  m["study"] = to_string(c.study);
  m["name"] = c.name;
  m["config"] = c.echo;
  m["points"] = out.points;
  m["summary"] = out.summary;
  m["files"] = json::array();
  for (const auto& [name, t] : out.tables) m["files"].push_back({{"path", name}, {"rows", t.size()}});
  for (const auto& [name, doc] : out.pulses) m["files"].push_back({{"path", name}, {"kind", "pulse"}});
  m["started_at"] = started;
  m["wall_clock_seconds"] = wall_seconds;
  return m;
}

/// Writes every table, pulse document and the manifest under out_dir.
inline void write_outputs(const std::string& out_dir, const StudyOutput& out, const json& manifest) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  for (const auto& [name, t] : out.tables) write_text_file((fs::path(out_dir) / name).string(), t.str());
  for (const auto& [name, doc] : out.pulses) {
    const auto path = fs::path(out_dir) / name;
    fs::create_directories(path.parent_path());
    write_pulse(path.string(), doc);
  }
  write_text_file((fs::path(out_dir) / "manifest.json").string(), manifest.dump(2) + "\n");
}

struct RunResult {
  StudyOutput output;
  json manifest;
};

inline RunResult run_study(const ExperimentConfig& c, const std::optional<std::string>& out_dir) {
  const auto started = utc_timestamp();
  const auto t0 = std::chrono::steady_clock::now();
  RunResult r{execute_study(c), {}};
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.manifest = build_manifest(c, r.output, wall, started);
  if (out_dir) write_outputs(*out_dir, r.output, r.manifest);
  return r;
}

// ---------------------------------------------------------------------------
// Replay

struct ReplayResult {
  double stored_cost = 0.0;
  double replayed_cost = 0.0;
  std::size_t n_steps = 0;
  [[nodiscard]] double relative_difference() const {
    const double scale = std::max(std::abs(stored_cost), std::numeric_limits<double>::min());
    return std::abs(replayed_cost - stored_cost) / scale;
  }
};

namespace detail {

template <class T>
T context_field(const PulseDocument& doc, const char* key) {
  if (!doc.context.contains(key)) throw parse_error(std::string("pulse document: context lacks '") + key + "'");
  try {
    return doc.context.at(key).get<T>();
  } catch (const json::exception&) {
    throw parse_error(std::string("pulse document: context field '") + key + "' has the wrong type");
  }
}

template <HamiltonianModel M>
double replay_cost(ControlProblem<M> problem, const PulseDocument& doc) {
  if (doc.controls.size() != problem.model.control_arity())
    throw config_error("replay: pulse has " + std::to_string(doc.controls.size()) + " control fields, the model expects " +
                       std::to_string(problem.model.control_arity()));
  for (const auto& f : doc.controls)
    if (std::abs(f.total_time() - problem.total_time) > 1e-9 * problem.total_time)
      throw config_error("replay: pulse duration " + format_double(f.total_time()) + " does not match T = " +
                         format_double(problem.total_time) + " implied by the config");
  problem.total_time = doc.controls.front().total_time();
  return evaluate(problem, doc.controls).total;
}

}  // namespace detail

/// Recomputes the cost of a stored pulse under `c`. n_steps defaults to the
/// value recorded in the pulse document.
inline ReplayResult replay_pulse(const PulseDocument& doc, ExperimentConfig c, std::optional<std::size_t> n_steps = {}) {
  const auto study = study_from_string(detail::context_field<std::string>(doc, "study"));
  if (study != c.study)
    throw config_error("replay: pulse belongs to study '" + to_string(study) + "' but the config is for '" +
                       to_string(c.study) + "'");
  c.n_steps = n_steps ? *n_steps : detail::context_field<std::size_t>(doc, "n_steps");
  ReplayResult r{doc.best_cost, 0.0, c.n_steps};
  switch (study) {
    case Study::TwoQubit:
      r.replayed_cost = detail::replay_cost(two_qubit_problem(c, detail::context_field<std::string>(doc, "target")), doc);
      break;
    case Study::LmgTransition: {
      const int n = detail::context_field<int>(doc, "n_spins");
      r.replayed_cost = detail::replay_cost(lmg_problem(c, lmg_setup(c, n), detail::context_field<std::string>(doc, "cost")), doc);
      break;
    }
    case Study::ChainTransfer:
      r.replayed_cost = detail::replay_cost(chain_problem(c, chain_setup(c, detail::context_field<int>(doc, "n_spins"))), doc);
      break;
    case Study::LmgEntropy: {
      const auto s = entropy_setup(c, detail::context_field<int>(doc, "n_spins"));
      r.replayed_cost = detail::replay_cost(entropy_problem(c, s, detail::context_field<double>(doc, "total_time")), doc);
      break;
    }
    case Study::LinearVsOptimal: throw config_error("replay: linear_vs_optimal configs hold no optimized pulses");
  }
  return r;
}

}  // namespace crab::harness
