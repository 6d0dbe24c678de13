#pragma once

// The five studies: problem builders (shared with replay), sweeps, and the
// instantaneous-population diagnostics.

#include "crab/harness/config.hpp"
#include "crab/models.hpp"

#include <atomic>
#include <cstring>
#include <deque>
#include <chrono>
#include <mutex>
#include <thread>

namespace crab::harness {

/// Runs fn(0..n-1) on up to `workers` threads. The first exception wins and
/// is rethrown after all threads finish.
template <class F>
void parallel_for(std::size_t n, unsigned workers, F&& fn) {
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex m;
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(m);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

/// Seed of one sweep point, derived from its coordinates rather than its
/// position in the sweep, so subsetting a sweep does not change results.
inline std::uint64_t point_seed(std::uint64_t master, std::initializer_list<std::uint64_t> key) {
  std::uint64_t s = master;
  for (auto k : key) s = derive_seed(s, k);
  return s;
}

inline std::uint64_t string_key(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (unsigned char c : s) h = (h ^ c) * 1099511628211ULL;
  return h;
}

inline CrabOptions crab_options(const ExperimentConfig& c) {
  CrabOptions o;
  o.simplex.f_tolerance = c.optimizer.f_tolerance;
  o.simplex.x_tolerance = c.optimizer.x_tolerance;
  o.simplex.restart_step_factor = c.optimizer.restart_step_factor;
  o.simplex.max_restarts = c.optimizer.max_restarts;
  o.simplex.adaptive = c.optimizer.adaptive;
  o.simplex.max_evals = c.optimizer.budget;
  o.amplitude_step = c.optimizer.amplitude_step;
  o.start = c.optimizer.start.value_or(StartPolicy::Zero);
  o.random_start_scale = c.optimizer.random_start_scale;
  o.optimize_frequencies = c.optimizer.optimize_frequencies;
  return o;
}

inline CostSpec cost_spec(const ExperimentConfig& c, CostSpec::Primary primary, std::size_t n_controls) {
  CostSpec s;
  s.primary = std::move(primary);
  s.alpha = c.alpha;
  s.fluence_weights.assign(n_controls, c.fluence_weight);
  s.robustness = c.robustness;
  return s;
}

inline json params_json(const std::vector<ControlField>& controls) {
  json a = json::array();
  for (const auto& f : controls) a.push_back(to_json(f));
  return a;
}

/// Result tables and per-point records of one study run.
struct StudyOutput {
  std::deque<std::pair<std::string, CsvWriter>> tables;  // deque: table() references stay valid
  std::vector<std::pair<std::string, PulseDocument>> pulses;  ///< relative path, document
  json points = json::array();
  json summary = json::object();

  CsvWriter& table(const std::string& name, std::vector<std::string> header) {
    for (auto& [n, t] : tables)
      if (n == name) return t;
    tables.emplace_back(name, CsvWriter(std::move(header)));
    return tables.back().second;
  }
  [[nodiscard]] const CsvWriter* find(const std::string& name) const {
    for (const auto& [n, t] : tables)
      if (n == name) return &t;
    return nullptr;
  }
};

// ---------------------------------------------------------------------------
// Two coupled charge qubits

inline QuantumState two_qubit_target(const std::string& name) {
  CVector g(4);
  if (name == "11") {
    g << 0, 0, 0, 1;
  } else if (name == "uniform") {
    g << 0.5, 0.5, 0.5, 0.5;
  } else if (name == "bell") {
    g << 1.0 / std::sqrt(2.0), 0, 0, 1.0 / std::sqrt(2.0);
  } else {
    throw config_error("unknown two-qubit target '" + name + "'");
  }
  return QuantumState::normalized(g);
}

inline ControlProblem<TwoQubitJosephson> two_qubit_problem(const ExperimentConfig& c, const std::string& target) {
  ControlProblem<TwoQubitJosephson> p{TwoQubitJosephson{c.e_c, c.e_j}, QuantumState::basis(4, 0), *c.total_time,
                                      PropagationConfig{c.n_steps, std::nullopt},
                                      cost_spec(c, term::Infidelity{two_qubit_target(target)}, 1)};
  p.fluence_refinement = c.fluence_refinement;
  return p;
}

inline std::uint64_t two_qubit_seed(const ExperimentConfig& c, const std::string& target, std::size_t nc, bool randomized) {
  return point_seed(c.master_seed, {1, string_key(target), nc, randomized ? 1u : 0u});
}

inline StudyOutput run_two_qubit(const ExperimentConfig& c) {
  StudyOutput out;
  auto& inst = out.table("two_qubit_instances.csv", {"target", "Nc", "randomized", "instance", "seed", "best_infidelity",
                                                     "best_cost", "fluence", "n_evals"});
  auto& best = out.table("two_qubit_best.csv", {"target", "Nc", "randomized", "best_instance", "best_infidelity",
                                                "best_cost", "min_infidelity", "max_infidelity"});
  CsvWriter* trace = c.trace ? &out.table("two_qubit_trace.csv", {"target", "Nc", "randomized", "instance", "eval", "best_cost"})
                             : nullptr;
  const auto reg = regularizer_from_string(c.regularizer);

  for (const auto& target : c.targets) {
    const auto problem = two_qubit_problem(c, target);
    for (std::size_t nc : c.n_components) {
      for (bool rnd : c.randomized) {
        std::vector<ControlAnsatz> ansatz{{BaseGuess::constant(1.0), nc, rnd, std::nullopt, reg}};
        CrabOptions opt = crab_options(c);
        // randomized: fresh w per instance from one shared amplitude start;
        // fixed harmonics: fresh amplitude start per instance
        if (!c.optimizer.start)
          opt.start = rnd ? StartPolicy::SharedRandom : StartPolicy::PerInstanceRandom;
        const std::uint64_t seed = two_qubit_seed(c, target, nc, rnd);
        const auto ms = multi_start(problem, ansatz, opt, seed,
                                    MultiStartOptions{c.optimizer.n_instances, c.optimizer.budget, true, c.workers});

        double fmin = 1.0, fmax = 0.0;
        json instances = json::array();
        for (std::size_t i = 0; i < ms.runs.size(); ++i) {
          const auto& r = ms.runs[i];
          fmin = std::min(fmin, r.best.f);
          fmax = std::max(fmax, r.best.f);
          inst.add(CsvWriter::Row() << target << static_cast<int>(nc) << rnd << static_cast<int>(i) << r.result.seed
                                    << r.best.f << r.result.best_cost << r.best.fluences.at(0) << r.result.n_evals);
          instances.push_back({{"instance", i},
                               {"seed", r.result.seed},
                               {"best_cost", r.result.best_cost},
                               {"best_infidelity", r.best.f},
                               {"fluence", r.best.fluences.at(0)},
                               {"n_evals", r.result.n_evals},
                               {"restarts", r.result.restarts},
                               {"controls", params_json(r.controls)}});
          if (trace)
            for (const auto& tp : r.result.trace)
              trace->add(CsvWriter::Row() << target << static_cast<int>(nc) << rnd << static_cast<int>(i) << tp.eval
                                          << tp.best_cost);
        }
        const auto& b = ms.best();
        best.add(CsvWriter::Row() << target << static_cast<int>(nc) << rnd << static_cast<int>(ms.best_instance) << b.best.f
                                  << b.result.best_cost << fmin << fmax);

        json ctx{{"study", to_string(Study::TwoQubit)},
                 {"target", target},
                 {"n_components", nc},
                 {"randomized", rnd},
                 {"instance", ms.best_instance},
                 {"seed", b.result.seed},
                 {"n_steps", c.n_steps},
                 {"total_time", problem.total_time}};
        const std::string file = "pulses/two_qubit_" + target + "_Nc" + std::to_string(nc) + (rnd ? "_randomized" : "_fixed") + ".json";
        out.pulses.emplace_back(file, PulseDocument{b.controls, b.result.best_cost, ctx});
        out.points.push_back({{"target", target},
                              {"n_components", nc},
                              {"randomized", rnd},
                              {"point_seed", seed},
                              {"best_instance", ms.best_instance},
                              {"best_cost", b.result.best_cost},
                              {"best_infidelity", b.best.f},
                              {"pulse_file", file},
                              {"instances", instances}});
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// LMG: transition through the critical point

struct LmgSetup {
  int n_spins = 0;
  SectorModel<LmgDicke> sector;
  ProblemTiming timing;
  double total_time = 0.0;
  QuantumState initial;
  QuantumState target;
};

inline LmgSetup lmg_setup(const ExperimentConfig& c, int n, bool with_timing = true) {
  LmgDicke m{n, c.lmg_gamma, c.lmg_j};
  auto sector = lmg_parity_sector(m);
  LmgSetup s{n, sector, {}, 0.0, ground_state(sector, {c.initial_field}), ground_state(sector, {c.final_field})};
  if (with_timing) {
    const double lo = std::min(c.initial_field, c.final_field), hi = std::max(c.initial_field, c.final_field);
    const auto scan = refined_gap_scan(sector, lo, hi, c.scan_points);
    s.timing = ProblemTiming::from_gap(scan.gap_min, scan.argmin, c.qsl_multiple);
    s.total_time = c.total_time ? *c.total_time : s.timing.total_time;
  }
  return s;
}

inline ControlProblem<SectorModel<LmgDicke>> lmg_problem(const ExperimentConfig& c, const LmgSetup& s,
                                                        const std::string& cost) {
  CostSpec::Primary primary = term::Infidelity{s.target};
  if (cost == "final_energy") {
    const std::vector<double> u{c.final_field};
    primary = term::FinalEnergy{s.sector.hamiltonian(u).cast<cplx>()};
  }
  ControlProblem<SectorModel<LmgDicke>> p{s.sector, s.initial, s.total_time, PropagationConfig{c.n_steps, std::nullopt},
                                         cost_spec(c, std::move(primary), 1)};
  p.fluence_refinement = c.fluence_refinement;
  return p;
}

template <class M>
double uncorrected_infidelity(const M& model, const QuantumState& psi0, const QuantumState& target,
                              std::vector<ControlField> controls, double T, std::size_t n_steps) {
  const auto r = propagate(model, controls, psi0, T, PropagationConfig{n_steps, std::nullopt});
  return infidelity(r.final_state, target);
}

inline StudyOutput run_lmg_transition(const ExperimentConfig& c) {
  StudyOutput out;
  auto& tab = out.table("lmg_transition.csv", {"N", "Nc", "cost", "randomized", "gap_min", "t_qsl", "total_time",
                                               "baseline_infidelity", "guess_infidelity", "optimized_infidelity",
                                               "best_cost", "n_evals"});
  const auto reg = regularizer_from_string(c.regularizer);

  std::vector<LmgSetup> setups;
  for (int n : c.sizes) setups.push_back(lmg_setup(c, n));
  std::vector<double> baseline(setups.size()), guess(setups.size());
  parallel_for(setups.size(), c.workers, [&](std::size_t i) {
    const auto& s = setups[i];
    baseline[i] = uncorrected_infidelity(s.sector, s.initial, s.target,
                                         {ControlField::uncorrected(BaseGuess::linear(c.initial_field, c.final_field), s.total_time)},
                                         s.total_time, c.n_steps);
    guess[i] = uncorrected_infidelity(s.sector, s.initial, s.target,
                                      {ControlField::uncorrected(BaseGuess::linear(c.ramp_start, c.final_field), s.total_time)},
                                      s.total_time, c.n_steps);
  });

  struct Point {
    std::size_t setup;
    std::size_t nc;
    std::string cost;
    bool randomized;
  };
  std::vector<Point> pts;
  for (std::size_t i = 0; i < setups.size(); ++i)
    for (std::size_t nc : c.n_components)
      for (const auto& cost : c.costs)
        for (bool rnd : c.randomized) pts.push_back({i, nc, cost, rnd});

  std::vector<MultiStartResult> results(pts.size());
  std::vector<double> opt_inf(pts.size());
  parallel_for(pts.size(), c.workers, [&](std::size_t k) {
    const auto& pt = pts[k];
    const auto& s = setups[pt.setup];
    const auto problem = lmg_problem(c, s, pt.cost);
    std::vector<ControlAnsatz> ansatz{{BaseGuess::linear(c.ramp_start, c.final_field), pt.nc, pt.randomized, std::nullopt, reg}};
    const auto seed = point_seed(c.master_seed, {2, static_cast<std::uint64_t>(s.n_spins), pt.nc, string_key(pt.cost), pt.randomized});
    results[k] = multi_start(problem, ansatz, crab_options(c), seed,
                             MultiStartOptions{c.optimizer.n_instances, c.optimizer.budget, true, 1});
    const auto& b = results[k].best();
    opt_inf[k] = pt.cost == "infidelity"
                     ? b.best.f
                     : uncorrected_infidelity(s.sector, s.initial, s.target, b.controls, s.total_time, c.n_steps);
  });

  for (std::size_t k = 0; k < pts.size(); ++k) {
    const auto& pt = pts[k];
    const auto& s = setups[pt.setup];
    const auto& b = results[k].best();
    tab.add(CsvWriter::Row() << s.n_spins << static_cast<int>(pt.nc) << pt.cost << pt.randomized << s.timing.gap_min
                             << s.timing.t_qsl << s.total_time << baseline[pt.setup] << guess[pt.setup] << opt_inf[k]
                             << b.result.best_cost << results[k].total_evals());
    json ctx{{"study", to_string(Study::LmgTransition)}, {"n_spins", s.n_spins}, {"n_components", pt.nc},
             {"cost", pt.cost}, {"randomized", pt.randomized}, {"seed", b.result.seed},
             {"n_steps", c.n_steps}, {"total_time", s.total_time}};
    const std::string file = "pulses/lmg_N" + std::to_string(s.n_spins) + "_Nc" + std::to_string(pt.nc) + "_" + pt.cost +
                             (pt.randomized ? "_randomized" : "") + ".json";
    out.pulses.emplace_back(file, PulseDocument{b.controls, b.result.best_cost, ctx});
    out.points.push_back({{"n_spins", s.n_spins},
                          {"n_components", pt.nc},
                          {"cost", pt.cost},
                          {"randomized", pt.randomized},
                          {"gap_min", s.timing.gap_min},
                          {"gap_argmin", s.timing.argmin},
                          {"t_qsl", s.timing.t_qsl},
                          {"total_time", s.total_time},
                          {"baseline_infidelity", baseline[pt.setup]},
                          {"guess_infidelity", guess[pt.setup]},
                          {"optimized_infidelity", opt_inf[k]},
                          {"best_cost", b.result.best_cost},
                          {"best_instance", results[k].best_instance},
                          {"seed", b.result.seed},
                          {"n_evals", results[k].total_evals()},
                          {"pulse_file", file},
                          {"controls", params_json(b.controls)}});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Spin chain: end-to-end transfer with a moving parabolic field

/// The baseline path as a one-control model: s in [0, 1] moves the field
/// minimum from the first to the last site at fixed curvature.
struct ChainBaselinePath {
  using scalar_type = double;
  SpinChainTransfer chain;
  double curvature;

  [[nodiscard]] Index dimension() const noexcept { return chain.dimension(); }
  [[nodiscard]] std::size_t control_arity() const noexcept { return 1; }
  [[nodiscard]] RMatrix hamiltonian(std::span<const double> u) const {
    const double x0 = chain.position(0), x1 = chain.position(chain.n_spins - 1);
    return chain.build(x0 + (x1 - x0) * u[0], curvature);
  }
};

struct ChainSetup {
  int n_spins = 0;
  SpinChainTransfer model;
  ProblemTiming timing;
  double total_time = 0.0;
  BaseGuess d_guess;
  BaseGuess c_guess;
};

inline SpinChainTransfer chain_model(const ExperimentConfig& c, int n) {
  SpinChainTransfer m{n, c.chain_j, {}};
  if (c.chain_positions == "unit")
    for (int k = 0; k < n; ++k) m.positions.push_back(static_cast<double>(k) / static_cast<double>(n - 1));
  return m;
}

inline ChainSetup chain_setup(const ExperimentConfig& c, int n) {
  ChainSetup s;
  s.n_spins = n;
  s.model = chain_model(c, n);
  const auto scan = refined_gap_scan(ChainBaselinePath{s.model, c.curvature}, 0.0, 1.0, c.scan_points);
  s.timing = ProblemTiming::from_gap(scan.gap_min, scan.argmin, c.qsl_multiple);
  s.total_time = c.total_time ? *c.total_time : s.timing.total_time;
  s.d_guess = BaseGuess::linear(s.model.position(0), s.model.position(n - 1));
  s.c_guess = BaseGuess::constant(c.curvature);
  return s;
}

inline ControlProblem<SpinChainTransfer> chain_problem(const ExperimentConfig& c, const ChainSetup& s) {
  ControlProblem<SpinChainTransfer> p{s.model, QuantumState::basis(s.n_spins, 0), s.total_time,
                                      PropagationConfig{c.n_steps, std::nullopt},
                                      cost_spec(c, term::Infidelity{QuantumState::basis(s.n_spins, s.n_spins - 1)}, 2)};
  p.fluence_refinement = c.fluence_refinement;
  return p;
}

inline std::vector<std::size_t> chain_components(const ExperimentConfig& c, int n) {
  std::vector<std::size_t> out;
  if (!c.nc_per_site.empty()) {
    for (double r : c.nc_per_site) out.push_back(std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(r * n))));
  } else {
    out = c.n_components;
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

/// Embeds the amplitudes of a smaller ansatz into a larger one (same fixed
/// frequency rule, so the lower harmonics coincide). Layout per field [A, B].
inline std::vector<double> embed_amplitudes(const std::vector<double>& x, std::size_t n_fields, std::size_t from,
                                            std::size_t to) {
  std::vector<double> y(2 * to * n_fields, 0.0);
  for (std::size_t f = 0; f < n_fields; ++f)
    for (std::size_t q = 0; q < std::min(from, to); ++q) {
      y[f * 2 * to + q] = x[f * 2 * from + q];
      y[f * 2 * to + to + q] = x[f * 2 * from + from + q];
    }
  return y;
}

inline StudyOutput run_chain_transfer(const ExperimentConfig& c) {
  StudyOutput out;
  auto& tab = out.table("chain_transfer.csv", {"N", "Nc", "Nc_over_N", "gap_min", "t_qsl", "total_time", "baseline_infidelity",
                                               "optimized_infidelity", "best_cost", "n_evals"});
  const auto reg = regularizer_from_string(c.regularizer);

  struct SizeResult {
    ChainSetup setup;
    double baseline = 0.0;
    std::vector<std::size_t> ncs;
    std::vector<CrabRun> runs;
    std::vector<std::size_t> evals;
  };
  std::vector<SizeResult> res(c.sizes.size());

  // sizes run in parallel; within a size each Nc starts from the previous optimum
  parallel_for(c.sizes.size(), c.workers, [&](std::size_t i) {
    auto& r = res[i];
    r.setup = chain_setup(c, c.sizes[i]);
    const auto& s = r.setup;
    r.baseline = uncorrected_infidelity(s.model, QuantumState::basis(s.n_spins, 0), QuantumState::basis(s.n_spins, s.n_spins - 1),
                                        {ControlField::uncorrected(s.d_guess, s.total_time),
                                         ControlField::uncorrected(s.c_guess, s.total_time)},
                                        s.total_time, c.n_steps);
    const auto problem = chain_problem(c, s);
    r.ncs = chain_components(c, s.n_spins);
    std::optional<std::vector<double>> warm;
    std::size_t prev_nc = 0;
    for (bool rnd : c.randomized) {
      warm.reset();
      prev_nc = 0;
      for (std::size_t nc : r.ncs) {
        std::vector<ControlAnsatz> ansatz{{s.d_guess, nc, rnd, std::nullopt, reg}, {s.c_guess, nc, rnd, std::nullopt, reg}};
        const auto seed = point_seed(c.master_seed, {3, static_cast<std::uint64_t>(s.n_spins), nc, rnd});
        CrabOptions opt = crab_options(c);
        std::optional<std::vector<double>> x0;
        if (warm && !rnd && !opt.optimize_frequencies) x0 = embed_amplitudes(*warm, 2, prev_nc, nc);
        auto run = crab_optimize(problem, ansatz, opt, seed, x0);
        warm = run.result.best_params;
        prev_nc = nc;
        r.evals.push_back(run.result.n_evals);
        r.runs.push_back(std::move(run));
      }
    }
  });

  for (const auto& r : res) {
    const auto& s = r.setup;
    std::size_t k = 0;
    for (bool rnd : c.randomized) {
      for (std::size_t nc : r.ncs) {
        const auto& run = r.runs[k];
        const double ratio = static_cast<double>(nc) / s.n_spins;
        tab.add(CsvWriter::Row() << s.n_spins << static_cast<int>(nc) << ratio << s.timing.gap_min << s.timing.t_qsl
                                 << s.total_time << r.baseline << run.best.f << run.result.best_cost << r.evals[k]);
        json ctx{{"study", to_string(Study::ChainTransfer)}, {"n_spins", s.n_spins}, {"n_components", nc},
                 {"randomized", rnd}, {"seed", run.result.seed}, {"n_steps", c.n_steps}, {"total_time", s.total_time}};
        const std::string file = "pulses/chain_N" + std::to_string(s.n_spins) + "_Nc" + std::to_string(nc) +
                                 (rnd ? "_randomized" : "") + ".json";
        out.pulses.emplace_back(file, PulseDocument{run.controls, run.result.best_cost, ctx});
        out.points.push_back({{"n_spins", s.n_spins},
                              {"n_components", nc},
                              {"randomized", rnd},
                              {"nc_over_n", ratio},
                              {"gap_min", s.timing.gap_min},
                              {"gap_argmin", s.timing.argmin},
                              {"t_qsl", s.timing.t_qsl},
                              {"total_time", s.total_time},
                              {"baseline_infidelity", r.baseline},
                              {"optimized_infidelity", run.best.f},
                              {"best_cost", run.result.best_cost},
                              {"seed", run.result.seed},
                              {"n_evals", r.evals[k]},
                              {"pulse_file", file},
                              {"controls", params_json(run.controls)}});
        ++k;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// LMG: entanglement generation

struct EntropySetup {
  int n_spins = 0;
  SectorModel<LmgDicke> sector;
  QuantumState initial;
  DickeBipartition bipartition;
};

inline EntropySetup entropy_setup(const ExperimentConfig& c, int n) {
  LmgDicke m{n, c.lmg_gamma, c.lmg_j};
  auto sector = lmg_parity_sector(m);
  return {n, sector, ground_state(sector, {c.initial_field}), DickeBipartition(n, n / 2)};
}

inline ControlProblem<SectorModel<LmgDicke>> entropy_problem(const ExperimentConfig& c, const EntropySetup& s, double T) {
  ControlProblem<SectorModel<LmgDicke>> p{s.sector, s.initial, T, PropagationConfig{c.n_steps, std::nullopt},
                                         cost_spec(c, term::NegEntropyDicke{s.bipartition, s.sector.indices()}, 1)};
  p.fluence_refinement = c.fluence_refinement;
  return p;
}

inline double max_block_entropy(int n_spins) { return std::log2(n_spins / 2 + 1.0); }

inline StudyOutput run_lmg_entropy(const ExperimentConfig& c) {
  StudyOutput out;
  auto& tab = out.table("lmg_entropy.csv", {"N", "L", "Nc", "T", "entropy", "s_max", "ratio", "best_cost", "n_evals"});
  auto& sat = out.table("lmg_entropy_saturation.csv", {"N", "s_saturated", "s_max", "ratio"});
  const auto reg = regularizer_from_string(c.regularizer);

  struct Point {
    std::size_t size;
    double T;
    std::size_t nc;
    bool randomized;
  };
  std::vector<EntropySetup> setups;
  for (int n : c.sizes) setups.push_back(entropy_setup(c, n));
  std::vector<Point> pts;
  for (std::size_t i = 0; i < setups.size(); ++i)
    for (double T : c.times)
      for (std::size_t nc : c.n_components)
        for (bool rnd : c.randomized) pts.push_back({i, T, nc, rnd});

  std::vector<MultiStartResult> results(pts.size());
  parallel_for(pts.size(), c.workers, [&](std::size_t k) {
    const auto& pt = pts[k];
    const auto& s = setups[pt.size];
    const auto problem = entropy_problem(c, s, pt.T);
    std::vector<ControlAnsatz> ansatz{{BaseGuess::constant(c.ramp_start), pt.nc, pt.randomized, std::nullopt, reg}};
    std::uint64_t tkey;
    std::memcpy(&tkey, &pt.T, sizeof tkey);
    const auto seed = point_seed(c.master_seed, {4, static_cast<std::uint64_t>(s.n_spins), tkey, pt.nc, pt.randomized});
    results[k] = multi_start(problem, ansatz, crab_options(c), seed,
                             MultiStartOptions{c.optimizer.n_instances, c.optimizer.budget, true, 1});
  });

  std::vector<double> s_sat(setups.size(), 0.0);
  for (std::size_t k = 0; k < pts.size(); ++k) {
    const auto& pt = pts[k];
    const auto& s = setups[pt.size];
    const auto& b = results[k].best();
    const double ent = b.best.entropy.value_or(0.0), smax = max_block_entropy(s.n_spins);
    s_sat[pt.size] = std::max(s_sat[pt.size], ent);
    tab.add(CsvWriter::Row() << s.n_spins << s.bipartition.block_size << static_cast<int>(pt.nc) << pt.T << ent << smax
                             << ent / smax << b.result.best_cost << results[k].total_evals());
    json ctx{{"study", to_string(Study::LmgEntropy)}, {"n_spins", s.n_spins}, {"n_components", pt.nc},
             {"randomized", pt.randomized}, {"seed", b.result.seed}, {"n_steps", c.n_steps}, {"total_time", pt.T}};
    char tbuf[32];
    std::snprintf(tbuf, sizeof tbuf, "%g", pt.T);
    const std::string file = "pulses/entropy_N" + std::to_string(s.n_spins) + "_T" + tbuf + "_Nc" + std::to_string(pt.nc) +
                             (pt.randomized ? "_randomized" : "") + ".json";
    out.pulses.emplace_back(file, PulseDocument{b.controls, b.result.best_cost, ctx});
    out.points.push_back({{"n_spins", s.n_spins},
                          {"block_size", s.bipartition.block_size},
                          {"n_components", pt.nc},
                          {"randomized", pt.randomized},
                          {"total_time", pt.T},
                          {"entropy", ent},
                          {"s_max", smax},
                          {"best_cost", b.result.best_cost},
                          {"seed", b.result.seed},
                          {"n_evals", results[k].total_evals()},
                          {"pulse_file", file},
                          {"controls", params_json(b.controls)}});
  }

  // least-squares prefactor of s_sat = A log2(N/2 + 1)
  double num = 0.0, den = 0.0;
  json sat_pts = json::array();
  for (std::size_t i = 0; i < setups.size(); ++i) {
    const double smax = max_block_entropy(setups[i].n_spins);
    sat.add(CsvWriter::Row() << setups[i].n_spins << s_sat[i] << smax << s_sat[i] / smax);
    sat_pts.push_back({{"n_spins", setups[i].n_spins}, {"s_saturated", s_sat[i]}, {"s_max", smax}});
    num += s_sat[i] * smax;
    den += smax * smax;
  }
  out.summary["saturation"] = sat_pts;
  out.summary["fit_prefactor"] = num / den;
  return out;
}

// ---------------------------------------------------------------------------
// Instantaneous excitation probabilities along a driving protocol

struct PopulationTrace {
  std::string label;
  int n_spins = 0;
  double total_time = 0.0;
  std::vector<TrajectoryRow> rows;
  double final_infidelity = 0.0;
  [[nodiscard]] double final_p_tot() const { return rows.back().levels.total_excitation; }
  [[nodiscard]] double max_p_tot() const {
    double m = 0.0;
    for (const auto& r : rows) m = std::max(m, r.levels.total_excitation);
    return m;
  }
};

inline PopulationTrace diagnose_protocol(const ExperimentConfig& c, const LmgSetup& s, const std::vector<ControlField>& controls,
                                         std::string label) {
  const Index k = std::min<Index>(c.k_levels + 1, s.sector.dimension());
  PopulationTrace tr{std::move(label), s.n_spins, s.total_time, {}, 0.0};
  tr.rows = diagnose_populations(s.sector, controls, s.initial, s.total_time, c.n_steps, c.stride, k);
  const auto fin = propagate(s.sector, controls, s.initial, s.total_time, PropagationConfig{c.n_steps, std::nullopt});
  tr.final_infidelity = infidelity(fin.final_state, s.target);
  return tr;
}

/// Linear ramp from the initial to the final field.
inline PopulationTrace diagnose_linear(const ExperimentConfig& c, int n_spins) {
  const auto s = lmg_setup(c, n_spins);
  return diagnose_protocol(c, s, {ControlField::uncorrected(BaseGuess::linear(c.initial_field, c.final_field), s.total_time)},
                           "linear");
}

inline CsvWriter population_table(const PopulationTrace& tr) {
  std::vector<std::string> header{"t"};
  const std::size_t k = tr.rows.empty() ? 0 : tr.rows.front().levels.probabilities.size();
  for (std::size_t i = 0; i < k; ++i) header.push_back("P_" + std::to_string(i));
  header.push_back("P_tot");
  for (std::size_t i = 0; i < k; ++i) header.push_back("E_" + std::to_string(i));
  CsvWriter w(header);
  for (const auto& r : tr.rows) {
    CsvWriter::Row row;
    row << r.t;
    for (std::size_t i = 0; i < k; ++i) row << r.levels.probabilities[i];
    row << r.levels.total_excitation;
    for (std::size_t i = 0; i < k; ++i) row << r.levels.energies[i];
    w.add(std::move(row));
  }
  return w;
}

class missing_pulse_error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Linear ramp plus the stored optimized pulse (diagnostics.pulse_file).
inline StudyOutput run_linear_vs_optimal(const ExperimentConfig& c, bool require_pulse = true) {
  StudyOutput out;
  for (int n : c.sizes) {
    const auto s = lmg_setup(c, n);
    std::vector<PopulationTrace> traces;
    traces.push_back(diagnose_protocol(
        c, s, {ControlField::uncorrected(BaseGuess::linear(c.initial_field, c.final_field), s.total_time)}, "linear"));

    if (c.pulse_file) {
      PulseDocument doc;
      try {
        doc = read_pulse(*c.pulse_file);
      } catch (const parse_error& e) {
        throw missing_pulse_error("cannot load stored pulse: " + std::string(e.what()) +
                                  "; run the lmg_transition study first and point diagnostics.pulse_file at one of its pulses");
      }
      if (doc.controls.size() != 1) throw config_error("diagnostics.pulse_file: expected a single-control LMG pulse");
      if (doc.context.contains("n_spins") && doc.context.at("n_spins").get<int>() != n)
        throw config_error("diagnostics.pulse_file: pulse was optimized for N=" + doc.context.at("n_spins").dump() +
                           ", this config uses N=" + std::to_string(n));
      const double Tp = doc.controls[0].total_time();
      if (std::abs(Tp - s.total_time) > 1e-9 * s.total_time)
        throw config_error("diagnostics.pulse_file: pulse duration " + format_double(Tp) + " differs from T = " +
                           format_double(s.total_time) + " of this config");
      // rebuild on this config's time axis so check_controls sees identical T
      std::vector<ControlField> ctl{ControlField(doc.controls[0].base(), doc.controls[0].params(),
                                                 BoundaryRegularizer(doc.controls[0].regularizer().kind, s.total_time),
                                                 doc.controls[0].seed())};
      traces.push_back(diagnose_protocol(c, s, ctl, "optimized"));
    } else if (require_pulse) {
      throw missing_pulse_error(
          "no stored optimized pulse: run the lmg_transition study first (with N=" + std::to_string(n) +
          " in its sweep) and set diagnostics.pulse_file to the resulting pulses/lmg_N" + std::to_string(n) + "_*.json");
    }

    for (const auto& tr : traces) {
      out.tables.emplace_back("populations_N" + std::to_string(n) + "_" + tr.label + ".csv", population_table(tr));
      out.points.push_back({{"n_spins", n},
                            {"protocol", tr.label},
                            {"gap_min", s.timing.gap_min},
                            {"t_qsl", s.timing.t_qsl},
                            {"total_time", s.total_time},
                            {"final_p_tot", tr.final_p_tot()},
                            {"final_infidelity", tr.final_infidelity},
                            {"p_tot_minus_infidelity", tr.final_p_tot() - tr.final_infidelity},
                            {"max_p_tot", tr.max_p_tot()}});
    }
  }
  return out;
}

inline StudyOutput execute_study(const ExperimentConfig& c) {
  switch (c.study) {
    case Study::TwoQubit: return run_two_qubit(c);
    case Study::LmgTransition: return run_lmg_transition(c);
    case Study::ChainTransfer: return run_chain_transfer(c);
    case Study::LmgEntropy: return run_lmg_entropy(c);
    case Study::LinearVsOptimal: return run_linear_vs_optimal(c);
  }
  throw std::logic_error("execute_study: unhandled study");
}

}  // namespace crab::harness
