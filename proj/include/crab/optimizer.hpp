#pragma once

// Derivative-free minimization: a budgeted Nelder-Mead simplex and the CRAB
// driver that maps (A, B[, w]) vectors to control fields and scores them by
// propagating the dynamics.

#include "crab/costs.hpp"

#include <atomic>
#include <functional>
#include <future>
#include <mutex>
#include <numeric>
#include <thread>

namespace crab {

struct SimplexConfig {
  double reflection = 1.0;
  double expansion = 2.0;
  double contraction = 0.5;
  double shrink = 0.5;
  std::vector<double> initial_step;  ///< per coordinate; empty uses default_step
  double default_step = 0.3;
  double f_tolerance = 1e-14;  ///< absolute spread of simplex values
  double x_tolerance = 1e-10;  ///< max-norm simplex diameter
  std::size_t max_evals = 1000;
  std::size_t max_restarts = 1000;
  double restart_step_factor = 0.5;
  /// Replace the four coefficients by the dimension-dependent set
  /// (1, 1 + 2/n, 3/4 - 1/(2n), 1 - 1/n) of Gao and Han.
  bool adaptive = false;

  [[nodiscard]] SimplexConfig effective(std::size_t dim) const {
    SimplexConfig c = *this;
    if (adaptive && dim >= 2) {
      const double n = static_cast<double>(dim);
      c.reflection = 1.0;
      c.expansion = 1.0 + 2.0 / n;
      c.contraction = 0.75 - 0.5 / n;
      c.shrink = 1.0 - 1.0 / n;
    }
    return c;
  }

  void validate(std::size_t dim) const {
    require(expansion > 1.0 && 1.0 > contraction && contraction > 0.0, "SimplexConfig: need expansion > 1 > contraction > 0");
    require(reflection > 0.0 && shrink > 0.0 && shrink < 1.0, "SimplexConfig: invalid reflection/shrink");
    require(max_evals >= dim + 1, "SimplexConfig: max_evals must be at least dim + 1");
    require(initial_step.empty() || initial_step.size() == dim, "SimplexConfig: one initial step per coordinate");
    require(restart_step_factor > 0.0 && restart_step_factor < 1.0, "SimplexConfig: restart_step_factor must lie in (0, 1)");
  }
};

struct TracePoint {
  std::size_t eval;  ///< 1-based evaluation index
  double best_cost;  ///< best value seen up to and including this evaluation
};

struct OptimizationResult {
  std::vector<double> best_params;
  double best_cost = std::numeric_limits<double>::infinity();
  std::size_t n_evals = 0;
  std::size_t restarts = 0;
  std::vector<TracePoint> trace;
  std::uint64_t seed = 0;
  std::vector<std::vector<double>> frequency_draw;  ///< per control field
};

using Objective = std::function<double(std::span<const double>)>;

namespace detail {

struct BudgetExhausted {};

class CountingObjective {
public:
  CountingObjective(const Objective& f, std::size_t budget, OptimizationResult& out) : f_(f), budget_(budget), out_(out) {}

  double operator()(const RVector& x) {
    if (out_.n_evals >= budget_) throw BudgetExhausted{};
    double v = f_(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
    if (!std::isfinite(v)) v = std::numeric_limits<double>::infinity();
    ++out_.n_evals;
    if (v < out_.best_cost || out_.best_params.empty()) {
      if (v < out_.best_cost) out_.best_cost = v;
      out_.best_params.assign(x.data(), x.data() + x.size());
    }
    out_.trace.push_back({out_.n_evals, out_.best_cost});
    return v;
  }

  [[nodiscard]] bool exhausted() const { return out_.n_evals >= budget_; }

private:
  const Objective& f_;
  std::size_t budget_;
  OptimizationResult& out_;
};

}  // namespace detail

/// Budgeted Nelder-Mead. Restarts a fresh simplex at the best vertex (step
/// scaled by restart_step_factor) whenever the simplex collapses, until the
/// budget, the restart limit, or x_tolerance on the restart step is reached.
/// Returns the best point ever evaluated; non-finite values count as +inf.
inline OptimizationResult nelder_mead(const Objective& objective, std::span<const double> x0, const SimplexConfig& requested) {
  const auto n = x0.size();
  const SimplexConfig config = requested.effective(n);
  config.validate(n);
  OptimizationResult out;
  detail::CountingObjective f(objective, config.max_evals, out);

  RVector start = Eigen::Map<const RVector>(x0.data(), static_cast<Index>(n));
  RVector step(static_cast<Index>(n));
  for (std::size_t i = 0; i < n; ++i) step(static_cast<Index>(i)) = config.initial_step.empty() ? config.default_step : config.initial_step[i];

  try {
    const double f_start = f(start);
    if (n == 0) return out;

    std::vector<RVector> x(n + 1);
    std::vector<double> fx(n + 1);
    double scale = 1.0;
    bool first = true;
    for (;;) {
      // (re)build the simplex around `start`
      x[0] = start;
      fx[0] = first ? f_start : out.best_cost;
      for (std::size_t i = 1; i <= n; ++i) {
        x[i] = start;
        x[i](static_cast<Index>(i - 1)) += scale * step(static_cast<Index>(i - 1));
        fx[i] = f(x[i]);
      }
      first = false;

      std::vector<std::size_t> order(n + 1);
      for (;;) {
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return fx[a] < fx[b]; });
        const auto lo = order[0], hi = order[n], second = order[n - 1];

        double diameter = 0.0;
        for (std::size_t i = 0; i <= n; ++i) diameter = std::max(diameter, (x[i] - x[lo]).cwiseAbs().maxCoeff());
        const double spread = fx[hi] - fx[lo];
        if ((std::isfinite(spread) && spread <= config.f_tolerance) || diameter <= config.x_tolerance) break;

        RVector centroid = RVector::Zero(static_cast<Index>(n));
        for (std::size_t i = 0; i <= n; ++i)
          if (i != hi) centroid += x[i];
        centroid /= static_cast<double>(n);

        const RVector xr = centroid + config.reflection * (centroid - x[hi]);
        const double fr = f(xr);
        if (fr < fx[lo]) {
          const RVector xe = centroid + config.expansion * (xr - centroid);
          const double fe = f(xe);
          if (fe < fr) { x[hi] = xe; fx[hi] = fe; }
          else { x[hi] = xr; fx[hi] = fr; }
          continue;
        }
        if (fr < fx[second]) {
          x[hi] = xr;
          fx[hi] = fr;
          continue;
        }
        bool accepted = false;
        if (fr < fx[hi]) {
          const RVector xc = centroid + config.contraction * (xr - centroid);
          const double fc = f(xc);
          if (fc <= fr) { x[hi] = xc; fx[hi] = fc; accepted = true; }
        } else {
          const RVector xc = centroid + config.contraction * (x[hi] - centroid);
          const double fc = f(xc);
          if (fc < fx[hi]) { x[hi] = xc; fx[hi] = fc; accepted = true; }
        }
        if (!accepted) {
          for (std::size_t i = 0; i <= n; ++i) {
            if (i == lo) continue;
            x[i] = x[lo] + config.shrink * (x[i] - x[lo]);
            fx[i] = f(x[i]);
          }
        }
      }

      // collapsed: restart at the best vertex with a smaller step
      if (out.restarts >= config.max_restarts || f.exhausted()) break;
      scale *= config.restart_step_factor;
      if (scale * step.cwiseAbs().maxCoeff() <= config.x_tolerance) break;
      ++out.restarts;
      start = Eigen::Map<const RVector>(out.best_params.data(), static_cast<Index>(n));
    }
  } catch (const detail::BudgetExhausted&) {
  }
  return out;
}

// ---------------------------------------------------------------------------
// CRAB driver

/// How one control field is parametrized.
struct ControlAnsatz {
  BaseGuess base;
  std::size_t n_components = 0;
  bool randomized = false;                          ///< r_k ~ U[-1/2, 1/2]; else principal harmonics
  std::optional<std::vector<double>> frequencies;   ///< explicit w_k overrides the rule
  RegularizerKind regularizer = RegularizerKind::PolynomialBump;
};

enum class StartPolicy { Zero, SharedRandom, PerInstanceRandom };

struct CrabOptions {
  SimplexConfig simplex;
  bool optimize_frequencies = false;
  double amplitude_step = 0.3;
  double frequency_step_fraction = 0.1;  ///< initial simplex step for w as a fraction of 2 pi / T
  StartPolicy start = StartPolicy::Zero;
  double random_start_scale = 0.5;       ///< random starts draw A, B ~ U[-scale, scale]
  std::function<void(std::size_t, const CostBreakdown&)> on_evaluation;  ///< tracing hook
};

/// Layout of the optimization vector: per control field, [A_1..A_Nc, B_1..B_Nc(, w_1..w_Nc)].
class CrabParametrization {
public:
  CrabParametrization(std::vector<ControlAnsatz> ansatz, double total_time, bool optimize_frequencies,
                      std::vector<std::vector<double>> frequencies, std::uint64_t seed)
      : ansatz_(std::move(ansatz)), T_(total_time), opt_w_(optimize_frequencies), w_(std::move(frequencies)), seed_(seed) {
    require(w_.size() == ansatz_.size(), "CrabParametrization: one frequency set per control");
    for (std::size_t j = 0; j < ansatz_.size(); ++j)
      require(w_[j].size() == ansatz_[j].n_components, "CrabParametrization: frequency count mismatch");
  }

  [[nodiscard]] std::size_t dimension() const {
    std::size_t d = 0;
    for (const auto& a : ansatz_) d += (opt_w_ ? 3 : 2) * a.n_components;
    return d;
  }

  [[nodiscard]] const std::vector<std::vector<double>>& frequencies() const { return w_; }

  /// Controls for a parameter vector; nullopt if optimized frequencies are
  /// not positive and strictly increasing.
  [[nodiscard]] std::optional<std::vector<ControlField>> controls(std::span<const double> x) const {
    std::vector<ControlField> out;
    out.reserve(ansatz_.size());
    std::size_t off = 0;
    for (std::size_t j = 0; j < ansatz_.size(); ++j) {
      const auto nc = ansatz_[j].n_components;
      CrabParams p;
      p.amplitudes_a.assign(x.begin() + off, x.begin() + off + nc);
      p.amplitudes_b.assign(x.begin() + off + nc, x.begin() + off + 2 * nc);
      off += 2 * nc;
      if (opt_w_) {
        p.frequencies.assign(x.begin() + off, x.begin() + off + nc);
        off += nc;
        for (std::size_t k = 0; k < nc; ++k)
          if (!(p.frequencies[k] > 0.0) || (k > 0 && !(p.frequencies[k] > p.frequencies[k - 1]))) return std::nullopt;
      } else {
        p.frequencies = w_[j];
      }
      out.emplace_back(ansatz_[j].base, std::move(p), BoundaryRegularizer(ansatz_[j].regularizer, T_), seed_);
    }
    return out;
  }

  /// Starting point: amplitudes from `amplitudes` (or zero), frequencies from the draw.
  [[nodiscard]] std::vector<double> initial_point(const std::vector<double>* amplitudes = nullptr) const {
    std::vector<double> x;
    std::size_t a = 0;
    for (std::size_t j = 0; j < ansatz_.size(); ++j) {
      for (std::size_t k = 0; k < 2 * ansatz_[j].n_components; ++k) x.push_back(amplitudes ? (*amplitudes)[a++] : 0.0);
      if (opt_w_) x.insert(x.end(), w_[j].begin(), w_[j].end());
    }
    return x;
  }

  [[nodiscard]] std::size_t amplitude_count() const {
    std::size_t c = 0;
    for (const auto& a : ansatz_) c += 2 * a.n_components;
    return c;
  }

  [[nodiscard]] std::vector<double> initial_steps(double amplitude_step, double frequency_step) const {
    std::vector<double> s;
    for (const auto& a : ansatz_) {
      s.insert(s.end(), 2 * a.n_components, amplitude_step);
      if (opt_w_) s.insert(s.end(), a.n_components, frequency_step);
    }
    return s;
  }

private:
  std::vector<ControlAnsatz> ansatz_;
  double T_;
  bool opt_w_;
  std::vector<std::vector<double>> w_;
  std::uint64_t seed_;
};

/// Frequency sets for every control; field j uses stream j of the seed.
inline std::vector<std::vector<double>> draw_frequencies(std::span<const ControlAnsatz> ansatz, double total_time,
                                                         std::uint64_t seed) {
  std::vector<std::vector<double>> w;
  for (std::size_t j = 0; j < ansatz.size(); ++j) {
    const auto& a = ansatz[j];
    if (a.frequencies) {
      require(a.frequencies->size() == a.n_components, "ControlAnsatz: explicit frequency count must equal n_components");
      w.push_back(*a.frequencies);
    } else if (a.n_components == 0) {
      w.emplace_back();
    } else {
      w.push_back(make_frequencies(a.n_components, total_time, a.randomized, derive_seed(seed, j)));
    }
  }
  return w;
}

struct CrabRun {
  OptimizationResult result;
  std::vector<ControlField> controls;  ///< optimized fields
  CostBreakdown best;                  ///< breakdown at the optimum
};

/// Minimizes the problem's cost over the CRAB parameters. Fully determined
/// by (problem, ansatz, options, seed, x0).
template <HamiltonianModel M>
CrabRun crab_optimize(const ControlProblem<M>& problem, std::span<const ControlAnsatz> ansatz, const CrabOptions& options,
                      std::uint64_t seed, std::optional<std::vector<double>> x0 = std::nullopt) {
  require(ansatz.size() == problem.model.control_arity(), "crab_optimize: one ansatz per model control");
  CrabParametrization param({ansatz.begin(), ansatz.end()}, problem.total_time, options.optimize_frequencies,
                            draw_frequencies(ansatz, problem.total_time, seed), seed);

  std::vector<double> start;
  if (x0) {
    require(x0->size() == param.dimension(), "crab_optimize: x0 has the wrong dimension");
    start = *x0;
  } else if (options.start == StartPolicy::Zero) {
    start = param.initial_point();
  } else {
    // SharedRandom draws from a fixed stream so all instances of a study share it.
    Rng rng(options.start == StartPolicy::SharedRandom ? derive_seed(0x5eed, 0) : derive_seed(seed, 0xa11ce));
    std::vector<double> amps(param.amplitude_count());
    for (auto& v : amps) v = rng.uniform(-options.random_start_scale, options.random_start_scale);
    start = param.initial_point(&amps);
  }

  SimplexConfig simplex = options.simplex;
  if (simplex.initial_step.empty())
    simplex.initial_step =
        param.initial_steps(options.amplitude_step, options.frequency_step_fraction * 2.0 * pi / problem.total_time);
  simplex.max_evals = std::max(simplex.max_evals, param.dimension() + 1);

  CrabRun run;
  std::size_t eval_index = 0;
  const Objective objective = [&](std::span<const double> x) -> double {
    ++eval_index;
    const auto controls = param.controls(x);
    if (!controls) return std::numeric_limits<double>::infinity();
    const CostBreakdown c = evaluate(problem, *controls);
    if (options.on_evaluation) options.on_evaluation(eval_index, c);
    if (c.total < run.best.total || run.controls.empty()) {
      run.best = c;
      run.controls = *controls;
    }
    return c.total;
  };
  run.best.total = std::numeric_limits<double>::infinity();
  run.result = nelder_mead(objective, start, simplex);
  run.result.seed = seed;
  run.result.frequency_draw = param.frequencies();
  // the stored controls must be those of the reported best vertex
  if (auto c = param.controls(run.result.best_params)) run.controls = std::move(*c);
  return run;
}

// ---------------------------------------------------------------------------
// Multi-start

struct MultiStartOptions {
  std::size_t n_instances = 1;
  std::size_t global_budget = 30000;  ///< split evenly across instances
  bool fresh_frequencies = true;      ///< new w draw per instance (else the master draw for all)
  unsigned workers = 1;
};

struct MultiStartResult {
  std::size_t best_instance = 0;
  std::vector<CrabRun> runs;

  [[nodiscard]] const CrabRun& best() const { return runs.at(best_instance); }
  [[nodiscard]] std::size_t total_evals() const {
    std::size_t n = 0;
    for (const auto& r : runs) n += r.result.n_evals;
    return n;
  }
};

inline std::uint64_t instance_seed(std::uint64_t master, std::size_t instance) { return derive_seed(master, 1000 + instance); }

/// Independent CRAB runs with seeds derived from master_seed; the minimum
/// cost wins (ties go to the lowest instance index). With one instance the
/// result equals crab_optimize(problem, ..., instance_seed(master, 0)).
template <HamiltonianModel M>
MultiStartResult multi_start(const ControlProblem<M>& problem, std::span<const ControlAnsatz> ansatz, CrabOptions options,
                             std::uint64_t master_seed, const MultiStartOptions& ms) {
  require(ms.n_instances >= 1, "multi_start: need at least one instance");
  options.simplex.max_evals = ms.global_budget / ms.n_instances;
  const std::vector<ControlAnsatz> ans(ansatz.begin(), ansatz.end());
  std::size_t dim = 0;
  for (const auto& a : ans) dim += (options.optimize_frequencies ? 3 : 2) * a.n_components;
  require(options.simplex.max_evals >= dim + 1, "multi_start: per-instance budget smaller than the simplex");

  MultiStartResult out;
  out.runs.resize(ms.n_instances);
  auto run_one = [&](std::size_t i) {
    const std::uint64_t seed = ms.fresh_frequencies ? instance_seed(master_seed, i) : master_seed;
    CrabOptions opt = options;
    if (!ms.fresh_frequencies && opt.start == StartPolicy::PerInstanceRandom) {
      // same w for every instance, distinct random amplitude starts
      CrabParametrization p(ans, problem.total_time, opt.optimize_frequencies,
                            draw_frequencies(ans, problem.total_time, seed), seed);
      Rng rng(derive_seed(instance_seed(master_seed, i), 0xa11ce));
      std::vector<double> amps(p.amplitude_count());
      for (auto& v : amps) v = rng.uniform(-opt.random_start_scale, opt.random_start_scale);
      out.runs[i] = crab_optimize(problem, ans, opt, seed, p.initial_point(&amps));
    } else {
      out.runs[i] = crab_optimize(problem, ans, opt, seed);
    }
  };

  const unsigned workers = std::max(1u, std::min<unsigned>(ms.workers, static_cast<unsigned>(ms.n_instances)));
  if (workers == 1) {
    for (std::size_t i = 0; i < ms.n_instances; ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr failure;
    std::mutex failure_mutex;
    for (unsigned w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < ms.n_instances;) {
          try {
            run_one(i);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
  }

  for (std::size_t i = 1; i < out.runs.size(); ++i)
    if (out.runs[i].result.best_cost < out.runs[out.best_instance].result.best_cost) out.best_instance = i;
  return out;
}

}  // namespace crab
