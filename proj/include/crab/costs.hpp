#pragma once

// Cost-function catalogue and the composite objective
//   F = alpha f + sum_i beta_i C_i,   C_i = int_0^T |Gamma_i(t)|^2 dt
// where f is an infidelity, a final energy, or minus an entanglement entropy.

#include "crab/dynamics.hpp"
#include "crab/observables.hpp"

#include <variant>

namespace crab {

/// 1 - |<psi|target>|^2
inline double infidelity(const QuantumState& psi, const QuantumState& target) {
  require(psi.dimension() == target.dimension(), "infidelity: dimension mismatch");
  return std::clamp(1.0 - std::norm(psi.overlap(target)), 0.0, 1.0);
}

/// Re <psi|H_p|psi>
inline double final_energy(const QuantumState& psi, const CMatrix& h_p) {
  require(h_p.rows() == psi.dimension() && h_p.cols() == psi.dimension(), "final_energy: dimension mismatch");
  const cplx e = psi.amplitudes().dot(h_p * psi.amplitudes());
  if (std::abs(e.imag()) > 1e-10 * std::max(1.0, std::abs(e.real())))
    throw consistency_error("final_energy: expectation value is not real (H_p not Hermitian?)");
  return e.real();
}

/// Composite trapezoid of |Gamma(t)|^2 over [0, T] on n_quadrature points.
inline double fluence(const ControlField& control, std::size_t n_quadrature) {
  require(n_quadrature >= 2, "fluence: need at least two quadrature points");
  const double T = control.total_time();
  const auto intervals = static_cast<double>(n_quadrature - 1);
  const double h = T / intervals;
  double sum = 0.0;
  for (std::size_t i = 0; i < n_quadrature; ++i) {
    const double t = i + 1 == n_quadrature ? T : static_cast<double>(i) * h;
    const double v = control(t);
    sum += (i == 0 || i + 1 == n_quadrature ? 0.5 : 1.0) * v * v;
  }
  return sum * h;
}

namespace term {
struct Infidelity {
  QuantumState target;
};
struct FinalEnergy {
  CMatrix h_p;
};
/// -S of a block of a maximal-spin state. `dicke_index[i]` maps working
/// basis index i to its Dicke index (empty: the working basis is the Dicke basis).
struct NegEntropyDicke {
  DickeBipartition bipartition;
  std::vector<Index> dicke_index;
};
/// -S of a block of qubits for states on the full 2^N basis.
struct NegEntropyQubits {
  int n_qubits = 2;
  std::vector<int> block_sites;
};
}  // namespace term

enum class PerturbationTarget { InitialState, ControlAmplitude };

/// Averaging over an uncertainty of magnitude epsilon. Perturbations are
/// delta ~ U[-epsilon, epsilon]: either Gamma -> (1 + delta) Gamma on every
/// control, or psi0 -> cos(delta) psi0 + sin(delta) chi with chi a random
/// unit vector orthogonal to psi0.
struct Robustness {
  std::size_t n_samples = 10;
  double epsilon = 0.0;
  PerturbationTarget target = PerturbationTarget::ControlAmplitude;
  std::uint64_t seed = 0;
};

struct CostSpec {
  using Primary = std::variant<term::Infidelity, term::FinalEnergy, term::NegEntropyDicke, term::NegEntropyQubits>;

  Primary primary;
  double alpha = 1.0;
  std::vector<double> fluence_weights;  ///< beta_i, one per control (may be empty = all zero)
  std::optional<Robustness> robustness;

  void validate(std::size_t n_controls) const {
    require(alpha > 0.0, "CostSpec: alpha must be positive");
    require(fluence_weights.empty() || fluence_weights.size() == n_controls,
            "CostSpec: one fluence weight per control field");
    for (double b : fluence_weights) require(b >= 0.0, "CostSpec: fluence weights must be non-negative");
    if (robustness) require(robustness->n_samples >= 1 && robustness->epsilon >= 0.0, "CostSpec: invalid robustness");
  }
};

struct CostBreakdown {
  double f = 0.0;                 ///< primary term (negative entropy for entropy costs)
  std::vector<double> fluences;   ///< C_i (only computed for nonzero beta_i; otherwise 0)
  double total = 0.0;             ///< F
  std::optional<double> entropy;  ///< S for entropy costs
};

/// Primary term f on a final state.
inline double primary_term(const CostSpec::Primary& primary, const QuantumState& psi, double* entropy_out = nullptr) {
  return std::visit(
      [&](const auto& t) -> double {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, term::Infidelity>) {
          return infidelity(psi, t.target);
        } else if constexpr (std::is_same_v<T, term::FinalEnergy>) {
          return final_energy(psi, t.h_p);
        } else if constexpr (std::is_same_v<T, term::NegEntropyDicke>) {
          CVector dicke;
          if (t.dicke_index.empty()) {
            dicke = psi.amplitudes();
          } else {
            require(static_cast<Index>(t.dicke_index.size()) == psi.dimension(), "NegEntropy: index map size mismatch");
            dicke = CVector::Zero(t.bipartition.n_spins + 1);
            for (Index i = 0; i < psi.dimension(); ++i) dicke(t.dicke_index[static_cast<std::size_t>(i)]) = psi.amplitudes()(i);
          }
          const double s = von_neumann_entropy(reduced_density_dicke(dicke, t.bipartition));
          if (entropy_out) *entropy_out = s;
          return -s;
        } else {
          const double s = von_neumann_entropy(reduced_density_generic(psi.amplitudes(), t.n_qubits, t.block_sites));
          if (entropy_out) *entropy_out = s;
          return -s;
        }
      },
      primary);
}

/// F = alpha f + sum_i beta_i C_i for a propagated final state.
inline CostBreakdown composite_cost(const CostSpec& spec, const QuantumState& final_state,
                                    std::span<const ControlField> controls, std::size_t n_quadrature) {
  spec.validate(controls.size());
  CostBreakdown out;
  double s = 0.0;
  out.f = primary_term(spec.primary, final_state, &s);
  if (std::holds_alternative<term::NegEntropyDicke>(spec.primary) ||
      std::holds_alternative<term::NegEntropyQubits>(spec.primary))
    out.entropy = s;
  out.total = spec.alpha * out.f;
  out.fluences.assign(controls.size(), 0.0);
  for (std::size_t i = 0; i < spec.fluence_weights.size(); ++i) {
    if (spec.fluence_weights[i] == 0.0) continue;
    out.fluences[i] = fluence(controls[i], n_quadrature);
    out.total += spec.fluence_weights[i] * out.fluences[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Problem = model + initial state + timing + cost

template <HamiltonianModel M>
struct ControlProblem {
  M model;
  QuantumState initial_state;
  double total_time = 1.0;
  PropagationConfig propagation;
  CostSpec cost;
  std::size_t fluence_refinement = 4;  ///< quadrature intervals per propagation step

  [[nodiscard]] std::size_t quadrature_points() const { return fluence_refinement * propagation.n_steps + 1; }
};

/// Propagate and score, without robustness averaging.
template <HamiltonianModel M>
CostBreakdown evaluate_nominal(const ControlProblem<M>& problem, std::span<const ControlField> controls) {
  PropagationConfig cfg = problem.propagation;
  cfg.checkpoint_stride.reset();
  const auto res = propagate(problem.model, controls, problem.initial_state, problem.total_time, cfg);
  return composite_cost(problem.cost, res.final_state, controls, problem.quadrature_points());
}

inline BaseGuess scaled_guess(const BaseGuess& g, double factor) {
  return std::visit(
      [&](const auto& k) -> BaseGuess {
        using G = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<G, guess::Constant>) {
          return guess::Constant{k.value * factor};
        } else if constexpr (std::is_same_v<G, guess::LinearRamp>) {
          return guess::LinearRamp{k.start * factor, k.end * factor};
        } else {
          guess::Table t = k;
          for (auto& v : t.values) v *= factor;
          return t;
        }
      },
      g.kind());
}

inline ControlField scaled_control(const ControlField& c, double factor) {
  return ControlField(scaled_guess(c.base(), factor), c.params(), c.regularizer(), c.seed());
}

/// cos(delta) psi + sin(delta) chi with chi a random unit vector orthogonal to psi.
inline QuantumState rotate_state(const QuantumState& psi, double delta, Rng& rng) {
  const Index d = psi.dimension();
  if (d < 2 || delta == 0.0) return psi;
  CVector chi(d);
  for (Index i = 0; i < d; ++i) chi(i) = cplx(rng.normal(), rng.normal());
  chi -= psi.amplitudes() * psi.amplitudes().dot(chi);
  const double n = chi.norm();
  if (!(n > 1e-12)) return psi;
  chi /= n;
  return QuantumState::normalized(std::cos(delta) * psi.amplitudes() + std::sin(delta) * chi);
}

/// Mean of the composite cost over seeded perturbations; equals the nominal
/// cost when epsilon is zero or no robustness is configured.
template <HamiltonianModel M>
CostBreakdown robust_cost(const ControlProblem<M>& problem, std::span<const ControlField> controls) {
  const auto& rob = problem.cost.robustness;
  if (!rob || rob->epsilon == 0.0) return evaluate_nominal(problem, controls);
  require(rob->n_samples >= 1, "robust_cost: n_samples must be >= 1");

  CostBreakdown mean;
  mean.fluences.assign(controls.size(), 0.0);
  double entropy_sum = 0.0;
  bool has_entropy = false;
  ControlProblem<M> sample = problem;
  for (std::size_t s = 0; s < rob->n_samples; ++s) {
    Rng rng(derive_seed(rob->seed, s));
    const double delta = rng.uniform(-rob->epsilon, rob->epsilon);
    CostBreakdown c;
    if (rob->target == PerturbationTarget::InitialState) {
      sample.initial_state = rotate_state(problem.initial_state, delta, rng);
      c = evaluate_nominal(sample, controls);
    } else {
      std::vector<ControlField> perturbed;
      perturbed.reserve(controls.size());
      for (const auto& cf : controls) perturbed.push_back(scaled_control(cf, 1.0 + delta));
      c = evaluate_nominal(problem, perturbed);
    }
    mean.f += c.f;
    mean.total += c.total;
    for (std::size_t i = 0; i < c.fluences.size(); ++i) mean.fluences[i] += c.fluences[i];
    if (c.entropy) {
      has_entropy = true;
      entropy_sum += *c.entropy;
    }
  }
  const double n = static_cast<double>(rob->n_samples);
  mean.f /= n;
  mean.total /= n;
  for (auto& x : mean.fluences) x /= n;
  if (has_entropy) mean.entropy = entropy_sum / n;
  return mean;
}

template <HamiltonianModel M>
CostBreakdown evaluate(const ControlProblem<M>& problem, std::span<const ControlField> controls) {
  return robust_cost(problem, controls);
}

}  // namespace crab
