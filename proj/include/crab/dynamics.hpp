#pragma once

// Piecewise-constant propagation of  i d/dt psi = H(Gamma(t)) psi  (hbar = 1).
// Each step applies the exact exponential exp(-i H(Gamma(t_mid)) dt) obtained
// from a Hermitian eigendecomposition, so the evolution is unitary to
// rounding regardless of step size.

#include "crab/pulse.hpp"
#include "crab/spectrum.hpp"

#include <cassert>

namespace crab {

struct PropagationConfig {
  std::size_t n_steps = 2000;
  std::optional<std::size_t> checkpoint_stride;
};

struct Checkpoint {
  std::size_t step;
  double t;
  QuantumState state;
};

struct PropagationResult {
  QuantumState final_state;
  std::vector<Checkpoint> trajectory;  ///< empty unless checkpoint_stride is set
};

/// max(2000, ceil(40 T range)) where range is the spectral width at the
/// initial control values.
template <HamiltonianModel M>
std::size_t default_step_count(const M& model, std::span<const ControlField> controls, double total_time) {
  std::vector<double> u0;
  u0.reserve(controls.size());
  for (const auto& c : controls) u0.push_back(c(0.0));
  Eigen::SelfAdjointEigenSolver<model_matrix_t<M>> es(checked_hamiltonian(model, u0), Eigen::EigenvaluesOnly);
  const double range = es.eigenvalues().maxCoeff() - es.eigenvalues().minCoeff();
  return std::max<std::size_t>(2000, static_cast<std::size_t>(std::ceil(40.0 * total_time * range)));
}

namespace detail {

/// psi <- exp(-i h dt) psi
/// True if every entry outside the three central diagonals is exactly zero.
inline bool is_tridiagonal(const RMatrix& h) {
  const Index n = h.rows();
  for (Index c = 0; c < n; ++c)
    for (Index r = c + 2; r < n; ++r)
      if (h(r, c) != 0.0) return false;
  return true;
}

template <class Scalar>
void decompose(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& h,
               Eigen::SelfAdjointEigenSolver<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>>& es) {
  if constexpr (std::is_same_v<Scalar, double>) {
    // real tridiagonal models (chains, parity-reduced LMG) skip the Householder reduction
    if (h.rows() > 2 && is_tridiagonal(h)) {
      const RVector diag = h.diagonal();
      const RVector sub = h.diagonal(-1);
      es.computeFromTridiagonal(diag, sub);
      return;
    }
  }
  es.compute(h);
}

template <class Scalar>
void exact_step(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& h, double dt, CVector& psi,
                Eigen::SelfAdjointEigenSolver<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>>& es, CVector& work) {
  decompose(h, es);
  if (es.info() != Eigen::Success) throw consistency_error("eigendecomposition failed during propagation");
  const auto& v = es.eigenvectors();
  const auto& e = es.eigenvalues();
  work.noalias() = v.adjoint().template cast<cplx>() * psi;
  for (Index i = 0; i < work.size(); ++i) work(i) *= std::polar(1.0, -e(i) * dt);
  psi.noalias() = v.template cast<cplx>() * work;
}

inline void check_controls(std::span<const ControlField> controls, double total_time) {
  for (const auto& c : controls) {
    const double tc = c.total_time();
    if (std::abs(tc - total_time) > 1e-12 * std::max(1.0, total_time))
      throw std::invalid_argument("control field duration does not match total_time");
  }
}

}  // namespace detail

/// Propagates psi over the window [t_begin, t_end] of the controls' time
/// axis in n_steps equal steps.
template <HamiltonianModel M>
PropagationResult propagate_window(const M& model, std::span<const ControlField> controls, const QuantumState& psi0,
                                   double t_begin, double t_end, const PropagationConfig& config) {
  require(config.n_steps >= 1, "propagate: n_steps must be >= 1");
  require(psi0.dimension() == model.dimension(), "propagate: initial state dimension does not match model");
  require(controls.size() == model.control_arity(), "propagate: control count does not match model arity");
  require(t_end >= t_begin, "propagate: empty or reversed window");
  if (config.checkpoint_stride) require(*config.checkpoint_stride >= 1, "propagate: checkpoint_stride must be >= 1");

  using matrix_t = model_matrix_t<M>;
  Eigen::SelfAdjointEigenSolver<matrix_t> es(model.dimension());
  CVector psi = psi0.amplitudes();
  CVector work(psi.size());
  std::vector<double> u(controls.size());
  const double dt = (t_end - t_begin) / static_cast<double>(config.n_steps);

  PropagationResult out;
  const auto stride = config.checkpoint_stride.value_or(0);
  if (stride) out.trajectory.push_back({0, t_begin, psi0});

  for (std::size_t step = 0; step < config.n_steps; ++step) {
    const double t_mid = t_begin + (static_cast<double>(step) + 0.5) * dt;
    for (std::size_t c = 0; c < controls.size(); ++c) u[c] = controls[c](t_mid);
    detail::exact_step<typename M::scalar_type>(checked_hamiltonian(model, u), dt, psi, es, work);
    if (stride && ((step + 1) % stride == 0 || step + 1 == config.n_steps))
      out.trajectory.push_back(
          {step + 1, t_begin + static_cast<double>(step + 1) * dt, StatePropagatorAccess::wrap(psi)});
  }

  const double n = psi.norm();
  if (std::abs(n - 1.0) > QuantumState::norm_tolerance)
    throw consistency_error("propagation lost unitarity: norm " + std::to_string(n));
  out.final_state = StatePropagatorAccess::wrap(std::move(psi));
  return out;
}

template <HamiltonianModel M>
PropagationResult propagate(const M& model, std::span<const ControlField> controls, const QuantumState& psi0,
                            double total_time, const PropagationConfig& config) {
  detail::check_controls(controls, total_time);
  return propagate_window(model, controls, psi0, 0.0, total_time, config);
}

/// Propagation with fixed control values (time-independent H).
template <HamiltonianModel M>
QuantumState propagate_constant(const M& model, std::span<const double> control_values, const QuantumState& psi0,
                                double duration, std::size_t n_steps = 1) {
  require(psi0.dimension() == model.dimension(), "propagate: initial state dimension does not match model");
  const auto h = checked_hamiltonian(model, control_values);
  Eigen::SelfAdjointEigenSolver<model_matrix_t<M>> es(model.dimension());
  CVector psi = psi0.amplitudes(), work(psi.size());
  const double dt = duration / static_cast<double>(n_steps);
  for (std::size_t s = 0; s < n_steps; ++s) detail::exact_step<typename M::scalar_type>(h, dt, psi, es, work);
  return StatePropagatorAccess::wrap(std::move(psi));
}

// ---------------------------------------------------------------------------
// Instantaneous-spectrum diagnostics

struct LevelPopulations {
  std::vector<double> probabilities;  ///< P_i for the lowest k levels
  std::vector<double> energies;       ///< matching instantaneous energies
  double total_excitation = 0.0;      ///< 1 - P_0
};

inline constexpr double degeneracy_tolerance = 1e-9;

/// P_i = |<phi_i|psi>|^2 in the instantaneous eigenbasis of H(control_values).
/// Populations of a degenerate cluster are summed onto its lowest member.
template <HamiltonianModel M>
LevelPopulations excitation_probabilities(const QuantumState& state, const M& model,
                                          std::span<const double> control_values, Index k_levels) {
  require(state.dimension() == model.dimension(), "excitation_probabilities: dimension mismatch");
  const Index dim = model.dimension();
  require(k_levels >= 1 && k_levels <= dim, "excitation_probabilities: k_levels must lie in [1, dimension]");
  const auto spec = instantaneous_spectrum(model, control_values, dim);
  const CVector amps = spec.vectors.adjoint().template cast<cplx>() * state.amplitudes();

  const double scale = std::max({1.0, std::abs(spec.energies(0)), std::abs(spec.energies(dim - 1))});
  std::vector<double> pops(static_cast<std::size_t>(dim), 0.0);
  for (Index i = 0; i < dim;) {
    Index end = i + 1;
    while (end < dim && spec.energies(end) - spec.energies(i) <= degeneracy_tolerance * scale) ++end;
    double cluster = 0.0;
    for (Index q = i; q < end; ++q) cluster += std::norm(amps(q));
    pops[static_cast<std::size_t>(i)] = cluster;
    i = end;
  }

  LevelPopulations out;
  out.probabilities.assign(pops.begin(), pops.begin() + k_levels);
  out.energies.assign(spec.energies.data(), spec.energies.data() + k_levels);
  out.total_excitation = std::max(0.0, 1.0 - pops[0]);
  return out;
}

struct TrajectoryRow {
  double t;
  LevelPopulations levels;
};

/// Propagates and records instantaneous level populations every stride steps.
template <HamiltonianModel M>
std::vector<TrajectoryRow> diagnose_populations(const M& model, std::span<const ControlField> controls,
                                                const QuantumState& psi0, double total_time, std::size_t n_steps,
                                                std::size_t stride, Index k_levels) {
  PropagationConfig cfg{n_steps, stride};
  const auto res = propagate(model, controls, psi0, total_time, cfg);
  std::vector<TrajectoryRow> rows;
  rows.reserve(res.trajectory.size());
  std::vector<double> u(controls.size());
  for (const auto& cp : res.trajectory) {
    for (std::size_t c = 0; c < controls.size(); ++c) u[c] = controls[c](std::min(cp.t, total_time));
    rows.push_back({cp.t, excitation_probabilities(cp.state, model, u, k_levels)});
  }
  return rows;
}

}  // namespace crab
