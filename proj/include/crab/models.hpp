#pragma once

// Hamiltonian builders for the three controlled systems plus a generic affine
// model used by tests. All builders are pure functions of their inputs.

#include "crab/spectrum.hpp"

#include <algorithm>
#include <numeric>

namespace crab {

// ---------------------------------------------------------------------------
// Generic affine model  H(u) = H0 + sum_i u_i H_i

template <class Scalar = double>
class AffineModel {
public:
  using scalar_type = Scalar;
  using matrix_type = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  AffineModel(matrix_type drift, std::vector<matrix_type> controls)
      : drift_(std::move(drift)), controls_(std::move(controls)) {
    for (const auto& c : controls_)
      require(c.rows() == drift_.rows() && c.cols() == drift_.cols(), "AffineModel: control term size mismatch");
  }

  [[nodiscard]] Index dimension() const noexcept { return drift_.rows(); }
  [[nodiscard]] std::size_t control_arity() const noexcept { return controls_.size(); }

  [[nodiscard]] matrix_type hamiltonian(std::span<const double> u) const {
    matrix_type h = drift_;
    for (std::size_t i = 0; i < controls_.size(); ++i) h += u[i] * controls_[i];
    return h;
  }

private:
  matrix_type drift_;
  std::vector<matrix_type> controls_;
};

namespace pauli {
inline RMatrix x() { return (RMatrix(2, 2) << 0, 1, 1, 0).finished(); }
inline RMatrix z() { return (RMatrix(2, 2) << 1, 0, 0, -1).finished(); }
inline CMatrix y() { return (CMatrix(2, 2) << 0, cplx(0, -1), cplx(0, 1), 0).finished(); }
inline RMatrix id() { return RMatrix::Identity(2, 2); }

template <class A, class B>
auto kron(const A& a, const B& b) {
  using S = decltype(typename A::Scalar{} * typename B::Scalar{});
  Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic> out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b.template cast<S>();
  return out;
}
}  // namespace pauli

// ---------------------------------------------------------------------------
// Two capacitively coupled charge qubits; control Gamma = E_cc / E_C.
// Basis |00>, |01>, |10>, |11> with sigma_z |0> = +|0>.

struct TwoQubitJosephson {
  using scalar_type = double;

  double e_c = 1.0;
  double e_j = -1.0;

  [[nodiscard]] Index dimension() const noexcept { return 4; }
  [[nodiscard]] std::size_t control_arity() const noexcept { return 1; }

  [[nodiscard]] RMatrix hamiltonian(std::span<const double> u) const { return build(u[0]); }

  [[nodiscard]] RMatrix build(double gamma_ctrl) const {
    using namespace pauli;
    RMatrix h = e_c * (kron(z(), id()) + kron(id(), z())) + e_j * (kron(x(), id()) + kron(id(), x()));
    h += gamma_ctrl * e_c * kron(z(), z());
    return h;
  }
};

inline RMatrix build_two_qubit(const TwoQubitJosephson& m, double gamma_ctrl) { return m.build(gamma_ctrl); }

// ---------------------------------------------------------------------------
// Lipkin-Meshkov-Glick model in the maximal-spin Dicke sector S = N/2:
//   H = -(J/N) [Sx^2 + gamma Sy^2] - Gamma Sz
// Basis index k = 0..N carries m = k - N/2 (k up spins).

struct LmgDicke {
  using scalar_type = double;

  int n_spins = 2;
  double gamma = 0.0;
  double j = 1.0;

  [[nodiscard]] Index dimension() const noexcept { return n_spins + 1; }
  [[nodiscard]] std::size_t control_arity() const noexcept { return 1; }
  [[nodiscard]] double spin() const noexcept { return 0.5 * n_spins; }
  [[nodiscard]] double m_of(Index k) const noexcept { return static_cast<double>(k) - spin(); }

  [[nodiscard]] RMatrix hamiltonian(std::span<const double> u) const { return build(u[0]); }

  // Sx^2 + gamma Sy^2 = (1-gamma)/4 (S+^2 + S-^2) + (1+gamma)/2 (S^2 - Sz^2)
  [[nodiscard]] RMatrix build(double field) const {
    require(n_spins >= 1, "LmgDicke: n_spins must be positive");
    const Index d = dimension();
    const double s = spin();
    const double ss = s * (s + 1.0);
    const double scale = -j / static_cast<double>(n_spins);
    RMatrix h = RMatrix::Zero(d, d);
    for (Index k = 0; k < d; ++k) {
      const double m = m_of(k);
      h(k, k) = scale * 0.5 * (1.0 + gamma) * (ss - m * m) - field * m;
      if (k + 2 < d) {
        // <m+2| S+^2 |m>
        const double a1 = std::sqrt(ss - m * (m + 1.0));
        const double a2 = std::sqrt(ss - (m + 1.0) * (m + 2.0));
        const double off = scale * 0.25 * (1.0 - gamma) * a1 * a2;
        h(k + 2, k) = off;
        h(k, k + 2) = off;
      }
    }
    return h;
  }

  /// Dicke index of the fully polarized state m = +N/2.
  [[nodiscard]] Index polarized_up_index() const noexcept { return n_spins; }

  /// Indices with the same Sz-parity as the polarized state; the dynamics
  /// never leaves this set because H only couples m to m and m +- 2.
  [[nodiscard]] std::vector<Index> parity_sector() const {
    std::vector<Index> idx;
    for (Index k = n_spins % 2; k <= n_spins; k += 2) idx.push_back(k);
    return idx;
  }
};

inline RMatrix build_lmg(const LmgDicke& m, double gamma_ctrl) { return m.build(gamma_ctrl); }

// ---------------------------------------------------------------------------
// Heisenberg chain with a parabolic field B_n = C (x_n - d)^2, restricted to
// the one-excitation sector (basis |k> = spin k up, others down, k = 0..N-1).
// Controls: (d, C).
//
// Projecting -(J/2) sum s_n.s_{n+1} + sum B_n s^z_n onto the sector gives
// hopping -J, a diagonal J * deg(k) + 2 B_k, and the scalar
// -J (N-1)/2 - sum_n B_n, which is dropped (see sector_offset).

struct SpinChainTransfer {
  using scalar_type = double;

  int n_spins = 2;
  double j = 1.0;
  std::vector<double> positions;  ///< empty means x_n = n (1-based)

  [[nodiscard]] Index dimension() const noexcept { return n_spins; }
  [[nodiscard]] std::size_t control_arity() const noexcept { return 2; }

  [[nodiscard]] double position(Index k) const {
    return positions.empty() ? static_cast<double>(k + 1) : positions[static_cast<std::size_t>(k)];
  }

  [[nodiscard]] RMatrix hamiltonian(std::span<const double> u) const { return build(u[0], u[1]); }

  [[nodiscard]] RMatrix build(double d, double c) const {
    require(n_spins >= 2, "SpinChainTransfer: need at least two spins");
    require(positions.empty() || positions.size() == static_cast<std::size_t>(n_spins),
            "SpinChainTransfer: positions must have one entry per spin");
    const Index n = n_spins;
    RMatrix h = RMatrix::Zero(n, n);
    for (Index k = 0; k < n; ++k) {
      const double degree = (k == 0 || k == n - 1) ? 1.0 : 2.0;
      const double dx = position(k) - d;
      h(k, k) = j * degree + 2.0 * c * dx * dx;
      if (k + 1 < n) {
        h(k, k + 1) = -j;
        h(k + 1, k) = -j;
      }
    }
    return h;
  }

  /// Scalar dropped from the sector matrix: P H_full P = build(d, c) + offset * I.
  [[nodiscard]] double sector_offset(double d, double c) const {
    double field_sum = 0.0;
    for (Index k = 0; k < n_spins; ++k) {
      const double dx = position(k) - d;
      field_sum += c * dx * dx;
    }
    return -0.5 * j * static_cast<double>(n_spins - 1) - field_sum;
  }
};

inline RMatrix build_spin_chain(const SpinChainTransfer& m, double d, double c) { return m.build(d, c); }

// ---------------------------------------------------------------------------
// Symmetry-sector restriction

/// Restricts a model to a subset of its basis that the dynamics cannot leave.
/// States in the sector basis can be embedded back with embed().
template <HamiltonianModel M>
class SectorModel {
public:
  using scalar_type = typename M::scalar_type;
  using matrix_type = model_matrix_t<M>;

  SectorModel(M model, std::vector<Index> indices) : model_(std::move(model)), idx_(std::move(indices)) {
    require(!idx_.empty(), "SectorModel: empty sector");
    require(std::is_sorted(idx_.begin(), idx_.end()) &&
                std::adjacent_find(idx_.begin(), idx_.end()) == idx_.end(),
            "SectorModel: indices must be strictly increasing");
    require(idx_.front() >= 0 && idx_.back() < model_.dimension(), "SectorModel: index out of range");
  }

  [[nodiscard]] Index dimension() const noexcept { return static_cast<Index>(idx_.size()); }
  [[nodiscard]] std::size_t control_arity() const noexcept { return model_.control_arity(); }
  [[nodiscard]] const M& base() const noexcept { return model_; }
  [[nodiscard]] const std::vector<Index>& indices() const noexcept { return idx_; }

  [[nodiscard]] matrix_type hamiltonian(std::span<const double> u) const { return model_.hamiltonian(u)(idx_, idx_); }

  [[nodiscard]] CVector embed(const CVector& v) const {
    require(v.size() == dimension(), "SectorModel::embed: dimension mismatch");
    CVector out = CVector::Zero(model_.dimension());
    for (std::size_t i = 0; i < idx_.size(); ++i) out(idx_[i]) = v(static_cast<Index>(i));
    return out;
  }

  /// Projects a full-basis vector onto the sector; throws if weight leaks out.
  [[nodiscard]] CVector restrict(const CVector& v, double tolerance = 1e-10) const {
    require(v.size() == model_.dimension(), "SectorModel::restrict: dimension mismatch");
    CVector out(dimension());
    for (std::size_t i = 0; i < idx_.size(); ++i) out(static_cast<Index>(i)) = v(idx_[i]);
    require(std::abs(out.squaredNorm() - v.squaredNorm()) <= tolerance, "SectorModel::restrict: state leaves the sector");
    return out;
  }

  [[nodiscard]] QuantumState embed(const QuantumState& s) const {
    return QuantumState::from_amplitudes(embed(s.amplitudes()));
  }
  [[nodiscard]] QuantumState restrict(const QuantumState& s) const {
    return QuantumState::from_amplitudes(restrict(s.amplitudes()));
  }

private:
  M model_;
  std::vector<Index> idx_;
};

inline SectorModel<LmgDicke> lmg_parity_sector(const LmgDicke& m) { return {m, m.parity_sector()}; }

// ---------------------------------------------------------------------------
// Ground states and timing

/// Lowest eigenvector, phase fixed. With a sector, the eigenproblem is solved
/// inside the sector and the result embedded in the full basis.
template <HamiltonianModel M>
QuantumState ground_state(const M& model, std::span<const double> control_values,
                          const std::vector<Index>* symmetry_filter = nullptr) {
  if (symmetry_filter) {
    SectorModel<M> sector(model, *symmetry_filter);
    const auto s = instantaneous_spectrum(sector, control_values, 1);
    CVector v = sector.embed(CVector(s.vectors.col(0).template cast<cplx>()));
    return QuantumState::normalized(std::move(v));
  }
  const auto s = instantaneous_spectrum(model, control_values, 1);
  return QuantumState::normalized(s.vectors.col(0).template cast<cplx>());
}

template <HamiltonianModel M>
QuantumState ground_state(const M& model, std::initializer_list<double> control_values,
                          const std::vector<Index>* symmetry_filter = nullptr) {
  const std::vector<double> u(control_values);
  return ground_state(model, std::span<const double>(u), symmetry_filter);
}

/// (gap', t) with t * gap' == pi in floating point. gap' is usually within a
/// few ulps of gap; with both mantissas near sqrt(pi/2) the product barely
/// moves per ulp and the nudge can reach ~1e-9 relative (bounded by 1e-8).
inline std::pair<double, double> qsl_pair(double gap) {
  auto t_for = [](double g) -> std::optional<double> {
    double t = pi / g;
    if (t * g == pi) return t;
    double up = t, down = t;
    for (int i = 0; i < 4; ++i) {
      up = std::nextafter(up, std::numeric_limits<double>::infinity());
      if (up * g == pi) return up;
      down = std::nextafter(down, 0.0);
      if (down * g == pi) return down;
    }
    return std::nullopt;
  };
  double up = gap, down = gap;
  if (auto t = t_for(gap)) return {gap, *t};
  for (int i = 0; i < 64; ++i) {
    up = std::nextafter(up, std::numeric_limits<double>::infinity());
    if (auto t = t_for(up)) return {up, *t};
    down = std::nextafter(down, 0.0);
    if (auto t = t_for(down)) return {down, *t};
  }
  for (int k = 1; k < (1 << 15); ++k) {
    for (double s : {1.0, -1.0}) {
      const double g = gap * (1.0 + s * k * 0x1p-42);
      if (auto t = t_for(g)) return {g, *t};
    }
  }
  throw consistency_error("qsl_pair: no exact (gap, t) pair near " + std::to_string(gap));
}

struct ProblemTiming {
  double gap_min = 0.0;
  double t_qsl = 0.0;
  double total_time = 0.0;
  std::vector<double> argmin;

  static ProblemTiming from_gap(double gap, std::vector<double> at = {}, double multiple = 2.0) {
    require(gap > 0.0 && std::isfinite(gap), "ProblemTiming: gap must be positive");
    ProblemTiming t;
    std::tie(t.gap_min, t.t_qsl) = qsl_pair(gap);
    t.total_time = multiple * t.t_qsl;
    t.argmin = std::move(at);
    return t;
  }
};

/// T_QSL = pi / Delta with Delta the scanned minimum gap. Pass a
/// sector-restricted model to scan only dynamically reachable levels.
template <HamiltonianModel M>
ProblemTiming quantum_speed_limit(const M& model, std::span<const std::vector<double>> grid, double multiple = 2.0) {
  auto scan = minimum_gap_scan(model, grid);
  return ProblemTiming::from_gap(scan.gap_min, std::move(scan.argmin), multiple);
}

}  // namespace crab
