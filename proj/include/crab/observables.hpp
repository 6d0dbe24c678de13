#pragma once

// Bipartite entanglement entropy.
//
// For states in the maximal-spin sector the block/environment split is
// computed directly from the Dicke amplitudes: with L block spins,
//   |N/2, n> = sum_l sqrt(p_{l,n}) |L/2, l - L/2> (x) |(N-L)/2, n - l - (N-L)/2>
//   p_{l,n}  = C(L, l) C(N-L, n-l) / C(N, n)
// where n and l count up spins in the whole system and in the block.
// The generic partial trace over qubits is kept as an independent route.

#include "crab/core.hpp"

#include <algorithm>
#include <span>

namespace crab {

struct DickeBipartition {
  int n_spins = 2;
  int block_size = 1;

  DickeBipartition() = default;
  DickeBipartition(int n, int l) : n_spins(n), block_size(l) {
    require(n >= 2, "DickeBipartition: need at least two spins");
    require(l >= 1 && l <= n - 1, "DickeBipartition: block size must lie in [1, N-1]");
  }
  [[nodiscard]] Index reduced_dimension() const noexcept { return block_size + 1; }
};

struct DensityMatrix {
  CMatrix entries;

  [[nodiscard]] Index dimension() const noexcept { return entries.rows(); }
  [[nodiscard]] double trace() const { return entries.trace().real(); }
};

namespace detail {
inline double log_factorial(int k) { return std::lgamma(static_cast<double>(k) + 1.0); }
}  // namespace detail

/// p_{l,n}, evaluated in log-factorial space. Zero outside
/// max(0, n - (N-L)) <= l <= min(L, n).
inline double dicke_weight(int n_spins, int block_size, int l, int n) {
  require(n_spins >= 1, "dicke_weight: N must be positive");
  require(block_size >= 0 && block_size <= n_spins, "dicke_weight: L must lie in [0, N]");
  require(n >= 0 && n <= n_spins, "dicke_weight: n must lie in [0, N]");
  const int rest = n_spins - block_size;
  if (l < std::max(0, n - rest) || l > std::min(block_size, n)) return 0.0;
  using detail::log_factorial;
  const double log_p = log_factorial(block_size) + log_factorial(rest) + log_factorial(n) +
                       log_factorial(n_spins - n) - log_factorial(l) - log_factorial(block_size - l) -
                       log_factorial(n - l) - log_factorial(rest - n + l) - log_factorial(n_spins);
  return std::exp(log_p);
}

/// Block reduced density matrix of a maximal-spin state given by its Dicke
/// amplitudes c_n (n = number of up spins, n = 0..N).
inline DensityMatrix reduced_density_dicke(const CVector& dicke_amplitudes, const DickeBipartition& part) {
  const int n_spins = part.n_spins;
  const int block = part.block_size;
  const int rest = n_spins - block;
  require(dicke_amplitudes.size() == n_spins + 1, "reduced_density_dicke: state dimension must be N + 1");

  // Amplitude of |block l> (x) |env e> is c_{l+e} sqrt(p_{l, l+e}).
  CMatrix psi(block + 1, rest + 1);
  for (int l = 0; l <= block; ++l)
    for (int e = 0; e <= rest; ++e) psi(l, e) = dicke_amplitudes(l + e) * std::sqrt(dicke_weight(n_spins, block, l, l + e));

  DensityMatrix rho{psi * psi.adjoint()};
  if (std::abs(rho.trace() - 1.0) > 1e-10)
    throw std::invalid_argument("reduced_density_dicke: input state is not normalized");
  return rho;
}

inline DensityMatrix reduced_density_dicke(const QuantumState& state, const DickeBipartition& part) {
  return reduced_density_dicke(state.amplitudes(), part);
}

/// Eigenvalues of a density matrix; negative rounding noise above -1e-10 is clamped to zero.
inline RVector density_spectrum(const DensityMatrix& rho) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(rho.entries, Eigen::EigenvaluesOnly);
  RVector ev = es.eigenvalues();
  for (Index i = 0; i < ev.size(); ++i) {
    if (ev(i) < -1e-10) throw std::invalid_argument("density matrix has a negative eigenvalue");
    ev(i) = std::max(ev(i), 0.0);
  }
  return ev;
}

/// -Tr(rho log2 rho) in bits; eigenvalues below 1e-14 contribute zero.
inline double von_neumann_entropy(const DensityMatrix& rho) {
  require(rho.entries.rows() == rho.entries.cols() && rho.dimension() >= 1, "von_neumann_entropy: matrix must be square");
  if (std::abs(rho.trace() - 1.0) > 1e-10) throw std::invalid_argument("von_neumann_entropy: trace differs from 1");
  const RVector ev = density_spectrum(rho);
  double s = 0.0;
  for (Index i = 0; i < ev.size(); ++i)
    if (ev(i) > 1e-14) s -= ev(i) * std::log2(ev(i));
  return std::clamp(s, 0.0, std::log2(static_cast<double>(rho.dimension())));
}

inline constexpr int max_generic_qubits = 12;

/// Exact partial trace of an N-qubit state over every site not in block_sites.
/// Site 0 is the most significant bit of the basis index.
inline DensityMatrix reduced_density_generic(const CVector& full_state, int n_qubits, std::span<const int> block_sites) {
  if (n_qubits > max_generic_qubits)
    throw resource_limit_error("reduced_density_generic: " + std::to_string(n_qubits) + " qubits exceeds the limit of " +
                               std::to_string(max_generic_qubits));
  require(n_qubits >= 1, "reduced_density_generic: need at least one qubit");
  require(full_state.size() == (Index{1} << n_qubits), "reduced_density_generic: state dimension must be 2^N");
  std::vector<int> block(block_sites.begin(), block_sites.end());
  std::sort(block.begin(), block.end());
  require(std::adjacent_find(block.begin(), block.end()) == block.end(), "reduced_density_generic: repeated site");
  for (int s : block) require(s >= 0 && s < n_qubits, "reduced_density_generic: site out of range");
  std::vector<int> env;
  for (int s = 0; s < n_qubits; ++s)
    if (!std::binary_search(block.begin(), block.end(), s)) env.push_back(s);

  const Index nb = Index{1} << block.size();
  const Index ne = Index{1} << env.size();
  auto bit_of = [n_qubits](Index idx, int site) { return (idx >> (n_qubits - 1 - site)) & 1; };
  CMatrix psi = CMatrix::Zero(nb, ne);
  for (Index idx = 0; idx < full_state.size(); ++idx) {
    Index b = 0, e = 0;
    for (int s : block) b = (b << 1) | bit_of(idx, s);
    for (int s : env) e = (e << 1) | bit_of(idx, s);
    psi(b, e) = full_state(idx);
  }
  return DensityMatrix{psi * psi.adjoint()};
}

}  // namespace crab
