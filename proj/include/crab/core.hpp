#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace crab {

using cplx = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;
using RVector = Eigen::VectorXd;
using RMatrix = Eigen::MatrixXd;
using Index = Eigen::Index;

inline constexpr double pi = std::numbers::pi;

/// Raised when a numerical invariant the library relies on is violated
/// (non-Hermitian Hamiltonian, norm drift, inconsistent manifests).
class consistency_error : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

/// Raised when a request would exceed a hard resource guard.
class resource_limit_error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

inline void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

// ---------------------------------------------------------------------------
// Seeding

/// SplitMix64 finalizer; used to derive independent per-instance seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) noexcept {
  return mix_seed(mix_seed(master) ^ mix_seed(stream + 0x632be59bd9b4e019ULL));
}

/// 64-bit Mersenne twister with a portable uniform draw (the standard
/// distributions are implementation-defined, which would break bit-exact
/// reproducibility across standard libraries).
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * pi * u2);
  }

  std::uint64_t next() { return engine_(); }

private:
  std::mt19937_64 engine_;
};

// ---------------------------------------------------------------------------
// QuantumState

/// Unit-norm complex amplitude vector in a model's working basis.
class QuantumState {
public:
  static constexpr double norm_tolerance = 1e-10;

  QuantumState() = default;

  /// Takes amplitudes that must already have unit norm.
  static QuantumState from_amplitudes(CVector amplitudes) {
    const double n = amplitudes.norm();
    if (std::abs(n - 1.0) > norm_tolerance)
      throw std::invalid_argument("QuantumState: norm " + std::to_string(n) + " differs from 1");
    return QuantumState(std::move(amplitudes));
  }

  /// Rescales arbitrary nonzero amplitudes to unit norm.
  static QuantumState normalized(CVector amplitudes) {
    const double n = amplitudes.norm();
    if (!(n > 0.0) || !std::isfinite(n)) throw std::invalid_argument("QuantumState: zero or non-finite vector");
    amplitudes /= n;
    return QuantumState(std::move(amplitudes));
  }

  static QuantumState basis(Index dimension, Index k) {
    require(k >= 0 && k < dimension, "QuantumState::basis: index out of range");
    CVector v = CVector::Zero(dimension);
    v(k) = 1.0;
    return QuantumState(std::move(v));
  }

  [[nodiscard]] const CVector& amplitudes() const noexcept { return amp_; }
  [[nodiscard]] Index dimension() const noexcept { return amp_.size(); }
  [[nodiscard]] double norm() const { return amp_.norm(); }

  /// <this|other>
  [[nodiscard]] cplx overlap(const QuantumState& other) const {
    require(dimension() == other.dimension(), "QuantumState::overlap: dimension mismatch");
    return amp_.dot(other.amp_);
  }

private:
  explicit QuantumState(CVector amp) : amp_(std::move(amp)) {}
  friend class StatePropagatorAccess;
  CVector amp_;
};

/// Internal escape hatch for the propagator, which keeps norm exactly by
/// construction and must not pay for a check per step.
class StatePropagatorAccess {
public:
  static QuantumState wrap(CVector amp) { return QuantumState(std::move(amp)); }
};

/// Largest-magnitude component made real positive.
template <class Derived>
void fix_phase(Eigen::MatrixBase<Derived>& v) {
  Index arg = 0;
  v.cwiseAbs().maxCoeff(&arg);
  const auto c = v(arg);
  if (std::abs(c) == 0.0) return;
  using Scalar = typename Derived::Scalar;
  if constexpr (std::is_same_v<Scalar, cplx>) {
    v *= std::conj(c) / std::abs(c);
    v(arg) = std::abs(c);
  } else {
    if (c < 0) v = -v;
  }
}

template <class Derived>
double hermiticity_residual(const Eigen::MatrixBase<Derived>& m) {
  return (m - m.adjoint()).cwiseAbs().maxCoeff();
}

}  // namespace crab
