#pragma once

// Brute-force references on the full 2^N qubit space plus small random
// generators for the property tests. Nothing here calls the closed-form
// builders it is used to check.
//
// Conventions: site 0 is the most significant bit of a basis index; local
// state 0 is spin up (sigma_z = +1), local state 1 is spin down.

#include "crab/optimizer.hpp"
#include "crab/models.hpp"

#include <bit>

namespace oracle {

using namespace crab;

inline CMatrix local_x() { return (CMatrix(2, 2) << 0, 1, 1, 0).finished(); }
inline CMatrix local_y() { return (CMatrix(2, 2) << 0, cplx(0, -1), cplx(0, 1), 0).finished(); }
inline CMatrix local_z() { return (CMatrix(2, 2) << 1, 0, 0, -1).finished(); }

/// op acting on `site` of an n-qubit register.
inline CMatrix on_site(const CMatrix& op, int site, int n) {
  CMatrix out = CMatrix::Identity(1, 1);
  for (int s = 0; s < n; ++s) {
    const CMatrix f = s == site ? op : CMatrix::Identity(2, 2);
    CMatrix next(out.rows() * 2, out.cols() * 2);
    for (Index i = 0; i < out.rows(); ++i)
      for (Index j = 0; j < out.cols(); ++j) next.block(2 * i, 2 * j, 2, 2) = out(i, j) * f;
    out = next;
  }
  return out;
}

inline CMatrix total_spin(const CMatrix& op, int n) {
  const Index d = Index{1} << n;
  CMatrix s = CMatrix::Zero(d, d);
  for (int k = 0; k < n; ++k) s += 0.5 * on_site(op, k, n);
  return s;
}

/// -(J/N)(Sx^2 + gamma Sy^2) - field Sz on 2^N states.
inline CMatrix lmg_full(int n, double gamma, double j, double field) {
  const CMatrix sx = total_spin(local_x(), n), sy = total_spin(local_y(), n), sz = total_spin(local_z(), n);
  return -(j / n) * (sx * sx + gamma * sy * sy) - field * sz;
}

/// -(J/2) sum sigma_n . sigma_{n+1} + sum C (x_n - d)^2 sigma^z_n.
inline CMatrix chain_full(int n, double j, const std::vector<double>& x, double d, double c) {
  const Index dim = Index{1} << n;
  CMatrix h = CMatrix::Zero(dim, dim);
  for (int k = 0; k + 1 < n; ++k)
    for (const auto& op : {local_x(), local_y(), local_z()}) h += -0.5 * j * on_site(op, k, n) * on_site(op, k + 1, n);
  for (int k = 0; k < n; ++k) h += c * (x[k] - d) * (x[k] - d) * on_site(local_z(), k, n);
  return h;
}

inline int ups(Index basis_index, int n) { return n - std::popcount(static_cast<unsigned long long>(basis_index)); }

/// Columns: symmetric Dicke states with k = 0..N up spins.
inline CMatrix dicke_columns(int n) {
  const Index dim = Index{1} << n;
  CMatrix v = CMatrix::Zero(dim, n + 1);
  for (Index i = 0; i < dim; ++i) v(i, ups(i, n)) = 1.0;
  for (int k = 0; k <= n; ++k) v.col(k).normalize();
  return v;
}

/// Columns: spin k up, all others down.
inline CMatrix one_excitation_columns(int n) {
  const Index dim = Index{1} << n;
  CMatrix v = CMatrix::Zero(dim, n);
  for (int k = 0; k < n; ++k) {
    const Index all_down = dim - 1;
    v(all_down & ~(Index{1} << (n - 1 - k)), k) = 1.0;
  }
  return v;
}

/// Binomial coefficient by the multiplicative formula (exact below 2^53).
inline double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// ---------------------------------------------------------------------------
// generators

struct Gen {
  explicit Gen(std::uint64_t seed) : rng(seed) {}
  Rng rng;

  double real(double lo, double hi) { return rng.uniform(lo, hi); }
  int integer(int lo, int hi) { return lo + static_cast<int>(rng.next() % static_cast<std::uint64_t>(hi - lo + 1)); }

  CVector complex_vector(Index d) {
    CVector v(d);
    for (Index i = 0; i < d; ++i) v(i) = cplx(rng.normal(), rng.normal());
    return v;
  }
  QuantumState state(Index d) { return QuantumState::normalized(complex_vector(d)); }

  std::vector<double> reals(std::size_t n, double lo, double hi) {
    std::vector<double> v(n);
    for (auto& x : v) x = real(lo, hi);
    return v;
  }

  BaseGuess guess(double T) {
    switch (integer(0, 2)) {
      case 0: return BaseGuess::constant(real(-3, 3));
      case 1: return BaseGuess::linear(real(-3, 3), real(-3, 3));
      default: {
        guess::Table t;
        const int n = integer(2, 6);
        for (int i = 0; i < n; ++i) {
          t.times.push_back(i + 1 == n ? T : T * i / (n - 1));
          t.values.push_back(real(-2, 2));
        }
        return t;
      }
    }
  }

  CrabParams params(std::size_t nc, double T, double scale = 1.0) {
    CrabParams p = CrabParams::zeros(make_frequencies(nc, T, true, rng.next()));
    p.amplitudes_a = reals(nc, -scale, scale);
    p.amplitudes_b = reals(nc, -scale, scale);
    return p;
  }

  ControlField field(double T, std::size_t max_nc = 6, double scale = 1.0) {
    const auto nc = static_cast<std::size_t>(integer(1, static_cast<int>(max_nc)));
    return ControlField(guess(T), params(nc, T, scale), BoundaryRegularizer(RegularizerKind::PolynomialBump, T));
  }
};

}  // namespace oracle
