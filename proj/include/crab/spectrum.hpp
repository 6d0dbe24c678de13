#pragma once

#include "crab/core.hpp"

#include <concepts>
#include <optional>
#include <span>

namespace crab {

/// A model maps instantaneous control values to a Hermitian matrix in its
/// working basis. `scalar_type` is double for real-symmetric models.
template <class M>
concept HamiltonianModel = requires(const M& m, std::span<const double> u) {
  typename M::scalar_type;
  { m.dimension() } -> std::convertible_to<Index>;
  { m.control_arity() } -> std::convertible_to<std::size_t>;
  { m.hamiltonian(u) } -> std::convertible_to<Eigen::Matrix<typename M::scalar_type, Eigen::Dynamic, Eigen::Dynamic>>;
};

template <class M>
using model_matrix_t = Eigen::Matrix<typename M::scalar_type, Eigen::Dynamic, Eigen::Dynamic>;

inline constexpr double hermiticity_tolerance = 1e-12;

template <HamiltonianModel M>
model_matrix_t<M> checked_hamiltonian(const M& model, std::span<const double> u) {
  if (u.size() != model.control_arity())
    throw std::invalid_argument("control count " + std::to_string(u.size()) + " does not match model arity " +
                                std::to_string(model.control_arity()));
  model_matrix_t<M> h = model.hamiltonian(u);
  if (h.rows() != model.dimension() || h.cols() != model.dimension())
    throw consistency_error("model produced a matrix of the wrong size");
  const double scale = std::max(1.0, h.cwiseAbs().maxCoeff());
  if (hermiticity_residual(h) > hermiticity_tolerance * scale)
    throw consistency_error("model produced a non-Hermitian matrix");
  return h;
}

/// Lowest eigenpairs, ascending, eigenvector phases fixed.
template <class Scalar>
struct Spectrum {
  RVector energies;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> vectors;  ///< columns
};

template <class Scalar>
Spectrum<Scalar> lowest_eigenpairs(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& h, Index k_levels) {
  require(k_levels >= 1 && k_levels <= h.rows(), "k_levels must lie in [1, dimension]");
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>> es(h);
  if (es.info() != Eigen::Success) throw consistency_error("eigendecomposition failed");
  Spectrum<Scalar> s{es.eigenvalues().head(k_levels), es.eigenvectors().leftCols(k_levels)};
  for (Index i = 0; i < k_levels; ++i) {
    auto col = s.vectors.col(i);
    fix_phase(col);
  }
  return s;
}

template <HamiltonianModel M>
Spectrum<typename M::scalar_type> instantaneous_spectrum(const M& model, std::span<const double> control_values,
                                                         Index k_levels) {
  return lowest_eigenpairs(checked_hamiltonian(model, control_values), k_levels);
}

struct GapScanResult {
  double gap_min;
  std::vector<double> argmin;  ///< control values at the minimum
};

/// Minimum E1 - E0 over a grid of control tuples; first occurrence wins ties.
/// Symmetry sectors are handled by passing a sector-restricted model.
template <HamiltonianModel M>
GapScanResult minimum_gap_scan(const M& model, std::span<const std::vector<double>> control_grid) {
  require(!control_grid.empty(), "minimum_gap_scan: empty grid");
  require(model.dimension() >= 2, "minimum_gap_scan: need at least two levels");
  GapScanResult best{std::numeric_limits<double>::infinity(), {}};
  for (const auto& u : control_grid) {
    const auto h = checked_hamiltonian(model, u);
    Eigen::SelfAdjointEigenSolver<model_matrix_t<M>> es(h, Eigen::EigenvaluesOnly);
    const double gap = es.eigenvalues()(1) - es.eigenvalues()(0);
    if (gap < best.gap_min) best = {gap, u};
  }
  return best;
}

/// Uniform 1-D grid of single-control tuples, both ends included.
inline std::vector<std::vector<double>> linear_grid(double lo, double hi, std::size_t points) {
  require(points >= 1, "linear_grid: need at least one point");
  std::vector<std::vector<double>> g(points);
  for (std::size_t i = 0; i < points; ++i) {
    const double s = points == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(points - 1);
    g[i] = {lo + (hi - lo) * s};
  }
  return g;
}

/// Gap scan followed by a golden-section refinement around the coarse
/// minimum (single-control models only).
template <HamiltonianModel M>
GapScanResult refined_gap_scan(const M& model, double lo, double hi, std::size_t points) {
  const auto grid = linear_grid(lo, hi, points);
  GapScanResult best = minimum_gap_scan(model, std::span<const std::vector<double>>(grid));
  if (points < 3 || model.control_arity() != 1) return best;
  const double h = (hi - lo) / static_cast<double>(points - 1);
  double a = std::max(lo, best.argmin[0] - h), b = std::min(hi, best.argmin[0] + h);
  auto gap_at = [&](double x) {
    const std::vector<double> u{x};
    Eigen::SelfAdjointEigenSolver<model_matrix_t<M>> es(checked_hamiltonian(model, u), Eigen::EigenvaluesOnly);
    return es.eigenvalues()(1) - es.eigenvalues()(0);
  };
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - invphi * (b - a), d = a + invphi * (b - a);
  double fc = gap_at(c), fd = gap_at(d);
  for (int it = 0; it < 80 && (b - a) > 1e-12 * std::max(1.0, std::abs(a)); ++it) {
    if (fc < fd) {
      b = d; d = c; fd = fc;
      c = b - invphi * (b - a); fc = gap_at(c);
    } else {
      a = c; c = d; fc = fd;
      d = a + invphi * (b - a); fd = gap_at(d);
    }
  }
  const double x = fc < fd ? c : d;
  const double fx = std::min(fc, fd);
  if (fx < best.gap_min) best = {fx, {x}};
  return best;
}

}  // namespace crab
