#pragma once

// CRAB-parametrized control fields:
//
//   Gamma(t) = Gamma0(t) * [1 + (sum_n A_n sin(w_n t) + B_n cos(w_n t)) / lambda(t)]
//
// with a boundary regularizer 1/lambda(t) that vanishes at t = 0 and t = T so
// the corrected pulse keeps the guess' boundary values.

#include "crab/core.hpp"

#include <algorithm>
#include <cstddef>
#include <optional>
#include <span>
#include <variant>

namespace crab {

/// Correction amplitudes and angular frequencies of one control field.
struct CrabParams {
  std::vector<double> amplitudes_a;
  std::vector<double> amplitudes_b;
  std::vector<double> frequencies;

  [[nodiscard]] std::size_t n_components() const noexcept { return frequencies.size(); }

  /// Zero amplitudes on the given frequencies.
  static CrabParams zeros(std::vector<double> frequencies) {
    CrabParams p;
    p.amplitudes_a.assign(frequencies.size(), 0.0);
    p.amplitudes_b.assign(frequencies.size(), 0.0);
    p.frequencies = std::move(frequencies);
    p.validate();
    return p;
  }

  void validate() const {
    const auto nc = frequencies.size();
    require(amplitudes_a.size() == nc && amplitudes_b.size() == nc,
            "CrabParams: A, B and frequency arrays must have length n_components");
    for (std::size_t k = 0; k < nc; ++k) {
      require(frequencies[k] > 0.0 && std::isfinite(frequencies[k]), "CrabParams: frequencies must be positive");
      if (k > 0) require(frequencies[k] > frequencies[k - 1], "CrabParams: frequencies must be strictly increasing");
    }
  }
};

namespace guess {
struct Constant {
  double value = 1.0;
};
struct LinearRamp {
  double start = 0.0;
  double end = 1.0;
};
/// Piecewise-linear interpolation through (time, value) samples.
struct Table {
  std::vector<double> times;
  std::vector<double> values;
};
}  // namespace guess

/// The initial pulse guess Gamma0(t) on [0, T].
class BaseGuess {
public:
  using Kind = std::variant<guess::Constant, guess::LinearRamp, guess::Table>;

  BaseGuess() : kind_(guess::Constant{1.0}) {}
  BaseGuess(guess::Constant c) : kind_(c) {}
  BaseGuess(guess::LinearRamp r) : kind_(r) {}
  BaseGuess(guess::Table t) : kind_(std::move(t)) {}

  static BaseGuess constant(double v) { return guess::Constant{v}; }
  static BaseGuess linear(double start, double end) { return guess::LinearRamp{start, end}; }

  [[nodiscard]] const Kind& kind() const noexcept { return kind_; }

  /// Checks the table covers [0, total_time] with strictly increasing times.
  void validate(double total_time) const {
    if (const auto* tab = std::get_if<guess::Table>(&kind_)) {
      require(tab->times.size() >= 2 && tab->times.size() == tab->values.size(),
              "BaseGuess table: need >= 2 samples with matching value count");
      for (std::size_t i = 1; i < tab->times.size(); ++i)
        require(tab->times[i] > tab->times[i - 1], "BaseGuess table: times must be strictly increasing");
      require(tab->times.front() <= 0.0 && tab->times.back() >= total_time,
              "BaseGuess table: samples must cover [0, T]");
    }
  }

  [[nodiscard]] double operator()(double t, double total_time) const {
    return std::visit(
        [&](const auto& g) -> double {
          using G = std::decay_t<decltype(g)>;
          if constexpr (std::is_same_v<G, guess::Constant>) {
            return g.value;
          } else if constexpr (std::is_same_v<G, guess::LinearRamp>) {
            const double s = t / total_time;
            return g.start + (g.end - g.start) * s;
          } else {
            const auto it = std::upper_bound(g.times.begin(), g.times.end(), t);
            if (it == g.times.begin()) return g.values.front();
            if (it == g.times.end()) return g.values.back();
            const auto hi = static_cast<std::size_t>(it - g.times.begin());
            const auto lo = hi - 1;
            const double w = (t - g.times[lo]) / (g.times[hi] - g.times[lo]);
            return g.values[lo] + w * (g.values[hi] - g.values[lo]);
          }
        },
        kind_);
  }

private:
  Kind kind_;
};

enum class RegularizerKind { PolynomialBump, None };

/// Weight 1/lambda(t) applied to the correction.
struct BoundaryRegularizer {
  RegularizerKind kind = RegularizerKind::PolynomialBump;
  double total_time = 1.0;

  BoundaryRegularizer() = default;
  BoundaryRegularizer(RegularizerKind k, double T) : kind(k), total_time(T) {
    require(T > 0.0 && std::isfinite(T), "BoundaryRegularizer: total_time must be positive");
  }

  /// 4 t (T - t) / T^2 for the bump: zero at both ends, one at T/2.
  [[nodiscard]] double inverse_lambda(double t) const noexcept {
    if (kind == RegularizerKind::None) return 1.0;
    return 4.0 * t * (total_time - t) / (total_time * total_time);
  }
};

/// Trigonometric correction sum_n A_n sin(w_n t) + B_n cos(w_n t).
inline double crab_correction(const CrabParams& p, double t) noexcept {
  double s = 0.0;
  for (std::size_t n = 0; n < p.frequencies.size(); ++n) {
    const double wt = p.frequencies[n] * t;
    s += p.amplitudes_a[n] * std::sin(wt) + p.amplitudes_b[n] * std::cos(wt);
  }
  return s;
}

/// One CRAB control field. Immutable after construction.
class ControlField {
public:
  ControlField(BaseGuess base, CrabParams params, BoundaryRegularizer regularizer,
               std::optional<std::uint64_t> seed = std::nullopt)
      : base_(std::move(base)), params_(std::move(params)), reg_(regularizer), seed_(seed) {
    params_.validate();
    base_.validate(reg_.total_time);
  }

  /// Field equal to its guess everywhere.
  static ControlField uncorrected(BaseGuess base, double total_time) {
    return ControlField(std::move(base), CrabParams{}, BoundaryRegularizer(RegularizerKind::PolynomialBump, total_time));
  }

  [[nodiscard]] const BaseGuess& base() const noexcept { return base_; }
  [[nodiscard]] const CrabParams& params() const noexcept { return params_; }
  [[nodiscard]] const BoundaryRegularizer& regularizer() const noexcept { return reg_; }
  [[nodiscard]] double total_time() const noexcept { return reg_.total_time; }
  [[nodiscard]] std::optional<std::uint64_t> seed() const noexcept { return seed_; }

  /// Modulation g(t); no range check.
  [[nodiscard]] double modulation(double t) const noexcept {
    return 1.0 + crab_correction(params_, t) * reg_.inverse_lambda(t);
  }

  [[nodiscard]] double operator()(double t) const {
    if (!(t >= 0.0 && t <= reg_.total_time))
      throw std::out_of_range("ControlField: t = " + std::to_string(t) + " outside [0, T]");
    return base_(t, reg_.total_time) * modulation(t);
  }

  /// Same field with the correction amplitudes (and optionally frequencies) replaced.
  [[nodiscard]] ControlField with_params(CrabParams p) const { return ControlField(base_, std::move(p), reg_, seed_); }

private:
  BaseGuess base_;
  CrabParams params_;
  BoundaryRegularizer reg_;
  std::optional<std::uint64_t> seed_;
};

/// w_k = 2 pi k (1 + r_k) / T, k = 1..n, with r_k ~ U[-1/2, 1/2] when randomized.
/// Sorted ascending; a tie (measure zero) triggers a fresh draw.
inline std::vector<double> make_frequencies(std::size_t n_components, double total_time, bool randomized,
                                            std::uint64_t seed) {
  require(n_components >= 1, "make_frequencies: n_components must be >= 1");
  require(total_time > 0.0 && std::isfinite(total_time), "make_frequencies: total_time must be positive");
  Rng rng(seed);
  std::vector<double> w(n_components);
  for (;;) {
    for (std::size_t k = 1; k <= n_components; ++k) {
      const double r = randomized ? rng.uniform(-0.5, 0.5) : 0.0;
      w[k - 1] = 2.0 * pi * static_cast<double>(k) * (1.0 + r) / total_time;
    }
    std::sort(w.begin(), w.end());
    if (std::adjacent_find(w.begin(), w.end()) == w.end() && w.front() > 0.0) return w;
  }
}

inline double eval_control(const ControlField& field, double t) { return field(t); }

struct ControlSample {
  double t;
  double value;
};

/// Midpoint samples t_j = (j + 1/2) T / n_steps.
inline std::vector<ControlSample> sample_control(const ControlField& field, std::size_t n_steps) {
  require(n_steps >= 1, "sample_control: n_steps must be >= 1");
  std::vector<ControlSample> out(n_steps);
  const double dt = field.total_time() / static_cast<double>(n_steps);
  for (std::size_t j = 0; j < n_steps; ++j) {
    const double t = (static_cast<double>(j) + 0.5) * dt;
    out[j] = {t, field(t)};
  }
  return out;
}

}  // namespace crab
