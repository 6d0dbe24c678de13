#include "support/oracles.hpp"

#include "crab/costs.hpp"

#include <gtest/gtest.h>

using namespace crab;

namespace {

AffineModel<double> two_level(double delta, double omega) {
  return AffineModel<double>(delta * pauli::z() + omega * pauli::x(), {});
}

/// Gamma sigma_z + sigma_x with Gamma the control.
AffineModel<double> avoided_crossing() { return AffineModel<double>(pauli::x(), {pauli::z()}); }

struct NonHermitian {
  using scalar_type = double;
  [[nodiscard]] Index dimension() const { return 2; }
  [[nodiscard]] std::size_t control_arity() const { return 1; }
  [[nodiscard]] RMatrix hamiltonian(std::span<const double> u) const {
    return (RMatrix(2, 2) << 0, u[0], 0, 0).finished();
  }
};

AffineModel<cplx> random_complex_model(oracle::Gen& g, Index d) {
  auto herm = [&] {
    CMatrix a(d, d);
    for (Index i = 0; i < d; ++i)
      for (Index j = 0; j < d; ++j) a(i, j) = cplx(g.rng.normal(), g.rng.normal());
    return CMatrix(0.5 * (a + a.adjoint()));
  };
  return AffineModel<cplx>(herm(), {herm()});
}

double fidelity(const QuantumState& a, const QuantumState& b) { return std::norm(a.overlap(b)); }

SectorModel<LmgDicke> lmg_sector(int n) { return lmg_parity_sector(LmgDicke{n, 0.0, 1.0}); }

ProblemTiming lmg_timing(const SectorModel<LmgDicke>& s) {
  const auto scan = refined_gap_scan(s, 0.0, 10.0, 2001);
  return ProblemTiming::from_gap(scan.gap_min, scan.argmin);
}

}  // namespace

TEST(Propagate, StationaryStateOnlyPicksUpAPhase) {
  oracle::Gen g(21);
  for (int trial = 0; trial < 20; ++trial) {
    const auto model = random_complex_model(g, 5);
    const double u = g.real(-1, 1), T = g.real(0.1, 5);
    const auto spec = instantaneous_spectrum(model, std::vector<double>{u}, 5);
    const Index k = g.integer(0, 4);
    const auto v = QuantumState::normalized(spec.vectors.col(k));
    const std::vector<ControlField> ctl{ControlField::uncorrected(BaseGuess::constant(u), T)};
    const auto out = propagate(model, ctl, v, T, PropagationConfig{50, std::nullopt}).final_state;
    EXPECT_NEAR(fidelity(out, v), 1.0, 1e-10);
    const cplx expected = std::polar(1.0, -spec.energies(k) * T);
    EXPECT_NEAR(std::abs(v.overlap(out) - expected), 0.0, 1e-10);
  }
}

TEST(Propagate, RabiFormula) {
  for (auto [delta, omega, T] : {std::tuple{0.7, 1.3, 2.9}, std::tuple{-0.4, 0.9, 10.0}, std::tuple{2.0, 0.3, 1.1}}) {
    const auto model = two_level(delta, omega);
    const auto out = propagate(model, std::span<const ControlField>{}, QuantumState::basis(2, 0), T,
                               PropagationConfig{1000, std::nullopt})
                         .final_state;
    const double e = std::hypot(delta, omega);
    const double p1 = omega * omega / (e * e) * std::pow(std::sin(e * T), 2);
    EXPECT_NEAR(std::norm(out.amplitudes()(1)), p1, 1e-8);
  }
  // frozen value for (0.7, 1.3, 2.9)
  const auto out = propagate(two_level(0.7, 1.3), std::span<const ControlField>{}, QuantumState::basis(2, 0), 2.9,
                             PropagationConfig{1000, std::nullopt});
  EXPECT_NEAR(std::norm(out.final_state.amplitudes()(1)), 0.6401620443106559, 1e-12);
}

TEST(Propagate, UnitarityAcrossModels) {
  oracle::Gen g(22);
  for (int trial = 0; trial < 30; ++trial) {
    const double T = g.real(0.5, 20);
    const auto steps = static_cast<std::size_t>(g.integer(1, 400));
    {
      const std::vector<ControlField> c{g.field(T, 6, 2.0)};
      const auto r = propagate(TwoQubitJosephson{}, c, g.state(4), T, PropagationConfig{steps, std::nullopt});
      EXPECT_NEAR(r.final_state.norm(), 1.0, 1e-10);
    }
    {
      const auto sec = lmg_sector(2 * g.integer(1, 20));
      const std::vector<ControlField> c{g.field(T, 6, 2.0)};
      const auto r = propagate(sec, c, g.state(sec.dimension()), T, PropagationConfig{steps, std::nullopt});
      EXPECT_NEAR(r.final_state.norm(), 1.0, 1e-10);
    }
    {
      const int n = g.integer(2, 20);
      const std::vector<ControlField> c{g.field(T), g.field(T)};
      const auto r = propagate(SpinChainTransfer{n, 1.0, {}}, c, g.state(n), T, PropagationConfig{steps, 7});
      EXPECT_NEAR(r.final_state.norm(), 1.0, 1e-10);
      for (const auto& cp : r.trajectory) EXPECT_NEAR(cp.state.norm(), 1.0, 1e-10);
    }
    {
      const auto m = random_complex_model(g, 6);
      const std::vector<ControlField> c{g.field(T)};
      const auto r = propagate(m, c, g.state(6), T, PropagationConfig{steps, std::nullopt});
      EXPECT_NEAR(r.final_state.norm(), 1.0, 1e-10);
    }
  }
}

TEST(Propagate, CheckpointStride) {
  const std::vector<ControlField> c{ControlField::uncorrected(BaseGuess::constant(0.5), 2.0)};
  const auto r = propagate(TwoQubitJosephson{}, c, QuantumState::basis(4, 0), 2.0, PropagationConfig{10, 3});
  std::vector<std::size_t> steps;
  for (const auto& cp : r.trajectory) steps.push_back(cp.step);
  EXPECT_EQ(steps, (std::vector<std::size_t>{0, 3, 6, 9, 10}));
  EXPECT_DOUBLE_EQ(r.trajectory.back().t, 2.0);
  EXPECT_EQ(r.trajectory.back().state.amplitudes(), r.final_state.amplitudes());
  EXPECT_TRUE(propagate(TwoQubitJosephson{}, c, QuantumState::basis(4, 0), 2.0, PropagationConfig{10, std::nullopt})
                  .trajectory.empty());
}

TEST(Propagate, RejectsMismatches) {
  const std::vector<ControlField> one{ControlField::uncorrected(BaseGuess::constant(0.5), 1.0)};
  EXPECT_THROW(propagate(TwoQubitJosephson{}, one, QuantumState::basis(3, 0), 1.0, {}), std::invalid_argument);
  const std::vector<ControlField> two{one[0], one[0]};
  EXPECT_THROW(propagate(TwoQubitJosephson{}, two, QuantumState::basis(4, 0), 1.0, {}), std::invalid_argument);
  EXPECT_THROW(propagate(TwoQubitJosephson{}, one, QuantumState::basis(4, 0), 2.0, {}), std::invalid_argument);
  EXPECT_THROW(propagate(TwoQubitJosephson{}, one, QuantumState::basis(4, 0), 1.0, PropagationConfig{0, std::nullopt}),
               std::invalid_argument);
  EXPECT_THROW(propagate(TwoQubitJosephson{}, one, QuantumState::basis(4, 0), 1.0, PropagationConfig{5, 0}),
               std::invalid_argument);
}

TEST(Propagate, NonHermitianModelIsAConsistencyFailure) {
  const std::vector<ControlField> c{ControlField::uncorrected(BaseGuess::constant(1.0), 1.0)};
  EXPECT_THROW(propagate(NonHermitian{}, c, QuantumState::basis(2, 0), 1.0, {}), consistency_error);
  EXPECT_THROW(checked_hamiltonian(NonHermitian{}, std::vector<double>{1.0}), consistency_error);
  EXPECT_NO_THROW(checked_hamiltonian(NonHermitian{}, std::vector<double>{0.0}));
  EXPECT_THROW(checked_hamiltonian(TwoQubitJosephson{}, std::vector<double>{1.0, 2.0}), std::invalid_argument);
}

TEST(Propagate, CompositionOfWindows) {
  oracle::Gen g(23);
  for (int trial = 0; trial < 20; ++trial) {
    const double T = g.real(1, 10);
    const auto half = static_cast<std::size_t>(g.integer(1, 300));
    const auto sec = lmg_sector(2 * g.integer(2, 12));
    const std::vector<ControlField> c{g.field(T, 5, 1.0)};
    const auto psi0 = g.state(sec.dimension());
    const auto full = propagate(sec, c, psi0, T, PropagationConfig{2 * half, std::nullopt}).final_state;
    const auto mid = propagate_window(sec, c, psi0, 0.0, T / 2, PropagationConfig{half, std::nullopt}).final_state;
    const auto end = propagate_window(sec, c, mid, T / 2, T, PropagationConfig{half, std::nullopt}).final_state;
    EXPECT_GT(fidelity(full, end), 1 - 1e-12);
  }
}

TEST(Propagate, EnergyConservedForConstantHamiltonian) {
  oracle::Gen g(24);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = g.integer(3, 12);
    const SpinChainTransfer chain{n, 1.0, {}};
    const double d = g.real(0, n), c = g.real(0, 3), T = g.real(1, 30);
    const auto h = chain.build(d, c).cast<cplx>().eval();
    const auto psi0 = g.state(n);
    const std::vector<ControlField> ctl{ControlField::uncorrected(BaseGuess::constant(d), T),
                                        ControlField::uncorrected(BaseGuess::constant(c), T)};
    const auto r = propagate(chain, ctl, psi0, T, PropagationConfig{100, 10});
    const double e0 = final_energy(psi0, h);
    for (const auto& cp : r.trajectory) EXPECT_NEAR(final_energy(cp.state, h), e0, 1e-10 * std::max(1.0, std::abs(e0)));
  }
}

TEST(Propagate, ConstantPropagatorMatchesTimeStepping) {
  const auto model = two_level(0.3, 0.8);
  const auto a = propagate_constant(model, std::span<const double>{}, QuantumState::basis(2, 0), 3.0, 1);
  const auto b = propagate(model, std::span<const ControlField>{}, QuantumState::basis(2, 0), 3.0, PropagationConfig{7, {}});
  EXPECT_GT(fidelity(a, b.final_state), 1 - 1e-13);
}

// step-halving on the three study models at their study sizes
TEST(Propagate, StepHalvingConvergence) {
  oracle::Gen g(25);
  auto check = [](const auto& model, const std::vector<ControlField>& c, const QuantumState& psi0, double T) {
    const auto a = propagate(model, c, psi0, T, PropagationConfig{2000, std::nullopt}).final_state;
    const auto b = propagate(model, c, psi0, T, PropagationConfig{4000, std::nullopt}).final_state;
    EXPECT_GT(fidelity(a, b), 1 - 1e-8) << model.dimension() << " T=" << T << " 1-F=" << 1 - fidelity(a, b);
  };
  for (int trial = 0; trial < 2; ++trial) {
    check(TwoQubitJosephson{}, {ControlField(BaseGuess::constant(1.0), g.params(6, pi), BoundaryRegularizer(RegularizerKind::PolynomialBump, pi))},
          QuantumState::basis(4, 0), pi);
    for (int n : {10, 16, 32, 50, 64}) {
      const auto sec = lmg_sector(n);
      const double T = lmg_timing(sec).total_time;
      check(sec, {ControlField(BaseGuess::linear(10.0, 0.0), g.params(8, T, 0.5), BoundaryRegularizer(RegularizerKind::PolynomialBump, T))},
            ground_state(sec, {10.0}), T);
    }
    // study chain: x_n in [0, 1], d swept 0 -> 1 at C = 5, T = 2 T_QSL
    for (auto [n, t_qsl] : {std::pair{8, 4.197166769943393}, std::pair{12, 6.454346336957955}, std::pair{16, 8.71675034514689}}) {
      const double T = 2 * t_qsl;
      SpinChainTransfer chain{n, 1.0, {}};
      for (int k = 0; k < n; ++k) chain.positions.push_back(k / (n - 1.0));
      check(chain,
            {ControlField(BaseGuess::linear(0.0, 1.0), g.params(n, T, 0.3), BoundaryRegularizer(RegularizerKind::PolynomialBump, T)),
             ControlField(BaseGuess::constant(5.0), g.params(n, T, 0.3), BoundaryRegularizer(RegularizerKind::PolynomialBump, T))},
            QuantumState::basis(n, 0), T);
    }
  }
}

TEST(Propagate, LmgLinearRampMatchesFrozenReference) {
  // independent expm-per-step reference built from explicit spin matrices
  const auto sec = lmg_sector(10);
  const auto timing = lmg_timing(sec);
  const std::vector<ControlField> c{ControlField::uncorrected(BaseGuess::linear(10.0, 0.0), timing.total_time)};
  const auto psi0 = ground_state(sec, {10.0}), target = ground_state(sec, {0.0});
  EXPECT_NEAR(infidelity(propagate(sec, c, psi0, timing.total_time, {200, {}}).final_state, target), 0.9653518334768015, 1e-12);
  EXPECT_NEAR(infidelity(propagate(sec, c, psi0, timing.total_time, {400, {}}).final_state, target), 0.9653750297213779, 1e-12);
}

TEST(DefaultStepCount, FloorAndSpectralRange) {
  const std::vector<ControlField> c{ControlField::uncorrected(BaseGuess::constant(0.0), 1.0)};
  EXPECT_EQ(default_step_count(TwoQubitJosephson{}, c, 1.0), 2000u);
  // spectral range at Gamma = 0 is 4 sqrt(2); 40 * 100 * 4 sqrt(2) = 22627.4...
  const std::vector<ControlField> c100{ControlField::uncorrected(BaseGuess::constant(0.0), 100.0)};
  EXPECT_EQ(default_step_count(TwoQubitJosephson{}, c100, 100.0), 22628u);
}

TEST(InstantaneousSpectrum, DiagonalMatrix) {
  const AffineModel<double> m(RVector::LinSpaced(3, 0, 2).asDiagonal().toDenseMatrix(), {});
  const auto s = instantaneous_spectrum(m, std::span<const double>{}, 2);
  ASSERT_EQ(s.energies.size(), 2);
  EXPECT_DOUBLE_EQ(s.energies(0), 0.0);
  EXPECT_DOUBLE_EQ(s.energies(1), 1.0);
  EXPECT_EQ(s.vectors.col(0), RVector::Unit(3, 0));
  EXPECT_EQ(s.vectors.col(1), RVector::Unit(3, 1));
  EXPECT_THROW(instantaneous_spectrum(m, std::span<const double>{}, 4), std::invalid_argument);
  EXPECT_THROW(instantaneous_spectrum(m, std::span<const double>{}, 0), std::invalid_argument);
}

TEST(InstantaneousSpectrum, LmgTwoSpinsFromFullSpace) {
  const LmgDicke m{2, 0.0, 1.0};
  const auto s = instantaneous_spectrum(m, std::vector<double>{0.0}, 3);
  // oracle: full 4x4 Hamiltonian restricted to the triplet
  const CMatrix d = oracle::dicke_columns(2);
  const CMatrix h = d.adjoint() * oracle::lmg_full(2, 0.0, 1.0, 0.0) * d;
  Eigen::SelfAdjointEigenSolver<CMatrix> es(h);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(s.energies(i), es.eigenvalues()(i), 1e-12);
  EXPECT_NEAR(s.energies(0), -0.5, 1e-12);
  EXPECT_NEAR(s.energies(1), -0.5, 1e-12);
  EXPECT_NEAR(s.energies(2), 0.0, 1e-12);
}

TEST(InstantaneousSpectrum, OrthonormalAndPhaseFixed) {
  oracle::Gen g(26);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = g.integer(2, 40);
    const LmgDicke lmg{n, g.real(-1, 1), 1.0};
    const auto s = instantaneous_spectrum(lmg, std::vector<double>{g.real(-5, 5)}, n + 1);
    EXPECT_LT((s.vectors.transpose() * s.vectors - RMatrix::Identity(n + 1, n + 1)).cwiseAbs().maxCoeff(), 1e-10);
    for (Index i = 0; i < s.vectors.cols(); ++i) {
      Index arg;
      s.vectors.col(i).cwiseAbs().maxCoeff(&arg);
      EXPECT_GT(s.vectors(arg, i), 0.0);
    }
    for (Index i = 1; i < s.energies.size(); ++i) EXPECT_LE(s.energies(i - 1), s.energies(i));

    const auto cm = random_complex_model(g, 5);
    const auto sc = instantaneous_spectrum(cm, std::vector<double>{g.real(-2, 2)}, 5);
    EXPECT_LT((sc.vectors.adjoint() * sc.vectors - CMatrix::Identity(5, 5)).cwiseAbs().maxCoeff(), 1e-10);
    for (Index i = 0; i < 5; ++i) {
      Index arg;
      sc.vectors.col(i).cwiseAbs().maxCoeff(&arg);
      EXPECT_EQ(sc.vectors(arg, i).imag(), 0.0);
      EXPECT_GT(sc.vectors(arg, i).real(), 0.0);
    }
  }
}

TEST(ExcitationProbabilities, EigenstatesOfTheInstantaneousHamiltonian) {
  const auto sec = lmg_sector(20);
  const std::vector<double> u{0.7};
  const auto s = instantaneous_spectrum(sec, u, sec.dimension());
  const auto p0 = excitation_probabilities(QuantumState::normalized(s.vectors.col(0).cast<cplx>()), sec, u, 4);
  EXPECT_NEAR(p0.total_excitation, 0.0, 1e-10);
  const auto p1 = excitation_probabilities(QuantumState::normalized(s.vectors.col(1).cast<cplx>()), sec, u, 4);
  EXPECT_NEAR(p1.probabilities[1], 1.0, 1e-10);
  EXPECT_NEAR(p1.total_excitation, 1.0, 1e-10);
  EXPECT_EQ(p1.energies.size(), 4u);
  EXPECT_DOUBLE_EQ(p1.energies[1], s.energies(1));
}

TEST(ExcitationProbabilities, SumToOneAndBounded) {
  oracle::Gen g(27);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = g.integer(2, 30);
    const SpinChainTransfer chain{n, 1.0, {}};
    const std::vector<double> u{g.real(0, n + 1), g.real(0, 4)};
    const auto p = excitation_probabilities(g.state(n), chain, u, n);
    double sum = 0.0;
    for (double x : p.probabilities) {
      EXPECT_GE(x, 0.0);
      EXPECT_LE(x, 1.0);
      sum += x;
    }
    EXPECT_NEAR(sum, 1.0, 1e-8);
    EXPECT_NEAR(p.total_excitation, sum - p.probabilities[0], 1e-8);
  }
}

TEST(ExcitationProbabilities, DegenerateClusterIsSummed) {
  // LMG N=2 at Gamma=0: the two lowest levels coincide at -1/2
  const LmgDicke m{2, 0.0, 1.0};
  const std::vector<double> u{0.0};
  const auto s = instantaneous_spectrum(m, u, 3);
  const CVector mix = (s.vectors.col(0) + s.vectors.col(1)).cast<cplx>();
  const auto p = excitation_probabilities(QuantumState::normalized(mix), m, u, 3);
  EXPECT_NEAR(p.probabilities[0], 1.0, 1e-12);
  EXPECT_EQ(p.probabilities[1], 0.0);
  EXPECT_NEAR(p.total_excitation, 0.0, 1e-12);
}

TEST(MinimumGapScan, AvoidedCrossing) {
  const auto grid = linear_grid(-2.0, 2.0, 401);
  const auto r = minimum_gap_scan(avoided_crossing(), std::span<const std::vector<double>>(grid));
  EXPECT_NEAR(r.gap_min, 2.0, 1e-12);
  ASSERT_EQ(r.argmin.size(), 1u);
  EXPECT_NEAR(r.argmin[0], 0.0, 1e-12);
}

TEST(MinimumGapScan, SinglePointAndEmptyGrid) {
  const std::vector<std::vector<double>> one{{1.5}};
  EXPECT_NEAR(minimum_gap_scan(avoided_crossing(), std::span<const std::vector<double>>(one)).gap_min,
              2 * std::hypot(1.5, 1.0), 1e-12);
  const std::vector<std::vector<double>> none;
  EXPECT_THROW(minimum_gap_scan(avoided_crossing(), std::span<const std::vector<double>>(none)), std::invalid_argument);
}

TEST(MinimumGapScan, TiesGoToTheFirstPoint) {
  const std::vector<std::vector<double>> grid{{-1.0}, {1.0}, {-1.0}};
  EXPECT_EQ(minimum_gap_scan(avoided_crossing(), std::span<const std::vector<double>>(grid)).argmin[0], -1.0);
}

TEST(MinimumGapScan, RefinementNeverWorsensTheGrid) {
  oracle::Gen g(28);
  for (int trial = 0; trial < 20; ++trial) {
    const auto sec = lmg_sector(2 * g.integer(3, 30));
    const auto points = static_cast<std::size_t>(g.integer(3, 300));
    const auto grid = linear_grid(0.0, 10.0, points);
    const double coarse = minimum_gap_scan(sec, std::span<const std::vector<double>>(grid)).gap_min;
    EXPECT_LE(refined_gap_scan(sec, 0.0, 10.0, points).gap_min, coarse);
  }
}

TEST(DiagnosePopulations, FrozenHamiltonianKeepsTheEigenstate) {
  const auto sec = lmg_sector(16);
  const double T = 5.0;
  const std::vector<ControlField> c{ControlField::uncorrected(BaseGuess::constant(2.0), T)};
  const auto rows = diagnose_populations(sec, c, ground_state(sec, {2.0}), T, 100, 10, 4);
  ASSERT_EQ(rows.size(), 11u);
  for (const auto& r : rows) EXPECT_NEAR(r.levels.total_excitation, 0.0, 1e-10);
}

TEST(DiagnosePopulations, LinearRampLmg50) {
  // linear ramp from the paramagnet through the critical point at T = 2 T_QSL
  const auto sec = lmg_sector(50);
  const auto timing = lmg_timing(sec);
  const double T = timing.total_time;
  const std::vector<ControlField> c{ControlField::uncorrected(BaseGuess::linear(10.0, 0.0), T)};
  const auto psi0 = ground_state(sec, {10.0});
  const auto rows = diagnose_populations(sec, c, psi0, T, 400, 2, 26);
  for (const auto& r : rows) {
    const double field = c[0](std::min(r.t, T));
    if (field >= 2.0) EXPECT_LT(r.levels.total_excitation, 0.1) << "t=" << r.t;
    if (field <= 0.5) EXPECT_GT(r.levels.total_excitation, 0.5) << "t=" << r.t;
  }
  const auto fin = propagate(sec, c, psi0, T, PropagationConfig{400, std::nullopt}).final_state;
  EXPECT_NEAR(rows.back().levels.total_excitation, infidelity(fin, ground_state(sec, {0.0})), 1e-8);
}
