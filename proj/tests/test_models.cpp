#include "support/oracles.hpp"

#include <gtest/gtest.h>

using namespace crab;

namespace {

double max_abs(const CMatrix& m) { return m.cwiseAbs().maxCoeff(); }

/// Dicke-basis spin matrices from ladder elements, squared by matrix product.
RMatrix lmg_from_ladders(int n, double gamma, double j, double field) {
  const double s = n / 2.0;
  RMatrix sp = RMatrix::Zero(n + 1, n + 1);
  for (int k = 0; k < n; ++k) {
    const double m = k - s;
    sp(k + 1, k) = std::sqrt(s * (s + 1) - m * (m + 1));
  }
  const RMatrix sx = 0.5 * (sp + sp.transpose());
  const CMatrix sy = cplx(0, -0.5) * (sp - sp.transpose()).cast<cplx>();
  RMatrix sz = RMatrix::Zero(n + 1, n + 1);
  for (int k = 0; k <= n; ++k) sz(k, k) = k - s;
  const RMatrix syy = (sy * sy).real();
  return -(j / n) * (sx * sx + gamma * syy) - field * sz;
}

std::vector<double> unit_positions(int n) {
  std::vector<double> x;
  for (int k = 0; k < n; ++k) x.push_back(k / (n - 1.0));
  return x;
}

}  // namespace

// ---------------------------------------------------------------------------
// two coupled charge qubits

TEST(TwoQubit, DecoupledSpectrumIsATensorSum) {
  const TwoQubitJosephson m{1.0, -1.0};
  Eigen::SelfAdjointEigenSolver<RMatrix> es(m.build(0.0));
  const double e = std::sqrt(2.0);  // single-qubit levels +-sqrt(E_C^2 + E_J^2)
  const std::vector<double> expect{-2 * e, 0.0, 0.0, 2 * e};
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(es.eigenvalues()(i), expect[i], 1e-12);
}

TEST(TwoQubit, MatchesKroneckerConstruction) {
  oracle::Gen g(31);
  for (int trial = 0; trial < 50; ++trial) {
    const TwoQubitJosephson m{g.real(-2, 2), g.real(-2, 2)};
    const double u = g.real(-5, 5);
    using namespace oracle;
    const CMatrix ref = m.e_c * (on_site(local_z(), 0, 2) + on_site(local_z(), 1, 2)) +
                        m.e_j * (on_site(local_x(), 0, 2) + on_site(local_x(), 1, 2)) +
                        u * m.e_c * on_site(local_z(), 0, 2) * on_site(local_z(), 1, 2);
    EXPECT_LT(max_abs(m.build(u).cast<cplx>() - ref), 1e-12);
  }
}

TEST(TwoQubit, CouplingTermIsAffine) {
  const TwoQubitJosephson m{1.3, -0.7};
  for (double u : {-2.0, 0.5, 3.0}) {
    const RMatrix diff = m.build(u) - m.build(0.0);
    const RVector diag = diff.diagonal();
    EXPECT_NEAR(diag(0), u * 1.3, 1e-14);
    EXPECT_NEAR(diag(1), -u * 1.3, 1e-14);
    EXPECT_NEAR(diag(2), -u * 1.3, 1e-14);
    EXPECT_NEAR(diag(3), u * 1.3, 1e-14);
    EXPECT_LT((diff - RMatrix(diag.asDiagonal())).cwiseAbs().maxCoeff(), 1e-14);
  }
  EXPECT_EQ(m.dimension(), 4);
  EXPECT_EQ(m.control_arity(), 1u);
  EXPECT_EQ(TwoQubitJosephson{}.e_j / TwoQubitJosephson{}.e_c, -1.0);
}

TEST(TwoQubit, DecoupledGroundStateIsAProduct) {
  const TwoQubitJosephson m{1.0, -1.0};
  const auto gs = ground_state(m, {0.0});
  Eigen::SelfAdjointEigenSolver<RMatrix> one(pauli::z() - pauli::x());
  const RVector q = one.eigenvectors().col(0);
  const CVector prod = pauli::kron(q, q).cast<cplx>();
  EXPECT_NEAR(std::abs(gs.amplitudes().dot(prod)), 1.0, 1e-12);
}

// ---------------------------------------------------------------------------
// LMG

TEST(Lmg, DickeMatrixEqualsProjectedFullHamiltonian) {
  oracle::Gen g(32);
  for (int n = 1; n <= 8; ++n) {
    const CMatrix d = oracle::dicke_columns(n);
    for (int trial = 0; trial < 5; ++trial) {
      const LmgDicke m{n, g.real(-1, 1), g.real(0.2, 2)};
      const double field = g.real(-5, 5);
      const CMatrix ref = d.adjoint() * oracle::lmg_full(n, m.gamma, m.j, field) * d;
      EXPECT_LT(max_abs(m.build(field).cast<cplx>() - ref), 1e-12) << "N=" << n;
    }
  }
}

TEST(Lmg, ClosedFormEqualsLadderProducts) {
  oracle::Gen g(33);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = g.integer(1, 120);
    const LmgDicke m{n, g.real(-1, 1), g.real(0.2, 2)};
    const double field = g.real(-10, 10);
    const RMatrix ref = lmg_from_ladders(n, m.gamma, m.j, field);
    EXPECT_LT((m.build(field) - ref).cwiseAbs().maxCoeff(), 1e-12 * std::max(1.0, ref.cwiseAbs().maxCoeff())) << n;
  }
}

TEST(Lmg, TwoSpinSpectrum) {
  Eigen::SelfAdjointEigenSolver<RMatrix> es(LmgDicke{2, 0.0, 1.0}.build(0.0));
  EXPECT_NEAR(es.eigenvalues()(0), -0.5, 1e-12);
  EXPECT_NEAR(es.eigenvalues()(1), -0.5, 1e-12);
  EXPECT_NEAR(es.eigenvalues()(2), 0.0, 1e-12);
}

TEST(Lmg, FieldEntersAsMinusGammaM) {
  for (int n : {1, 2, 7, 30}) {
    const LmgDicke m{n, 0.3, 1.0};
    const RMatrix diff = m.build(2.5) - m.build(0.0);
    for (int k = 0; k <= n; ++k) EXPECT_NEAR(diff(k, k), -2.5 * (k - n / 2.0), 1e-12);
    EXPECT_LT((diff - RMatrix(diff.diagonal().asDiagonal())).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(Lmg, IsotropicCaseConservesSz) {
  for (int n : {2, 5, 16, 64}) {
    const LmgDicke m{n, 1.0, 1.0};
    RMatrix sz = RMatrix::Zero(n + 1, n + 1);
    for (int k = 0; k <= n; ++k) sz(k, k) = m.m_of(k);
    const RMatrix h = m.build(0.8);
    EXPECT_LT((h * sz - sz * h).norm(), 1e-12);
  }
}

TEST(Lmg, BandStructureAndParity) {
  oracle::Gen g(34);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = g.integer(2, 60);
    const RMatrix h = LmgDicke{n, g.real(-1, 1), 1.0}.build(g.real(-5, 5));
    for (int r = 0; r <= n; ++r)
      for (int c = 0; c <= n; ++c)
        if (r != c && std::abs(r - c) != 2) EXPECT_EQ(h(r, c), 0.0);
    // the parity operator prod sigma_z is diagonal (+-1 by Sz parity) and commutes
    RMatrix parity = RMatrix::Zero(n + 1, n + 1);
    for (int k = 0; k <= n; ++k) parity(k, k) = (n - k) % 2 == 0 ? 1.0 : -1.0;
    EXPECT_LT((h * parity - parity * h).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Lmg, ParitySectorContainsThePolarizedState) {
  for (int n : {1, 2, 9, 32}) {
    const LmgDicke m{n, 0.0, 1.0};
    const auto idx = m.parity_sector();
    EXPECT_EQ(idx.back(), m.polarized_up_index());
    EXPECT_EQ(static_cast<int>(idx.size()), n / 2 + 1);
    for (std::size_t i = 1; i < idx.size(); ++i) EXPECT_EQ(idx[i] - idx[i - 1], 2);
  }
}

TEST(Lmg, LargeFieldGroundStateIsPolarized) {
  const LmgDicke m{32, 0.0, 1.0};
  const auto full = ground_state(m, {10.0});
  EXPECT_GT(std::norm(full.amplitudes()(m.polarized_up_index())), 0.999);
  const auto idx = m.parity_sector();
  const auto sec = ground_state(m, {10.0}, &idx);
  EXPECT_EQ(sec.dimension(), 33);
  EXPECT_GT(std::norm(sec.amplitudes()(m.polarized_up_index())), 0.999);
  EXPECT_NEAR(std::norm(full.overlap(sec)), 1.0, 1e-12);
}

TEST(Lmg, SectorGapMatchesFrozenReference) {
  // independent explicit-spin-matrix scan, bounded Brent refinement
  for (auto [n, gap] : {std::pair{10, 0.5382970890023699}, std::pair{32, 0.4119777789475165}}) {
    const auto sec = lmg_parity_sector(LmgDicke{n, 0.0, 1.0});
    const auto r = refined_gap_scan(sec, 0.0, 10.0, 2001);
    EXPECT_NEAR(r.gap_min, gap, 1e-10) << n;
    const auto t = quantum_speed_limit(sec, std::span<const std::vector<double>>(linear_grid(0.0, 10.0, 2001)));
    EXPECT_NEAR(t.gap_min, gap, 1e-5);
    EXPECT_GE(t.gap_min, r.gap_min);
  }
}

TEST(Lmg, HermitianForRandomControls) {
  oracle::Gen g(35);
  for (int trial = 0; trial < 100; ++trial) {
    const LmgDicke m{g.integer(1, 80), g.real(-2, 2), g.real(-2, 2)};
    EXPECT_LT(hermiticity_residual(m.build(g.real(-20, 20))), 1e-12);
  }
}

// ---------------------------------------------------------------------------
// spin chain

TEST(Chain, OneExcitationMatrixEqualsProjectedFullHamiltonian) {
  oracle::Gen g(36);
  for (int n = 2; n <= 8; ++n) {
    const CMatrix v = oracle::one_excitation_columns(n);
    for (int trial = 0; trial < 5; ++trial) {
      SpinChainTransfer m{n, g.real(0.2, 2), {}};
      if (trial % 2) m.positions = g.reals(n, -2, 2);
      const double d = g.real(-1, n + 1), c = g.real(-3, 3);
      std::vector<double> x;
      for (int k = 0; k < n; ++k) x.push_back(m.position(k));
      const CMatrix ref = v.adjoint() * oracle::chain_full(n, m.j, x, d, c) * v;
      const CMatrix mine = m.build(d, c).cast<cplx>() + m.sector_offset(d, c) * CMatrix::Identity(n, n);
      EXPECT_LT(max_abs(mine - ref), 1e-12) << "N=" << n;
    }
  }
}

TEST(Chain, SectorIsClosedUnderTheFullHamiltonian) {
  const int n = 6;
  const CMatrix v = oracle::one_excitation_columns(n);
  const CMatrix h = oracle::chain_full(n, 1.0, unit_positions(n), 0.4, 2.0);
  const CMatrix leak = h * v - v * (v.adjoint() * h * v);
  EXPECT_LT(max_abs(leak), 1e-12);
}

TEST(Chain, FreeChainHasTheCosineBand) {
  oracle::Gen g(37);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = g.integer(2, 60);
    const double j = g.real(0.1, 3);
    const RMatrix h = SpinChainTransfer{n, j, {}}.build(0.0, 0.0);
    Eigen::SelfAdjointEigenSolver<RMatrix> es(h);
    for (int k = 0; k < n; ++k) {
      EXPECT_NEAR(es.eigenvalues()(k), j * (2 - 2 * std::cos(k * pi / n)), 1e-12 * n);
      RVector mode(n);
      for (int s = 0; s < n; ++s) mode(s) = std::cos(k * pi * (s + 0.5) / n);
      EXPECT_LT((h * mode - j * (2 - 2 * std::cos(k * pi / n)) * mode).cwiseAbs().maxCoeff(), 1e-12 * n);
    }
  }
}

TEST(Chain, DeepWellLocalizesTheGroundState) {
  for (int n : {4, 8, 16}) {
    const SpinChainTransfer m{n, 1.0, unit_positions(n)};
    const auto first = ground_state(m, {m.position(0), 1e3 * (n - 1) * (n - 1)});
    EXPECT_GT(std::norm(first.amplitudes()(0)), 0.999);
    const auto last = ground_state(m, {m.position(n - 1), 1e3 * (n - 1) * (n - 1)});
    EXPECT_GT(std::norm(last.amplitudes()(n - 1)), 0.999);
    const SpinChainTransfer lattice{n, 1.0, {}};
    EXPECT_GT(std::norm(ground_state(lattice, {1.0, 1e3}).amplitudes()(0)), 0.999);
    EXPECT_GT(std::norm(ground_state(lattice, {double(n), 1e3}).amplitudes()(n - 1)), 0.999);
  }
}

TEST(Chain, RealSymmetricTridiagonalAndHermitian) {
  oracle::Gen g(38);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = g.integer(2, 40);
    const RMatrix h = SpinChainTransfer{n, g.real(-2, 2), {}}.build(g.real(-5, 50), g.real(-10, 10));
    EXPECT_LT(hermiticity_residual(h), 1e-12);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c)
        if (std::abs(r - c) > 1) EXPECT_EQ(h(r, c), 0.0);
  }
}

TEST(Chain, RejectsBadShapes) {
  EXPECT_THROW(SpinChainTransfer({1, 1.0, {}}).build(0, 0), std::invalid_argument);
  EXPECT_THROW(SpinChainTransfer({3, 1.0, {0.0, 1.0}}).build(0, 0), std::invalid_argument);
  EXPECT_EQ(SpinChainTransfer({5, 1.0, {}}).position(4), 5.0);
}

TEST(TwoQubitHermiticity, RandomControls) {
  oracle::Gen g(39);
  for (int trial = 0; trial < 100; ++trial)
    EXPECT_LT(hermiticity_residual(TwoQubitJosephson{g.real(-3, 3), g.real(-3, 3)}.build(g.real(-20, 20))), 1e-12);
}

// ---------------------------------------------------------------------------
// sectors and timing

TEST(SectorModel, EmbedRestrictRoundTrip) {
  const LmgDicke m{6, 0.0, 1.0};
  const auto sec = lmg_parity_sector(m);
  EXPECT_EQ(sec.dimension(), 4);
  oracle::Gen g(40);
  const auto s = g.state(4);
  const auto full = sec.embed(s);
  EXPECT_EQ(full.dimension(), 7);
  EXPECT_EQ(sec.restrict(full).amplitudes(), s.amplitudes());
  EXPECT_THROW(sec.restrict(QuantumState::basis(7, 1)), std::invalid_argument);
  const std::vector<double> u{1.7};
  EXPECT_EQ(sec.hamiltonian(u), m.build(1.7)(sec.indices(), sec.indices()));
}

TEST(SectorModel, RejectsBadIndexSets) {
  const LmgDicke m{4, 0.0, 1.0};
  EXPECT_THROW(SectorModel<LmgDicke>(m, {}), std::invalid_argument);
  EXPECT_THROW(SectorModel<LmgDicke>(m, {2, 0}), std::invalid_argument);
  EXPECT_THROW(SectorModel<LmgDicke>(m, {1, 1}), std::invalid_argument);
  EXPECT_THROW(SectorModel<LmgDicke>(m, {0, 5}), std::invalid_argument);
}

TEST(QuantumSpeedLimit, TwoLevelCrossing) {
  const AffineModel<double> model(pauli::x(), {pauli::z()});
  const auto grid = linear_grid(-2.0, 2.0, 401);
  const auto t = quantum_speed_limit(model, std::span<const std::vector<double>>(grid));
  EXPECT_NEAR(t.gap_min, 2.0, 1e-12);
  EXPECT_NEAR(t.t_qsl, pi / 2, 1e-12);
  EXPECT_NEAR(t.total_time, pi, 1e-12);
  EXPECT_EQ(t.t_qsl * t.gap_min, pi);
}

TEST(QuantumSpeedLimit, ProductIsPiBitExactly) {
  oracle::Gen g(41);
  for (int trial = 0; trial < 200000; ++trial) {
    const double gap = std::exp(g.real(-20, 20));
    const auto t = ProblemTiming::from_gap(gap, {}, g.real(1, 4));
    EXPECT_EQ(t.t_qsl * t.gap_min, pi) << std::hexfloat << gap;
    EXPECT_LT(std::abs(t.gap_min - gap), 1e-8 * gap);
  }
  // mantissas near sqrt(pi/2), where t and gap nearly coincide
  for (int trial = 0; trial < 20000; ++trial) {
    const double gap = std::ldexp(std::sqrt(pi / 2) * (1 + g.real(-1e-6, 1e-6)), g.integer(-10, 10));
    const auto t = ProblemTiming::from_gap(gap);
    EXPECT_EQ(t.t_qsl * t.gap_min, pi) << std::hexfloat << gap;
    EXPECT_LT(std::abs(t.gap_min - gap), 1e-8 * gap);
  }
  for (int e = -10; e <= 10; ++e) {
    const double gap = std::ldexp(std::sqrt(pi / 2), e);
    const auto t = ProblemTiming::from_gap(gap);
    EXPECT_EQ(t.t_qsl * t.gap_min, pi);
    EXPECT_LT(std::abs(t.gap_min - gap), 1e-8 * gap);
  }
}

TEST(QuantumSpeedLimit, RejectsNonPositiveGaps) {
  EXPECT_THROW(ProblemTiming::from_gap(0.0), std::invalid_argument);
  EXPECT_THROW(ProblemTiming::from_gap(-1.0), std::invalid_argument);
  EXPECT_THROW(ProblemTiming::from_gap(std::nan("")), std::invalid_argument);
}
