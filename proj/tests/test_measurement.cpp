#include <qent/measurement.hpp>

#include <gtest/gtest.h>

#include "oracles/brute_cglmp.hpp"

#include <cmath>
#include <complex>
#include <numbers>

using namespace qent;

namespace {

ProbTable random_table(std::size_t d, Rng& rng) {
  ProbTable t({2, 2}, {d, d});
  for (std::size_t s = 0; s < 4; ++s) {
    double sum = 0.0;
    for (std::size_t o = 0; o < d * d; ++o) sum += (t.at(s, o) = rng.uniform());
    for (std::size_t o = 0; o < d * d; ++o) t.at(s, o) /= sum;
  }
  return t;
}

}  // namespace

TEST(CglmpBasis, KnownEntriesAndOrthonormality) {
  const auto a1 = cglmp_basis(3, Party::A, 1);
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(std::abs(a1.vectors[0](k) - 1.0 / std::sqrt(3.0)), 0.0, 1e-15);
  const auto b1 = cglmp_basis(3, Party::B, 1);
  const cplx expect = std::exp(cplx(0, 2 * std::numbers::pi * 0.25 / 3.0)) / std::sqrt(3.0);
  EXPECT_NEAR(std::abs(b1.vectors[0](1) - expect), 0.0, 1e-15);
  for (std::size_t d = 2; d <= 10; ++d)
    for (auto party : {Party::A, Party::B})
      for (int s : {1, 2}) EXPECT_LT(cglmp_basis(d, party, s).max_gram_deviation(), 1e-12);
  EXPECT_THROW(cglmp_basis(3, Party::A, 3), ConfigError);
  EXPECT_THROW(cglmp_basis(1, Party::A, 1), ConfigError);
}

TEST(PauliBasis, Vectors) {
  const auto x = pauli_basis(PauliAxis::X), y = pauli_basis(PauliAxis::Y);
  EXPECT_NEAR(std::abs(x.vectors[0](0) - 1 / std::sqrt(2.0)), 0, 1e-16);
  EXPECT_NEAR(std::abs(x.vectors[0](1) - 1 / std::sqrt(2.0)), 0, 1e-16);
  EXPECT_NEAR(std::abs(y.vectors[0](1) - cplx(0, 1 / std::sqrt(2.0))), 0, 1e-16);
  EXPECT_LT(x.max_gram_deviation(), 1e-15);
  EXPECT_LT(y.max_gram_deviation(), 1e-15);
}

TEST(OutcomeDistribution, SimpleStates) {
  const auto mixed = outcome_distribution(DensityMatrix::maximally_mixed({3, 3}), cglmp_bases(3));
  for (double v : mixed.data()) EXPECT_NEAR(v, 1.0 / 9.0, 1e-15);
  CVec e0 = CVec::Zero(4);
  e0(0) = 1;
  const PartyBases xx = {{pauli_basis(PauliAxis::X)}, {pauli_basis(PauliAxis::X)}};
  const auto t = outcome_distribution(PureState(e0, {2, 2}).projector(), xx);
  ASSERT_EQ(t.size(), 4u);
  for (double v : t.data()) EXPECT_NEAR(v, 0.25, 1e-15);
  EXPECT_THROW(outcome_distribution(DensityMatrix::maximally_mixed({3, 3}), cglmp_bases(2)), ConfigError);
}

TEST(OutcomeDistribution, PureAndDensityAgreeAndValidate) {
  Rng rng(10);
  for (int i = 0; i < 50; ++i) {
    const auto psi = haar_pure({3, 3}, rng);
    const auto t1 = outcome_distribution(psi, cglmp_bases(3));
    const auto t2 = outcome_distribution(psi.projector(), cglmp_bases(3));
    EXPECT_NO_THROW(t1.validate());
    EXPECT_NO_THROW(t2.validate());
    for (std::size_t k = 0; k < t1.size(); ++k) EXPECT_NEAR(t1[k], t2[k], 1e-13);
    const auto rho = hs_mixed({2, 2, 2}, 0, rng);
    EXPECT_NO_THROW(outcome_distribution(rho, pauli_xy_bases(3)).validate());
  }
}

TEST(Features, BipartiteLayouts) {
  const auto uniform = outcome_distribution(DensityMatrix::maximally_mixed({3, 3}), cglmp_bases(3));
  const auto flat = features_bipartite(uniform, Layout::Flat);
  ASSERT_EQ(flat.size(), 36u);
  for (double v : flat) EXPECT_NEAR(v, 1.0 / 9.0, 1e-15);

  Rng rng(11);
  const auto t5 = outcome_distribution(hs_mixed({5, 5}, 0, rng), cglmp_bases(5));
  const auto grid = features_bipartite(t5, Layout::Grid);
  ASSERT_EQ(grid.size(), 100u);
  for (std::size_t x = 0; x < 2; ++x)
    for (std::size_t y = 0; y < 2; ++y) {
      double s = 0;
      for (std::size_t a = 0; a < 5; ++a)
        for (std::size_t b = 0; b < 5; ++b) s += grid[(x * 5 + a) * 10 + y * 5 + b];
      EXPECT_NEAR(s, 1.0, 1e-10);
    }
  // row = x d + a, column = y d + b
  EXPECT_EQ(grid[(1 * 5 + 3) * 10 + (0 * 5 + 2)], t5.p(1, 0, 3, 2));
  EXPECT_EQ(flat[((1 * 2 + 0) * 9) + 2 * 3 + 1], uniform.p(1, 0, 2, 1));
}

TEST(Features, RoundTripIsExact) {
  Rng rng(12);
  for (std::size_t d : {2, 3, 5}) {
    const auto t = outcome_distribution(hs_mixed({d, d}, 0, rng), cglmp_bases(d));
    for (auto layout : {Layout::Flat, Layout::Grid}) {
      const auto f = features_bipartite(t, layout);
      EXPECT_EQ(table_from_bipartite_features(f, d, layout).data(), t.data());
    }
  }
  const auto t3 = outcome_distribution(haar_pure({2, 2, 2}, rng), pauli_xy_bases(3));
  EXPECT_EQ(table_from_threequbit_features(features_threequbit(t3)).data(), t3.data());
  EXPECT_THROW(table_from_bipartite_features(std::vector<double>(64), 3, Layout::Flat), DataError);
}

TEST(Features, ThreeQubit) {
  CVec e0 = CVec::Zero(8);
  e0(0) = 1;
  const auto f = features_threequbit(outcome_distribution(PureState(e0, {2, 2, 2}), pauli_xy_bases(3)));
  ASSERT_EQ(f.size(), 64u);
  EXPECT_NEAR(f[0], 1.0 / 8.0, 1e-15);
  for (std::size_t b = 0; b < 8; ++b) {
    double s = 0;
    for (std::size_t o = 0; o < 8; ++o) s += f[b * 8 + o];
    EXPECT_NEAR(s, 1.0, 1e-10);
  }
  const auto g = features_threequbit(outcome_distribution(ghz(), pauli_xy_bases(3)));
  const auto w = features_threequbit(outcome_distribution(w_state(), pauli_xy_bases(3)));
  double diff = 0;
  for (std::size_t i = 0; i < 64; ++i) diff = std::max(diff, std::abs(g[i] - w[i]));
  EXPECT_GT(diff, 0.01);
}

TEST(Cglmp, UniformTableIsZero) {
  const auto uniform = outcome_distribution(DensityMatrix::maximally_mixed({3, 3}), cglmp_bases(3));
  EXPECT_NEAR(cglmp_value(uniform, 3), 0.0, 1e-15);
  ProbTable exact({2, 2}, {3, 3});
  for (auto& v : exact.data()) v = 1.0 / 9.0;
  EXPECT_EQ(cglmp_value(exact, 3), 0.0);
}

TEST(Cglmp, MatchesBruteForceOracle) {
  for (std::size_t d : {2, 3, 4, 5}) {
    const oracle::BruteCglmp oracle{d};
    Rng rng(d);
    for (int i = 0; i < 5; ++i) {
      const auto psi = haar_pure({d, d}, rng);
      EXPECT_NEAR(cglmp_violation(psi), oracle.value(psi.amps()), 1e-9) << "d=" << d;
    }
  }
  const oracle::BruteCglmp o3{3};
  EXPECT_NEAR(cglmp_violation(psi3_mv()), o3.value(psi3_mv().amps()), 1e-9);
}

TEST(Cglmp, ReferenceValues) {
  // values frozen from an independent numpy evaluation (tests/oracles/cglmp_oracle.py)
  EXPECT_NEAR(cglmp_violation(psi3_mv()), 2.914853855242465, 1e-9);
  EXPECT_GT(cglmp_violation(psi3_mv()), 2.9);
  EXPECT_NEAR(cglmp_violation(maximally_entangled(3)), 2.872934051172338, 1e-9);
  EXPECT_LT(cglmp_violation(maximally_entangled(3)), cglmp_violation(psi3_mv()));
  EXPECT_NEAR(cglmp_violation(maximally_entangled(2)), 2.0 * std::sqrt(2.0), 1e-9);
  EXPECT_NEAR(cglmp_violation(maximally_entangled(4)), 2.896243218458708, 1e-9);
  EXPECT_NEAR(cglmp_violation(maximally_entangled(5)), 2.910544808072077, 1e-9);
}

TEST(Cglmp, OptimalGamma) {
  const double g = optimal_psi3_mv_gamma();
  EXPECT_NEAR(g, kPsi3MvGammaOptimal, 1e-7);
  EXPECT_NEAR(cglmp_violation(psi3_mv(g)), 2.914854215512678, 1e-10);
  EXPECT_GE(cglmp_violation(psi3_mv(g)), cglmp_violation(psi3_mv()));
}

TEST(Cglmp, LinearInTheTable) {
  Rng rng(13);
  for (int i = 0; i < 100; ++i) {
    const auto t1 = random_table(3, rng), t2 = random_table(3, rng);
    const double lam = rng.uniform();
    ProbTable mix = t1;
    for (std::size_t k = 0; k < mix.size(); ++k) mix[k] = lam * t1[k] + (1 - lam) * t2[k];
    EXPECT_NEAR(cglmp_value(mix, 3), lam * cglmp_value(t1, 3) + (1 - lam) * cglmp_value(t2, 3), 1e-10);
  }
}

TEST(Cglmp, LinearInNoiseMixing) {
  const auto proj = psi3_mv().projector();
  const double full = cglmp_violation(proj);
  for (int i = 0; i <= 10; ++i) {
    const double eps = i / 10.0;
    EXPECT_NEAR(cglmp_violation(nmr_mixture(eps, proj)), eps * full, 1e-10);
  }
}

TEST(Cglmp, LocalDeterministicStrategiesRespectClassicalBound) {
  // every deterministic local assignment gives I <= 2
  for (std::size_t d : {2, 3, 4}) {
    double best = -1e9;
    const std::size_t n = d * d * d * d;
    for (std::size_t code = 0; code < n; ++code) {
      const std::size_t a0 = code % d, a1 = code / d % d, b0 = code / d / d % d, b1 = code / d / d / d;
      ProbTable t({2, 2}, {d, d});
      const std::size_t as[2] = {a0, a1}, bs[2] = {b0, b1};
      for (std::size_t x = 0; x < 2; ++x)
        for (std::size_t y = 0; y < 2; ++y) t.at(x * 2 + y, as[x] * d + bs[y]) = 1.0;
      best = std::max(best, cglmp_value(t, d));
    }
    EXPECT_NEAR(best, 2.0, 1e-12) << "d=" << d;
  }
}

TEST(SampleShots, ConvergesAndStaysNormalized) {
  Rng rng(14);
  const auto exact = outcome_distribution(psi3_mv(), cglmp_bases(3));
  const auto est = sample_shots(exact, 200000, rng);
  EXPECT_NO_THROW(est.validate());
  for (std::size_t k = 0; k < exact.size(); ++k) EXPECT_NEAR(est[k], exact[k], 0.01);
  EXPECT_THROW(sample_shots(exact, 0, rng), ConfigError);
}
