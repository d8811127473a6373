#include <cmath>
#include <numbers>
#include <sstream>

#include <gtest/gtest.h>

#include "qpdn/errors.hpp"
#include "qpdn/random.hpp"
#include "qpdn/tomography.hpp"
#include "test_util.hpp"

using namespace qpdn;

namespace {

constexpr double pi = std::numbers::pi;

CountTable noisy_table(double phi, double r, std::uint64_t seed) {
  return sample_counts(expected_counts(ideal_chi(phi), r), seed);
}

}  // namespace

TEST(Poisson, GoodnessOfFitAcrossRegimes) {
  for (double mean : {0.4, 3.7, 9.9, 10.5, 42.0, 400.0, 2000.0}) {
    const auto [stat, dof] = test::poisson_chi_square(mean, 40000, 17 + static_cast<std::uint64_t>(mean * 10));
    // Mean dof, sd sqrt(2 dof); 5 sd is far beyond any plausible fluctuation.
    EXPECT_LT(stat, dof + 5.0 * std::sqrt(2.0 * dof)) << "mean " << mean;
  }
}

TEST(Poisson, SampleMomentsMatch) {
  for (double mean : {2.5, 250.0}) {
    Rng rng(99);
    PoissonSampler s(mean);
    const int n = 100000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
      const double k = static_cast<double>(s(rng));
      sum += k;
      sq += k * k;
    }
    const double m = sum / n;
    const double var = sq / n - m * m;
    EXPECT_NEAR(m, mean, 5 * std::sqrt(mean / n));
    EXPECT_NEAR(var / mean, 1.0, 0.03);
  }
}

TEST(Poisson, ZeroMeanGivesZero) {
  Rng rng(1);
  PoissonSampler s(0.0);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(s(rng), 0);
}

TEST(Seeds, DeriveSeedSeparatesStreams) {
  EXPECT_NE(derive_seed(1, {0, 0, 0}), derive_seed(1, {0, 0, 1}));
  EXPECT_NE(derive_seed(1, {0, 1}), derive_seed(1, {1, 0}));
  EXPECT_EQ(derive_seed(42, {3, 2, 1}), derive_seed(42, {3, 2, 1}));
}

TEST(Seeds, SplitMixReferenceValue) {
  // First output of the reference SplitMix64 generator seeded with 0.
  EXPECT_EQ(splitmix64(0), 0xE220A8397B1DCDAFull);
}

TEST(Counts, ExpectedTotalsPerBasis) {
  for (double r : {1.0, 0.5, 0.1}) {
    const CountTable t = expected_counts(ideal_chi(pi / 4), r);
    for (int j = 0; j < kInputStates; ++j)
      for (int g = 0; g < kMeasurementBases; ++g)
        EXPECT_NEAR(t.expected.row(j).segment(4 * g, 4).sum(), 2000.0 * r, 1e-9);
  }
}

TEST(Counts, SampledCountsAreIntegralAndSeeded) {
  const CountTable a = noisy_table(pi / 3, 0.5, 77);
  const CountTable b = noisy_table(pi / 3, 0.5, 77);
  const CountTable c = noisy_table(pi / 3, 0.5, 78);
  EXPECT_TRUE(a.has_counts);
  EXPECT_EQ(a.counts, b.counts);
  EXPECT_NE(a.counts, c.counts);
  EXPECT_EQ(a.counts, a.counts.array().round().matrix());
}

TEST(Counts, RejectsNonPositiveRatio) {
  EXPECT_THROW(expected_counts(ideal_chi(1.0), 0.0), std::invalid_argument);
}

TEST(Counts, CsvRoundTrip) {
  CountTable t = noisy_table(pi / 6, 0.1, 5);
  t.phi = pi / 6;
  std::stringstream ss;
  write_counts_csv(ss, t);
  const CountTable back = read_counts_csv(ss);
  EXPECT_EQ(back.counts, t.counts);
  EXPECT_EQ(back.expected, t.expected);
  EXPECT_DOUBLE_EQ(back.total_per_basis, t.total_per_basis);
  ASSERT_TRUE(back.phi.has_value());
  EXPECT_DOUBLE_EQ(*back.phi, pi / 6);
}

TEST(Counts, CsvRejectsGarbage) {
  std::stringstream ss("input_index,projector_index,expected,count,N,seed\n0,0,abc,1,2000,0\n");
  EXPECT_THROW(read_counts_csv(ss), ParseError);
}

TEST(Design, ReproducesBornProbabilities) {
  Rng rng(8);
  ChiMatrix g;
  for (int i = 0; i < 16; ++i)
    for (int j = 0; j < 16; ++j) g(i, j) = {uniform(rng, -1, 1), uniform(rng, -1, 1)};
  ChiMatrix chi = g * g.adjoint();
  chi /= chi.trace().real() * 4.0;  // a trace-decreasing map keeps probabilities below 1
  const auto& basis = standard_state_basis();
  const auto p = process_probabilities(chi);
  for (int j = 0; j < kInputStates; j += 5) {
    for (int l = 0; l < kProjectors; l += 7) {
      const Complex direct = (basis.projectors[l] * apply_channel(chi, basis.inputs[j])).trace();
      EXPECT_NEAR(p(36 * j + l), direct.real(), 1e-13);
    }
  }
}

TEST(Design, HermitianCoordinatesRoundTrip) {
  const ChiMatrix chi = ideal_chi(2.0).chi;
  EXPECT_LT((chi_from_hermitian_coordinates(hermitian_coordinates(chi)) - chi).norm(), 1e-15);
}

TEST(Inversion, NoiselessRoundTripAllGridPhases) {
  for (int i = 1; i <= 12; ++i) {
    const double phi = i * pi / 6;
    const ProcessMatrix ideal = ideal_chi(phi);
    const CountTable t = expected_counts(ideal, 1.0);
    EXPECT_GE(process_fidelity(chi_least_squares(t).process, ideal), 1 - 1e-9) << phi;
    EXPECT_GE(process_fidelity(chi_from_lambda(lambda_from_counts(t)), ideal), 1 - 1e-9) << phi;
  }
}

TEST(Inversion, RoutesAgreeOnNoisyTables) {
  Rng rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    const double phi = uniform(rng, 0, 2 * pi);
    const double r = std::vector<double>{1.0, 0.5, 0.1}[trial % 3];
    const CountTable t = noisy_table(phi, r, 1000 + trial);
    const ChiMatrix direct = chi_least_squares(t).process.chi;
    const ChiMatrix via_lambda = chi_from_lambda(lambda_from_counts(t)).chi;
    EXPECT_LT((direct - via_lambda).norm(), 1e-8) << trial;
  }
}

TEST(Inversion, NoisyReconstructionIsHermitianTraceOne) {
  const CountTable t = noisy_table(pi / 2, 0.1, 3);
  const ChiMatrix chi = chi_least_squares(t).process.chi;
  EXPECT_LT(hermiticity_defect(chi), 1e-12);
  EXPECT_NEAR(chi.trace().real(), 1.0, 0.05);
}

TEST(Inversion, AllZeroCountsAreDegenerate) {
  CountTable t = expected_counts(ideal_chi(1.0), 1.0);
  t.counts.setZero();
  t.has_counts = true;
  const auto inv = chi_least_squares(t);
  EXPECT_TRUE(inv.degenerate);
  EXPECT_LT(inv.process.chi.norm(), 1e-15);
}

TEST(Beta, ExpansionReconstructsOperator) {
  const auto& basis = standard_state_basis();
  const Operator x = pauli_basis()[7] * basis.inputs[5];
  const auto c = expand_in_inputs(x);
  Operator back = Operator::Zero();
  for (int k = 0; k < kInputStates; ++k) back += c(k) * basis.inputs[k];
  EXPECT_LT((back - x).norm(), 1e-12);
}
