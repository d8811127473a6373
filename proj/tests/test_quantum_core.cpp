#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "qpdn/quantum_core.hpp"
#include "qpdn/random.hpp"

using namespace qpdn;

namespace {

constexpr double pi = std::numbers::pi;

Eigen::Matrix<Complex, 16, 1> random_vector(Rng& rng) {
  Eigen::Matrix<Complex, 16, 1> v;
  for (auto& c : v) c = {uniform(rng, -1, 1), uniform(rng, -1, 1)};
  return v;
}

Operator random_density(Rng& rng) {
  Operator g;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) g(i, j) = {uniform(rng, -1, 1), uniform(rng, -1, 1)};
  Operator rho = g * g.adjoint();
  return rho / rho.trace().real();
}

// chi of the channel with Kraus operators E_i = sum_m e_im A_m.
ChiMatrix chi_from_kraus(const std::vector<Eigen::Matrix<Complex, 16, 1>>& coeffs) {
  ChiMatrix chi = ChiMatrix::Zero();
  for (const auto& e : coeffs) chi += e * e.adjoint();
  return chi;
}

Operator kraus_operator(const Eigen::Matrix<Complex, 16, 1>& e) {
  Operator op = Operator::Zero();
  for (int m = 0; m < 16; ++m) op += e(m) * pauli_basis()[m];
  return op;
}

}  // namespace

TEST(PauliBasis, Orthogonality) {
  const auto& basis = pauli_basis();
  for (int m = 0; m < 16; ++m) {
    for (int n = 0; n < 16; ++n) {
      const Complex ip = (basis[m].adjoint() * basis[n]).trace();
      EXPECT_NEAR(std::abs(ip - Complex(m == n ? 4.0 : 0.0)), 0.0, 1e-14) << m << "," << n;
    }
  }
}

TEST(PauliBasis, IndexIsControlMajor) {
  // A_{4a+b} = P_a (x) P_b; check A_1 = I (x) X against explicit entries.
  Operator ix = Operator::Zero();
  ix(0, 1) = ix(1, 0) = ix(2, 3) = ix(3, 2) = 1.0;
  EXPECT_LT((pauli_basis()[1] - ix).norm(), 1e-15);
  Operator zi = Operator::Zero();
  zi.diagonal() << 1.0, 1.0, -1.0, -1.0;
  EXPECT_LT((pauli_basis()[12] - zi).norm(), 1e-15);
}

TEST(IdealChi, ControlZDecomposition) {
  // CZ = (II + IZ + ZI - ZZ) / 2.
  const ChiMatrix chi = ideal_chi(pi).chi;
  Eigen::Matrix<Complex, 16, 1> a = Eigen::Matrix<Complex, 16, 1>::Zero();
  a(0) = 0.5;
  a(3) = 0.5;
  a(12) = 0.5;
  a(15) = -0.5;
  EXPECT_LT((chi - a * a.adjoint()).norm(), 1e-14);
}

TEST(IdealChi, TraceOneRankOneHermitian) {
  for (double phi : {0.3, pi / 2, 5 * pi / 3, 2 * pi}) {
    const ChiMatrix chi = ideal_chi(phi).chi;
    EXPECT_NEAR(chi.trace().real(), 1.0, 1e-14);
    EXPECT_LT(hermiticity_defect(chi), 1e-15);
    Eigen::SelfAdjointEigenSolver<ChiMatrix> es(chi);
    EXPECT_NEAR(es.eigenvalues()(15), 1.0, 1e-12);
    EXPECT_NEAR(es.eigenvalues()(14), 0.0, 1e-12);
  }
}

TEST(Channel, IdealChiMatchesStateVectorEvolution) {
  Rng rng(1);
  for (double phi : {pi / 6, pi / 2, 4 * pi / 3}) {
    const Operator u = cp_unitary(phi);
    const ChiMatrix chi = ideal_chi(phi).chi;
    for (int trial = 0; trial < 5; ++trial) {
      Eigen::Vector4cd psi;
      for (auto& c : psi) c = {uniform(rng, -1, 1), uniform(rng, -1, 1)};
      psi.normalize();
      const Eigen::Vector4cd out = u * psi;
      EXPECT_LT((apply_channel(chi, pure_density(psi)) - out * out.adjoint()).norm(), 1e-13);
    }
  }
}

TEST(Channel, MatchesKrausSum) {
  Rng rng(2);
  std::vector<Eigen::Matrix<Complex, 16, 1>> coeffs{random_vector(rng), random_vector(rng), random_vector(rng)};
  const ChiMatrix chi = chi_from_kraus(coeffs);
  const Operator rho = random_density(rng);
  Operator expected = Operator::Zero();
  for (const auto& e : coeffs) {
    const Operator k = kraus_operator(e);
    expected += k * rho * k.adjoint();
  }
  EXPECT_LT((apply_channel(chi, rho) - expected).norm(), 1e-12 * expected.norm());
}

TEST(Channel, RejectsWrongDimension) {
  EXPECT_THROW(apply_channel(ChiMatrix(ChiMatrix::Identity()), Eigen::MatrixXcd(Eigen::MatrixXcd::Identity(3, 3))),
               std::invalid_argument);
}

TEST(Born, ProbabilitiesOfProjectorsSumToOne) {
  const ChiMatrix chi = ideal_chi(pi / 3).chi;
  const Operator rho = pure_density(Eigen::Vector4cd(0.5, 0.5, 0.5, 0.5));
  double total = 0.0;
  for (int k = 0; k < 4; ++k) {
    Eigen::Vector4cd e = Eigen::Vector4cd::Zero();
    e(k) = 1.0;
    const auto r = born_probability(chi, rho, pure_density(e));
    EXPECT_FALSE(r.non_physical);
    total += r.probability;
  }
  EXPECT_NEAR(total, 1.0, 1e-14);
}

TEST(Fidelity, IdentitySymmetryBounds) {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const ChiMatrix a = chi_from_kraus({random_vector(rng), random_vector(rng)});
    const ChiMatrix b = chi_from_kraus({random_vector(rng), random_vector(rng), random_vector(rng)});
    EXPECT_NEAR(process_fidelity(a, a), 1.0, 1e-10);
    const double fab = process_fidelity(a, b);
    EXPECT_NEAR(fab, process_fidelity(b, a), 1e-10);
    EXPECT_GE(fab, 0.0);
    EXPECT_LE(fab, 1.0 + 1e-12);
  }
}

TEST(Fidelity, PureStatesReduceToOverlap) {
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const auto a = random_vector(rng);
    const auto b = random_vector(rng);
    const double overlap = std::norm(a.dot(b)) / (a.squaredNorm() * b.squaredNorm());
    EXPECT_NEAR(process_fidelity(ChiMatrix(a * a.adjoint()), ChiMatrix(b * b.adjoint())), overlap, 1e-9);
  }
}

TEST(Fidelity, ScaleInvariantAndRejectsZeroTrace) {
  const ChiMatrix a = ideal_chi(pi / 4).chi;
  const ChiMatrix b = ideal_chi(pi / 3).chi;
  EXPECT_NEAR(process_fidelity(a, b), process_fidelity(3.0 * a, b), 1e-12);
  EXPECT_THROW(process_fidelity(ChiMatrix::Zero(), b), std::invalid_argument);
}

TEST(Fidelity, DistinctPhasesOverlap) {
  // |Tr[U1^dag U2] / 4|^2 for diagonal unitaries.
  const double d = pi / 2;
  const double expected = std::norm((3.0 + std::polar(1.0, -d)) / 4.0);
  EXPECT_NEAR(process_fidelity(ideal_chi(0.0), ideal_chi(d)), expected, 1e-12);
}

TEST(PsdProject, IdempotentTracePreservingPsd) {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    ChiMatrix h;
    for (int i = 0; i < 16; ++i)
      for (int j = 0; j < 16; ++j) h(i, j) = {uniform(rng, -1, 1), uniform(rng, -1, 1)};
    h = hermitian_part(h);
    h += (16.0 - h.trace().real()) / 16.0 * ChiMatrix::Identity();  // trace 16 > 0
    const auto once = psd_project(h);
    ASSERT_FALSE(once.degenerate);
    EXPECT_NEAR(once.chi.trace().real(), h.trace().real(), 1e-10);
    Eigen::SelfAdjointEigenSolver<ChiMatrix> es(once.chi);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-12);
    const auto twice = psd_project(once.chi);
    EXPECT_LT((twice.chi - once.chi).norm(), 1e-12);
  }
}

TEST(PsdProject, NegativeDefiniteIsDegenerate) {
  EXPECT_TRUE(psd_project(ChiMatrix(-ChiMatrix::Identity())).degenerate);
}

TEST(Labels, RoundTrip) {
  for (auto l : {ChiLabel::theoretical, ChiLabel::noisy, ChiLabel::mle, ChiLabel::denoised})
    EXPECT_EQ(chi_label_from_string(to_string(l)), l);
}
