#include "qpdn/quantum_core.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace qpdn {

namespace {

constexpr double kBornSlack = 1e-10;

// Eigenvalues of the square-root argument below this fraction of the largest
// one are rounding noise of a rank-deficient matrix.
constexpr double kSqrtRelativeFloor = 1e-14;

Eigen::Matrix<Complex, 16, 16> psd_sqrt(const ChiMatrix& m) {
  Eigen::SelfAdjointEigenSolver<ChiMatrix> eig(hermitian_part(m));
  Eigen::Matrix<double, 16, 1> lambda = eig.eigenvalues();
  const double top = std::max(lambda.maxCoeff(), 0.0);
  for (int i = 0; i < kChiDim; ++i) {
    lambda(i) = lambda(i) > kSqrtRelativeFloor * top ? std::sqrt(lambda(i)) : 0.0;
  }
  return eig.eigenvectors() * lambda.asDiagonal() * eig.eigenvectors().adjoint();
}

}  // namespace

std::string_view to_string(ChiLabel label) {
  switch (label) {
    case ChiLabel::theoretical: return "theoretical";
    case ChiLabel::noisy: return "noisy";
    case ChiLabel::mle: return "mle";
    case ChiLabel::denoised: return "denoised";
  }
  return "theoretical";
}

ChiLabel chi_label_from_string(std::string_view text) {
  if (text == "theoretical") return ChiLabel::theoretical;
  if (text == "noisy") return ChiLabel::noisy;
  if (text == "mle") return ChiLabel::mle;
  if (text == "denoised") return ChiLabel::denoised;
  throw std::invalid_argument("unknown chi label: " + std::string(text));
}

Eigen::Matrix2cd pauli(int index) {
  const Complex i{0.0, 1.0};
  Eigen::Matrix2cd p;
  switch (index) {
    case 0: p << 1, 0, 0, 1; break;
    case 1: p << 0, 1, 1, 0; break;
    case 2: p << 0, -i, i, 0; break;
    case 3: p << 1, 0, 0, -1; break;
    default: throw std::out_of_range("pauli index must be 0..3");
  }
  return p;
}

Operator kron(const Eigen::Matrix2cd& control, const Eigen::Matrix2cd& target) {
  Operator out;
  for (int r1 = 0; r1 < 2; ++r1)
    for (int c1 = 0; c1 < 2; ++c1)
      out.block<2, 2>(2 * r1, 2 * c1) = control(r1, c1) * target;
  return out;
}

const std::array<Operator, 16>& pauli_basis() {
  static const std::array<Operator, 16> basis = [] {
    std::array<Operator, 16> ops;
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) ops[4 * a + b] = kron(pauli(a), pauli(b));
    return ops;
  }();
  return basis;
}

Operator pure_density(const Eigen::Vector4cd& psi) { return psi * psi.adjoint(); }

Operator cp_unitary(double phi) {
  Operator u = Operator::Identity();
  u(3, 3) = std::polar(1.0, -phi);
  return u;
}

Eigen::Matrix<Complex, 16, 1> pauli_decomposition(const Operator& unitary) {
  const auto& basis = pauli_basis();
  Eigen::Matrix<Complex, 16, 1> a;
  for (int m = 0; m < kChiDim; ++m) a(m) = (basis[m].adjoint() * unitary).trace() / 4.0;
  return a;
}

ProcessMatrix ideal_chi(double phi) {
  const auto a = pauli_decomposition(cp_unitary(phi));
  ProcessMatrix out;
  out.chi = a * a.adjoint();
  out.phi = phi;
  out.label = ChiLabel::theoretical;
  return out;
}

Operator apply_channel(const ChiMatrix& chi, const Operator& rho) {
  const auto& basis = pauli_basis();
  std::array<Operator, 16> left;
  for (int m = 0; m < kChiDim; ++m) left[m] = basis[m] * rho;
  Operator out = Operator::Zero();
  for (int n = 0; n < kChiDim; ++n) {
    Operator acc = Operator::Zero();
    for (int m = 0; m < kChiDim; ++m) {
      if (chi(m, n) != Complex{}) acc += chi(m, n) * left[m];
    }
    out += acc * basis[n].adjoint();
  }
  return out;
}

Eigen::MatrixXcd apply_channel(const ChiMatrix& chi, const Eigen::MatrixXcd& rho) {
  if (rho.rows() != kQubitDim || rho.cols() != kQubitDim) {
    throw std::invalid_argument("apply_channel: density matrix must be 4x4");
  }
  return apply_channel(chi, Operator(rho));
}

BornResult born_probability(const ChiMatrix& chi, const Operator& rho_in, const Operator& projector) {
  const double raw = (projector * apply_channel(chi, rho_in)).trace().real();
  BornResult out;
  out.non_physical = raw < -kBornSlack || raw > 1.0 + kBornSlack;
  out.probability = (raw < 0.0 && raw >= -kBornSlack) ? 0.0 : raw;
  return out;
}

PsdProjection psd_project(const ChiMatrix& chi) {
  const ChiMatrix h = hermitian_part(chi);
  const double trace = h.trace().real();
  Eigen::SelfAdjointEigenSolver<ChiMatrix> eig(h);
  Eigen::Matrix<double, 16, 1> lambda = eig.eigenvalues().cwiseMax(0.0);
  PsdProjection out;
  const double kept = lambda.sum();
  if (kept <= 0.0) {
    out.degenerate = true;
    return out;
  }
  if (trace > 0.0) {
    lambda *= trace / kept;
  } else {
    out.degenerate = true;
  }
  out.chi = hermitian_part(eig.eigenvectors() * lambda.asDiagonal() * eig.eigenvectors().adjoint());
  return out;
}

ProcessMatrix psd_project(const ProcessMatrix& m) {
  ProcessMatrix out = m;
  out.chi = psd_project(m.chi).chi;
  return out;
}

double process_fidelity(const ChiMatrix& a, const ChiMatrix& b) {
  const ChiMatrix pa = psd_project(a).chi;
  const ChiMatrix pb = psd_project(b).chi;
  const double ta = pa.trace().real();
  const double tb = pb.trace().real();
  if (!(ta > 0.0) || !(tb > 0.0)) {
    throw std::invalid_argument("process_fidelity: zero-trace argument");
  }
  // Tr sqrt(sqrt(A) B sqrt(A)) is the nuclear norm of sqrt(A) sqrt(B).
  const ChiMatrix product = psd_sqrt(pa) * psd_sqrt(pb);
  Eigen::JacobiSVD<ChiMatrix> svd(product);
  const double root = svd.singularValues().sum();
  return root * root / (ta * tb);
}

double process_fidelity(const ProcessMatrix& a, const ProcessMatrix& b) {
  return process_fidelity(a.chi, b.chi);
}

double hermiticity_defect(const Eigen::Ref<const Eigen::MatrixXcd>& m) {
  return (m - m.adjoint()).cwiseAbs().maxCoeff();
}

}  // namespace qpdn
