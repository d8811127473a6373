#pragma once

// Two-qubit process algebra: Pauli operator basis, the control-phase channel,
// chi-matrix channel application, Born probabilities and process fidelity.

#include <array>
#include <complex>
#include <optional>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace qpdn {

using Complex = std::complex<double>;

/// 4x4 operator on the two-qubit Hilbert space (states, gates, projectors).
using Operator = Eigen::Matrix4cd;

/// 16x16 process matrix in the Pauli operator basis.
using ChiMatrix = Eigen::Matrix<Complex, 16, 16>;

inline constexpr int kQubitDim = 4;
inline constexpr int kChiDim = 16;

enum class ChiLabel { theoretical, noisy, mle, denoised };

std::string_view to_string(ChiLabel label);
ChiLabel chi_label_from_string(std::string_view text);

/// A chi matrix together with where it came from.
struct ProcessMatrix {
  ChiMatrix chi = ChiMatrix::Zero();
  std::optional<double> phi;
  std::optional<double> signal_ratio;
  ChiLabel label = ChiLabel::theoretical;
};

/// The 16 products P_a (x) P_b of unnormalised Pauli matrices, index 4a+b with
/// a, b over {I, X, Y, Z}. Index 0 is the identity; Tr[A_m^dag A_n] = 4 delta_mn.
const std::array<Operator, 16>& pauli_basis();

/// Single-qubit Pauli matrix, 0..3 = I, X, Y, Z.
Eigen::Matrix2cd pauli(int index);

/// Kronecker product of two single-qubit operators (first argument = control).
Operator kron(const Eigen::Matrix2cd& control, const Eigen::Matrix2cd& target);

/// |psi><psi| for a two-qubit pure state vector.
Operator pure_density(const Eigen::Vector4cd& psi);

/// diag(1, 1, 1, exp(-i phi)).
Operator cp_unitary(double phi);

/// Coefficients a_m = Tr[A_m^dag U] / 4 of a unitary in the Pauli basis.
Eigen::Matrix<Complex, 16, 1> pauli_decomposition(const Operator& unitary);

/// Rank-1 chi = a a^dag of the ideal control-phase gate (trace 1).
ProcessMatrix ideal_chi(double phi);

/// sum_mn chi_mn A_m rho A_n^dag. Throws std::invalid_argument unless rho is 4x4.
Operator apply_channel(const ChiMatrix& chi, const Operator& rho);
Eigen::MatrixXcd apply_channel(const ChiMatrix& chi, const Eigen::MatrixXcd& rho);

struct BornResult {
  double probability = 0.0;
  /// Raw value was outside [-1e-10, 1 + 1e-10] before clamping.
  bool non_physical = false;
};

/// Tr[projector * E_chi(rho_in)], tiny negatives clamped to zero.
BornResult born_probability(const ChiMatrix& chi, const Operator& rho_in, const Operator& projector);

struct PsdProjection {
  ChiMatrix chi = ChiMatrix::Zero();
  /// Set when no positive eigenvalue survives, or the input trace is not positive.
  bool degenerate = false;
};

/// Clamp negative eigenvalues of a Hermitian matrix to zero and restore the
/// input trace.
PsdProjection psd_project(const ChiMatrix& chi);
ProcessMatrix psd_project(const ProcessMatrix& m);

/// Uhlmann fidelity (Tr sqrt(sqrt(A) B sqrt(A)))^2 / (Tr A Tr B) of the
/// PSD-projected arguments. Throws std::invalid_argument on zero trace.
double process_fidelity(const ChiMatrix& a, const ChiMatrix& b);
double process_fidelity(const ProcessMatrix& a, const ProcessMatrix& b);

/// Largest |M_ij - conj(M_ji)|.
double hermiticity_defect(const Eigen::Ref<const Eigen::MatrixXcd>& m);

template <typename Derived>
auto hermitian_part(const Eigen::MatrixBase<Derived>& m) {
  return ((m + m.adjoint()) * 0.5).eval();
}

}  // namespace qpdn
