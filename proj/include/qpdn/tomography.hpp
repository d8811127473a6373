#pragma once

// Simulated process tomography of a two-qubit channel: the input/projector
// alphabet, expected and Poisson-sampled coincidence counts, and two linear
// inversion routes from counts to chi.
//
// Index conventions
//   input j      = 4a + b over single-qubit states {|0>, |1>, |+>, |+i>} (a = control)
//   projector l  = 4g + o, group g = 3u + v over measurement axes {Z, X, Y},
//                  outcome o = 2s + t with s, t = 0 for the +1 eigenstate
//   process row  = 36j + l, chi column = 16m + n

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>

#include <Eigen/Dense>

#include "qpdn/quantum_core.hpp"

namespace qpdn {

inline constexpr int kInputStates = 16;
inline constexpr int kProjectors = 36;
inline constexpr int kMeasurementBases = 9;
inline constexpr int kOutcomesPerBasis = 4;
inline constexpr int kProcessRows = kInputStates * kProjectors;  // 576
inline constexpr double kFullSignalCounts = 2000.0;

struct StateBasis {
  std::array<Operator, kInputStates> inputs;
  std::array<Operator, kProjectors> projectors;
};

const StateBasis& standard_state_basis();

/// Single-qubit states used by the projector alphabet, [axis][outcome].
Eigen::Vector2cd measurement_state(int axis, int outcome);

using CountGrid = Eigen::Matrix<double, kInputStates, kProjectors, Eigen::RowMajor>;

struct CountTable {
  CountGrid expected = CountGrid::Zero();
  CountGrid counts = CountGrid::Zero();  // integral values
  bool has_counts = false;
  double total_per_basis = kFullSignalCounts;  // N = 2000 r
  double signal_ratio = 1.0;
  std::uint64_t seed = 0;
  std::optional<double> phi;

  /// Poisson standard deviation sqrt(expected).
  CountGrid sigma() const { return expected.cwiseSqrt(); }
};

/// expected[j][l] = N Tr[Pi_l E_chi(rho_j)], N = 2000 r. Throws
/// std::invalid_argument for r <= 0, or for a theoretical chi whose
/// probabilities leave [0, 1] by more than 1e-8.
CountTable expected_counts(const ProcessMatrix& chi, double signal_ratio);

/// Exact Poisson draw of every cell around `expected`, deterministic in `seed`.
CountTable sample_counts(const CountTable& table, std::uint64_t seed);

/// Counts used as data: sampled counts when present, otherwise the expected values.
const CountGrid& observed_counts(const CountTable& table);

/// 576 x 256 linear map chi -> Born probabilities: p_{36j+l} = sum_mn K(36j+l, 16m+n) chi_mn.
const Eigen::MatrixXcd& process_design();

/// Row-major flattening of chi to the design's column order.
Eigen::Matrix<Complex, 256, 1> flatten_chi(const ChiMatrix& chi);

/// Real coordinates of a Hermitian chi: the 16 diagonal entries, then for each
/// m < n (row-major) the pair (Re chi_mn, -Im chi_mn).
Eigen::Matrix<double, 256, 1> hermitian_coordinates(const ChiMatrix& chi);
ChiMatrix chi_from_hermitian_coordinates(const Eigen::Matrix<double, 256, 1>& h);

/// 576 x 256 real map from Hermitian coordinates to Born probabilities.
const Eigen::MatrixXd& process_design_real();

/// Noiseless Born probabilities for every (input, projector).
Eigen::Matrix<double, kProcessRows, 1> process_probabilities(const ChiMatrix& chi);

/// A_m rho_j A_n^dag = sum_k beta^{mn}_{jk} rho_k, flattened as
/// beta(16j + k, 16m + n); tau is its Moore-Penrose pseudo-inverse, laid out
/// tau(16m + n, 16j + k).
struct BetaTensor {
  Eigen::MatrixXcd beta;
  Eigen::MatrixXcd tau;
};

/// Throws std::runtime_error when the input Gram matrix is singular.
BetaTensor beta_tensor(const StateBasis& basis);
const BetaTensor& standard_beta_tensor();

/// Coefficients of X in the (non-orthogonal) input basis: X = sum_k c_k rho_k.
Eigen::Matrix<Complex, kInputStates, 1> expand_in_inputs(const Operator& x);

using LambdaMatrix = Eigen::Matrix<Complex, kInputStates, kInputStates>;

/// lambda(j, k): output of input j, reconstructed by least squares over the
/// 36 projectors, expanded in the input basis. Throws on N <= 0.
LambdaMatrix lambda_from_counts(const CountTable& table);

/// chi_mn = sum_jk tau^{mn}_{jk} lambda_jk, Hermitian-symmetrised; label noisy.
ProcessMatrix chi_from_lambda(const LambdaMatrix& lambda, const BetaTensor& beta = standard_beta_tensor());

struct LinearInversion {
  ProcessMatrix process;
  /// All observed counts were zero; the result is the least-norm (zero) solution.
  bool degenerate = false;
};

/// Direct least squares over the 576 probabilities in the 256-dimensional real
/// space of Hermitian chi.
LinearInversion chi_least_squares(const CountTable& table);

/// Counts CSV: header "input_index,projector_index,expected,count,N,seed", 576
/// data rows, optional leading "# counts phi=<rad> r=<ratio>" line.
void write_counts_csv(std::ostream& out, const CountTable& table);
void write_counts_csv(const std::filesystem::path& path, const CountTable& table);
CountTable read_counts_csv(std::istream& in);
CountTable read_counts_csv(const std::filesystem::path& path);

}  // namespace qpdn
