#pragma once

// Maximum-likelihood chi: chi(t) = T^dag T / Tr[T^dag T] with T upper
// triangular, fitted to counts under a Gaussian likelihood with Poisson
// variances.

#include <array>
#include <string>

#include <Eigen/Dense>

#include "qpdn/quantum_core.hpp"
#include "qpdn/tomography.hpp"

namespace qpdn {

inline constexpr int kTParameters = kChiDim * kChiDim;  // 256

/// Parameter vector for the triangular factor. Layout: the 16 real diagonal
/// entries first, then the complex super-diagonal entries as (re, im) pairs,
/// one super-diagonal at a time (offset 1, 2, ..., 15), top row first.
using TParameters = Eigen::Matrix<double, kTParameters, 1>;

using TriangularFactor = ChiMatrix;

TriangularFactor t_to_factor(const TParameters& t);

/// Inverse of t_to_factor for an upper-triangular factor with real diagonal;
/// the lower triangle and diagonal imaginary parts are ignored.
TParameters factor_to_t(const TriangularFactor& factor);

/// T^dag T / Tr[T^dag T]. Throws std::invalid_argument when Tr[T^dag T] <= 1e-300.
ProcessMatrix t_to_chi(const TParameters& t);

/// PSD-project, unit trace, ridge 1e-8 I, Cholesky, pack. A projection with no
/// positive spectrum starts from I / 16.
TParameters chi_to_t_init(const ChiMatrix& chi);

struct MleConfig {
  int max_iters = 5000;
  double grad_tol = 1e-6;
  double rel_tol = 1e-10;
  double sigma_floor = 1.0;
  /// L-BFGS memory.
  int history = 10;
};

struct Objective {
  double value = 0.0;
  TParameters gradient = TParameters::Zero();
};

/// sum_i (n_i - nbar_i(t))^2 / (2 sigma_i^2), sigma_i^2 = max(nbar_i(t), floor),
/// with its analytic gradient (the variance is differentiated too).
Objective neg_log_likelihood(const TParameters& t, const CountTable& table, double sigma_floor = 1.0);

struct MleReport {
  ProcessMatrix chi_hat;
  double initial_objective = 0.0;
  double final_objective = 0.0;
  int iterations = 0;
  bool converged = false;
  double gradient_norm = 0.0;
  /// Eigenvalues of chi_hat below 1e-6.
  int near_zero_eigenvalues = 0;
  std::string stop_reason;
};

/// L-BFGS with Armijo backtracking from chi_to_t_init(chi_least_squares(table)).
/// Never returns a point worse than the start.
MleReport mle_fit(const CountTable& table, const MleConfig& config = {});

}  // namespace qpdn
