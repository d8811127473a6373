#include "qpdn/mle.hpp"

#include <cmath>
#include <deque>
#include <limits>
#include <stdexcept>

namespace qpdn {

namespace {

constexpr double kRidge = 1e-8;
constexpr double kMinFactorNorm = 1e-300;
constexpr double kZeroEigenvalue = 1e-6;
constexpr int kRelWindow = 10;

// First parameter index of super-diagonal `offset` (complex entries as pairs).
constexpr int diagonal_start(int offset) {
  int start = kChiDim;
  for (int o = 1; o < offset; ++o) start += 2 * (kChiDim - o);
  return start;
}

struct Evaluation {
  Objective objective;
  ChiMatrix chi;
};

Evaluation evaluate(const TParameters& t, const CountTable& table, double sigma_floor) {
  const TriangularFactor factor = t_to_factor(t);
  const ChiMatrix gram = factor.adjoint() * factor;
  const double norm = gram.trace().real();
  if (!(norm > kMinFactorNorm)) throw std::invalid_argument("triangular factor is zero");
  Evaluation ev;
  ev.chi = gram / norm;

  const Eigen::MatrixXd& design = process_design_real();
  const Eigen::Matrix<double, 256, 1> h = hermitian_coordinates(ev.chi);
  const Eigen::VectorXd p = design * h;
  const CountGrid& counts = observed_counts(table);
  const double total = table.total_per_basis;

  Eigen::VectorXd dvalue_dp(kProcessRows);
  double value = 0.0;
  for (int j = 0; j < kInputStates; ++j) {
    for (int l = 0; l < kProjectors; ++l) {
      const int i = kProjectors * j + l;
      const double model = total * p(i);
      const double resid = counts(j, l) - model;
      double dmodel = 0.0;
      if (model > sigma_floor) {
        value += resid * resid / (2.0 * model);
        dmodel = -resid / model - resid * resid / (2.0 * model * model);
      } else {
        value += resid * resid / (2.0 * sigma_floor);
        dmodel = -resid / sigma_floor;
      }
      dvalue_dp(i) = total * dmodel;
    }
  }
  ev.objective.value = value;

  // dF = Re tr(G dchi) with G built from the Hermitian-coordinate gradient.
  const Eigen::Matrix<double, 256, 1> gh = design.transpose() * dvalue_dp;
  ChiMatrix w = ChiMatrix::Zero();
  int q = 0;
  for (int d = 0; d < kChiDim; ++d) w(d, d) = gh(q++);
  for (int r = 0; r < kChiDim; ++r) {
    for (int c = r + 1; c < kChiDim; ++c) {
      w(r, c) = Complex{gh(q), gh(q + 1)};
      q += 2;
    }
  }
  const ChiMatrix g = w.transpose();
  const double shift = (g * gram).trace().real() / norm;
  const ChiMatrix hmat = (g - shift * ChiMatrix::Identity()) / norm;
  const ChiMatrix qmat = (hmat + hmat.adjoint()) * factor.adjoint();

  TParameters& grad = ev.objective.gradient;
  for (int d = 0; d < kChiDim; ++d) grad(d) = qmat(d, d).real();
  for (int o = 1; o < kChiDim; ++o) {
    const int start = diagonal_start(o);
    for (int r = 0; r + o < kChiDim; ++r) {
      const Complex coeff = qmat(r + o, r);
      grad(start + 2 * r) = coeff.real();
      grad(start + 2 * r + 1) = -coeff.imag();
    }
  }
  return ev;
}

}  // namespace

TriangularFactor t_to_factor(const TParameters& t) {
  TriangularFactor factor = TriangularFactor::Zero();
  for (int d = 0; d < kChiDim; ++d) factor(d, d) = t(d);
  for (int o = 1; o < kChiDim; ++o) {
    const int start = diagonal_start(o);
    for (int r = 0; r + o < kChiDim; ++r) factor(r, r + o) = Complex{t(start + 2 * r), t(start + 2 * r + 1)};
  }
  return factor;
}

TParameters factor_to_t(const TriangularFactor& factor) {
  TParameters t;
  for (int d = 0; d < kChiDim; ++d) t(d) = factor(d, d).real();
  for (int o = 1; o < kChiDim; ++o) {
    const int start = diagonal_start(o);
    for (int r = 0; r + o < kChiDim; ++r) {
      t(start + 2 * r) = factor(r, r + o).real();
      t(start + 2 * r + 1) = factor(r, r + o).imag();
    }
  }
  return t;
}

ProcessMatrix t_to_chi(const TParameters& t) {
  const TriangularFactor factor = t_to_factor(t);
  const ChiMatrix gram = factor.adjoint() * factor;
  const double norm = gram.trace().real();
  if (!(norm > kMinFactorNorm)) throw std::invalid_argument("t_to_chi: Tr[T^dag T] is zero");
  ProcessMatrix out;
  out.chi = hermitian_part(gram / norm);
  out.label = ChiLabel::mle;
  return out;
}

TParameters chi_to_t_init(const ChiMatrix& chi) {
  const PsdProjection projected = psd_project(chi);
  ChiMatrix start = projected.chi;
  const double trace = start.trace().real();
  if (projected.degenerate || !(trace > 0.0)) {
    start = ChiMatrix::Identity() / static_cast<double>(kChiDim);
  } else {
    start /= trace;
  }
  start += kRidge * ChiMatrix::Identity();
  Eigen::LLT<ChiMatrix> llt(start);
  if (llt.info() != Eigen::Success) {
    llt.compute(ChiMatrix::Identity() / static_cast<double>(kChiDim));
  }
  // start = L L^dag, so T = L^dag satisfies T^dag T = start.
  const ChiMatrix lower = llt.matrixL();
  return factor_to_t(lower.adjoint());
}

Objective neg_log_likelihood(const TParameters& t, const CountTable& table, double sigma_floor) {
  return evaluate(t, table, sigma_floor).objective;
}

MleReport mle_fit(const CountTable& table, const MleConfig& config) {
  const double floor = config.sigma_floor;
  TParameters x = chi_to_t_init(chi_least_squares(table).process.chi);
  Evaluation current = evaluate(x, table, floor);

  MleReport report;
  report.initial_objective = current.objective.value;

  std::deque<TParameters> s_hist, y_hist;
  std::deque<double> rho_hist;
  std::deque<double> recent{current.objective.value};

  int iter = 0;
  for (; iter < config.max_iters; ++iter) {
    const TParameters& g = current.objective.gradient;
    const double gnorm = g.norm();
    if (gnorm <= config.grad_tol) {
      report.converged = true;
      report.stop_reason = "gradient tolerance";
      break;
    }

    // Two-loop recursion.
    TParameters dir = -g;
    std::vector<double> alpha(s_hist.size());
    for (int k = static_cast<int>(s_hist.size()) - 1; k >= 0; --k) {
      alpha[k] = rho_hist[k] * s_hist[k].dot(dir);
      dir -= alpha[k] * y_hist[k];
    }
    if (!s_hist.empty()) {
      dir *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    } else {
      dir *= std::min(1.0, 1.0 / gnorm) * x.norm();
    }
    for (std::size_t k = 0; k < s_hist.size(); ++k) {
      const double beta = rho_hist[k] * y_hist[k].dot(dir);
      dir += (alpha[k] - beta) * s_hist[k];
    }
    double slope = g.dot(dir);
    if (!(slope < 0.0)) {
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      dir = -g * (x.norm() / gnorm) * 1e-3;
      slope = g.dot(dir);
    }

    // Armijo backtracking.
    double step = 1.0;
    bool accepted = false;
    Evaluation trial;
    TParameters x_new;
    for (int ls = 0; ls < 60; ++ls) {
      x_new = x + step * dir;
      if (t_to_factor(x_new).squaredNorm() > kMinFactorNorm) {
        trial = evaluate(x_new, table, floor);
        if (std::isfinite(trial.objective.value) &&
            trial.objective.value <= current.objective.value + 1e-4 * step * slope) {
          accepted = true;
          break;
        }
      }
      step *= 0.5;
    }
    if (!accepted) {
      report.stop_reason = "line search stalled";
      break;
    }

    const TParameters s = x_new - x;
    const TParameters y = trial.objective.gradient - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      s_hist.push_back(s);
      y_hist.push_back(y);
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > config.history) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    // chi(t) is invariant under t -> c t; keep the factor at unit scale.
    const double scale = t_to_factor(x_new).norm();
    x = x_new / scale;
    current = std::move(trial);
    current.objective.gradient *= scale;
    if (scale != 1.0) {
      for (auto& v : s_hist) v /= scale;
      for (auto& v : y_hist) v *= scale;
    }

    recent.push_back(current.objective.value);
    if (static_cast<int>(recent.size()) > kRelWindow + 1) recent.pop_front();
    if (static_cast<int>(recent.size()) == kRelWindow + 1) {
      const double change = std::abs(recent.front() - recent.back());
      if (change <= config.rel_tol * std::max(std::abs(recent.front()), std::numeric_limits<double>::min())) {
        report.converged = true;
        report.stop_reason = "relative change tolerance";
        ++iter;
        break;
      }
    }
  }
  if (iter >= config.max_iters && report.stop_reason.empty()) report.stop_reason = "iteration limit";

  report.iterations = iter;
  report.final_objective = current.objective.value;
  report.gradient_norm = current.objective.gradient.norm();
  report.chi_hat = t_to_chi(x);
  report.chi_hat.phi = table.phi;
  report.chi_hat.signal_ratio = table.signal_ratio;
  Eigen::SelfAdjointEigenSolver<ChiMatrix> eig(report.chi_hat.chi, Eigen::EigenvaluesOnly);
  report.near_zero_eigenvalues = static_cast<int>((eig.eigenvalues().array() < kZeroEigenvalue).count());
  return report;
}

}  // namespace qpdn
