#include "qpdn/tomography.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "qpdn/errors.hpp"
#include "qpdn/random.hpp"
#include "qpdn/text_format.hpp"

namespace qpdn {

namespace {

constexpr double kTheoryProbabilitySlack = 1e-8;

Eigen::Vector2cd input_state(int index) {
  const double s = 1.0 / std::sqrt(2.0);
  const Complex i{0.0, 1.0};
  switch (index) {
    case 0: return {1.0, 0.0};
    case 1: return {0.0, 1.0};
    case 2: return {s, s};
    case 3: return {Complex{s}, s * i};
    default: throw std::out_of_range("input_state index must be 0..3");
  }
}

Eigen::Vector4cd product_state(const Eigen::Vector2cd& control, const Eigen::Vector2cd& target) {
  Eigen::Vector4cd psi;
  psi << control(0) * target(0), control(0) * target(1), control(1) * target(0), control(1) * target(1);
  return psi;
}

// Real basis of the n x n Hermitian matrices: E_ii, then for i < j the pairs
// E_ij + E_ji and -i E_ij + i E_ji.
std::vector<Eigen::MatrixXcd> hermitian_basis(int n) {
  std::vector<Eigen::MatrixXcd> out;
  out.reserve(static_cast<std::size_t>(n * n));
  const Complex i{0.0, 1.0};
  for (int d = 0; d < n; ++d) {
    Eigen::MatrixXcd e = Eigen::MatrixXcd::Zero(n, n);
    e(d, d) = 1.0;
    out.push_back(e);
  }
  for (int r = 0; r < n; ++r) {
    for (int c = r + 1; c < n; ++c) {
      Eigen::MatrixXcd sym = Eigen::MatrixXcd::Zero(n, n);
      sym(r, c) = 1.0;
      sym(c, r) = 1.0;
      out.push_back(sym);
      Eigen::MatrixXcd anti = Eigen::MatrixXcd::Zero(n, n);
      anti(r, c) = -i;
      anti(c, r) = i;
      out.push_back(anti);
    }
  }
  return out;
}

// Precomputed linear-algebra pieces shared by every reconstruction.
struct Design {
  Eigen::MatrixXcd process{kProcessRows, 256};
  Eigen::MatrixXd process_real;  // 576 x 256
  Eigen::MatrixXd process_pinv;  // 256 x 576
  std::vector<Eigen::MatrixXcd> state_hermitian_basis;
  Eigen::MatrixXd state_pinv;  // 16 x 36
  Eigen::Matrix<Complex, kInputStates, kInputStates> gram_inverse;
};

const Design& design() {
  static const Design d = [] {
    Design out;
    const auto& basis = standard_state_basis();
    const auto& pauli = pauli_basis();

    for (int j = 0; j < kInputStates; ++j) {
      for (int l = 0; l < kProjectors; ++l) {
        const Operator& rho = basis.inputs[j];
        const Operator& proj = basis.projectors[l];
        for (int m = 0; m < kChiDim; ++m) {
          const Operator left = proj * pauli[m] * rho;
          for (int n = 0; n < kChiDim; ++n) {
            out.process(kProjectors * j + l, kChiDim * m + n) = (left * pauli[n].adjoint()).trace();
          }
        }
      }
    }

    const auto chi_hermitian_basis = hermitian_basis(kChiDim);
    Eigen::MatrixXcd flat(256, 256);
    for (int q = 0; q < 256; ++q) {
      const auto& h = chi_hermitian_basis[q];
      for (int m = 0; m < kChiDim; ++m)
        for (int n = 0; n < kChiDim; ++n) flat(kChiDim * m + n, q) = h(m, n);
    }
    out.process_real = (out.process * flat).real();
    out.process_pinv = Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(out.process_real).pseudoInverse();

    out.state_hermitian_basis = hermitian_basis(kQubitDim);
    Eigen::MatrixXd state_design(kProjectors, kInputStates);
    for (int l = 0; l < kProjectors; ++l)
      for (int q = 0; q < kInputStates; ++q)
        state_design(l, q) = (basis.projectors[l] * out.state_hermitian_basis[q]).trace().real();
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> state_cod(state_design);
    if (state_cod.rank() != kInputStates) throw std::logic_error("projector set is not informationally complete");
    out.state_pinv = state_cod.pseudoInverse();

    Eigen::Matrix<Complex, kInputStates, kInputStates> gram;
    for (int a = 0; a < kInputStates; ++a)
      for (int b = 0; b < kInputStates; ++b) gram(a, b) = (basis.inputs[a].adjoint() * basis.inputs[b]).trace();
    Eigen::FullPivLU<Eigen::Matrix<Complex, kInputStates, kInputStates>> lu(gram);
    if (!lu.isInvertible()) throw std::logic_error("input states are linearly dependent");
    out.gram_inverse = lu.inverse();
    return out;
  }();
  return d;
}

void require_positive_total(const CountTable& table) {
  if (!(table.total_per_basis > 0.0)) throw std::invalid_argument("count table has N <= 0");
}

}  // namespace

Eigen::Vector2cd measurement_state(int axis, int outcome) {
  const double s = 1.0 / std::sqrt(2.0);
  const Complex i{0.0, 1.0};
  const double sign = outcome == 0 ? 1.0 : -1.0;
  switch (axis) {
    case 0: return outcome == 0 ? Eigen::Vector2cd(1.0, 0.0) : Eigen::Vector2cd(0.0, 1.0);
    case 1: return {Complex{s}, Complex{sign * s}};
    case 2: return {Complex{s}, sign * s * i};
    default: throw std::out_of_range("measurement axis must be 0..2");
  }
}

const StateBasis& standard_state_basis() {
  static const StateBasis basis = [] {
    StateBasis b;
    for (int a = 0; a < 4; ++a)
      for (int c = 0; c < 4; ++c) b.inputs[4 * a + c] = pure_density(product_state(input_state(a), input_state(c)));
    for (int u = 0; u < 3; ++u)
      for (int v = 0; v < 3; ++v)
        for (int s = 0; s < 2; ++s)
          for (int t = 0; t < 2; ++t) {
            const int l = 4 * (3 * u + v) + 2 * s + t;
            b.projectors[l] = pure_density(product_state(measurement_state(u, s), measurement_state(v, t)));
          }
    return b;
  }();
  return basis;
}

const Eigen::MatrixXcd& process_design() { return design().process; }

Eigen::Matrix<Complex, 256, 1> flatten_chi(const ChiMatrix& chi) {
  Eigen::Matrix<Complex, 256, 1> v;
  for (int m = 0; m < kChiDim; ++m)
    for (int n = 0; n < kChiDim; ++n) v(kChiDim * m + n) = chi(m, n);
  return v;
}

Eigen::Matrix<double, kProcessRows, 1> process_probabilities(const ChiMatrix& chi) {
  return (design().process * flatten_chi(chi)).real();
}

const Eigen::MatrixXd& process_design_real() { return design().process_real; }

Eigen::Matrix<double, 256, 1> hermitian_coordinates(const ChiMatrix& chi) {
  Eigen::Matrix<double, 256, 1> h;
  int q = 0;
  for (int d = 0; d < kChiDim; ++d) h(q++) = chi(d, d).real();
  for (int r = 0; r < kChiDim; ++r) {
    for (int c = r + 1; c < kChiDim; ++c) {
      h(q++) = chi(r, c).real();
      h(q++) = -chi(r, c).imag();
    }
  }
  return h;
}

ChiMatrix chi_from_hermitian_coordinates(const Eigen::Matrix<double, 256, 1>& h) {
  ChiMatrix chi = ChiMatrix::Zero();
  int q = 0;
  for (int d = 0; d < kChiDim; ++d) chi(d, d) = h(q++);
  for (int r = 0; r < kChiDim; ++r) {
    for (int c = r + 1; c < kChiDim; ++c) {
      chi(r, c) = Complex{h(q), -h(q + 1)};
      chi(c, r) = std::conj(chi(r, c));
      q += 2;
    }
  }
  return chi;
}

CountTable expected_counts(const ProcessMatrix& chi, double signal_ratio) {
  if (!(signal_ratio > 0.0)) throw std::invalid_argument("signal ratio must be positive");
  CountTable table;
  table.signal_ratio = signal_ratio;
  table.total_per_basis = kFullSignalCounts * signal_ratio;
  table.phi = chi.phi;
  const auto p = process_probabilities(chi.chi);
  for (int j = 0; j < kInputStates; ++j) {
    for (int l = 0; l < kProjectors; ++l) {
      double prob = p(kProjectors * j + l);
      if (chi.label == ChiLabel::theoretical &&
          (prob < -kTheoryProbabilitySlack || prob > 1.0 + kTheoryProbabilitySlack)) {
        throw std::invalid_argument("theoretical chi yields a non-physical probability");
      }
      table.expected(j, l) = table.total_per_basis * std::max(prob, 0.0);
    }
  }
  return table;
}

CountTable sample_counts(const CountTable& table, std::uint64_t seed) {
  CountTable out = table;
  out.seed = seed;
  out.has_counts = true;
  Rng rng(seed);
  for (int j = 0; j < kInputStates; ++j)
    for (int l = 0; l < kProjectors; ++l)
      out.counts(j, l) = static_cast<double>(PoissonSampler(table.expected(j, l))(rng));
  return out;
}

const CountGrid& observed_counts(const CountTable& table) {
  return table.has_counts ? table.counts : table.expected;
}

Eigen::Matrix<Complex, kInputStates, 1> expand_in_inputs(const Operator& x) {
  const auto& basis = standard_state_basis();
  Eigen::Matrix<Complex, kInputStates, 1> rhs;
  for (int k = 0; k < kInputStates; ++k) rhs(k) = (basis.inputs[k].adjoint() * x).trace();
  return design().gram_inverse * rhs;
}

BetaTensor beta_tensor(const StateBasis& basis) {
  Eigen::Matrix<Complex, kInputStates, kInputStates> gram;
  for (int a = 0; a < kInputStates; ++a)
    for (int b = 0; b < kInputStates; ++b) gram(a, b) = (basis.inputs[a].adjoint() * basis.inputs[b]).trace();
  Eigen::FullPivLU<Eigen::Matrix<Complex, kInputStates, kInputStates>> lu(gram);
  if (!lu.isInvertible()) throw std::runtime_error("beta_tensor: singular Gram matrix of input states");
  const Eigen::Matrix<Complex, kInputStates, kInputStates> gram_inv = lu.inverse();

  const auto& pauli = pauli_basis();
  BetaTensor out;
  out.beta.resize(256, 256);
  for (int j = 0; j < kInputStates; ++j) {
    for (int m = 0; m < kChiDim; ++m) {
      const Operator left = pauli[m] * basis.inputs[j];
      for (int n = 0; n < kChiDim; ++n) {
        const Operator image = left * pauli[n].adjoint();
        Eigen::Matrix<Complex, kInputStates, 1> rhs;
        for (int k = 0; k < kInputStates; ++k) rhs(k) = (basis.inputs[k].adjoint() * image).trace();
        const Eigen::Matrix<Complex, kInputStates, 1> coeff = gram_inv * rhs;
        for (int k = 0; k < kInputStates; ++k) out.beta(kInputStates * j + k, kChiDim * m + n) = coeff(k);
      }
    }
  }
  out.tau = Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXcd>(out.beta).pseudoInverse();
  return out;
}

const BetaTensor& standard_beta_tensor() {
  static const BetaTensor beta = beta_tensor(standard_state_basis());
  return beta;
}

LambdaMatrix lambda_from_counts(const CountTable& table) {
  require_positive_total(table);
  const Design& d = design();
  const CountGrid& counts = observed_counts(table);
  LambdaMatrix lambda;
  for (int j = 0; j < kInputStates; ++j) {
    const Eigen::Matrix<double, kProjectors, 1> p = counts.row(j).transpose() / table.total_per_basis;
    const Eigen::VectorXd h = d.state_pinv * p;
    Operator out = Operator::Zero();
    for (int q = 0; q < kInputStates; ++q) out += h(q) * d.state_hermitian_basis[q];
    lambda.row(j) = expand_in_inputs(out).transpose();
  }
  return lambda;
}

ProcessMatrix chi_from_lambda(const LambdaMatrix& lambda, const BetaTensor& beta) {
  Eigen::VectorXcd flat(256);
  for (int j = 0; j < kInputStates; ++j)
    for (int k = 0; k < kInputStates; ++k) flat(kInputStates * j + k) = lambda(j, k);
  const Eigen::VectorXcd chi_flat = beta.tau * flat;
  ProcessMatrix out;
  for (int m = 0; m < kChiDim; ++m)
    for (int n = 0; n < kChiDim; ++n) out.chi(m, n) = chi_flat(kChiDim * m + n);
  out.chi = hermitian_part(out.chi);
  out.label = ChiLabel::noisy;
  return out;
}

LinearInversion chi_least_squares(const CountTable& table) {
  require_positive_total(table);
  const Design& d = design();
  const CountGrid& counts = observed_counts(table);
  Eigen::VectorXd p(kProcessRows);
  for (int j = 0; j < kInputStates; ++j)
    for (int l = 0; l < kProjectors; ++l) p(kProjectors * j + l) = counts(j, l) / table.total_per_basis;
  const Eigen::Matrix<double, 256, 1> h = d.process_pinv * p;

  LinearInversion out;
  out.degenerate = (counts.array() == 0.0).all();
  out.process.chi = chi_from_hermitian_coordinates(h);
  out.process.phi = table.phi;
  out.process.signal_ratio = table.signal_ratio;
  out.process.label = ChiLabel::noisy;
  return out;
}

void write_counts_csv(std::ostream& out, const CountTable& table) {
  out << "# counts";
  if (table.phi) out << " phi=" << format_double(*table.phi);
  out << " r=" << format_double(table.signal_ratio) << '\n';
  out << "input_index,projector_index,expected,count,N,seed\n";
  const CountGrid& counts = observed_counts(table);
  for (int j = 0; j < kInputStates; ++j) {
    for (int l = 0; l < kProjectors; ++l) {
      out << j << ',' << l << ',' << format_double(table.expected(j, l)) << ',' << format_double(counts(j, l)) << ','
          << format_double(table.total_per_basis) << ',' << table.seed << '\n';
    }
  }
}

void write_counts_csv(const std::filesystem::path& path, const CountTable& table) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_counts_csv(out, table);
  if (!out) throw IoError("write failed: " + path.string());
}

CountTable read_counts_csv(std::istream& in) {
  CountTable table;
  table.has_counts = true;
  Eigen::Array<bool, kInputStates, kProjectors> seen = Eigen::Array<bool, kInputStates, kProjectors>::Constant(false);
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  bool have_total = false;
  bool have_ratio = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream header(line.substr(1));
      std::string token;
      while (header >> token) {
        const auto eq = token.find('=');
        if (eq == std::string::npos) continue;
        double v = 0.0;
        if (!try_parse_double(std::string_view(token).substr(eq + 1), v)) {
          throw ParseError("bad header value '" + token + "'", line_no);
        }
        const auto key = token.substr(0, eq);
        if (key == "phi") table.phi = v;
        if (key == "r") {
          table.signal_ratio = v;
          have_ratio = true;
        }
      }
      continue;
    }
    if (!header_seen && line.rfind("input_index", 0) == 0) {
      header_seen = true;
      continue;
    }
    const auto cells = split_csv(line);
    if (cells.size() != 6) throw ParseError("expected 6 columns, found " + std::to_string(cells.size()), line_no);
    long long j = 0, l = 0;
    std::uint64_t seed = 0;
    double expected = 0.0, count = 0.0, total = 0.0;
    if (!try_parse_int(cells[0], j) || !try_parse_int(cells[1], l) || !try_parse_double(cells[2], expected) ||
        !try_parse_double(cells[3], count) || !try_parse_double(cells[4], total) || !try_parse_int(cells[5], seed)) {
      throw ParseError("malformed counts row", line_no);
    }
    if (j < 0 || j >= kInputStates || l < 0 || l >= kProjectors) throw ParseError("index out of range", line_no);
    if (expected < 0.0 || count < 0.0 || !(total > 0.0)) throw ParseError("negative count or non-positive N", line_no);
    if (seen(j, l)) throw ParseError("duplicate (input, projector) row", line_no);
    if (have_total && total != table.total_per_basis) throw ParseError("inconsistent N across rows", line_no);
    seen(j, l) = true;
    table.expected(j, l) = expected;
    table.counts(j, l) = count;
    table.total_per_basis = total;
    table.seed = seed;
    have_total = true;
  }
  if (!seen.all()) throw ParseError("counts file must cover all 576 (input, projector) pairs", line_no);
  if (!have_ratio) table.signal_ratio = table.total_per_basis / kFullSignalCounts;
  return table;
}

CountTable read_counts_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return read_counts_csv(in);
}

}  // namespace qpdn
