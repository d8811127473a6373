#pragma once

// Difference heatmaps, fidelity tables and their file formats.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "qpdn/quantum_core.hpp"

namespace qpdn {

using Grid = Eigen::Matrix<double, kChiDim, kChiDim, Eigen::RowMajor>;

/// Real and imaginary channels of a 16x16 complex matrix (usually a difference).
struct Heatmap {
  Grid re = Grid::Zero();
  Grid im = Grid::Zero();
  std::string source_a;
  std::string source_b;

  double max_abs() const;
};

/// Channel-wise a - b.
Heatmap diff_heatmap(const ProcessMatrix& a, const ProcessMatrix& b);

/// Largest violation of "re symmetric, im antisymmetric": the structure of the
/// difference of two Hermitian matrices.
double hermitian_difference_defect(const Heatmap& h);
inline bool has_hermitian_symmetry(const Heatmap& h, double tol = 1e-9) {
  return hermitian_difference_defect(h) <= tol;
}

/// Signed grid to 8-bit gray: [-max|v|, +max|v|] -> [0, 255], zero -> 128.
std::vector<std::uint8_t> grid_to_gray(const Grid& g);

void write_grid_csv(const std::filesystem::path& path, const Grid& g);
Grid read_grid_csv(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const Grid& g);

/// Writes <stem>_re.csv, <stem>_im.csv, <stem>_re.pgm, <stem>_im.pgm and
/// returns the paths in that order.
std::vector<std::filesystem::path> write_heatmap(const Heatmap& h, const std::filesystem::path& stem);

struct FidelityCell {
  std::size_t count = 0;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation, 0 for a single value
};

/// Mean and sample standard deviation. Throws std::invalid_argument when empty.
FidelityCell summarize(const std::vector<double>& values);

struct FidelitySample {
  double phi = 0.0;
  std::string method;
  double fidelity = 0.0;
};

struct FidelityTable {
  std::vector<double> phis;
  std::vector<std::string> methods;
  std::vector<std::vector<FidelityCell>> cells;  // [phi][method]

  std::string to_csv() const;
  std::string to_text() const;
};

/// Groups samples by (phi, method); phis match within 1e-9. Throws
/// std::invalid_argument if any requested cell has no samples.
FidelityTable fidelity_table(const std::vector<FidelitySample>& samples, const std::vector<double>& phis,
                             const std::vector<std::string>& methods);

/// "pi/2", "5pi/3", "2pi" ... for multiples of pi/12, otherwise the decimal value.
std::string phi_label(double phi);

}  // namespace qpdn
