#include "qpdn/reporting.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "qpdn/errors.hpp"
#include "qpdn/text_format.hpp"

namespace qpdn {

double Heatmap::max_abs() const { return std::max(re.cwiseAbs().maxCoeff(), im.cwiseAbs().maxCoeff()); }

Heatmap diff_heatmap(const ProcessMatrix& a, const ProcessMatrix& b) {
  Heatmap h;
  const ChiMatrix d = a.chi - b.chi;
  h.re = d.real();
  h.im = d.imag();
  h.source_a = std::string(to_string(a.label));
  h.source_b = std::string(to_string(b.label));
  return h;
}

double hermitian_difference_defect(const Heatmap& h) {
  const double re = (h.re - h.re.transpose()).cwiseAbs().maxCoeff();
  const double im = (h.im + h.im.transpose()).cwiseAbs().maxCoeff();
  return std::max(re, im);
}

std::vector<std::uint8_t> grid_to_gray(const Grid& g) {
  const double scale = g.cwiseAbs().maxCoeff();
  std::vector<std::uint8_t> pixels(static_cast<std::size_t>(g.size()), 128);
  if (!(scale > 0.0)) return pixels;
  for (int r = 0; r < kChiDim; ++r) {
    for (int c = 0; c < kChiDim; ++c) {
      const double v = std::lround(127.5 + 127.5 * g(r, c) / scale);
      pixels[static_cast<std::size_t>(r * kChiDim + c)] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
    }
  }
  return pixels;
}

void write_grid_csv(const std::filesystem::path& path, const Grid& g) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (int r = 0; r < kChiDim; ++r) {
    for (int c = 0; c < kChiDim; ++c) {
      if (c) out << ',';
      out << format_double(g(r, c));
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

Grid read_grid_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  Grid g;
  std::string line;
  int row = 0;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (row >= kChiDim) throw ParseError("heatmap: more than 16 rows", line_no);
    const auto cells = split_csv(line);
    if (cells.size() != kChiDim) throw ParseError("heatmap: expected 16 columns", line_no);
    for (int c = 0; c < kChiDim; ++c) {
      if (!try_parse_double(cells[c], g(row, c))) throw ParseError("heatmap: bad number", line_no);
    }
    ++row;
  }
  if (row != kChiDim) throw ParseError("heatmap: expected 16 rows", line_no);
  return g;
}

void write_pgm(const std::filesystem::path& path, const Grid& g) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const auto pixels = grid_to_gray(g);
  out << "P5\n" << kChiDim << ' ' << kChiDim << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<std::filesystem::path> write_heatmap(const Heatmap& h, const std::filesystem::path& stem) {
  const std::string base = stem.string();
  std::vector<std::filesystem::path> paths{base + "_re.csv", base + "_im.csv", base + "_re.pgm", base + "_im.pgm"};
  write_grid_csv(paths[0], h.re);
  write_grid_csv(paths[1], h.im);
  write_pgm(paths[2], h.re);
  write_pgm(paths[3], h.im);
  return paths;
}

FidelityCell summarize(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("summarize: no values");
  FidelityCell cell;
  cell.count = values.size();
  cell.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - cell.mean) * (v - cell.mean);
    cell.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return cell;
}

FidelityTable fidelity_table(const std::vector<FidelitySample>& samples, const std::vector<double>& phis,
                             const std::vector<std::string>& methods) {
  FidelityTable table;
  table.phis = phis;
  table.methods = methods;
  for (double phi : phis) {
    std::vector<FidelityCell> row;
    for (const auto& method : methods) {
      std::vector<double> values;
      for (const auto& s : samples) {
        if (s.method == method && std::abs(s.phi - phi) <= 1e-9) values.push_back(s.fidelity);
      }
      if (values.empty()) {
        throw std::invalid_argument("fidelity_table: no samples for phi=" + phi_label(phi) + ", method=" + method);
      }
      row.push_back(summarize(values));
    }
    table.cells.push_back(std::move(row));
  }
  return table;
}

std::string FidelityTable::to_csv() const {
  std::ostringstream out;
  out << "phi,phi_label";
  for (const auto& m : methods) out << ',' << m << "_mean," << m << "_std," << m << "_n";
  out << '\n';
  for (std::size_t i = 0; i < phis.size(); ++i) {
    out << format_double(phis[i]) << ',' << phi_label(phis[i]);
    for (const auto& c : cells[i]) out << ',' << format_double(c.mean) << ',' << format_double(c.stddev) << ',' << c.count;
    out << '\n';
  }
  return out.str();
}

std::string FidelityTable::to_text() const {
  std::ostringstream out;
  out << std::left << std::setw(8) << "phi";
  for (const auto& m : methods) out << std::setw(20) << m;
  out << '\n';
  for (std::size_t i = 0; i < phis.size(); ++i) {
    out << std::setw(8) << phi_label(phis[i]);
    for (const auto& c : cells[i]) {
      std::ostringstream cell;
      cell << std::fixed << std::setprecision(3) << c.mean << " +- " << c.stddev;
      out << std::setw(20) << cell.str();
    }
    out << '\n';
  }
  return out.str();
}

std::string phi_label(double phi) {
  const double twelfths = phi / (std::numbers::pi / 12.0);
  const long n = std::lround(twelfths);
  if (std::abs(twelfths - static_cast<double>(n)) > 1e-9) return format_double(phi);
  if (n == 0) return "0";
  const long g = std::gcd(n, 12L);
  const long num = n / g;
  const long den = 12 / g;
  std::string s = num == 1 ? "" : std::to_string(num);
  s += "pi";
  if (den != 1) s += "/" + std::to_string(den);
  return s;
}

}  // namespace qpdn
