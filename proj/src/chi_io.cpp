#include "qpdn/chi_io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "qpdn/errors.hpp"
#include "qpdn/text_format.hpp"

namespace qpdn {

void write_chi_csv(std::ostream& out, const ProcessMatrix& m) {
  out << "# chi";
  if (m.phi) out << " phi=" << format_double(*m.phi);
  if (m.signal_ratio) out << " r=" << format_double(*m.signal_ratio);
  out << " label=" << to_string(m.label) << '\n';
  for (int row = 0; row < kChiDim; ++row) {
    for (int col = 0; col < kChiDim; ++col) {
      if (col) out << ',';
      out << format_double(m.chi(row, col).real()) << ',' << format_double(m.chi(row, col).imag());
    }
    out << '\n';
  }
}

void write_chi_csv(const std::filesystem::path& path, const ProcessMatrix& m) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_chi_csv(out, m);
  if (!out) throw IoError("write failed: " + path.string());
}

ProcessMatrix read_chi_csv(std::istream& in) {
  ProcessMatrix m;
  m.label = ChiLabel::noisy;
  std::string line;
  std::size_t line_no = 0;
  int row = 0;
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
        const std::string key = token.substr(0, eq);
        const std::string value = token.substr(eq + 1);
        try {
          if (key == "phi") m.phi = parse_double(value);
          else if (key == "r") m.signal_ratio = parse_double(value);
          else if (key == "label") m.label = chi_label_from_string(value);
        } catch (const std::exception& e) {
          throw ParseError(std::string("bad header field: ") + e.what(), line_no);
        }
      }
      continue;
    }
    if (row >= kChiDim) throw ParseError("more than 16 data rows", line_no);
    const std::vector<std::string_view> cells = split_csv(line);
    if (cells.size() != 2 * kChiDim) {
      throw ParseError("expected 32 columns, found " + std::to_string(cells.size()), line_no);
    }
    for (int col = 0; col < kChiDim; ++col) {
      double re = 0.0;
      double im = 0.0;
      if (!try_parse_double(cells[2 * col], re) || !try_parse_double(cells[2 * col + 1], im)) {
        throw ParseError("non-numeric entry in column " + std::to_string(2 * col), line_no);
      }
      m.chi(row, col) = Complex{re, im};
    }
    ++row;
  }
  if (row != kChiDim) throw ParseError("expected 16 data rows, found " + std::to_string(row), line_no);
  return m;
}

ProcessMatrix read_chi_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return read_chi_csv(in);
}

}  // namespace qpdn
