#pragma once

// Chi matrix CSV: 16 rows x 32 columns (re, im interleaved, row-major),
// 17 significant digits, optional "# chi phi=<rad> r=<ratio> label=<label>".

#include <filesystem>
#include <iosfwd>

#include "qpdn/quantum_core.hpp"

namespace qpdn {

void write_chi_csv(std::ostream& out, const ProcessMatrix& m);
void write_chi_csv(const std::filesystem::path& path, const ProcessMatrix& m);

/// Throws ParseError (with line number) or IoError.
ProcessMatrix read_chi_csv(std::istream& in);
ProcessMatrix read_chi_csv(const std::filesystem::path& path);

}  // namespace qpdn
