#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace qpdn {

/// Malformed input file. `line` is 1-based, 0 when not line-oriented.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class IoError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// NaN or Inf reached a loss, activation or gradient during training.
class DivergenceError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace qpdn
