#include "qpdn/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <variant>

#include "qpdn/errors.hpp"
#include "qpdn/text_format.hpp"

namespace qpdn {

namespace {

struct Number {
  double value = 0.0;
  std::string text;
};

using Value = std::variant<Number, std::string, std::vector<double>>;

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// Drops a trailing comment that is not inside a quoted string.
std::string_view strip_comment(std::string_view line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

Value parse_value(std::string_view text, std::size_t line) {
  text = trim(text);
  if (text.empty()) throw ConfigError("line " + std::to_string(line) + ": missing value");
  if (text.front() == '"') {
    if (text.size() < 2 || text.back() != '"') throw ConfigError("line " + std::to_string(line) + ": unterminated string");
    return std::string(text.substr(1, text.size() - 2));
  }
  if (text.front() == '[') {
    if (text.back() != ']') throw ConfigError("line " + std::to_string(line) + ": unterminated array");
    std::vector<double> values;
    const std::string_view body = trim(text.substr(1, text.size() - 2));
    if (!body.empty()) {
      for (auto cell : split_csv(body)) {
        double v = 0.0;
        if (!try_parse_double(trim(cell), v)) {
          throw ConfigError("line " + std::to_string(line) + ": bad array element '" + std::string(cell) + "'");
        }
        values.push_back(v);
      }
    }
    return values;
  }
  if (text == "true") return Number{1.0, "1"};
  if (text == "false") return Number{0.0, "0"};
  double v = 0.0;
  if (!try_parse_double(text, v)) throw ConfigError("line " + std::to_string(line) + ": bad value '" + std::string(text) + "'");
  return Number{v, std::string(text)};
}

struct Setter {
  std::function<void(const Value&, std::size_t)> apply;
};

double number(const Value& v, std::size_t line) {
  if (const Number* n = std::get_if<Number>(&v)) return n->value;
  throw ConfigError("line " + std::to_string(line) + ": expected a number");
}

template <typename Int>
Int integer(const Value& v, std::size_t line, Int lo) {
  const Number* n = std::get_if<Number>(&v);
  Int out{};
  if (!n || !try_parse_int(n->text, out) || out < lo) {
    throw ConfigError("line " + std::to_string(line) + ": expected an integer >= " + std::to_string(lo));
  }
  return out;
}

int array_integer(double d, std::size_t line) {
  if (d != std::floor(d) || d < 1.0 || d > 1e9) throw ConfigError("line " + std::to_string(line) + ": expected positive integers");
  return static_cast<int>(d);
}

std::vector<double> array(const Value& v, std::size_t line) {
  if (const auto* a = std::get_if<std::vector<double>>(&v)) return *a;
  throw ConfigError("line " + std::to_string(line) + ": expected an array");
}

template <std::size_t N>
std::array<int, N> int_array(const Value& v, std::size_t line) {
  const auto a = array(v, line);
  if (a.size() != N) throw ConfigError("line " + std::to_string(line) + ": expected " + std::to_string(N) + " values");
  std::array<int, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = array_integer(a[i], line);
  return out;
}

std::string string(const Value& v, std::size_t line) {
  if (const auto* s = std::get_if<std::string>(&v)) return *s;
  throw ConfigError("line " + std::to_string(line) + ": expected a quoted string");
}

std::map<std::string, Setter> setters(RunConfig& c) {
  using V = const Value&;
  using L = std::size_t;
  return {
      {"schema_version", {[&](V v, L l) { c.schema_version = integer<int>(v, l, 1); }}},
      {"seed", {[&](V v, L l) { c.seed = integer<std::uint64_t>(v, l, 0); }}},
      {"threads", {[&](V v, L l) { c.threads = integer<unsigned>(v, l, 1); }}},
      {"quiet", {[&](V v, L l) { c.quiet = number(v, l) != 0.0; }}},
      {"dataset.phis", {[&](V v, L l) { c.phis = array(v, l); }}},
      {"dataset.ratios", {[&](V v, L l) { c.ratios = array(v, l); }}},
      {"dataset.instances", {[&](V v, L l) { c.instances = integer<int>(v, l, 1); }}},
      {"mle.max_iters", {[&](V v, L l) { c.mle.max_iters = integer<int>(v, l, 1); }}},
      {"mle.grad_tol", {[&](V v, L l) { c.mle.grad_tol = number(v, l); }}},
      {"mle.rel_tol", {[&](V v, L l) { c.mle.rel_tol = number(v, l); }}},
      {"mle.sigma_floor", {[&](V v, L l) { c.mle.sigma_floor = number(v, l); }}},
      {"mle.history", {[&](V v, L l) { c.mle.history = integer<int>(v, l, 1); }}},
      {"autoencoder.kernel", {[&](V v, L l) { c.autoencoder.kernel = integer<int>(v, l, 1); }}},
      {"autoencoder.filters", {[&](V v, L l) { c.autoencoder.filters = int_array<3>(v, l); }}},
      {"autoencoder.stride", {[&](V v, L l) { c.autoencoder.stride = integer<int>(v, l, 1); }}},
      {"autoencoder.epochs", {[&](V v, L l) { c.autoencoder.epochs = integer<int>(v, l, 1); }}},
      {"autoencoder.patience", {[&](V v, L l) { c.autoencoder.patience = integer<int>(v, l, 1); }}},
      {"autoencoder.batch_size", {[&](V v, L l) { c.autoencoder.batch_size = integer<int>(v, l, 2); }}},
      {"autoencoder.learning_rate", {[&](V v, L l) { c.autoencoder.learning_rate = number(v, l); }}},
      {"autoencoder.lr_decay", {[&](V v, L l) { c.autoencoder.lr_decay = number(v, l); }}},
      {"autoencoder.lr_patience", {[&](V v, L l) { c.autoencoder.lr_patience = integer<int>(v, l, 1); }}},
      {"autoencoder.seed", {[&](V v, L l) { c.autoencoder.seed = integer<std::uint64_t>(v, l, 0); }}},
      {"ffnn.trunk", {[&](V v, L l) { c.ffnn.trunk = int_array<2>(v, l); }}},
      {"ffnn.head_hidden", {[&](V v, L l) { c.ffnn.head_hidden = integer<int>(v, l, 1); }}},
      {"ffnn.forks", {[&](V v, L l) { c.ffnn.forks = integer<int>(v, l, 1); }}},
      {"ffnn.epochs", {[&](V v, L l) { c.ffnn.epochs = integer<int>(v, l, 1); }}},
      {"ffnn.patience", {[&](V v, L l) { c.ffnn.patience = integer<int>(v, l, 1); }}},
      {"ffnn.batch_size", {[&](V v, L l) { c.ffnn.batch_size = integer<int>(v, l, 2); }}},
      {"ffnn.learning_rate", {[&](V v, L l) { c.ffnn.learning_rate = number(v, l); }}},
      {"ffnn.seed", {[&](V v, L l) { c.ffnn.seed = integer<std::uint64_t>(v, l, 0); }}},
      {"paths.dataset", {[&](V v, L l) { c.paths.dataset = string(v, l); }}},
      {"paths.models", {[&](V v, L l) { c.paths.models = string(v, l); }}},
      {"paths.reports", {[&](V v, L l) { c.paths.reports = string(v, l); }}},
  };
}

std::string join(const std::vector<double>& values) {
  std::string s = "[";
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) s += ", ";
    s += format_double(values[i]);
  }
  return s + "]";
}

template <std::size_t N>
std::string join(const std::array<int, N>& values) {
  return join(std::vector<double>(values.begin(), values.end()));
}

}  // namespace

GenerationConfig RunConfig::generation() const {
  GenerationConfig g;
  g.phis = phis;
  g.ratios = ratios;
  g.instances = instances;
  g.master_seed = seed;
  g.threads = threads;
  return g;
}

RunConfig parse_config(std::string_view text) {
  RunConfig config;
  auto table = setters(config);
  std::string section;
  std::map<std::string, std::size_t> seen;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string_view line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(line_no) + ": malformed section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = std::string(trim(line.substr(0, eq)));
    const std::string full = section.empty() ? key : section + "." + key;
    const auto it = table.find(full);
    if (it == table.end()) throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + full + "'");
    if (seen.contains(full)) throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + full + "'");
    seen[full] = line_no;
    it->second.apply(parse_value(line.substr(eq + 1), line_no), line_no);
  }
  if (config.schema_version != kConfigSchemaVersion) {
    throw ConfigError("unsupported config schema_version " + std::to_string(config.schema_version));
  }
  if (config.phis.empty()) throw ConfigError("dataset.phis must not be empty");
  if (config.ratios.empty()) throw ConfigError("dataset.ratios must not be empty");
  for (double r : config.ratios) {
    if (!(r > 0.0)) throw ConfigError("dataset.ratios must be positive");
  }
  try {
    config.autoencoder.validate();
    config.ffnn.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

std::string to_config_text(const RunConfig& c) {
  std::ostringstream out;
  out << "schema_version = " << c.schema_version << '\n'
      << "seed = " << c.seed << '\n'
      << "threads = " << c.threads << '\n'
      << "quiet = " << (c.quiet ? "true" : "false") << "\n\n"
      << "[dataset]\n"
      << "phis = " << join(c.phis) << '\n'
      << "ratios = " << join(c.ratios) << '\n'
      << "instances = " << c.instances << "\n\n"
      << "[mle]\n"
      << "max_iters = " << c.mle.max_iters << '\n'
      << "grad_tol = " << format_double(c.mle.grad_tol) << '\n'
      << "rel_tol = " << format_double(c.mle.rel_tol) << '\n'
      << "sigma_floor = " << format_double(c.mle.sigma_floor) << '\n'
      << "history = " << c.mle.history << "\n\n"
      << "[autoencoder]\n"
      << "kernel = " << c.autoencoder.kernel << '\n'
      << "filters = " << join(c.autoencoder.filters) << '\n'
      << "stride = " << c.autoencoder.stride << '\n'
      << "epochs = " << c.autoencoder.epochs << '\n'
      << "patience = " << c.autoencoder.patience << '\n'
      << "batch_size = " << c.autoencoder.batch_size << '\n'
      << "learning_rate = " << format_double(c.autoencoder.learning_rate) << '\n'
      << "lr_decay = " << format_double(c.autoencoder.lr_decay) << '\n'
      << "lr_patience = " << c.autoencoder.lr_patience << '\n'
      << "seed = " << c.autoencoder.seed << "\n\n"
      << "[ffnn]\n"
      << "trunk = " << join(c.ffnn.trunk) << '\n'
      << "head_hidden = " << c.ffnn.head_hidden << '\n'
      << "forks = " << c.ffnn.forks << '\n'
      << "epochs = " << c.ffnn.epochs << '\n'
      << "patience = " << c.ffnn.patience << '\n'
      << "batch_size = " << c.ffnn.batch_size << '\n'
      << "learning_rate = " << format_double(c.ffnn.learning_rate) << '\n'
      << "seed = " << c.ffnn.seed << "\n\n"
      << "[paths]\n"
      << "dataset = \"" << c.paths.dataset.string() << "\"\n"
      << "models = \"" << c.paths.models.string() << "\"\n"
      << "reports = \"" << c.paths.reports.string() << "\"\n";
  return out.str();
}

}  // namespace qpdn
