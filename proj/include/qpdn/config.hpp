#pragma once

// Run configuration: TOML-style "key = value" lines grouped by [section].
// Values are numbers, quoted strings or flat [a, b, ...] arrays of numbers.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "qpdn/autoencoder.hpp"
#include "qpdn/dataset.hpp"
#include "qpdn/mle.hpp"
#include "qpdn/param_extractor.hpp"

namespace qpdn {

inline constexpr int kConfigSchemaVersion = 1;

struct RunPaths {
  std::filesystem::path dataset = "data";
  std::filesystem::path models = "models";
  std::filesystem::path reports = "reports";
};

struct RunConfig {
  int schema_version = kConfigSchemaVersion;
  std::uint64_t seed = 20240101;
  unsigned threads = 1;
  bool quiet = false;
  std::vector<double> phis = default_phi_grid();
  std::vector<double> ratios = default_signal_ratios();
  int instances = kDefaultInstances;
  MleConfig mle;
  AutoencoderSpec autoencoder;
  FfnnSpec ffnn;
  RunPaths paths;

  GenerationConfig generation() const;
};

/// Throws ConfigError (with the line number) on syntax errors, unknown keys,
/// wrong value types or an unsupported schema_version.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);

/// The configuration as parseable text.
std::string to_config_text(const RunConfig& config);

}  // namespace qpdn
