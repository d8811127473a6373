#pragma once

// The noisy/theoretical chi dataset: generation over a (phi, r, instance)
// grid, stratified 75/10/15 splits, min/max normalisation and on-disk format.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "qpdn/quantum_core.hpp"
#include "qpdn/tomography.hpp"

namespace qpdn {

enum class Split { train, val, test };

std::string_view to_string(Split split);

struct Record {
  ProcessMatrix noisy;
  ProcessMatrix target;
  double phi = 0.0;
  double signal_ratio = 1.0;
  int instance = 0;
  Split split = Split::train;
};

/// Affine map x -> (x - min) / (max - min) applied to every real and
/// imaginary component.
struct NormalizationStats {
  double min = 0.0;
  double max = 1.0;

  double normalize(double x) const { return (x - min) / (max - min); }
  double rescale(double y) const { return min + y * (max - min); }
};

struct SplitCounts {
  std::size_t train = 0, val = 0, test = 0;
};

struct Dataset {
  std::vector<Record> records;
  std::optional<NormalizationStats> stats;
  std::uint64_t master_seed = 0;
  std::vector<double> phis;
  std::vector<double> ratios;
  int instances = 0;

  SplitCounts split_counts() const;
  std::vector<const Record*> slice(Split split) const;
};

/// The 15 listed control-phase angles plus 2 pi.
std::vector<double> default_phi_grid();
std::vector<double> default_signal_ratios();
inline constexpr int kDefaultInstances = 500;

struct GenerationConfig {
  std::vector<double> phis = default_phi_grid();
  std::vector<double> ratios = default_signal_ratios();
  int instances = kDefaultInstances;
  std::uint64_t master_seed = 20240101;
  unsigned threads = 1;
};

/// Number of (train, val, test) records in a stratum of size n:
/// round(0.75 n), round(0.10 n), remainder. Instances are assigned in order.
SplitCounts stratum_split(int n);

/// Per-record Poisson seed: derive_seed(master, {phi index, ratio index, instance}).
std::uint64_t record_seed(std::uint64_t master, std::size_t phi_index, std::size_t ratio_index, int instance);

/// Simulates counts for every (phi, r, instance), reconstructs the noisy chi by
/// direct least squares and pairs it with the ideal chi. Records are ordered
/// phi-major, then r, then instance, independent of the thread count.
Dataset generate_dataset(const GenerationConfig& config);

/// Re-simulates the counts a record was reconstructed from (same seed, same
/// draws). Throws std::invalid_argument if its phi or r is not on the grid.
CountTable record_counts(const Dataset& dataset, const Record& record);

/// Global min/max over all components of the TRAIN split's noisy matrices.
/// Throws std::invalid_argument on an empty split or when min == max.
NormalizationStats compute_normalization(const Dataset& dataset);

/// Returns the dataset with `stats` filled in. Records stay in physical units;
/// normalised images are produced on demand (see autoencoder).
Dataset normalize(Dataset dataset);

/// Directory layout: manifest.json, train.csv, val.csv, test.csv. Records are
/// read back in generation order.
void write_dataset(const std::filesystem::path& dir, const Dataset& dataset);
Dataset read_dataset(const std::filesystem::path& dir);

inline constexpr int kDatasetSchemaVersion = 1;

}  // namespace qpdn
