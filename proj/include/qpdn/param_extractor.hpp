#pragma once

// Forked feed-forward regressor from chi to the control phase (degrees) and
// the residue study with the +-7 degree gate.

#include <array>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "qpdn/autoencoder.hpp"
#include "qpdn/dataset.hpp"
#include "qpdn/nn/model.hpp"

namespace qpdn {

struct FfnnSpec {
  std::array<int, 2> trunk{256, 128};
  int head_hidden = 64;
  int forks = 1;
  int epochs = 200;
  int patience = 20;
  int batch_size = 64;  // half theoretical, half denoised
  double learning_rate = 1e-3;
  std::uint64_t seed = 11;

  void validate() const;
};

/// Network output y maps to degrees as offset + scale * y.
struct OutputAffine {
  double offset = 0.0;
  double scale = 1.0;
};

struct PhiExtractor {
  FfnnSpec spec;
  NormalizationStats stats;
  OutputAffine affine;
  nn::Forked net;
  TrainingLog log;
};

/// trunk: dense(512, t0) relu dense(t0, t1) relu; each head: dense(t1, h) relu dense(h, 1).
PhiExtractor build_extractor(const FfnnSpec& spec, const NormalizationStats& stats, OutputAffine affine);

struct PhiExample {
  ChiMatrix theoretical;
  ChiMatrix denoised;
  double phi_degrees = 0.0;
  double signal_ratio = 1.0;
};

/// Pairs records with their denoised matrices (same order).
std::vector<PhiExample> phi_examples(const std::vector<const Record*>& records,
                                     const std::vector<ProcessMatrix>& denoised);

/// Each batch holds the theoretical and the denoised matrix of the same
/// records. Early stopping on the MSE of denoised validation inputs.
PhiExtractor train_ffnn(const FfnnSpec& spec, const NormalizationStats& stats, const std::vector<PhiExample>& train,
                        const std::vector<PhiExample>& val, const EpochCallback& on_epoch = {});

double extract_phi(PhiExtractor& model, const ProcessMatrix& chi);
std::vector<double> extract_all(PhiExtractor& model, const std::vector<const ProcessMatrix*>& chis,
                                std::size_t batch = 256);

void save_extractor(const std::filesystem::path& path, PhiExtractor& model);
PhiExtractor load_extractor(const std::filesystem::path& path);

inline constexpr double kResidueGate = 7.0;

/// Into [-180, 180).
double wrap_degrees(double d);
/// Grid value at the smallest circular distance from `degrees`.
double snap_to_grid(double degrees, const std::vector<double>& grid_degrees);

struct ResidueRecord {
  double phi_true = 0.0;
  double phi_pred = 0.0;
  double residue = 0.0;  // wrap(pred - true)
  double signal_ratio = 1.0;
  bool success = false;
  bool snap_correct = false;
};

struct RatioBreakdown {
  double signal_ratio = 1.0;
  std::size_t count = 0;
  double success_rate = 0.0;
  double snap_accuracy = 0.0;
};

struct ResidueReport {
  std::vector<ResidueRecord> records;
  double gate = kResidueGate;
  double success_rate = 0.0;
  double snap_accuracy = 0.0;
  std::vector<RatioBreakdown> by_ratio;  // descending r

  const RatioBreakdown* ratio(double r) const;
  std::string to_csv() const;
  std::string summary_json() const;
};

/// Throws std::invalid_argument on empty or mismatched inputs.
ResidueReport residue_report(const std::vector<double>& phi_true_degrees, const std::vector<double>& phi_pred_degrees,
                             const std::vector<double>& signal_ratios, const std::vector<double>& grid_degrees,
                             double gate = kResidueGate);

inline double to_degrees(double radians) { return radians * 180.0 / std::numbers::pi; }

}  // namespace qpdn
