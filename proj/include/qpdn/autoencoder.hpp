#pragma once

// Convolutional denoising autoencoder over chi viewed as a 16x16x2 image
// (channel 0 real part, channel 1 imaginary part), and the kernel-size sweep.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "qpdn/dataset.hpp"
#include "qpdn/nn/model.hpp"
#include "qpdn/reporting.hpp"

namespace qpdn {

struct AutoencoderSpec {
  int kernel = 3;
  std::array<int, 3> filters{128, 64, 32};
  int stride = 2;
  int epochs = 200;
  int patience = 20;
  int batch_size = 64;
  double learning_rate = 1e-3;
  /// Multiply the step by lr_decay after lr_patience epochs without a new
  /// best validation loss. 1 disables the schedule.
  double lr_decay = 1.0;
  int lr_patience = 5;
  std::uint64_t seed = 7;

  void validate() const;
};

/// conv(f0) relu bn, conv(f1) relu bn, conv(f2) relu bn,
/// tconv(f1) relu bn, tconv(f0) relu bn, tconv(2) sigmoid.
std::vector<nn::LayerSpec> autoencoder_layers(const AutoencoderSpec& spec);

inline constexpr std::size_t kImageValues = 2 * kChiDim * kChiDim;

/// Normalised NHWC image of one chi matrix, written to `out[0..512)`.
void chi_to_image(const ChiMatrix& chi, const NormalizationStats& stats, double* out);
ChiMatrix image_to_chi(const double* image, const NormalizationStats& stats);
/// [n, 16, 16, 2] batch.
nn::Tensor chi_images(const std::vector<const ProcessMatrix*>& chis, const NormalizationStats& stats);

struct EpochLog {
  int epoch = 0;  // 1-based
  double train_mse = 0.0;
  double val_mse = 0.0;
};

struct TrainingLog {
  std::vector<EpochLog> epochs;
  int best_epoch = 0;
  double best_val_mse = 0.0;
  bool early_stopped = false;
  double seconds = 0.0;  // wall time; not saved with the model
};

struct Autoencoder {
  AutoencoderSpec spec;
  NormalizationStats stats;
  nn::Sequential net;
  TrainingLog log;
};

/// Freshly initialised network (weights from derive_seed(spec.seed, {0})).
Autoencoder build_autoencoder(const AutoencoderSpec& spec, const NormalizationStats& stats);

using EpochCallback = std::function<void(const EpochLog&)>;

/// Minimises MSE between the network output on normalised noisy images and the
/// normalised theoretical images of the train split. Early stopping on
/// validation MSE; the returned network is the best-validation checkpoint.
/// Throws DivergenceError naming the epoch if training produces NaN/Inf.
Autoencoder train_autoencoder(const AutoencoderSpec& spec, const Dataset& dataset, const EpochCallback& on_epoch = {});

/// normalise -> forward (infer) -> rescale -> Hermitian part. Label denoised.
ProcessMatrix denoise(Autoencoder& model, const ProcessMatrix& noisy);
std::vector<ProcessMatrix> denoise_all(Autoencoder& model, const std::vector<const ProcessMatrix*>& noisy,
                                       std::size_t batch = 256);

void save_autoencoder(const std::filesystem::path& path, Autoencoder& model);
Autoencoder load_autoencoder(const std::filesystem::path& path);

struct SweepEntry {
  int kernel = 0;
  double val_mse = 0.0;
  double mean_test_fidelity = 0.0;
  int best_epoch = 0;
  Heatmap heatmap;  // theory - denoised on the sweep's reference record
};

struct SweepReport {
  std::vector<SweepEntry> entries;
  int best_k = 0;
  Heatmap noisy_heatmap;  // theory - noisy on the reference record
  std::size_t reference_record = 0;
};

/// Lowest validation MSE; ties go to the smaller kernel.
int select_best_kernel(const std::vector<SweepEntry>& entries);

/// Trains one model per kernel with identical seeds and data order. The
/// reference record for heatmaps is the first test record at the lowest
/// signal ratio. Entries are independent jobs spread over `threads`.
SweepReport kernel_sweep(const AutoencoderSpec& base, const Dataset& dataset, const std::vector<int>& kernels,
                         unsigned threads = 1);

}  // namespace qpdn
