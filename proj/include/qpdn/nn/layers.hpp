#pragma once

// Layers with hand-written reverse passes. Every layer caches what its
// backward pass needs during forward(); backward() accumulates into the
// parameter gradients and returns the gradient with respect to the input.

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "qpdn/nn/tensor.hpp"
#include "qpdn/random.hpp"

namespace qpdn::nn {

enum class Mode { train, infer };

enum class LayerKind { conv, tconv, batchnorm, relu, sigmoid, dense };

std::string_view to_string(LayerKind kind);
LayerKind layer_kind_from_string(std::string_view text);

/// Everything needed to rebuild a layer (weights excluded).
struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  int kernel = 0;
  int stride = 1;
  int in_channels = 0;   // conv/tconv channels, dense input width
  int out_channels = 0;  // conv/tconv filters, dense output width
  int channels = 0;      // batchnorm
  double momentum = 0.9;
  double epsilon = 1e-5;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual LayerSpec spec() const = 0;
  virtual Tensor forward(const Tensor& x, Mode mode) = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual std::vector<Param*> params() { return {}; }
  /// Non-trainable state that is serialised (batchnorm running statistics).
  virtual std::vector<Tensor*> buffers() { return {}; }
  virtual std::unique_ptr<Layer> clone() const = 0;
  /// Fan-in-scaled uniform weights, zero biases.
  virtual void initialize(Rng&) {}
};

/// Geometry of a "same-ceil" strided convolution over an H x W x C image:
/// output ceil(H / stride), zero padding split floor/ceil (extra on bottom/right).
struct ConvGeometry {
  int height = 0, width = 0, channels = 0;
  int kernel = 1, stride = 1;
  int out_height = 0, out_width = 0;
  int pad_top = 0, pad_left = 0;

  static ConvGeometry same_ceil(int height, int width, int channels, int kernel, int stride);
  int patch_size() const { return kernel * kernel * channels; }
};

/// Cross-correlation. Weights [k, k, Cin, Cout], bias [Cout]; NHWC in and out.
class Conv2D final : public Layer {
 public:
  Conv2D(int in_channels, int out_channels, int kernel, int stride);
  LayerSpec spec() const override;
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Param*> params() override { return {&weights_, &bias_}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv2D>(*this); }
  void initialize(Rng& rng) override;

  Param& weights() { return weights_; }
  Param& bias() { return bias_; }

 private:
  int in_channels_, out_channels_, kernel_, stride_;
  Param weights_, bias_;
  ConvGeometry geometry_;
  std::size_t batch_ = 0;
  std::vector<double> columns_;
};

/// Exact adjoint of Conv2D with the same (kernel, stride, padding), mapping an
/// h x w x Cin image to (h stride) x (w stride) x Cout. Weights are stored in
/// the forward-convolution layout [k, k, Cout, Cin]; bias [Cout].
class ConvTranspose2D final : public Layer {
 public:
  ConvTranspose2D(int in_channels, int out_channels, int kernel, int stride);
  LayerSpec spec() const override;
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Param*> params() override { return {&weights_, &bias_}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<ConvTranspose2D>(*this); }
  void initialize(Rng& rng) override;

  Param& weights() { return weights_; }
  Param& bias() { return bias_; }

 private:
  int in_channels_, out_channels_, kernel_, stride_;
  Param weights_, bias_;
  ConvGeometry geometry_;
  std::size_t batch_ = 0;
  Tensor input_;
};

/// Per-channel normalisation over every axis but the last. Train mode uses
/// batch statistics (biased variance) and folds them into the running
/// averages: running = momentum * running + (1 - momentum) * batch.
class BatchNorm final : public Layer {
 public:
  explicit BatchNorm(int channels, double momentum = 0.9, double epsilon = 1e-5);
  LayerSpec spec() const override;
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Param*> params() override { return {&scale_, &shift_}; }
  std::vector<Tensor*> buffers() override { return {&running_mean_, &running_var_}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<BatchNorm>(*this); }
  void initialize(Rng&) override;

  Tensor& running_mean() { return running_mean_; }
  Tensor& running_var() { return running_var_; }
  Param& scale() { return scale_; }
  Param& shift() { return shift_; }

 private:
  int channels_;
  double momentum_, epsilon_;
  Param scale_, shift_;
  Tensor running_mean_, running_var_;
  Tensor normalized_;
  std::vector<double> inv_std_;
  bool batch_statistics_ = true;
};

class ReLU final : public Layer {
 public:
  LayerSpec spec() const override { return {.kind = LayerKind::relu}; }
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<ReLU>(*this); }

 private:
  Tensor input_;
};

class Sigmoid final : public Layer {
 public:
  LayerSpec spec() const override { return {.kind = LayerKind::sigmoid}; }
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Sigmoid>(*this); }

 private:
  Tensor output_;
};

/// Fully connected: [B, in] -> [B, out]; weights [in, out], bias [out].
class Dense final : public Layer {
 public:
  Dense(int in_features, int out_features);
  LayerSpec spec() const override;
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Param*> params() override { return {&weights_, &bias_}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Dense>(*this); }
  void initialize(Rng& rng) override;

  Param& weights() { return weights_; }
  Param& bias() { return bias_; }

 private:
  int in_, out_;
  Param weights_, bias_;
  Tensor input_;
};

std::unique_ptr<Layer> make_layer(const LayerSpec& spec);

}  // namespace qpdn::nn
