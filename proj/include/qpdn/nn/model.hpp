#pragma once

#include <memory>
#include <vector>

#include "qpdn/nn/layers.hpp"

namespace qpdn::nn {

/// Anything trainable by train_step: a fixed sequence of layers or a fork of them.
class Network {
 public:
  virtual ~Network() = default;
  virtual Tensor forward(const Tensor& x, Mode mode) = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual std::vector<Param*> params() = 0;
  virtual std::vector<Tensor*> buffers() = 0;

  void zero_grad();
  std::size_t parameter_count();
};

class Sequential final : public Network {
 public:
  Sequential() = default;
  explicit Sequential(const std::vector<LayerSpec>& specs);
  Sequential(const Sequential& other);
  Sequential& operator=(const Sequential& other);
  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;

  void add(std::unique_ptr<Layer> layer);
  void initialize(Rng& rng);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Param*> params() override;
  std::vector<Tensor*> buffers() override;

  std::size_t size() const noexcept { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_.at(i); }
  std::vector<LayerSpec> specs() const;

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

/// Shared trunk feeding several heads; head outputs are concatenated along
/// the last axis, one column per head.
class Forked final : public Network {
 public:
  Forked() = default;
  Forked(Sequential trunk, std::vector<Sequential> heads);

  void initialize(Rng& rng);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Param*> params() override;
  std::vector<Tensor*> buffers() override;

  Sequential& trunk() { return trunk_; }
  std::vector<Sequential>& heads() { return heads_; }

 private:
  Sequential trunk_;
  std::vector<Sequential> heads_;
  std::vector<std::size_t> head_widths_;
};

struct Loss {
  double value = 0.0;
  Tensor grad;  // d value / d prediction
};

/// Mean over every element of (prediction - target)^2.
Loss mse_loss(const Tensor& prediction, const Tensor& target);

class Adam;

/// One forward/backward/update in train mode. Returns the pre-update loss.
/// Throws DivergenceError if the loss or any gradient is not finite.
double train_step(Network& net, Adam& optimizer, const Tensor& input, const Tensor& target);

/// Mean loss over `input` evaluated in infer mode, in chunks of `batch` rows.
double evaluate_mse(Network& net, const Tensor& input, const Tensor& target, std::size_t batch = 256);

/// Rows [first, first + count) of a batch-major tensor.
Tensor slice_rows(const Tensor& t, std::size_t first, std::size_t count);

/// Rows picked by index, in the given order.
Tensor gather_rows(const Tensor& t, const std::vector<std::size_t>& rows);

}  // namespace qpdn::nn
