#pragma once

#include <vector>

#include "qpdn/nn/layers.hpp"

namespace qpdn::nn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adaptive-moment updates with bias correction. Moment buffers are bound to
/// the parameter order seen on the first step.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  void step(const std::vector<Param*>& params);
  long long steps() const noexcept { return t_; }
  const AdamConfig& config() const noexcept { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }

 private:
  AdamConfig config_;
  long long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace qpdn::nn
