#include "qpdn/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include <Eigen/Core>

namespace qpdn::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

// Sum over rows of a row-major [rows, cols] block, added into `out`.
void add_column_sums(const double* m, std::size_t rows, std::size_t cols, double* out) {
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t k = 0; k < cols; ++k) out[k] += m[i * cols + k];
  }
}

void init_uniform(Tensor& t, double limit, Rng& rng) {
  for (auto& v : t.values()) v = uniform(rng, -limit, limit);
}

// Patches of an NHWC batch: row (b, oh, ow), column (kh, kw, c).
void im2col(const double* x, std::size_t batch, const ConvGeometry& g, double* cols) {
  const std::size_t patch = static_cast<std::size_t>(g.patch_size());
  const std::size_t c = static_cast<std::size_t>(g.channels);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* image = x + b * static_cast<std::size_t>(g.height * g.width) * c;
    for (int oh = 0; oh < g.out_height; ++oh) {
      for (int ow = 0; ow < g.out_width; ++ow) {
        double* row = cols + ((b * g.out_height + oh) * g.out_width + ow) * patch;
        for (int kh = 0; kh < g.kernel; ++kh) {
          const int ih = oh * g.stride - g.pad_top + kh;
          for (int kw = 0; kw < g.kernel; ++kw) {
            const int iw = ow * g.stride - g.pad_left + kw;
            double* dst = row + static_cast<std::size_t>(kh * g.kernel + kw) * c;
            if (ih < 0 || ih >= g.height || iw < 0 || iw >= g.width) {
              std::fill(dst, dst + c, 0.0);
            } else {
              std::memcpy(dst, image + (static_cast<std::size_t>(ih) * g.width + iw) * c, c * sizeof(double));
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add patch columns back onto the image.
void col2im(const double* cols, std::size_t batch, const ConvGeometry& g, double* x) {
  const std::size_t patch = static_cast<std::size_t>(g.patch_size());
  const std::size_t c = static_cast<std::size_t>(g.channels);
  std::fill(x, x + batch * static_cast<std::size_t>(g.height * g.width) * c, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    double* image = x + b * static_cast<std::size_t>(g.height * g.width) * c;
    for (int oh = 0; oh < g.out_height; ++oh) {
      for (int ow = 0; ow < g.out_width; ++ow) {
        const double* row = cols + ((b * g.out_height + oh) * g.out_width + ow) * patch;
        for (int kh = 0; kh < g.kernel; ++kh) {
          const int ih = oh * g.stride - g.pad_top + kh;
          if (ih < 0 || ih >= g.height) continue;
          for (int kw = 0; kw < g.kernel; ++kw) {
            const int iw = ow * g.stride - g.pad_left + kw;
            if (iw < 0 || iw >= g.width) continue;
            const double* src = row + static_cast<std::size_t>(kh * g.kernel + kw) * c;
            double* dst = image + (static_cast<std::size_t>(ih) * g.width + iw) * c;
            for (std::size_t k = 0; k < c; ++k) dst[k] += src[k];
          }
        }
      }
    }
  }
}

}  // namespace

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::tconv: return "tconv";
    case LayerKind::batchnorm: return "batchnorm";
    case LayerKind::relu: return "relu";
    case LayerKind::sigmoid: return "sigmoid";
    case LayerKind::dense: return "dense";
  }
  return "relu";
}

LayerKind layer_kind_from_string(std::string_view text) {
  for (auto k : {LayerKind::conv, LayerKind::tconv, LayerKind::batchnorm, LayerKind::relu, LayerKind::sigmoid,
                 LayerKind::dense}) {
    if (to_string(k) == text) return k;
  }
  throw std::invalid_argument("unknown layer kind: " + std::string(text));
}

ConvGeometry ConvGeometry::same_ceil(int height, int width, int channels, int kernel, int stride) {
  require(kernel >= 1 && stride >= 1, "convolution kernel and stride must be positive");
  ConvGeometry g;
  g.height = height;
  g.width = width;
  g.channels = channels;
  g.kernel = kernel;
  g.stride = stride;
  g.out_height = (height + stride - 1) / stride;
  g.out_width = (width + stride - 1) / stride;
  const int pad_h = std::max((g.out_height - 1) * stride + kernel - height, 0);
  const int pad_w = std::max((g.out_width - 1) * stride + kernel - width, 0);
  g.pad_top = pad_h / 2;
  g.pad_left = pad_w / 2;
  return g;
}

// ---------------------------------------------------------------------------

Conv2D::Conv2D(int in_channels, int out_channels, int kernel, int stride)
    : in_channels_(in_channels), out_channels_(out_channels), kernel_(kernel), stride_(stride) {
  require(in_channels > 0 && out_channels > 0, "Conv2D: channel counts must be positive");
  require(kernel >= 1 && kernel <= 7, "Conv2D: kernel must be in 1..7");
  require(stride == 1 || stride == 2, "Conv2D: stride must be 1 or 2");
  const auto k = static_cast<std::size_t>(kernel);
  weights_ = {"weights", Tensor({k, k, std::size_t(in_channels), std::size_t(out_channels)}),
              Tensor({k, k, std::size_t(in_channels), std::size_t(out_channels)})};
  bias_ = {"bias", Tensor({std::size_t(out_channels)}), Tensor({std::size_t(out_channels)})};
}

LayerSpec Conv2D::spec() const {
  return {.kind = LayerKind::conv, .kernel = kernel_, .stride = stride_, .in_channels = in_channels_,
          .out_channels = out_channels_};
}

void Conv2D::initialize(Rng& rng) {
  init_uniform(weights_.value, std::sqrt(6.0 / (kernel_ * kernel_ * in_channels_)), rng);
  bias_.value.fill(0.0);
}

Tensor Conv2D::forward(const Tensor& x, Mode) {
  if (x.rank() != 4 || x.dim(3) != static_cast<std::size_t>(in_channels_)) {
    require(false, "Conv2D: expected [B,H,W," + std::to_string(in_channels_) + "], got " + x.shape_string());
  }
  batch_ = x.dim(0);
  geometry_ = ConvGeometry::same_ceil(int(x.dim(1)), int(x.dim(2)), in_channels_, kernel_, stride_);
  const std::size_t rows = batch_ * geometry_.out_height * geometry_.out_width;
  const std::size_t patch = geometry_.patch_size();
  columns_.resize(rows * patch);
  im2col(x.data(), batch_, geometry_, columns_.data());

  Tensor y({batch_, std::size_t(geometry_.out_height), std::size_t(geometry_.out_width), std::size_t(out_channels_)});
  MapMat out(y.data(), rows, out_channels_);
  out.noalias() = ConstMapMat(columns_.data(), rows, patch) * ConstMapMat(weights_.value.data(), patch, out_channels_);
  out.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias_.value.data(), out_channels_);
  return y;
}

Tensor Conv2D::backward(const Tensor& grad_out) {
  const std::size_t rows = batch_ * geometry_.out_height * geometry_.out_width;
  const std::size_t patch = geometry_.patch_size();
  require(grad_out.size() == rows * out_channels_, "Conv2D::backward: gradient shape mismatch");
  ConstMapMat dy(grad_out.data(), rows, out_channels_);
  ConstMapMat cols(columns_.data(), rows, patch);
  MapMat(weights_.grad.data(), patch, out_channels_).noalias() += cols.transpose() * dy;
  add_column_sums(grad_out.data(), rows, out_channels_, bias_.grad.data());

  std::vector<double> dcols(rows * patch);
  MapMat(dcols.data(), rows, patch).noalias() =
      dy * ConstMapMat(weights_.value.data(), patch, out_channels_).transpose();
  Tensor dx({batch_, std::size_t(geometry_.height), std::size_t(geometry_.width), std::size_t(in_channels_)});
  col2im(dcols.data(), batch_, geometry_, dx.data());
  return dx;
}

// ---------------------------------------------------------------------------

ConvTranspose2D::ConvTranspose2D(int in_channels, int out_channels, int kernel, int stride)
    : in_channels_(in_channels), out_channels_(out_channels), kernel_(kernel), stride_(stride) {
  require(in_channels > 0 && out_channels > 0, "ConvTranspose2D: channel counts must be positive");
  require(kernel >= 1 && kernel <= 7, "ConvTranspose2D: kernel must be in 1..7");
  require(stride == 1 || stride == 2, "ConvTranspose2D: stride must be 1 or 2");
  const auto k = static_cast<std::size_t>(kernel);
  weights_ = {"weights", Tensor({k, k, std::size_t(out_channels), std::size_t(in_channels)}),
              Tensor({k, k, std::size_t(out_channels), std::size_t(in_channels)})};
  bias_ = {"bias", Tensor({std::size_t(out_channels)}), Tensor({std::size_t(out_channels)})};
}

LayerSpec ConvTranspose2D::spec() const {
  return {.kind = LayerKind::tconv, .kernel = kernel_, .stride = stride_, .in_channels = in_channels_,
          .out_channels = out_channels_};
}

void ConvTranspose2D::initialize(Rng& rng) {
  init_uniform(weights_.value, std::sqrt(6.0 / (kernel_ * kernel_ * in_channels_)), rng);
  bias_.value.fill(0.0);
}

Tensor ConvTranspose2D::forward(const Tensor& x, Mode) {
  if (x.rank() != 4 || x.dim(3) != static_cast<std::size_t>(in_channels_)) {
    require(false, "ConvTranspose2D: expected [B,h,w," + std::to_string(in_channels_) + "], got " + x.shape_string());
  }
  batch_ = x.dim(0);
  geometry_ = ConvGeometry::same_ceil(int(x.dim(1)) * stride_, int(x.dim(2)) * stride_, out_channels_, kernel_,
                                      stride_);
  input_ = x;
  const std::size_t rows = batch_ * x.dim(1) * x.dim(2);
  const std::size_t patch = geometry_.patch_size();
  std::vector<double> cols(rows * patch);
  MapMat(cols.data(), rows, patch).noalias() =
      ConstMapMat(x.data(), rows, in_channels_) *
      ConstMapMat(weights_.value.data(), patch, in_channels_).transpose();
  Tensor y({batch_, std::size_t(geometry_.height), std::size_t(geometry_.width), std::size_t(out_channels_)});
  col2im(cols.data(), batch_, geometry_, y.data());
  MapMat(y.data(), y.size() / out_channels_, out_channels_).rowwise() +=
      Eigen::Map<const Eigen::RowVectorXd>(bias_.value.data(), out_channels_);
  return y;
}

Tensor ConvTranspose2D::backward(const Tensor& grad_out) {
  const std::size_t rows = batch_ * geometry_.out_height * geometry_.out_width;
  const std::size_t patch = geometry_.patch_size();
  require(grad_out.size() == batch_ * geometry_.height * geometry_.width * out_channels_,
          "ConvTranspose2D::backward: gradient shape mismatch");
  std::vector<double> dcols(rows * patch);
  im2col(grad_out.data(), batch_, geometry_, dcols.data());
  ConstMapMat dc(dcols.data(), rows, patch);
  ConstMapMat xin(input_.data(), rows, in_channels_);
  MapMat(weights_.grad.data(), patch, in_channels_).noalias() += dc.transpose() * xin;
  add_column_sums(grad_out.data(), grad_out.size() / out_channels_, out_channels_, bias_.grad.data());
  Tensor dx(input_.shape());
  MapMat(dx.data(), rows, in_channels_).noalias() = dc * ConstMapMat(weights_.value.data(), patch, in_channels_);
  return dx;
}

// ---------------------------------------------------------------------------

BatchNorm::BatchNorm(int channels, double momentum, double epsilon)
    : channels_(channels), momentum_(momentum), epsilon_(epsilon) {
  require(channels > 0, "BatchNorm: channels must be positive");
  const auto c = static_cast<std::size_t>(channels);
  scale_ = {"scale", Tensor({c}, 1.0), Tensor({c})};
  shift_ = {"shift", Tensor({c}), Tensor({c})};
  running_mean_ = Tensor({c});
  running_var_ = Tensor({c}, 1.0);
}

LayerSpec BatchNorm::spec() const {
  return {.kind = LayerKind::batchnorm, .channels = channels_, .momentum = momentum_, .epsilon = epsilon_};
}

void BatchNorm::initialize(Rng&) {
  scale_.value.fill(1.0);
  shift_.value.fill(0.0);
  running_mean_.fill(0.0);
  running_var_.fill(1.0);
}

Tensor BatchNorm::forward(const Tensor& x, Mode mode) {
  if (x.rank() < 2 || x.shape().back() != static_cast<std::size_t>(channels_)) {
    throw std::invalid_argument("BatchNorm: last axis must have " + std::to_string(channels_) + " channels, got " +
                                x.shape_string());
  }
  const std::size_t c = channels_;
  const std::size_t n = x.size() / c;
  const double* in = x.data();
  std::vector<double> mean(c, 0.0), var(c, 0.0);
  if (mode == Mode::train) {
    require(x.dim(0) >= 2, "BatchNorm: train mode needs a batch of at least 2");
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < c; ++k) mean[k] += in[i * c + k];
    }
    for (auto& m : mean) m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < c; ++k) {
        const double d = in[i * c + k] - mean[k];
        var[k] += d * d;
      }
    }
    for (std::size_t k = 0; k < c; ++k) {
      var[k] /= static_cast<double>(n);
      running_mean_[k] = momentum_ * running_mean_[k] + (1.0 - momentum_) * mean[k];
      running_var_[k] = momentum_ * running_var_[k] + (1.0 - momentum_) * var[k];
    }
  } else {
    for (std::size_t k = 0; k < c; ++k) {
      mean[k] = running_mean_[k];
      var[k] = running_var_[k];
    }
  }
  batch_statistics_ = mode == Mode::train;
  inv_std_.resize(c);
  for (std::size_t k = 0; k < c; ++k) inv_std_[k] = 1.0 / std::sqrt(var[k] + epsilon_);
  normalized_ = Tensor(x.shape());
  Tensor y(x.shape());
  double* xhat = normalized_.data();
  double* out = y.data();
  const double* gamma = scale_.value.data();
  const double* beta = shift_.value.data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < c; ++k) {
      const double h = (in[i * c + k] - mean[k]) * inv_std_[k];
      xhat[i * c + k] = h;
      out[i * c + k] = gamma[k] * h + beta[k];
    }
  }
  return y;
}

Tensor BatchNorm::backward(const Tensor& grad_out) {
  const std::size_t c = channels_;
  const std::size_t n = grad_out.size() / c;
  const double* dy = grad_out.data();
  const double* xhat = normalized_.data();
  std::vector<double> dshift(c, 0.0), dscale(c, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < c; ++k) {
      dshift[k] += dy[i * c + k];
      dscale[k] += dy[i * c + k] * xhat[i * c + k];
    }
  }
  std::vector<double> factor(c), mean_dy(c), mean_dy_xhat(c);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t k = 0; k < c; ++k) {
    shift_.grad[k] += dshift[k];
    scale_.grad[k] += dscale[k];
    factor[k] = scale_.value[k] * inv_std_[k];
    mean_dy[k] = dshift[k] * inv_n;
    mean_dy_xhat[k] = dscale[k] * inv_n;
  }
  Tensor dx(grad_out.shape());
  double* out = dx.data();
  if (!batch_statistics_) {
    // Running statistics are constants: the layer is affine.
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < c; ++k) out[i * c + k] = factor[k] * dy[i * c + k];
    return dx;
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < c; ++k) {
      out[i * c + k] = factor[k] * (dy[i * c + k] - mean_dy[k] - xhat[i * c + k] * mean_dy_xhat[k]);
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------

Tensor ReLU::forward(const Tensor& x, Mode) {
  input_ = x;
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
  return y;
}

Tensor ReLU::backward(const Tensor& grad_out) {
  Tensor dx(grad_out.shape());
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = input_[i] > 0.0 ? grad_out[i] : 0.0;
  return dx;
}

Tensor Sigmoid::forward(const Tensor& x, Mode) {
  output_ = Tensor(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) output_[i] = 1.0 / (1.0 + std::exp(-x[i]));
  return output_;
}

Tensor Sigmoid::backward(const Tensor& grad_out) {
  Tensor dx(grad_out.shape());
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = grad_out[i] * output_[i] * (1.0 - output_[i]);
  return dx;
}

// ---------------------------------------------------------------------------

Dense::Dense(int in_features, int out_features) : in_(in_features), out_(out_features) {
  require(in_features > 0 && out_features > 0, "Dense: widths must be positive");
  weights_ = {"weights", Tensor({std::size_t(in_), std::size_t(out_)}), Tensor({std::size_t(in_), std::size_t(out_)})};
  bias_ = {"bias", Tensor({std::size_t(out_)}), Tensor({std::size_t(out_)})};
}

LayerSpec Dense::spec() const { return {.kind = LayerKind::dense, .in_channels = in_, .out_channels = out_}; }

void Dense::initialize(Rng& rng) {
  init_uniform(weights_.value, std::sqrt(6.0 / in_), rng);
  bias_.value.fill(0.0);
}

Tensor Dense::forward(const Tensor& x, Mode) {
  if (x.rank() < 1 || x.dim(0) == 0 || x.size() / x.dim(0) != static_cast<std::size_t>(in_)) {
    require(false, "Dense: expected [B," + std::to_string(in_) + "], got " + x.shape_string());
  }
  input_ = x;
  const std::size_t b = x.dim(0);
  Tensor y({b, std::size_t(out_)});
  MapMat out(y.data(), b, out_);
  out.noalias() = ConstMapMat(x.data(), b, in_) * ConstMapMat(weights_.value.data(), in_, out_);
  out.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias_.value.data(), out_);
  return y;
}

Tensor Dense::backward(const Tensor& grad_out) {
  const std::size_t b = input_.dim(0);
  require(grad_out.size() == b * out_, "Dense::backward: gradient shape mismatch");
  ConstMapMat dy(grad_out.data(), b, out_);
  ConstMapMat x(input_.data(), b, in_);
  MapMat(weights_.grad.data(), in_, out_).noalias() += x.transpose() * dy;
  add_column_sums(grad_out.data(), b, out_, bias_.grad.data());
  Tensor dx(input_.shape());
  MapMat(dx.data(), b, in_).noalias() = dy * ConstMapMat(weights_.value.data(), in_, out_).transpose();
  return dx;
}

// ---------------------------------------------------------------------------

std::unique_ptr<Layer> make_layer(const LayerSpec& spec) {
  switch (spec.kind) {
    case LayerKind::conv: return std::make_unique<Conv2D>(spec.in_channels, spec.out_channels, spec.kernel, spec.stride);
    case LayerKind::tconv:
      return std::make_unique<ConvTranspose2D>(spec.in_channels, spec.out_channels, spec.kernel, spec.stride);
    case LayerKind::batchnorm: return std::make_unique<BatchNorm>(spec.channels, spec.momentum, spec.epsilon);
    case LayerKind::relu: return std::make_unique<ReLU>();
    case LayerKind::sigmoid: return std::make_unique<Sigmoid>();
    case LayerKind::dense: return std::make_unique<Dense>(spec.in_channels, spec.out_channels);
  }
  throw std::invalid_argument("make_layer: unknown kind");
}

}  // namespace qpdn::nn
