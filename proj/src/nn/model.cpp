#include "qpdn/nn/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

#include "qpdn/errors.hpp"
#include "qpdn/nn/adam.hpp"

namespace qpdn::nn {

void Network::zero_grad() {
  for (Param* p : params()) p->grad.fill(0.0);
}

std::size_t Network::parameter_count() {
  std::size_t n = 0;
  for (Param* p : params()) n += p->value.size();
  return n;
}

Sequential::Sequential(const std::vector<LayerSpec>& specs) {
  for (const auto& s : specs) add(make_layer(s));
}

Sequential::Sequential(const Sequential& other) {
  layers_.reserve(other.layers_.size());
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Sequential& Sequential::operator=(const Sequential& other) {
  if (this != &other) {
    Sequential copy(other);
    layers_ = std::move(copy.layers_);
  }
  return *this;
}

void Sequential::add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }

void Sequential::initialize(Rng& rng) {
  for (auto& l : layers_) l->initialize(rng);
}

Tensor Sequential::forward(const Tensor& x, Mode mode) {
  Tensor h = x;
  for (auto& l : layers_) h = l->forward(h, mode);
  return h;
}

Tensor Sequential::backward(const Tensor& grad_out) {
  Tensor g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

std::vector<Param*> Sequential::params() {
  std::vector<Param*> out;
  for (auto& l : layers_) {
    for (Param* p : l->params()) out.push_back(p);
  }
  return out;
}

std::vector<Tensor*> Sequential::buffers() {
  std::vector<Tensor*> out;
  for (auto& l : layers_) {
    for (Tensor* b : l->buffers()) out.push_back(b);
  }
  return out;
}

std::vector<LayerSpec> Sequential::specs() const {
  std::vector<LayerSpec> out;
  for (const auto& l : layers_) out.push_back(l->spec());
  return out;
}

// ---------------------------------------------------------------------------

Forked::Forked(Sequential trunk, std::vector<Sequential> heads) : trunk_(std::move(trunk)), heads_(std::move(heads)) {
  if (heads_.empty()) throw std::invalid_argument("Forked: need at least one head");
}

void Forked::initialize(Rng& rng) {
  trunk_.initialize(rng);
  for (auto& h : heads_) h.initialize(rng);
}

Tensor Forked::forward(const Tensor& x, Mode mode) {
  const Tensor shared = trunk_.forward(x, mode);
  std::vector<Tensor> outs;
  head_widths_.clear();
  std::size_t total = 0;
  for (auto& h : heads_) {
    outs.push_back(h.forward(shared, mode));
    if (outs.back().rank() != 2) throw std::invalid_argument("Forked: heads must return [B, n]");
    head_widths_.push_back(outs.back().dim(1));
    total += head_widths_.back();
  }
  const std::size_t batch = shared.dim(0);
  Tensor y({batch, total});
  std::size_t offset = 0;
  for (std::size_t k = 0; k < outs.size(); ++k) {
    for (std::size_t b = 0; b < batch; ++b) {
      std::memcpy(y.data() + b * total + offset, outs[k].data() + b * head_widths_[k],
                  head_widths_[k] * sizeof(double));
    }
    offset += head_widths_[k];
  }
  return y;
}

Tensor Forked::backward(const Tensor& grad_out) {
  const std::size_t batch = grad_out.dim(0);
  const std::size_t total = grad_out.dim(1);
  Tensor shared_grad;
  std::size_t offset = 0;
  for (std::size_t k = 0; k < heads_.size(); ++k) {
    Tensor g({batch, head_widths_[k]});
    for (std::size_t b = 0; b < batch; ++b) {
      std::memcpy(g.data() + b * head_widths_[k], grad_out.data() + b * total + offset,
                  head_widths_[k] * sizeof(double));
    }
    offset += head_widths_[k];
    Tensor back = heads_[k].backward(g);
    if (k == 0) {
      shared_grad = std::move(back);
    } else {
      for (std::size_t i = 0; i < back.size(); ++i) shared_grad[i] += back[i];
    }
  }
  return trunk_.backward(shared_grad);
}

std::vector<Param*> Forked::params() {
  std::vector<Param*> out = trunk_.params();
  for (auto& h : heads_) {
    for (Param* p : h.params()) out.push_back(p);
  }
  return out;
}

std::vector<Tensor*> Forked::buffers() {
  std::vector<Tensor*> out = trunk_.buffers();
  for (auto& h : heads_) {
    for (Tensor* b : h.buffers()) out.push_back(b);
  }
  return out;
}

// ---------------------------------------------------------------------------

Loss mse_loss(const Tensor& prediction, const Tensor& target) {
  if (prediction.size() != target.size() || prediction.size() == 0) {
    throw std::invalid_argument("mse_loss: shapes " + prediction.shape_string() + " and " + target.shape_string());
  }
  Loss loss;
  loss.grad = Tensor(prediction.shape());
  const double n = static_cast<double>(prediction.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < prediction.size(); ++i) {
    const double d = prediction[i] - target[i];
    sum += d * d;
    loss.grad[i] = 2.0 * d / n;
  }
  loss.value = sum / n;
  return loss;
}

double train_step(Network& net, Adam& optimizer, const Tensor& input, const Tensor& target) {
  net.zero_grad();
  const Tensor prediction = net.forward(input, Mode::train);
  Loss loss = mse_loss(prediction, target);
  if (!std::isfinite(loss.value)) throw DivergenceError("training loss is not finite");
  net.backward(loss.grad);
  for (Param* p : net.params()) {
    if (!p->grad.all_finite()) throw DivergenceError("non-finite gradient in parameter '" + p->name + "'");
  }
  optimizer.step(net.params());
  return loss.value;
}

double evaluate_mse(Network& net, const Tensor& input, const Tensor& target, std::size_t batch) {
  const std::size_t n = input.dim(0);
  if (n == 0) throw std::invalid_argument("evaluate_mse: empty input");
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t first = 0; first < n; first += batch) {
    const std::size_t len = std::min(batch, n - first);
    const Tensor pred = net.forward(slice_rows(input, first, len), Mode::infer);
    const Tensor want = slice_rows(target, first, len);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double d = pred[i] - want[i];
      sum += d * d;
    }
    count += pred.size();
  }
  return sum / static_cast<double>(count);
}

Tensor slice_rows(const Tensor& t, std::size_t first, std::size_t count) {
  if (t.rank() == 0 || first + count > t.dim(0)) throw std::out_of_range("slice_rows: out of range");
  const std::size_t row = t.size() / t.dim(0);
  std::vector<std::size_t> shape = t.shape();
  shape[0] = count;
  std::vector<double> data(t.data() + first * row, t.data() + (first + count) * row);
  return Tensor(std::move(shape), std::move(data));
}

Tensor gather_rows(const Tensor& t, const std::vector<std::size_t>& rows) {
  const std::size_t row = t.size() / t.dim(0);
  std::vector<std::size_t> shape = t.shape();
  shape[0] = rows.size();
  Tensor out(shape);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= t.dim(0)) throw std::out_of_range("gather_rows: index out of range");
    std::memcpy(out.data() + i * row, t.data() + rows[i] * row, row * sizeof(double));
  }
  return out;
}

}  // namespace qpdn::nn
