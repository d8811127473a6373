#include "qpdn/autoencoder.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "qpdn/errors.hpp"
#include "qpdn/nn/adam.hpp"
#include "qpdn/nn/serialize.hpp"
#include "qpdn/parallel.hpp"
#include "qpdn/random.hpp"
#include "qpdn/text_format.hpp"

namespace qpdn {

namespace {

constexpr int kModelSchemaVersion = 1;

std::vector<const ProcessMatrix*> noisy_of(const std::vector<const Record*>& records) {
  std::vector<const ProcessMatrix*> out;
  out.reserve(records.size());
  for (const Record* r : records) out.push_back(&r->noisy);
  return out;
}

std::vector<const ProcessMatrix*> target_of(const std::vector<const Record*>& records) {
  std::vector<const ProcessMatrix*> out;
  out.reserve(records.size());
  for (const Record* r : records) out.push_back(&r->target);
  return out;
}

/// Shuffled mini-batches; a trailing batch of one sample joins its neighbour
/// because batch normalisation needs at least two.
std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t first = 0; first < n; first += batch) {
    batches.emplace_back(order.begin() + first, order.begin() + std::min(n, first + batch));
  }
  if (batches.size() > 1 && batches.back().size() < 2) {
    const auto tail = batches.back();
    batches.pop_back();
    batches.back().insert(batches.back().end(), tail.begin(), tail.end());
  }
  return batches;
}

nlohmann::ordered_json spec_to_json(const AutoencoderSpec& s) {
  return {{"kernel", s.kernel},         {"filters", s.filters},       {"stride", s.stride},
          {"epochs", s.epochs},         {"patience", s.patience},     {"batch_size", s.batch_size},
          {"learning_rate", s.learning_rate}, {"lr_decay", s.lr_decay},
          {"lr_patience", s.lr_patience},     {"seed", s.seed}};
}

AutoencoderSpec spec_from_json(const nlohmann::ordered_json& j) {
  AutoencoderSpec s;
  s.kernel = j.at("kernel").get<int>();
  s.filters = j.at("filters").get<std::array<int, 3>>();
  s.stride = j.at("stride").get<int>();
  s.epochs = j.at("epochs").get<int>();
  s.patience = j.at("patience").get<int>();
  s.batch_size = j.at("batch_size").get<int>();
  s.learning_rate = j.at("learning_rate").get<double>();
  s.lr_decay = j.at("lr_decay").get<double>();
  s.lr_patience = j.at("lr_patience").get<int>();
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

}  // namespace

void AutoencoderSpec::validate() const {
  if (kernel < 1 || kernel > 7) throw std::invalid_argument("autoencoder kernel must be in 1..7");
  for (int f : filters) {
    if (f < 1) throw std::invalid_argument("autoencoder filter counts must be positive");
  }
  if (stride != 1 && stride != 2) throw std::invalid_argument("autoencoder stride must be 1 or 2");
  if (epochs < 1) throw std::invalid_argument("autoencoder epochs must be positive");
  if (patience < 1) throw std::invalid_argument("autoencoder patience must be positive");
  if (batch_size < 2) throw std::invalid_argument("autoencoder batch size must be at least 2");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("autoencoder learning rate must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw std::invalid_argument("autoencoder lr_decay must be in (0, 1]");
  if (lr_patience < 1) throw std::invalid_argument("autoencoder lr_patience must be positive");
}

std::vector<nn::LayerSpec> autoencoder_layers(const AutoencoderSpec& spec) {
  spec.validate();
  using nn::LayerKind;
  std::vector<nn::LayerSpec> layers;
  auto block = [&](LayerKind kind, int in, int out) {
    layers.push_back({.kind = kind, .kernel = spec.kernel, .stride = spec.stride, .in_channels = in, .out_channels = out});
    layers.push_back({.kind = LayerKind::relu});
    layers.push_back({.kind = LayerKind::batchnorm, .channels = out});
  };
  const auto& f = spec.filters;
  block(LayerKind::conv, 2, f[0]);
  block(LayerKind::conv, f[0], f[1]);
  block(LayerKind::conv, f[1], f[2]);
  block(LayerKind::tconv, f[2], f[1]);
  block(LayerKind::tconv, f[1], f[0]);
  layers.push_back(
      {.kind = LayerKind::tconv, .kernel = spec.kernel, .stride = spec.stride, .in_channels = f[0], .out_channels = 2});
  layers.push_back({.kind = LayerKind::sigmoid});
  return layers;
}

void chi_to_image(const ChiMatrix& chi, const NormalizationStats& stats, double* out) {
  for (int r = 0; r < kChiDim; ++r) {
    for (int c = 0; c < kChiDim; ++c) {
      out[2 * (r * kChiDim + c)] = stats.normalize(chi(r, c).real());
      out[2 * (r * kChiDim + c) + 1] = stats.normalize(chi(r, c).imag());
    }
  }
}

ChiMatrix image_to_chi(const double* image, const NormalizationStats& stats) {
  ChiMatrix chi;
  for (int r = 0; r < kChiDim; ++r) {
    for (int c = 0; c < kChiDim; ++c) {
      chi(r, c) = Complex{stats.rescale(image[2 * (r * kChiDim + c)]), stats.rescale(image[2 * (r * kChiDim + c) + 1])};
    }
  }
  return chi;
}

nn::Tensor chi_images(const std::vector<const ProcessMatrix*>& chis, const NormalizationStats& stats) {
  nn::Tensor t({chis.size(), std::size_t(kChiDim), std::size_t(kChiDim), std::size_t(2)});
  for (std::size_t i = 0; i < chis.size(); ++i) chi_to_image(chis[i]->chi, stats, t.data() + i * kImageValues);
  return t;
}

Autoencoder build_autoencoder(const AutoencoderSpec& spec, const NormalizationStats& stats) {
  Autoencoder model{spec, stats, nn::Sequential(autoencoder_layers(spec)), {}};
  Rng rng(derive_seed(spec.seed, {0}));
  model.net.initialize(rng);
  return model;
}

Autoencoder train_autoencoder(const AutoencoderSpec& spec, const Dataset& dataset, const EpochCallback& on_epoch) {
  if (!dataset.stats) throw std::invalid_argument("train_autoencoder: dataset has no normalization statistics");
  const auto train = dataset.slice(Split::train);
  const auto val = dataset.slice(Split::val);
  if (train.size() < 2 || val.empty()) throw std::invalid_argument("train_autoencoder: train or validation split too small");

  const auto start = std::chrono::steady_clock::now();
  Autoencoder model = build_autoencoder(spec, *dataset.stats);
  const nn::Tensor train_in = chi_images(noisy_of(train), model.stats);
  const nn::Tensor train_out = chi_images(target_of(train), model.stats);
  const nn::Tensor val_in = chi_images(noisy_of(val), model.stats);
  const nn::Tensor val_out = chi_images(target_of(val), model.stats);

  nn::Adam optimizer({.learning_rate = spec.learning_rate});
  Rng order_rng(derive_seed(spec.seed, {1}));
  nn::Sequential best = model.net;
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;

  for (int epoch = 1; epoch <= spec.epochs; ++epoch) {
    double sum = 0.0;
    try {
      for (const auto& batch : make_batches(train.size(), static_cast<std::size_t>(spec.batch_size), order_rng)) {
        const double loss =
            nn::train_step(model.net, optimizer, nn::gather_rows(train_in, batch), nn::gather_rows(train_out, batch));
        sum += loss * static_cast<double>(batch.size());
      }
    } catch (const DivergenceError& e) {
      throw DivergenceError("autoencoder training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
    }
    EpochLog entry{epoch, sum / static_cast<double>(train.size()), nn::evaluate_mse(model.net, val_in, val_out)};
    if (!std::isfinite(entry.val_mse)) {
      throw DivergenceError("autoencoder validation loss is not finite at epoch " + std::to_string(epoch));
    }
    model.log.epochs.push_back(entry);
    if (on_epoch) on_epoch(entry);
    if (entry.val_mse < best_val) {
      best_val = entry.val_mse;
      best = model.net;
      model.log.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= spec.patience) {
      model.log.early_stopped = true;
      break;
    } else if (spec.lr_decay < 1.0 && since_best % spec.lr_patience == 0) {
      optimizer.set_learning_rate(optimizer.config().learning_rate * spec.lr_decay);
    }
  }
  model.net = std::move(best);
  model.log.best_val_mse = best_val;
  model.log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return model;
}

std::vector<ProcessMatrix> denoise_all(Autoencoder& model, const std::vector<const ProcessMatrix*>& noisy,
                                       std::size_t batch) {
  std::vector<ProcessMatrix> out;
  out.reserve(noisy.size());
  for (std::size_t first = 0; first < noisy.size(); first += batch) {
    const std::size_t len = std::min(batch, noisy.size() - first);
    std::vector<const ProcessMatrix*> chunk(noisy.begin() + first, noisy.begin() + first + len);
    const nn::Tensor y = model.net.forward(chi_images(chunk, model.stats), nn::Mode::infer);
    for (std::size_t i = 0; i < len; ++i) {
      ProcessMatrix m;
      m.chi = hermitian_part(image_to_chi(y.data() + i * kImageValues, model.stats));
      m.phi = chunk[i]->phi;
      m.signal_ratio = chunk[i]->signal_ratio;
      m.label = ChiLabel::denoised;
      out.push_back(std::move(m));
    }
  }
  return out;
}

ProcessMatrix denoise(Autoencoder& model, const ProcessMatrix& noisy) { return denoise_all(model, {&noisy}).front(); }

void save_autoencoder(const std::filesystem::path& path, Autoencoder& model) {
  nlohmann::ordered_json log = nlohmann::ordered_json::array();
  for (const auto& e : model.log.epochs) log.push_back({{"epoch", e.epoch}, {"train_mse", e.train_mse}, {"val_mse", e.val_mse}});
  nlohmann::ordered_json j;
  j["schema_version"] = kModelSchemaVersion;
  j["model"] = "autoencoder";
  j["spec"] = spec_to_json(model.spec);
  j["seed"] = model.spec.seed;
  j["normalization"] = {{"min", format_double(model.stats.min)}, {"max", format_double(model.stats.max)}};
  j["training"] = {{"best_epoch", model.log.best_epoch},
                   {"best_val_mse", model.log.best_val_mse},
                   {"early_stopped", model.log.early_stopped},
                   {"log", std::move(log)}};
  j["layers"] = nn::sequential_to_json(model.net);
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(1) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

Autoencoder load_autoencoder(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    const auto j = nlohmann::ordered_json::parse(in);
    if (j.at("schema_version").get<int>() != kModelSchemaVersion) throw ParseError("unsupported model schema version");
    if (j.at("model").get<std::string>() != "autoencoder") throw ParseError("not an autoencoder model file");
    Autoencoder model;
    model.spec = spec_from_json(j.at("spec"));
    model.stats.min = parse_double(j.at("normalization").at("min").get<std::string>());
    model.stats.max = parse_double(j.at("normalization").at("max").get<std::string>());
    const auto& t = j.at("training");
    model.log.best_epoch = t.at("best_epoch").get<int>();
    model.log.best_val_mse = t.at("best_val_mse").get<double>();
    model.log.early_stopped = t.at("early_stopped").get<bool>();
    for (const auto& e : t.at("log")) {
      model.log.epochs.push_back({e.at("epoch").get<int>(), e.at("train_mse").get<double>(), e.at("val_mse").get<double>()});
    }
    model.net = nn::sequential_from_json(j.at("layers"));
    if (model.net.specs() != autoencoder_layers(model.spec)) throw ParseError("layer stack does not match the spec");
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

int select_best_kernel(const std::vector<SweepEntry>& entries) {
  if (entries.empty()) throw std::invalid_argument("select_best_kernel: no entries");
  const SweepEntry* best = &entries.front();
  for (const auto& e : entries) {
    if (e.val_mse < best->val_mse || (e.val_mse == best->val_mse && e.kernel < best->kernel)) best = &e;
  }
  return best->kernel;
}

SweepReport kernel_sweep(const AutoencoderSpec& base, const Dataset& dataset, const std::vector<int>& kernels,
                         unsigned threads) {
  if (kernels.empty()) throw std::invalid_argument("kernel_sweep: no kernels");
  for (int k : kernels) {
    if (k < 1 || k > 7) throw std::invalid_argument("kernel_sweep: kernels must be in 1..7");
  }
  const auto test = dataset.slice(Split::test);
  if (test.empty()) throw std::invalid_argument("kernel_sweep: empty test split");

  SweepReport report;
  double lowest = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (test[i]->signal_ratio < lowest) {
      lowest = test[i]->signal_ratio;
      report.reference_record = i;
    }
  }
  const Record& reference = *test[report.reference_record];
  report.noisy_heatmap = diff_heatmap(reference.target, reference.noisy);

  report.entries.resize(kernels.size());
  parallel_for(kernels.size(), threads, [&](std::size_t i) {
    AutoencoderSpec spec = base;
    spec.kernel = kernels[i];
    Autoencoder model = train_autoencoder(spec, dataset);
    const auto denoised = denoise_all(model, noisy_of(test));
    double sum = 0.0;
    for (std::size_t r = 0; r < test.size(); ++r) sum += process_fidelity(denoised[r], test[r]->target);
    SweepEntry& e = report.entries[i];
    e.kernel = spec.kernel;
    e.val_mse = model.log.best_val_mse;
    e.best_epoch = model.log.best_epoch;
    e.mean_test_fidelity = sum / static_cast<double>(test.size());
    e.heatmap = diff_heatmap(reference.target, denoised[report.reference_record]);
  });
  report.best_k = select_best_kernel(report.entries);
  return report;
}

}  // namespace qpdn
