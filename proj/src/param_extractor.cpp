#include "qpdn/param_extractor.hpp"

#include <algorithm>
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
#include "qpdn/random.hpp"
#include "qpdn/text_format.hpp"

namespace qpdn {

namespace {

constexpr int kModelSchemaVersion = 1;

using Json = nlohmann::ordered_json;

nn::Tensor flat_inputs(const std::vector<const ChiMatrix*>& chis, const NormalizationStats& stats) {
  nn::Tensor t({chis.size(), kImageValues});
  for (std::size_t i = 0; i < chis.size(); ++i) chi_to_image(*chis[i], stats, t.data() + i * kImageValues);
  return t;
}

nn::Tensor scaled_targets(const std::vector<double>& degrees, const OutputAffine& affine, int forks) {
  nn::Tensor t({degrees.size(), std::size_t(forks)});
  for (std::size_t i = 0; i < degrees.size(); ++i) {
    for (int f = 0; f < forks; ++f) t[i * forks + f] = (degrees[i] - affine.offset) / affine.scale;
  }
  return t;
}

Json spec_to_json(const FfnnSpec& s) {
  return {{"trunk", s.trunk},       {"head_hidden", s.head_hidden}, {"forks", s.forks},
          {"epochs", s.epochs},     {"patience", s.patience},       {"batch_size", s.batch_size},
          {"learning_rate", s.learning_rate}, {"seed", s.seed}};
}

FfnnSpec spec_from_json(const Json& j) {
  FfnnSpec s;
  s.trunk = j.at("trunk").get<std::array<int, 2>>();
  s.head_hidden = j.at("head_hidden").get<int>();
  s.forks = j.at("forks").get<int>();
  s.epochs = j.at("epochs").get<int>();
  s.patience = j.at("patience").get<int>();
  s.batch_size = j.at("batch_size").get<int>();
  s.learning_rate = j.at("learning_rate").get<double>();
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

}  // namespace

void FfnnSpec::validate() const {
  if (trunk[0] < 1 || trunk[1] < 1 || head_hidden < 1) throw std::invalid_argument("ffnn widths must be positive");
  if (forks < 1) throw std::invalid_argument("ffnn needs at least one fork");
  if (epochs < 1) throw std::invalid_argument("ffnn epochs must be positive");
  if (patience < 1) throw std::invalid_argument("ffnn patience must be positive");
  if (batch_size < 2 || batch_size % 2 != 0) throw std::invalid_argument("ffnn batch size must be even and >= 2");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("ffnn learning rate must be positive");
}

PhiExtractor build_extractor(const FfnnSpec& spec, const NormalizationStats& stats, OutputAffine affine) {
  spec.validate();
  using nn::LayerKind;
  const int in = static_cast<int>(kImageValues);
  nn::Sequential trunk({{.kind = LayerKind::dense, .in_channels = in, .out_channels = spec.trunk[0]},
                        {.kind = LayerKind::relu},
                        {.kind = LayerKind::dense, .in_channels = spec.trunk[0], .out_channels = spec.trunk[1]},
                        {.kind = LayerKind::relu}});
  std::vector<nn::Sequential> heads;
  for (int f = 0; f < spec.forks; ++f) {
    heads.emplace_back(std::vector<nn::LayerSpec>{
        {.kind = LayerKind::dense, .in_channels = spec.trunk[1], .out_channels = spec.head_hidden},
        {.kind = LayerKind::relu},
        {.kind = LayerKind::dense, .in_channels = spec.head_hidden, .out_channels = 1}});
  }
  PhiExtractor model{spec, stats, affine, nn::Forked(std::move(trunk), std::move(heads)), {}};
  Rng rng(derive_seed(spec.seed, {0}));
  model.net.initialize(rng);
  return model;
}

std::vector<PhiExample> phi_examples(const std::vector<const Record*>& records,
                                     const std::vector<ProcessMatrix>& denoised) {
  if (records.size() != denoised.size()) throw std::invalid_argument("phi_examples: size mismatch");
  std::vector<PhiExample> out;
  out.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    out.push_back({records[i]->target.chi, denoised[i].chi, to_degrees(records[i]->phi), records[i]->signal_ratio});
  }
  return out;
}

PhiExtractor train_ffnn(const FfnnSpec& spec, const NormalizationStats& stats, const std::vector<PhiExample>& train,
                        const std::vector<PhiExample>& val, const EpochCallback& on_epoch) {
  spec.validate();
  if (train.empty() || val.empty()) throw std::invalid_argument("train_ffnn: empty train or validation set");
  const auto start = std::chrono::steady_clock::now();

  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& e : train) {
    lo = std::min(lo, e.phi_degrees);
    hi = std::max(hi, e.phi_degrees);
  }
  OutputAffine affine{0.5 * (lo + hi), hi > lo ? 0.5 * (hi - lo) : 1.0};
  PhiExtractor model = build_extractor(spec, stats, affine);

  std::vector<const ChiMatrix*> val_chis;
  std::vector<double> val_deg;
  for (const auto& e : val) {
    val_chis.push_back(&e.denoised);
    val_deg.push_back(e.phi_degrees);
  }
  const nn::Tensor val_in = flat_inputs(val_chis, stats);
  const nn::Tensor val_out = scaled_targets(val_deg, affine, spec.forks);

  nn::Adam optimizer({.learning_rate = spec.learning_rate});
  Rng order_rng(derive_seed(spec.seed, {1}));
  nn::Forked best = model.net;
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;
  const std::size_t half = static_cast<std::size_t>(spec.batch_size / 2);

  std::vector<std::size_t> order(train.size());
  for (int epoch = 1; epoch <= spec.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle(order.begin(), order.end(), order_rng);
    double sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t first = 0; first < order.size(); first += half) {
      const std::size_t len = std::min(half, order.size() - first);
      std::vector<const ChiMatrix*> chis;
      std::vector<double> deg;
      for (std::size_t i = 0; i < len; ++i) {
        chis.push_back(&train[order[first + i]].theoretical);
        deg.push_back(train[order[first + i]].phi_degrees);
      }
      for (std::size_t i = 0; i < len; ++i) {
        chis.push_back(&train[order[first + i]].denoised);
        deg.push_back(train[order[first + i]].phi_degrees);
      }
      try {
        const double loss = nn::train_step(model.net, optimizer, flat_inputs(chis, stats),
                                           scaled_targets(deg, affine, spec.forks));
        sum += loss * static_cast<double>(chis.size());
        seen += chis.size();
      } catch (const DivergenceError& e) {
        throw DivergenceError("extractor training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
      }
    }
    EpochLog entry{epoch, sum / static_cast<double>(seen), nn::evaluate_mse(model.net, val_in, val_out)};
    if (!std::isfinite(entry.val_mse)) {
      throw DivergenceError("extractor validation loss is not finite at epoch " + std::to_string(epoch));
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
    }
  }
  model.net = std::move(best);
  model.log.best_val_mse = best_val;
  model.log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return model;
}

std::vector<double> extract_all(PhiExtractor& model, const std::vector<const ProcessMatrix*>& chis, std::size_t batch) {
  std::vector<double> out;
  out.reserve(chis.size());
  for (std::size_t first = 0; first < chis.size(); first += batch) {
    const std::size_t len = std::min(batch, chis.size() - first);
    std::vector<const ChiMatrix*> chunk;
    for (std::size_t i = 0; i < len; ++i) chunk.push_back(&chis[first + i]->chi);
    const nn::Tensor y = model.net.forward(flat_inputs(chunk, model.stats), nn::Mode::infer);
    const std::size_t forks = y.dim(1);
    for (std::size_t i = 0; i < len; ++i) out.push_back(model.affine.offset + model.affine.scale * y[i * forks]);
  }
  return out;
}

double extract_phi(PhiExtractor& model, const ProcessMatrix& chi) { return extract_all(model, {&chi}).front(); }

void save_extractor(const std::filesystem::path& path, PhiExtractor& model) {
  Json log = Json::array();
  for (const auto& e : model.log.epochs) log.push_back({{"epoch", e.epoch}, {"train_mse", e.train_mse}, {"val_mse", e.val_mse}});
  Json heads = Json::array();
  for (auto& h : model.net.heads()) heads.push_back(nn::sequential_to_json(h));
  Json j;
  j["schema_version"] = kModelSchemaVersion;
  j["model"] = "ffnn";
  j["spec"] = spec_to_json(model.spec);
  j["seed"] = model.spec.seed;
  j["normalization"] = {{"min", format_double(model.stats.min)}, {"max", format_double(model.stats.max)}};
  j["output_degrees"] = {{"offset", format_double(model.affine.offset)}, {"scale", format_double(model.affine.scale)}};
  j["training"] = {{"best_epoch", model.log.best_epoch},
                   {"best_val_mse", model.log.best_val_mse},
                   {"early_stopped", model.log.early_stopped},
                   {"log", std::move(log)}};
  j["trunk"] = nn::sequential_to_json(model.net.trunk());
  j["heads"] = std::move(heads);
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(1) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

PhiExtractor load_extractor(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    const auto j = Json::parse(in);
    if (j.at("schema_version").get<int>() != kModelSchemaVersion) throw ParseError("unsupported model schema version");
    if (j.at("model").get<std::string>() != "ffnn") throw ParseError("not an extractor model file");
    PhiExtractor model;
    model.spec = spec_from_json(j.at("spec"));
    model.stats.min = parse_double(j.at("normalization").at("min").get<std::string>());
    model.stats.max = parse_double(j.at("normalization").at("max").get<std::string>());
    model.affine.offset = parse_double(j.at("output_degrees").at("offset").get<std::string>());
    model.affine.scale = parse_double(j.at("output_degrees").at("scale").get<std::string>());
    const auto& t = j.at("training");
    model.log.best_epoch = t.at("best_epoch").get<int>();
    model.log.best_val_mse = t.at("best_val_mse").get<double>();
    model.log.early_stopped = t.at("early_stopped").get<bool>();
    for (const auto& e : t.at("log")) {
      model.log.epochs.push_back({e.at("epoch").get<int>(), e.at("train_mse").get<double>(), e.at("val_mse").get<double>()});
    }
    std::vector<nn::Sequential> heads;
    for (const auto& h : j.at("heads")) heads.push_back(nn::sequential_from_json(h));
    model.net = nn::Forked(nn::sequential_from_json(j.at("trunk")), std::move(heads));
    PhiExtractor reference = build_extractor(model.spec, model.stats, model.affine);
    if (model.net.trunk().specs() != reference.net.trunk().specs() ||
        model.net.heads().size() != reference.net.heads().size()) {
      throw ParseError("layer stack does not match the spec");
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

double wrap_degrees(double d) {
  double w = std::fmod(d + 180.0, 360.0);
  if (w < 0.0) w += 360.0;
  return w - 180.0;
}

double snap_to_grid(double degrees, const std::vector<double>& grid_degrees) {
  if (grid_degrees.empty()) throw std::invalid_argument("snap_to_grid: empty grid");
  double best = grid_degrees.front();
  double best_dist = std::numeric_limits<double>::infinity();
  for (double g : grid_degrees) {
    const double dist = std::abs(wrap_degrees(degrees - g));
    if (dist < best_dist) {
      best_dist = dist;
      best = g;
    }
  }
  return best;
}

ResidueReport residue_report(const std::vector<double>& phi_true_degrees, const std::vector<double>& phi_pred_degrees,
                             const std::vector<double>& signal_ratios, const std::vector<double>& grid_degrees,
                             double gate) {
  const std::size_t n = phi_true_degrees.size();
  if (n == 0) throw std::invalid_argument("residue_report: empty slice");
  if (phi_pred_degrees.size() != n || signal_ratios.size() != n) {
    throw std::invalid_argument("residue_report: input lengths differ");
  }
  ResidueReport report;
  report.gate = gate;
  std::vector<double> ratios;
  std::size_t ok = 0, snapped = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ResidueRecord r;
    r.phi_true = phi_true_degrees[i];
    r.phi_pred = phi_pred_degrees[i];
    r.residue = wrap_degrees(r.phi_pred - r.phi_true);
    r.signal_ratio = signal_ratios[i];
    r.success = std::abs(r.residue) <= gate;
    r.snap_correct = std::abs(wrap_degrees(snap_to_grid(r.phi_pred, grid_degrees) - r.phi_true)) < 1e-9;
    ok += r.success;
    snapped += r.snap_correct;
    if (std::find(ratios.begin(), ratios.end(), r.signal_ratio) == ratios.end()) ratios.push_back(r.signal_ratio);
    report.records.push_back(r);
  }
  report.success_rate = static_cast<double>(ok) / static_cast<double>(n);
  report.snap_accuracy = static_cast<double>(snapped) / static_cast<double>(n);
  std::sort(ratios.begin(), ratios.end(), std::greater<>());
  for (double ratio : ratios) {
    RatioBreakdown b;
    b.signal_ratio = ratio;
    std::size_t s = 0, c = 0;
    for (const auto& r : report.records) {
      if (r.signal_ratio != ratio) continue;
      ++b.count;
      s += r.success;
      c += r.snap_correct;
    }
    b.success_rate = static_cast<double>(s) / static_cast<double>(b.count);
    b.snap_accuracy = static_cast<double>(c) / static_cast<double>(b.count);
    report.by_ratio.push_back(b);
  }
  return report;
}

const RatioBreakdown* ResidueReport::ratio(double r) const {
  for (const auto& b : by_ratio) {
    if (std::abs(b.signal_ratio - r) <= 1e-12) return &b;
  }
  return nullptr;
}

std::string ResidueReport::to_csv() const {
  std::string out = "phi_true_deg,phi_pred_deg,residue_deg,signal_ratio,success_flag\n";
  for (const auto& r : records) {
    out += format_double(r.phi_true) + ',' + format_double(r.phi_pred) + ',' + format_double(r.residue) + ',' +
           format_double(r.signal_ratio) + ',' + (r.success ? "1" : "0") + '\n';
  }
  return out;
}

std::string ResidueReport::summary_json() const {
  Json per_r = Json::array();
  for (const auto& b : by_ratio) {
    per_r.push_back({{"signal_ratio", b.signal_ratio},
                     {"count", b.count},
                     {"success_rate", b.success_rate},
                     {"snap_accuracy", b.snap_accuracy}});
  }
  Json j{{"gate_degrees", gate},
         {"count", records.size()},
         {"success_rate", success_rate},
         {"snap_accuracy", snap_accuracy},
         {"by_signal_ratio", std::move(per_r)}};
  return j.dump(2);
}

}  // namespace qpdn
