// qpdn: command-line front end for the tomography / denoising pipeline.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "qpdn/autoencoder.hpp"
#include "qpdn/chi_io.hpp"
#include "qpdn/config.hpp"
#include "qpdn/dataset.hpp"
#include "qpdn/errors.hpp"
#include "qpdn/mle.hpp"
#include "qpdn/parallel.hpp"
#include "qpdn/param_extractor.hpp"
#include "qpdn/random.hpp"
#include "qpdn/reporting.hpp"
#include "qpdn/text_format.hpp"
#include "qpdn/tomography.hpp"

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;
using namespace qpdn;

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kIo = 3, kParse = 4, kMissing = 5, kDiverged = 6 };

constexpr int kSummarySchemaVersion = 1;

class MissingPrerequisite : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<unsigned> threads;
  bool quiet = false;
};

struct Context {
  RunConfig config;
  bool quiet = false;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  void log(const std::string& msg) const {
    if (!quiet) std::cerr << msg << '\n';
  }
  double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

Context make_context(const Globals& g) {
  Context ctx;
  if (!g.config_path.empty()) ctx.config = load_config(g.config_path);
  if (g.seed) ctx.config.seed = *g.seed;
  if (g.threads) {
    ctx.config.threads = *g.threads;
  } else if (const char* env = std::getenv("QPDN_THREADS")) {
    unsigned t = 0;
    if (!try_parse_int(std::string_view(env), t) || t == 0) throw ConfigError("QPDN_THREADS must be a positive integer");
    ctx.config.threads = t;
  }
  if (ctx.config.threads == 0) throw ConfigError("--threads must be positive");
  ctx.quiet = g.quiet || ctx.config.quiet;
  return ctx;
}

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw MissingPrerequisite(what + " not found: " + p.string());
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
    if (ec) throw IoError("cannot create " + p.parent_path().string() + ": " + ec.message());
  }
}

void write_text(const fs::path& p, const std::string& text) {
  ensure_parent(p);
  std::ofstream out(p);
  if (!out) throw IoError("cannot open " + p.string() + " for writing");
  out << text;
  if (!out) throw IoError("write failed: " + p.string());
}

void write_summary(const fs::path& p, const Context& ctx, const std::string& command, Json metrics, Json extra = {}) {
  Json j;
  j["schema_version"] = kSummarySchemaVersion;
  j["command"] = command;
  j["master_seed"] = ctx.config.seed;
  j["seed_scheme"] = kSeedSchemeVersion;
  j["threads"] = ctx.config.threads;
  j["seconds"] = ctx.elapsed();
  j["metrics"] = std::move(metrics);
  if (!extra.is_null()) {
    for (auto& [k, v] : extra.items()) j[k] = v;
  }
  write_text(p, j.dump(2) + "\n");
}

fs::path or_default(const std::string& given, const fs::path& fallback) {
  return given.empty() ? fallback : fs::path(given);
}

Dataset load_normalized(const fs::path& dir) {
  require_file(dir / "manifest.json", "dataset");
  Dataset d = read_dataset(dir);
  if (!d.stats) d = normalize(std::move(d));
  return d;
}

std::vector<const ProcessMatrix*> noisy_of(const std::vector<const Record*>& records) {
  std::vector<const ProcessMatrix*> out;
  for (const Record* r : records) out.push_back(&r->noisy);
  return out;
}

Json epoch_log_json(const TrainingLog& log) {
  return {{"epochs_run", log.epochs.size()},
          {"best_epoch", log.best_epoch},
          {"best_val_mse", log.best_val_mse},
          {"first_val_mse", log.epochs.empty() ? 0.0 : log.epochs.front().val_mse},
          {"early_stopped", log.early_stopped},
          {"training_seconds", log.seconds}};
}

std::vector<int> parse_kernel_list(const std::string& text) {
  std::vector<int> ks;
  const auto dots = text.find("..");
  if (dots != std::string::npos) {
    int lo = 0, hi = 0;
    if (!try_parse_int(std::string_view(text).substr(0, dots), lo) ||
        !try_parse_int(std::string_view(text).substr(dots + 2), hi) || lo > hi) {
      throw ConfigError("--k expects a range like 1..7 or a list like 2,3");
    }
    for (int k = lo; k <= hi; ++k) ks.push_back(k);
    return ks;
  }
  for (auto cell : split_csv(text)) {
    int k = 0;
    if (!try_parse_int(cell, k)) throw ConfigError("--k expects a range like 1..7 or a list like 2,3");
    ks.push_back(k);
  }
  return ks;
}

// --- gen -------------------------------------------------------------------

struct GenOptions {
  std::optional<int> instances;
  std::string counts;
  std::optional<double> phi;
  double ratio = 1.0;
  bool noiseless = false;
};

int cmd_gen(const Globals& g, const GenOptions& o) {
  Context ctx = make_context(g);
  if (!o.counts.empty()) {
    if (!o.phi) throw ConfigError("gen --counts needs --phi");
    CountTable table = expected_counts(ideal_chi(*o.phi), o.ratio);
    if (!o.noiseless) table = sample_counts(table, ctx.config.seed);
    table.phi = *o.phi;
    ensure_parent(o.counts);
    write_counts_csv(fs::path(o.counts), table);
    ctx.log("wrote counts " + o.counts);
    return kOk;
  }
  if (o.instances) ctx.config.instances = *o.instances;
  const fs::path dir = or_default(g.out, ctx.config.paths.dataset);
  ctx.log("generating " + std::to_string(ctx.config.phis.size() * ctx.config.ratios.size() * ctx.config.instances) +
          " records");
  Dataset d = normalize(generate_dataset(ctx.config.generation()));
  write_dataset(dir, d);
  const SplitCounts c = d.split_counts();
  write_summary(dir / "summary.json", ctx, "gen",
                {{"records", d.records.size()},
                 {"train", c.train},
                 {"val", c.val},
                 {"test", c.test},
                 {"normalization_min", d.stats->min},
                 {"normalization_max", d.stats->max}});
  ctx.log("wrote dataset " + dir.string());
  return kOk;
}

// --- qpt -------------------------------------------------------------------

struct QptOptions {
  std::string counts;
  std::string method = "linear";
  std::optional<double> phi;
};

int cmd_qpt(const Globals& g, const QptOptions& o) {
  Context ctx = make_context(g);
  if (!fs::exists(o.counts)) throw IoError("counts file not found: " + o.counts);
  const CountTable table = read_counts_csv(fs::path(o.counts));
  const fs::path out = or_default(g.out, "chi.csv");
  Json metrics;
  ProcessMatrix chi;
  if (o.method == "linear") {
    const LinearInversion inv = chi_least_squares(table);
    chi = inv.process;
    metrics["degenerate"] = inv.degenerate;
  } else if (o.method == "mle") {
    const MleReport rep = mle_fit(table, ctx.config.mle);
    chi = rep.chi_hat;
    metrics["initial_objective"] = rep.initial_objective;
    metrics["final_objective"] = rep.final_objective;
    metrics["iterations"] = rep.iterations;
    metrics["converged"] = rep.converged;
    metrics["gradient_norm"] = rep.gradient_norm;
    metrics["near_zero_eigenvalues"] = rep.near_zero_eigenvalues;
    metrics["stop_reason"] = rep.stop_reason;
  } else {
    throw ConfigError("--method must be linear or mle");
  }
  const std::optional<double> phi = o.phi ? o.phi : table.phi;
  chi.phi = phi;
  chi.signal_ratio = table.signal_ratio;
  if (phi) {
    const double f = process_fidelity(chi, ideal_chi(*phi));
    metrics["fidelity"] = f;
    metrics["fidelity_deficit"] = 1.0 - f;
    ctx.log("fidelity " + format_double(f));
  }
  metrics["method"] = o.method;
  ensure_parent(out);
  write_chi_csv(out, chi);
  write_summary(fs::path(out.string() + ".json"), ctx, "qpt", std::move(metrics));
  ctx.log("wrote " + out.string());
  return kOk;
}

// --- train-ae / sweep-kernel --------------------------------------------------

struct TrainOptions {
  std::string dataset;
  std::string autoencoder;
  std::optional<int> kernel;
  std::optional<int> epochs;
  std::string kernels = "1..7";
};

int cmd_train_ae(const Globals& g, const TrainOptions& o) {
  Context ctx = make_context(g);
  AutoencoderSpec spec = ctx.config.autoencoder;
  if (o.kernel) spec.kernel = *o.kernel;
  if (o.epochs) spec.epochs = *o.epochs;
  spec.validate();
  const Dataset d = load_normalized(or_default(o.dataset, ctx.config.paths.dataset));
  const fs::path out = or_default(g.out, ctx.config.paths.models / "autoencoder.json");
  Autoencoder model = train_autoencoder(spec, d, [&](const EpochLog& e) {
    ctx.log("epoch " + std::to_string(e.epoch) + " train_mse " + format_double(e.train_mse) + " val_mse " +
            format_double(e.val_mse));
  });
  ensure_parent(out);
  save_autoencoder(out, model);
  const auto test = d.slice(Split::test);
  const auto denoised = denoise_all(model, noisy_of(test));
  double sum = 0.0;
  for (std::size_t i = 0; i < test.size(); ++i) sum += process_fidelity(denoised[i], test[i]->target);
  Json metrics = epoch_log_json(model.log);
  metrics["kernel"] = spec.kernel;
  metrics["mean_test_fidelity"] = test.empty() ? 0.0 : sum / static_cast<double>(test.size());
  metrics["dataset_instances"] = d.instances;
  write_summary(fs::path(out.string() + ".summary.json"), ctx, "train-ae", std::move(metrics));
  ctx.log("wrote " + out.string());
  return kOk;
}

int cmd_sweep(const Globals& g, const TrainOptions& o) {
  Context ctx = make_context(g);
  AutoencoderSpec spec = ctx.config.autoencoder;
  if (o.epochs) spec.epochs = *o.epochs;
  const std::vector<int> kernels = parse_kernel_list(o.kernels);
  const Dataset d = load_normalized(or_default(o.dataset, ctx.config.paths.dataset));
  const fs::path dir = or_default(g.out, ctx.config.paths.reports / "sweep");
  ctx.log("training " + std::to_string(kernels.size()) + " autoencoders");
  const SweepReport report = kernel_sweep(spec, d, kernels, ctx.config.threads);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  Json entries = Json::array();
  for (const auto& e : report.entries) {
    const auto paths = write_heatmap(e.heatmap, dir / ("k" + std::to_string(e.kernel) + "_theory_minus_denoised"));
    Json files = Json::array();
    for (const auto& p : paths) files.push_back(p.filename().string());
    entries.push_back({{"kernel", e.kernel},
                       {"val_mse", e.val_mse},
                       {"mean_test_fidelity", e.mean_test_fidelity},
                       {"best_epoch", e.best_epoch},
                       {"heatmap_max_abs", e.heatmap.max_abs()},
                       {"heatmaps", std::move(files)}});
    ctx.log("k=" + std::to_string(e.kernel) + " val_mse " + format_double(e.val_mse));
  }
  write_heatmap(report.noisy_heatmap, dir / "noisy_theory_minus_noisy");
  Json sweep{{"schema_version", kSummarySchemaVersion},
             {"best_k", report.best_k},
             {"reference_test_record", report.reference_record},
             {"noisy_heatmap_max_abs", report.noisy_heatmap.max_abs()},
             {"entries", std::move(entries)}};
  write_text(dir / "sweep.json", sweep.dump(2) + "\n");
  write_summary(dir / "summary.json", ctx, "sweep-kernel", {{"best_k", report.best_k}},
                {{"epochs", spec.epochs}, {"dataset_instances", d.instances}});
  ctx.log("best k = " + std::to_string(report.best_k));
  return kOk;
}

// --- denoise ---------------------------------------------------------------

struct DenoiseOptions {
  std::string autoencoder;
  std::string input;
};

int cmd_denoise(const Globals& g, const DenoiseOptions& o) {
  Context ctx = make_context(g);
  const fs::path model_path = or_default(o.autoencoder, ctx.config.paths.models / "autoencoder.json");
  require_file(model_path, "autoencoder model");
  require_file(o.input, "input chi file");
  Autoencoder model = load_autoencoder(model_path);
  const ProcessMatrix noisy = read_chi_csv(fs::path(o.input));
  const ProcessMatrix out = denoise(model, noisy);
  const fs::path path = or_default(g.out, "denoised.csv");
  ensure_parent(path);
  write_chi_csv(path, out);
  Json metrics{{"hermiticity_defect", hermiticity_defect(out.chi)}};
  if (noisy.phi) {
    const ProcessMatrix theory = ideal_chi(*noisy.phi);
    metrics["fidelity_in"] = process_fidelity(noisy, theory);
    metrics["fidelity_out"] = process_fidelity(out, theory);
  }
  write_summary(fs::path(path.string() + ".json"), ctx, "denoise", std::move(metrics));
  ctx.log("wrote " + path.string());
  return kOk;
}

// --- train-ffnn / extract ----------------------------------------------------

struct ExtractOptions {
  std::string dataset;
  std::string autoencoder;
  std::string ffnn;
  std::string input;
  bool skip_denoise = false;
  std::optional<int> epochs;
};

int cmd_train_ffnn(const Globals& g, const ExtractOptions& o) {
  Context ctx = make_context(g);
  const fs::path ae_path = or_default(o.autoencoder, ctx.config.paths.models / "autoencoder.json");
  require_file(ae_path, "autoencoder model");
  Autoencoder ae = load_autoencoder(ae_path);
  const Dataset d = load_normalized(or_default(o.dataset, ctx.config.paths.dataset));
  FfnnSpec spec = ctx.config.ffnn;
  if (o.epochs) spec.epochs = *o.epochs;
  const auto train = d.slice(Split::train);
  const auto val = d.slice(Split::val);
  const auto train_ex = phi_examples(train, denoise_all(ae, noisy_of(train)));
  const auto val_ex = phi_examples(val, denoise_all(ae, noisy_of(val)));
  PhiExtractor model = train_ffnn(spec, ae.stats, train_ex, val_ex, [&](const EpochLog& e) {
    ctx.log("epoch " + std::to_string(e.epoch) + " train_mse " + format_double(e.train_mse) + " val_mse " +
            format_double(e.val_mse));
  });
  const fs::path out = or_default(g.out, ctx.config.paths.models / "ffnn.json");
  ensure_parent(out);
  save_extractor(out, model);
  Json metrics = epoch_log_json(model.log);
  metrics["first_train_mse"] = model.log.epochs.front().train_mse;
  metrics["last_train_mse"] = model.log.epochs.back().train_mse;
  write_summary(fs::path(out.string() + ".summary.json"), ctx, "train-ffnn", std::move(metrics));
  ctx.log("wrote " + out.string());
  return kOk;
}

int cmd_extract(const Globals& g, const ExtractOptions& o) {
  Context ctx = make_context(g);
  const fs::path ae_path = or_default(o.autoencoder, ctx.config.paths.models / "autoencoder.json");
  const fs::path ffnn_path = or_default(o.ffnn, ctx.config.paths.models / "ffnn.json");
  require_file(ffnn_path, "extractor model");
  if (!o.skip_denoise) require_file(ae_path, "autoencoder model");
  PhiExtractor extractor = load_extractor(ffnn_path);
  std::optional<Autoencoder> ae;
  if (!o.skip_denoise) ae = load_autoencoder(ae_path);

  if (!o.input.empty()) {
    require_file(o.input, "input chi file");
    ProcessMatrix chi = read_chi_csv(fs::path(o.input));
    if (ae) chi = denoise(*ae, chi);
    const double deg = extract_phi(extractor, chi);
    std::cout << format_double(deg) << '\n';
    Json metrics{{"phi_degrees", deg}};
    if (chi.phi) metrics["residue_degrees"] = wrap_degrees(deg - to_degrees(*chi.phi));
    if (!g.out.empty()) write_summary(fs::path(g.out), ctx, "extract", std::move(metrics));
    return kOk;
  }

  const Dataset d = load_normalized(or_default(o.dataset, ctx.config.paths.dataset));
  const auto test = d.slice(Split::test);
  std::vector<ProcessMatrix> inputs;
  if (ae) {
    inputs = denoise_all(*ae, noisy_of(test));
  } else {
    for (const Record* r : test) inputs.push_back(r->noisy);
  }
  std::vector<const ProcessMatrix*> ptrs;
  for (const auto& m : inputs) ptrs.push_back(&m);
  const std::vector<double> pred = extract_all(extractor, ptrs);
  std::vector<double> truth, ratios, grid;
  for (const Record* r : test) {
    truth.push_back(to_degrees(r->phi));
    ratios.push_back(r->signal_ratio);
  }
  for (double phi : d.phis) grid.push_back(to_degrees(phi));
  const ResidueReport report = residue_report(truth, pred, ratios, grid);
  const fs::path dir = or_default(g.out, ctx.config.paths.reports / "extract");
  write_text(dir / "residues.csv", report.to_csv());
  write_text(dir / "residue_summary.json", report.summary_json() + "\n");
  Json per_r = Json::array();
  for (const auto& b : report.by_ratio) {
    per_r.push_back({{"signal_ratio", b.signal_ratio}, {"success_rate", b.success_rate}});
    ctx.log("r=" + format_double(b.signal_ratio) + " success " + format_double(b.success_rate));
  }
  write_summary(dir / "summary.json", ctx, "extract",
                {{"success_rate", report.success_rate}, {"snap_accuracy", report.snap_accuracy}, {"by_signal_ratio", per_r}});
  return kOk;
}

// --- report ----------------------------------------------------------------

struct ReportOptions {
  std::string dataset;
  std::string autoencoder;
  std::vector<double> phis;
  double ratio = 1.0;
};

int cmd_report(const Globals& g, const ReportOptions& o) {
  Context ctx = make_context(g);
  const fs::path ae_path = or_default(o.autoencoder, ctx.config.paths.models / "autoencoder.json");
  require_file(ae_path, "autoencoder model");
  Autoencoder ae = load_autoencoder(ae_path);
  const Dataset d = load_normalized(or_default(o.dataset, ctx.config.paths.dataset));
  constexpr double pi = std::numbers::pi;
  std::vector<double> phis = o.phis;
  if (phis.empty()) phis = {pi / 2, 5 * pi / 4, 5 * pi / 3, 5 * pi / 6, pi / 6};

  std::vector<const Record*> chosen;
  for (const Record* r : d.slice(Split::test)) {
    if (r->signal_ratio != o.ratio) continue;
    for (double phi : phis) {
      if (std::abs(r->phi - phi) <= 1e-9) chosen.push_back(r);
    }
  }
  if (chosen.empty()) throw ConfigError("no test records match the requested phi values and ratio");
  ctx.log("fitting MLE on " + std::to_string(chosen.size()) + " records");
  std::vector<double> mle_f(chosen.size());
  parallel_for(chosen.size(), ctx.config.threads, [&](std::size_t i) {
    mle_f[i] = process_fidelity(mle_fit(record_counts(d, *chosen[i]), ctx.config.mle).chi_hat, chosen[i]->target);
  });
  const auto denoised = denoise_all(ae, noisy_of(chosen));
  std::vector<FidelitySample> samples;
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    const double phi = chosen[i]->phi;
    samples.push_back({phi, "noisy", process_fidelity(chosen[i]->noisy, chosen[i]->target)});
    samples.push_back({phi, "mle", mle_f[i]});
    samples.push_back({phi, "denoised", process_fidelity(denoised[i], chosen[i]->target)});
  }
  const FidelityTable table = fidelity_table(samples, phis, {"noisy", "mle", "denoised"});
  const fs::path dir = or_default(g.out, ctx.config.paths.reports / "table");
  write_text(dir / "fidelity_table.csv", table.to_csv());
  write_text(dir / "fidelity_table.txt", table.to_text());
  for (double phi : phis) {
    for (std::size_t i = 0; i < chosen.size(); ++i) {
      if (std::abs(chosen[i]->phi - phi) > 1e-9) continue;
      std::string label = phi_label(phi);
      std::replace(label.begin(), label.end(), '/', '_');
      write_heatmap(diff_heatmap(chosen[i]->noisy, chosen[i]->target), dir / ("phi_" + label + "_noisy_minus_theory"));
      write_heatmap(diff_heatmap(denoised[i], chosen[i]->target), dir / ("phi_" + label + "_denoised_minus_theory"));
      break;
    }
  }
  if (!ctx.quiet) std::cerr << table.to_text();
  Json rows = Json::array();
  for (std::size_t p = 0; p < phis.size(); ++p) {
    Json row{{"phi", phis[p]}};
    for (std::size_t m = 0; m < table.methods.size(); ++m) {
      row[table.methods[m]] = {{"mean", table.cells[p][m].mean}, {"std", table.cells[p][m].stddev}, {"n", table.cells[p][m].count}};
    }
    rows.push_back(std::move(row));
  }
  write_summary(dir / "summary.json", ctx, "report", {{"signal_ratio", o.ratio}, {"rows", std::move(rows)}});
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Process tomography of the control-phase channel: simulation, MLE and neural denoising"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "Run configuration file");
  app.add_option("--seed", g.seed, "Master seed");
  app.add_option("--out", g.out, "Output path (file or directory, per command)");
  app.add_option("--threads", g.threads, "Worker threads (default: $QPDN_THREADS, then config)");
  app.add_flag("--quiet", g.quiet, "Suppress progress output");

  GenOptions gen;
  auto* c_gen = app.add_subcommand("gen", "Generate a dataset, or a single counts file with --counts");
  c_gen->add_option("--instances", gen.instances, "Instances per (phi, r)");
  c_gen->add_option("--counts", gen.counts, "Write one counts table here instead of a dataset");
  c_gen->add_option("--phi", gen.phi, "Control phase (radians) for --counts");
  c_gen->add_option("--ratio", gen.ratio, "Signal ratio for --counts");
  c_gen->add_flag("--noiseless", gen.noiseless, "Expected counts without Poisson noise");

  QptOptions qpt;
  auto* c_qpt = app.add_subcommand("qpt", "Reconstruct chi from a counts file");
  c_qpt->add_option("counts", qpt.counts, "Counts CSV")->required();
  c_qpt->add_option("--method", qpt.method, "linear or mle");
  c_qpt->add_option("--phi", qpt.phi, "Reference phase for the fidelity report (radians)");

  TrainOptions train;
  auto* c_train = app.add_subcommand("train-ae", "Train the denoising autoencoder");
  c_train->add_option("--dataset", train.dataset, "Dataset directory");
  c_train->add_option("--kernel", train.kernel, "Kernel size 1..7");
  c_train->add_option("--epochs", train.epochs, "Maximum epochs");

  auto* c_sweep = app.add_subcommand("sweep-kernel", "Train one autoencoder per kernel size");
  c_sweep->add_option("--dataset", train.dataset, "Dataset directory");
  c_sweep->add_option("--k", train.kernels, "Kernel sizes: 1..7 or 2,3");
  c_sweep->add_option("--epochs", train.epochs, "Maximum epochs per model");

  DenoiseOptions den;
  auto* c_den = app.add_subcommand("denoise", "Denoise one chi matrix");
  c_den->add_option("input", den.input, "Noisy chi CSV")->required();
  c_den->add_option("--model", den.autoencoder, "Autoencoder model file");

  ExtractOptions ext;
  auto* c_tf = app.add_subcommand("train-ffnn", "Train the phase extractor on theoretical + denoised matrices");
  c_tf->add_option("--dataset", ext.dataset, "Dataset directory");
  c_tf->add_option("--autoencoder", ext.autoencoder, "Autoencoder model file");
  c_tf->add_option("--epochs", ext.epochs, "Maximum epochs");

  auto* c_ext = app.add_subcommand("extract", "Extract phi from one chi file or score the test split");
  c_ext->add_option("--dataset", ext.dataset, "Dataset directory");
  c_ext->add_option("--autoencoder", ext.autoencoder, "Autoencoder model file");
  c_ext->add_option("--ffnn", ext.ffnn, "Extractor model file");
  c_ext->add_option("--input", ext.input, "Single chi CSV");
  c_ext->add_flag("--no-denoise", ext.skip_denoise, "Input is already clean; skip the autoencoder");

  ReportOptions rep;
  auto* c_rep = app.add_subcommand("report", "Fidelity table (noisy / MLE / denoised) and difference heatmaps");
  c_rep->add_option("--dataset", rep.dataset, "Dataset directory");
  c_rep->add_option("--autoencoder", rep.autoencoder, "Autoencoder model file");
  c_rep->add_option("--phi", rep.phis, "Phases to tabulate (radians)");
  c_rep->add_option("--ratio", rep.ratio, "Signal ratio");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (c_gen->parsed()) return cmd_gen(g, gen);
    if (c_qpt->parsed()) return cmd_qpt(g, qpt);
    if (c_train->parsed()) return cmd_train_ae(g, train);
    if (c_sweep->parsed()) return cmd_sweep(g, train);
    if (c_den->parsed()) return cmd_denoise(g, den);
    if (c_tf->parsed()) return cmd_train_ffnn(g, ext);
    if (c_ext->parsed()) return cmd_extract(g, ext);
    if (c_rep->parsed()) return cmd_report(g, rep);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kIo;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kParse;
  } catch (const MissingPrerequisite& e) {
    std::cerr << "missing prerequisite: " << e.what() << '\n';
    return kMissing;
  } catch (const DivergenceError& e) {
    std::cerr << "training diverged: " << e.what() << '\n';
    return kDiverged;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfig;
  }
  return kOk;
}
