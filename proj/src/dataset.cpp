#include "qpdn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>

#include <nlohmann/json.hpp>

#include "qpdn/errors.hpp"
#include "qpdn/parallel.hpp"
#include "qpdn/random.hpp"
#include "qpdn/text_format.hpp"
#include "qpdn/tomography.hpp"

namespace qpdn {

namespace {

constexpr const char* kSplitFiles[] = {"train.csv", "val.csv", "test.csv"};
constexpr int kMetaColumns = 4;
constexpr int kChiColumns = 2 * kChiDim * kChiDim;  // 512

void write_components(std::ostream& out, const ChiMatrix& chi) {
  for (int m = 0; m < kChiDim; ++m)
    for (int n = 0; n < kChiDim; ++n)
      out << ',' << format_double(chi(m, n).real()) << ',' << format_double(chi(m, n).imag());
}

std::string csv_header() {
  std::string h = "phi_radians,phi_degrees,signal_ratio,instance_id";
  for (const char* prefix : {"noisy", "target"})
    for (int m = 0; m < kChiDim; ++m)
      for (int n = 0; n < kChiDim; ++n)
        for (const char* part : {"re", "im"})
          h += std::string(",") + prefix + "_" + part + "_" + std::to_string(m) + "_" + std::to_string(n);
  return h;
}

}  // namespace

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

SplitCounts Dataset::split_counts() const {
  SplitCounts c;
  for (const auto& r : records) {
    switch (r.split) {
      case Split::train: ++c.train; break;
      case Split::val: ++c.val; break;
      case Split::test: ++c.test; break;
    }
  }
  return c;
}

std::vector<const Record*> Dataset::slice(Split split) const {
  std::vector<const Record*> out;
  for (const auto& r : records)
    if (r.split == split) out.push_back(&r);
  return out;
}

std::vector<double> default_phi_grid() {
  constexpr double pi = std::numbers::pi;
  return {pi / 6,          pi / 4,      pi / 3,          pi / 2,          2 * pi / 3, 3 * pi / 4,
          5 * pi / 6,      pi,          7 * pi / 6,      5 * pi / 4,      4 * pi / 3, 3 * pi / 2,
          5 * pi / 3,      7 * pi / 4,  11 * pi / 6,     2 * pi};
}

std::vector<double> default_signal_ratios() { return {1.0, 0.5, 0.1}; }

SplitCounts stratum_split(int n) {
  SplitCounts c;
  c.train = static_cast<std::size_t>(std::lround(0.75 * n));
  c.val = static_cast<std::size_t>(std::lround(0.10 * n));
  if (c.train + c.val > static_cast<std::size_t>(n)) c.val = static_cast<std::size_t>(n) - c.train;
  c.test = static_cast<std::size_t>(n) - c.train - c.val;
  return c;
}

std::uint64_t record_seed(std::uint64_t master, std::size_t phi_index, std::size_t ratio_index, int instance) {
  return derive_seed(master, {phi_index, ratio_index, static_cast<std::uint64_t>(instance)});
}

Dataset generate_dataset(const GenerationConfig& config) {
  if (config.phis.empty()) throw std::invalid_argument("generate_dataset: empty phi grid");
  if (config.ratios.empty()) throw std::invalid_argument("generate_dataset: empty ratio list");
  if (config.instances < 1) throw std::invalid_argument("generate_dataset: instances must be >= 1");

  Dataset ds;
  ds.master_seed = config.master_seed;
  ds.phis = config.phis;
  ds.ratios = config.ratios;
  ds.instances = config.instances;

  const std::size_t per_stratum = static_cast<std::size_t>(config.instances);
  const std::size_t strata = config.phis.size() * config.ratios.size();
  ds.records.resize(strata * per_stratum);
  const SplitCounts split = stratum_split(config.instances);

  std::vector<ProcessMatrix> ideals;
  for (double phi : config.phis) ideals.push_back(ideal_chi(phi));
  std::vector<CountTable> expected(strata);
  for (std::size_t p = 0; p < config.phis.size(); ++p)
    for (std::size_t r = 0; r < config.ratios.size(); ++r)
      expected[p * config.ratios.size() + r] = expected_counts(ideals[p], config.ratios[r]);

  parallel_for(ds.records.size(), config.threads, [&](std::size_t index) {
    const std::size_t stratum = index / per_stratum;
    const int instance = static_cast<int>(index % per_stratum);
    const std::size_t p = stratum / config.ratios.size();
    const std::size_t r = stratum % config.ratios.size();
    const CountTable counts = sample_counts(expected[stratum], record_seed(config.master_seed, p, r, instance));
    Record& rec = ds.records[index];
    rec.noisy = chi_least_squares(counts).process;
    rec.target = ideals[p];
    rec.phi = config.phis[p];
    rec.signal_ratio = config.ratios[r];
    rec.noisy.phi = rec.phi;
    rec.noisy.signal_ratio = rec.signal_ratio;
    rec.target.signal_ratio = rec.signal_ratio;
    rec.instance = instance;
    const auto pos = static_cast<std::size_t>(instance);
    rec.split = pos < split.train ? Split::train : (pos < split.train + split.val ? Split::val : Split::test);
  });
  return ds;
}

CountTable record_counts(const Dataset& dataset, const Record& record) {
  auto index_of = [](const std::vector<double>& grid, double v, const char* what) {
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (grid[i] == v) return i;
    }
    throw std::invalid_argument(std::string("record_counts: ") + what + " not on the dataset grid");
  };
  const std::size_t p = index_of(dataset.phis, record.phi, "phi");
  const std::size_t r = index_of(dataset.ratios, record.signal_ratio, "signal ratio");
  const CountTable expected = expected_counts(ideal_chi(record.phi), record.signal_ratio);
  return sample_counts(expected, record_seed(dataset.master_seed, p, r, record.instance));
}

NormalizationStats compute_normalization(const Dataset& dataset) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (const auto& rec : dataset.records) {
    if (rec.split != Split::train) continue;
    any = true;
    lo = std::min({lo, rec.noisy.chi.real().minCoeff(), rec.noisy.chi.imag().minCoeff()});
    hi = std::max({hi, rec.noisy.chi.real().maxCoeff(), rec.noisy.chi.imag().maxCoeff()});
  }
  if (!any) throw std::invalid_argument("normalize: training split is empty");
  if (!(hi > lo)) throw std::invalid_argument("normalize: constant dataset (max == min)");
  return {lo, hi};
}

Dataset normalize(Dataset dataset) {
  dataset.stats = compute_normalization(dataset);
  return dataset;
}

void write_dataset(const std::filesystem::path& dir, const Dataset& dataset) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  nlohmann::ordered_json manifest;
  manifest["schema_version"] = kDatasetSchemaVersion;
  manifest["master_seed"] = dataset.master_seed;
  manifest["seed_scheme"] = kSeedSchemeVersion;
  manifest["phi_grid"] = dataset.phis;
  manifest["ratios"] = dataset.ratios;
  manifest["instances"] = dataset.instances;
  const SplitCounts counts = dataset.split_counts();
  manifest["split_counts"] = {{"train", counts.train}, {"val", counts.val}, {"test", counts.test}};
  if (dataset.stats) {
    manifest["normalization"] = {{"min", format_double(dataset.stats->min)},
                                 {"max", format_double(dataset.stats->max)}};
  }
  {
    std::ofstream out(dir / "manifest.json");
    if (!out) throw IoError("cannot write manifest in " + dir.string());
    out << manifest.dump(2) << '\n';
  }

  const std::string header = csv_header();
  for (int s = 0; s < 3; ++s) {
    std::ofstream out(dir / kSplitFiles[s]);
    if (!out) throw IoError("cannot write " + std::string(kSplitFiles[s]));
    out << header << '\n';
    for (const auto& rec : dataset.records) {
      if (static_cast<int>(rec.split) != s) continue;
      out << format_double(rec.phi) << ',' << format_double(rec.phi * 180.0 / std::numbers::pi) << ','
          << format_double(rec.signal_ratio) << ',' << rec.instance;
      write_components(out, rec.noisy.chi);
      write_components(out, rec.target.chi);
      out << '\n';
    }
    if (!out) throw IoError("write failed: " + std::string(kSplitFiles[s]));
  }
}

Dataset read_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw IoError("missing manifest.json in " + dir.string());
    nlohmann::json manifest;
    try {
      in >> manifest;
      if (manifest.at("schema_version").get<int>() != kDatasetSchemaVersion) {
        throw ParseError("unsupported dataset schema version");
      }
      ds.master_seed = manifest.at("master_seed").get<std::uint64_t>();
      ds.phis = manifest.at("phi_grid").get<std::vector<double>>();
      ds.ratios = manifest.at("ratios").get<std::vector<double>>();
      ds.instances = manifest.at("instances").get<int>();
      if (manifest.contains("normalization")) {
        const auto& n = manifest["normalization"];
        ds.stats = NormalizationStats{parse_double(n.at("min").get<std::string>()),
                                      parse_double(n.at("max").get<std::string>())};
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("manifest.json: ") + e.what());
    }
  }

  for (int s = 0; s < 3; ++s) {
    std::ifstream in(dir / kSplitFiles[s]);
    if (!in) throw IoError("missing " + std::string(kSplitFiles[s]) + " in " + dir.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line_no == 1 || line.empty()) continue;
      const auto cells = split_csv(line);
      if (cells.size() != kMetaColumns + 2 * kChiColumns) {
        throw ParseError(std::string(kSplitFiles[s]) + ": wrong column count", line_no);
      }
      Record rec;
      rec.split = static_cast<Split>(s);
      long long instance = 0;
      if (!try_parse_double(cells[0], rec.phi) || !try_parse_double(cells[2], rec.signal_ratio) ||
          !try_parse_int(cells[3], instance)) {
        throw ParseError(std::string(kSplitFiles[s]) + ": bad metadata", line_no);
      }
      rec.instance = static_cast<int>(instance);
      for (int block = 0; block < 2; ++block) {
        ChiMatrix& chi = block == 0 ? rec.noisy.chi : rec.target.chi;
        const int base = kMetaColumns + block * kChiColumns;
        for (int e = 0; e < kChiDim * kChiDim; ++e) {
          double re = 0.0, im = 0.0;
          if (!try_parse_double(cells[base + 2 * e], re) || !try_parse_double(cells[base + 2 * e + 1], im)) {
            throw ParseError(std::string(kSplitFiles[s]) + ": non-numeric component", line_no);
          }
          chi(e / kChiDim, e % kChiDim) = Complex{re, im};
        }
      }
      rec.noisy.label = ChiLabel::noisy;
      rec.target.label = ChiLabel::theoretical;
      rec.noisy.phi = rec.target.phi = rec.phi;
      rec.noisy.signal_ratio = rec.target.signal_ratio = rec.signal_ratio;
      ds.records.push_back(std::move(rec));
    }
  }

  // Back to generation order: phi-major, then r, then instance.
  auto position = [](const std::vector<double>& grid, double v) {
    return static_cast<std::size_t>(std::find(grid.begin(), grid.end(), v) - grid.begin());
  };
  std::stable_sort(ds.records.begin(), ds.records.end(), [&](const Record& a, const Record& b) {
    const auto ka = std::tuple(position(ds.phis, a.phi), position(ds.ratios, a.signal_ratio), a.instance);
    const auto kb = std::tuple(position(ds.phis, b.phi), position(ds.ratios, b.signal_ratio), b.instance);
    return ka < kb;
  });
  return ds;
}

}  // namespace qpdn
