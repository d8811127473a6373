#include <fstream>
#include <numbers>

#include <gtest/gtest.h>

#include "qpdn/chi_io.hpp"
#include "qpdn/dataset.hpp"
#include "qpdn/errors.hpp"
#include "qpdn/reporting.hpp"
#include "test_util.hpp"

using namespace qpdn;

namespace {

constexpr double pi = std::numbers::pi;

GenerationConfig small_config(unsigned threads = 1) {
  GenerationConfig c;
  c.phis = {pi / 6, pi / 2, 2 * pi};
  c.ratios = {1.0, 0.1};
  c.instances = 20;
  c.master_seed = 99;
  c.threads = threads;
  return c;
}

}  // namespace

TEST(Grid, DefaultPhasesAndRatios) {
  const auto phis = default_phi_grid();
  ASSERT_EQ(phis.size(), 16u);
  EXPECT_DOUBLE_EQ(phis.front(), pi / 6);
  EXPECT_DOUBLE_EQ(phis.back(), 2 * pi);
  EXPECT_EQ(default_signal_ratios(), (std::vector<double>{1.0, 0.5, 0.1}));
}

TEST(Split, StratumSizes) {
  const auto c = stratum_split(500);
  EXPECT_EQ(c.train, 375u);
  EXPECT_EQ(c.val, 50u);
  EXPECT_EQ(c.test, 75u);
  const auto d = stratum_split(7);
  EXPECT_EQ(d.train + d.val + d.test, 7u);
}

TEST(Generation, LayoutAndSplits) {
  const Dataset ds = generate_dataset(small_config());
  ASSERT_EQ(ds.records.size(), 3u * 2u * 20u);
  const auto counts = ds.split_counts();
  EXPECT_EQ(counts.train, 6u * 15u);
  EXPECT_EQ(counts.val, 6u * 2u);
  EXPECT_EQ(counts.test, 6u * 3u);
  EXPECT_DOUBLE_EQ(ds.records[0].phi, pi / 6);
  EXPECT_DOUBLE_EQ(ds.records[20].signal_ratio, 0.1);
  EXPECT_EQ(ds.records[21].instance, 1);
}

TEST(Generation, BitIdenticalAcrossRunsAndThreads) {
  const Dataset a = generate_dataset(small_config(1));
  const Dataset b = generate_dataset(small_config(1));
  const Dataset c = generate_dataset(small_config(3));
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    EXPECT_EQ(a.records[i].noisy.chi, b.records[i].noisy.chi);
    EXPECT_EQ(a.records[i].noisy.chi, c.records[i].noisy.chi);
  }
}

TEST(Generation, RecordCountsReproduceNoisyChi) {
  const Dataset ds = generate_dataset(small_config());
  for (std::size_t i : {0ul, 37ul, 119ul}) {
    const auto& rec = ds.records[i];
    EXPECT_EQ(chi_least_squares(record_counts(ds, rec)).process.chi, rec.noisy.chi);
  }
}

TEST(Generation, DifferenceMapsHaveHermitianSymmetry) {
  const Dataset ds = generate_dataset(small_config());
  for (const auto& rec : ds.records) {
    const Heatmap h = diff_heatmap(rec.target, rec.noisy);
    ASSERT_TRUE(has_hermitian_symmetry(h)) << hermitian_difference_defect(h);
  }
}

TEST(Generation, RejectsEmptyGrid) {
  GenerationConfig c = small_config();
  c.phis.clear();
  EXPECT_THROW(generate_dataset(c), std::invalid_argument);
  c = small_config();
  c.instances = 0;
  EXPECT_THROW(generate_dataset(c), std::invalid_argument);
}

TEST(Normalization, UsesTrainSplitOnly) {
  Dataset ds = generate_dataset(small_config());
  double lo = 1e300, hi = -1e300;
  for (const auto& r : ds.records) {
    if (r.split != Split::train) continue;
    lo = std::min({lo, r.noisy.chi.real().minCoeff(), r.noisy.chi.imag().minCoeff()});
    hi = std::max({hi, r.noisy.chi.real().maxCoeff(), r.noisy.chi.imag().maxCoeff()});
  }
  ds = normalize(std::move(ds));
  ASSERT_TRUE(ds.stats.has_value());
  EXPECT_EQ(ds.stats->min, lo);
  EXPECT_EQ(ds.stats->max, hi);
}

TEST(Normalization, RoundTrip) {
  Dataset ds = normalize(generate_dataset(small_config()));
  const auto& s = *ds.stats;
  double worst = 0.0;
  for (const auto& r : ds.records)
    for (const Complex& z : r.noisy.chi.reshaped()) {
      worst = std::max(worst, std::abs(s.rescale(s.normalize(z.real())) - z.real()));
      worst = std::max(worst, std::abs(s.rescale(s.normalize(z.imag())) - z.imag()));
    }
  EXPECT_LE(worst, 1e-15);
}

TEST(Normalization, DegenerateInputsThrow) {
  Dataset ds = generate_dataset(small_config());
  for (auto& r : ds.records) r.split = Split::test;
  EXPECT_THROW(compute_normalization(ds), std::invalid_argument);
}

TEST(DatasetIo, RoundTripIsExact) {
  test::TempDir dir;
  const Dataset ds = normalize(generate_dataset(small_config()));
  write_dataset(dir.path(), ds);
  const Dataset back = read_dataset(dir.path());
  ASSERT_EQ(back.records.size(), ds.records.size());
  EXPECT_EQ(back.master_seed, ds.master_seed);
  EXPECT_EQ(back.phis, ds.phis);
  EXPECT_EQ(back.stats->min, ds.stats->min);
  EXPECT_EQ(back.stats->max, ds.stats->max);
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    EXPECT_EQ(back.records[i].noisy.chi, ds.records[i].noisy.chi);
    EXPECT_EQ(back.records[i].target.chi, ds.records[i].target.chi);
    EXPECT_EQ(back.records[i].split, ds.records[i].split);
    EXPECT_EQ(back.records[i].instance, ds.records[i].instance);
  }
}

TEST(DatasetIo, MissingAndCorruptFiles) {
  test::TempDir dir;
  EXPECT_THROW(read_dataset(dir.path()), IoError);
  write_dataset(dir.path(), generate_dataset(small_config()));
  std::ofstream(dir / "val.csv") << "header\n1,2,3\n";
  EXPECT_THROW(read_dataset(dir.path()), ParseError);
}

TEST(ChiIo, RoundTripWithMetadata) {
  ProcessMatrix m = ideal_chi(5 * pi / 3);
  m.signal_ratio = 0.5;
  m.label = ChiLabel::mle;
  std::stringstream ss;
  write_chi_csv(ss, m);
  const ProcessMatrix back = read_chi_csv(ss);
  EXPECT_EQ(back.chi, m.chi);
  EXPECT_EQ(back.label, ChiLabel::mle);
  EXPECT_DOUBLE_EQ(*back.phi, 5 * pi / 3);
  EXPECT_DOUBLE_EQ(*back.signal_ratio, 0.5);
}

TEST(ChiIo, ReportsLineOfBadRow) {
  std::stringstream ss;
  write_chi_csv(ss, ideal_chi(1.0));
  std::string text = ss.str();
  text.replace(text.rfind('\n', text.size() - 2) + 1, 1, "x");
  std::stringstream bad(text);
  try {
    read_chi_csv(bad);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_GT(e.line(), 0u);
  }
}
