#include <fstream>
#include <iterator>
#include <numbers>

#include <gtest/gtest.h>

#include "qpdn/param_extractor.hpp"
#include "qpdn/reporting.hpp"
#include "test_util.hpp"

using namespace qpdn;

namespace {
constexpr double pi = std::numbers::pi;
}

TEST(Heatmap, DifferenceChannels) {
  const ProcessMatrix a = ideal_chi(pi / 2), b = ideal_chi(pi / 3);
  const Heatmap h = diff_heatmap(a, b);
  for (int i = 0; i < 16; ++i)
    for (int j = 0; j < 16; ++j) {
      EXPECT_EQ(h.re(i, j), a.chi(i, j).real() - b.chi(i, j).real());
      EXPECT_EQ(h.im(i, j), a.chi(i, j).imag() - b.chi(i, j).imag());
    }
  EXPECT_TRUE(has_hermitian_symmetry(h));
  Heatmap broken = h;
  broken.re(0, 1) += 1e-3;
  EXPECT_NEAR(hermitian_difference_defect(broken), 1e-3, 1e-12);
}

TEST(Heatmap, GrayScaleMapping) {
  Grid g = Grid::Zero();
  g(0, 0) = 2.0;
  g(0, 1) = -2.0;
  g(0, 2) = 1.0;
  const auto gray = grid_to_gray(g);
  EXPECT_EQ(gray[0], 255);
  EXPECT_EQ(gray[1], 0);
  EXPECT_EQ(gray[2], 191);  // 127.5 + 63.75 rounds to 191
  EXPECT_EQ(gray[3], 128);
  const auto flat = grid_to_gray(Grid::Zero());
  EXPECT_EQ(flat[0], 128);
}

TEST(Heatmap, FilesWrittenAndReadable) {
  test::TempDir dir;
  const Heatmap h = diff_heatmap(ideal_chi(pi), ideal_chi(pi / 6));
  const auto files = write_heatmap(h, dir / "cz");
  ASSERT_EQ(files.size(), 4u);
  EXPECT_EQ(read_grid_csv(files[0]), h.re);
  EXPECT_EQ(read_grid_csv(files[1]), h.im);
  std::ifstream pgm(files[2], std::ios::binary);
  const std::string bytes((std::istreambuf_iterator<char>(pgm)), {});
  const std::string header = "P5\n16 16\n255\n";
  ASSERT_EQ(bytes.size(), header.size() + 256);
  EXPECT_EQ(bytes.substr(0, header.size()), header);
}

TEST(FidelityTable, SummaryStatistics) {
  const FidelityCell c = summarize({0.9, 1.0, 0.95});
  EXPECT_EQ(c.count, 3u);
  EXPECT_NEAR(c.mean, 0.95, 1e-15);
  EXPECT_NEAR(c.stddev, 0.05, 1e-15);
  EXPECT_EQ(summarize({0.5}).stddev, 0.0);
  EXPECT_THROW(summarize({}), std::invalid_argument);
}

TEST(FidelityTable, GroupsByPhaseAndMethod) {
  std::vector<FidelitySample> samples{
      {pi / 2, "mle", 0.98}, {pi / 2, "mle", 0.99}, {pi / 2, "ann", 1.0}, {pi / 6, "mle", 0.97}, {pi / 6, "ann", 0.99}};
  const FidelityTable t = fidelity_table(samples, {pi / 6, pi / 2}, {"mle", "ann"});
  EXPECT_EQ(t.cells[1][0].count, 2u);
  EXPECT_NEAR(t.cells[1][0].mean, 0.985, 1e-15);
  EXPECT_NE(t.to_csv().find("pi/2"), std::string::npos);
  EXPECT_NE(t.to_text().find("pi/6"), std::string::npos);
  EXPECT_THROW(fidelity_table(samples, {pi}, {"mle"}), std::invalid_argument);
}

TEST(FidelityTable, PhaseLabels) {
  EXPECT_EQ(phi_label(pi / 2), "pi/2");
  EXPECT_EQ(phi_label(5 * pi / 3), "5pi/3");
  EXPECT_EQ(phi_label(pi), "pi");
  EXPECT_EQ(phi_label(2 * pi), "2pi");
  EXPECT_EQ(phi_label(5 * pi / 4), "5pi/4");
}

TEST(Residue, WrappingAndSnapping) {
  EXPECT_DOUBLE_EQ(wrap_degrees(190.0), -170.0);
  EXPECT_DOUBLE_EQ(wrap_degrees(-180.0), -180.0);
  EXPECT_DOUBLE_EQ(wrap_degrees(180.0), -180.0);
  EXPECT_DOUBLE_EQ(wrap_degrees(-725.0), -5.0);
  const std::vector<double> grid{30, 90, 180, 360};
  EXPECT_DOUBLE_EQ(snap_to_grid(2.0, grid), 360.0);
  EXPECT_DOUBLE_EQ(snap_to_grid(80.0, grid), 90.0);
}

TEST(Residue, ReportPerRatio) {
  const std::vector<double> grid{30, 90, 360};
  const ResidueReport rep =
      residue_report({30, 90, 360, 30}, {35, 100, 3, 30.5}, {1.0, 0.1, 0.1, 0.1}, grid);
  ASSERT_EQ(rep.records.size(), 4u);
  EXPECT_DOUBLE_EQ(rep.records[2].residue, 3.0);  // across the 0/360 seam
  EXPECT_TRUE(rep.records[0].success);
  EXPECT_FALSE(rep.records[1].success);
  EXPECT_TRUE(rep.records[1].snap_correct);
  EXPECT_DOUBLE_EQ(rep.success_rate, 0.75);
  ASSERT_EQ(rep.by_ratio.size(), 2u);
  EXPECT_DOUBLE_EQ(rep.by_ratio[0].signal_ratio, 1.0);
  ASSERT_NE(rep.ratio(0.1), nullptr);
  EXPECT_NEAR(rep.ratio(0.1)->success_rate, 2.0 / 3.0, 1e-15);
  EXPECT_EQ(rep.ratio(0.5), nullptr);
  EXPECT_EQ(rep.to_csv().substr(0, rep.to_csv().find('\n')),
            "phi_true_deg,phi_pred_deg,residue_deg,signal_ratio,success_flag");
  EXPECT_NE(rep.summary_json().find("success_rate"), std::string::npos);
  EXPECT_THROW(residue_report({}, {}, {}, grid), std::invalid_argument);
  EXPECT_THROW(residue_report({1}, {1, 2}, {1}, grid), std::invalid_argument);
}
