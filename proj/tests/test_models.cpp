#include <numbers>

#include <gtest/gtest.h>

#include "qpdn/autoencoder.hpp"
#include "qpdn/param_extractor.hpp"
#include "test_util.hpp"

using namespace qpdn;

namespace {

constexpr double pi = std::numbers::pi;

const Dataset& tiny_dataset() {
  static const Dataset ds = [] {
    GenerationConfig c;
    c.phis = {pi / 2, pi, 3 * pi / 2};
    c.ratios = {1.0, 0.1};
    c.instances = 12;
    c.master_seed = 5;
    return normalize(generate_dataset(c));
  }();
  return ds;
}

AutoencoderSpec tiny_spec() {
  AutoencoderSpec s;
  s.filters = {6, 4, 4};
  s.epochs = 3;
  s.batch_size = 8;
  return s;
}

std::vector<double> flat_params(nn::Network& net) {
  std::vector<double> out;
  for (auto* p : net.params()) out.insert(out.end(), p->value.values().begin(), p->value.values().end());
  for (auto* b : net.buffers()) out.insert(out.end(), b->values().begin(), b->values().end());
  return out;
}

}  // namespace

TEST(Autoencoder, LayerStackAndParameterCount) {
  const auto layers = autoencoder_layers(AutoencoderSpec{});
  ASSERT_EQ(layers.size(), 17u);
  EXPECT_EQ(layers.back().kind, nn::LayerKind::sigmoid);
  EXPECT_EQ(layers[15].out_channels, 2);
  auto model = build_autoencoder(AutoencoderSpec{}, {0.0, 1.0});
  // Hand count for k = 3: conv 2->128, 128->64, 64->32; tconv 32->64, 64->128, 128->2; 5 batchnorms.
  const std::size_t conv = (9 * 2 + 1) * 128 + (9 * 128 + 1) * 64 + (9 * 64 + 1) * 32;
  const std::size_t tconv = (9 * 32 + 1) * 64 + (9 * 64 + 1) * 128 + (9 * 128 + 1) * 2;
  const std::size_t bn = 2 * (128 + 64 + 32 + 64 + 128);
  EXPECT_EQ(model.net.parameter_count(), conv + tconv + bn);
}

TEST(Autoencoder, OutputShapeMatchesImage) {
  auto model = build_autoencoder(tiny_spec(), *tiny_dataset().stats);
  const auto out = model.net.forward(nn::Tensor({2, 16, 16, 2}, 0.5), nn::Mode::infer);
  EXPECT_EQ(out.shape(), (std::vector<std::size_t>{2, 16, 16, 2}));
}

TEST(Autoencoder, ImageRoundTrip) {
  const auto& ds = tiny_dataset();
  std::vector<double> image(kImageValues);
  for (const auto& rec : ds.records) {
    chi_to_image(rec.noisy.chi, *ds.stats, image.data());
    const ChiMatrix back = image_to_chi(image.data(), *ds.stats);
    EXPECT_LE((back - rec.noisy.chi).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(Autoencoder, TrainingIsDeterministic) {
  const auto a = train_autoencoder(tiny_spec(), tiny_dataset());
  const auto b = train_autoencoder(tiny_spec(), tiny_dataset());
  auto na = a.net, nb = b.net;
  EXPECT_EQ(flat_params(na), flat_params(nb));
  ASSERT_EQ(a.log.epochs.size(), b.log.epochs.size());
  EXPECT_EQ(a.log.best_val_mse, b.log.best_val_mse);
  EXPECT_GE(a.log.best_epoch, 1);
}

TEST(Autoencoder, DifferentSeedChangesWeights) {
  AutoencoderSpec other = tiny_spec();
  other.seed = 8;
  auto a = train_autoencoder(tiny_spec(), tiny_dataset());
  auto b = train_autoencoder(other, tiny_dataset());
  EXPECT_NE(flat_params(a.net), flat_params(b.net));
}

TEST(Autoencoder, SaveLoadRoundTrip) {
  test::TempDir dir;
  auto model = train_autoencoder(tiny_spec(), tiny_dataset());
  save_autoencoder(dir / "ae.json", model);
  auto back = load_autoencoder(dir / "ae.json");
  EXPECT_EQ(back.stats.min, model.stats.min);
  EXPECT_EQ(back.stats.max, model.stats.max);
  EXPECT_EQ(flat_params(back.net), flat_params(model.net));
  const auto& rec = tiny_dataset().records.front();
  const ProcessMatrix a = denoise(model, rec.noisy), b = denoise(back, rec.noisy);
  EXPECT_EQ(a.chi, b.chi);
  EXPECT_EQ(a.label, ChiLabel::denoised);
  EXPECT_LT(hermiticity_defect(a.chi), 1e-15);
}

TEST(Autoencoder, KernelSelection) {
  std::vector<SweepEntry> e(3);
  e[0].kernel = 1;
  e[0].val_mse = 3e-5;
  e[1].kernel = 2;
  e[1].val_mse = 1e-5;
  e[2].kernel = 3;
  e[2].val_mse = 1e-5;
  EXPECT_EQ(select_best_kernel(e), 2);
}

TEST(Autoencoder, SpecValidation) {
  AutoencoderSpec s;
  s.kernel = 0;
  EXPECT_ANY_THROW(s.validate());
  s = AutoencoderSpec{};
  s.batch_size = 1;
  EXPECT_ANY_THROW(s.validate());
}

TEST(Extractor, TrainsDeterministicallyAndRoundTrips) {
  const auto& ds = tiny_dataset();
  std::vector<ProcessMatrix> same;
  std::vector<const Record*> train = ds.slice(Split::train), val = ds.slice(Split::val);
  auto copies = [](const std::vector<const Record*>& recs) {
    std::vector<ProcessMatrix> out;
    for (const auto* r : recs) out.push_back(r->noisy);
    return out;
  };
  FfnnSpec spec;
  spec.trunk = {16, 8};
  spec.head_hidden = 8;
  spec.epochs = 4;
  spec.batch_size = 8;
  const auto train_ex = phi_examples(train, copies(train));
  const auto val_ex = phi_examples(val, copies(val));
  ASSERT_DOUBLE_EQ(train_ex.front().phi_degrees, 90.0);
  auto a = train_ffnn(spec, *ds.stats, train_ex, val_ex);
  auto b = train_ffnn(spec, *ds.stats, train_ex, val_ex);
  EXPECT_EQ(flat_params(a.net), flat_params(b.net));
  EXPECT_DOUBLE_EQ(a.affine.offset, 180.0);
  EXPECT_DOUBLE_EQ(a.affine.scale, 90.0);

  test::TempDir dir;
  save_extractor(dir / "ffnn.json", a);
  auto back = load_extractor(dir / "ffnn.json");
  EXPECT_EQ(extract_phi(back, ds.records[3].noisy), extract_phi(a, ds.records[3].noisy));
  std::vector<const ProcessMatrix*> chis{&ds.records[0].noisy, &ds.records[40].noisy};
  const auto all = extract_all(a, chis);
  EXPECT_EQ(all[1], extract_phi(a, ds.records[40].noisy));
}

TEST(Extractor, OneColumnPerHead) {
  FfnnSpec spec;
  spec.trunk = {8, 8};
  spec.head_hidden = 4;
  spec.forks = 3;
  auto model = build_extractor(spec, {0.0, 1.0}, {10.0, 2.0});
  const auto out = model.net.forward(nn::Tensor({2, 512}, 0.3), nn::Mode::infer);
  EXPECT_EQ(out.shape(), (std::vector<std::size_t>{2, 3}));
}
