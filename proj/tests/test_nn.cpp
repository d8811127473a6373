#include <cmath>

#include <gtest/gtest.h>

#include "qpdn/errors.hpp"
#include "qpdn/nn/adam.hpp"
#include "qpdn/nn/layers.hpp"
#include "qpdn/nn/model.hpp"
#include "qpdn/nn/serialize.hpp"
#include "test_util.hpp"

using namespace qpdn;
using namespace qpdn::nn;
using test::numeric_gradient;
using test::random_tensor;
using test::relative_error;

namespace {

constexpr double kGradTol = 1e-4;

std::vector<double> to_vector(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

void check_layer_gradients(Layer& layer, const Tensor& x, Mode mode, std::uint64_t seed) {
  EXPECT_LT(test::layer_gradient_error(layer, x, mode, seed), kGradTol);
}

void randomize(Layer& layer, Rng& rng) {
  for (Param* p : layer.params())
    for (auto& v : p->value.values()) v = uniform(rng, -1, 1);
}

}  // namespace

TEST(Geometry, SameCeilPadding) {
  const auto g = ConvGeometry::same_ceil(16, 16, 2, 3, 2);
  EXPECT_EQ(g.out_height, 8);
  EXPECT_EQ(g.pad_top, 0);  // total pad 1, extra on the bottom
  const auto g2 = ConvGeometry::same_ceil(16, 16, 2, 2, 2);
  EXPECT_EQ(g2.out_height, 8);
  EXPECT_EQ(g2.pad_top, 0);
  const auto g3 = ConvGeometry::same_ceil(7, 7, 1, 5, 1);
  EXPECT_EQ(g3.out_height, 7);
  EXPECT_EQ(g3.pad_top, 2);
  const auto g4 = ConvGeometry::same_ceil(5, 5, 1, 3, 2);
  EXPECT_EQ(g4.out_height, 3);
  EXPECT_EQ(g4.pad_top, 1);
}

TEST(Conv2D, MatchesDirectCorrelation) {
  Rng rng(1);
  Conv2D conv(2, 3, 3, 1);
  randomize(conv, rng);
  const Tensor x = random_tensor({1, 4, 4, 2}, rng);
  const Tensor y = conv.forward(x, Mode::infer);
  const auto& w = conv.weights().value;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      for (int o = 0; o < 3; ++o) {
        double acc = conv.bias().value[o];
        for (int di = 0; di < 3; ++di)
          for (int dj = 0; dj < 3; ++dj)
            for (int c = 0; c < 2; ++c) {
              const int ii = i + di - 1, jj = j + dj - 1;
              if (ii < 0 || jj < 0 || ii >= 4 || jj >= 4) continue;
              acc += x[(ii * 4 + jj) * 2 + c] * w[((di * 3 + dj) * 2 + c) * 3 + o];
            }
        EXPECT_NEAR(y[(i * 4 + j) * 3 + o], acc, 1e-13);
      }
    }
  }
}

class ConvGradient : public ::testing::TestWithParam<std::pair<int, int>> {};

TEST_P(ConvGradient, Conv) {
  const auto [k, s] = GetParam();
  Rng rng(10 + k);
  Conv2D conv(2, 3, k, s);
  randomize(conv, rng);
  check_layer_gradients(conv, random_tensor({2, 5, 5, 2}, rng), Mode::train, 3);
}

TEST_P(ConvGradient, TransposedConv) {
  const auto [k, s] = GetParam();
  Rng rng(20 + k);
  ConvTranspose2D tconv(3, 2, k, s);
  randomize(tconv, rng);
  check_layer_gradients(tconv, random_tensor({2, 3, 3, 3}, rng), Mode::train, 4);
}

INSTANTIATE_TEST_SUITE_P(KernelsAndStrides, ConvGradient,
                         ::testing::Values(std::pair{1, 1}, std::pair{2, 2}, std::pair{3, 2}, std::pair{3, 1},
                                           std::pair{4, 2}, std::pair{7, 2}));

TEST(Adjoint, TransposedConvIsAdjointOfConv) {
  for (auto [k, s] : {std::pair{1, 2}, std::pair{2, 2}, std::pair{3, 2}, std::pair{5, 2}, std::pair{3, 1}}) {
    Rng rng(30 + k);
    Conv2D conv(3, 4, k, s);
    ConvTranspose2D tconv(4, 3, k, s);
    randomize(conv, rng);
    conv.bias().value.fill(0.0);
    tconv.weights().value = conv.weights().value;
    tconv.bias().value.fill(0.0);
    const Tensor x = random_tensor({2, 8, 8, 3}, rng);
    const Tensor cx = conv.forward(x, Mode::infer);
    const Tensor y = random_tensor(cx.shape(), rng);
    const Tensor ty = tconv.forward(y, Mode::infer);
    ASSERT_EQ(ty.shape(), x.shape());
    const double lhs = dot(cx, y), rhs = dot(x, ty);
    EXPECT_LT(std::abs(lhs - rhs), 1e-10 * std::max(1.0, std::abs(lhs))) << "k=" << k << " s=" << s;
  }
}

TEST(BatchNorm, GradientsTrainMode) {
  Rng rng(5);
  BatchNorm bn(3);
  randomize(bn, rng);
  check_layer_gradients(bn, random_tensor({3, 2, 2, 3}, rng), Mode::train, 6);
}

TEST(BatchNorm, GradientsInferMode) {
  Rng rng(6);
  BatchNorm bn(2);
  randomize(bn, rng);
  for (auto& v : bn.running_mean().values()) v = uniform(rng, -1, 1);
  for (auto& v : bn.running_var().values()) v = uniform(rng, 0.5, 2);
  check_layer_gradients(bn, random_tensor({2, 3, 3, 2}, rng), Mode::infer, 7);
}

TEST(BatchNorm, NormalisesAndTracksRunningStatistics) {
  Rng rng(7);
  BatchNorm bn(2);
  bn.initialize(rng);
  const Tensor x = random_tensor({4, 3, 3, 2}, rng, 2.0, 6.0);
  const Tensor y = bn.forward(x, Mode::train);
  double mean[2] = {0, 0}, sq[2] = {0, 0}, xm[2] = {0, 0}, xsq[2] = {0, 0};
  const std::size_t n = x.size() / 2;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mean[i % 2] += y[i] / n;
    sq[i % 2] += y[i] * y[i] / n;
    xm[i % 2] += x[i] / n;
    xsq[i % 2] += x[i] * x[i] / n;
  }
  for (int c = 0; c < 2; ++c) {
    EXPECT_NEAR(mean[c], 0.0, 1e-12);
    const double var = xsq[c] - xm[c] * xm[c];
    EXPECT_NEAR(sq[c], var / (var + 1e-5), 1e-10);
    EXPECT_NEAR(bn.running_mean()[c], 0.1 * xm[c], 1e-12);
    EXPECT_NEAR(bn.running_var()[c], 0.9 + 0.1 * var, 1e-12);
  }
}

TEST(BatchNorm, TrainModeNeedsTwoRows) {
  BatchNorm bn(1);
  Rng rng(1);
  bn.initialize(rng);
  EXPECT_THROW(bn.forward(Tensor({1, 1}, 1.0), Mode::train), std::invalid_argument);
}

TEST(Dense, Gradients) {
  Rng rng(8);
  Dense dense(5, 4);
  randomize(dense, rng);
  check_layer_gradients(dense, random_tensor({3, 5}, rng), Mode::train, 9);
}

TEST(Activations, Gradients) {
  Rng rng(9);
  ReLU relu;
  Tensor x = random_tensor({2, 7}, rng);
  for (auto& v : x.values())
    if (std::abs(v) < 0.05) v = 0.3;  // keep away from the kink
  check_layer_gradients(relu, x, Mode::train, 10);
  Sigmoid sigmoid;
  check_layer_gradients(sigmoid, random_tensor({2, 7}, rng, -3, 3), Mode::train, 11);
}

TEST(Loss, MseValueAndGradient) {
  Rng rng(10);
  Tensor pred = random_tensor({3, 4}, rng);
  const Tensor target = random_tensor({3, 4}, rng);
  const Loss loss = mse_loss(pred, target);
  double expected = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) expected += (pred[i] - target[i]) * (pred[i] - target[i]);
  EXPECT_NEAR(loss.value, expected / 12.0, 1e-15);
  const auto numeric = numeric_gradient(pred.values(), [&] { return mse_loss(pred, target).value; });
  EXPECT_LT(relative_error(to_vector(loss.grad), numeric), kGradTol);
}

TEST(Sequential, EndToEndGradient) {
  Rng rng(11);
  std::vector<LayerSpec> specs{
      {.kind = LayerKind::conv, .kernel = 3, .stride = 2, .in_channels = 2, .out_channels = 3},
      {.kind = LayerKind::relu},
      {.kind = LayerKind::batchnorm, .channels = 3},
      {.kind = LayerKind::tconv, .kernel = 3, .stride = 2, .in_channels = 3, .out_channels = 2},
      {.kind = LayerKind::sigmoid}};
  Sequential net(specs);
  net.initialize(rng);
  Tensor x = random_tensor({2, 4, 4, 2}, rng);
  const Tensor target = random_tensor({2, 4, 4, 2}, rng, 0, 1);
  net.zero_grad();
  const Loss loss = mse_loss(net.forward(x, Mode::train), target);
  net.backward(loss.grad);
  for (Param* p : net.params()) {
    const auto numeric =
        numeric_gradient(p->value.values(), [&] { return mse_loss(net.forward(x, Mode::train), target).value; });
    EXPECT_LT(relative_error(to_vector(p->grad), numeric), kGradTol) << p->name;
  }
}

TEST(Adam, FirstStepMovesBySignTimesRate) {
  Param p{"w", Tensor({3}, 0.0), Tensor({3}, 0.0)};
  p.grad[0] = 2.0;
  p.grad[1] = -0.5;
  Adam adam(AdamConfig{.learning_rate = 0.01});
  std::vector<Param*> params{&p};
  adam.step(params);
  EXPECT_NEAR(p.value[0], -0.01, 1e-9);
  EXPECT_NEAR(p.value[1], 0.01, 1e-9);
  EXPECT_EQ(p.value[2], 0.0);
  EXPECT_EQ(adam.steps(), 1);
}

TEST(Adam, MinimisesQuadratic) {
  Param p{"w", Tensor({2}, 3.0), Tensor({2}, 0.0)};
  Adam adam(AdamConfig{.learning_rate = 0.05});
  std::vector<Param*> params{&p};
  for (int i = 0; i < 2000; ++i) {
    for (std::size_t k = 0; k < 2; ++k) p.grad[k] = 2 * (p.value[k] - 1.0);
    adam.step(params);
  }
  EXPECT_NEAR(p.value[0], 1.0, 1e-3);
}

TEST(Training, DivergenceIsReported) {
  Sequential net({{.kind = LayerKind::dense, .in_channels = 2, .out_channels = 1}});
  Rng rng(1);
  net.initialize(rng);
  Adam adam;
  Tensor x({2, 2}, 1.0);
  x[0] = std::nan("");
  EXPECT_THROW(train_step(net, adam, x, Tensor({2, 1}, 0.0)), DivergenceError);
}

TEST(Training, OverfitsSingleSample) {
  std::vector<LayerSpec> specs{
      {.kind = LayerKind::conv, .kernel = 3, .stride = 2, .in_channels = 2, .out_channels = 16},
      {.kind = LayerKind::relu},
      {.kind = LayerKind::batchnorm, .channels = 16},
      {.kind = LayerKind::tconv, .kernel = 3, .stride = 2, .in_channels = 16, .out_channels = 2},
      {.kind = LayerKind::sigmoid}};
  Sequential net(specs);
  Rng rng(12);
  net.initialize(rng);
  const Tensor one = random_tensor({1, 8, 8, 2}, rng);
  const Tensor one_target = random_tensor({1, 8, 8, 2}, rng, 0.2, 0.8);
  Tensor x({2, 8, 8, 2}), target({2, 8, 8, 2});
  for (std::size_t i = 0; i < one.size(); ++i) {
    x[i] = x[i + one.size()] = one[i];
    target[i] = target[i + one.size()] = one_target[i];
  }
  Adam adam(AdamConfig{.learning_rate = 3e-3});
  double loss = 1.0;
  for (int step = 0; step < 500; ++step) loss = train_step(net, adam, x, target);
  EXPECT_LT(loss, 1e-4);
}

TEST(Tensor, RowHelpers) {
  Tensor t({3, 2}, std::vector<double>{1, 2, 3, 4, 5, 6});
  EXPECT_EQ(slice_rows(t, 1, 2), Tensor({2, 2}, std::vector<double>{3, 4, 5, 6}));
  EXPECT_EQ(gather_rows(t, {2, 0}), Tensor({2, 2}, std::vector<double>{5, 6, 1, 2}));
  EXPECT_THROW(t.reshaped({4}), std::invalid_argument);
}

TEST(Serialize, Base64KnownVectors) {
  auto enc = [](std::string s) {
    return base64_encode(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
  };
  EXPECT_EQ(enc(""), "");
  EXPECT_EQ(enc("f"), "Zg==");
  EXPECT_EQ(enc("fo"), "Zm8=");
  EXPECT_EQ(enc("foobar"), "Zm9vYmFy");
  const auto dec = base64_decode("Zm9vYg==");
  EXPECT_EQ(std::string(dec.begin(), dec.end()), "foob");
  EXPECT_THROW(base64_decode("Zm9v!"), ParseError);
  EXPECT_THROW(base64_decode("Zm9"), ParseError);
}

TEST(Serialize, DoublesBitExact) {
  const std::vector<double> v{0.0, -0.0, 1.0 / 3.0, 1e-310, -1e300, std::numbers::pi};
  const auto back = decode_doubles(encode_doubles(v));
  ASSERT_EQ(back.size(), v.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    EXPECT_EQ(std::bit_cast<std::uint64_t>(back[i]), std::bit_cast<std::uint64_t>(v[i]));
  // 1.0 little-endian: 00 00 00 00 00 00 f0 3f
  EXPECT_EQ(encode_doubles(std::vector<double>{1.0}), "AAAAAAAA8D8=");
}

TEST(Serialize, SequentialRoundTripIsBitExact) {
  std::vector<LayerSpec> specs{
      {.kind = LayerKind::conv, .kernel = 2, .stride = 2, .in_channels = 2, .out_channels = 4},
      {.kind = LayerKind::relu},
      {.kind = LayerKind::batchnorm, .channels = 4},
      {.kind = LayerKind::tconv, .kernel = 2, .stride = 2, .in_channels = 4, .out_channels = 2},
      {.kind = LayerKind::sigmoid}};
  Sequential net(specs);
  Rng rng(13);
  net.initialize(rng);
  const Tensor x = random_tensor({3, 4, 4, 2}, rng);
  net.forward(x, Mode::train);  // move the running statistics off their defaults
  Sequential back = sequential_from_json(Json::parse(sequential_to_json(net).dump()));
  EXPECT_EQ(back.specs(), net.specs());
  EXPECT_EQ(back.forward(x, Mode::infer), net.forward(x, Mode::infer));
  auto a = net.buffers();
  auto b = back.buffers();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(*a[i], *b[i]);
}

TEST(Serialize, RejectsMalformedLayers) {
  Json j = Json::parse(R"([{"kind": "wibble"}])");
  EXPECT_ANY_THROW(sequential_from_json(j));
}
