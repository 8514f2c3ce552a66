#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "icl/errors.hpp"
#include "icl/grad_check.hpp"
#include "icl/losses.hpp"
#include "icl/ops.hpp"
#include "icl/rng.hpp"
#include "icl_verify/oracles.hpp"

using namespace icl;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, bool grad = false, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v), grad);
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

void expect_near_all(const Tensor& t, const std::vector<double>& want, double tol) {
  ASSERT_EQ(t.numel(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(t[i], want[i], tol) << "element " << i;
}

}  // namespace

TEST(Tensor, SharedHandleAndClone) {
  Tensor a = Tensor::from({2}, {1.0, 2.0});
  Tensor alias = a;
  alias.mutable_data()[0] = 5.0;
  EXPECT_EQ(a[0], 5.0);
  Tensor copy = a.clone();
  copy.mutable_data()[0] = 7.0;
  EXPECT_EQ(a[0], 5.0);
}

TEST(Tensor, ShapeMustMatchData) {
  EXPECT_THROW(Tensor::from({2, 2}, {1.0, 2.0, 3.0}), DimensionError);
  EXPECT_EQ(numel({3, 4, 5}), 60u);
}

TEST(Tensor, GradTapeVisitsEachOpOnceInExecutionOrder) {
  Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
  Tensor a = square(x);
  Tensor b = add(a, a);  // a is shared
  Tensor c = sum(b);
  auto tape = GradTape::record(c);
  ASSERT_EQ(tape.size(), 3u);
  EXPECT_STREQ(tape.ops()[0]->op, "square");
  EXPECT_STREQ(tape.ops()[1]->op, "add");
  EXPECT_STREQ(tape.ops()[2]->op, "sum");
  c.backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 4.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], 8.0);
}

TEST(Tensor, LeafGradientsAccumulateAcrossBackwards) {
  Tensor x = Tensor::from({1}, {3.0}, true);
  sum(square(x)).backward();
  sum(square(x)).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 12.0);
  x.zero_grad();
  EXPECT_TRUE(x.grad().empty());
}

TEST(Tensor, DetachContributesNothing) {
  Tensor x = random_tensor({5}, 1, true);
  sum(mul(exp(x.detach()), x.detach())).backward();
  for (double g : x.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Tensor, BackwardIsLinear) {
  Tensor x = random_tensor({3, 3}, 2, true);
  auto f = [&] { return sum(gelu(matmul(x, x))); };
  auto g = [&] { return sum(softmax(x, 1)); };
  f().backward();
  std::vector<double> gf(x.grad().begin(), x.grad().end());
  x.zero_grad();
  g().backward();
  std::vector<double> gg(x.grad().begin(), x.grad().end());
  x.zero_grad();
  add(f(), g()).backward();
  for (std::size_t i = 0; i < 9; ++i) EXPECT_NEAR(x.grad()[i], gf[i] + gg[i], 1e-12);
}

TEST(Tensor, ConstantsDoNotRecordGraph) {
  Tensor a = Tensor::from({2}, {1, 2});
  Tensor b = exp(a);
  EXPECT_FALSE(b.requires_grad());
  EXPECT_EQ(GradTape::record(b).size(), 0u);
}

TEST(Matmul, IdentityCases) {
  Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  expect_near_all(matmul(a, eye), {1, 2, 3, 4}, 0.0);
  Tensor i3 = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor b = random_tensor({3, 2}, 3);
  expect_near_all(matmul(i3, b), values(b), 0.0);
}

TEST(Matmul, MatchesNestedLoopOracle) {
  Tensor a = random_tensor({3, 4}, 4), b = random_tensor({4, 2}, 5);
  auto want = oracle::matmul(oracle::from_tensor(a), oracle::from_tensor(b));
  expect_near_all(matmul(a, b), want.v, 1e-12);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 2}));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[4x2]"), std::string::npos) << msg;
  }
}

TEST(Softmax, UniformOnZeros) { expect_near_all(softmax(Tensor::zeros({3}), 0), {1 / 3.0, 1 / 3.0, 1 / 3.0}, 1e-15); }

TEST(Softmax, ShiftInvariantAndStable) {
  Tensor x = random_tensor({7}, 6, false, -5, 5);
  expect_near_all(softmax(add_scalar(x, 1000.0), 0), values(softmax(x, 0)), 1e-12);
  expect_near_all(softmax(x, 0), oracle::softmax(values(x)), 1e-12);
}

TEST(Softmax, AxisOutOfRange) { EXPECT_THROW(softmax(Tensor::zeros({2, 2}), 2), ArgumentError); }

TEST(Conv2d, OneByOneIdentity) {
  Tensor x = random_tensor({3, 4, 5}, 7);
  std::vector<double> w(9, 0.0);
  for (std::size_t c = 0; c < 3; ++c) w[c * 3 + c] = 1.0;
  expect_near_all(conv2d(x, Tensor::from({3, 3, 1, 1}, w)), values(x), 0.0);
}

TEST(Conv2d, ImpulseResponse) {
  std::vector<double> img(25, 0.0);
  img[12] = 1.0;
  Tensor out = conv2d(Tensor::from({1, 5, 5}, img), Tensor::full({1, 1, 3, 3}, 1.0));
  for (std::size_t y = 0; y < 5; ++y) {
    for (std::size_t x = 0; x < 5; ++x) {
      const bool inside = y >= 1 && y <= 3 && x >= 1 && x <= 3;
      EXPECT_EQ(out[y * 5 + x], inside ? 1.0 : 0.0);
    }
  }
}

TEST(Conv2d, MatchesNestedLoopOracle) {
  Tensor x = random_tensor({2, 5, 5}, 8), w = random_tensor({3, 2, 3, 3}, 9);
  expect_near_all(conv2d(x, w), oracle::conv2d(values(x), 2, 5, 5, values(w), 3, 3, {}), 1e-12);
}

TEST(Conv2d, WideInputsUseEveryTileWidth) {
  // 37 columns exercise the 16-, 4- and 1-wide paths together.
  Tensor x = random_tensor({2, 3, 37}, 10), w = random_tensor({2, 2, 3, 3}, 11), b = random_tensor({2}, 12);
  expect_near_all(conv2d(x, w, b), oracle::conv2d(values(x), 2, 3, 37, values(w), 2, 3, values(b)), 1e-12);
  Tensor xg = random_tensor({2, 3, 37}, 10, true);
  Tensor wg = random_tensor({2, 2, 3, 3}, 11, true);
  auto r = grad_check([&] { return sum(square(conv2d(xg, wg))); }, {xg, wg});
  EXPECT_LT(r.max_relative_error, 1e-6);
}

TEST(Conv2d, ChannelMismatch) {
  EXPECT_THROW(conv2d(Tensor::zeros({2, 4, 4}), Tensor::zeros({1, 3, 3, 3})), DimensionError);
  EXPECT_THROW(conv2d(Tensor::zeros({2, 4, 4}), Tensor::zeros({1, 2, 2, 2})), DimensionError);
}

TEST(Bilinear, ConstantAndIdentity) {
  Tensor c = Tensor::full({2, 3, 2}, 3.5);
  Tensor up = bilinear_upsample(c, 7, 9);
  for (double v : up.data()) EXPECT_DOUBLE_EQ(v, 3.5);
  Tensor x = random_tensor({2, 3, 4}, 13);
  expect_near_all(bilinear_upsample(x, 3, 4), values(x), 0.0);
}

TEST(Bilinear, TwoByTwoToFourByFour) {
  Tensor x = Tensor::from({1, 2, 2}, {0, 1, 2, 3});
  // Rows: source y = clamp((dst + 0.5) / 2 - 0.5) = 0, 0.25, 0.75, 1.
  expect_near_all(bilinear_upsample(x, 4, 4),
                  {0, 0.25, 0.75, 1, 0.5, 0.75, 1.25, 1.5, 1.5, 1.75, 2.25, 2.5, 2, 2.25, 2.75, 3}, 1e-12);
  expect_near_all(bilinear_upsample(x, 4, 4), oracle::bilinear({0, 1, 2, 3}, 1, 2, 2, 4, 4), 1e-12);
}

TEST(Bilinear, ZeroOutputSize) { EXPECT_THROW(bilinear_upsample(Tensor::zeros({1, 2, 2}), 0, 4), ArgumentError); }

TEST(LayerNorm, ConstantRowGivesZeros) {
  Tensor out = layer_norm(Tensor::full({1, 4}, 2.5), Tensor::full({4}, 1.0), Tensor::zeros({4}));
  for (double v : out.data()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, StandardisedRowNearlyUnchanged) {
  Tensor row = Tensor::from({1, 4}, {-1, 1, -1, 1});  // mean 0, variance 1
  expect_near_all(layer_norm(row, Tensor::full({4}, 1.0), Tensor::zeros({4})), {-1, 1, -1, 1}, 1e-5);
}

TEST(LayerNorm, MatchesTwoPassOracle) {
  Tensor x = random_tensor({3, 6}, 14, false, -3, 3);
  Tensor g = random_tensor({6}, 15), b = random_tensor({6}, 16);
  auto want = oracle::layer_norm(oracle::from_tensor(x), values(g), values(b));
  expect_near_all(layer_norm(x, g, b), want.v, 1e-10);
}

TEST(GradCheck, Quadratic) {
  Tensor x = Tensor::from({3}, {1, 2, 3}, true);
  Tensor loss = sum(square(x));
  loss.backward();
  expect_near_all(Tensor::from({3}, {x.grad().begin(), x.grad().end()}), {2, 4, 6}, 0.0);
  x.zero_grad();
  EXPECT_LT(grad_check([](const Tensor& t) { return sum(square(t)); }, x), 1e-7);
}

TEST(GradCheck, CrossEntropyOfSoftmaxLogits) {
  Tensor x = random_tensor({4, 3, 3}, 17, true, -2, 2);
  LabelMap y(3, 3);
  for (std::size_t i = 0; i < 9; ++i) y.labels[i] = static_cast<std::uint8_t>(i % 4);
  EXPECT_LT(grad_check([&](const Tensor& t) { return cross_entropy(t, y); }, x), 1e-6);
}

TEST(GradCheck, NonFiniteObjectiveThrows) {
  Tensor x = Tensor::from({2}, {-1.0, 1.0}, true);
  EXPECT_THROW(grad_check([](const Tensor& t) { return sum(log(t)); }, x), NumericError);
}

TEST(GradCheck, DetectsAWrongGradient) {
  icl::testing::SoftmaxBackwardSignFlip flip;
  Tensor x = random_tensor({5}, 18, true);
  Tensor w = random_tensor({5}, 19);
  EXPECT_GT(grad_check([&](const Tensor& t) { return sum(mul(softmax(t, 0), w)); }, x), 1e-3);
}

TEST(Ops, ElementwiseShapeMismatch) {
  EXPECT_THROW(add(Tensor::zeros({2}), Tensor::zeros({3})), DimensionError);
  EXPECT_THROW(reshape(Tensor::zeros({2, 3}), {4}), DimensionError);
  EXPECT_THROW(avg_pool2(Tensor::zeros({1, 3, 4})), DimensionError);
}

TEST(Ops, GroupNormNormalisesWholeMap) {
  Tensor x = random_tensor({3, 4, 4}, 20, false, -2, 5);
  Tensor y = group_norm(x, Tensor::full({3}, 1.0), Tensor::zeros({3}));
  double mean = 0.0, var = 0.0;
  for (double v : y.data()) mean += v;
  mean /= 48.0;
  for (double v : y.data()) var += (v - mean) * (v - mean);
  EXPECT_NEAR(mean, 0.0, 1e-12);
  EXPECT_NEAR(var / 48.0, 1.0, 1e-3);
}
