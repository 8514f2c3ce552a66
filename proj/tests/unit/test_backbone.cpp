#include <gtest/gtest.h>

#include "icl/backbone.hpp"
#include "icl/errors.hpp"
#include "icl/grad_check.hpp"
#include "icl/ops.hpp"
#include "icl/rng.hpp"

using namespace icl;

namespace {

Tensor random_image(std::size_t h, std::size_t w, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(h * w);
  for (auto& x : v) x = rng.uniform();
  return Tensor::from({1, h, w}, v);
}

}  // namespace

TEST(ModelConfig, DefaultsAndScaleGeometry) {
  ModelConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.scale_channels(0), 32u);
  EXPECT_EQ(c.scale_channels(1), 16u);
  EXPECT_EQ(c.scale_channels(2), 8u);
  EXPECT_EQ(c.scale_grid(0), (Grid{4, 4}));
  EXPECT_EQ(c.scale_grid(1), (Grid{8, 8}));
  EXPECT_EQ(c.scale_grid(2), (Grid{16, 16}));
}

TEST(ModelConfig, RejectsInconsistentSizes) {
  ModelConfig c;
  c.height = 40;  // not a multiple of 16
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.heads = 3;  // does not divide the narrowest width
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.classes = 1;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Backbone, DefaultShapes) {
  ModelConfig c;
  Rng rng(1);
  Backbone b(c, rng);
  auto out = b.forward(random_image(64, 64, 2));
  EXPECT_EQ(out.logits.shape(), (Shape{4, 64, 64}));
  EXPECT_EQ(out.features.scales[0].shape(), (Shape{32, 4, 4}));
  EXPECT_EQ(out.features.scales[1].shape(), (Shape{16, 8, 8}));
  EXPECT_EQ(out.features.scales[2].shape(), (Shape{8, 16, 16}));
  EXPECT_EQ(out.features.full.shape(), (Shape{8, 64, 64}));
}

TEST(Backbone, ForwardIsBitwiseDeterministic) {
  ModelConfig c;
  Rng rng(3);
  Backbone b(c, rng);
  Tensor img = random_image(64, 64, 4);
  auto a = b.forward(img), d = b.forward(img);
  ASSERT_EQ(a.logits.numel(), d.logits.numel());
  for (std::size_t i = 0; i < a.logits.numel(); ++i) ASSERT_EQ(a.logits[i], d.logits[i]);
}

TEST(Backbone, SameSeedSameParameters) {
  ModelConfig c{16, 16, 3, 4, 2};
  Rng r1(5), r2(5);
  Backbone a(c, r1), b(c, r2);
  ParameterList pa, pb;
  a.collect("", pa);
  b.collect("", pb);
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i].name, pb[i].name);
    for (std::size_t k = 0; k < pa[i].tensor.numel(); ++k) ASSERT_EQ(pa[i].tensor[k], pb[i].tensor[k]);
  }
}

TEST(Backbone, WrongImageShape) {
  ModelConfig c{16, 16, 3, 4, 2};
  Rng rng(6);
  Backbone b(c, rng);
  EXPECT_THROW(b.forward(Tensor::zeros({1, 32, 32})), DimensionError);
  EXPECT_THROW(b.forward(Tensor::zeros({2, 16, 16})), DimensionError);
}

TEST(Backbone, EveryParameterReceivesGradient) {
  ModelConfig c{16, 16, 3, 4, 2};
  Rng rng(7);
  Backbone b(c, rng);
  auto out = b.forward(random_image(16, 16, 8));
  Tensor loss = sum(square(out.logits));
  for (const auto& f : out.features.scales) loss = add(loss, sum(f));
  loss.backward();
  ParameterList params;
  b.collect("", params);
  for (const auto& p : params) {
    double mag = 0.0;
    for (double g : p.tensor.grad()) mag += std::abs(g);
    EXPECT_GT(mag, 0.0) << p.name;
  }
}

TEST(Backbone, MiniatureGradientsMatchFiniteDifferences) {
  ModelConfig c{16, 16, 3, 4, 2};
  Rng rng(9);
  Backbone b(c, rng);
  Tensor img = random_image(16, 16, 10);
  ParameterList params;
  b.collect("", params);
  std::vector<Tensor> inputs;
  for (const auto& p : params) inputs.push_back(p.tensor);
  GradCheckOptions opt;
  opt.max_probes = 60;
  auto r = grad_check([&] { return mean(square(b.forward(img).logits)); }, inputs, opt);
  EXPECT_LT(r.max_relative_error, 1e-4);
  EXPECT_EQ(r.probes, 60u);
}

TEST(Tokenize, RoundTrip) {
  Rng rng(11);
  std::vector<double> v(3 * 2 * 4);
  for (auto& x : v) x = rng.uniform();
  Tensor f = Tensor::from({3, 2, 4}, v);
  Tensor t = tokenize(f);
  EXPECT_EQ(t.shape(), (Shape{8, 3}));
  // Row r is spatial position r; column c is channel c.
  EXPECT_EQ(t[5 * 3 + 2], f[2 * 8 + 5]);
  Tensor back = untokenize(t, {2, 4});
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(back[i], v[i]);
}

TEST(Tokenize, FirstScaleHasSixteenTokensOfWidthFourC) {
  EXPECT_EQ(tokenize(Tensor::zeros({32, 4, 4})).shape(), (Shape{16, 32}));
}

TEST(Tokenize, ConstantMapGivesEqualRows) {
  std::vector<double> v;
  for (double ch : {1.5, -2.0, 0.25}) v.insert(v.end(), 9, ch);
  Tensor t = tokenize(Tensor::from({3, 3, 3}, v));
  for (std::size_t r = 0; r < 9; ++r) {
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(t[r * 3 + c], t[c]);
  }
}

TEST(Tokenize, UntokenizeChecksGrid) { EXPECT_THROW(untokenize(Tensor::zeros({8, 3}), {3, 3}), DimensionError); }
