#include "icl/backbone.hpp"

#include <cmath>
#include <vector>

#include "icl/errors.hpp"
#include "icl/ops.hpp"

namespace icl {

void ModelConfig::validate() const {
  if (height == 0 || width == 0 || height % 16 != 0 || width % 16 != 0) {
    throw ConfigError("image size " + std::to_string(height) + "x" + std::to_string(width) +
                      " must be a positive multiple of 16");
  }
  if (classes < 2) throw ConfigError("at least two classes are required");
  if (base_channels == 0 || heads == 0) throw ConfigError("base_channels and heads must be positive");
  for (std::size_t s = 0; s < kNumScales; ++s) {
    if (scale_channels(s) % heads != 0) {
      throw ConfigError("scale width " + std::to_string(scale_channels(s)) + " is not divisible by " +
                        std::to_string(heads) + " heads");
    }
  }
}

ConvBlock::ConvBlock(std::size_t in, std::size_t out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in * 9));
  weights = uniform_parameter({out, in, 3, 3}, bound, rng);
  gamma = constant_parameter({out}, 1.0);
  beta = constant_parameter({out}, 0.0);
}

Tensor ConvBlock::forward(const Tensor& x) const { return relu(group_norm(conv2d(x, weights), gamma, beta)); }

void ConvBlock::collect(const std::string& prefix, ParameterList& out) const {
  append(out, prefix + "conv", weights);
  append(out, prefix + "norm.gamma", gamma);
  append(out, prefix + "norm.beta", beta);
}

Backbone::Backbone(const ModelConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  const std::size_t c = config.base_channels;
  const std::array<std::size_t, 5> enc = {c, c, 2 * c, 4 * c, 4 * c};  // stem, then four pooled stages
  stem_ = ConvBlock(1, enc[0], rng);
  for (std::size_t i = 0; i < 4; ++i) down_[i] = ConvBlock(enc[i], enc[i + 1], rng);
  // Decoder stage i consumes the upsampled previous output plus the encoder
  // map of the same resolution, so its input width equals that skip width.
  const std::array<std::size_t, 5> dec_in = {enc[4], enc[3], enc[2], enc[1], enc[0]};
  const std::array<std::size_t, 5> dec_out = {4 * c, 2 * c, c, c, c};
  for (std::size_t i = 0; i < 5; ++i) {
    if (i > 0 && dec_out[i - 1] != dec_in[i]) {
      throw ConfigError("skip connection width mismatch at decoder stage " + std::to_string(i));
    }
    up_[i] = ConvBlock(dec_in[i], dec_out[i], rng);
  }
  for (std::size_t s = 0; s < kNumScales; ++s) {
    if (dec_out[s] != config_.scale_channels(s)) throw ConfigError("tapped feature width mismatch");
  }
  head_w_ = uniform_parameter({config.classes, c, 1, 1}, 1.0 / std::sqrt(static_cast<double>(c)), rng);
  head_b_ = constant_parameter({config.classes}, 0.0);
}

BackboneOutput Backbone::forward(const Tensor& image) const {
  if (image.shape() != Shape{1, config_.height, config_.width}) {
    throw DimensionError("backbone: image " + to_string(image.shape()) + " does not match configured size " +
                         to_string(Shape{1, config_.height, config_.width}));
  }
  std::array<Tensor, 5> skips;
  skips[0] = stem_.forward(image);
  for (std::size_t i = 0; i < 4; ++i) skips[i + 1] = down_[i].forward(avg_pool2(skips[i]));

  BackboneOutput out;
  Tensor x = up_[0].forward(skips[4]);
  out.features.scales[0] = x;
  for (std::size_t i = 1; i < 5; ++i) {
    const Tensor& skip = skips[4 - i];
    x = bilinear_upsample(x, skip.dim(1), skip.dim(2));
    x = up_[i].forward(add(x, skip));
    if (i < kNumScales) out.features.scales[i] = x;
  }
  out.features.full = x;
  out.logits = conv2d(x, head_w_, head_b_);
  return out;
}

void Backbone::collect(const std::string& prefix, ParameterList& out) const {
  stem_.collect(prefix + "stem.", out);
  for (std::size_t i = 0; i < down_.size(); ++i) down_[i].collect(prefix + "down" + std::to_string(i) + ".", out);
  for (std::size_t i = 0; i < up_.size(); ++i) up_[i].collect(prefix + "up" + std::to_string(i) + ".", out);
  append(out, prefix + "head.w", head_w_);
  append(out, prefix + "head.b", head_b_);
}

Tensor tokenize(const Tensor& features) {
  if (features.rank() != 3) throw DimensionError("tokenize: expected [c x h x w], got " + to_string(features.shape()));
  const std::size_t c = features.dim(0);
  return transpose(reshape(features, {c, features.dim(1) * features.dim(2)}));
}

Tensor untokenize(const Tensor& tokens, Grid grid) {
  if (tokens.rank() != 2 || tokens.dim(0) != grid.tokens()) {
    throw DimensionError("untokenize: tokens " + to_string(tokens.shape()) + " do not cover the grid");
  }
  return reshape(transpose(tokens), {tokens.dim(1), grid.height, grid.width});
}

}  // namespace icl
