#pragma once

#include <array>
#include <cstddef>
#include <string>

#include "icl/parameters.hpp"
#include "icl/proxy_attention.hpp"
#include "icl/rng.hpp"
#include "icl/tensor.hpp"

namespace icl {

struct ModelConfig {
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t classes = 4;        // Z, background included
  std::size_t base_channels = 8;  // C
  std::size_t heads = 4;          // N

  // Throws ConfigError when sizes or widths are inconsistent.
  void validate() const;

  // Channel width of the tapped decoder features: 4C, 2C, C.
  std::size_t scale_channels(std::size_t scale) const { return (4 * base_channels) >> scale; }
  // Token grid: H/16, H/8, H/4.
  Grid scale_grid(std::size_t scale) const { return {height >> (4 - scale), width >> (4 - scale)}; }
  std::array<Grid, kNumScales> grids() const { return {scale_grid(0), scale_grid(1), scale_grid(2)}; }
};

struct MultiScaleFeatures {
  std::array<Tensor, kNumScales> scales;  // [4C x H/16 x W/16], [2C x H/8 x W/8], [C x H/4 x W/4]
  Tensor full;                            // [C x H x W]
};

struct BackboneOutput {
  Tensor logits;  // [Z x H x W]
  MultiScaleFeatures features;
};

// 3x3 conv (no bias) -> single-group norm -> ReLU.
struct ConvBlock {
  Tensor weights, gamma, beta;

  ConvBlock() = default;
  ConvBlock(std::size_t in, std::size_t out, Rng& rng);
  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, ParameterList& out) const;
};

// UNet-style encoder-decoder. Encoder: stem at full resolution, then four
// 2x2-pool stages with widths C, 2C, 4C, 4C. Decoder: bilinear x2 upsampling
// with additive skips; the first three decoder stages are the tapped
// features. A 1x1 conv maps the full-resolution features to class logits.
class Backbone {
 public:
  Backbone() = default;
  Backbone(const ModelConfig& config, Rng& rng);

  // image: [1 x H x W].
  BackboneOutput forward(const Tensor& image) const;

  const ModelConfig& config() const { return config_; }
  void collect(const std::string& prefix, ParameterList& out) const;

 private:
  ModelConfig config_;
  ConvBlock stem_;
  std::array<ConvBlock, 4> down_;
  std::array<ConvBlock, 5> up_;
  Tensor head_w_, head_b_;
};

// [c x h x w] -> [(h*w) x c]; row r is spatial position r in row-major order.
Tensor tokenize(const Tensor& features);
// Inverse of tokenize.
Tensor untokenize(const Tensor& tokens, Grid grid);

}  // namespace icl
