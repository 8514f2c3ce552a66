#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "icl/backbone.hpp"
#include "icl/parameters.hpp"
#include "icl/proxy_attention.hpp"
#include "icl/tensor.hpp"

namespace icl {

using ScaleMaps = std::array<Tensor, kNumScales>;

// Single 3x3 conv Z -> Z with bias, applied to an attention map.
struct SegHead {
  Tensor weights, bias;

  SegHead() = default;
  SegHead(std::size_t classes, Rng& rng);
  Tensor forward(const Tensor& map) const;
  void collect(const std::string& prefix, ParameterList& out) const;
};

struct SspaStreamOutput {
  ScaleMaps segmentation;  // M_lambda, [Z x h x w]
  ScaleMaps attention;     // A_lambda
  ScaleMaps proxies;       // Q_lambda, widths 4C, 2C, C
};

struct SspaOutput {
  SspaStreamOutput labeled;
  SspaStreamOutput unlabeled;
};

// Supervised semantic proxy adaptor: the learnable proxy Q0, one proxy block
// per scale and one segmentation head per scale.
class Sspa {
 public:
  Sspa() = default;
  Sspa(const ModelConfig& config, Rng& rng);

  // One image's features on one stream. Unlabeled input reaches Q0 only
  // through a detached copy.
  SspaStreamOutput forward(const MultiScaleFeatures& features, Stream stream) const;

  void collect(const std::string& prefix, ParameterList& out) const;

  Tensor q0;  // [Z x 4C]
  std::array<ProxyBlock, kNumScales> blocks;
  std::array<SegHead, kNumScales> heads;

 private:
  ModelConfig config_;
};

SspaOutput sspa_forward(const Sspa& sspa, const MultiScaleFeatures& labeled, const MultiScaleFeatures& unlabeled);

struct UsclOutput {
  ScaleMaps guided;     // G_lambda
  ScaleMaps attention;  // attention maps behind G
};

// Unsupervised semantic consistent learner: per-scale cross-attention of the
// SSPA proxies against unlabeled tokens, without chaining between scales.
class Uscl {
 public:
  Uscl() = default;
  Uscl(const ModelConfig& config, Rng& rng);

  UsclOutput forward(const MultiScaleFeatures& unlabeled, const ScaleMaps& proxies) const;

  void collect(const std::string& prefix, ParameterList& out) const;

  std::array<MultiHeadCrossAttention, kNumScales> attention;
  std::array<SegHead, kNumScales> heads;

 private:
  ModelConfig config_;
};

// Backbone plus the training-only heads. Inference uses the backbone alone.
struct IclModel {
  IclModel() = default;
  IclModel(const ModelConfig& config, std::uint64_t seed);

  ModelConfig config;
  Backbone backbone;
  Sspa sspa;
  Uscl uscl;

  // Names are prefixed "backbone/", "sspa/" and "uscl/".
  ParameterList parameters() const;
  ParameterList backbone_parameters() const;
};

inline constexpr const char* kBackbonePrefix = "backbone/";

}  // namespace icl
