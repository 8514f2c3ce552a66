#include "icl/icl_heads.hpp"

#include <cmath>

#include "icl/errors.hpp"
#include "icl/ops.hpp"

namespace icl {

SegHead::SegHead(std::size_t classes, Rng& rng) {
  weights = uniform_parameter({classes, classes, 3, 3}, 1.0 / std::sqrt(static_cast<double>(classes * 9)), rng);
  bias = constant_parameter({classes}, 0.0);
}

Tensor SegHead::forward(const Tensor& map) const { return conv2d(map, weights, bias); }

void SegHead::collect(const std::string& prefix, ParameterList& out) const {
  append(out, prefix + "w", weights);
  append(out, prefix + "b", bias);
}

namespace {

std::array<Tensor, kNumScales> tokens_of(const MultiScaleFeatures& features, const ModelConfig& config) {
  std::array<Tensor, kNumScales> tokens;
  for (std::size_t s = 0; s < kNumScales; ++s) {
    const auto grid = config.scale_grid(s);
    const Shape expected{config.scale_channels(s), grid.height, grid.width};
    if (features.scales[s].shape() != expected) {
      throw DimensionError("scale " + std::to_string(s) + " features " + to_string(features.scales[s].shape()) +
                           " do not match expected " + to_string(expected));
    }
    tokens[s] = tokenize(features.scales[s]);
  }
  return tokens;
}

}  // namespace

Sspa::Sspa(const ModelConfig& config, Rng& rng) : config_(config) {
  config.validate();
  q0 = normal_parameter({config.classes, config.scale_channels(0)}, 0.02, rng);
  for (std::size_t s = 0; s < kNumScales; ++s) {
    blocks[s] = ProxyBlock(config.scale_channels(s), config.heads, s + 1 < kNumScales, rng);
    heads[s] = SegHead(config.classes, rng);
  }
}

SspaStreamOutput Sspa::forward(const MultiScaleFeatures& features, Stream stream) const {
  auto chain = run_chain(q0, tokens_of(features, config_), blocks, config_.grids(), stream);
  SspaStreamOutput out;
  for (std::size_t s = 0; s < kNumScales; ++s) {
    out.attention[s] = chain.maps[s].map;
    out.segmentation[s] = heads[s].forward(chain.maps[s].map);
    out.proxies[s] = chain.proxies[s];
  }
  return out;
}

void Sspa::collect(const std::string& prefix, ParameterList& out) const {
  append(out, prefix + "q0", q0);
  for (std::size_t s = 0; s < kNumScales; ++s) {
    blocks[s].collect(prefix + "block" + std::to_string(s) + ".", out);
    heads[s].collect(prefix + "head" + std::to_string(s) + ".", out);
  }
}

SspaOutput sspa_forward(const Sspa& sspa, const MultiScaleFeatures& labeled, const MultiScaleFeatures& unlabeled) {
  return {sspa.forward(labeled, Stream::labeled), sspa.forward(unlabeled, Stream::unlabeled)};
}

Uscl::Uscl(const ModelConfig& config, Rng& rng) : config_(config) {
  config.validate();
  for (std::size_t s = 0; s < kNumScales; ++s) {
    attention[s] = MultiHeadCrossAttention(config.scale_channels(s), config.heads, rng);
    heads[s] = SegHead(config.classes, rng);
  }
}

UsclOutput Uscl::forward(const MultiScaleFeatures& unlabeled, const ScaleMaps& proxies) const {
  auto tokens = tokens_of(unlabeled, config_);
  UsclOutput out;
  for (std::size_t s = 0; s < kNumScales; ++s) {
    if (proxies[s].shape() != Shape{config_.classes, config_.scale_channels(s)}) {
      throw DimensionError("uscl: proxy " + to_string(proxies[s].shape()) + " at scale " + std::to_string(s) +
                           " has the wrong width");
    }
    auto mca = attention[s].forward(proxies[s], tokens[s]);
    out.attention[s] = extract_attention_map(mca.head_logits, config_.scale_grid(s)).map;
    out.guided[s] = heads[s].forward(out.attention[s]);
  }
  return out;
}

void Uscl::collect(const std::string& prefix, ParameterList& out) const {
  for (std::size_t s = 0; s < kNumScales; ++s) {
    attention[s].collect(prefix + "mca" + std::to_string(s) + ".", out);
    heads[s].collect(prefix + "head" + std::to_string(s) + ".", out);
  }
}

IclModel::IclModel(const ModelConfig& cfg, std::uint64_t seed) : config(cfg) {
  config.validate();
  Rng backbone_rng(mix_seed(seed, 1));
  Rng sspa_rng(mix_seed(seed, 2));
  Rng uscl_rng(mix_seed(seed, 3));
  backbone = Backbone(config, backbone_rng);
  sspa = Sspa(config, sspa_rng);
  uscl = Uscl(config, uscl_rng);
}

ParameterList IclModel::parameters() const {
  ParameterList out;
  backbone.collect(kBackbonePrefix, out);
  sspa.collect("sspa/", out);
  uscl.collect("uscl/", out);
  return out;
}

ParameterList IclModel::backbone_parameters() const {
  ParameterList out;
  backbone.collect(kBackbonePrefix, out);
  return out;
}

}  // namespace icl
