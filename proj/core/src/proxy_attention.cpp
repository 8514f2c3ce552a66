#include "icl/proxy_attention.hpp"

#include <cmath>

#include "icl/errors.hpp"
#include "icl/ops.hpp"

namespace icl {

CrossAttentionOutput cross_attention(const Tensor& query, const Tensor& tokens, const Tensor& w_q,
                                     const Tensor& w_k, const Tensor& w_v) {
  if (query.rank() != 2) throw DimensionError("cross_attention: query must be [Z x d], got " + to_string(query.shape()));
  if (tokens.rank() != 2) throw DimensionError("cross_attention: tokens must be [S x d], got " + to_string(tokens.shape()));
  const std::size_t d = query.dim(1);
  if (tokens.dim(1) != d) {
    throw DimensionError("cross_attention: tokens " + to_string(tokens.shape()) + " do not share width with query " +
                         to_string(query.shape()));
  }
  for (const auto* w : {&w_q, &w_k, &w_v}) {
    if (w->rank() != 2 || w->dim(0) != d) {
      throw DimensionError("cross_attention: projection " + to_string(w->shape()) + " does not accept width " +
                           std::to_string(d));
    }
  }
  Tensor q = matmul(query, w_q);
  Tensor k = matmul(tokens, w_k);
  Tensor v = matmul(tokens, w_v);
  Tensor logits = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(d)));
  Tensor weights = softmax(logits, 1);
  return {matmul(weights, v), logits};
}

MultiHeadCrossAttention::MultiHeadCrossAttention(std::size_t d_model, std::size_t heads, Rng& rng)
    : d_model_(d_model) {
  if (heads == 0 || d_model % heads != 0) {
    throw ConfigError("attention width " + std::to_string(d_model) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
  const std::size_t d_head = d_model / heads;
  const double bound = 1.0 / std::sqrt(static_cast<double>(d_model));
  for (std::size_t h = 0; h < heads; ++h) {
    w_q.push_back(uniform_parameter({d_model, d_head}, bound, rng));
    w_k.push_back(uniform_parameter({d_model, d_head}, bound, rng));
    w_v.push_back(uniform_parameter({d_model, d_head}, bound, rng));
  }
  w_o = uniform_parameter({d_model, d_model}, bound, rng);
}

MultiHeadOutput MultiHeadCrossAttention::forward(const Tensor& query, const Tensor& tokens) const {
  MultiHeadOutput result;
  std::vector<Tensor> outs;
  outs.reserve(heads());
  for (std::size_t h = 0; h < heads(); ++h) {
    auto head = cross_attention(query, tokens, w_q[h], w_k[h], w_v[h]);
    outs.push_back(head.out);
    result.head_logits.push_back(head.logits);
  }
  result.out = matmul(outs.size() == 1 ? outs.front() : concat_cols(outs), w_o);
  return result;
}

void MultiHeadCrossAttention::collect(const std::string& prefix, ParameterList& out) const {
  for (std::size_t h = 0; h < heads(); ++h) {
    const auto tag = prefix + "head" + std::to_string(h) + ".";
    append(out, tag + "w_q", w_q[h]);
    append(out, tag + "w_k", w_k[h]);
    append(out, tag + "w_v", w_v[h]);
  }
  append(out, prefix + "w_o", w_o);
}

AttentionMap extract_attention_map(const std::vector<Tensor>& head_logits, Grid grid) {
  if (head_logits.empty()) throw ArgumentError("extract_attention_map: no heads");
  const Shape& first = head_logits.front().shape();
  for (const auto& l : head_logits) {
    if (l.shape() != first) {
      throw DimensionError("extract_attention_map: head logits " + to_string(l.shape()) + " vs " + to_string(first));
    }
  }
  if (first.size() != 2 || first[1] != grid.tokens()) {
    throw DimensionError("extract_attention_map: logits " + to_string(first) + " do not cover a " +
                         std::to_string(grid.height) + "x" + std::to_string(grid.width) + " grid");
  }
  Tensor acc = head_logits.front();
  for (std::size_t h = 1; h < head_logits.size(); ++h) acc = add(acc, head_logits[h]);
  if (head_logits.size() > 1) acc = scale(acc, 1.0 / static_cast<double>(head_logits.size()));
  return {reshape(acc, {first[0], grid.height, grid.width})};
}

ProxyBlock::ProxyBlock(std::size_t d_model, std::size_t heads, bool reduce, Rng& rng)
    : attention(d_model, heads, rng) {
  norm_q_gamma = constant_parameter({d_model}, 1.0);
  norm_q_beta = constant_parameter({d_model}, 0.0);
  norm_t_gamma = constant_parameter({d_model}, 1.0);
  norm_t_beta = constant_parameter({d_model}, 0.0);
  norm_mlp_gamma = constant_parameter({d_model}, 1.0);
  norm_mlp_beta = constant_parameter({d_model}, 0.0);
  const double b1 = 1.0 / std::sqrt(static_cast<double>(d_model));
  const double b2 = 1.0 / std::sqrt(static_cast<double>(2 * d_model));
  mlp_w1 = uniform_parameter({d_model, 2 * d_model}, b1, rng);
  mlp_b1 = constant_parameter({2 * d_model}, 0.0);
  mlp_w2 = uniform_parameter({2 * d_model, d_model}, b2, rng);
  mlp_b2 = constant_parameter({d_model}, 0.0);
  if (reduce) {
    if (d_model % 2 != 0) throw ConfigError("proxy width " + std::to_string(d_model) + " cannot be halved");
    reduce_w = uniform_parameter({d_model, d_model / 2}, b1, rng);
    reduce_b = constant_parameter({d_model / 2}, 0.0);
  }
}

void ProxyBlock::collect(const std::string& prefix, ParameterList& out) const {
  append(out, prefix + "norm_q.gamma", norm_q_gamma);
  append(out, prefix + "norm_q.beta", norm_q_beta);
  append(out, prefix + "norm_t.gamma", norm_t_gamma);
  append(out, prefix + "norm_t.beta", norm_t_beta);
  attention.collect(prefix + "mca.", out);
  append(out, prefix + "norm_mlp.gamma", norm_mlp_gamma);
  append(out, prefix + "norm_mlp.beta", norm_mlp_beta);
  append(out, prefix + "mlp.w1", mlp_w1);
  append(out, prefix + "mlp.b1", mlp_b1);
  append(out, prefix + "mlp.w2", mlp_w2);
  append(out, prefix + "mlp.b2", mlp_b2);
  append(out, prefix + "reduce.w", reduce_w);
  append(out, prefix + "reduce.b", reduce_b);
}

ProxyUpdate proxy_update(const Tensor& query, const Tensor& tokens, const ProxyBlock& block, Grid grid) {
  if (query.rank() != 2 || query.dim(1) != block.d_model()) {
    throw DimensionError("proxy_update: query " + to_string(query.shape()) + " does not match block width " +
                         std::to_string(block.d_model()));
  }
  if (tokens.rank() != 2 || tokens.dim(1) != block.d_model() || tokens.dim(0) != grid.tokens()) {
    throw DimensionError("proxy_update: tokens " + to_string(tokens.shape()) + " do not match block width " +
                         std::to_string(block.d_model()) + " and grid of " + std::to_string(grid.tokens()));
  }
  Tensor nq = layer_norm(query, block.norm_q_gamma, block.norm_q_beta);
  Tensor nt = layer_norm(tokens, block.norm_t_gamma, block.norm_t_beta);
  auto mca = block.attention.forward(nq, nt);
  Tensor q_hat = add(mca.out, query);

  Tensor h = layer_norm(q_hat, block.norm_mlp_gamma, block.norm_mlp_beta);
  h = gelu(linear(h, block.mlp_w1, block.mlp_b1));
  h = linear(h, block.mlp_w2, block.mlp_b2);
  Tensor refined = add(h, q_hat);

  ProxyUpdate result;
  result.refined = refined;
  result.next = block.reduce_w.defined() ? linear(refined, block.reduce_w, block.reduce_b) : refined;
  result.map = extract_attention_map(mca.head_logits, grid);
  result.head_logits = std::move(mca.head_logits);
  return result;
}

ChainOutput run_chain(const Tensor& q0, const std::array<Tensor, kNumScales>& tokens,
                      const std::array<ProxyBlock, kNumScales>& blocks,
                      const std::array<Grid, kNumScales>& grids, Stream stream) {
  ChainOutput out;
  Tensor q = stream == Stream::unlabeled ? q0.detach() : q0;
  for (std::size_t s = 0; s < kNumScales; ++s) {
    if (q.rank() != 2 || q.dim(1) != blocks[s].d_model()) {
      throw ConfigError("run_chain: proxy " + to_string(q.shape()) + " does not fit block " + std::to_string(s) +
                        " of width " + std::to_string(blocks[s].d_model()));
    }
    auto step = proxy_update(q, tokens[s], blocks[s], grids[s]);
    out.proxies[s] = step.refined;
    out.maps[s] = step.map;
    q = step.next;
  }
  out.last = q;
  return out;
}

}  // namespace icl
