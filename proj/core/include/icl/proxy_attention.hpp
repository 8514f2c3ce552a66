#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "icl/parameters.hpp"
#include "icl/rng.hpp"
#include "icl/tensor.hpp"

// Semantic-aware proxy machinery: cross-attention of class proxies (queries)
// against feature tokens (keys/values), the multi-head extension, attention
// map extraction and the residual proxy update that carries proxies from one
// decoder scale to the next.
namespace icl {

inline constexpr std::size_t kNumScales = 3;

// Spatial extent of the token grid at one scale.
struct Grid {
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t tokens() const { return height * width; }
  friend bool operator==(const Grid&, const Grid&) = default;
};

struct CrossAttentionOutput {
  Tensor out;     // [Z x d_head]
  Tensor logits;  // [Z x S], pre-softmax q k^T / sqrt(d)
};

// Single attention head. `query` is [Z x d], `tokens` is [S x d]; the
// projections are [d x d_head]. Logits are divided by sqrt(d) where d is the
// pre-projection width.
CrossAttentionOutput cross_attention(const Tensor& query, const Tensor& tokens, const Tensor& w_q,
                                     const Tensor& w_k, const Tensor& w_v);

struct MultiHeadOutput {
  Tensor out;                       // [Z x d]
  std::vector<Tensor> head_logits;  // N tensors of [Z x S]
};

// N independent heads whose concatenated outputs are projected by W_O.
class MultiHeadCrossAttention {
 public:
  MultiHeadCrossAttention() = default;
  // Throws ConfigError unless d_model is divisible by heads.
  MultiHeadCrossAttention(std::size_t d_model, std::size_t heads, Rng& rng);

  MultiHeadOutput forward(const Tensor& query, const Tensor& tokens) const;

  std::size_t d_model() const { return d_model_; }
  std::size_t heads() const { return w_q.size(); }
  void collect(const std::string& prefix, ParameterList& out) const;

  std::vector<Tensor> w_q, w_k, w_v;  // per head, [d x d/N]
  Tensor w_o;                         // [d x d]

 private:
  std::size_t d_model_ = 0;
};

// Per-class spatial logit map [Z x h x w] averaged over heads.
struct AttentionMap {
  Tensor map;
};

AttentionMap extract_attention_map(const std::vector<Tensor>& head_logits, Grid grid);

// Parameters of one proxy-update block.
class ProxyBlock {
 public:
  ProxyBlock() = default;
  // `reduce` selects the halving 1x1 conv; the last scale keeps the width and
  // passes the refined proxy through unchanged.
  ProxyBlock(std::size_t d_model, std::size_t heads, bool reduce, Rng& rng);

  std::size_t d_model() const { return attention.d_model(); }
  std::size_t output_dim() const { return reduce_w.defined() ? reduce_w.dim(1) : d_model(); }
  void collect(const std::string& prefix, ParameterList& out) const;

  Tensor norm_q_gamma, norm_q_beta;
  Tensor norm_t_gamma, norm_t_beta;
  MultiHeadCrossAttention attention;
  Tensor norm_mlp_gamma, norm_mlp_beta;
  Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;  // d -> 2d -> d, GELU between
  Tensor reduce_w, reduce_b;              // [d x d/2]; undefined at the last scale
};

struct ProxyUpdate {
  Tensor refined;  // [Z x d]: MLP(Norm(Q^)) + Q^, the proxy at this scale
  Tensor next;     // [Z x d/2] (or [Z x d] at the last scale): input to the next scale
  AttentionMap map;
  std::vector<Tensor> head_logits;
};

// Q^ = MCA(Norm(Q), Norm(T)) + Q;  next = Conv1x1(MLP(Norm(Q^)) + Q^).
ProxyUpdate proxy_update(const Tensor& query, const Tensor& tokens, const ProxyBlock& block, Grid grid);

enum class Stream { labeled, unlabeled };

struct ChainOutput {
  std::array<Tensor, kNumScales> proxies;  // refined proxies, widths 4C, 2C, C
  std::array<AttentionMap, kNumScales> maps;
  Tensor last;  // output of the final block
};

// Runs the proxy through the three blocks in order. On the unlabeled stream
// the initial proxy enters detached, so nothing computed from that stream
// can move it.
ChainOutput run_chain(const Tensor& q0, const std::array<Tensor, kNumScales>& tokens,
                      const std::array<ProxyBlock, kNumScales>& blocks,
                      const std::array<Grid, kNumScales>& grids, Stream stream);

}  // namespace icl
