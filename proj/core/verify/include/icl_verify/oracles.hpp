#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "icl/label_map.hpp"
#include "icl/metrics.hpp"
#include "icl/proxy_attention.hpp"

// Straight-line reference implementations. They share no code with the
// library ops: plain loops over std::vector, written directly from the
// defining formulas.
namespace icl::oracle {

// Row-major dense matrix.
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}
  double& operator()(std::size_t i, std::size_t j) { return v[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return v[i * cols + j]; }
};

Mat from_tensor(const Tensor& t);  // rank-2 tensors only

Mat matmul(const Mat& a, const Mat& b);
std::vector<double> softmax(const std::vector<double>& x);
// Row-wise layer norm with epsilon 1e-5 and per-column gamma/beta.
Mat layer_norm(const Mat& x, const std::vector<double>& gamma, const std::vector<double>& beta);
double gelu(double x);

// input [cin x h x w], weights [cout x cin x k x k], bias [cout] or empty.
std::vector<double> conv2d(const std::vector<double>& input, std::size_t cin, std::size_t h, std::size_t w,
                           const std::vector<double>& weights, std::size_t cout, std::size_t k,
                           const std::vector<double>& bias);

// Half-pixel bilinear resize with clamped source coordinates.
std::vector<double> bilinear(const std::vector<double>& input, std::size_t c, std::size_t h, std::size_t w,
                             std::size_t oh, std::size_t ow);

struct AttentionResult {
  Mat out;
  Mat logits;
};

AttentionResult cross_attention(const Mat& query, const Mat& tokens, const Mat& w_q, const Mat& w_k, const Mat& w_v);

struct MultiHeadResult {
  Mat out;
  std::vector<Mat> logits;
};

MultiHeadResult multi_head(const Mat& query, const Mat& tokens, const MultiHeadCrossAttention& params);

// Elementwise mean of the head logits, flattened [Z x S].
Mat mean_map(const std::vector<Mat>& head_logits);

struct ProxyResult {
  Mat refined;
  Mat next;
  Mat map;  // [Z x S]
};

ProxyResult proxy_update(const Mat& query, const Mat& tokens, const ProxyBlock& block);

// Mean over pixels of logsumexp(logits[:, p]) - logits[label, p].
double cross_entropy(const std::vector<double>& logits, std::size_t classes, const LabelMap& labels);
// Per-class 1 - (2 sum pt + eps) / (sum p + sum t + eps), averaged.
double soft_dice(const std::vector<double>& probs, const std::vector<double>& target, std::size_t classes);
// Class-axis softmax of a [Z x n] block.
std::vector<double> softmax_classes(const std::vector<double>& logits, std::size_t classes);

double dsc(const ClassMask& a, const ClassMask& b);
// Boundary by direct inspection of the four neighbours.
std::vector<std::pair<std::size_t, std::size_t>> boundary(const ClassMask& m);
// Exhaustive pairwise distances between boundary sets, nearest-rank 95th
// percentile found by integer search.
double hd95(const ClassMask& a, const ClassMask& b);

}  // namespace icl::oracle
