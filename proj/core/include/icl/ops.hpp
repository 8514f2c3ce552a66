#pragma once

#include <cstddef>
#include <vector>

#include "icl/tensor.hpp"

// Differentiable primitives. Binary elementwise ops require identical shapes;
// the only broadcasting is tensor-scalar arithmetic and the row-bias/affine
// parameters that linear, layer_norm and group_norm own.
namespace icl {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);

Tensor square(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor relu(const Tensor& a);
// Exact (erf-based) GELU.
Tensor gelu(const Tensor& a);

// Sum of all elements, shape [1].
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// Sums over the last axis; [..., n] -> [...]. A rank-1 input yields [1].
Tensor sum_last(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);
// [m x n] -> [n x m]
Tensor transpose(const Tensor& a);
// Columns [begin, end) of a matrix.
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);
Tensor concat_cols(const std::vector<Tensor>& parts);

Tensor matmul(const Tensor& a, const Tensor& b);
// x[m x k] * w[k x n] + bias[n] added to every row. `bias` may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

// Numerically stable softmax over one axis of any-rank tensor.
Tensor softmax(const Tensor& a, std::size_t axis);

// Stride-1 zero-padded cross-correlation, input [c_in x h x w], weights
// [c_out x c_in x k x k] with odd k; spatial size is preserved. `bias`
// ([c_out]) may be undefined.
Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias = {});

// 2x2 mean pooling with stride 2; h and w must be even.
Tensor avg_pool2(const Tensor& input);

// Bilinear resize of [c x h x w] to [c x out_h x out_w], half-pixel
// (align_corners = false) sampling with edge clamping.
Tensor bilinear_upsample(const Tensor& input, std::size_t out_h, std::size_t out_w);

inline constexpr double kNormEpsilon = 1e-5;

// Normalises every row over the last axis, then applies gamma/beta ([d]).
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta);

// Single-group group norm over a [c x h x w] map with per-channel
// gamma/beta ([c]).
Tensor group_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta);

namespace testing {

// Scoped fault injection used by mutation tests of the verification suite.
// While alive on a thread, softmax backward on that thread flips its sign.
class SoftmaxBackwardSignFlip {
 public:
  SoftmaxBackwardSignFlip();
  ~SoftmaxBackwardSignFlip();
  SoftmaxBackwardSignFlip(const SoftmaxBackwardSignFlip&) = delete;
  SoftmaxBackwardSignFlip& operator=(const SoftmaxBackwardSignFlip&) = delete;

 private:
  bool previous_;
};

}  // namespace testing

}  // namespace icl
