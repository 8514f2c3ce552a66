#include "icl/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "icl/errors.hpp"

namespace icl {

namespace {

thread_local bool g_flip_softmax_backward = false;

// Gradient buffer of an op input, or nullptr when it takes no gradient.
double* grad_of(const Tensor& t) {
  if (!t.defined() || !t.requires_grad()) return nullptr;
  return t.node()->grad_buffer().data();
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  }
}

void require_rank(const char* op, const Tensor& t, std::size_t rank, const char* operand) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": operand '" + operand + "' must have rank " +
                         std::to_string(rank) + ", got " + to_string(t.shape()));
  }
}

template <typename Fwd, typename Deriv>
Tensor unary(const char* op, const Tensor& a, Fwd fwd, Deriv deriv) {
  auto x = a.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = fwd(x[i]);
  return make_op_result(op, a.shape(), std::move(out), {a}, [a, deriv](detail::Node& o) {
    if (double* ga = grad_of(a)) {
      auto x = a.data();
      for (std::size_t i = 0; i < x.size(); ++i) ga[i] += o.grad[i] * deriv(x[i], o.value[i]);
    }
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  auto x = a.data();
  auto y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  return make_op_result("add", a.shape(), std::move(out), {a, b}, [a, b](detail::Node& o) {
    for (const auto* t : {&a, &b}) {
      if (double* g = grad_of(*t)) {
        for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  auto x = a.data();
  auto y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
  return make_op_result("sub", a.shape(), std::move(out), {a, b}, [a, b](detail::Node& o) {
    if (double* g = grad_of(a)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
    }
    if (double* g = grad_of(b)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] -= o.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  auto x = a.data();
  auto y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  return make_op_result("mul", a.shape(), std::move(out), {a, b}, [a, b](detail::Node& o) {
    auto x = a.data();
    auto y = b.data();
    if (double* g = grad_of(a)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * y[i];
    }
    if (double* g = grad_of(b)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * x[i];
    }
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_shape("div", a, b);
  auto x = a.data();
  auto y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] / y[i];
  return make_op_result("div", a.shape(), std::move(out), {a, b}, [a, b](detail::Node& o) {
    auto y = b.data();
    if (double* g = grad_of(a)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] / y[i];
    }
    if (double* g = grad_of(b)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] -= o.grad[i] * o.value[i] / y[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  return unary("scale", a, [factor](double x) { return x * factor; },
               [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double offset) {
  return unary("add_scalar", a, [offset](double x) { return x + offset; },
               [](double, double) { return 1.0; });
}

Tensor square(const Tensor& a) {
  return unary("square", a, [](double x) { return x * x; },
               [](double x, double) { return 2.0 * x; });
}

Tensor exp(const Tensor& a) {
  return unary("exp", a, [](double x) { return std::exp(x); },
               [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary("log", a, [](double x) { return std::log(x); },
               [](double x, double) { return 1.0 / x; });
}

Tensor relu(const Tensor& a) {
  return unary("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& a) {
  constexpr double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  return unary(
      "gelu", a, [=](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
      [=](double x, double) {
        return 0.5 * (1.0 + std::erf(x * inv_sqrt2)) + x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
      });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  return make_op_result("sum", {1}, {total}, {a}, [a](detail::Node& o) {
    if (double* g = grad_of(a)) {
      const double go = o.grad[0];
      for (std::size_t i = 0; i < a.numel(); ++i) g[i] += go;
    }
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor sum_last(const Tensor& a) {
  const std::size_t n = a.shape().back();
  const std::size_t rows = a.numel() / n;
  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  if (out_shape.empty()) out_shape = {1};
  auto x = a.data();
  std::vector<double> out(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += x[r * n + j];
    out[r] = s;
  }
  return make_op_result("sum_last", std::move(out_shape), std::move(out), {a},
                        [a, n, rows](detail::Node& o) {
                          if (double* g = grad_of(a)) {
                            for (std::size_t r = 0; r < rows; ++r) {
                              for (std::size_t j = 0; j < n; ++j) g[r * n + j] += o.grad[r];
                            }
                          }
                        });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.numel()) {
    throw DimensionError("reshape: cannot view " + to_string(a.shape()) + " as " + to_string(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return make_op_result("reshape", std::move(shape), std::move(out), {a}, [a](detail::Node& o) {
    if (double* g = grad_of(a)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_rank("transpose", a, 2, "a");
  const std::size_t m = a.dim(0), n = a.dim(1);
  auto x = a.data();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x[i * n + j];
  }
  return make_op_result("transpose", {n, m}, std::move(out), {a}, [a, m, n](detail::Node& o) {
    if (double* g = grad_of(a)) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) g[i * n + j] += o.grad[j * m + i];
      }
    }
  });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  require_rank("slice_cols", a, 2, "a");
  const std::size_t m = a.dim(0), n = a.dim(1);
  if (begin >= end || end > n) {
    throw ArgumentError("slice_cols: invalid range [" + std::to_string(begin) + ", " +
                        std::to_string(end) + ") for " + to_string(a.shape()));
  }
  const std::size_t w = end - begin;
  auto x = a.data();
  std::vector<double> out(m * w);
  for (std::size_t i = 0; i < m; ++i) {
    std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(i * n + begin), w, out.begin() + static_cast<std::ptrdiff_t>(i * w));
  }
  return make_op_result("slice_cols", {m, w}, std::move(out), {a},
                        [a, m, n, w, begin](detail::Node& o) {
                          if (double* g = grad_of(a)) {
                            for (std::size_t i = 0; i < m; ++i) {
                              for (std::size_t j = 0; j < w; ++j) g[i * n + begin + j] += o.grad[i * w + j];
                            }
                          }
                        });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ArgumentError("concat_cols: no operands");
  const std::size_t m = parts.front().dim(0);
  std::size_t n = 0;
  for (const auto& p : parts) {
    require_rank("concat_cols", p, 2, "part");
    if (p.dim(0) != m) {
      throw DimensionError("concat_cols: row mismatch " + to_string(parts.front().shape()) + " vs " +
                           to_string(p.shape()));
    }
    n += p.dim(1);
  }
  std::vector<double> out(m * n);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.dim(1);
    auto x = p.data();
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < w; ++j) out[i * n + offset + j] = x[i * w + j];
    }
    offset += w;
  }
  return make_op_result("concat_cols", {m, n}, std::move(out), parts, [parts, m, n](detail::Node& o) {
    std::size_t offset = 0;
    for (const auto& p : parts) {
      const std::size_t w = p.dim(1);
      if (double* g = grad_of(p)) {
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < w; ++j) g[i * w + j] += o.grad[i * n + offset + j];
        }
      }
      offset += w;
    }
  });
}

namespace {

// out[m x n] += a[m x k] * b[k x n]
void gemm_acc(const double* a, const double* b, double* out, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
}

// Accumulates both matmul input gradients for output gradient g[m x n].
void matmul_backward(const Tensor& a, const Tensor& b, const double* g, std::size_t m, std::size_t k,
                     std::size_t n) {
  auto x = a.data();
  auto y = b.data();
  if (double* ga = grad_of(a)) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t p = 0; p < k; ++p) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * y[p * n + j];
        ga[i * k + p] += s;
      }
    }
  }
  if (double* gb = grad_of(b)) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t p = 0; p < k; ++p) {
        const double av = x[i * k + p];
        for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += av * g[i * n + j];
      }
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2, "a");
  require_rank("matmul", b, 2, "b");
  if (a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: inner dimensions disagree for " + to_string(a.shape()) + " and " +
                         to_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  gemm_acc(a.data().data(), b.data().data(), out.data(), m, k, n);
  return make_op_result("matmul", {m, n}, std::move(out), {a, b}, [a, b, m, k, n](detail::Node& o) {
    matmul_backward(a, b, o.grad.data(), m, k, n);
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require_rank("linear", x, 2, "x");
  require_rank("linear", w, 2, "w");
  if (x.dim(1) != w.dim(0)) {
    throw DimensionError("linear: input " + to_string(x.shape()) + " does not match weights " +
                         to_string(w.shape()));
  }
  const std::size_t m = x.dim(0), k = x.dim(1), n = w.dim(1);
  if (bias.defined() && bias.shape() != Shape{n}) {
    throw DimensionError("linear: bias " + to_string(bias.shape()) + " does not match weights " +
                         to_string(w.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  if (bias.defined()) {
    auto bv = bias.data();
    for (std::size_t i = 0; i < m; ++i) std::copy(bv.begin(), bv.end(), out.begin() + static_cast<std::ptrdiff_t>(i * n));
  }
  gemm_acc(x.data().data(), w.data().data(), out.data(), m, k, n);
  return make_op_result("linear", {m, n}, std::move(out), {x, w, bias},
                        [x, w, bias, m, k, n](detail::Node& o) {
                          matmul_backward(x, w, o.grad.data(), m, k, n);
                          if (double* gb = grad_of(bias)) {
                            for (std::size_t i = 0; i < m; ++i) {
                              for (std::size_t j = 0; j < n; ++j) gb[j] += o.grad[i * n + j];
                            }
                          }
                        });
}

Tensor softmax(const Tensor& a, std::size_t axis) {
  const auto& s = a.shape();
  if (axis >= s.size()) {
    throw ArgumentError("softmax: axis " + std::to_string(axis) + " out of range for " + to_string(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t n = s[axis];
  auto x = a.data();
  std::vector<double> out(x.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * n * inner + i;
      double mx = x[base];
      for (std::size_t k = 1; k < n; ++k) mx = std::max(mx, x[base + k * inner]);
      double total = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const double e = std::exp(x[base + k * inner] - mx);
        out[base + k * inner] = e;
        total += e;
      }
      const double inv = 1.0 / total;
      for (std::size_t k = 0; k < n; ++k) out[base + k * inner] *= inv;
    }
  }
  return make_op_result("softmax", s, std::move(out), {a}, [a, outer, inner, n](detail::Node& o) {
    double* g = grad_of(a);
    if (!g) return;
    const double sign = g_flip_softmax_backward ? -1.0 : 1.0;
    for (std::size_t b = 0; b < outer; ++b) {
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t base = b * n * inner + i;
        double dot = 0.0;
        for (std::size_t k = 0; k < n; ++k) dot += o.grad[base + k * inner] * o.value[base + k * inner];
        for (std::size_t k = 0; k < n; ++k) {
          const std::size_t idx = base + k * inner;
          g[idx] += sign * o.value[idx] * (o.grad[idx] - dot);
        }
      }
    }
  });
}

namespace {

// Zero-padded copy of a [c, h, w] block with `pad` cells on every side.
std::vector<double> pad_planes(const double* src, std::size_t c, std::size_t h, std::size_t w, std::size_t pad) {
  const std::size_t hp = h + 2 * pad, wp = w + 2 * pad;
  std::vector<double> out(c * hp * wp, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < h; ++y) {
      std::copy_n(src + (ch * h + y) * w, w, out.begin() + static_cast<std::ptrdiff_t>((ch * hp + y + pad) * wp + pad));
    }
  }
  return out;
}

// Kernel size as a compile-time constant when KS > 0, otherwise the runtime k.
template <std::size_t KS>
inline std::size_t kernel_size(std::size_t k) {
  if constexpr (KS > 0) return KS; else return k;
}

// One output row segment of T pixels accumulated over every input tap.
template <std::size_t T, std::size_t KS>
inline void conv_tile(const double* pin, const double* wrow, std::size_t cin, std::size_t k_rt, std::size_t hp,
                      std::size_t wp, std::size_t y, std::size_t x, double* dst) {
  const std::size_t k = kernel_size<KS>(k_rt);
  double acc[T];
  for (std::size_t j = 0; j < T; ++j) acc[j] = dst[j];
  for (std::size_t ic = 0; ic < cin; ++ic) {
    const double* plane = pin + ic * hp * wp;
    for (std::size_t ky = 0; ky < k; ++ky) {
      const double* row = plane + (y + ky) * wp + x;
      const double* wk = wrow + (ic * k + ky) * k;
      for (std::size_t kx = 0; kx < k; ++kx) {
        const double wv = wk[kx];
        for (std::size_t j = 0; j < T; ++j) acc[j] += wv * row[kx + j];
      }
    }
  }
  for (std::size_t j = 0; j < T; ++j) dst[j] = acc[j];
}

// out[oc] += sum over (ic, ky, kx) of w[oc, ic, ky, kx] * pin[ic] shifted by
// (ky, kx); pin is padded by k / 2 on each side.
template <std::size_t KS>
void conv_accumulate_k(const double* pin, const double* w, double* out, std::size_t cin, std::size_t cout,
                       std::size_t h, std::size_t wd, std::size_t k) {
  const std::size_t hp = h + k - 1, wp = wd + k - 1;
  for (std::size_t oc = 0; oc < cout; ++oc) {
    const double* wrow = w + oc * cin * k * k;
    for (std::size_t y = 0; y < h; ++y) {
      double* orow = out + (oc * h + y) * wd;
      std::size_t x = 0;
      for (; x + 16 <= wd; x += 16) conv_tile<16, KS>(pin, wrow, cin, k, hp, wp, y, x, orow + x);
      for (; x + 4 <= wd; x += 4) conv_tile<4, KS>(pin, wrow, cin, k, hp, wp, y, x, orow + x);
      for (; x < wd; ++x) conv_tile<1, KS>(pin, wrow, cin, k, hp, wp, y, x, orow + x);
    }
  }
}

void conv_accumulate(const double* pin, const double* w, double* out, std::size_t cin, std::size_t cout,
                     std::size_t h, std::size_t wd, std::size_t k) {
  if (k == 3) return conv_accumulate_k<3>(pin, w, out, cin, cout, h, wd, k);
  if (k == 1) return conv_accumulate_k<1>(pin, w, out, cin, cout, h, wd, k);
  conv_accumulate_k<0>(pin, w, out, cin, cout, h, wd, k);
}

// gw[oc, ic, ky, kx] += sum over pixels of g[oc] * pin[ic] shifted by (ky, kx).
template <std::size_t KS>
void conv_weight_grad_k(const double* pin, const double* g, double* gw, std::size_t cin, std::size_t cout,
                        std::size_t h, std::size_t wd, std::size_t k_rt) {
  const std::size_t k = kernel_size<KS>(k_rt);
  const std::size_t hp = h + k - 1, wp = wd + k - 1;
  constexpr std::size_t T = 4;
  constexpr std::size_t kMaxTaps = KS > 0 ? KS * KS : 1;
  std::vector<double> heap_acc(KS > 0 ? 0 : k * k * T);
  for (std::size_t oc = 0; oc < cout; ++oc) {
    for (std::size_t ic = 0; ic < cin; ++ic) {
      const double* plane = pin + ic * hp * wp;
      double local[kMaxTaps * T] = {};
      double* acc = KS > 0 ? local : heap_acc.data();
      std::fill(acc, acc + k * k * T, 0.0);
      double* dst = gw + (oc * cin + ic) * k * k;
      for (std::size_t y = 0; y < h; ++y) {
        const double* grow = g + (oc * h + y) * wd;
        std::size_t x = 0;
        for (; x + T <= wd; x += T) {
          for (std::size_t ky = 0; ky < k; ++ky) {
            const double* row = plane + (y + ky) * wp + x;
            for (std::size_t kx = 0; kx < k; ++kx) {
              double* a = acc + (ky * k + kx) * T;
              for (std::size_t j = 0; j < T; ++j) a[j] += grow[x + j] * row[kx + j];
            }
          }
        }
        for (; x < wd; ++x) {
          for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) dst[ky * k + kx] += grow[x] * plane[(y + ky) * wp + x + kx];
          }
        }
      }
      for (std::size_t t = 0; t < k * k; ++t) {
        double s = 0.0;
        for (std::size_t j = 0; j < T; ++j) s += acc[t * T + j];
        dst[t] += s;
      }
    }
  }
}

void conv_weight_grad(const double* pin, const double* g, double* gw, std::size_t cin, std::size_t cout,
                      std::size_t h, std::size_t wd, std::size_t k) {
  if (k == 3) return conv_weight_grad_k<3>(pin, g, gw, cin, cout, h, wd, k);
  if (k == 1) return conv_weight_grad_k<1>(pin, g, gw, cin, cout, h, wd, k);
  conv_weight_grad_k<0>(pin, g, gw, cin, cout, h, wd, k);
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  require_rank("conv2d", input, 3, "input");
  require_rank("conv2d", weights, 4, "weights");
  const std::size_t cin = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t cout = weights.dim(0), k = weights.dim(2);
  if (weights.dim(1) != cin) {
    throw DimensionError("conv2d: input channels " + to_string(input.shape()) +
                         " do not match weights " + to_string(weights.shape()));
  }
  if (weights.dim(3) != k || k % 2 == 0) {
    throw DimensionError("conv2d: kernel must be square with odd size, got " + to_string(weights.shape()));
  }
  if (bias.defined() && bias.shape() != Shape{cout}) {
    throw DimensionError("conv2d: bias " + to_string(bias.shape()) + " does not match weights " +
                         to_string(weights.shape()));
  }
  const std::size_t pad = k / 2;
  const std::size_t hw = h * w;

  std::vector<double> out(cout * hw, 0.0);
  if (bias.defined()) {
    auto bv = bias.data();
    for (std::size_t oc = 0; oc < cout; ++oc) std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(oc * hw), hw, bv[oc]);
  }
  const auto padded = pad_planes(input.data().data(), cin, h, w, pad);
  conv_accumulate(padded.data(), weights.data().data(), out.data(), cin, cout, h, w, k);

  return make_op_result(
      "conv2d", {cout, h, w}, std::move(out), {input, weights, bias},
      [input, weights, bias, cin, cout, h, w, k, pad](detail::Node& o) {
        const std::size_t hw = h * w;
        const double* g = o.grad.data();
        if (double* gin = grad_of(input)) {
          // Input gradient is a convolution of the output gradient with the
          // spatially flipped, channel-transposed kernel.
          const double* wt = weights.data().data();
          std::vector<double> flipped(cin * cout * k * k);
          for (std::size_t oc = 0; oc < cout; ++oc) {
            for (std::size_t ic = 0; ic < cin; ++ic) {
              for (std::size_t t = 0; t < k * k; ++t) {
                flipped[(ic * cout + oc) * k * k + (k * k - 1 - t)] = wt[(oc * cin + ic) * k * k + t];
              }
            }
          }
          const auto gpad = pad_planes(g, cout, h, w, pad);
          conv_accumulate(gpad.data(), flipped.data(), gin, cout, cin, h, w, k);
        }
        if (double* gw = grad_of(weights)) {
          const auto padded = pad_planes(input.data().data(), cin, h, w, pad);
          conv_weight_grad(padded.data(), g, gw, cin, cout, h, w, k);
        }
        if (double* gb = grad_of(bias)) {
          for (std::size_t oc = 0; oc < cout; ++oc) {
            double s = 0.0;
            for (std::size_t i = 0; i < hw; ++i) s += g[oc * hw + i];
            gb[oc] += s;
          }
        }
      });
}

Tensor avg_pool2(const Tensor& input) {
  require_rank("avg_pool2", input, 3, "input");
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  if (h % 2 || w % 2) throw DimensionError("avg_pool2: odd spatial size " + to_string(input.shape()));
  const std::size_t oh = h / 2, ow = w / 2;
  auto x = input.data();
  std::vector<double> out(c * oh * ow);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xx = 0; xx < ow; ++xx) {
        const std::size_t i = (ch * h + 2 * y) * w + 2 * xx;
        out[(ch * oh + y) * ow + xx] = 0.25 * (x[i] + x[i + 1] + x[i + w] + x[i + w + 1]);
      }
    }
  }
  return make_op_result("avg_pool2", {c, oh, ow}, std::move(out), {input},
                        [input, c, h, w, oh, ow](detail::Node& o) {
                          double* g = grad_of(input);
                          if (!g) return;
                          for (std::size_t ch = 0; ch < c; ++ch) {
                            for (std::size_t y = 0; y < oh; ++y) {
                              for (std::size_t xx = 0; xx < ow; ++xx) {
                                const double v = 0.25 * o.grad[(ch * oh + y) * ow + xx];
                                const std::size_t i = (ch * h + 2 * y) * w + 2 * xx;
                                g[i] += v;
                                g[i + 1] += v;
                                g[i + w] += v;
                                g[i + w + 1] += v;
                              }
                            }
                          }
                        });
}

namespace {

struct LerpAxis {
  std::vector<std::size_t> lo, hi;
  std::vector<double> frac;
};

LerpAxis lerp_axis(std::size_t in, std::size_t out) {
  LerpAxis ax;
  ax.lo.resize(out);
  ax.hi.resize(out);
  ax.frac.resize(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t i = 0; i < out; ++i) {
    double src = (static_cast<double>(i) + 0.5) * ratio - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const auto lo = static_cast<std::size_t>(std::floor(src));
    ax.lo[i] = lo;
    ax.hi[i] = std::min(lo + 1, in - 1);
    ax.frac[i] = src - static_cast<double>(lo);
  }
  return ax;
}

}  // namespace

Tensor bilinear_upsample(const Tensor& input, std::size_t out_h, std::size_t out_w) {
  require_rank("bilinear_upsample", input, 3, "input");
  if (out_h == 0 || out_w == 0) throw ArgumentError("bilinear_upsample: zero output size");
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  if (out_h < h || out_w < w) {
    throw ArgumentError("bilinear_upsample: output " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                        " smaller than input " + to_string(input.shape()));
  }
  auto ay = lerp_axis(h, out_h);
  auto ax = lerp_axis(w, out_w);
  auto x = input.data();
  std::vector<double> out(c * out_h * out_w);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* plane = x.data() + ch * h * w;
    for (std::size_t y = 0; y < out_h; ++y) {
      const double fy = ay.frac[y];
      const double* r0 = plane + ay.lo[y] * w;
      const double* r1 = plane + ay.hi[y] * w;
      double* orow = out.data() + (ch * out_h + y) * out_w;
      for (std::size_t xx = 0; xx < out_w; ++xx) {
        const double fx = ax.frac[xx];
        const double top = r0[ax.lo[xx]] * (1.0 - fx) + r0[ax.hi[xx]] * fx;
        const double bot = r1[ax.lo[xx]] * (1.0 - fx) + r1[ax.hi[xx]] * fx;
        orow[xx] = top * (1.0 - fy) + bot * fy;
      }
    }
  }
  return make_op_result("bilinear_upsample", {c, out_h, out_w}, std::move(out), {input},
                        [input, ay, ax, c, h, w, out_h, out_w](detail::Node& o) {
                          double* g = grad_of(input);
                          if (!g) return;
                          for (std::size_t ch = 0; ch < c; ++ch) {
                            double* plane = g + ch * h * w;
                            for (std::size_t y = 0; y < out_h; ++y) {
                              const double fy = ay.frac[y];
                              double* r0 = plane + ay.lo[y] * w;
                              double* r1 = plane + ay.hi[y] * w;
                              const double* grow = o.grad.data() + (ch * out_h + y) * out_w;
                              for (std::size_t xx = 0; xx < out_w; ++xx) {
                                const double fx = ax.frac[xx];
                                const double gv = grow[xx];
                                r0[ax.lo[xx]] += gv * (1.0 - fy) * (1.0 - fx);
                                r0[ax.hi[xx]] += gv * (1.0 - fy) * fx;
                                r1[ax.lo[xx]] += gv * fy * (1.0 - fx);
                                r1[ax.hi[xx]] += gv * fy * fx;
                              }
                            }
                          }
                        });
}

namespace {

// Shared forward/backward of layer_norm and group_norm. A "group" of `len`
// contiguous values is normalised; the affine index of element j within a
// group is j / affine_stride.
Tensor normalize(const char* op, const Tensor& x, const Tensor& gamma, const Tensor& beta, std::size_t len,
                 std::size_t affine_stride) {
  const std::size_t groups = x.numel() / len;
  const std::size_t channels = len / affine_stride;
  if (gamma.shape() != Shape{channels} || beta.shape() != Shape{channels}) {
    throw DimensionError(std::string(op) + ": affine parameters " + to_string(gamma.shape()) + "/" +
                         to_string(beta.shape()) + " do not match input " + to_string(x.shape()));
  }
  auto xv = x.data();
  auto gv = gamma.data();
  auto bv = beta.data();
  std::vector<double> xhat(xv.size()), inv_std(groups), out(xv.size());
  for (std::size_t gi = 0; gi < groups; ++gi) {
    const double* row = xv.data() + gi * len;
    double mu = 0.0;
    for (std::size_t j = 0; j < len; ++j) mu += row[j];
    mu /= static_cast<double>(len);
    double var = 0.0;
    for (std::size_t j = 0; j < len; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(len);
    const double inv = 1.0 / std::sqrt(var + kNormEpsilon);
    inv_std[gi] = inv;
    for (std::size_t j = 0; j < len; ++j) {
      const double xh = (row[j] - mu) * inv;
      xhat[gi * len + j] = xh;
      const std::size_t c = j / affine_stride;
      out[gi * len + j] = xh * gv[c] + bv[c];
    }
  }
  return make_op_result(
      op, x.shape(), std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std), groups, len,
       affine_stride](detail::Node& o) {
        auto gv = gamma.data();
        double* gx = grad_of(x);
        double* gg = grad_of(gamma);
        double* gb = grad_of(beta);
        std::vector<double> dxhat(len);
        for (std::size_t gi = 0; gi < groups; ++gi) {
          const double* go = o.grad.data() + gi * len;
          const double* xh = xhat.data() + gi * len;
          double mean_d = 0.0, mean_dx = 0.0;
          for (std::size_t j = 0; j < len; ++j) {
            const std::size_t c = j / affine_stride;
            if (gg) gg[c] += go[j] * xh[j];
            if (gb) gb[c] += go[j];
            dxhat[j] = go[j] * gv[c];
            mean_d += dxhat[j];
            mean_dx += dxhat[j] * xh[j];
          }
          if (!gx) continue;
          mean_d /= static_cast<double>(len);
          mean_dx /= static_cast<double>(len);
          const double inv = inv_std[gi];
          for (std::size_t j = 0; j < len; ++j) {
            gx[gi * len + j] += inv * (dxhat[j] - mean_d - xh[j] * mean_dx);
          }
        }
      });
}

}  // namespace

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta) {
  if (x.rank() == 0) throw DimensionError("layer_norm: scalar input");
  return normalize("layer_norm", x, gamma, beta, x.shape().back(), 1);
}

Tensor group_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta) {
  require_rank("group_norm", x, 3, "x");
  return normalize("group_norm", x, gamma, beta, x.numel(), x.dim(1) * x.dim(2));
}

namespace testing {

SoftmaxBackwardSignFlip::SoftmaxBackwardSignFlip() : previous_(g_flip_softmax_backward) {
  g_flip_softmax_backward = true;
}

SoftmaxBackwardSignFlip::~SoftmaxBackwardSignFlip() { g_flip_softmax_backward = previous_; }

}  // namespace testing

}  // namespace icl
