#include "icl_verify/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "icl/errors.hpp"

namespace icl::oracle {

namespace {

Mat add(const Mat& a, const Mat& b) {
  Mat c = a;
  for (std::size_t i = 0; i < c.v.size(); ++i) c.v[i] += b.v[i];
  return c;
}

Mat add_row(const Mat& a, const std::vector<double>& bias) {
  Mat c = a;
  for (std::size_t i = 0; i < c.rows; ++i)
    for (std::size_t j = 0; j < c.cols; ++j) c(i, j) += bias[j];
  return c;
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

Mat from_tensor(const Tensor& t) {
  if (t.rank() != 2) throw DimensionError("oracle::from_tensor: rank-2 tensor expected");
  Mat m(t.dim(0), t.dim(1));
  m.v = values(t);
  return m;
}

Mat matmul(const Mat& a, const Mat& b) {
  Mat c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t j = 0; j < b.cols; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < a.cols; ++p) s += a(i, p) * b(p, j);
      c(i, j) = s;
    }
  }
  return c;
}

std::vector<double> softmax(const std::vector<double>& x) {
  std::vector<double> e(x.size());
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    e[i] = std::exp(x[i]);
    total += e[i];
  }
  for (auto& v : e) v /= total;
  return e;
}

Mat layer_norm(const Mat& x, const std::vector<double>& gamma, const std::vector<double>& beta) {
  Mat y(x.rows, x.cols);
  for (std::size_t i = 0; i < x.rows; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j) mu += x(i, j);
    mu /= static_cast<double>(x.cols);
    double var = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j) var += (x(i, j) - mu) * (x(i, j) - mu);
    var /= static_cast<double>(x.cols);
    for (std::size_t j = 0; j < x.cols; ++j) y(i, j) = (x(i, j) - mu) / std::sqrt(var + 1e-5) * gamma[j] + beta[j];
  }
  return y;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

std::vector<double> conv2d(const std::vector<double>& input, std::size_t cin, std::size_t h, std::size_t w,
                           const std::vector<double>& weights, std::size_t cout, std::size_t k,
                           const std::vector<double>& bias) {
  const long pad = static_cast<long>(k / 2);
  std::vector<double> out(cout * h * w, 0.0);
  for (std::size_t o = 0; o < cout; ++o) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        double s = bias.empty() ? 0.0 : bias[o];
        for (std::size_t i = 0; i < cin; ++i) {
          for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
              const long sy = static_cast<long>(y + ky) - pad, sx = static_cast<long>(x + kx) - pad;
              if (sy < 0 || sx < 0 || sy >= static_cast<long>(h) || sx >= static_cast<long>(w)) continue;
              s += weights[((o * cin + i) * k + ky) * k + kx] *
                   input[(i * h + static_cast<std::size_t>(sy)) * w + static_cast<std::size_t>(sx)];
            }
          }
        }
        out[(o * h + y) * w + x] = s;
      }
    }
  }
  return out;
}

std::vector<double> bilinear(const std::vector<double>& input, std::size_t c, std::size_t h, std::size_t w,
                             std::size_t oh, std::size_t ow) {
  auto source = [](std::size_t dst, std::size_t in, std::size_t out) {
    double s = (static_cast<double>(dst) + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
    return std::clamp(s, 0.0, static_cast<double>(in - 1));
  };
  std::vector<double> out(c * oh * ow);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        const double sy = source(y, h, oh), sx = source(x, w, ow);
        const auto y0 = static_cast<std::size_t>(std::floor(sy)), x0 = static_cast<std::size_t>(std::floor(sx));
        const std::size_t y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
        const double fy = sy - static_cast<double>(y0), fx = sx - static_cast<double>(x0);
        auto at = [&](std::size_t yy, std::size_t xx) { return input[(ch * h + yy) * w + xx]; };
        out[(ch * oh + y) * ow + x] = (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x1)) +
                                      fy * ((1 - fx) * at(y1, x0) + fx * at(y1, x1));
      }
    }
  }
  return out;
}

AttentionResult cross_attention(const Mat& query, const Mat& tokens, const Mat& w_q, const Mat& w_k,
                                const Mat& w_v) {
  const Mat q = matmul(query, w_q), k = matmul(tokens, w_k), v = matmul(tokens, w_v);
  AttentionResult r{Mat(q.rows, v.cols), Mat(q.rows, k.rows)};
  const double root_d = std::sqrt(static_cast<double>(query.cols));
  for (std::size_t z = 0; z < q.rows; ++z) {
    std::vector<double> row(k.rows);
    for (std::size_t s = 0; s < k.rows; ++s) {
      double dot = 0.0;
      for (std::size_t j = 0; j < q.cols; ++j) dot += q(z, j) * k(s, j);
      row[s] = dot / root_d;
      r.logits(z, s) = row[s];
    }
    const auto a = softmax(row);
    for (std::size_t j = 0; j < v.cols; ++j) {
      double acc = 0.0;
      for (std::size_t s = 0; s < k.rows; ++s) acc += a[s] * v(s, j);
      r.out(z, j) = acc;
    }
  }
  return r;
}

MultiHeadResult multi_head(const Mat& query, const Mat& tokens, const MultiHeadCrossAttention& params) {
  const std::size_t heads = params.heads();
  const std::size_t d_head = params.d_model() / heads;
  Mat concat(query.rows, d_head * heads);
  MultiHeadResult r;
  for (std::size_t h = 0; h < heads; ++h) {
    auto head = cross_attention(query, tokens, from_tensor(params.w_q[h]), from_tensor(params.w_k[h]),
                                from_tensor(params.w_v[h]));
    for (std::size_t z = 0; z < query.rows; ++z)
      for (std::size_t j = 0; j < d_head; ++j) concat(z, h * d_head + j) = head.out(z, j);
    r.logits.push_back(head.logits);
  }
  r.out = matmul(concat, from_tensor(params.w_o));
  return r;
}

Mat mean_map(const std::vector<Mat>& head_logits) {
  Mat m(head_logits.front().rows, head_logits.front().cols);
  for (std::size_t i = 0; i < m.v.size(); ++i) {
    double s = 0.0;
    for (const auto& l : head_logits) s += l.v[i];
    m.v[i] = s / static_cast<double>(head_logits.size());
  }
  return m;
}

ProxyResult proxy_update(const Mat& query, const Mat& tokens, const ProxyBlock& block) {
  // Step 1: normalise both streams.
  const Mat nq = layer_norm(query, values(block.norm_q_gamma), values(block.norm_q_beta));
  const Mat nt = layer_norm(tokens, values(block.norm_t_gamma), values(block.norm_t_beta));
  // Step 2: attention plus residual.
  const auto mca = multi_head(nq, nt, block.attention);
  const Mat q_hat = add(mca.out, query);
  // Step 3: MLP on the normalised sum.
  Mat hidden = add_row(matmul(layer_norm(q_hat, values(block.norm_mlp_gamma), values(block.norm_mlp_beta)),
                              from_tensor(block.mlp_w1)),
                       values(block.mlp_b1));
  for (auto& v : hidden.v) v = gelu(v);
  const Mat mlp = add_row(matmul(hidden, from_tensor(block.mlp_w2)), values(block.mlp_b2));
  // Step 4: second residual.
  ProxyResult r;
  r.refined = add(mlp, q_hat);
  // Step 5: channel reduction (identity when the block keeps its width).
  r.next = block.reduce_w.defined()
               ? add_row(matmul(r.refined, from_tensor(block.reduce_w)), values(block.reduce_b))
               : r.refined;
  r.map = mean_map(mca.logits);
  return r;
}

double cross_entropy(const std::vector<double>& logits, std::size_t classes, const LabelMap& labels) {
  const std::size_t n = labels.size();
  double total = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < classes; ++c) mx = std::max(mx, logits[c * n + p]);
    double s = 0.0;
    for (std::size_t c = 0; c < classes; ++c) s += std::exp(logits[c * n + p] - mx);
    total += mx + std::log(s) - logits[labels.labels[p] * n + p];
  }
  return total / static_cast<double>(n);
}

double soft_dice(const std::vector<double>& probs, const std::vector<double>& target, std::size_t classes) {
  const std::size_t n = probs.size() / classes;
  double loss = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    double inter = 0.0, sp = 0.0, st = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      inter += probs[c * n + p] * target[c * n + p];
      sp += probs[c * n + p];
      st += target[c * n + p];
    }
    loss += 1.0 - (2.0 * inter + 1e-5) / (sp + st + 1e-5);
  }
  return loss / static_cast<double>(classes);
}

std::vector<double> softmax_classes(const std::vector<double>& logits, std::size_t classes) {
  const std::size_t n = logits.size() / classes;
  std::vector<double> out(logits.size());
  for (std::size_t p = 0; p < n; ++p) {
    std::vector<double> col(classes);
    for (std::size_t c = 0; c < classes; ++c) col[c] = logits[c * n + p];
    const auto s = softmax(col);
    for (std::size_t c = 0; c < classes; ++c) out[c * n + p] = s[c];
  }
  return out;
}

double dsc(const ClassMask& a, const ClassMask& b) {
  std::size_t both = 0, na = 0, nb = 0;
  for (std::size_t y = 0; y < a.height; ++y) {
    for (std::size_t x = 0; x < a.width; ++x) {
      na += a.at(y, x);
      nb += b.at(y, x);
      both += a.at(y, x) && b.at(y, x);
    }
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

std::vector<std::pair<std::size_t, std::size_t>> boundary(const ClassMask& m) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  auto inside = [&](long y, long x) {
    return y >= 0 && x >= 0 && y < static_cast<long>(m.height) && x < static_cast<long>(m.width) &&
           m.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x));
  };
  for (long y = 0; y < static_cast<long>(m.height); ++y) {
    for (long x = 0; x < static_cast<long>(m.width); ++x) {
      if (!inside(y, x)) continue;
      if (!inside(y - 1, x) || !inside(y + 1, x) || !inside(y, x - 1) || !inside(y, x + 1)) {
        out.emplace_back(static_cast<std::size_t>(y), static_cast<std::size_t>(x));
      }
    }
  }
  return out;
}

double hd95(const ClassMask& a, const ClassMask& b) {
  const auto ba = boundary(a), bb = boundary(b);
  if (ba.empty() && bb.empty()) return 0.0;
  if (ba.empty() || bb.empty()) {
    const double h = static_cast<double>(a.height - 1), w = static_cast<double>(a.width - 1);
    return std::sqrt(h * h + w * w);
  }
  auto directed = [](const auto& from, const auto& to, std::vector<double>& out) {
    for (auto [y, x] : from) {
      long best = std::numeric_limits<long>::max();
      for (auto [v, u] : to) {
        const long dy = static_cast<long>(y) - static_cast<long>(v), dx = static_cast<long>(x) - static_cast<long>(u);
        best = std::min(best, dy * dy + dx * dx);
      }
      out.push_back(std::sqrt(static_cast<double>(best)));
    }
  };
  std::vector<double> d;
  directed(ba, bb, d);
  directed(bb, ba, d);
  std::sort(d.begin(), d.end());
  // Smallest rank r (1-based) with r / n >= 0.95.
  std::size_t r = 1;
  while (100 * r < 95 * d.size()) ++r;
  return d[r - 1];
}

}  // namespace icl::oracle
