#include "icl_verify/suites.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <span>

#include "icl/checkpoint.hpp"
#include "icl/data_synth.hpp"
#include "icl/errors.hpp"
#include "icl/grad_check.hpp"
#include "icl/icl_heads.hpp"
#include "icl/losses.hpp"
#include "icl/metrics.hpp"
#include "icl/ops.hpp"
#include "icl/trainer.hpp"
#include "icl_verify/oracles.hpp"

namespace icl::verify {

bool GroupResult::passed() const { return failures() == 0; }

std::size_t GroupResult::failures() const {
  return static_cast<std::size_t>(std::count_if(checks.begin(), checks.end(), [](const Check& c) { return !c.passed; }));
}

std::string GroupResult::summary() const {
  double worst = 0.0;
  for (const auto& c : checks) worst = std::max(worst, c.worst);
  char line[256];
  std::snprintf(line, sizeof line, "%s %-18s (%zu checks, worst %.2e, %.1f s)", passed() ? "PASS" : "FAIL",
                group.c_str(), checks.size(), worst, seconds);
  std::string out = line;
  for (const auto& c : checks) {
    if (c.passed) continue;
    std::snprintf(line, sizeof line, "\n  failed %s: deviation %.3e > %.1e", c.name.c_str(), c.worst, c.tolerance);
    out += line;
    if (!c.detail.empty()) out += " (" + c.detail + ")";
  }
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

// Collects checks for one group and times it.
class Recorder {
 public:
  explicit Recorder(std::string group) : start_(Clock::now()) { result_.group = std::move(group); }

  // Keeps the worst deviation per check name.
  void record(const std::string& name, double deviation, double tolerance, std::string detail = {}) {
    if (std::isnan(deviation)) deviation = std::numeric_limits<double>::infinity();
    for (auto& c : result_.checks) {
      if (c.name == name) {
        if (deviation > c.worst) {
          c.worst = deviation;
          if (!detail.empty()) c.detail = std::move(detail);
        }
        c.passed = c.worst <= c.tolerance;
        return;
      }
    }
    result_.checks.push_back({name, deviation, tolerance, deviation <= tolerance, std::move(detail)});
  }

  void expect(const std::string& name, bool ok, std::string detail = {}) {
    record(name, ok ? 0.0 : 1.0, 0.0, ok ? std::string{} : std::move(detail));
  }

  // Runs `body`; a thrown library error fails the named check.
  template <typename F>
  void guarded(const std::string& name, F&& body) {
    try {
      body();
    } catch (const std::exception& e) {
      record(name, std::numeric_limits<double>::infinity(), 0.0, e.what());
    }
  }

  GroupResult finish() {
    result_.seconds = std::chrono::duration<double>(Clock::now() - start_).count();
    return std::move(result_);
  }

 private:
  GroupResult result_;
  Clock::time_point start_;
};

double max_abs_diff(std::span<const double> a, const std::vector<double>& b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

double max_abs_diff(const Tensor& t, const oracle::Mat& m) {
  if (t.rank() != 2 || t.dim(0) != m.rows || t.dim(1) != m.cols) return std::numeric_limits<double>::infinity();
  return max_abs_diff(t.data(), m.v);
}

std::vector<double> random_values(std::size_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = false, double lo = -1.0, double hi = 1.0) {
  const std::size_t n = numel(shape);
  return Tensor::from(std::move(shape), random_values(n, rng, lo, hi), requires_grad);
}

// Values bounded away from zero so kinks at 0 are never straddled.
Tensor away_from_zero(Shape shape, Rng& rng, bool requires_grad) {
  const std::size_t n = numel(shape);
  std::vector<double> v(n);
  for (auto& x : v) x = (rng.coin() ? 1.0 : -1.0) * rng.uniform(0.1, 1.0);
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

LabelMap random_labels(std::size_t h, std::size_t w, std::size_t classes, Rng& rng) {
  LabelMap m(h, w);
  for (auto& l : m.labels) l = static_cast<std::uint8_t>(rng.index(classes));
  return m;
}

void randomize(const ParameterList& params, Rng& rng, double amplitude) {
  for (const auto& p : params) {
    Tensor t = p.tensor;
    for (auto& v : t.mutable_data()) v += rng.uniform(-amplitude, amplitude);
  }
}

// Scalar projection sum(t * R) with a fixed random R: gives every element a
// distinct, nonzero upstream gradient.
Tensor project(const Tensor& t, std::uint64_t seed) {
  Rng rng(seed);
  return sum(mul(t, random_tensor(t.shape(), rng)));
}

std::vector<double> tensor_values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

bool all_zero(const Tensor& t) {
  if (!t.has_grad()) return true;
  return std::all_of(t.grad().begin(), t.grad().end(), [](double g) { return g == 0.0; });
}

double grad_norm(const Tensor& t) {
  double s = 0.0;
  for (double g : t.grad()) s += std::abs(g);
  return s;
}

ModelConfig miniature_config() {
  ModelConfig c;
  c.height = 16;
  c.width = 16;
  c.classes = 3;
  c.base_channels = 2;
  c.heads = 2;
  return c;
}

// ---------------------------------------------------------------------------
// Gradient cases: each builds a scalar objective and its differentiable inputs.

struct GradCase {
  std::string name;
  std::function<std::pair<std::function<Tensor()>, std::vector<Tensor>>(Rng&, std::uint64_t)> build;
  std::size_t max_probes = 0;
};

std::vector<GradCase> gradient_cases() {
  using Built = std::pair<std::function<Tensor()>, std::vector<Tensor>>;
  std::vector<GradCase> cases;
  auto unary = [&](const char* name, auto op, double lo, double hi) {
    cases.push_back({name, [op, lo, hi](Rng& rng, std::uint64_t s) -> Built {
                       Tensor x = random_tensor({3, 4}, rng, true, lo, hi);
                       return {[=] { return project(op(x), s); }, {x}};
                     }});
  };
  unary("scale", [](const Tensor& x) { return scale(x, -1.7); }, -1, 1);
  unary("add_scalar", [](const Tensor& x) { return square(add_scalar(x, 0.3)); }, -1, 1);
  unary("square", [](const Tensor& x) { return square(x); }, -1, 1);
  unary("exp", [](const Tensor& x) { return exp(x); }, -1, 1);
  unary("log", [](const Tensor& x) { return log(x); }, 0.5, 2.0);
  unary("gelu", [](const Tensor& x) { return gelu(x); }, -2, 2);
  unary("sum", [](const Tensor& x) { return square(sum(x)); }, -1, 1);
  unary("mean", [](const Tensor& x) { return square(mean(x)); }, -1, 1);
  unary("sum_last", [](const Tensor& x) { return sum_last(x); }, -1, 1);
  unary("reshape", [](const Tensor& x) { return reshape(x, {2, 6}); }, -1, 1);
  unary("transpose", [](const Tensor& x) { return transpose(x); }, -1, 1);
  unary("slice_cols", [](const Tensor& x) { return slice_cols(x, 1, 3); }, -1, 1);
  unary("softmax_axis0", [](const Tensor& x) { return softmax(x, 0); }, -2, 2);
  unary("softmax_axis1", [](const Tensor& x) { return softmax(x, 1); }, -2, 2);

  cases.push_back({"relu", [](Rng& rng, std::uint64_t s) -> Built {
                     Tensor x = away_from_zero({3, 4}, rng, true);
                     return {[=] { return project(relu(x), s); }, {x}};
                   }});
  auto binary = [&](const char* name, auto op, double lo, double hi) {
    cases.push_back({name, [op, lo, hi](Rng& rng, std::uint64_t s) -> Built {
                       Tensor a = random_tensor({2, 5}, rng, true, lo, hi);
                       Tensor b = random_tensor({2, 5}, rng, true, lo, hi);
                       return {[=] { return project(op(a, b), s); }, {a, b}};
                     }});
  };
  binary("add", [](const Tensor& a, const Tensor& b) { return add(a, b); }, -1, 1);
  binary("sub", [](const Tensor& a, const Tensor& b) { return sub(a, b); }, -1, 1);
  binary("mul", [](const Tensor& a, const Tensor& b) { return mul(a, b); }, -1, 1);
  binary("div", [](const Tensor& a, const Tensor& b) { return div(a, b); }, 0.5, 2.0);
  binary("concat_cols", [](const Tensor& a, const Tensor& b) { return concat_cols({a, b, a}); }, -1, 1);
  cases.push_back({"matmul", [](Rng& rng, std::uint64_t s) -> Built {
                     Tensor a = random_tensor({3, 4}, rng, true), b = random_tensor({4, 2}, rng, true);
                     return {[=] { return project(matmul(a, b), s); }, {a, b}};
                   }});
  cases.push_back({"linear", [](Rng& rng, std::uint64_t s) -> Built {
                     Tensor x = random_tensor({3, 4}, rng, true), w = random_tensor({4, 5}, rng, true);
                     Tensor b = random_tensor({5}, rng, true);
                     return {[=] { return project(linear(x, w, b), s); }, {x, w, b}};
                   }});
  for (std::size_t k : {1, 3}) {
    cases.push_back({"conv2d_k" + std::to_string(k), [k](Rng& rng, std::uint64_t s) -> Built {
                       Tensor x = random_tensor({2, 5, 6}, rng, true);
                       Tensor w = random_tensor({3, 2, k, k}, rng, true);
                       Tensor b = random_tensor({3}, rng, true);
                       return {[=] { return project(conv2d(x, w, b), s); }, {x, w, b}};
                     }});
  }
  cases.push_back({"avg_pool2", [](Rng& rng, std::uint64_t s) -> Built {
                     Tensor x = random_tensor({2, 4, 6}, rng, true);
                     return {[=] { return project(avg_pool2(x), s); }, {x}};
                   }});
  cases.push_back({"bilinear_upsample", [](Rng& rng, std::uint64_t s) -> Built {
                     Tensor x = random_tensor({2, 3, 2}, rng, true);
                     return {[=] { return project(bilinear_upsample(x, 7, 5), s); }, {x}};
                   }});
  cases.push_back({"layer_norm", [](Rng& rng, std::uint64_t s) -> Built {
                     Tensor x = random_tensor({3, 5}, rng, true);
                     Tensor g = random_tensor({5}, rng, true, 0.5, 1.5), b = random_tensor({5}, rng, true);
                     return {[=] { return project(layer_norm(x, g, b), s); }, {x, g, b}};
                   }});
  cases.push_back({"group_norm", [](Rng& rng, std::uint64_t s) -> Built {
                     Tensor x = random_tensor({3, 3, 4}, rng, true);
                     Tensor g = random_tensor({3}, rng, true, 0.5, 1.5), b = random_tensor({3}, rng, true);
                     return {[=] { return project(group_norm(x, g, b), s); }, {x, g, b}};
                   }});
  cases.push_back({"tokenize", [](Rng& rng, std::uint64_t s) -> Built {
                     Tensor x = random_tensor({3, 2, 4}, rng, true);
                     return {[=] { return project(untokenize(square(tokenize(x)), {2, 4}), s); }, {x}};
                   }});
  cases.push_back({"cross_entropy_softmax", [](Rng& rng, std::uint64_t) -> Built {
                     Tensor x = random_tensor({4, 3, 3}, rng, true, -2, 2);
                     LabelMap y = random_labels(3, 3, 4, rng);
                     return {[=] { return cross_entropy(x, y); }, {x}};
                   }});
  cases.push_back({"soft_dice", [](Rng& rng, std::uint64_t) -> Built {
                     Tensor x = random_tensor({3, 4, 4}, rng, true, -2, 2);
                     Tensor t = softmax(random_tensor({3, 4, 4}, rng), 0);
                     return {[=] { return soft_dice(softmax(x, 0), t); }, {x}};
                   }});
  cases.push_back({"cross_attention", [](Rng& rng, std::uint64_t s) -> Built {
                     Tensor q = random_tensor({3, 4}, rng, true), t = random_tensor({5, 4}, rng, true);
                     Tensor wq = random_tensor({4, 2}, rng, true), wk = random_tensor({4, 2}, rng, true);
                     Tensor wv = random_tensor({4, 2}, rng, true);
                     return {[=] {
                               auto r = cross_attention(q, t, wq, wk, wv);
                               return add(project(r.out, s), project(r.logits, s + 1));
                             },
                             {q, t, wq, wk, wv}};
                   }});
  cases.push_back({"multi_head_attention", [](Rng& rng, std::uint64_t s) -> Built {
                     auto mca = std::make_shared<MultiHeadCrossAttention>(4, 2, rng);
                     Tensor q = random_tensor({3, 4}, rng, true), t = random_tensor({6, 4}, rng, true);
                     std::vector<Tensor> inputs{q, t, mca->w_o};
                     for (std::size_t h = 0; h < 2; ++h) {
                       inputs.insert(inputs.end(), {mca->w_q[h], mca->w_k[h], mca->w_v[h]});
                     }
                     return {[=] {
                               auto r = mca->forward(q, t);
                               auto map = extract_attention_map(r.head_logits, {2, 3});
                               return add(project(r.out, s), project(map.map, s + 1));
                             },
                             inputs};
                   }});
  cases.push_back({"proxy_update", [](Rng& rng, std::uint64_t s) -> Built {
                     auto block = std::make_shared<ProxyBlock>(4, 2, true, rng);
                     ParameterList params;
                     block->collect("", params);
                     randomize(params, rng, 0.2);
                     Tensor q = random_tensor({3, 4}, rng, true), t = random_tensor({4, 4}, rng, true);
                     std::vector<Tensor> inputs{q, t};
                     for (const auto& p : params) inputs.push_back(p.tensor);
                     return {[=] {
                               auto r = proxy_update(q, t, *block, {2, 2});
                               return add(project(r.next, s), add(project(r.refined, s + 1), project(r.map.map, s + 2)));
                             },
                             inputs};
                   }});

  // Composed losses at the level of the network outputs. Detached operands
  // are plain constants here, which is exactly what the analytic gradient
  // sees.
  const Grid grids[3] = {{2, 2}, {4, 4}, {8, 8}};
  auto maps = [grids](Rng& rng, bool grad) {
    ScaleMaps m;
    for (std::size_t i = 0; i < 3; ++i) m[i] = random_tensor({3, grids[i].height, grids[i].width}, rng, grad, -2, 2);
    return m;
  };
  auto as_inputs = [](const ScaleMaps& m) { return std::vector<Tensor>(m.begin(), m.end()); };
  cases.push_back({"L_seg", [](Rng& rng, std::uint64_t) -> Built {
                     Tensor x = random_tensor({3, 8, 8}, rng, true, -2, 2);
                     LabelMap y = random_labels(8, 8, 3, rng);
                     return {[=] { return loss_seg(x, y); }, {x}};
                   }});
  cases.push_back({"L_spa", [=](Rng& rng, std::uint64_t) -> Built {
                     ScaleMaps m = maps(rng, true);
                     LabelMap y = random_labels(8, 8, 3, rng);
                     return {[=] { return loss_spa(m, y); }, as_inputs(m)};
                   }});
  cases.push_back({"L_usc", [=](Rng& rng, std::uint64_t) -> Built {
                     ScaleMaps g = maps(rng, true);
                     Tensor p = random_tensor({3, 8, 8}, rng, false, -2, 2);
                     return {[=] { return loss_usc(g, p); }, as_inputs(g)};
                   }});
  cases.push_back({"L_con", [=](Rng& rng, std::uint64_t) -> Built {
                     ScaleMaps g = maps(rng, true);
                     ScaleMaps m = maps(rng, false);
                     return {[=] { return loss_con(g, m); }, as_inputs(g)};
                   }});
  cases.push_back({"L_total", [=](Rng& rng, std::uint64_t) -> Built {
                     auto labels = std::make_shared<std::vector<LabelMap>>();
                     std::vector<Tensor> inputs;
                     std::vector<Tensor> l_logits, u_logits;
                     std::vector<ScaleMaps> l_maps, u_guided, u_sspa;
                     for (int i = 0; i < 2; ++i) {
                       labels->push_back(random_labels(8, 8, 3, rng));
                       l_logits.push_back(random_tensor({3, 8, 8}, rng, true, -2, 2));
                       l_maps.push_back(maps(rng, true));
                       u_logits.push_back(random_tensor({3, 8, 8}, rng, false, -2, 2));
                       u_guided.push_back(maps(rng, true));
                       u_sspa.push_back(maps(rng, false));
                       inputs.push_back(l_logits.back());
                       for (auto& t : l_maps.back()) inputs.push_back(t);
                       for (auto& t : u_guided.back()) inputs.push_back(t);
                     }
                     return {[=] {
                               std::vector<LabeledForward> l;
                               std::vector<UnlabeledForward> u;
                               for (std::size_t i = 0; i < 2; ++i) {
                                 l.push_back({l_logits[i], l_maps[i], &(*labels)[i]});
                                 u.push_back({u_logits[i], u_sspa[i], u_guided[i]});
                               }
                               return loss_total(l, u, {1.0, 50.0}).total;
                             },
                             inputs};
                   }});

  // The whole model on a 16x16 miniature batch, probing a parameter
  // subsample. The detached targets (unlabeled prediction and SSPA maps) are
  // frozen at the base point so finite differences see the same function the
  // analytic gradient describes.
  cases.push_back({"L_total_model",
                   [](Rng& rng, std::uint64_t s) -> Built {
                     const ModelConfig cfg = miniature_config();
                     auto model = std::make_shared<IclModel>(cfg, s);
                     randomize(model->parameters(), rng, 0.05);
                     auto labels = std::make_shared<std::vector<LabelMap>>();
                     std::vector<Tensor> l_img, u_img, u_logits;
                     std::vector<ScaleMaps> u_sspa;
                     for (int i = 0; i < 2; ++i) {
                       l_img.push_back(random_tensor({1, 16, 16}, rng, false, 0, 1));
                       labels->push_back(random_labels(16, 16, 3, rng));
                       u_img.push_back(random_tensor({1, 16, 16}, rng, false, 0, 1));
                       auto out = model->backbone.forward(u_img.back());
                       u_logits.push_back(out.logits.clone());
                       auto sspa = model->sspa.forward(out.features, Stream::unlabeled);
                       ScaleMaps frozen;
                       for (std::size_t k = 0; k < 3; ++k) frozen[k] = sspa.segmentation[k].clone();
                       u_sspa.push_back(frozen);
                     }
                     std::vector<Tensor> inputs;
                     for (const auto& p : model->parameters()) inputs.push_back(p.tensor);
                     return {[=] {
                               std::vector<LabeledForward> l;
                               std::vector<ScaleMaps> proxies;
                               for (std::size_t i = 0; i < 2; ++i) {
                                 auto out = model->backbone.forward(l_img[i]);
                                 auto sspa = model->sspa.forward(out.features, Stream::labeled);
                                 l.push_back({out.logits, sspa.segmentation, &(*labels)[i]});
                                 proxies.push_back(sspa.proxies);
                               }
                               std::vector<UnlabeledForward> u;
                               for (std::size_t i = 0; i < 2; ++i) {
                                 auto out = model->backbone.forward(u_img[i]);
                                 auto guided = model->uscl.forward(out.features, proxies[i]).guided;
                                 u.push_back({u_logits[i], u_sspa[i], guided});
                               }
                               return loss_total(l, u, {1.0, 50.0}).total;
                             },
                             inputs};
                   },
                   48});
  return cases;
}

// Fuzz masks on small grids with at most 12 boundary pixels.
ClassMask fuzz_mask(std::size_t h, std::size_t w, Rng& rng) {
  for (;;) {
    ClassMask m(h, w);
    switch (rng.index(4)) {
      case 0:  // empty
        break;
      case 1: {  // scattered pixels
        const std::size_t n = 1 + rng.index(6);
        for (std::size_t i = 0; i < n; ++i) m.bits[rng.index(h * w)] = 1;
        break;
      }
      case 2: {  // rectangle
        const std::size_t y0 = rng.index(h), x0 = rng.index(w);
        const std::size_t y1 = y0 + rng.index(std::min<std::size_t>(4, h - y0)) + 1;
        const std::size_t x1 = x0 + rng.index(std::min<std::size_t>(4, w - x0)) + 1;
        for (std::size_t y = y0; y < y1; ++y)
          for (std::size_t x = x0; x < x1; ++x) m.bits[y * w + x] = 1;
        break;
      }
      default: {  // rectangle with a hole or a notch
        const std::size_t y0 = rng.index(h - 2), x0 = rng.index(w - 2);
        for (std::size_t y = y0; y < y0 + 3; ++y)
          for (std::size_t x = x0; x < x0 + 3; ++x) m.bits[y * w + x] = 1;
        m.bits[(y0 + rng.index(3)) * w + x0 + rng.index(3)] = 0;
        break;
      }
    }
    if (oracle::boundary(m).size() <= 12) return m;
  }
}

}  // namespace

GroupResult tensor_oracles(const SuiteOptions& options) {
  Recorder rec("tensor-oracles");
  Rng rng(mix_seed(options.seed, 0x7e5));
  for (int trial = 0; trial < 20; ++trial) {
    rec.guarded("matmul", [&] {
      Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
      rec.record("matmul", max_abs_diff(matmul(a, b), oracle::matmul(oracle::from_tensor(a), oracle::from_tensor(b))),
                 1e-12);
    });
    rec.guarded("softmax", [&] {
      Tensor x = random_tensor({7}, rng, false, -3, 3);
      rec.record("softmax", max_abs_diff(softmax(x, 0).data(), oracle::softmax(tensor_values(x))), 1e-12);
    });
    for (std::size_t k : {1, 3}) {
      const std::string name = "conv2d_k" + std::to_string(k);
      rec.guarded(name, [&] {
        Tensor x = random_tensor({2, 5, 5}, rng), w = random_tensor({3, 2, k, k}, rng), b = random_tensor({3}, rng);
        auto expect = oracle::conv2d(tensor_values(x), 2, 5, 5, tensor_values(w), 3, k, tensor_values(b));
        rec.record(name, max_abs_diff(conv2d(x, w, b).data(), expect), 1e-12);
        auto nobias = oracle::conv2d(tensor_values(x), 2, 5, 5, tensor_values(w), 3, k, {});
        rec.record(name, max_abs_diff(conv2d(x, w).data(), nobias), 1e-12);
      });
    }
    rec.guarded("bilinear_upsample", [&] {
      const std::size_t h = 1 + rng.index(4), w = 1 + rng.index(4);
      const std::size_t oh = h + rng.index(6), ow = w + rng.index(6);
      Tensor x = random_tensor({2, h, w}, rng);
      rec.record("bilinear_upsample",
                 max_abs_diff(bilinear_upsample(x, oh, ow).data(), oracle::bilinear(tensor_values(x), 2, h, w, oh, ow)),
                 1e-12);
    });
    rec.guarded("layer_norm", [&] {
      Tensor x = random_tensor({3, 6}, rng, false, -4, 4);
      Tensor g = random_tensor({6}, rng), b = random_tensor({6}, rng);
      rec.record("layer_norm",
                 max_abs_diff(layer_norm(x, g, b), oracle::layer_norm(oracle::from_tensor(x), tensor_values(g),
                                                                       tensor_values(b))),
                 1e-10);
    });
    rec.guarded("cross_entropy", [&] {
      Tensor x = random_tensor({4, 3, 3}, rng, false, -3, 3);
      LabelMap y = random_labels(3, 3, 4, rng);
      rec.record("cross_entropy", std::abs(cross_entropy(x, y).item() - oracle::cross_entropy(tensor_values(x), 4, y)),
                 1e-10);
    });
    rec.guarded("soft_dice", [&] {
      Tensor p = softmax(random_tensor({3, 4, 5}, rng, false, -2, 2), 0);
      Tensor t = one_hot(random_labels(4, 5, 3, rng), 3);
      rec.record("soft_dice", std::abs(soft_dice(p, t).item() - oracle::soft_dice(tensor_values(p), tensor_values(t), 3)),
                 1e-12);
    });
    rec.guarded("L_spa", [&] {
      ScaleMaps m;
      const std::size_t sizes[3] = {2, 4, 8};
      for (std::size_t s = 0; s < 3; ++s) m[s] = random_tensor({3, sizes[s], sizes[s]}, rng, false, -2, 2);
      LabelMap y = random_labels(8, 8, 3, rng);
      const auto target = tensor_values(one_hot(y, 3));
      double expect = 0.0;
      for (std::size_t s = 0; s < 3; ++s) {
        auto up = oracle::bilinear(tensor_values(m[s]), 3, sizes[s], sizes[s], 8, 8);
        expect += oracle::soft_dice(oracle::softmax_classes(up, 3), target, 3) + oracle::cross_entropy(up, 3, y);
      }
      rec.record("L_spa", std::abs(loss_spa(m, y).item() - expect / 3.0), 1e-10);
    });
    rec.guarded("L_usc", [&] {
      ScaleMaps g;
      const std::size_t sizes[3] = {2, 4, 8};
      for (std::size_t s = 0; s < 3; ++s) g[s] = random_tensor({3, sizes[s], sizes[s]}, rng, false, -2, 2);
      Tensor p = random_tensor({3, 8, 8}, rng, false, -2, 2);
      const auto target = oracle::softmax_classes(tensor_values(p), 3);
      double expect = 0.0;
      for (std::size_t s = 0; s < 3; ++s) {
        auto up = oracle::bilinear(tensor_values(g[s]), 3, sizes[s], sizes[s], 8, 8);
        expect += oracle::soft_dice(oracle::softmax_classes(up, 3), target, 3);
      }
      rec.record("L_usc", std::abs(loss_usc(g, p).item() - expect / 3.0), 1e-10);
    });
    rec.guarded("L_con", [&] {
      ScaleMaps g, m;
      const std::size_t sizes[3] = {2, 4, 8};
      double expect = 0.0;
      for (std::size_t s = 0; s < 3; ++s) {
        g[s] = random_tensor({3, sizes[s], sizes[s]}, rng, false, -2, 2);
        m[s] = random_tensor({3, sizes[s], sizes[s]}, rng, false, -2, 2);
        auto pg = oracle::softmax_classes(tensor_values(g[s]), 3), pm = oracle::softmax_classes(tensor_values(m[s]), 3);
        double mse = 0.0;
        for (std::size_t i = 0; i < pg.size(); ++i) mse += (pg[i] - pm[i]) * (pg[i] - pm[i]);
        expect += mse / static_cast<double>(pg.size());
      }
      rec.record("L_con", std::abs(loss_con(g, m).item() - expect / 3.0), 1e-12);
    });
  }
  rec.guarded("bilinear_2x2_to_4x4", [&] {
    Tensor x = Tensor::from({1, 2, 2}, {0, 1, 2, 3});
    rec.record("bilinear_2x2_to_4x4",
               max_abs_diff(bilinear_upsample(x, 4, 4).data(), oracle::bilinear({0, 1, 2, 3}, 1, 2, 2, 4, 4)), 1e-12);
  });
  rec.guarded("soft_dice_hand_value", [&] {
    // Single class, p = [1,1,0,0], t = [1,0,0,0]: 1 - (2 + eps) / (3 + eps).
    Tensor p = Tensor::from({1, 2, 2}, {1, 1, 0, 0}), t = Tensor::from({1, 2, 2}, {1, 0, 0, 0});
    rec.record("soft_dice_hand_value", std::abs(soft_dice(p, t).item() - (1.0 - (2.0 + 1e-5) / (3.0 + 1e-5))), 1e-15);
  });
  return rec.finish();
}

GroupResult gradient_suite(const SuiteOptions& options) {
  Recorder rec("gradients");
  const auto cases = gradient_cases();
  for (std::size_t s = 0; s < options.gradient_seeds; ++s) {
    const std::uint64_t seed = mix_seed(options.seed, 0x6a0 + s);
    for (const auto& c : cases) {
      rec.guarded(c.name, [&] {
        Rng rng(mix_seed(seed, std::hash<std::string>{}(c.name) & 0xffff));
        auto [f, inputs] = c.build(rng, seed);
        GradCheckOptions opt;
        opt.max_probes = c.max_probes;
        opt.seed = seed;
        const auto r = grad_check(f, inputs, opt);
        rec.record(c.name, r.max_relative_error, 1e-4, "seed index " + std::to_string(s));
      });
    }
  }
  rec.guarded("quadratic", [&] {
    Tensor x = Tensor::from({3}, {1, 2, 3}, true);
    const double err = grad_check([](const Tensor& t) { return sum(square(t)); }, x);
    rec.record("quadratic", err, 1e-7);
  });
  return rec.finish();
}

GroupResult attention_oracles(const SuiteOptions& options) {
  Recorder rec("attention-oracles");
  Rng rng(mix_seed(options.seed, 0xa77));
  for (std::size_t trial = 0; trial < options.attention_instances; ++trial) {
    const std::size_t z = 1 + rng.index(3), s = 1 + rng.index(6);
    const std::size_t d = 2 * (1 + rng.index(4));  // 2..8, even so the reduce conv applies
    std::vector<std::size_t> divisors;
    for (std::size_t n = 1; n <= d; ++n)
      if (d % n == 0) divisors.push_back(n);
    const std::size_t heads = divisors[rng.index(divisors.size())];
    Tensor q = random_tensor({z, d}, rng, false, -2, 2), t = random_tensor({s, d}, rng, false, -2, 2);
    const auto oq = oracle::from_tensor(q), ot = oracle::from_tensor(t);

    rec.guarded("cross_attention", [&] {
      const std::size_t dh = 1 + rng.index(d);
      Tensor wq = random_tensor({d, dh}, rng), wk = random_tensor({d, dh}, rng), wv = random_tensor({d, dh}, rng);
      auto got = cross_attention(q, t, wq, wk, wv);
      auto want = oracle::cross_attention(oq, ot, oracle::from_tensor(wq), oracle::from_tensor(wk), oracle::from_tensor(wv));
      rec.record("cross_attention", std::max(max_abs_diff(got.out, want.out), max_abs_diff(got.logits, want.logits)),
                 1e-12);
    });
    rec.guarded("multi_head_cross_attention", [&] {
      MultiHeadCrossAttention mca(d, heads, rng);
      auto got = mca.forward(q, t);
      auto want = oracle::multi_head(oq, ot, mca);
      double dev = max_abs_diff(got.out, want.out);
      for (std::size_t h = 0; h < heads; ++h) dev = std::max(dev, max_abs_diff(got.head_logits[h], want.logits[h]));
      rec.record("multi_head_cross_attention", dev, 1e-12);
      auto map = extract_attention_map(got.head_logits, {1, s});
      rec.record("extract_attention_map", max_abs_diff(map.map.data(), oracle::mean_map(want.logits).v), 1e-12);
    });
    rec.guarded("proxy_update", [&] {
      ProxyBlock block(d, heads, rng.coin(), rng);
      ParameterList params;
      block.collect("", params);
      randomize(params, rng, 0.3);
      auto got = proxy_update(q, t, block, {1, s});
      auto want = oracle::proxy_update(oq, ot, block);
      const double dev = std::max({max_abs_diff(got.refined, want.refined), max_abs_diff(got.next, want.next),
                                   max_abs_diff(got.map.map.data(), want.map.v)});
      rec.record("proxy_update", dev, 1e-10);
    });
  }
  rec.guarded("uscl_composition", [&] {
    ModelConfig cfg = miniature_config();
    for (int trial = 0; trial < 5; ++trial) {
      Rng mrng(mix_seed(options.seed, 0x05c1 + static_cast<std::uint64_t>(trial)));
      Uscl uscl(cfg, mrng);
      ParameterList params;
      uscl.collect("", params);
      randomize(params, mrng, 0.2);
      MultiScaleFeatures feats;
      ScaleMaps proxies;
      for (std::size_t sc = 0; sc < 3; ++sc) {
        const auto g = cfg.scale_grid(sc);
        feats.scales[sc] = random_tensor({cfg.scale_channels(sc), g.height, g.width}, mrng);
        proxies[sc] = random_tensor({cfg.classes, cfg.scale_channels(sc)}, mrng);
      }
      auto got = uscl.forward(feats, proxies);
      for (std::size_t sc = 0; sc < 3; ++sc) {
        const auto g = cfg.scale_grid(sc);
        const std::size_t c = cfg.scale_channels(sc);
        // Tokens: row r is pixel r of the map, columns are channels.
        oracle::Mat tok(g.tokens(), c);
        auto f = feats.scales[sc].data();
        for (std::size_t r = 0; r < g.tokens(); ++r)
          for (std::size_t ch = 0; ch < c; ++ch) tok(r, ch) = f[ch * g.tokens() + r];
        auto mca = oracle::multi_head(oracle::from_tensor(proxies[sc]), tok, uscl.attention[sc]);
        auto map = oracle::mean_map(mca.logits);
        auto want = oracle::conv2d(map.v, cfg.classes, g.height, g.width, tensor_values(uscl.heads[sc].weights),
                                   cfg.classes, 3, tensor_values(uscl.heads[sc].bias));
        rec.record("uscl_composition", max_abs_diff(got.guided[sc].data(), want), 1e-10);
      }
    }
  });
  return rec.finish();
}

GroupResult detach_probes(const SuiteOptions& options) {
  Recorder rec("detach");
  const ModelConfig cfg = miniature_config();
  for (std::uint64_t trial = 0; trial < 5; ++trial) {
    const std::uint64_t seed = mix_seed(options.seed, 0xde7 + trial);
    Rng rng(seed);
    IclModel model(cfg, seed);
    randomize(model.parameters(), rng, 0.05);
    auto zero_all = [&] {
      for (const auto& p : model.parameters()) {
        Tensor t = p.tensor;
        t.zero_grad();
      }
    };
    Tensor img_l = random_tensor({1, 16, 16}, rng, false, 0, 1), img_u = random_tensor({1, 16, 16}, rng, false, 0, 1);

    rec.guarded("q0_unlabeled_stream", [&] {
      // (a) Every unlabeled-stream output leaves Q0 untouched.
      zero_all();
      auto out = model.backbone.forward(img_u);
      auto sspa = model.sspa.forward(out.features, Stream::unlabeled);
      Tensor total = Tensor::scalar(0.0);
      for (std::size_t s = 0; s < 3; ++s) {
        total = add(total, project(sspa.segmentation[s], seed + s));
        total = add(total, project(sspa.attention[s], seed + 10 + s));
        total = add(total, project(sspa.proxies[s], seed + 20 + s));
      }
      total.backward();
      rec.expect("q0_unlabeled_stream", all_zero(model.sspa.q0), "nonzero gradient on Q0");
      // The same probe on the labeled stream must move Q0.
      zero_all();
      auto lab = model.sspa.forward(model.backbone.forward(img_l).features, Stream::labeled);
      Tensor ltotal = project(lab.proxies[2], seed);
      ltotal.backward();
      rec.expect("q0_labeled_stream_nonzero", grad_norm(model.sspa.q0) > 0.0, "labeled stream gave Q0 no gradient");
    });
    rec.guarded("prediction_under_L_usc", [&] {
      // (b) L_usc sends nothing into the unlabeled prediction or, through it,
      // into the backbone: guided maps are leaves here.
      zero_all();
      auto out = model.backbone.forward(img_u);
      ScaleMaps guided;
      for (std::size_t s = 0; s < 3; ++s) {
        const auto g = cfg.scale_grid(s);
        guided[s] = random_tensor({cfg.classes, g.height, g.width}, rng, true);
      }
      Tensor pred = out.logits;
      loss_usc(guided, pred).backward();
      bool zero = all_zero(pred);
      for (const auto& p : model.backbone_parameters()) zero = zero && all_zero(p.tensor);
      rec.expect("prediction_under_L_usc", zero, "gradient reached the prediction path");
      rec.expect("guided_under_L_usc_nonzero", grad_norm(guided[0]) > 0.0, "guided maps got no gradient");
    });
    rec.guarded("sspa_maps_under_L_con", [&] {
      // (c) L_con sends nothing into M^u or the SSPA parameters behind it.
      zero_all();
      auto out = model.backbone.forward(img_u);
      auto sspa = model.sspa.forward(out.features, Stream::unlabeled);
      ScaleMaps guided;
      for (std::size_t s = 0; s < 3; ++s) guided[s] = random_tensor(sspa.segmentation[s].shape(), rng, true);
      loss_con(guided, sspa.segmentation).backward();
      bool zero = true;
      for (std::size_t s = 0; s < 3; ++s) zero = zero && all_zero(sspa.segmentation[s]);
      ParameterList sspa_params;
      model.sspa.collect("", sspa_params);
      for (const auto& p : sspa_params) zero = zero && all_zero(p.tensor);
      for (const auto& p : model.backbone_parameters()) zero = zero && all_zero(p.tensor);
      rec.expect("sspa_maps_under_L_con", zero, "gradient reached the SSPA map path");
      rec.expect("guided_under_L_con_nonzero", grad_norm(guided[2]) > 0.0, "guided maps got no gradient");
    });
    rec.guarded("detach_contract", [&] {
      Tensor x = random_tensor({4}, rng, true);
      Tensor y = add(square(x.detach()), x);
      sum(y).backward();
      rec.expect("detach_contract", std::all_of(x.grad().begin(), x.grad().end(), [](double g) { return g == 1.0; }),
                 "detached branch contributed");
    });
  }
  return rec.finish();
}

GroupResult metric_fuzz(const SuiteOptions& options) {
  Recorder rec("metrics");
  Rng rng(mix_seed(options.seed, 0x3e7));
  for (std::size_t i = 0; i < options.metric_pairs; ++i) {
    const std::size_t h = 3 + rng.index(8), w = 3 + rng.index(8);
    const ClassMask a = fuzz_mask(h, w, rng), b = fuzz_mask(h, w, rng);
    rec.guarded("dsc_exact", [&] {
      rec.record("dsc_exact", dsc(a, b) == oracle::dsc(a, b) ? 0.0 : std::abs(dsc(a, b) - oracle::dsc(a, b)), 0.0);
      rec.expect("dsc_symmetric", dsc(a, b) == dsc(b, a));
    });
    rec.guarded("hd95_exact", [&] {
      const double got = hd95(a, b), want = oracle::hd95(a, b);
      rec.record("hd95_exact", got == want ? 0.0 : std::max(std::abs(got - want), 1e-300), 0.0,
                 std::to_string(h) + "x" + std::to_string(w) + " pair " + std::to_string(i));
      rec.expect("hd95_symmetric", got == hd95(b, a));
    });
    rec.guarded("boundary_exact", [&] { rec.expect("boundary_exact", boundary_pixels(a) == oracle::boundary(a)); });
  }
  rec.guarded("hd95_offset_3_4", [&] {
    ClassMask a(10, 10), b(10, 10);
    a.bits[1 * 10 + 1] = 1;
    b.bits[4 * 10 + 5] = 1;
    rec.record("hd95_offset_3_4", std::abs(hd95(a, b) - 5.0), 0.0);
    rec.record("hd95_offset_3_4", std::abs(oracle::hd95(a, b) - 5.0), 0.0);
  });
  rec.guarded("dsc_overlap_2_of_3", [&] {
    ClassMask a(1, 4), b(1, 4);
    a.bits = {1, 1, 1, 0};
    b.bits = {0, 1, 1, 1};
    rec.record("dsc_overlap_2_of_3", std::abs(dsc(a, b) - oracle::dsc(a, b)), 0.0);
    rec.record("dsc_overlap_2_of_3", std::abs(dsc(a, b) - 4.0 / 6.0), 1e-15);
  });
  rec.guarded("evaluate_volume", [&] {
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t classes = 2 + rng.index(3), slices = 1 + rng.index(3);
      std::vector<LabelMap> pred, gt;
      for (std::size_t s = 0; s < slices; ++s) {
        pred.push_back(random_labels(6, 7, classes, rng));
        gt.push_back(random_labels(6, 7, classes, rng));
      }
      const auto got = evaluate_volume(pred, gt, classes);
      double mean_dsc = 0.0, mean_hd = 0.0;
      for (std::size_t c = 1; c < classes; ++c) {
        double d = 0.0, hd = 0.0;
        for (std::size_t s = 0; s < slices; ++s) {
          const auto p = ClassMask::from_labels(pred[s], static_cast<std::uint8_t>(c));
          const auto g = ClassMask::from_labels(gt[s], static_cast<std::uint8_t>(c));
          d += oracle::dsc(p, g);
          hd += oracle::hd95(p, g);
        }
        d /= static_cast<double>(slices);
        hd /= static_cast<double>(slices);
        rec.record("evaluate_volume", std::abs(got.per_class[c - 1].dsc - d), 1e-9);
        rec.record("evaluate_volume", std::abs(got.per_class[c - 1].hd95 - hd), 1e-9);
        mean_dsc += d;
        mean_hd += hd;
      }
      rec.record("evaluate_volume", std::abs(got.mean_dsc - mean_dsc / static_cast<double>(classes - 1)), 1e-9);
      rec.record("evaluate_volume", std::abs(got.mean_hd95 - mean_hd / static_cast<double>(classes - 1)), 1e-9);
    }
  });
  return rec.finish();
}

GroupResult invariants(const SuiteOptions& options) {
  Recorder rec("invariants");
  Rng rng(mix_seed(options.seed, 0x1a7));
  for (int trial = 0; trial < 20; ++trial) {
    rec.guarded("softmax_simplex", [&] {
      Tensor x = random_tensor({4, 5}, rng, false, -10, 10);
      for (std::size_t axis : {0, 1}) {
        Tensor p = softmax(x, axis);
        const std::size_t rows = axis == 0 ? 5 : 4, len = axis == 0 ? 4 : 5;
        double dev = 0.0;
        for (std::size_t r = 0; r < rows; ++r) {
          double s = 0.0;
          for (std::size_t i = 0; i < len; ++i) {
            const double v = axis == 0 ? p[i * 5 + r] : p[r * 5 + i];
            if (v < 0.0 || v > 1.0) dev = 1.0;
            s += v;
          }
          dev = std::max(dev, std::abs(s - 1.0));
        }
        rec.record("softmax_simplex", dev, 1e-9);
        rec.record("softmax_shift", max_abs_diff(softmax(add_scalar(x, 3.7), axis).data(), tensor_values(p)), 1e-12);
      }
    });
    rec.guarded("backward_linearity", [&] {
      Tensor x = random_tensor({3, 4}, rng, true), w = random_tensor({4, 4}, rng, true);
      auto f = [&] { return project(gelu(matmul(x, w)), 11); };
      auto g = [&] { return sum(square(softmax(matmul(x, w), 1))); };
      f().backward();
      const std::vector<double> gx_f(x.grad().begin(), x.grad().end());
      x.zero_grad();
      g().backward();
      const std::vector<double> gx_g(x.grad().begin(), x.grad().end());
      x.zero_grad();
      add(f(), g()).backward();
      double dev = 0.0;
      for (std::size_t i = 0; i < 12; ++i) dev = std::max(dev, std::abs(x.grad()[i] - (gx_f[i] + gx_g[i])));
      x.zero_grad();
      w.zero_grad();
      rec.record("backward_linearity", dev, 1e-12);
    });
    rec.guarded("mca_single_head_is_ca", [&] {
      MultiHeadCrossAttention mca(4, 1, rng);
      auto eye = mca.w_o.mutable_data();
      for (std::size_t i = 0; i < 16; ++i) eye[i] = i % 5 == 0 ? 1.0 : 0.0;
      Tensor q = random_tensor({3, 4}, rng), t = random_tensor({5, 4}, rng);
      auto ca = cross_attention(q, t, mca.w_q[0], mca.w_k[0], mca.w_v[0]);
      rec.record("mca_single_head_is_ca", max_abs_diff(mca.forward(q, t).out.data(), tensor_values(ca.out)), 1e-12);
    });
    rec.guarded("attention_rows_sum_to_one", [&] {
      Tensor q = random_tensor({3, 4}, rng, false, -3, 3), t = random_tensor({6, 4}, rng, false, -3, 3);
      auto ca = cross_attention(q, t, random_tensor({4, 4}, rng), random_tensor({4, 4}, rng), random_tensor({4, 4}, rng));
      Tensor a = softmax(ca.logits, 1);
      double dev = 0.0;
      for (std::size_t z = 0; z < 3; ++z) {
        double s = 0.0;
        for (std::size_t i = 0; i < 6; ++i) s += a[z * 6 + i];
        dev = std::max(dev, std::abs(s - 1.0));
      }
      rec.record("attention_rows_sum_to_one", dev, 1e-9);
    });
    rec.guarded("residual_identity", [&] {
      ProxyBlock block(4, 2, true, rng);
      for (auto* t : {&block.attention.w_o, &block.mlp_w2, &block.mlp_b2}) {
        for (auto& v : t->mutable_data()) v = 0.0;
      }
      Tensor q = random_tensor({3, 4}, rng), tok = random_tensor({4, 4}, rng);
      auto r = proxy_update(q, tok, block, {2, 2});
      Tensor expect = linear(q, block.reduce_w, block.reduce_b);
      rec.record("residual_identity", max_abs_diff(r.next.data(), tensor_values(expect)), 1e-12);
    });
    rec.guarded("tokenize_round_trip", [&] {
      Tensor f = random_tensor({3, 2, 5}, rng);
      rec.record("tokenize_round_trip", max_abs_diff(untokenize(tokenize(f), {2, 5}).data(), tensor_values(f)), 0.0);
    });
    rec.guarded("loss_total_recomposition", [&] {
      LabelMap y = random_labels(8, 8, 3, rng);
      const std::size_t sizes[3] = {2, 4, 8};
      ScaleMaps lm, ug, um;
      for (std::size_t s = 0; s < 3; ++s) {
        lm[s] = random_tensor({3, sizes[s], sizes[s]}, rng);
        ug[s] = random_tensor({3, sizes[s], sizes[s]}, rng);
        um[s] = random_tensor({3, sizes[s], sizes[s]}, rng);
      }
      Tensor pl = random_tensor({3, 8, 8}, rng), pu = random_tensor({3, 8, 8}, rng);
      const LossWeights wts{rng.uniform(0, 2), rng.uniform(0, 60)};
      auto terms = loss_total({{pl, lm, &y}}, {{pu, um, ug}}, wts);
      const double expect = loss_seg(pl, y).item() + loss_spa(lm, y).item() + wts.alpha * loss_usc(ug, pu).item() +
                            wts.beta * loss_con(ug, um).item();
      rec.record("loss_total_recomposition", std::abs(terms.total.item() - expect), 1e-9);
      auto zero = loss_total({{pl, lm, &y}}, {{pu, um, ug}}, {0.0, 0.0});
      rec.record("loss_total_supervised_degenerate",
                 std::abs(zero.total.item() - (zero.seg.item() + zero.spa.item())), 0.0);
    });
  }
  rec.guarded("heads_finite", [&] {
    const ModelConfig cfg = miniature_config();
    IclModel model(cfg, options.seed);
    bool finite = true;
    for (std::size_t trial = 0; trial < options.finiteness_trials && finite; ++trial) {
      MultiScaleFeatures f;
      const double amp = trial % 10 == 0 ? 100.0 : 3.0;
      for (std::size_t s = 0; s < 3; ++s) {
        const auto g = cfg.scale_grid(s);
        f.scales[s] = random_tensor({cfg.scale_channels(s), g.height, g.width}, rng, false, -amp, amp);
      }
      auto sspa = model.sspa.forward(f, trial % 2 ? Stream::unlabeled : Stream::labeled);
      auto uscl = model.uscl.forward(f, sspa.proxies);
      for (std::size_t s = 0; s < 3; ++s) {
        for (const Tensor* t : {&sspa.segmentation[s], &sspa.attention[s], &uscl.guided[s]}) {
          for (double v : t->data()) finite = finite && std::isfinite(v);
        }
      }
    }
    rec.expect("heads_finite", finite, "non-finite head output");
  });
  return rec.finish();
}

GroupResult pipeline_oracles(const SuiteOptions& options) {
  Recorder rec("pipeline");
  rec.guarded("poly_lr", [&] {
    TrainConfig c;
    c.max_iters = 2000;
    rec.record("poly_lr", std::abs(poly_lr(1000, c) - 0.01 * std::pow(0.5, 0.9)), 1e-15);
    rec.record("poly_lr", std::abs(poly_lr(0, c) - 0.01), 0.0);
    rec.record("poly_lr", std::abs(poly_lr(2000, c)), 0.0);
  });
  rec.guarded("sgd_probe", [&] {
    // Ten-parameter probe against a hand-rolled momentum SGD.
    Rng rng(mix_seed(options.seed, 0x59d));
    Tensor p = random_tensor({10}, rng, true);
    ParameterList params{{"probe", p}};
    TrainConfig c;
    std::map<std::string, std::vector<double>> momentum;
    std::vector<double> value = tensor_values(p), buf(10, 0.0);
    double dev = 0.0;
    for (int step = 0; step < 3; ++step) {
      p.zero_grad();
      project(square(p), 77 + static_cast<std::uint64_t>(step)).backward();
      const std::vector<double> g(p.grad().begin(), p.grad().end());
      const double lr = 0.01 * (1.0 - 0.1 * step);
      sgd_update(params, momentum, lr, c);
      for (std::size_t i = 0; i < 10; ++i) {
        buf[i] = 0.9 * buf[i] + g[i] + 1e-4 * value[i];
        value[i] -= lr * buf[i];
        dev = std::max(dev, std::abs(p[i] - value[i]));
      }
    }
    rec.record("sgd_probe", dev, 1e-10);
  });
  rec.guarded("checkpoint_layout", [&] {
    // Hand-assembled bytes for one tensor "p" of shape [2] holding {1.5, -2}.
    Checkpoint ck;
    ck.tensors.push_back({"p", {2}, {1.5, -2.0}, DType::f64});
    std::vector<std::uint8_t> want = {'I', 'C', 'L', 'C', 1, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 'p',
                                      1,   0,   0,   0,   2, 0, 0, 0, 0, 0, 0, 0, 1};
    for (double v : {1.5, -2.0}) {
      std::uint8_t raw[8];
      std::memcpy(raw, &v, 8);
      want.insert(want.end(), raw, raw + 8);
    }
    rec.expect("checkpoint_layout", encode_checkpoint(ck) == want, "byte layout differs");
  });
  rec.guarded("sample_file_round_trip", [&] {
    bool ok = true;
    for (std::uint64_t s = 0; s < 10; ++s) {
      const auto sample = generate_sample(mix_seed(options.seed, s), PhantomConfig{});
      const auto bytes = encode_sample(sample, 4);
      const auto back = decode_sample(bytes);
      ok = ok && back.mask == sample.mask && back.image == sample.image && encode_sample(back, 4) == bytes;
    }
    rec.expect("sample_file_round_trip", ok, "decoded sample differs");
  });
  return rec.finish();
}

std::vector<GroupResult> run_all(const SuiteOptions& options) {
  return {tensor_oracles(options), gradient_suite(options),  attention_oracles(options), detach_probes(options),
          metric_fuzz(options),    invariants(options),      pipeline_oracles(options)};
}

}  // namespace icl::verify
