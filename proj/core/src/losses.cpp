#include "icl/losses.hpp"

#include <cmath>
#include <string>

#include "icl/errors.hpp"
#include "icl/ops.hpp"

namespace icl {

Tensor soft_dice(const Tensor& probs, const Tensor& target) {
  if (probs.shape() != target.shape() || probs.rank() != 3) {
    throw DimensionError("soft_dice: prediction " + to_string(probs.shape()) + " vs target " +
                         to_string(target.shape()));
  }
  const Shape flat{probs.dim(0), probs.dim(1) * probs.dim(2)};
  Tensor p = reshape(probs, flat);
  Tensor t = reshape(target, flat);
  Tensor inter = sum_last(mul(p, t));
  Tensor denom = add_scalar(add(sum_last(p), sum_last(t)), kDiceEpsilon);
  Tensor dice = div(add_scalar(scale(inter, 2.0), kDiceEpsilon), denom);
  return add_scalar(scale(mean(dice), -1.0), 1.0);
}

Tensor cross_entropy(const Tensor& logits, const LabelMap& labels) {
  if (logits.rank() != 3 || logits.dim(1) != labels.height || logits.dim(2) != labels.width) {
    throw DimensionError("cross_entropy: logits " + to_string(logits.shape()) + " vs labels " +
                         std::to_string(labels.height) + "x" + std::to_string(labels.width));
  }
  const std::size_t z = logits.dim(0), hw = labels.size();
  auto x = logits.data();
  std::vector<double> probs(z * hw);
  double total = 0.0;
  for (std::size_t i = 0; i < hw; ++i) {
    const std::size_t target = labels.labels[i];
    if (target >= z) {
      throw DataError("cross_entropy: label " + std::to_string(target) + " at pixel " + std::to_string(i) +
                      " outside [0, " + std::to_string(z) + ")");
    }
    double mx = x[i];
    for (std::size_t c = 1; c < z; ++c) mx = std::max(mx, x[c * hw + i]);
    double s = 0.0;
    for (std::size_t c = 0; c < z; ++c) {
      probs[c * hw + i] = std::exp(x[c * hw + i] - mx);
      s += probs[c * hw + i];
    }
    for (std::size_t c = 0; c < z; ++c) probs[c * hw + i] /= s;
    total += mx + std::log(s) - x[target * hw + i];
  }
  const double inv = 1.0 / static_cast<double>(hw);
  return make_op_result("cross_entropy", {1}, {total * inv}, {logits},
                        [logits, labels, probs = std::move(probs), z, hw, inv](detail::Node& o) {
                          if (!logits.requires_grad()) return;
                          double* g = logits.node()->grad_buffer().data();
                          const double go = o.grad[0] * inv;
                          for (std::size_t c = 0; c < z; ++c) {
                            for (std::size_t i = 0; i < hw; ++i) {
                              const double onehot = labels.labels[i] == c ? 1.0 : 0.0;
                              g[c * hw + i] += go * (probs[c * hw + i] - onehot);
                            }
                          }
                        });
}

Tensor loss_seg(const Tensor& logits, const LabelMap& labels) {
  return add(soft_dice(softmax(logits, 0), one_hot(labels, logits.dim(0))), cross_entropy(logits, labels));
}

Tensor loss_spa(const ScaleMaps& segmentation, const LabelMap& labels) {
  Tensor total;
  Tensor target;
  for (const auto& m : segmentation) {
    if (!target.defined()) target = one_hot(labels, m.dim(0));
    Tensor up = bilinear_upsample(m, labels.height, labels.width);
    Tensor term = add(soft_dice(softmax(up, 0), target), cross_entropy(up, labels));
    total = total.defined() ? add(total, term) : term;
  }
  return scale(total, 1.0 / static_cast<double>(segmentation.size()));
}

Tensor loss_usc(const ScaleMaps& guided, const Tensor& prediction) {
  if (prediction.rank() != 3) throw DimensionError("loss_usc: prediction must be [Z x H x W]");
  Tensor target = softmax(prediction.detach(), 0);
  Tensor total;
  for (const auto& g : guided) {
    Tensor up = bilinear_upsample(g, prediction.dim(1), prediction.dim(2));
    Tensor term = soft_dice(softmax(up, 0), target);
    total = total.defined() ? add(total, term) : term;
  }
  return scale(total, 1.0 / static_cast<double>(guided.size()));
}

Tensor loss_con(const ScaleMaps& guided, const ScaleMaps& sspa_maps) {
  Tensor total;
  for (std::size_t s = 0; s < guided.size(); ++s) {
    if (guided[s].shape() != sspa_maps[s].shape()) {
      throw DimensionError("loss_con: scale " + std::to_string(s) + " maps " + to_string(guided[s].shape()) +
                           " vs " + to_string(sspa_maps[s].shape()));
    }
    Tensor diff = sub(softmax(guided[s], 0), softmax(sspa_maps[s].detach(), 0));
    Tensor term = mean(square(diff));
    total = total.defined() ? add(total, term) : term;
  }
  return scale(total, 1.0 / static_cast<double>(guided.size()));
}

LossReport LossTerms::report() const { return {seg.item(), spa.item(), usc.item(), con.item(), total.item()}; }

namespace {

Tensor average(const std::vector<Tensor>& terms) {
  if (terms.empty()) return Tensor::scalar(0.0);
  Tensor acc = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
  return terms.size() == 1 ? acc : scale(acc, 1.0 / static_cast<double>(terms.size()));
}

}  // namespace

LossTerms loss_total(const std::vector<LabeledForward>& labeled, const std::vector<UnlabeledForward>& unlabeled,
                     const LossWeights& weights) {
  if (weights.alpha < 0.0 || weights.beta < 0.0) throw ArgumentError("loss weights must be non-negative");
  std::vector<Tensor> seg, spa, usc, con;
  for (const auto& item : labeled) {
    if (!item.labels) throw ArgumentError("loss_total: labeled item without labels");
    seg.push_back(loss_seg(item.logits, *item.labels));
    if (item.sspa[0].defined()) spa.push_back(loss_spa(item.sspa, *item.labels));
  }
  for (const auto& item : unlabeled) {
    if (!item.guided[0].defined()) continue;
    usc.push_back(loss_usc(item.guided, item.logits));
    con.push_back(loss_con(item.guided, item.sspa));
  }
  LossTerms t;
  t.seg = average(seg);
  t.spa = average(spa);
  t.usc = average(usc);
  t.con = average(con);
  t.total = add(add(t.seg, t.spa), add(scale(t.usc, weights.alpha), scale(t.con, weights.beta)));
  return t;
}

}  // namespace icl
