#pragma once

#include <vector>

#include "icl/icl_heads.hpp"
#include "icl/label_map.hpp"
#include "icl/tensor.hpp"

namespace icl {

inline constexpr double kDiceEpsilon = 1e-5;

// 1 - (2 sum(p t) + eps) / (sum(p) + sum(t) + eps) per class, averaged over
// all classes (background included). Inputs are [Z x h x w]; target may be
// one-hot or a soft probability map.
Tensor soft_dice(const Tensor& probs, const Tensor& target);

// Mean over pixels of -log softmax(logits)[label]; logits [Z x h x w].
// Throws DataError for labels outside [0, Z).
Tensor cross_entropy(const Tensor& logits, const LabelMap& labels);

// Dice + cross-entropy of the main prediction against the labels.
Tensor loss_seg(const Tensor& logits, const LabelMap& labels);

// Mean over scales of dice + CE of the upsampled SSPA maps against labels.
Tensor loss_spa(const ScaleMaps& segmentation, const LabelMap& labels);

// Mean over scales of dice between softmax(upsampled G) and softmax(p).
// `prediction` is detached here: nothing flows back into it.
Tensor loss_usc(const ScaleMaps& guided, const Tensor& prediction);

// Mean over scales of MSE(softmax(G), softmax(M)) at native resolution.
// `sspa_maps` is detached here.
Tensor loss_con(const ScaleMaps& guided, const ScaleMaps& sspa_maps);

struct LossWeights {
  double alpha = 1.0;  // L_usc
  double beta = 50.0;  // L_con
};

struct LossReport {
  double seg = 0.0;
  double spa = 0.0;
  double usc = 0.0;
  double con = 0.0;
  double total = 0.0;
};

struct LossTerms {
  Tensor seg, spa, usc, con, total;
  LossReport report() const;
};

// Per-image network outputs feeding the objective. Undefined SSPA/USCL maps
// mark a disabled term.
struct LabeledForward {
  Tensor logits;
  ScaleMaps sspa;
  const LabelMap* labels = nullptr;
};

struct UnlabeledForward {
  Tensor logits;
  ScaleMaps sspa;
  ScaleMaps guided;
};

// seg and spa average over labeled images, usc and con over unlabeled ones.
// total = seg + spa + alpha * usc + beta * con.
LossTerms loss_total(const std::vector<LabeledForward>& labeled, const std::vector<UnlabeledForward>& unlabeled,
                     const LossWeights& weights);

}  // namespace icl
