#include "icl/label_map.hpp"

#include <string>

#include "icl/errors.hpp"

namespace icl {

LabelMap argmax_labels(const Tensor& logits) {
  if (logits.rank() != 3) throw DimensionError("argmax_labels: expected [Z x h x w], got " + to_string(logits.shape()));
  const std::size_t z = logits.dim(0), h = logits.dim(1), w = logits.dim(2), hw = h * w;
  auto v = logits.data();
  LabelMap out(h, w);
  for (std::size_t i = 0; i < hw; ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < z; ++c) {
      if (v[c * hw + i] > v[best * hw + i]) best = c;
    }
    out.labels[i] = static_cast<std::uint8_t>(best);
  }
  return out;
}

Tensor one_hot(const LabelMap& labels, std::size_t classes) {
  const std::size_t hw = labels.size();
  std::vector<double> v(classes * hw, 0.0);
  for (std::size_t i = 0; i < hw; ++i) {
    const std::size_t c = labels.labels[i];
    if (c >= classes) {
      throw DataError("label " + std::to_string(c) + " at pixel " + std::to_string(i) + " outside [0, " +
                      std::to_string(classes) + ")");
    }
    v[c * hw + i] = 1.0;
  }
  return Tensor::from({classes, labels.height, labels.width}, std::move(v));
}

}  // namespace icl
