#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "icl/tensor.hpp"

namespace icl {

// Integer class label per pixel, row-major.
struct LabelMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> labels;

  LabelMap() = default;
  LabelMap(std::size_t h, std::size_t w, std::uint8_t fill = 0) : height(h), width(w), labels(h * w, fill) {}

  std::uint8_t& at(std::size_t y, std::size_t x) { return labels[y * width + x]; }
  std::uint8_t at(std::size_t y, std::size_t x) const { return labels[y * width + x]; }
  std::size_t size() const { return labels.size(); }

  friend bool operator==(const LabelMap&, const LabelMap&) = default;
};

// Per-pixel argmax over the class axis of [Z x h x w] logits; ties go to the
// lower class index.
LabelMap argmax_labels(const Tensor& logits);

// Constant [Z x h x w] one-hot encoding. Throws DataError for labels >= Z.
Tensor one_hot(const LabelMap& labels, std::size_t classes);

}  // namespace icl
