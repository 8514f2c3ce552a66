#pragma once

#include <string>
#include <utility>
#include <vector>

#include "icl/rng.hpp"
#include "icl/tensor.hpp"

namespace icl {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

using ParameterList = std::vector<NamedTensor>;

// Leaf parameter initialised from U(-bound, bound).
Tensor uniform_parameter(Shape shape, double bound, Rng& rng);
// Leaf parameter initialised from N(0, stddev^2).
Tensor normal_parameter(Shape shape, double stddev, Rng& rng);
Tensor constant_parameter(Shape shape, double value);

inline void append(ParameterList& out, const std::string& name, const Tensor& t) {
  if (t.defined()) out.push_back({name, t});
}

}  // namespace icl
