#include "icl/parameters.hpp"

namespace icl {

Tensor uniform_parameter(Shape shape, double bound, Rng& rng) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return Tensor::from(std::move(shape), std::move(v), true);
}

Tensor normal_parameter(Shape shape, double stddev, Rng& rng) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng.normal(0.0, stddev);
  return Tensor::from(std::move(shape), std::move(v), true);
}

Tensor constant_parameter(Shape shape, double value) { return Tensor::full(std::move(shape), value, true); }

}  // namespace icl
