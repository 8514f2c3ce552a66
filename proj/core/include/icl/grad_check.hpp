#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "icl/tensor.hpp"

namespace icl {

struct GradCheckOptions {
  double step = 1e-5;
  // When nonzero, only this many randomly chosen elements are probed.
  std::size_t max_probes = 0;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t probes = 0;
};

// Compares the reverse-mode gradient of scalar `f` with respect to `inputs`
// against central finite differences. The error of one element is
// |a - n| / max(1, |a|, |n|); the maximum over probed elements is returned.
// The inputs are perturbed in place and restored. Throws NumericError when f
// produces a non-finite value.
GradCheckResult grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& inputs,
                           const GradCheckOptions& options = {});

// Single-input convenience form.
double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                  const GradCheckOptions& options = {});

}  // namespace icl
