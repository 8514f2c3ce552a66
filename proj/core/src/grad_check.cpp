#include "icl/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "icl/errors.hpp"
#include "icl/rng.hpp"

namespace icl {

namespace {

double evaluate(const std::function<Tensor()>& f) {
  const double v = f().item();
  if (!std::isfinite(v)) throw NumericError("grad_check: objective evaluated to a non-finite value");
  return v;
}

}  // namespace

GradCheckResult grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& inputs,
                           const GradCheckOptions& options) {
  for (auto t : inputs) {
    if (!t.requires_grad()) throw ArgumentError("grad_check: input does not require grad");
    t.zero_grad();
  }
  {
    Tensor loss = f();
    if (!std::isfinite(loss.item())) throw NumericError("grad_check: objective evaluated to a non-finite value");
    loss.backward();
  }

  // (input index, element index) pairs to probe
  std::vector<std::pair<std::size_t, std::size_t>> probes;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    for (std::size_t i = 0; i < inputs[t].numel(); ++i) probes.emplace_back(t, i);
  }
  if (options.max_probes != 0 && probes.size() > options.max_probes) {
    Rng rng(options.seed);
    for (std::size_t i = 0; i < options.max_probes; ++i) {
      std::swap(probes[i], probes[i + rng.index(probes.size() - i)]);
    }
    probes.resize(options.max_probes);
  }

  GradCheckResult result;
  for (auto [ti, ei] : probes) {
    Tensor x = inputs[ti];
    const double analytic = x.has_grad() ? x.grad()[ei] : 0.0;
    auto values = x.mutable_data();
    const double saved = values[ei];
    values[ei] = saved + options.step;
    const double up = evaluate(f);
    values[ei] = saved - options.step;
    const double down = evaluate(f);
    values[ei] = saved;
    const double numeric = (up - down) / (2.0 * options.step);
    const double err =
        std::abs(analytic - numeric) / std::max({1.0, std::abs(analytic), std::abs(numeric)});
    result.max_relative_error = std::max(result.max_relative_error, err);
    ++result.probes;
  }
  for (auto t : inputs) t.zero_grad();
  return result;
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, const GradCheckOptions& options) {
  if (!x.requires_grad()) x.set_requires_grad(true);
  return grad_check([&] { return f(x); }, {x}, options).max_relative_error;
}

}  // namespace icl
