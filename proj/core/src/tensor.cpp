#include "icl/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "icl/errors.hpp"

namespace icl {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

std::vector<double>& Node::grad_buffer() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad;
}

}  // namespace detail

namespace {

void check_shape(const Shape& shape, std::size_t values) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor shape " + to_string(shape) + " has a zero dimension");
  }
  if (numel(shape) != values) {
    throw DimensionError("shape " + to_string(shape) + " does not match " +
                         std::to_string(values) + " values");
  }
}

std::shared_ptr<detail::Node> make_leaf(Shape shape, std::vector<double> values, bool requires_grad) {
  check_shape(shape, values.size());
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return node;
}

const detail::Node& deref(const std::shared_ptr<detail::Node>& node) {
  if (!node) throw ArgumentError("use of an undefined tensor");
  return *node;
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = icl::numel(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto n = icl::numel(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  return Tensor(make_leaf(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(make_leaf({1}, {value}, requires_grad));
}

const Shape& Tensor::shape() const { return deref(node_).shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + to_string(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return deref(node_).value.size(); }

std::span<const double> Tensor::data() const { return deref(node_).value; }

std::span<double> Tensor::mutable_data() {
  deref(node_);
  return node_->value;
}

double Tensor::item() const {
  const auto& n = deref(node_);
  if (n.value.size() != 1) {
    throw DimensionError("item() on tensor of shape " + to_string(n.shape));
  }
  return n.value[0];
}

bool Tensor::requires_grad() const { return deref(node_).requires_grad; }

Tensor& Tensor::set_requires_grad(bool flag) {
  deref(node_);
  if (!node_->is_leaf()) throw ArgumentError("requires_grad can only be changed on leaf tensors");
  node_->requires_grad = flag;
  return *this;
}

bool Tensor::has_grad() const { return !deref(node_).grad.empty(); }

std::span<const double> Tensor::grad() const { return deref(node_).grad; }

void Tensor::zero_grad() {
  deref(node_);
  node_->grad.clear();
}

void Tensor::backward() const {
  GradTape::record(*this).backward(*this);
}

Tensor Tensor::detach() const {
  const auto& n = deref(node_);
  return Tensor(make_leaf(n.shape, n.value, false));
}

Tensor Tensor::clone() const { return detach(); }

const char* Tensor::op_name() const { return deref(node_).op; }

GradTape GradTape::record(const Tensor& root) {
  GradTape tape;
  if (!root.defined()) throw ArgumentError("backward from an undefined tensor");
  // Iterative post-order DFS: a node is emitted after all of its inputs, so
  // the emitted order is a valid execution order.
  std::unordered_set<const detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  auto* start = root.node().get();
  if (!start->requires_grad) return tape;
  stack.emplace_back(start, 0);
  seen.insert(start);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      auto* child = node->inputs[next++].get();
      if (child->requires_grad && !child->is_leaf() && seen.insert(child).second) {
        stack.emplace_back(child, 0);
      }
      continue;
    }
    if (!node->is_leaf()) tape.ops_.push_back(node);
    stack.pop_back();
  }
  return tape;
}

void GradTape::backward(const Tensor& root) const {
  auto& r = *root.node();
  if (r.value.size() != 1) {
    throw DimensionError("backward() requires a scalar root, got shape " + to_string(r.shape));
  }
  if (!r.requires_grad) return;
  // Intermediate gradients from an earlier pass over a shared graph must not
  // leak into this one.
  for (auto* op : ops_) op->grad.clear();
  if (r.is_leaf()) {
    r.grad_buffer()[0] += 1.0;
    return;
  }
  r.grad_buffer()[0] = 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    auto* op = *it;
    if (op->grad.empty()) continue;  // no path from the root
    op->backward(*op);
  }
}

Tensor make_op_result(const char* op, Shape shape, std::vector<double> value,
                      std::vector<Tensor> inputs, detail::BackwardFn backward) {
  auto node = make_leaf(std::move(shape), std::move(value), false);
  node->op = op;
  bool needs = std::any_of(inputs.begin(), inputs.end(),
                           [](const Tensor& t) { return t.defined() && t.requires_grad(); });
  if (needs) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& t : inputs) {
      if (t.defined()) node->inputs.push_back(t.node());
    }
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

}  // namespace icl
