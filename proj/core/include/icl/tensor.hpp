#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace icl {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

namespace detail {

struct Node;

// Accumulates the output gradient of a recorded op into its inputs.
// Receives the node whose `grad` is already populated.
using BackwardFn = std::function<void(Node&)>;

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;

  bool is_leaf() const { return !backward; }
  // Returns grad, allocating zeros on first use.
  std::vector<double>& grad_buffer();
};

}  // namespace detail

// Dense row-major float64 array that can take part in a reverse-mode graph.
//
// Tensor is a shared handle: copies alias the same storage. Use clone() for a
// deep copy of the values. Parameters are leaf tensors with requires_grad set;
// the optimizer updates them in place through mutable_data().
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;
  double operator[](std::size_t i) const { return data()[i]; }

  bool requires_grad() const;
  Tensor& set_requires_grad(bool flag);
  bool has_grad() const;
  std::span<const double> grad() const;  // empty span when absent
  void zero_grad();

  // Runs reverse-mode accumulation from this scalar tensor.
  void backward() const;

  // Same values, cut from the graph: contributes nothing upstream.
  Tensor detach() const;
  // Fresh leaf with copied values (and no gradient).
  Tensor clone() const;

  const char* op_name() const;
  const std::shared_ptr<detail::Node>& node() const { return node_; }

  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// Ordered record of the differentiable ops reachable from a root, in
// execution order. Backward replays it in reverse, visiting each op once.
class GradTape {
 public:
  static GradTape record(const Tensor& root);

  std::size_t size() const { return ops_.size(); }
  const std::vector<detail::Node*>& ops() const { return ops_; }

  // Seeds the root gradient with ones and propagates.
  void backward(const Tensor& root) const;

 private:
  std::vector<detail::Node*> ops_;
};

// Builds the output of a differentiable op. The backward closure is attached
// only when at least one input requires grad; otherwise the result is a
// constant and the inputs are not retained.
Tensor make_op_result(const char* op, Shape shape, std::vector<double> value,
                      std::vector<Tensor> inputs, detail::BackwardFn backward);

}  // namespace icl
