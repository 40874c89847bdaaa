#pragma once

// Dense float64 tensors with reverse-mode differentiation.
//
// A Tensor is a cheap handle to an immutable node. Operations in ops.hpp
// create new nodes and, when any input requires gradients, record the input
// handles and a backward rule. Node ids grow monotonically at creation, so
// sorting the reachable nodes by id yields a topological order: that sorted
// list is the computation tape replayed (in reverse) by backward().

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

namespace mgpms {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);

namespace detail {

struct Node {
  std::uint64_t id = 0;
  std::string_view op = "leaf";
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad, accumulates into the inputs' grads.
  std::function<void(Node&)> backward;

  bool is_leaf() const { return !backward; }
  // Allocates a zeroed gradient buffer on first use.
  std::vector<double>& grad_buffer();
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  static Tensor constant(Shape shape, std::vector<double> values);
  /// Leaf whose gradient is populated by backward().
  static Tensor parameter(Shape shape, std::vector<double> values);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor zeros(Shape shape);
  /// Column-shaped rank-1 convenience.
  static Tensor vector(std::vector<double> values, bool requires_grad = false);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                       bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  // Rank-2 view: rank 1 reads as n x 1, rank 0 as 1 x 1.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return node_->value; }
  std::vector<double> to_vector() const { return node_->value; }
  double item() const;
  double at(std::size_t i) const { return node_->value.at(i); }
  double at(std::size_t r, std::size_t c) const { return node_->value.at(r * cols() + c); }

  bool requires_grad() const { return node_->requires_grad; }
  /// Gradient of the last backward() (accumulated across calls for leaves).
  /// Empty when no gradient reached this tensor.
  std::span<const double> grad() const { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }

  /// Populates d(this)/d(leaf) on every reachable leaf that requires gradients.
  /// `this` must hold exactly one element. Leaf gradients accumulate across
  /// repeated calls until zero_grad(); intermediate gradients do not persist.
  void backward() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Topologically ordered record of the operations that produced `root`.
class ComputationTape {
 public:
  static ComputationTape record(const Tensor& root);

  /// Producers precede consumers.
  std::span<const std::shared_ptr<detail::Node>> nodes() const { return order_; }

  /// Runs every backward rule once, consumers first, seeding d(root) = 1.
  void backward();

 private:
  std::vector<std::shared_ptr<detail::Node>> order_;
};

namespace detail {

// Creates an op result. When no input requires gradients the inputs and the
// backward rule are dropped. Throws NumericError if any value is non-finite.
Tensor make_result(std::string_view op, Shape shape, std::vector<double> value,
                   std::vector<Tensor> inputs, std::function<void(Node&)> backward);

}  // namespace detail

}  // namespace mgpms
