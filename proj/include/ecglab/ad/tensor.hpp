#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ecglab::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape) noexcept;
std::string to_string(const Shape& shape);

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until backward reaches the node
  bool requires_grad = false;
  bool is_leaf = true;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward;

  std::vector<T>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), T{0});
    return grad;
  }
};

/// Dense row-major array that records the operations producing it. Copies
/// share the underlying node.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Tensor constant(Shape shape, std::vector<T> values);
  /// Leaf that receives gradients.
  static Tensor parameter(Shape shape, std::vector<T> values);
  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, T value);
  static Tensor scalar(T value);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t ndim() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<const T> data() const { return node_->value; }
  /// Direct write access; intended for leaves (optimizer updates, tests).
  std::span<T> mutable_data() { return node_->value; }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->ensure_grad(); }
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad() { node_->grad.clear(); }

  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->is_leaf; }
  const char* op() const { return node_->op; }

  /// The single value of a one-element tensor; throws ContractError otherwise.
  T item() const;

  /// A new constant leaf holding a copy of the values.
  Tensor detach() const;

  Node<T>* node() const noexcept { return node_.get(); }
  const std::shared_ptr<Node<T>>& ptr() const noexcept { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Populates d(loss)/d(leaf) on every requires-grad leaf reachable from the
/// scalar `loss`, visiting nodes once in reverse topological order. Leaf
/// gradients accumulate across calls; interior gradients are recomputed.
template <typename T>
void backward(const Tensor<T>& loss);

/// Converts values between scalar types; the result is a leaf that requires
/// grad iff `requires_grad`.
template <typename To, typename From>
Tensor<To> convert(const Tensor<From>& t, bool requires_grad) {
  std::vector<To> v(t.data().begin(), t.data().end());
  return requires_grad ? Tensor<To>::parameter(t.shape(), std::move(v))
                       : Tensor<To>::constant(t.shape(), std::move(v));
}

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace ecglab::ad
