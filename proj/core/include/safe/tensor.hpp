#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace safe {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

// One vertex of the reverse-mode graph. Leaves have no backward_fn.
template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until the first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents that require grad.
  std::function<void(Node&)> backward_fn;

  bool is_leaf() const { return !backward_fn; }

  std::vector<T>& grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), T{});
    return grad;
  }
};

}  // namespace detail

/// Whether ops currently record a backward graph on this thread.
bool grad_enabled();

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Dense row-major array with an optional gradient, shared by handle.
///
/// Copying a BasicTensor copies the handle, not the storage; use clone() for
/// an independent leaf. Op results are immutable; only leaves (parameters)
/// are written in place by optimizers and weight transfer.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  BasicTensor(Shape shape, std::vector<T> data, bool requires_grad = false);

  static BasicTensor zeros(Shape shape, bool requires_grad = false);
  static BasicTensor full(Shape shape, T value, bool requires_grad = false);
  static BasicTensor scalar(T value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const T> data() const;
  std::span<T> mutable_data();
  T item() const;

  bool requires_grad() const;
  void set_requires_grad(bool value);

  bool has_grad() const;
  std::span<const T> grad() const;
  std::span<T> mutable_grad();
  void clear_grad();

  /// Deep copy as a fresh leaf with the same requires_grad flag, no grad.
  BasicTensor clone() const;
  /// Deep copy as a leaf that does not require grad.
  BasicTensor detach() const;

  const std::shared_ptr<detail::Node<T>>& node() const { return node_; }
  static BasicTensor from_node(std::shared_ptr<detail::Node<T>> node);

 private:
  std::shared_ptr<detail::Node<T>> node_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

/// Reverse-mode accumulation from a scalar loss. Leaf gradients accumulate
/// across calls until cleared.
template <typename T>
void backward(const BasicTensor<T>& loss);

namespace detail {

/// Backward pass seeded with an arbitrary output gradient.
template <typename T>
void backward_from(const BasicTensor<T>& output, std::span<const T> seed);

/// Wraps freshly computed data as an op result. The backward closure is only
/// kept when grad mode is on and at least one parent requires grad.
template <typename T>
BasicTensor<T> make_result(Shape shape, std::vector<T> data,
                           std::vector<BasicTensor<T>> parents,
                           std::function<void(Node<T>&)> backward_fn);

}  // namespace detail

}  // namespace safe
