#include "safe/tensor.hpp"

#include <stdexcept>
#include <unordered_set>
#include <utility>

namespace safe {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

namespace {
thread_local bool t_grad_enabled = true;
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data, bool requires_grad)
    : node_(std::make_shared<detail::Node<T>>()) {
  if (shape_numel(shape) != data.size()) {
    throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                " does not match shape " + shape_string(shape));
  }
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T{0}, requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::full(Shape shape, T value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return BasicTensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::scalar(T value, bool requires_grad) {
  return BasicTensor(Shape{1}, std::vector<T>{value}, requires_grad);
}

template <typename T>
const Shape& BasicTensor<T>::shape() const {
  if (!node_) throw std::logic_error("undefined tensor");
  return node_->shape;
}

template <typename T>
std::size_t BasicTensor<T>::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw std::out_of_range("axis " + std::to_string(axis) + " out of range for shape " +
                            shape_string(s));
  }
  return s[axis];
}

template <typename T>
std::size_t BasicTensor<T>::numel() const {
  return node_ ? node_->data.size() : 0;
}

template <typename T>
std::span<const T> BasicTensor<T>::data() const {
  if (!node_) return {};
  return node_->data;
}

template <typename T>
std::span<T> BasicTensor<T>::mutable_data() {
  if (!node_) return {};
  return node_->data;
}

template <typename T>
T BasicTensor<T>::item() const {
  if (numel() != 1) {
    throw std::invalid_argument("item() requires a single-element tensor, got " +
                                shape_string(shape()));
  }
  return node_->data[0];
}

template <typename T>
bool BasicTensor<T>::requires_grad() const {
  return node_ && node_->requires_grad;
}

template <typename T>
void BasicTensor<T>::set_requires_grad(bool value) {
  if (!node_) throw std::logic_error("undefined tensor");
  node_->requires_grad = value;
}

template <typename T>
bool BasicTensor<T>::has_grad() const {
  return node_ && !node_->grad.empty();
}

template <typename T>
std::span<const T> BasicTensor<T>::grad() const {
  if (!node_) return {};
  return node_->grad;
}

template <typename T>
std::span<T> BasicTensor<T>::mutable_grad() {
  if (!node_) return {};
  return node_->grad_buffer();
}

template <typename T>
void BasicTensor<T>::clear_grad() {
  if (node_) {
    node_->grad.clear();
    node_->grad.shrink_to_fit();
  }
}

template <typename T>
BasicTensor<T> BasicTensor<T>::clone() const {
  return BasicTensor(shape(), node_->data, node_->requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::detach() const {
  return BasicTensor(shape(), node_->data, false);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::from_node(std::shared_ptr<detail::Node<T>> node) {
  BasicTensor t;
  t.node_ = std::move(node);
  return t;
}

namespace detail {

template <typename T>
BasicTensor<T> make_result(Shape shape, std::vector<T> data,
                           std::vector<BasicTensor<T>> parents,
                           std::function<void(Node<T>&)> backward_fn) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  if (grad_enabled()) {
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (any) {
      node->requires_grad = true;
      node->parents.reserve(parents.size());
      for (auto& p : parents) node->parents.push_back(p.node());
      node->backward_fn = std::move(backward_fn);
    }
  }
  return BasicTensor<T>::from_node(std::move(node));
}

template <typename T>
void backward_from(const BasicTensor<T>& output, std::span<const T> seed) {
  if (!output.requires_grad()) {
    throw std::invalid_argument("backward: output is not connected to any tensor requiring grad");
  }
  if (seed.size() != output.numel()) {
    throw std::invalid_argument("backward: seed gradient size mismatch");
  }

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(output.node().get(), 0);
  visited.insert(output.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Intermediate gradients are recomputed on every call; only leaves accumulate.
  for (auto* node : order) {
    if (!node->is_leaf()) node->grad.assign(node->data.size(), T{});
  }
  auto& out_grad = output.node()->grad_buffer();
  for (std::size_t i = 0; i < seed.size(); ++i) out_grad[i] += seed[i];

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (!(*it)->is_leaf()) (*it)->backward_fn(**it);
  }
}

}  // namespace detail

template <typename T>
void backward(const BasicTensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw std::invalid_argument("backward requires a scalar loss, got shape " +
                                (loss.defined() ? shape_string(loss.shape()) : std::string("<undefined>")));
  }
  const T one{1};
  detail::backward_from(loss, std::span<const T>(&one, 1));
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template void backward(const BasicTensor<float>&);
template void backward(const BasicTensor<double>&);
template void detail::backward_from(const BasicTensor<float>&, std::span<const float>);
template void detail::backward_from(const BasicTensor<double>&, std::span<const double>);
template BasicTensor<float> detail::make_result(Shape, std::vector<float>, std::vector<BasicTensor<float>>,
                                                std::function<void(detail::Node<float>&)>);
template BasicTensor<double> detail::make_result(Shape, std::vector<double>,
                                                 std::vector<BasicTensor<double>>,
                                                 std::function<void(detail::Node<double>&)>);

}  // namespace safe
