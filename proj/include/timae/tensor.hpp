#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace timae {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

/// One recorded value in the computation graph. Nodes are created in a
/// globally increasing `seq` order, so sorting reachable nodes by descending
/// `seq` yields a valid reverse topological order.
template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until backward touches the node
  bool requires_grad = false;
  bool consumed = false;  // set on a loss node once backward ran
  std::uint64_t seq = 0;
  std::vector<std::shared_ptr<Node>> parents;
  // Receives this node's gradient and accumulates into `parents`.
  std::function<void(const std::vector<T>& grad_out)> backward_fn;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
  }
};

std::uint64_t next_seq();

}  // namespace detail

/// While alive, ops on this thread record no backward closures (inference).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Keeps large buffers on the heap instead of fresh mmap pages; training
/// allocates and frees tens of megabytes per step. No-op outside glibc.
void tune_allocator();

/// Dense row-major tensor with reverse-mode automatic differentiation.
///
/// A Tensor is a cheap handle; copies share storage. Values produced by ops
/// record a backward closure when any input requires a gradient. Leaf
/// gradients accumulate across backward() calls until zero_grad().
template <typename T>
class Tensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<T> data, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  /// Size of `axis`; negative axes count from the end.
  std::size_t dim(int axis) const;
  std::size_t numel() const { return node_->data.size(); }

  std::span<T> data() { return node_->data; }
  std::span<const T> data() const { return node_->data; }
  const std::vector<T>& values() const { return node_->data; }
  T item() const;
  T at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }
  bool has_grad() const { return node_->grad.size() == node_->data.size() && !node_->data.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() { node_->grad.clear(); }

  /// Reverse pass from a scalar. Throws ContractError on a non-scalar, or if
  /// this graph was already consumed by an earlier backward().
  void backward();

  /// New leaf sharing no graph history (values copied).
  Tensor detach() const;

  const NodePtr& node() const { return node_; }
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

 private:
  NodePtr node_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

namespace detail {

/// Creates an op output. `backward` is kept only when some input requires a
/// gradient; it receives the output gradient.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, std::vector<Tensor<T>> inputs,
                      std::function<void(const std::vector<T>&)> backward);

/// Adds `delta` into the gradient of `t` if it tracks one.
template <typename T>
inline void accumulate(const Tensor<T>& t, std::span<const T> delta) {
  auto& n = *t.node();
  if (!n.requires_grad) return;
  if (n.grad.empty()) {
    n.grad.assign(delta.begin(), delta.end());
    return;
  }
  for (std::size_t i = 0; i < delta.size(); ++i) n.grad[i] += delta[i];
}

}  // namespace detail

}  // namespace timae
