#pragma once

// Reverse-mode differentiation over a dynamic trace. Every differentiable op
// records a node holding its forward value, references to its inputs and the
// rule that pushes its output gradient back to them. Nodes whose inputs are
// all constants are recorded as constants, so inference builds no graph.

#include <functional>
#include <memory>
#include <string>
#include <type_traits>
#include <vector>

#include "sdformer/numerics/kernels.hpp"
#include "sdformer/numerics/tensor.hpp"

namespace sdformer {

template <typename Scalar>
class Var;

/// Lazily allocated gradient accumulators for the inputs of one node.
template <typename Scalar>
class GradientSlots {
 public:
  virtual ~GradientSlots() = default;
  /// Accumulator for input i, or nullptr when that input needs no gradient.
  virtual Tensor<Scalar>* operator[](std::size_t i) = 0;
};

template <typename Scalar>
using BackwardRule = std::function<void(const Tensor<Scalar>& output, const Tensor<Scalar>& grad_out,
                                        GradientSlots<Scalar>& grad_in)>;

namespace detail {

template <typename Scalar>
struct Node {
  std::string op;
  Tensor<Scalar> value;
  Tensor<Scalar> grad;
  bool has_grad = false;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardRule<Scalar> backward;

  Node() = default;
  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;
  ~Node();
};

}  // namespace detail

/// Handle to a traced value. Copies share the node.
template <typename Scalar>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<detail::Node<Scalar>> node) : node_(std::move(node)) {}

  const Tensor<Scalar>& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  Index dim(int axis) const { return node_->value.dim(axis); }
  const std::string& op() const { return node_->op; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }

  /// Accumulated gradient after backward(); zeros when the value was not reached.
  Tensor<Scalar> grad() const {
    return node_->has_grad ? node_->grad : Tensor<Scalar>(node_->value.shape());
  }

  const std::shared_ptr<detail::Node<Scalar>>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node<Scalar>> node_;
};

/// Records a node. When no input requires a gradient the result is a constant.
template <typename Scalar>
Var<Scalar> make_var(std::string op, Tensor<Scalar> value, std::vector<Var<Scalar>> inputs,
                     BackwardRule<Scalar> rule);

template <typename Scalar>
Var<Scalar> constant(Tensor<Scalar> value) {
  return make_var<Scalar>("constant", std::move(value), {}, nullptr);
}

/// Leaf that receives a gradient.
template <typename Scalar>
Var<Scalar> parameter(Tensor<Scalar> value, std::string name = "parameter");

/// Populates gradients of every traced value reachable from a scalar root.
template <typename Scalar>
void backward(const Var<Scalar>& root);

// Differentiable counterparts of the kernels.

template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& input, const Var<Scalar>& weight, std::type_identity_t<const Var<Scalar>*> bias,
                   const Conv2dOptions& options = {});
template <typename Scalar>
Var<Scalar> layer_norm(const Var<Scalar>& input, const Var<Scalar>& gamma, const Var<Scalar>& beta, std::type_identity_t<Scalar> eps);
template <typename Scalar>
Var<Scalar> gelu(const Var<Scalar>& x);
template <typename Scalar>
Var<Scalar> leaky_relu(const Var<Scalar>& x, std::type_identity_t<Scalar> slope);
template <typename Scalar>
Var<Scalar> softmax(const Var<Scalar>& x, int axis);
template <typename Scalar>
Var<Scalar> pixel_unshuffle(const Var<Scalar>& x, int factor);
template <typename Scalar>
Var<Scalar> pixel_shuffle(const Var<Scalar>& x, int factor);
template <typename Scalar>
Var<Scalar> window_partition(const Var<Scalar>& x, Index dh, Index dw);
template <typename Scalar>
Var<Scalar> window_merge(const Var<Scalar>& windows, Index height, Index width, Index dh, Index dw);
template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar>
Var<Scalar> multiply(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& x, std::type_identity_t<Scalar> factor);
template <typename Scalar>
Var<Scalar> concat(const std::vector<Var<Scalar>>& parts, int axis);
template <typename Scalar>
std::vector<Var<Scalar>> split(const Var<Scalar>& x, int axis, const std::vector<Index>& sizes);
template <typename Scalar>
Var<Scalar> slice(const Var<Scalar>& x, int axis, Index begin, Index count);
template <typename Scalar>
Var<Scalar> pad(const Var<Scalar>& x, const Padding& padding, PadMode mode);
template <typename Scalar>
Var<Scalar> crop(const Var<Scalar>& x, const Padding& padding);
template <typename Scalar>
Var<Scalar> matmul_batched(const Var<Scalar>& a, const Var<Scalar>& b, bool transpose_a = false,
                           bool transpose_b = false);
template <typename Scalar>
Var<Scalar> permute(const Var<Scalar>& x, const std::vector<int>& order);
template <typename Scalar>
Var<Scalar> reshape(const Var<Scalar>& x, Shape shape);
/// Sum of all elements, as a scalar.
template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& x);

}  // namespace sdformer
