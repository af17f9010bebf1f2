#include "sdformer/numerics/autodiff.hpp"

#include <unordered_set>
#include <utility>

namespace sdformer {
namespace detail {

template <typename Scalar>
Node<Scalar>::~Node() {
  // Long chains would otherwise recurse once per node on destruction.
  // Rules may capture inputs too, so they are released only while `pending`
  // still holds those inputs.
  std::vector<std::shared_ptr<Node>> pending = std::move(inputs);
  backward = nullptr;
  while (!pending.empty()) {
    std::shared_ptr<Node> node = std::move(pending.back());
    pending.pop_back();
    if (node && node.use_count() == 1) {
      for (auto& input : node->inputs) pending.push_back(std::move(input));
      node->inputs.clear();
      node->backward = nullptr;
    }
  }
}

}  // namespace detail

namespace {

template <typename S>
class NodeSlots final : public GradientSlots<S> {
 public:
  explicit NodeSlots(detail::Node<S>& node) : node_(node) {}

  Tensor<S>* operator[](std::size_t i) override {
    auto& input = *node_.inputs.at(i);
    if (!input.requires_grad) return nullptr;
    if (!input.has_grad) {
      input.grad = Tensor<S>(input.value.shape());
      input.has_grad = true;
    }
    return &input.grad;
  }

 private:
  detail::Node<S>& node_;
};

template <typename S>
void accumulate(Tensor<S>* slot, const Tensor<S>& value) {
  if (slot) slot->array() += value.array();
}

}  // namespace

template <typename S>
Var<S> make_var(std::string op, Tensor<S> value, std::vector<Var<S>> inputs, BackwardRule<S> rule) {
  auto node = std::make_shared<detail::Node<S>>();
  node->op = std::move(op);
  node->value = std::move(value);
  for (const auto& input : inputs) node->requires_grad = node->requires_grad || input.requires_grad();
  if (node->requires_grad) {
    node->inputs.reserve(inputs.size());
    for (const auto& input : inputs) node->inputs.push_back(input.node());
    node->backward = std::move(rule);
  }
  return Var<S>(std::move(node));
}

template <typename S>
Var<S> parameter(Tensor<S> value, std::string name) {
  auto node = std::make_shared<detail::Node<S>>();
  node->op = std::move(name);
  node->value = std::move(value);
  node->requires_grad = true;
  return Var<S>(std::move(node));
}

template <typename S>
void backward(const Var<S>& root) {
  if (!root.defined()) throw ConfigError("backward: undefined root");
  if (root.value().size() != 1) throw ConfigError("backward: root must be a scalar, got shape " + root.shape().str());
  if (!root.requires_grad()) return;

  // Post-order over the trace; reversed it is a valid propagation order.
  std::vector<detail::Node<S>*> order;
  std::unordered_set<detail::Node<S>*> visited;
  std::vector<std::pair<detail::Node<S>*, std::size_t>> stack{{root.node().get(), 0}};
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      detail::Node<S>* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }

  detail::Node<S>& top = *root.node();
  if (!top.has_grad) {
    top.grad = Tensor<S>(top.value.shape());
    top.has_grad = true;
  }
  top.grad.array() += S(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node<S>& node = **it;
    if (!node.has_grad || !node.backward) continue;
    NodeSlots<S> slots(node);
    node.backward(node.value, node.grad, slots);
    if (!node.inputs.empty()) {
      node.grad = Tensor<S>();
      node.has_grad = false;
    }
  }
}

template <typename S>
Var<S> conv2d(const Var<S>& input, const Var<S>& weight, std::type_identity_t<const Var<S>*> bias, const Conv2dOptions& options) {
  Tensor<S> out = conv2d(input.value(), weight.value(), bias ? &bias->value() : nullptr, options);
  std::vector<Var<S>> inputs{input, weight};
  if (bias) inputs.push_back(*bias);
  const bool has_bias = bias != nullptr;
  return make_var<S>("conv2d", std::move(out), inputs,
                     [input, weight, has_bias, options](const Tensor<S>&, const Tensor<S>& g, GradientSlots<S>& slots) {
                       Tensor<S> gx, gw, gb;
                       Tensor<S>* sx = slots[0];
                       Tensor<S>* sw = slots[1];
                       Tensor<S>* sb = has_bias ? slots[2] : nullptr;
                       conv2d_backward(input.value(), weight.value(), g, options, sx ? &gx : nullptr,
                                       sw ? &gw : nullptr, sb ? &gb : nullptr);
                       if (sx) accumulate(sx, gx);
                       if (sw) accumulate(sw, gw);
                       if (sb) accumulate(sb, gb);
                     });
}

template <typename S>
Var<S> layer_norm(const Var<S>& input, const Var<S>& gamma, const Var<S>& beta, std::type_identity_t<S> eps) {
  Tensor<S> out = layer_norm(input.value(), gamma.value(), beta.value(), eps);
  return make_var<S>("layer_norm", std::move(out), {input, gamma, beta},
                     [input, gamma, eps](const Tensor<S>&, const Tensor<S>& g, GradientSlots<S>& slots) {
                       Tensor<S> gx, gg, gb;
                       Tensor<S>* sx = slots[0];
                       Tensor<S>* sg = slots[1];
                       Tensor<S>* sb = slots[2];
                       layer_norm_backward(input.value(), gamma.value(), eps, g, sx ? &gx : nullptr,
                                           sg ? &gg : nullptr, sb ? &gb : nullptr);
                       if (sx) accumulate(sx, gx);
                       if (sg) accumulate(sg, gg);
                       if (sb) accumulate(sb, gb);
                     });
}

template <typename S>
Var<S> gelu(const Var<S>& x) {
  return make_var<S>("gelu", gelu(x.value()), {x}, [x](const Tensor<S>&, const Tensor<S>& g, GradientSlots<S>& slots) {
    if (Tensor<S>* s = slots[0]) s->array() += g.array() * gelu_derivative(x.value()).array();
  });
}

template <typename S>
Var<S> leaky_relu(const Var<S>& x, std::type_identity_t<S> slope) {
  return make_var<S>("leaky_relu", leaky_relu(x.value(), slope), {x},
                     [x, slope](const Tensor<S>&, const Tensor<S>& g, GradientSlots<S>& slots) {
                       Tensor<S>* s = slots[0];
                       if (!s) return;
                       const Tensor<S>& v = x.value();
                       for (Index i = 0; i < v.size(); ++i) (*s)[i] += v[i] > 0 ? g[i] : slope * g[i];
                     });
}

template <typename S>
Var<S> softmax(const Var<S>& x, int axis) {
  return make_var<S>("softmax", softmax(x.value(), axis), {x},
                     [axis](const Tensor<S>& y, const Tensor<S>& g, GradientSlots<S>& slots) {
                       accumulate(slots[0], softmax_backward(y, g, axis));
                     });
}

template <typename S>
Var<S> pixel_unshuffle(const Var<S>& x, int factor) {
  return make_var<S>("pixel_unshuffle", pixel_unshuffle(x.value(), factor), {x},
                     [factor](const Tensor<S>&, const Tensor<S>& g, GradientSlots<S>& slots) {
                       accumulate(slots[0], pixel_shuffle(g, factor));
                     });
}

template <typename S>
Var<S> pixel_shuffle(const Var<S>& x, int factor) {
  return make_var<S>("pixel_shuffle", pixel_shuffle(x.value(), factor), {x},
                     [factor](const Tensor<S>&, const Tensor<S>& g, GradientSlots<S>& slots) {
                       accumulate(slots[0], pixel_unshuffle(g, factor));
                     });
}

template <typename S>
Var<S> window_partition(const Var<S>& x, Index dh, Index dw) {
  const Index h = x.dim(1), w = x.dim(2);
  return make_var<S>("window_partition", window_partition(x.value(), dh, dw), {x},
                     [h, w, dh, dw](const Tensor<S>&, const Tensor<S>& g, GradientSlots<S>& slots) {
                       accumulate(slots[0], window_merge(g, h, w, dh, dw));
                     });
}

template <typename S>
Var<S> window_merge(const Var<S>& windows, Index height, Index width, Index dh, Index dw) {
  return make_var<S>("window_merge", window_merge(windows.value(), height, width, dh, dw), {windows},
                     [dh, dw](const Tensor<S>&, const Tensor<S>& g, GradientSlots<S>& slots) {
                       accumulate(slots[0], window_partition(g, dh, dw));
                     });
}

template <typename S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
  return make_var<S>("add", add(a.value(), b.value()), {a, b},
                     [](const Tensor<S>&, const Tensor<S>& g, GradientSlots<S>& slots) {
                       accumulate(slots[0], g);
                       accumulate(slots[1], g);
                     });
}

template <typename S>
Var<S> multiply(const Var<S>& a, const Var<S>& b) {
  return make_var<S>("multiply", multiply(a.value(), b.value()), {a, b},
                     [a, b](const Tensor<S>&, const Tensor<S>& g, GradientSlots<S>& slots) {
                       if (Tensor<S>* s = slots[0]) s->array() += g.array() * b.value().array();
                       if (Tensor<S>* s = slots[1]) s->array() += g.array() * a.value().array();
                     });
}

template <typename S>
Var<S> scale(const Var<S>& x, std::type_identity_t<S> factor) {
  return make_var<S>("scale", scale(x.value(), factor), {x},
                     [factor](const Tensor<S>&, const Tensor<S>& g, GradientSlots<S>& slots) {
                       if (Tensor<S>* s = slots[0]) s->array() += g.array() * factor;
                     });
}

template <typename S>
Var<S> concat(const std::vector<Var<S>>& parts, int axis) {
  std::vector<Tensor<S>> values;
  std::vector<Index> offsets;
  Index offset = 0;
  for (const auto& p : parts) {
    values.push_back(p.value());
    offsets.push_back(offset);
    offset += p.dim(axis);
  }
  Tensor<S> out = concat(values, axis);
  std::vector<Index> sizes;
  for (const auto& p : parts) sizes.push_back(p.dim(axis));
  return make_var<S>("concat", std::move(out), parts,
                     [axis, offsets, sizes](const Tensor<S>&, const Tensor<S>& g, GradientSlots<S>& slots) {
                       for (std::size_t i = 0; i < sizes.size(); ++i)
                         accumulate(slots[i], slice(g, axis, offsets[i], sizes[i]));
                     });
}

template <typename S>
Var<S> slice(const Var<S>& x, int axis, Index begin, Index count) {
  return make_var<S>("slice", slice(x.value(), axis, begin, count), {x},
                     [axis, begin](const Tensor<S>&, const Tensor<S>& g, GradientSlots<S>& slots) {
                       if (Tensor<S>* s = slots[0]) slice_add(*s, g, axis, begin);
                     });
}

template <typename S>
std::vector<Var<S>> split(const Var<S>& x, int axis, const std::vector<Index>& sizes) {
  Index total = 0;
  for (Index n : sizes) total += n;
  if (axis < 0 || axis >= x.value().rank() || total != x.dim(axis))
    throw ConfigError("split: parts sum to " + std::to_string(total) + " but extent of " + x.shape().str() +
                      " differs along axis " + std::to_string(axis));
  std::vector<Var<S>> out;
  Index offset = 0;
  for (Index n : sizes) {
    out.push_back(slice(x, axis, offset, n));
    offset += n;
  }
  return out;
}

template <typename S>
Var<S> pad(const Var<S>& x, const Padding& padding, PadMode mode) {
  const Shape input_shape = x.shape();
  return make_var<S>("pad", pad(x.value(), padding, mode), {x},
                     [input_shape, padding, mode](const Tensor<S>&, const Tensor<S>& g, GradientSlots<S>& slots) {
                       accumulate(slots[0], pad_backward(g, input_shape, padding, mode));
                     });
}

template <typename S>
Var<S> crop(const Var<S>& x, const Padding& padding) {
  return make_var<S>("crop", crop(x.value(), padding), {x},
                     [padding](const Tensor<S>&, const Tensor<S>& g, GradientSlots<S>& slots) {
                       accumulate(slots[0], pad(g, padding, PadMode::kZero));
                     });
}

template <typename S>
Var<S> matmul_batched(const Var<S>& a, const Var<S>& b, bool transpose_a, bool transpose_b) {
  return make_var<S>(
      "matmul_batched", matmul_batched(a.value(), b.value(), transpose_a, transpose_b), {a, b},
      [a, b, transpose_a, transpose_b](const Tensor<S>&, const Tensor<S>& g, GradientSlots<S>& slots) {
        if (Tensor<S>* s = slots[0]) {
          if (!transpose_a)
            accumulate(s, matmul_batched(g, b.value(), false, !transpose_b));
          else
            accumulate(s, matmul_batched(b.value(), g, transpose_b, true));
        }
        if (Tensor<S>* s = slots[1]) {
          if (!transpose_b)
            accumulate(s, matmul_batched(a.value(), g, !transpose_a, false));
          else
            accumulate(s, matmul_batched(g, a.value(), true, transpose_a));
        }
      });
}

template <typename S>
Var<S> permute(const Var<S>& x, const std::vector<int>& order) {
  std::vector<int> inverse(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (order[i] < 0 || order[i] >= static_cast<int>(order.size())) throw ConfigError("permute: invalid order");
    inverse[static_cast<std::size_t>(order[i])] = static_cast<int>(i);
  }
  return make_var<S>("permute", permute(x.value(), order), {x},
                     [inverse](const Tensor<S>&, const Tensor<S>& g, GradientSlots<S>& slots) {
                       accumulate(slots[0], permute(g, inverse));
                     });
}

template <typename S>
Var<S> reshape(const Var<S>& x, Shape shape) {
  const Shape original = x.shape();
  return make_var<S>("reshape", x.value().reshaped(std::move(shape)), {x},
                     [original](const Tensor<S>&, const Tensor<S>& g, GradientSlots<S>& slots) {
                       accumulate(slots[0], g.reshaped(original));
                     });
}

template <typename S>
Var<S> sum(const Var<S>& x) {
  return make_var<S>("sum", Tensor<S>::scalar(x.value().array().sum()), {x},
                     [](const Tensor<S>&, const Tensor<S>& g, GradientSlots<S>& slots) {
                       if (Tensor<S>* s = slots[0]) s->array() += g[0];
                     });
}

#define SDFORMER_INSTANTIATE_AUTODIFF(S)                                                                         \
  template struct detail::Node<S>;                                                                               \
  template Var<S> make_var(std::string, Tensor<S>, std::vector<Var<S>>, BackwardRule<S>);                       \
  template Var<S> parameter(Tensor<S>, std::string);                                                             \
  template void backward(const Var<S>&);                                                                         \
  template Var<S> conv2d(const Var<S>&, const Var<S>&, std::type_identity_t<const Var<S>*>, const Conv2dOptions&);                     \
  template Var<S> layer_norm(const Var<S>&, const Var<S>&, const Var<S>&, std::type_identity_t<S>);                                    \
  template Var<S> gelu(const Var<S>&);                                                                           \
  template Var<S> leaky_relu(const Var<S>&, std::type_identity_t<S>);                                                                  \
  template Var<S> softmax(const Var<S>&, int);                                                                   \
  template Var<S> pixel_unshuffle(const Var<S>&, int);                                                           \
  template Var<S> pixel_shuffle(const Var<S>&, int);                                                             \
  template Var<S> window_partition(const Var<S>&, Index, Index);                                                 \
  template Var<S> window_merge(const Var<S>&, Index, Index, Index, Index);                                       \
  template Var<S> add(const Var<S>&, const Var<S>&);                                                             \
  template Var<S> multiply(const Var<S>&, const Var<S>&);                                                        \
  template Var<S> scale(const Var<S>&, std::type_identity_t<S>);                                                                       \
  template Var<S> concat(const std::vector<Var<S>>&, int);                                                       \
  template std::vector<Var<S>> split(const Var<S>&, int, const std::vector<Index>&);                             \
  template Var<S> slice(const Var<S>&, int, Index, Index);                                                       \
  template Var<S> pad(const Var<S>&, const Padding&, PadMode);                                                   \
  template Var<S> crop(const Var<S>&, const Padding&);                                                           \
  template Var<S> matmul_batched(const Var<S>&, const Var<S>&, bool, bool);                                      \
  template Var<S> permute(const Var<S>&, const std::vector<int>&);                                               \
  template Var<S> reshape(const Var<S>&, Shape);                                                                 \
  template Var<S> sum(const Var<S>&);

SDFORMER_INSTANTIATE_AUTODIFF(float)
SDFORMER_INSTANTIATE_AUTODIFF(double)

#undef SDFORMER_INSTANTIATE_AUTODIFF

}  // namespace sdformer
