#pragma once

// Forward kernels on plain tensors, plus the backward kernels the trace uses.
// Feature maps are C x H x W; sequences are B x L x D.

#include <optional>
#include <type_traits>
#include <vector>

#include "sdformer/numerics/tensor.hpp"

namespace sdformer {

struct Conv2dOptions {
  int stride = 1;
  int padding = 0;
  int groups = 1;
};

enum class PadMode { kZero, kReflect };

/// Spatial padding of a C x H x W map, recorded so it can be cropped back.
struct Padding {
  Index top = 0;
  Index bottom = 0;
  Index left = 0;
  Index right = 0;

  bool empty() const { return top == 0 && bottom == 0 && left == 0 && right == 0; }
  bool operator==(const Padding&) const = default;
};

template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& input, const Tensor<Scalar>& weight, std::type_identity_t<const Tensor<Scalar>*> bias,
                      const Conv2dOptions& options = {});

/// Gradients of conv2d. Null output pointers are skipped.
template <typename Scalar>
void conv2d_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& weight, const Tensor<Scalar>& grad_out,
                     const Conv2dOptions& options, Tensor<Scalar>* grad_input, Tensor<Scalar>* grad_weight,
                     Tensor<Scalar>* grad_bias);

/// Normalizes over channels at every spatial location.
template <typename Scalar>
Tensor<Scalar> layer_norm(const Tensor<Scalar>& input, const Tensor<Scalar>& gamma, const Tensor<Scalar>& beta,
                          std::type_identity_t<Scalar> eps);

template <typename Scalar>
void layer_norm_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& gamma, std::type_identity_t<Scalar> eps,
                         const Tensor<Scalar>& grad_out, Tensor<Scalar>* grad_input, Tensor<Scalar>* grad_gamma,
                         Tensor<Scalar>* grad_beta);

/// Exact GELU, x * Phi(x).
template <typename Scalar>
Tensor<Scalar> gelu(const Tensor<Scalar>& x);
template <typename Scalar>
Tensor<Scalar> gelu_derivative(const Tensor<Scalar>& x);

template <typename Scalar>
Tensor<Scalar> leaky_relu(const Tensor<Scalar>& x, std::type_identity_t<Scalar> slope);

template <typename Scalar>
Tensor<Scalar> softmax(const Tensor<Scalar>& x, int axis);
template <typename Scalar>
Tensor<Scalar> softmax_backward(const Tensor<Scalar>& y, const Tensor<Scalar>& grad_out, int axis);

template <typename Scalar>
Tensor<Scalar> pixel_unshuffle(const Tensor<Scalar>& x, int factor);
template <typename Scalar>
Tensor<Scalar> pixel_shuffle(const Tensor<Scalar>& x, int factor);

/// C x H x W -> N x (dh*dw) x C, windows in row-major grid order.
template <typename Scalar>
Tensor<Scalar> window_partition(const Tensor<Scalar>& x, Index dh, Index dw);
/// Inverse of window_partition for a map of extents height x width.
template <typename Scalar>
Tensor<Scalar> window_merge(const Tensor<Scalar>& windows, Index height, Index width, Index dh, Index dw);

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
template <typename Scalar>
Tensor<Scalar> multiply(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& x, std::type_identity_t<Scalar> factor);

template <typename Scalar>
Tensor<Scalar> concat(const std::vector<Tensor<Scalar>>& parts, int axis);
template <typename Scalar>
std::vector<Tensor<Scalar>> split(const Tensor<Scalar>& x, int axis, const std::vector<Index>& sizes);
/// Contiguous range [begin, begin + count) along axis.
template <typename Scalar>
Tensor<Scalar> slice(const Tensor<Scalar>& x, int axis, Index begin, Index count);
/// Adds `part` into the range [begin, begin + part extent) of `target` along axis.
template <typename Scalar>
void slice_add(Tensor<Scalar>& target, const Tensor<Scalar>& part, int axis, Index begin);

template <typename Scalar>
Tensor<Scalar> pad(const Tensor<Scalar>& x, const Padding& padding, PadMode mode);
template <typename Scalar>
Tensor<Scalar> pad_backward(const Tensor<Scalar>& grad_out, const Shape& input_shape, const Padding& padding,
                            PadMode mode);
/// Removes a recorded padding.
template <typename Scalar>
Tensor<Scalar> crop(const Tensor<Scalar>& x, const Padding& padding);
template <typename Scalar>
Tensor<Scalar> crop(const Tensor<Scalar>& x, Index top, Index left, Index height, Index width);

/// Batched op(a) * op(b) over leading dimension.
template <typename Scalar>
Tensor<Scalar> matmul_batched(const Tensor<Scalar>& a, const Tensor<Scalar>& b, bool transpose_a = false,
                              bool transpose_b = false);

template <typename Scalar>
Tensor<Scalar> permute(const Tensor<Scalar>& x, const std::vector<int>& order);

/// Multiply-accumulate count of conv2d for the given operand shapes.
Index conv2d_macs(const Shape& input, const Shape& weight, const Conv2dOptions& options);

}  // namespace sdformer
