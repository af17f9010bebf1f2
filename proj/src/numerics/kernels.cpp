#include "sdformer/numerics/kernels.hpp"

#include <Eigen/Core>

#include <cmath>
#include <numbers>
#include <string>

namespace sdformer {
namespace {

template <typename S>
using RowMatrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using RowMap = Eigen::Map<RowMatrix<S>, 0, Eigen::OuterStride<>>;
template <typename S>
using ConstRowMap = Eigen::Map<const RowMatrix<S>, 0, Eigen::OuterStride<>>;

// im2col buffers are tiled over output rows so no buffer exceeds this many elements.
constexpr Index kColumnBudget = Index{1} << 22;

std::string dims(Index a, Index b) { return std::to_string(a) + " vs " + std::to_string(b); }

void require_rank(const Shape& shape, int rank, const char* what) {
  if (shape.rank() != rank)
    throw ConfigError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got shape " + shape.str());
}

struct ConvGeometry {
  Index cin, height, width;
  Index cout, kernel, cin_group, cout_group;
  Index out_height, out_width;
  Index stride, padding, groups;

  Index patch() const { return cin_group * kernel * kernel; }
  Index out_plane() const { return out_height * out_width; }
  bool depthwise() const { return cin_group == 1 && cout_group == 1; }
  bool pointwise() const { return kernel == 1 && stride == 1 && padding == 0; }
};

ConvGeometry conv_geometry(const Shape& input, const Shape& weight, const Conv2dOptions& options) {
  require_rank(input, 3, "conv2d input");
  require_rank(weight, 4, "conv2d weight");
  if (options.groups < 1 || options.stride < 1 || options.padding < 0)
    throw ConfigError("conv2d: groups and stride must be positive, padding non-negative");
  ConvGeometry g{};
  g.cin = input[0];
  g.height = input[1];
  g.width = input[2];
  g.cout = weight[0];
  g.kernel = weight[2];
  g.groups = options.groups;
  g.stride = options.stride;
  g.padding = options.padding;
  if (weight[2] != weight[3]) throw ConfigError("conv2d: kernel must be square, got " + dims(weight[2], weight[3]));
  if (g.cin % g.groups != 0)
    throw ConfigError("conv2d: input channels " + std::to_string(g.cin) + " not divisible by groups " +
                      std::to_string(g.groups));
  if (g.cout % g.groups != 0)
    throw ConfigError("conv2d: output channels " + std::to_string(g.cout) + " not divisible by groups " +
                      std::to_string(g.groups));
  g.cin_group = g.cin / g.groups;
  g.cout_group = g.cout / g.groups;
  if (weight[1] != g.cin_group)
    throw ConfigError("conv2d: weight input-channel dimension " + dims(weight[1], g.cin_group) +
                      " (input channels / groups)");
  const Index span_h = g.height + 2 * g.padding - g.kernel;
  const Index span_w = g.width + 2 * g.padding - g.kernel;
  if (span_h < 0 || span_w < 0) throw ConfigError("conv2d: kernel larger than padded input " + input.str());
  g.out_height = span_h / g.stride + 1;
  g.out_width = span_w / g.stride + 1;
  return g;
}

// Output columns [lo, hi) whose input column ow*stride - padding + offset lies inside [0, width).
std::pair<Index, Index> valid_columns(const ConvGeometry& g, Index offset) {
  Index lo = 0;
  const Index start = g.padding - offset;
  if (start > 0) lo = (start + g.stride - 1) / g.stride;
  const Index last = g.width - 1 + g.padding - offset;
  Index hi = last < 0 ? 0 : last / g.stride + 1;
  hi = std::min(hi, g.out_width);
  return {std::min(lo, hi), hi};
}

template <typename S>
void im2col(const S* x, const ConvGeometry& g, Index row_begin, Index row_end, S* cols) {
  const Index ncols = (row_end - row_begin) * g.out_width;
  for (Index c = 0; c < g.cin_group; ++c) {
    for (Index ki = 0; ki < g.kernel; ++ki) {
      for (Index kj = 0; kj < g.kernel; ++kj) {
        S* row = cols + ((c * g.kernel + ki) * g.kernel + kj) * ncols;
        const auto [lo, hi] = valid_columns(g, kj);
        for (Index oh = row_begin; oh < row_end; ++oh) {
          S* dst = row + (oh - row_begin) * g.out_width;
          const Index ih = oh * g.stride - g.padding + ki;
          if (ih < 0 || ih >= g.height) {
            std::fill(dst, dst + g.out_width, S(0));
            continue;
          }
          const S* src = x + (c * g.height + ih) * g.width;
          std::fill(dst, dst + lo, S(0));
          for (Index ow = lo; ow < hi; ++ow) dst[ow] = src[ow * g.stride - g.padding + kj];
          std::fill(dst + hi, dst + g.out_width, S(0));
        }
      }
    }
  }
}

template <typename S>
void col2im_add(const S* cols, const ConvGeometry& g, Index row_begin, Index row_end, S* x) {
  const Index ncols = (row_end - row_begin) * g.out_width;
  for (Index c = 0; c < g.cin_group; ++c) {
    for (Index ki = 0; ki < g.kernel; ++ki) {
      for (Index kj = 0; kj < g.kernel; ++kj) {
        const S* row = cols + ((c * g.kernel + ki) * g.kernel + kj) * ncols;
        const auto [lo, hi] = valid_columns(g, kj);
        for (Index oh = row_begin; oh < row_end; ++oh) {
          const Index ih = oh * g.stride - g.padding + ki;
          if (ih < 0 || ih >= g.height) continue;
          const S* src = row + (oh - row_begin) * g.out_width;
          S* dst = x + (c * g.height + ih) * g.width;
          for (Index ow = lo; ow < hi; ++ow) dst[ow * g.stride - g.padding + kj] += src[ow];
        }
      }
    }
  }
}

Index rows_per_tile(const ConvGeometry& g) {
  const Index per_row = std::max<Index>(1, g.patch() * g.out_width);
  return std::clamp<Index>(kColumnBudget / per_row, 1, g.out_height);
}

template <typename S>
void depthwise_forward(const S* x, const S* w, const ConvGeometry& g, S* out) {
  const Index kk = g.kernel * g.kernel;
  for (Index c = 0; c < g.cin; ++c) {
    S* out_c = out + c * g.out_plane();
    for (Index ki = 0; ki < g.kernel; ++ki) {
      for (Index kj = 0; kj < g.kernel; ++kj) {
        const S wv = w[c * kk + ki * g.kernel + kj];
        const auto [lo, hi] = valid_columns(g, kj);
        for (Index oh = 0; oh < g.out_height; ++oh) {
          const Index ih = oh * g.stride - g.padding + ki;
          if (ih < 0 || ih >= g.height) continue;
          const S* src = x + (c * g.height + ih) * g.width;
          const Index shift = kj - g.padding;
          S* dst = out_c + oh * g.out_width;
          for (Index ow = lo; ow < hi; ++ow) dst[ow] += wv * src[ow * g.stride + shift];
        }
      }
    }
  }
}

template <typename S>
void depthwise_backward(const S* x, const S* w, const S* gout, const ConvGeometry& g, S* gx, S* gw) {
  const Index kk = g.kernel * g.kernel;
  for (Index c = 0; c < g.cin; ++c) {
    const S* gout_c = gout + c * g.out_plane();
    for (Index ki = 0; ki < g.kernel; ++ki) {
      for (Index kj = 0; kj < g.kernel; ++kj) {
        const S wv = w[c * kk + ki * g.kernel + kj];
        const auto [lo, hi] = valid_columns(g, kj);
        S acc = 0;
        for (Index oh = 0; oh < g.out_height; ++oh) {
          const Index ih = oh * g.stride - g.padding + ki;
          if (ih < 0 || ih >= g.height) continue;
          const Index base = (c * g.height + ih) * g.width;
          const Index shift = kj - g.padding;
          const S* grow = gout_c + oh * g.out_width;
          if (gw) {
            const S* src = x + base;
            for (Index ow = lo; ow < hi; ++ow) acc += grow[ow] * src[ow * g.stride + shift];
          }
          if (gx) {
            S* dst = gx + base;
            for (Index ow = lo; ow < hi; ++ow) dst[ow * g.stride + shift] += wv * grow[ow];
          }
        }
        if (gw) gw[c * kk + ki * g.kernel + kj] += acc;
      }
    }
  }
}

// outer x n x inner decomposition around one axis.
struct AxisSplit {
  Index outer = 1, extent = 1, inner = 1;
};

AxisSplit axis_split(const Shape& shape, int axis, const char* what) {
  if (axis < 0 || axis >= shape.rank())
    throw ConfigError(std::string(what) + ": axis " + std::to_string(axis) + " invalid for shape " + shape.str());
  AxisSplit s;
  for (int i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (int i = axis + 1; i < shape.rank(); ++i) s.inner *= shape[i];
  return s;
}

Index reflect_index(Index i, Index n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * n - 2 - i;
  return i;
}

void check_padding(const Shape& shape, const Padding& p, PadMode mode) {
  require_rank(shape, 3, "pad");
  if (p.top < 0 || p.bottom < 0 || p.left < 0 || p.right < 0) throw ConfigError("pad: negative padding");
  if (mode == PadMode::kReflect &&
      (p.top >= shape[1] || p.bottom >= shape[1] || p.left >= shape[2] || p.right >= shape[2]))
    throw ConfigError("pad: reflect padding must be smaller than the extent of " + shape.str());
}

}  // namespace

Index conv2d_macs(const Shape& input, const Shape& weight, const Conv2dOptions& options) {
  const ConvGeometry g = conv_geometry(input, weight, options);
  return g.cout * g.patch() * g.out_plane();
}

template <typename S>
Tensor<S> conv2d(const Tensor<S>& input, const Tensor<S>& weight, std::type_identity_t<const Tensor<S>*> bias,
                 const Conv2dOptions& options) {
  const ConvGeometry g = conv_geometry(input.shape(), weight.shape(), options);
  if (bias && (bias->rank() != 1 || bias->dim(0) != g.cout))
    throw ConfigError("conv2d: bias shape " + bias->shape().str() + " does not match output channels " +
                      std::to_string(g.cout));
  Tensor<S> out(Shape{g.cout, g.out_height, g.out_width});
  const Index plane_in = g.height * g.width;
  const Index plane_out = g.out_plane();

  if (g.depthwise()) {
    depthwise_forward(input.data(), weight.data(), g, out.data());
  } else {
    const Index patch = g.patch();
    const Index tile_rows = rows_per_tile(g);
    std::vector<S> cols;
    if (!g.pointwise()) cols.resize(static_cast<std::size_t>(patch * tile_rows * g.out_width));
    for (Index grp = 0; grp < g.groups; ++grp) {
      ConstRowMap<S> w(weight.data() + grp * g.cout_group * patch, g.cout_group, patch, Eigen::OuterStride<>(patch));
      const S* x = input.data() + grp * g.cin_group * plane_in;
      S* o = out.data() + grp * g.cout_group * plane_out;
      if (g.pointwise()) {
        ConstRowMap<S> xm(x, g.cin_group, plane_in, Eigen::OuterStride<>(plane_in));
        RowMap<S> om(o, g.cout_group, plane_out, Eigen::OuterStride<>(plane_out));
        om.noalias() = w * xm;
        continue;
      }
      for (Index r0 = 0; r0 < g.out_height; r0 += tile_rows) {
        const Index r1 = std::min(g.out_height, r0 + tile_rows);
        const Index n = (r1 - r0) * g.out_width;
        im2col(x, g, r0, r1, cols.data());
        ConstRowMap<S> cm(cols.data(), patch, n, Eigen::OuterStride<>(n));
        RowMap<S> om(o + r0 * g.out_width, g.cout_group, n, Eigen::OuterStride<>(plane_out));
        om.noalias() = w * cm;
      }
    }
  }
  if (bias) {
    for (Index c = 0; c < g.cout; ++c) {
      S* o = out.data() + c * plane_out;
      const S b = (*bias)[c];
      for (Index i = 0; i < plane_out; ++i) o[i] += b;
    }
  }
  return out;
}

template <typename S>
void conv2d_backward(const Tensor<S>& input, const Tensor<S>& weight, const Tensor<S>& grad_out,
                     const Conv2dOptions& options, Tensor<S>* grad_input, Tensor<S>* grad_weight,
                     Tensor<S>* grad_bias) {
  const ConvGeometry g = conv_geometry(input.shape(), weight.shape(), options);
  if (grad_out.shape() != Shape{g.cout, g.out_height, g.out_width})
    throw ConfigError("conv2d_backward: gradient shape " + grad_out.shape().str());
  const Index plane_in = g.height * g.width;
  const Index plane_out = g.out_plane();
  if (grad_input) *grad_input = Tensor<S>(input.shape());
  if (grad_weight) *grad_weight = Tensor<S>(weight.shape());
  if (grad_bias) {
    *grad_bias = Tensor<S>(Shape{g.cout});
    for (Index c = 0; c < g.cout; ++c) {
      const S* go = grad_out.data() + c * plane_out;
      S acc = 0;
      for (Index i = 0; i < plane_out; ++i) acc += go[i];
      (*grad_bias)[c] = acc;
    }
  }
  if (!grad_input && !grad_weight) return;

  if (g.depthwise()) {
    depthwise_backward(input.data(), weight.data(), grad_out.data(), g, grad_input ? grad_input->data() : nullptr,
                       grad_weight ? grad_weight->data() : nullptr);
    return;
  }

  const Index patch = g.patch();
  const Index tile_rows = rows_per_tile(g);
  std::vector<S> cols;
  std::vector<S> grad_cols;
  if (!g.pointwise()) {
    cols.resize(static_cast<std::size_t>(patch * tile_rows * g.out_width));
    if (grad_input) grad_cols.resize(cols.size());
  }
  for (Index grp = 0; grp < g.groups; ++grp) {
    ConstRowMap<S> w(weight.data() + grp * g.cout_group * patch, g.cout_group, patch, Eigen::OuterStride<>(patch));
    const S* x = input.data() + grp * g.cin_group * plane_in;
    const S* go = grad_out.data() + grp * g.cout_group * plane_out;
    S* gx = grad_input ? grad_input->data() + grp * g.cin_group * plane_in : nullptr;
    if (g.pointwise()) {
      ConstRowMap<S> gom(go, g.cout_group, plane_out, Eigen::OuterStride<>(plane_out));
      if (grad_weight) {
        ConstRowMap<S> xm(x, g.cin_group, plane_in, Eigen::OuterStride<>(plane_in));
        RowMap<S> gwm(grad_weight->data() + grp * g.cout_group * patch, g.cout_group, patch,
                      Eigen::OuterStride<>(patch));
        gwm.noalias() += gom * xm.transpose();
      }
      if (gx) {
        RowMap<S> gxm(gx, g.cin_group, plane_in, Eigen::OuterStride<>(plane_in));
        gxm.noalias() += w.transpose() * gom;
      }
      continue;
    }
    for (Index r0 = 0; r0 < g.out_height; r0 += tile_rows) {
      const Index r1 = std::min(g.out_height, r0 + tile_rows);
      const Index n = (r1 - r0) * g.out_width;
      ConstRowMap<S> gom(go + r0 * g.out_width, g.cout_group, n, Eigen::OuterStride<>(plane_out));
      if (grad_weight) {
        im2col(x, g, r0, r1, cols.data());
        ConstRowMap<S> cm(cols.data(), patch, n, Eigen::OuterStride<>(n));
        RowMap<S> gwm(grad_weight->data() + grp * g.cout_group * patch, g.cout_group, patch,
                      Eigen::OuterStride<>(patch));
        gwm.noalias() += gom * cm.transpose();
      }
      if (gx) {
        RowMap<S> gcm(grad_cols.data(), patch, n, Eigen::OuterStride<>(n));
        gcm.noalias() = w.transpose() * gom;
        col2im_add(grad_cols.data(), g, r0, r1, gx);
      }
    }
  }
}

template <typename S>
Tensor<S> layer_norm(const Tensor<S>& input, const Tensor<S>& gamma, const Tensor<S>& beta, std::type_identity_t<S> eps) {
  require_rank(input.shape(), 3, "layer_norm input");
  if (!(eps > 0)) throw ConfigError("layer_norm: eps must be positive");
  const Index channels = input.dim(0);
  if (gamma.shape() != Shape{channels} || beta.shape() != Shape{channels})
    throw ConfigError("layer_norm: affine parameters " + gamma.shape().str() + "/" + beta.shape().str() +
                      " do not match channels " + std::to_string(channels));
  const Index plane = input.dim(1) * input.dim(2);
  using Arr = Eigen::Array<S, Eigen::Dynamic, 1>;
  using CMap = Eigen::Map<const Arr>;
  Arr mean = Arr::Zero(plane);
  for (Index c = 0; c < channels; ++c) mean += CMap(input.data() + c * plane, plane);
  mean /= S(channels);
  Arr var = Arr::Zero(plane);
  for (Index c = 0; c < channels; ++c) var += (CMap(input.data() + c * plane, plane) - mean).square();
  var /= S(channels);
  const Arr rstd = (var + eps).rsqrt();
  Tensor<S> out(input.shape());
  for (Index c = 0; c < channels; ++c) {
    Eigen::Map<Arr>(out.data() + c * plane, plane) =
        (CMap(input.data() + c * plane, plane) - mean) * rstd * gamma[c] + beta[c];
  }
  return out;
}

template <typename S>
void layer_norm_backward(const Tensor<S>& input, const Tensor<S>& gamma, std::type_identity_t<S> eps, const Tensor<S>& grad_out,
                         Tensor<S>* grad_input, Tensor<S>* grad_gamma, Tensor<S>* grad_beta) {
  const Index channels = input.dim(0);
  const Index plane = input.dim(1) * input.dim(2);
  using Arr = Eigen::Array<S, Eigen::Dynamic, 1>;
  using CMap = Eigen::Map<const Arr>;
  Arr mean = Arr::Zero(plane);
  for (Index c = 0; c < channels; ++c) mean += CMap(input.data() + c * plane, plane);
  mean /= S(channels);
  Arr var = Arr::Zero(plane);
  for (Index c = 0; c < channels; ++c) var += (CMap(input.data() + c * plane, plane) - mean).square();
  var /= S(channels);
  const Arr rstd = (var + eps).rsqrt();

  if (grad_gamma) *grad_gamma = Tensor<S>(gamma.shape());
  if (grad_beta) *grad_beta = Tensor<S>(gamma.shape());
  Arr mean_g = Arr::Zero(plane);
  Arr mean_gx = Arr::Zero(plane);
  for (Index c = 0; c < channels; ++c) {
    const Arr xhat = (CMap(input.data() + c * plane, plane) - mean) * rstd;
    const auto gy = CMap(grad_out.data() + c * plane, plane);
    if (grad_gamma) (*grad_gamma)[c] = (gy * xhat).sum();
    if (grad_beta) (*grad_beta)[c] = gy.sum();
    mean_g += gy * gamma[c];
    mean_gx += gy * gamma[c] * xhat;
  }
  if (!grad_input) return;
  mean_g /= S(channels);
  mean_gx /= S(channels);
  *grad_input = Tensor<S>(input.shape());
  for (Index c = 0; c < channels; ++c) {
    const Arr xhat = (CMap(input.data() + c * plane, plane) - mean) * rstd;
    const auto gy = CMap(grad_out.data() + c * plane, plane);
    Eigen::Map<Arr>(grad_input->data() + c * plane, plane) = rstd * (gy * gamma[c] - mean_g - xhat * mean_gx);
  }
}

template <typename S>
Tensor<S> gelu(const Tensor<S>& x) {
  Tensor<S> out(x.shape());
  const S inv_sqrt2 = S(1) / std::numbers::sqrt2_v<S>;
  for (Index i = 0; i < x.size(); ++i) out[i] = S(0.5) * x[i] * (S(1) + std::erf(x[i] * inv_sqrt2));
  return out;
}

template <typename S>
Tensor<S> gelu_derivative(const Tensor<S>& x) {
  Tensor<S> out(x.shape());
  const S inv_sqrt2 = S(1) / std::numbers::sqrt2_v<S>;
  const S inv_sqrt2pi = std::numbers::inv_sqrtpi_v<S> * inv_sqrt2;
  for (Index i = 0; i < x.size(); ++i) {
    const S cdf = S(0.5) * (S(1) + std::erf(x[i] * inv_sqrt2));
    const S pdf = inv_sqrt2pi * std::exp(S(-0.5) * x[i] * x[i]);
    out[i] = cdf + x[i] * pdf;
  }
  return out;
}

template <typename S>
Tensor<S> leaky_relu(const Tensor<S>& x, std::type_identity_t<S> slope) {
  Tensor<S> out(x.shape());
  for (Index i = 0; i < x.size(); ++i) out[i] = x[i] > 0 ? x[i] : slope * x[i];
  return out;
}

template <typename S>
Tensor<S> softmax(const Tensor<S>& x, int axis) {
  const AxisSplit s = axis_split(x.shape(), axis, "softmax");
  Tensor<S> out(x.shape());
  for (Index o = 0; o < s.outer; ++o) {
    for (Index i = 0; i < s.inner; ++i) {
      const S* src = x.data() + o * s.extent * s.inner + i;
      S* dst = out.data() + o * s.extent * s.inner + i;
      S peak = src[0];
      for (Index k = 1; k < s.extent; ++k) peak = std::max(peak, src[k * s.inner]);
      S total = 0;
      for (Index k = 0; k < s.extent; ++k) {
        dst[k * s.inner] = std::exp(src[k * s.inner] - peak);
        total += dst[k * s.inner];
      }
      const S inv = S(1) / total;
      for (Index k = 0; k < s.extent; ++k) dst[k * s.inner] *= inv;
    }
  }
  return out;
}

template <typename S>
Tensor<S> softmax_backward(const Tensor<S>& y, const Tensor<S>& grad_out, int axis) {
  const AxisSplit s = axis_split(y.shape(), axis, "softmax");
  Tensor<S> out(y.shape());
  for (Index o = 0; o < s.outer; ++o) {
    for (Index i = 0; i < s.inner; ++i) {
      const Index base = o * s.extent * s.inner + i;
      S dot = 0;
      for (Index k = 0; k < s.extent; ++k) dot += y[base + k * s.inner] * grad_out[base + k * s.inner];
      for (Index k = 0; k < s.extent; ++k) {
        const Index idx = base + k * s.inner;
        out[idx] = y[idx] * (grad_out[idx] - dot);
      }
    }
  }
  return out;
}

template <typename S>
Tensor<S> pixel_unshuffle(const Tensor<S>& x, int factor) {
  require_rank(x.shape(), 3, "pixel_unshuffle");
  if (factor < 1) throw ConfigError("pixel_unshuffle: factor must be positive");
  const Index c = x.dim(0), h = x.dim(1), w = x.dim(2), r = factor;
  if (h % r != 0) throw ConfigError("pixel_unshuffle: height " + std::to_string(h) + " not divisible by " + std::to_string(r));
  if (w % r != 0) throw ConfigError("pixel_unshuffle: width " + std::to_string(w) + " not divisible by " + std::to_string(r));
  const Index oh = h / r, ow = w / r;
  Tensor<S> out(Shape{c * r * r, oh, ow});
  for (Index ch = 0; ch < c; ++ch)
    for (Index i = 0; i < r; ++i)
      for (Index j = 0; j < r; ++j) {
        S* dst = out.data() + ((ch * r + i) * r + j) * oh * ow;
        for (Index y = 0; y < oh; ++y) {
          const S* src = x.data() + (ch * h + y * r + i) * w + j;
          for (Index xw = 0; xw < ow; ++xw) dst[y * ow + xw] = src[xw * r];
        }
      }
  return out;
}

template <typename S>
Tensor<S> pixel_shuffle(const Tensor<S>& x, int factor) {
  require_rank(x.shape(), 3, "pixel_shuffle");
  if (factor < 1) throw ConfigError("pixel_shuffle: factor must be positive");
  const Index r = factor, rr = r * r;
  if (x.dim(0) % rr != 0)
    throw ConfigError("pixel_shuffle: channels " + std::to_string(x.dim(0)) + " not divisible by " + std::to_string(rr));
  const Index c = x.dim(0) / rr, ih = x.dim(1), iw = x.dim(2);
  const Index h = ih * r, w = iw * r;
  Tensor<S> out(Shape{c, h, w});
  for (Index ch = 0; ch < c; ++ch)
    for (Index i = 0; i < r; ++i)
      for (Index j = 0; j < r; ++j) {
        const S* src = x.data() + ((ch * r + i) * r + j) * ih * iw;
        for (Index y = 0; y < ih; ++y) {
          S* dst = out.data() + (ch * h + y * r + i) * w + j;
          for (Index xw = 0; xw < iw; ++xw) dst[xw * r] = src[y * iw + xw];
        }
      }
  return out;
}

template <typename S>
Tensor<S> window_partition(const Tensor<S>& x, Index dh, Index dw) {
  require_rank(x.shape(), 3, "window_partition");
  const Index c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (dh < 1 || dw < 1 || h % dh != 0 || w % dw != 0)
    throw ConfigError("window_partition: window [" + std::to_string(dh) + "," + std::to_string(dw) +
                      "] does not tile map H=" + std::to_string(h) + " W=" + std::to_string(w));
  const Index gw = w / dw;
  const Index count = (h / dh) * gw;
  const Index area = dh * dw;
  Tensor<S> out(Shape{count, area, c});
  for (Index ch = 0; ch < c; ++ch) {
    for (Index y = 0; y < h; ++y) {
      const S* src = x.data() + (ch * h + y) * w;
      const Index wy = y / dh, iy = y % dh;
      for (Index xw = 0; xw < w; ++xw) {
        const Index n = wy * gw + xw / dw;
        const Index a = iy * dw + xw % dw;
        out.data()[(n * area + a) * c + ch] = src[xw];
      }
    }
  }
  return out;
}

template <typename S>
Tensor<S> window_merge(const Tensor<S>& windows, Index height, Index width, Index dh, Index dw) {
  require_rank(windows.shape(), 3, "window_merge");
  if (dh < 1 || dw < 1 || height % dh != 0 || width % dw != 0)
    throw ConfigError("window_merge: window [" + std::to_string(dh) + "," + std::to_string(dw) +
                      "] does not tile map H=" + std::to_string(height) + " W=" + std::to_string(width));
  const Index gw = width / dw;
  const Index area = dh * dw;
  if (windows.dim(0) != (height / dh) * gw || windows.dim(1) != area)
    throw ConfigError("window_merge: windows shape " + windows.shape().str() + " inconsistent with map");
  const Index c = windows.dim(2);
  Tensor<S> out(Shape{c, height, width});
  for (Index ch = 0; ch < c; ++ch) {
    for (Index y = 0; y < height; ++y) {
      S* dst = out.data() + (ch * height + y) * width;
      const Index wy = y / dh, iy = y % dh;
      for (Index xw = 0; xw < width; ++xw) {
        const Index n = wy * gw + xw / dw;
        const Index a = iy * dw + xw % dw;
        dst[xw] = windows.data()[(n * area + a) * c + ch];
      }
    }
  }
  return out;
}

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape()) throw ConfigError("add: shapes " + a.shape().str() + " and " + b.shape().str());
  Tensor<S> out(a.shape());
  out.array() = a.array() + b.array();
  return out;
}

template <typename S>
Tensor<S> multiply(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape()) throw ConfigError("multiply: shapes " + a.shape().str() + " and " + b.shape().str());
  Tensor<S> out(a.shape());
  out.array() = a.array() * b.array();
  return out;
}

template <typename S>
Tensor<S> scale(const Tensor<S>& x, std::type_identity_t<S> factor) {
  Tensor<S> out(x.shape());
  out.array() = x.array() * factor;
  return out;
}

template <typename S>
Tensor<S> concat(const std::vector<Tensor<S>>& parts, int axis) {
  if (parts.empty()) throw ConfigError("concat: no inputs");
  const Shape& first = parts.front().shape();
  std::vector<Index> extents = first.extents();
  axis_split(first, axis, "concat");
  Index total = 0;
  for (const auto& p : parts) {
    if (p.rank() != first.rank()) throw ConfigError("concat: rank mismatch " + p.shape().str() + " vs " + first.str());
    for (int d = 0; d < first.rank(); ++d)
      if (d != axis && p.dim(d) != first[d])
        throw ConfigError("concat: dimension " + std::to_string(d) + " mismatch " + p.shape().str() + " vs " +
                          first.str());
    total += p.dim(axis);
  }
  extents[static_cast<std::size_t>(axis)] = total;
  Tensor<S> out{Shape(extents)};
  Index offset = 0;
  for (const auto& p : parts) {
    slice_add(out, p, axis, offset);
    offset += p.dim(axis);
  }
  return out;
}

template <typename S>
Tensor<S> slice(const Tensor<S>& x, int axis, Index begin, Index count) {
  const AxisSplit s = axis_split(x.shape(), axis, "slice");
  if (begin < 0 || count < 1 || begin + count > s.extent)
    throw ConfigError("slice: range [" + std::to_string(begin) + "," + std::to_string(begin + count) +
                      ") outside extent " + std::to_string(s.extent));
  std::vector<Index> extents = x.shape().extents();
  extents[static_cast<std::size_t>(axis)] = count;
  Tensor<S> out{Shape(extents)};
  const Index chunk = count * s.inner;
  for (Index o = 0; o < s.outer; ++o) {
    const S* src = x.data() + (o * s.extent + begin) * s.inner;
    std::copy(src, src + chunk, out.data() + o * chunk);
  }
  return out;
}

template <typename S>
void slice_add(Tensor<S>& target, const Tensor<S>& part, int axis, Index begin) {
  const AxisSplit s = axis_split(target.shape(), axis, "slice_add");
  const Index count = part.dim(axis);
  if (begin < 0 || begin + count > s.extent) throw ConfigError("slice_add: range outside target extent");
  const Index chunk = count * s.inner;
  for (Index o = 0; o < s.outer; ++o) {
    S* dst = target.data() + (o * s.extent + begin) * s.inner;
    const S* src = part.data() + o * chunk;
    for (Index i = 0; i < chunk; ++i) dst[i] += src[i];
  }
}

template <typename S>
std::vector<Tensor<S>> split(const Tensor<S>& x, int axis, const std::vector<Index>& sizes) {
  const AxisSplit s = axis_split(x.shape(), axis, "split");
  Index total = 0;
  for (Index n : sizes) total += n;
  if (total != s.extent)
    throw ConfigError("split: parts sum to " + std::to_string(total) + " but extent is " + std::to_string(s.extent));
  std::vector<Tensor<S>> out;
  Index offset = 0;
  for (Index n : sizes) {
    out.push_back(slice(x, axis, offset, n));
    offset += n;
  }
  return out;
}

template <typename S>
Tensor<S> pad(const Tensor<S>& x, const Padding& padding, PadMode mode) {
  check_padding(x.shape(), padding, mode);
  const Index c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const Index oh = h + padding.top + padding.bottom, ow = w + padding.left + padding.right;
  Tensor<S> out(Shape{c, oh, ow});
  for (Index ch = 0; ch < c; ++ch)
    for (Index y = 0; y < oh; ++y) {
      const Index sy = y - padding.top;
      if (mode == PadMode::kZero && (sy < 0 || sy >= h)) continue;
      const Index ry = reflect_index(sy, h);
      for (Index xw = 0; xw < ow; ++xw) {
        const Index sx = xw - padding.left;
        if (mode == PadMode::kZero && (sx < 0 || sx >= w)) continue;
        out(ch, y, xw) = x(ch, ry, reflect_index(sx, w));
      }
    }
  return out;
}

template <typename S>
Tensor<S> pad_backward(const Tensor<S>& grad_out, const Shape& input_shape, const Padding& padding, PadMode mode) {
  check_padding(input_shape, padding, mode);
  const Index c = input_shape[0], h = input_shape[1], w = input_shape[2];
  const Index oh = grad_out.dim(1), ow = grad_out.dim(2);
  Tensor<S> out(input_shape);
  for (Index ch = 0; ch < c; ++ch)
    for (Index y = 0; y < oh; ++y) {
      const Index sy = y - padding.top;
      if (mode == PadMode::kZero && (sy < 0 || sy >= h)) continue;
      const Index ry = reflect_index(sy, h);
      for (Index xw = 0; xw < ow; ++xw) {
        const Index sx = xw - padding.left;
        if (mode == PadMode::kZero && (sx < 0 || sx >= w)) continue;
        out(ch, ry, reflect_index(sx, w)) += grad_out(ch, y, xw);
      }
    }
  return out;
}

template <typename S>
Tensor<S> crop(const Tensor<S>& x, Index top, Index left, Index height, Index width) {
  require_rank(x.shape(), 3, "crop");
  if (top < 0 || left < 0 || height < 1 || width < 1 || top + height > x.dim(1) || left + width > x.dim(2))
    throw ConfigError("crop: window (" + std::to_string(top) + "," + std::to_string(left) + ") " +
                      std::to_string(height) + "x" + std::to_string(width) + " outside map " + x.shape().str());
  const Index c = x.dim(0);
  Tensor<S> out(Shape{c, height, width});
  for (Index ch = 0; ch < c; ++ch)
    for (Index y = 0; y < height; ++y) {
      const S* src = x.data() + (ch * x.dim(1) + top + y) * x.dim(2) + left;
      std::copy(src, src + width, out.data() + (ch * height + y) * width);
    }
  return out;
}

template <typename S>
Tensor<S> crop(const Tensor<S>& x, const Padding& padding) {
  require_rank(x.shape(), 3, "crop");
  return crop(x, padding.top, padding.left, x.dim(1) - padding.top - padding.bottom,
              x.dim(2) - padding.left - padding.right);
}

template <typename S>
Tensor<S> matmul_batched(const Tensor<S>& a, const Tensor<S>& b, bool transpose_a, bool transpose_b) {
  require_rank(a.shape(), 3, "matmul_batched lhs");
  require_rank(b.shape(), 3, "matmul_batched rhs");
  if (a.dim(0) != b.dim(0)) throw ConfigError("matmul_batched: batch " + dims(a.dim(0), b.dim(0)));
  const Index batch = a.dim(0);
  const Index m = transpose_a ? a.dim(2) : a.dim(1);
  const Index k = transpose_a ? a.dim(1) : a.dim(2);
  const Index kb = transpose_b ? b.dim(2) : b.dim(1);
  const Index n = transpose_b ? b.dim(1) : b.dim(2);
  if (k != kb) throw ConfigError("matmul_batched: inner dimension " + dims(k, kb));
  Tensor<S> out(Shape{batch, m, n});
  const Index sa = a.dim(1) * a.dim(2), sb = b.dim(1) * b.dim(2), so = m * n;
  for (Index i = 0; i < batch; ++i) {
    ConstRowMap<S> am(a.data() + i * sa, a.dim(1), a.dim(2), Eigen::OuterStride<>(a.dim(2)));
    ConstRowMap<S> bm(b.data() + i * sb, b.dim(1), b.dim(2), Eigen::OuterStride<>(b.dim(2)));
    RowMap<S> om(out.data() + i * so, m, n, Eigen::OuterStride<>(n));
    if (!transpose_a && !transpose_b)
      om.noalias() = am * bm;
    else if (!transpose_a)
      om.noalias() = am * bm.transpose();
    else if (!transpose_b)
      om.noalias() = am.transpose() * bm;
    else
      om.noalias() = am.transpose() * bm.transpose();
  }
  return out;
}

template <typename S>
Tensor<S> permute(const Tensor<S>& x, const std::vector<int>& order) {
  const int rank = x.rank();
  if (static_cast<int>(order.size()) != rank) throw ConfigError("permute: order length does not match rank");
  std::vector<bool> seen(static_cast<std::size_t>(rank), false);
  for (int axis : order) {
    if (axis < 0 || axis >= rank || seen[static_cast<std::size_t>(axis)])
      throw ConfigError("permute: order is not a permutation");
    seen[static_cast<std::size_t>(axis)] = true;
  }
  std::vector<Index> in_strides(static_cast<std::size_t>(rank), 1);
  for (int d = rank - 2; d >= 0; --d)
    in_strides[static_cast<std::size_t>(d)] = in_strides[static_cast<std::size_t>(d + 1)] * x.dim(d + 1);
  std::vector<Index> out_extents(static_cast<std::size_t>(rank));
  std::vector<Index> strides(static_cast<std::size_t>(rank));
  for (int d = 0; d < rank; ++d) {
    out_extents[static_cast<std::size_t>(d)] = x.dim(order[static_cast<std::size_t>(d)]);
    strides[static_cast<std::size_t>(d)] = in_strides[static_cast<std::size_t>(order[static_cast<std::size_t>(d)])];
  }
  Tensor<S> out{Shape(out_extents)};
  if (rank == 0) {
    out[0] = x[0];
    return out;
  }
  const Index inner = out_extents.back();
  const Index inner_stride = strides.back();
  std::vector<Index> counter(static_cast<std::size_t>(rank), 0);
  Index src = 0;
  for (Index dst = 0; dst < out.size(); dst += inner) {
    for (Index i = 0; i < inner; ++i) out[dst + i] = x[src + i * inner_stride];
    for (int d = rank - 2; d >= 0; --d) {
      auto du = static_cast<std::size_t>(d);
      ++counter[du];
      src += strides[du];
      if (counter[du] < out_extents[du]) break;
      src -= strides[du] * out_extents[du];
      counter[du] = 0;
    }
  }
  return out;
}

#define SDFORMER_INSTANTIATE_KERNELS(S)                                                                           \
  template Tensor<S> conv2d(const Tensor<S>&, const Tensor<S>&, std::type_identity_t<const Tensor<S>*>, const Conv2dOptions&);          \
  template void conv2d_backward(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, const Conv2dOptions&,        \
                                Tensor<S>*, Tensor<S>*, Tensor<S>*);                                              \
  template Tensor<S> layer_norm(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, std::type_identity_t<S>);                         \
  template void layer_norm_backward(const Tensor<S>&, const Tensor<S>&, std::type_identity_t<S>, const Tensor<S>&, Tensor<S>*,          \
                                    Tensor<S>*, Tensor<S>*);                                                      \
  template Tensor<S> gelu(const Tensor<S>&);                                                                      \
  template Tensor<S> gelu_derivative(const Tensor<S>&);                                                           \
  template Tensor<S> leaky_relu(const Tensor<S>&, std::type_identity_t<S>);                                                             \
  template Tensor<S> softmax(const Tensor<S>&, int);                                                              \
  template Tensor<S> softmax_backward(const Tensor<S>&, const Tensor<S>&, int);                                   \
  template Tensor<S> pixel_unshuffle(const Tensor<S>&, int);                                                      \
  template Tensor<S> pixel_shuffle(const Tensor<S>&, int);                                                        \
  template Tensor<S> window_partition(const Tensor<S>&, Index, Index);                                            \
  template Tensor<S> window_merge(const Tensor<S>&, Index, Index, Index, Index);                                  \
  template Tensor<S> add(const Tensor<S>&, const Tensor<S>&);                                                     \
  template Tensor<S> multiply(const Tensor<S>&, const Tensor<S>&);                                                \
  template Tensor<S> scale(const Tensor<S>&, std::type_identity_t<S>);                                                                  \
  template Tensor<S> concat(const std::vector<Tensor<S>>&, int);                                                  \
  template std::vector<Tensor<S>> split(const Tensor<S>&, int, const std::vector<Index>&);                        \
  template Tensor<S> slice(const Tensor<S>&, int, Index, Index);                                                  \
  template void slice_add(Tensor<S>&, const Tensor<S>&, int, Index);                                              \
  template Tensor<S> pad(const Tensor<S>&, const Padding&, PadMode);                                              \
  template Tensor<S> pad_backward(const Tensor<S>&, const Shape&, const Padding&, PadMode);                       \
  template Tensor<S> crop(const Tensor<S>&, const Padding&);                                                      \
  template Tensor<S> crop(const Tensor<S>&, Index, Index, Index, Index);                                          \
  template Tensor<S> matmul_batched(const Tensor<S>&, const Tensor<S>&, bool, bool);                              \
  template Tensor<S> permute(const Tensor<S>&, const std::vector<int>&);

SDFORMER_INSTANTIATE_KERNELS(float)
SDFORMER_INSTANTIATE_KERNELS(double)

#undef SDFORMER_INSTANTIATE_KERNELS

}  // namespace sdformer
