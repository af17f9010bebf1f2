#pragma once

#include <string>

#include "sdformer/architecture/config.hpp"
#include "sdformer/architecture/weights.hpp"

namespace sdformer {

/// Multiply-accumulates executed by a forward pass.
struct MacTally {
  Index conv = 0;
  Index attention = 0;
  Index total() const { return conv + attention; }
};

inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kLeakySlope = 0.2;

/// Multi-head softmax(q k^T / sqrt(d)) v inside each window. q, k, v are
/// N x A x D window sequences; D is split evenly across heads.
template <typename Scalar>
Var<Scalar> window_attention(const Var<Scalar>& q, const Var<Scalar>& k, const Var<Scalar>& v, int heads,
                             MacTally* tally = nullptr);

/// Three-branch window attention, including the qkv and output projections.
template <typename Scalar>
Var<Scalar> dwsa(const Var<Scalar>& x, const ParameterSet<Scalar>& params, const std::string& prefix,
                 const BlockSpec& spec, MacTally* tally = nullptr);

/// GFFN or MLP depending on spec.ffn.
template <typename Scalar>
Var<Scalar> feed_forward(const Var<Scalar>& x, const ParameterSet<Scalar>& params, const std::string& prefix,
                         const BlockSpec& spec, MacTally* tally = nullptr);

/// x + attn(LN(x)), then + ffn(LN(.)).
template <typename Scalar>
Var<Scalar> sdformer_block(const Var<Scalar>& x, const ParameterSet<Scalar>& params, const std::string& prefix,
                           const BlockSpec& spec, MacTally* tally = nullptr);

template <typename Scalar>
Var<Scalar> input_module(const Var<Scalar>& sparse, const Var<Scalar>& rgb, const ParameterSet<Scalar>& params,
                         MacTally* tally = nullptr);

/// Reflect-pads by `pad`, halves channels with a 3x3 conv, then unshuffles.
template <typename Scalar>
Var<Scalar> downsample(const Var<Scalar>& x, const ParameterSet<Scalar>& params, const std::string& prefix,
                       const Padding& pad, MacTally* tally = nullptr);

/// Doubles channels with a 3x3 conv, shuffles, then removes `pad`.
template <typename Scalar>
Var<Scalar> upsample(const Var<Scalar>& x, const ParameterSet<Scalar>& params, const std::string& prefix,
                     const Padding& pad, MacTally* tally = nullptr);

/// Dense 1 x H x W depth from a 1 x H x W sparse map and a 3 x H x W image.
template <typename Scalar>
Var<Scalar> model_forward(const ModelConfig& config, const ParameterSet<Scalar>& params, const Var<Scalar>& sparse,
                          const Var<Scalar>& rgb, MacTally* tally = nullptr);

/// Inference without a trace.
template <typename Scalar>
Tensor<Scalar> predict(const ModelConfig& config, const ModelWeights<Scalar>& weights, const Tensor<Scalar>& sparse,
                       const Tensor<Scalar>& rgb);

}  // namespace sdformer
