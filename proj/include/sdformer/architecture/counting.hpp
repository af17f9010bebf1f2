#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sdformer/architecture/config.hpp"

namespace sdformer {

struct ParamCount {
  Index total = 0;
  /// Subtotals keyed by top-level module (input, encoder1, down1, ..., output).
  std::vector<std::pair<std::string, Index>> modules;
};

/// Sums the element counts of the weight layout.
ParamCount count_params(const ModelConfig& config);

/// Parameters of one block at `channels` with hidden width `hidden`:
/// 4c (two LNs) + 4c^2 + 27c (qkv, depthwise qkv, proj) + ffn, where the
/// GFFN adds 3hc + 18h and the MLP adds 2hc.
Index block_params(Index channels, Index hidden, FfnVariant ffn);
/// Closed-form total assembled from block_params and the resampling convs.
Index closed_form_params(const ModelConfig& config);

struct MacCount {
  Index conv = 0;
  /// Score and value products: 2 * A * H * W * (C/3) per branch for windows of area A.
  Index attention = 0;
  Index macs() const { return conv + attention; }
  double flops() const { return 2.0 * static_cast<double>(macs()); }
};

/// Analytic multiply-accumulate count of one forward pass at height x width.
/// Normalization, activations and softmax are excluded.
MacCount count_macs(const ModelConfig& config, Index height, Index width);

}  // namespace sdformer
