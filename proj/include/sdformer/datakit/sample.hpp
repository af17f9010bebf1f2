#pragma once

#include <string>

#include "sdformer/numerics/tensor.hpp"

namespace sdformer {

/// One depth-completion instance. Depths are meters with 0 marking invalid.
struct Sample {
  std::string id;
  Tensor<float> rgb;     // 3 x H x W in [0, 1]
  Tensor<float> sparse;  // 1 x H x W
  Tensor<float> gt;      // 1 x H x W

  Index height() const { return gt.dim(1); }
  Index width() const { return gt.dim(2); }
};

/// Checks shapes, finiteness, non-negative depth and that every valid sparse
/// pixel equals gt there. Throws FormatError.
void validate_sample(const Sample& sample);

/// 1 where depth > 0, else 0.
Tensor<float> valid_mask(const Tensor<float>& depth);

}  // namespace sdformer
