#pragma once

#include "sdformer/numerics/autodiff.hpp"

namespace sdformer {

/// Sum over pixels with mask > 0 of |pred - gt| + (pred - gt)^2.
template <typename Scalar>
Var<Scalar> masked_error_sum(const Var<Scalar>& pred, const Tensor<Scalar>& gt, const Tensor<Scalar>& mask);

/// Mean L1 plus mean L2 over valid pixels. Throws ConfigError on an empty mask.
template <typename Scalar>
Var<Scalar> completion_loss(const Var<Scalar>& pred, const Tensor<Scalar>& gt, const Tensor<Scalar>& mask);

/// Number of pixels with mask > 0.
template <typename Scalar>
Index valid_count(const Tensor<Scalar>& mask);

}  // namespace sdformer
