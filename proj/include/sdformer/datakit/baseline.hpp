#pragma once

#include "sdformer/datakit/sample.hpp"

namespace sdformer {

/// Each pixel takes the depth of the nearest valid sparse pixel (Euclidean
/// distance, ties to the earliest in row-major order). All zeros when the
/// sparse map is empty.
Tensor<float> nearest_fill(const Tensor<float>& sparse);

}  // namespace sdformer
