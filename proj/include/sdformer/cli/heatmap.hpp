#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "sdformer/numerics/tensor.hpp"

namespace sdformer {

using Rgb8 = std::array<std::uint8_t, 3>;

/// Piecewise-linear jet through five knots at t = 0, 1/4, 1/2, 3/4, 1:
/// blue (0,0,1), cyan (0,1,1), green (0,1,0), yellow (1,1,0), red (1,0,0).
/// t is clamped to [0, 1]; channels are round(255 * c).
Rgb8 jet(double t);

struct HeatmapOptions {
  double min = 0;
  double max = 10;
  /// Odd side of the square each valid pixel is grown to; 1 disables.
  int dilate = 1;
};

/// 3 x H x W colors in [0, 1] for a 1 x H x W depth map. Depth maps linearly
/// from [min, max] onto the colormap; pixels with depth <= 0 are black. When
/// dilating, an invalid pixel takes the value of the closest valid pixel
/// (Chebyshev distance, then row-major order) within the square.
Tensor<float> render_heatmap(const Tensor<float>& depth, const HeatmapOptions& options);

/// Throws ConfigError unless min < max and dilate is odd and positive.
void validate(const HeatmapOptions& options);

}  // namespace sdformer
