#pragma once

#include <string>

#include "sdformer/datakit/sample.hpp"

namespace sdformer {

enum class PreprocessTarget { kNyuLike, kKittiLike };

inline constexpr Index kNyuHeight = 228, kNyuWidth = 304;
inline constexpr Index kKittiHeight = 320, kKittiWidth = 1216;
inline constexpr Index kKittiSkipRows = 20;

/// Crops every map to height x width around the center (offsets floor the
/// surplus / 2). Throws ConfigError when the sample is smaller.
Sample center_crop(const Sample& sample, Index height, Index width);

/// Halves resolution: RGB by 2x2 averaging, depth by picking one pixel per
/// 2x2 block (the first with valid sparse depth, else the first with valid
/// gt), which keeps sparse a subset of gt.
Sample half_downsample(const Sample& sample);

/// nyu_like: half_downsample, then center crop to 304x228.
/// kitti_like: drop the top 20 rows, then center crop to 1216x320.
Sample preprocess(const Sample& sample, PreprocessTarget target);

PreprocessTarget parse_preprocess_target(const std::string& name);

}  // namespace sdformer
