#include "sdformer/datakit/preprocess.hpp"

#include "sdformer/error.hpp"

namespace sdformer {
namespace {

Tensor<float> crop_map(const Tensor<float>& t, Index top, Index left, Index height, Index width) {
  const Index channels = t.dim(0), w = t.dim(2), plane = t.dim(1) * w;
  Tensor<float> out(Shape{channels, height, width});
  for (Index c = 0; c < channels; ++c) {
    for (Index y = 0; y < height; ++y) {
      for (Index x = 0; x < width; ++x) out[(c * height + y) * width + x] = t[c * plane + (top + y) * w + left + x];
    }
  }
  return out;
}

Sample crop_sample(const Sample& s, Index top, Index left, Index height, Index width) {
  return {s.id, crop_map(s.rgb, top, left, height, width), crop_map(s.sparse, top, left, height, width),
          crop_map(s.gt, top, left, height, width)};
}

}  // namespace

Sample center_crop(const Sample& s, Index height, Index width) {
  if (s.height() < height || s.width() < width) {
    throw ConfigError("crop: input " + std::to_string(s.width()) + "x" + std::to_string(s.height()) +
                      " is smaller than " + std::to_string(width) + "x" + std::to_string(height));
  }
  return crop_sample(s, (s.height() - height) / 2, (s.width() - width) / 2, height, width);
}

Sample half_downsample(const Sample& s) {
  const Index h = s.height() / 2, w = s.width() / 2, sw = s.width(), splane = s.height() * sw;
  Sample out{s.id, Tensor<float>(Shape{3, h, w}), Tensor<float>(Shape{1, h, w}), Tensor<float>(Shape{1, h, w})};
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      const Index block[4] = {2 * y * sw + 2 * x, 2 * y * sw + 2 * x + 1, (2 * y + 1) * sw + 2 * x,
                              (2 * y + 1) * sw + 2 * x + 1};
      for (Index c = 0; c < 3; ++c) {
        float acc = 0;
        for (Index k : block) acc += s.rgb[c * splane + k];
        out.rgb[(c * h + y) * w + x] = acc / 4;
      }
      Index pick = -1;
      for (Index k : block) {
        if (s.sparse[k] > 0) {
          pick = k;
          break;
        }
      }
      for (Index k : block) {
        if (pick < 0 && s.gt[k] > 0) pick = k;
      }
      if (pick >= 0) {
        out.gt[y * w + x] = s.gt[pick];
        out.sparse[y * w + x] = s.sparse[pick];
      }
    }
  }
  return out;
}

Sample preprocess(const Sample& s, PreprocessTarget target) {
  if (target == PreprocessTarget::kNyuLike) {
    if (s.height() < 2 * kNyuHeight || s.width() < 2 * kNyuWidth) {
      throw ConfigError("preprocess nyu_like: input " + std::to_string(s.width()) + "x" + std::to_string(s.height()) +
                        " is smaller than " + std::to_string(2 * kNyuWidth) + "x" + std::to_string(2 * kNyuHeight));
    }
    return center_crop(half_downsample(s), kNyuHeight, kNyuWidth);
  }
  if (s.height() < kKittiHeight + kKittiSkipRows || s.width() < kKittiWidth) {
    throw ConfigError("preprocess kitti_like: input " + std::to_string(s.width()) + "x" + std::to_string(s.height()) +
                      " is smaller than " + std::to_string(kKittiWidth) + "x" +
                      std::to_string(kKittiHeight + kKittiSkipRows));
  }
  const Sample below = crop_sample(s, kKittiSkipRows, 0, s.height() - kKittiSkipRows, s.width());
  return center_crop(below, kKittiHeight, kKittiWidth);
}

PreprocessTarget parse_preprocess_target(const std::string& name) {
  if (name == "nyu_like") return PreprocessTarget::kNyuLike;
  if (name == "kitti_like") return PreprocessTarget::kKittiLike;
  throw ConfigError("unknown preprocessing target \"" + name + "\" (expected nyu_like or kitti_like)");
}

}  // namespace sdformer
