#include "sdformer/cli/heatmap.hpp"

#include <algorithm>
#include <cmath>

#include "sdformer/error.hpp"

namespace sdformer {

Rgb8 jet(double t) {
  static constexpr double knots[5][3] = {{0, 0, 1}, {0, 1, 1}, {0, 1, 0}, {1, 1, 0}, {1, 0, 0}};
  t = std::clamp(std::isnan(t) ? 0.0 : t, 0.0, 1.0);
  const double x = t * 4;
  const int i = std::min(3, static_cast<int>(x));
  const double f = x - i;
  Rgb8 out;
  for (int c = 0; c < 3; ++c) {
    const double v = knots[i][c] + f * (knots[i + 1][c] - knots[i][c]);
    out[c] = static_cast<std::uint8_t>(std::lround(255 * v));
  }
  return out;
}

void validate(const HeatmapOptions& o) {
  if (!(o.min < o.max)) throw ConfigError("heatmap: min must be below max");
  if (o.dilate < 1 || o.dilate % 2 == 0) throw ConfigError("heatmap: dilate must be an odd positive integer");
}

Tensor<float> render_heatmap(const Tensor<float>& depth, const HeatmapOptions& o) {
  validate(o);
  if (depth.rank() != 3 || depth.dim(0) != 1) throw ConfigError("heatmap: expected a 1 x H x W depth map");
  const Index h = depth.dim(1), w = depth.dim(2), r = o.dilate / 2;
  Tensor<float> out(Shape{3, h, w});
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      float d = depth[y * w + x];
      if (!(d > 0) && r > 0) {
        // Scan rings of growing Chebyshev radius; the first hit in row-major order wins.
        for (Index dist = 1; dist <= r && !(d > 0); ++dist) {
          for (Index yy = std::max<Index>(0, y - dist); yy <= std::min(h - 1, y + dist) && !(d > 0); ++yy) {
            for (Index xx = std::max<Index>(0, x - dist); xx <= std::min(w - 1, x + dist); ++xx) {
              if (std::max(std::abs(yy - y), std::abs(xx - x)) != dist) continue;
              if (depth[yy * w + xx] > 0) {
                d = depth[yy * w + xx];
                break;
              }
            }
          }
        }
      }
      if (!(d > 0)) continue;
      const Rgb8 c = jet((d - o.min) / (o.max - o.min));
      for (int k = 0; k < 3; ++k) out[(k * h + y) * w + x] = c[k] / 255.0f;
    }
  }
  return out;
}

}  // namespace sdformer
