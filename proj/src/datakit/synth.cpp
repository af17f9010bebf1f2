#include "sdformer/datakit/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>

#include "sdformer/error.hpp"

namespace sdformer {
namespace {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  // Built on raw engine output so draws do not depend on the library's distributions.
  double uniform(double lo, double hi) { return lo + (hi - lo) * (double(engine_() >> 11) * 0x1.0p-53); }
  Index index(Index n) { return static_cast<Index>(engine_() % static_cast<std::uint64_t>(n)); }

 private:
  std::mt19937_64 engine_;
};

enum class Shape3 { kBox, kSphere, kSlab };

struct Object {
  Shape3 kind;
  double cx, cy;        // center in pixels
  double hx, hy;        // half extents (radius for spheres) in pixels
  double z;             // depth at the center
  double gx, gy;        // slab slope in meters per pixel
  std::array<double, 3> albedo;
};

// Depth of object `o` at pixel (x, y), or +inf when the pixel misses it.
double object_depth(const Object& o, double x, double y, double pitch) {
  const double dx = x - o.cx, dy = y - o.cy;
  switch (o.kind) {
    case Shape3::kBox:
      return std::abs(dx) <= o.hx && std::abs(dy) <= o.hy ? o.z : INFINITY;
    case Shape3::kSlab:
      return std::abs(dx) <= o.hx && std::abs(dy) <= o.hy ? o.z + o.gx * dx + o.gy * dy : INFINITY;
    case Shape3::kSphere: {
      const double r2 = o.hx * o.hx - dx * dx - dy * dy;
      return r2 >= 0 ? o.z - std::sqrt(r2) * pitch : INFINITY;
    }
  }
  return INFINITY;
}

}  // namespace

Scene gen_scene(std::uint64_t seed, Index height, Index width) {
  if (height < 16 || width < 16) {
    throw ConfigError("gen_scene: size " + std::to_string(height) + "x" + std::to_string(width) + " below 16x16");
  }
  Rng rng(seed);
  const double size = static_cast<double>(std::max(height, width));
  const double pitch = 8.0 / size;  // meters per pixel

  // Ground plane receding towards the top of the image.
  const double base = rng.uniform(7.5, 9.5);
  const double tilt_y = rng.uniform(0.5, 3.0) / static_cast<double>(height);
  const double tilt_x = rng.uniform(-0.5, 0.5) / static_cast<double>(width);
  const std::array<double, 3> ground{rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7)};

  std::vector<Object> objects(3 + rng.index(6));
  for (Object& o : objects) {
    o.kind = static_cast<Shape3>(rng.index(3));
    o.cx = rng.uniform(0, double(width));
    o.cy = rng.uniform(0, double(height));
    o.hx = rng.uniform(0.06, 0.25) * size;
    o.hy = o.kind == Shape3::kSphere ? o.hx : rng.uniform(0.06, 0.25) * size;
    o.z = rng.uniform(2.0, 7.0);
    o.gx = o.kind == Shape3::kSlab ? rng.uniform(-0.5, 0.5) * pitch : 0.0;
    o.gy = o.kind == Shape3::kSlab ? rng.uniform(-0.5, 0.5) * pitch : 0.0;
    for (double& a : o.albedo) a = rng.uniform(0.15, 1.0);
  }

  Scene scene{Tensor<float>(Shape{3, height, width}), Tensor<float>(Shape{1, height, width})};
  std::vector<int> owner(static_cast<std::size_t>(height * width), -1);
  for (Index y = 0; y < height; ++y) {
    for (Index x = 0; x < width; ++x) {
      double z = base + tilt_x * double(2 * x - width) - tilt_y * double(y);
      int id = -1;
      for (std::size_t k = 0; k < objects.size(); ++k) {
        const double d = object_depth(objects[k], double(x), double(y), pitch);
        if (d < z) {
          z = d;
          id = static_cast<int>(k);
        }
      }
      scene.depth[y * width + x] = static_cast<float>(std::clamp(z, double(kMinSceneDepth), double(kMaxSceneDepth)));
      owner[static_cast<std::size_t>(y * width + x)] = id;
    }
  }

  // Lambertian shading from the depth map's own surface normals.
  const double lx = -0.4, ly = -0.6, lz = -1.0, ln = std::sqrt(lx * lx + ly * ly + lz * lz);
  const Index plane = height * width;
  for (Index y = 0; y < height; ++y) {
    for (Index x = 0; x < width; ++x) {
      auto at = [&](Index yy, Index xx) {
        return double(scene.depth[std::clamp<Index>(yy, 0, height - 1) * width + std::clamp<Index>(xx, 0, width - 1)]);
      };
      const double dzdx = (at(y, x + 1) - at(y, x - 1)) / (2 * pitch);
      const double dzdy = (at(y + 1, x) - at(y - 1, x)) / (2 * pitch);
      const double nn = std::sqrt(dzdx * dzdx + dzdy * dzdy + 1.0);
      const double lambert = std::max(0.0, (dzdx * lx + dzdy * ly - lz) / (nn * ln));
      const double shade = 0.25 + 0.75 * lambert;
      const int id = owner[static_cast<std::size_t>(y * width + x)];
      const auto& albedo = id < 0 ? ground : objects[static_cast<std::size_t>(id)].albedo;
      for (Index c = 0; c < 3; ++c) scene.rgb[c * plane + y * width + x] = static_cast<float>(albedo[c] * shade);
    }
  }
  return scene;
}

double edge_coincidence(const Scene& scene, double depth_step, double color_step) {
  const Index h = scene.depth.dim(1), w = scene.depth.dim(2), plane = h * w;
  auto color_edge = [&](Index y, Index x) {
    for (Index c = 0; c < 3; ++c) {
      const float v = scene.rgb[c * plane + y * w + x];
      if (x + 1 < w && std::abs(scene.rgb[c * plane + y * w + x + 1] - v) > color_step) return true;
      if (y + 1 < h && std::abs(scene.rgb[c * plane + (y + 1) * w + x] - v) > color_step) return true;
    }
    return false;
  };
  Index edges = 0, matched = 0;
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      const float d = scene.depth[y * w + x];
      const bool edge = (x + 1 < w && std::abs(scene.depth[y * w + x + 1] - d) > depth_step) ||
                        (y + 1 < h && std::abs(scene.depth[(y + 1) * w + x] - d) > depth_step);
      if (!edge) continue;
      ++edges;
      bool found = false;
      for (Index yy = std::max<Index>(0, y - 1); yy <= std::min(h - 1, y + 1) && !found; ++yy) {
        for (Index xx = std::max<Index>(0, x - 1); xx <= std::min(w - 1, x + 1) && !found; ++xx) found = color_edge(yy, xx);
      }
      matched += found;
    }
  }
  return edges == 0 ? 1.0 : double(matched) / double(edges);
}

Tensor<float> sample_sparse(const Tensor<float>& gt, const SparsePattern& pattern) {
  const Index h = gt.dim(1), w = gt.dim(2);
  Tensor<float> sparse(gt.shape());
  Rng rng(pattern.seed);
  if (pattern.kind == PatternKind::kUniform) {
    std::vector<Index> valid;
    for (Index i = 0; i < gt.size(); ++i) {
      if (gt[i] > 0) valid.push_back(i);
    }
    if (pattern.count < 0 || pattern.count > static_cast<Index>(valid.size())) {
      throw ConfigError("sample_sparse: " + std::to_string(pattern.count) + " samples requested but only " +
                        std::to_string(valid.size()) + " valid pixels available");
    }
    // Partial Fisher-Yates: the first `count` entries become the sample.
    for (Index k = 0; k < pattern.count; ++k) {
      std::swap(valid[k], valid[k + rng.index(static_cast<Index>(valid.size()) - k)]);
      sparse[valid[k]] = gt[valid[k]];
    }
    return sparse;
  }
  if (pattern.lines < 1 || pattern.column_step < 1) throw ConfigError("sample_sparse: lines and column_step must be >= 1");
  const double spacing = double(h) / double(pattern.lines);
  const double phase = rng.uniform(0, spacing);
  for (Index line = 0; line < pattern.lines; ++line) {
    const Index y = std::min(h - 1, static_cast<Index>(phase + spacing * double(line)));
    for (Index x = rng.index(pattern.column_step); x < w; x += pattern.column_step) sparse[y * w + x] = gt[y * w + x];
  }
  return sparse;
}

Sample make_synthetic_sample(std::uint64_t seed, Index height, Index width, const SparsePattern& pattern) {
  Scene scene = gen_scene(seed, height, width);
  SparsePattern p = pattern;
  p.seed = pattern.seed ^ (seed * 0x9E3779B97F4A7C15ull);
  Sample s{std::to_string(seed), std::move(scene.rgb), Tensor<float>(), std::move(scene.depth)};
  s.sparse = sample_sparse(s.gt, p);
  return s;
}

}  // namespace sdformer
