#pragma once

#include <cstdint>

#include "sdformer/datakit/sample.hpp"

namespace sdformer {

struct Scene {
  Tensor<float> rgb;    // 3 x H x W in [0, 1]
  Tensor<float> depth;  // 1 x H x W in [kMinSceneDepth, kMaxSceneDepth]
};

inline constexpr float kMinSceneDepth = 1.0f;
inline constexpr float kMaxSceneDepth = 10.0f;

/// Orthographic render of a tilted ground plane and 3-8 boxes, spheres and
/// slanted planes. Color is per-object albedo times Lambertian shading of the
/// rendered depth, so color edges follow depth edges.
Scene gen_scene(std::uint64_t seed, Index height, Index width);

/// Fraction of depth-edge pixels (a 4-neighbor step above `depth_step` meters)
/// that have a color step above `color_step` within one pixel.
double edge_coincidence(const Scene& scene, double depth_step = 0.5, double color_step = 0.05);

enum class PatternKind { kUniform, kScanlines };

struct SparsePattern {
  PatternKind kind = PatternKind::kUniform;
  /// Uniform: number of samples.
  Index count = 500;
  /// Scanlines: number of evenly spaced rows and the column stride along each.
  Index lines = 64;
  Index column_step = 4;
  std::uint64_t seed = 0;
};

/// Copies gt at the selected pixels; 0 elsewhere. Uniform sampling draws
/// exactly `count` distinct valid pixels and throws ConfigError stating the
/// available count when gt has fewer. Scanlines keep valid pixels only.
Tensor<float> sample_sparse(const Tensor<float>& gt, const SparsePattern& pattern);

/// Scene plus sparse input, identified as "<seed>".
Sample make_synthetic_sample(std::uint64_t seed, Index height, Index width, const SparsePattern& pattern);

}  // namespace sdformer
