#pragma once

#include <array>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdformer/numerics/kernels.hpp"

namespace sdformer {

enum class AttentionVariant { kDwsa, kWsa };
enum class FfnVariant { kGffn, kMlp };

struct Window {
  Index height = 1;
  Index width = 1;
  bool operator==(const Window&) const = default;
};

using WindowTriple = std::array<Window, 3>;

struct StageSpec {
  int blocks = 1;
  int heads = 1;
  WindowTriple windows;
};

/// Channel widths follow the level: C, 2C, 4C for the encoder levels and 8C
/// for the latent level. Stage 1 settings also drive decoder level 1 (at 2C)
/// and the refinement blocks (at 3C, with heads scaled by 3).
struct ModelConfig {
  int base_channels = 24;
  std::array<StageSpec, 4> stages;
  int refinement_blocks = 2;
  double expansion = 2.88;
  AttentionVariant attention = AttentionVariant::kDwsa;
  FfnVariant ffn = FfnVariant::kGffn;

  static ModelConfig nyu();
  static ModelConfig kitti();
  /// C=6, one block per stage; windows divide every power-of-two input >= 16.
  static ModelConfig tiny();

  /// Channels of encoder level 1..4.
  Index level_channels(int level) const;
  /// Depth-branch channels of the input module; the RGB branch gets the rest.
  Index depth_branch_channels() const { return base_channels / 2; }
  /// GFFN / MLP hidden width for a block of `channels` channels.
  Index hidden_channels(Index channels) const;
  Index refinement_heads() const { return 3 * stages[0].heads; }
};

/// One attention stage as instantiated at a particular place in the network.
struct BlockSpec {
  Index channels = 0;
  int heads = 1;
  WindowTriple windows;
  Index hidden = 0;
  AttentionVariant attention = AttentionVariant::kDwsa;
  FfnVariant ffn = FfnVariant::kGffn;

  /// Window used by branch i after applying the attention variant.
  Window branch_window(int i) const;
  Index head_dim() const { return channels / 3 / heads; }
};

enum class Placement { kEncoder, kLatent, kDecoder, kRefinement };

struct LevelPlan {
  int level = 1;
  Index height = 0;
  Index width = 0;
  /// Reflect padding applied before downsampling out of this level.
  Padding pad;
};

/// Spatial layout of levels 1..4 for an input of height x width.
std::vector<LevelPlan> plan_levels(Index height, Index width);

/// Checks channel divisibility rules. Throws ConfigError naming the stage.
void validate(const ModelConfig& config);
/// Also checks every window against the map it tiles at this input size.
void validate(const ModelConfig& config, Index height, Index width);

/// Block spec of `placement` at encoder level `level` (ignored for refinement).
BlockSpec block_spec(const ModelConfig& config, Placement placement, int level);

nlohmann::json to_json(const ModelConfig& config);
/// Strict parse: unknown keys and ill-typed values are configuration errors.
/// Missing keys keep the NYU preset value.
ModelConfig model_config_from_json(const nlohmann::json& j);

std::string to_string(AttentionVariant v);
std::string to_string(FfnVariant v);

}  // namespace sdformer
