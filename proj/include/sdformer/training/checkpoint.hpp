#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "sdformer/architecture/config.hpp"
#include "sdformer/training/optimizer.hpp"

namespace sdformer {

/// Complete training state at an epoch boundary.
struct Checkpoint {
  ModelConfig config;
  ModelWeights<float> weights;
  AdamState<float> optimizer;
  /// Completed epochs.
  int epoch = 0;
  /// Seeds initialization and the per-epoch shuffle.
  std::uint64_t seed = 0;

  static Checkpoint fresh(const ModelConfig& config, std::uint64_t seed, AdamHyper hyper = {});
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// "SDCK", u32 version, u32-length-prefixed JSON header, then per tensor a
/// u32-length-prefixed name, u32 rank, u32 extents and f32 data, all little
/// endian. Weights come first, then "adam.m/<name>" and "adam.v/<name>".
std::string serialize_checkpoint(const Checkpoint& checkpoint);
/// Throws FormatError on bad magic or version, truncation, or tensors that do
/// not match the layout implied by the embedded config.
Checkpoint deserialize_checkpoint(std::string_view bytes);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace sdformer
