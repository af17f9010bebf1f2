#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdformer/architecture/config.hpp"
#include "sdformer/datakit/preprocess.hpp"
#include "sdformer/datakit/synth.hpp"
#include "sdformer/training/trainer.hpp"

namespace sdformer {

struct TrainSection {
  AdamHyper adam;
  TrainOptions options;
  std::uint64_t seed = 0;
};

struct DataSection {
  std::string dataset;
  std::string validation;
  SparsePattern pattern;
  std::optional<PreprocessTarget> preprocess;
  /// Input extent used by describe, count and synth.
  Index height = kNyuHeight;
  Index width = kNyuWidth;
};

struct IoSection {
  std::string checkpoint = "checkpoint.sdck";
  std::string report;
  std::string log;
};

/// Everything a command needs, validated as a whole on construction.
struct RunConfig {
  ModelConfig model = ModelConfig::nyu();
  TrainSection train;
  DataSection data;
  IoSection io;
};

/// Sections "model", "train", "data" and "io"; unknown keys are rejected.
/// "model" may name a "preset" (nyu, kitti, tiny) whose fields the remaining
/// keys replace. Throws ConfigError naming the offending key.
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& config);

/// Sets a dotted path such as "model.base_channels" from "key=value". The
/// value is parsed as JSON when possible, else taken as a string.
void apply_override(nlohmann::json& j, const std::string& assignment);

/// Reads the optional config file, applies overrides and validates. Without a
/// "model" section the model is the named preset.
RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides,
                          const std::string& default_preset = "nyu");

/// Parses "WxH".
std::pair<Index, Index> parse_size(const std::string& text);

}  // namespace sdformer
