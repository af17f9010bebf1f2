#include "sdformer/architecture/config.hpp"

#include <cmath>
#include <set>

#include "sdformer/error.hpp"

namespace sdformer {
namespace {

WindowTriple triple(Window a, Window b, Window c) { return {a, b, c}; }

std::string window_str(Window w) { return "[" + std::to_string(w.height) + "," + std::to_string(w.width) + "]"; }

std::string place_name(Placement p, int level) {
  switch (p) {
    case Placement::kEncoder: return "encoder level " + std::to_string(level);
    case Placement::kLatent: return "latent level 4";
    case Placement::kDecoder: return "decoder level " + std::to_string(level);
    case Placement::kRefinement: return "refinement";
  }
  return "?";
}

void check_block(const BlockSpec& spec, int stage, const std::string& where) {
  const std::string prefix = "stage " + std::to_string(stage) + " (" + where + "): ";
  if (spec.channels % 3 != 0) {
    throw ConfigError(prefix + std::to_string(spec.channels) + " channels not divisible into 3 branches");
  }
  if (spec.heads < 1 || (spec.channels / 3) % spec.heads != 0) {
    throw ConfigError(prefix + "branch channels " + std::to_string(spec.channels / 3) + " not divisible by " +
                      std::to_string(spec.heads) + " heads");
  }
  if (spec.hidden < 1) throw ConfigError(prefix + "hidden width is zero");
  for (const Window& w : spec.windows) {
    if (w.height < 1 || w.width < 1) throw ConfigError(prefix + "window " + window_str(w) + " has a zero extent");
  }
}

void check_windows(const BlockSpec& spec, int stage, const std::string& where, Index height, Index width) {
  for (int i = 0; i < 3; ++i) {
    const Window w = spec.branch_window(i);
    if (height % w.height != 0 || width % w.width != 0) {
      throw ConfigError("stage " + std::to_string(stage) + " (" + where + "): window " + window_str(w) +
                        " of branch " + std::to_string(i + 1) + " does not divide the " + std::to_string(height) +
                        "x" + std::to_string(width) + " map");
    }
  }
}

template <typename T>
T read(const nlohmann::json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model.") + key + ": " + e.what());
  }
}

}  // namespace

ModelConfig ModelConfig::nyu() {
  ModelConfig c;
  c.base_channels = 24;
  c.stages[0] = {2, 1, triple({4, 4}, {6, 8}, {12, 16})};
  c.stages[1] = {4, 2, triple({6, 4}, {6, 19}, {19, 8})};
  c.stages[2] = {6, 4, triple({3, 4}, {3, 19}, {19, 4})};
  c.stages[3] = {8, 8, triple({29, 2}, {29, 19}, {29, 38})};
  c.refinement_blocks = 2;
  c.expansion = 2.88;
  return c;
}

ModelConfig ModelConfig::kitti() {
  ModelConfig c;
  c.base_channels = 12;
  c.stages[0] = {2, 1, triple({4, 4}, {8, 8}, {16, 16})};
  c.stages[1] = {2, 2, triple({4, 4}, {8, 8}, {16, 16})};
  c.stages[2] = {6, 4, triple({4, 4}, {8, 8}, {8, 16})};
  c.stages[3] = {8, 8, triple({4, 4}, {8, 8}, {4, 19})};
  c.refinement_blocks = 2;
  c.expansion = 2.08;
  return c;
}

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.base_channels = 6;
  c.stages[0] = {1, 1, triple({2, 2}, {4, 4}, {8, 8})};
  c.stages[1] = {1, 2, triple({2, 2}, {4, 4}, {8, 8})};
  c.stages[2] = {1, 4, triple({1, 1}, {2, 2}, {4, 4})};
  c.stages[3] = {1, 8, triple({1, 1}, {2, 2}, {2, 1})};
  c.refinement_blocks = 1;
  c.expansion = 2.0;
  return c;
}

Index ModelConfig::level_channels(int level) const { return Index{base_channels} << (level - 1); }

Index ModelConfig::hidden_channels(Index channels) const {
  return static_cast<Index>(std::floor(expansion * static_cast<double>(channels)));
}

Window BlockSpec::branch_window(int i) const { return attention == AttentionVariant::kWsa ? windows[0] : windows[i]; }

std::vector<LevelPlan> plan_levels(Index height, Index width) {
  std::vector<LevelPlan> levels;
  for (int level = 1; level <= 4; ++level) {
    LevelPlan p{level, height, width, {}};
    if (level < 4) {
      if (height < 2 || width < 2) {
        throw ConfigError("level " + std::to_string(level) + " map " + std::to_string(height) + "x" +
                          std::to_string(width) + " is too small to downsample");
      }
      p.pad.bottom = height % 2;
      p.pad.right = width % 2;
      height = (height + p.pad.bottom) / 2;
      width = (width + p.pad.right) / 2;
    }
    levels.push_back(p);
  }
  return levels;
}

BlockSpec block_spec(const ModelConfig& config, Placement placement, int level) {
  BlockSpec s;
  s.attention = config.attention;
  s.ffn = config.ffn;
  switch (placement) {
    case Placement::kEncoder:
    case Placement::kLatent:
      s.channels = config.level_channels(level);
      break;
    case Placement::kDecoder:
      s.channels = level == 1 ? 2 * config.level_channels(1) : config.level_channels(level);
      break;
    case Placement::kRefinement:
      level = 1;
      s.channels = 3 * config.level_channels(1);
      break;
  }
  const StageSpec& stage = config.stages[level - 1];
  s.heads = placement == Placement::kRefinement ? config.refinement_heads() : stage.heads;
  s.windows = stage.windows;
  s.hidden = config.hidden_channels(s.channels);
  return s;
}

void validate(const ModelConfig& config) {
  const Index c = config.base_channels;
  if (c < 2 || c % 2 != 0) throw ConfigError("base_channels " + std::to_string(c) + " must be even and >= 2");
  if (!(config.expansion > 0) || !std::isfinite(config.expansion)) throw ConfigError("expansion must be positive");
  if (config.refinement_blocks < 0) throw ConfigError("refinement_blocks must be >= 0");
  for (int level = 1; level <= 4; ++level) {
    const StageSpec& stage = config.stages[level - 1];
    if (stage.blocks < 0) throw ConfigError("stage " + std::to_string(level) + ": negative block count");
    const Placement main = level == 4 ? Placement::kLatent : Placement::kEncoder;
    check_block(block_spec(config, main, level), level, place_name(main, level));
    if (level < 4) check_block(block_spec(config, Placement::kDecoder, level), level, place_name(Placement::kDecoder, level));
  }
  if (config.refinement_blocks > 0) {
    check_block(block_spec(config, Placement::kRefinement, 1), 1, place_name(Placement::kRefinement, 1));
  }
}

void validate(const ModelConfig& config, Index height, Index width) {
  validate(config);
  const auto levels = plan_levels(height, width);
  for (const LevelPlan& p : levels) {
    const int level = p.level;
    const Placement main = level == 4 ? Placement::kLatent : Placement::kEncoder;
    // Blocks at a level share its windows, so only levels with blocks matter.
    bool used = config.stages[level - 1].blocks > 0;
    if (level == 1 && config.refinement_blocks > 0) used = true;
    if (used) check_windows(block_spec(config, main, level), level, place_name(main, level), p.height, p.width);
  }
}

std::string to_string(AttentionVariant v) { return v == AttentionVariant::kDwsa ? "DWSA" : "WSA"; }
std::string to_string(FfnVariant v) { return v == FfnVariant::kGffn ? "GFFN" : "MLP"; }

nlohmann::json to_json(const ModelConfig& config) {
  nlohmann::json blocks = nlohmann::json::array(), heads = nlohmann::json::array(),
                 windows = nlohmann::json::array();
  for (const StageSpec& s : config.stages) {
    blocks.push_back(s.blocks);
    heads.push_back(s.heads);
    nlohmann::json t = nlohmann::json::array();
    for (const Window& w : s.windows) t.push_back({w.height, w.width});
    windows.push_back(t);
  }
  return {{"base_channels", config.base_channels},
          {"blocks", blocks},
          {"heads", heads},
          {"windows", windows},
          {"refinement_blocks", config.refinement_blocks},
          {"expansion", config.expansion},
          {"attention_variant", to_string(config.attention)},
          {"ffn_variant", to_string(config.ffn)}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("model: expected an object");
  static const std::set<std::string> known{"base_channels",     "blocks",    "heads",
                                           "windows",           "refinement_blocks", "expansion",
                                           "attention_variant", "ffn_variant"};
  for (const auto& item : j.items()) {
    if (!known.count(item.key())) throw ConfigError("model: unknown key \"" + item.key() + "\"");
  }
  ModelConfig c = ModelConfig::nyu();
  if (j.contains("base_channels")) c.base_channels = read<int>(j, "base_channels");
  if (j.contains("refinement_blocks")) c.refinement_blocks = read<int>(j, "refinement_blocks");
  if (j.contains("expansion")) c.expansion = read<double>(j, "expansion");
  if (j.contains("blocks")) {
    const auto v = read<std::vector<int>>(j, "blocks");
    if (v.size() != 4) throw ConfigError("model.blocks: expected 4 entries");
    for (int i = 0; i < 4; ++i) c.stages[i].blocks = v[i];
  }
  if (j.contains("heads")) {
    const auto v = read<std::vector<int>>(j, "heads");
    if (v.size() != 4) throw ConfigError("model.heads: expected 4 entries");
    for (int i = 0; i < 4; ++i) c.stages[i].heads = v[i];
  }
  if (j.contains("windows")) {
    const auto v = read<std::vector<std::vector<std::vector<Index>>>>(j, "windows");
    if (v.size() != 4) throw ConfigError("model.windows: expected 4 stages");
    for (int i = 0; i < 4; ++i) {
      if (v[i].size() != 3) throw ConfigError("model.windows[" + std::to_string(i) + "]: expected 3 windows");
      for (int b = 0; b < 3; ++b) {
        if (v[i][b].size() != 2) {
          throw ConfigError("model.windows[" + std::to_string(i) + "][" + std::to_string(b) + "]: expected [dh, dw]");
        }
        c.stages[i].windows[b] = {v[i][b][0], v[i][b][1]};
      }
    }
  }
  if (j.contains("attention_variant")) {
    const auto s = read<std::string>(j, "attention_variant");
    if (s == "DWSA") c.attention = AttentionVariant::kDwsa;
    else if (s == "WSA") c.attention = AttentionVariant::kWsa;
    else throw ConfigError("model.attention_variant: expected DWSA or WSA, got " + s);
  }
  if (j.contains("ffn_variant")) {
    const auto s = read<std::string>(j, "ffn_variant");
    if (s == "GFFN") c.ffn = FfnVariant::kGffn;
    else if (s == "MLP") c.ffn = FfnVariant::kMlp;
    else throw ConfigError("model.ffn_variant: expected GFFN or MLP, got " + s);
  }
  validate(c);
  return c;
}

}  // namespace sdformer
