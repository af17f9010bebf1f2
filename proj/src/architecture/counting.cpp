#include "sdformer/architecture/counting.hpp"

#include "sdformer/architecture/weights.hpp"

namespace sdformer {
namespace {

Index conv_params(Index out, Index in_per_group, Index k, bool bias) { return out * in_per_group * k * k + (bias ? out : 0); }

Index conv_macs(Index out, Index in_per_group, Index k, Index pixels) { return out * in_per_group * k * k * pixels; }

MacCount block_macs(const BlockSpec& s, Index height, Index width) {
  const Index c = s.channels, h = s.hidden, px = height * width;
  MacCount m;
  m.conv += conv_macs(3 * c, c, 1, px) + conv_macs(3 * c, 1, 3, px) + conv_macs(c, c, 1, px);
  if (s.ffn == FfnVariant::kGffn) {
    m.conv += conv_macs(2 * h, c, 1, px) + conv_macs(2 * h, 1, 3, px) + conv_macs(c, h, 1, px);
  } else {
    m.conv += conv_macs(h, c, 1, px) + conv_macs(c, h, 1, px);
  }
  for (int i = 0; i < 3; ++i) {
    const Window w = s.branch_window(i);
    m.attention += 2 * w.height * w.width * px * (c / 3);
  }
  return m;
}

void accumulate(MacCount& total, const MacCount& part, int times = 1) {
  total.conv += times * part.conv;
  total.attention += times * part.attention;
}

}  // namespace

ParamCount count_params(const ModelConfig& config) {
  ParamCount count;
  for (const auto& [name, shape] : parameter_layout(config)) {
    const std::string module = name.substr(0, name.find('.'));
    if (count.modules.empty() || count.modules.back().first != module) count.modules.emplace_back(module, 0);
    count.modules.back().second += shape.numel();
    count.total += shape.numel();
  }
  return count;
}

Index block_params(Index c, Index h, FfnVariant ffn) {
  const Index common = 4 * c + 4 * c * c + 27 * c;
  return common + (ffn == FfnVariant::kGffn ? 3 * h * c + 18 * h : 2 * h * c);
}

Index closed_form_params(const ModelConfig& config) {
  validate(config);
  const Index c = config.base_channels;
  auto blocks = [&](Placement p, int level, int count) {
    const BlockSpec s = block_spec(config, p, level);
    return count * block_params(s.channels, s.hidden, s.ffn);
  };
  Index total = conv_params(config.depth_branch_channels(), 1, 3, true) +
                conv_params(c - config.depth_branch_channels(), 3, 3, true);
  for (int level = 1; level <= 3; ++level) {
    const Index ch = config.level_channels(level);
    const int n = config.stages[level - 1].blocks;
    total += blocks(Placement::kEncoder, level, n) + blocks(Placement::kDecoder, level, n);
    total += conv_params(ch / 2, ch, 3, true);                   // down
    total += conv_params(4 * ch, 2 * ch, 3, true);               // up into this level
    if (level > 1) total += conv_params(ch, 2 * ch, 1, false);   // skip reduce
  }
  total += blocks(Placement::kLatent, 4, config.stages[3].blocks);
  total += blocks(Placement::kRefinement, 1, config.refinement_blocks);
  total += conv_params(1, 3 * c, 3, true);
  return total;
}

MacCount count_macs(const ModelConfig& config, Index height, Index width) {
  validate(config, height, width);
  const auto levels = plan_levels(height, width);
  const Index c = config.base_channels;
  MacCount total;
  const Index full = height * width;
  total.conv += conv_macs(config.depth_branch_channels(), 1, 3, full) +
                conv_macs(c - config.depth_branch_channels(), 3, 3, full);
  for (int level = 1; level <= 4; ++level) {
    const LevelPlan& p = levels[level - 1];
    const Index ch = config.level_channels(level);
    const int n = config.stages[level - 1].blocks;
    if (level == 4) {
      accumulate(total, block_macs(block_spec(config, Placement::kLatent, 4), p.height, p.width), n);
      continue;
    }
    accumulate(total, block_macs(block_spec(config, Placement::kEncoder, level), p.height, p.width), n);
    accumulate(total, block_macs(block_spec(config, Placement::kDecoder, level), p.height, p.width), n);
    const Index padded = (p.height + p.pad.bottom) * (p.width + p.pad.right);
    total.conv += conv_macs(ch / 2, ch, 3, padded);
    // The up conv runs at the next level's extents before the shuffle.
    total.conv += conv_macs(4 * ch, 2 * ch, 3, padded / 4);
    if (level > 1) total.conv += conv_macs(ch, 2 * ch, 1, p.height * p.width);
  }
  accumulate(total, block_macs(block_spec(config, Placement::kRefinement, 1), height, width),
             config.refinement_blocks);
  total.conv += conv_macs(1, 3 * c, 3, full);
  return total;
}

}  // namespace sdformer
