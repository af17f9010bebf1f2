#include "sdformer/architecture/weights.hpp"

#include <cmath>
#include <random>

#include "sdformer/error.hpp"

namespace sdformer {
namespace {

using Layout = std::vector<std::pair<std::string, Shape>>;

void conv(Layout& l, const std::string& name, Index out, Index in, Index k, bool bias) {
  l.emplace_back(name + ".weight", Shape{out, in, k, k});
  if (bias) l.emplace_back(name + ".bias", Shape{out});
}

void block(Layout& l, const std::string& name, const BlockSpec& s) {
  const Index c = s.channels, h = s.hidden;
  l.emplace_back(name + ".norm1.gamma", Shape{c});
  l.emplace_back(name + ".norm1.beta", Shape{c});
  conv(l, name + ".attn.qkv", 3 * c, c, 1, false);
  conv(l, name + ".attn.qkv_dw", 3 * c, 1, 3, false);
  conv(l, name + ".attn.proj", c, c, 1, false);
  l.emplace_back(name + ".norm2.gamma", Shape{c});
  l.emplace_back(name + ".norm2.beta", Shape{c});
  if (s.ffn == FfnVariant::kGffn) {
    conv(l, name + ".ffn.in", 2 * h, c, 1, false);
    conv(l, name + ".ffn.dw", 2 * h, 1, 3, false);
  } else {
    conv(l, name + ".ffn.in", h, c, 1, false);
  }
  conv(l, name + ".ffn.out", c, h, 1, false);
}

void blocks(Layout& l, const std::string& name, int count, const BlockSpec& s) {
  for (int i = 0; i < count; ++i) block(l, name + ".block" + std::to_string(i), s);
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

template <typename Scalar>
void ModelWeights<Scalar>::add(std::string name, Tensor<Scalar> value) {
  if (index_.count(name)) throw ConfigError("duplicate parameter " + name);
  index_.emplace(name, names_.size());
  names_.push_back(std::move(name));
  tensors_.push_back(std::move(value));
}

template <typename Scalar>
std::size_t ModelWeights<Scalar>::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter " + name);
  return it->second;
}

template <typename Scalar>
Index ModelWeights<Scalar>::parameter_count() const {
  Index n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

Layout parameter_layout(const ModelConfig& config) {
  validate(config);
  Layout l;
  const Index c = config.base_channels;
  const Index c1 = config.depth_branch_channels();
  conv(l, "input.depth", c1, 1, 3, true);
  conv(l, "input.rgb", c - c1, 3, 3, true);
  for (int level = 1; level <= 3; ++level) {
    const std::string n = std::to_string(level);
    blocks(l, "encoder" + n, config.stages[level - 1].blocks, block_spec(config, Placement::kEncoder, level));
    const Index ch = config.level_channels(level);
    conv(l, "down" + n, ch / 2, ch, 3, true);
  }
  blocks(l, "latent", config.stages[3].blocks, block_spec(config, Placement::kLatent, 4));
  for (int level = 3; level >= 1; --level) {
    const std::string n = std::to_string(level);
    const Index below = config.level_channels(level + 1);
    conv(l, "up" + n, 2 * below, below, 3, true);
    const Index ch = config.level_channels(level);
    if (level > 1) conv(l, "decoder" + n + ".reduce", ch, 2 * ch, 1, false);
    blocks(l, "decoder" + n, config.stages[level - 1].blocks, block_spec(config, Placement::kDecoder, level));
  }
  blocks(l, "refine", config.refinement_blocks, block_spec(config, Placement::kRefinement, 1));
  conv(l, "output", 1, 3 * c, 3, true);
  return l;
}

ModelWeights<float> build_model(const ModelConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  constexpr double kSigma = 0.02;
  ModelWeights<float> weights;
  for (auto& [name, shape] : parameter_layout(config)) {
    Tensor<float> t(shape);
    if (ends_with(name, ".gamma")) {
      t = Tensor<float>(shape, 1.0f);
    } else if (ends_with(name, ".weight") && name.find(".block") == std::string::npos) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(t.size() / shape[0]));
      std::uniform_real_distribution<double> uniform(-bound, bound);
      for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<float>(uniform(rng));
    } else if (ends_with(name, ".weight")) {
      for (Index i = 0; i < t.size(); ++i) {
        double z;
        do z = normal(rng); while (std::abs(z) > 2.0);
        t[i] = static_cast<float>(kSigma * z);
      }
    }
    weights.add(name, std::move(t));
  }
  return weights;
}

template <typename Scalar>
void zero_output_projections(ModelWeights<Scalar>& weights) {
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const std::string& n = weights.names()[i];
    if (ends_with(n, ".attn.proj.weight") || ends_with(n, ".ffn.out.weight")) {
      weights[i] = Tensor<Scalar>(weights[i].shape());
    }
  }
}

template <typename Scalar>
void set_output_bias(ModelWeights<Scalar>& weights, Scalar depth) {
  weights[weights.index_of("output.bias")][0] = depth;
}

template <typename Scalar>
ParameterSet<Scalar>::ParameterSet(const ModelWeights<Scalar>& weights, bool trainable)
    : weights_(&weights), used_(weights.size(), false) {
  vars_.reserve(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) {
    vars_.push_back(trainable ? parameter(weights[i], weights.names()[i]) : constant(weights[i]));
  }
}

template <typename Scalar>
ParameterSet<Scalar>::ParameterSet(const ModelWeights<Scalar>& weights, std::vector<Var<Scalar>> vars)
    : weights_(&weights), vars_(std::move(vars)), used_(weights.size(), false) {
  if (vars_.size() != weights.size()) {
    throw ConfigError("ParameterSet: " + std::to_string(vars_.size()) + " vars for " + std::to_string(weights.size()) +
                      " weights");
  }
  for (std::size_t i = 0; i < vars_.size(); ++i) {
    if (vars_[i].shape() != weights[i].shape()) {
      throw ConfigError("ParameterSet: " + weights.names()[i] + " expects " + weights[i].shape().str() + ", got " +
                        vars_[i].shape().str());
    }
  }
}

template <typename Scalar>
const Var<Scalar>& ParameterSet<Scalar>::operator[](const std::string& name) const {
  const std::size_t i = weights_->index_of(name);
  used_[i] = true;
  return vars_[i];
}

template <typename Scalar>
std::vector<std::string> ParameterSet<Scalar>::unused() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < used_.size(); ++i) {
    if (!used_[i]) out.push_back(weights_->names()[i]);
  }
  return out;
}

template class ModelWeights<float>;
template class ModelWeights<double>;
template class ParameterSet<float>;
template class ParameterSet<double>;
template void zero_output_projections(ModelWeights<float>&);
template void zero_output_projections(ModelWeights<double>&);
template void set_output_bias(ModelWeights<float>&, float);
template void set_output_bias(ModelWeights<double>&, double);

}  // namespace sdformer
