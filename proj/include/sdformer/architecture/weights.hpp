#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "sdformer/architecture/config.hpp"
#include "sdformer/numerics/autodiff.hpp"

namespace sdformer {

/// Named parameters in a fixed, deterministic order.
template <typename Scalar>
class ModelWeights {
 public:
  void add(std::string name, Tensor<Scalar> value);

  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  std::size_t index_of(const std::string& name) const;

  Tensor<Scalar>& operator[](std::size_t i) { return tensors_[i]; }
  const Tensor<Scalar>& operator[](std::size_t i) const { return tensors_[i]; }
  Tensor<Scalar>& at(const std::string& name) { return tensors_[index_of(name)]; }
  const Tensor<Scalar>& at(const std::string& name) const { return tensors_[index_of(name)]; }

  Index parameter_count() const;

  template <typename To>
  ModelWeights<To> cast() const {
    ModelWeights<To> out;
    for (std::size_t i = 0; i < size(); ++i) out.add(names_[i], tensors_[i].template cast<To>());
    return out;
  }

  bool operator==(const ModelWeights&) const = default;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor<Scalar>> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Name and shape of every parameter, in build order.
std::vector<std::pair<std::string, Shape>> parameter_layout(const ModelConfig& config);

/// Block projections draw from a truncated normal (sigma 0.02, cut at 2 sigma);
/// the stem, resampling, reduce and output convs from U(-1/sqrt(fan_in),
/// 1/sqrt(fan_in)). Biases and LN shifts are zero, LN scales one. The same
/// (config, seed) gives identical weights.
ModelWeights<float> build_model(const ModelConfig& config, std::uint64_t seed);

/// Sets the output conv bias, i.e. the prediction of an all-zero feature map.
template <typename Scalar>
void set_output_bias(ModelWeights<Scalar>& weights, Scalar depth);

/// Zeroes every attention and feed-forward output projection, which turns each
/// block into the identity.
template <typename Scalar>
void zero_output_projections(ModelWeights<Scalar>& weights);

/// Parameter tensors wrapped as trace inputs for one forward pass.
template <typename Scalar>
class ParameterSet {
 public:
  /// Trainable entries record gradients; otherwise they are constants.
  ParameterSet(const ModelWeights<Scalar>& weights, bool trainable);
  /// Uses caller-provided vars, one per weight in order.
  ParameterSet(const ModelWeights<Scalar>& weights, std::vector<Var<Scalar>> vars);

  const Var<Scalar>& operator[](const std::string& name) const;
  const Var<Scalar>& operator[](std::size_t i) const { return vars_[i]; }
  std::size_t size() const { return vars_.size(); }
  /// Names never looked up since construction.
  std::vector<std::string> unused() const;

 private:
  const ModelWeights<Scalar>* weights_;
  std::vector<Var<Scalar>> vars_;
  mutable std::vector<bool> used_;
};

}  // namespace sdformer
