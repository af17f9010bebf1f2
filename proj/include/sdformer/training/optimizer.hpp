#pragma once

#include <cstdint>
#include <vector>

#include "sdformer/architecture/weights.hpp"

namespace sdformer {

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Learning rate before scheduling; adam_step takes the scheduled value.
  double base_lr = 3e-4;
  bool operator==(const AdamHyper&) const = default;
};

/// Moments are aligned with the weights they update.
template <typename Scalar>
struct AdamState {
  AdamHyper hyper;
  std::int64_t step = 0;
  std::vector<Tensor<Scalar>> m;
  std::vector<Tensor<Scalar>> v;

  static AdamState zeros(const ModelWeights<Scalar>& weights, AdamHyper hyper = {});
  bool operator==(const AdamState&) const = default;
};

/// Bias-corrected Adam update without weight decay. A non-finite gradient
/// throws NumericError naming the parameter before anything is modified.
template <typename Scalar>
void adam_step(AdamState<Scalar>& state, ModelWeights<Scalar>& weights, const std::vector<Tensor<Scalar>>& grads,
               double lr);

/// Piecewise-constant learning rate: base_lr times the factor of the largest
/// threshold not above the epoch, or base_lr before the first threshold.
struct Schedule {
  double base_lr = 3e-4;
  std::vector<double> factors;
  std::vector<int> thresholds;

  static Schedule nyu();
  static Schedule kitti();
  /// Throws ConfigError unless thresholds strictly increase and factors are positive.
  void validate() const;
  bool operator==(const Schedule&) const = default;
};

double lr_at_epoch(const Schedule& schedule, int epoch);

}  // namespace sdformer
