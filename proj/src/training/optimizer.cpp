#include "sdformer/training/optimizer.hpp"

#include <cmath>

#include "sdformer/error.hpp"

namespace sdformer {

template <typename S>
AdamState<S> AdamState<S>::zeros(const ModelWeights<S>& weights, AdamHyper hyper) {
  AdamState s;
  s.hyper = hyper;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    s.m.emplace_back(weights[i].shape());
    s.v.emplace_back(weights[i].shape());
  }
  return s;
}

template <typename S>
void adam_step(AdamState<S>& state, ModelWeights<S>& weights, const std::vector<Tensor<S>>& grads, double lr) {
  if (grads.size() != weights.size() || state.m.size() != weights.size() || state.v.size() != weights.size()) {
    throw ConfigError("adam: " + std::to_string(grads.size()) + " gradients and " + std::to_string(state.m.size()) +
                      " moments for " + std::to_string(weights.size()) + " parameters");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].shape() != weights[i].shape()) {
      throw ConfigError("adam: gradient of " + weights.names()[i] + " has shape " + grads[i].shape().str());
    }
    if (!grads[i].all_finite()) throw NumericError("adam: non-finite gradient for " + weights.names()[i]);
  }
  ++state.step;
  const AdamHyper& h = state.hyper;
  const double t = static_cast<double>(state.step);
  const S c1 = S(1.0 - std::pow(h.beta1, t));
  const S c2 = S(1.0 - std::pow(h.beta2, t));
  const S b1 = S(h.beta1), b2 = S(h.beta2), eps = S(h.eps), rate = S(lr);
  for (std::size_t i = 0; i < grads.size(); ++i) {
    auto g = grads[i].array();
    auto m = state.m[i].array();
    auto v = state.v[i].array();
    m = b1 * m + (S(1) - b1) * g;
    v = b2 * v + (S(1) - b2) * g * g;
    weights[i].array() -= rate * (m / c1) / ((v / c2).sqrt() + eps);
  }
}

Schedule Schedule::nyu() { return {3e-4, {1.0, 0.2, 0.04, 0.008}, {10, 15, 20, 25}}; }
Schedule Schedule::kitti() { return {2e-4, {1.0, 0.2, 0.04}, {10, 15, 20}}; }

void Schedule::validate() const {
  if (!(base_lr > 0) || !std::isfinite(base_lr)) throw ConfigError("schedule: base_lr must be positive");
  if (factors.size() != thresholds.size()) {
    throw ConfigError("schedule: " + std::to_string(factors.size()) + " factors for " +
                      std::to_string(thresholds.size()) + " thresholds");
  }
  for (std::size_t i = 0; i < factors.size(); ++i) {
    if (!(factors[i] > 0)) throw ConfigError("schedule: factor " + std::to_string(i) + " must be positive");
    if (i > 0 && thresholds[i] <= thresholds[i - 1]) throw ConfigError("schedule: thresholds must strictly increase");
  }
}

double lr_at_epoch(const Schedule& schedule, int epoch) {
  double factor = 1.0;
  for (std::size_t i = 0; i < schedule.thresholds.size() && schedule.thresholds[i] <= epoch; ++i) {
    factor = schedule.factors[i];
  }
  return schedule.base_lr * factor;
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step(AdamState<float>&, ModelWeights<float>&, const std::vector<Tensor<float>>&, double);
template void adam_step(AdamState<double>&, ModelWeights<double>&, const std::vector<Tensor<double>>&, double);

}  // namespace sdformer
