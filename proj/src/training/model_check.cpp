#include "sdformer/training/model_check.hpp"

#include <random>

#include "sdformer/architecture/sdformer.hpp"
#include "sdformer/datakit/synth.hpp"
#include "sdformer/training/loss.hpp"

namespace sdformer {

GradCheckReport check_model_loss_gradient(const ModelConfig& config, Index size, std::uint64_t seed,
                                          const GradCheckOptions& options) {
  const Sample s = make_synthetic_sample(seed, size, size, {PatternKind::kUniform, std::max<Index>(1, size * size / 8)});
  ModelWeights<double> weights = build_model(config, seed).cast<double>();
  std::mt19937_64 rng(seed ^ 0x5eedu);
  std::uniform_real_distribution<double> noise(-0.3, 0.3);
  std::vector<NamedTensor> params;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    for (Index k = 0; k < weights[i].size(); ++k) weights[i][k] += noise(rng);
    params.push_back({weights.names()[i], weights[i]});
  }
  const Tensord sparse = s.sparse.cast<double>(), rgb = s.rgb.cast<double>(), gt = s.gt.cast<double>();
  const Tensord mask = valid_mask(s.gt).cast<double>();
  const ScalarFunction f = [&](const std::vector<Var<double>>& v) {
    const ParameterSet<double> p(weights, v);
    return completion_loss(model_forward(config, p, constant(sparse), constant(rgb)), gt, mask);
  };
  return grad_check(f, params, options);
}

}  // namespace sdformer
