#pragma once

#include "sdformer/architecture/config.hpp"
#include "sdformer/numerics/gradcheck.hpp"

namespace sdformer {

/// Step for the whole-model check. At 1e-4 an L1 residual can cross zero
/// inside the stencil.
inline constexpr double kModelCheckEps = 3e-5;

/// Finite-difference check of the completion loss through the whole model on
/// a synthetic size x size sample. Weights are the seeded initialization plus
/// uniform noise of +-0.3, which keeps biases and activations off the kinks.
GradCheckReport check_model_loss_gradient(const ModelConfig& config, Index size, std::uint64_t seed,
                                          const GradCheckOptions& options = {});

}  // namespace sdformer
