#pragma once

#include <functional>
#include <optional>
#include <vector>

#include <json.hpp>

#include "sdformer/datakit/sample.hpp"
#include "sdformer/evalkit/metrics.hpp"
#include "sdformer/training/checkpoint.hpp"

namespace sdformer {

struct TrainOptions {
  int epochs = 1;
  int batch_size = 4;
  /// Epoch thresholds and factors; the base rate comes from the checkpoint.
  Schedule schedule = Schedule::nyu();
  /// Random horizontal flips, decided per sample and epoch from the seed.
  bool flip = false;
  int threads = 1;
  /// Stops after this many optimizer steps in total when non-negative.
  std::int64_t max_steps = -1;
  /// The rate ramps linearly from 1/warmup_steps of the scheduled value over
  /// the first warmup_steps optimizer steps.
  std::int64_t warmup_steps = 0;
};

struct EpochLog {
  int epoch = 0;
  double lr = 0;
  /// Pixel-pooled loss over the epoch.
  double loss = 0;
  std::int64_t steps = 0;
  std::optional<MetricsReport> validation;

  nlohmann::json to_json() const;
};

/// Sample visiting order of an epoch; depends only on (seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t count, std::uint64_t seed, int epoch);

/// Mean of the valid sparse depths over all samples, or 0 when there are none.
/// Used as the output bias of a fresh model so training starts at the right
/// depth scale.
double mean_sparse_depth(const std::vector<Sample>& samples);

/// Mirrors the W axis of every map.
Sample flip_horizontal(const Sample& sample);

class Trainer {
 public:
  Trainer(Checkpoint state, TrainOptions options);

  /// One Adam step on the batch. Each sample runs its own trace; the loss is
  /// pooled over all valid pixels of the batch. Returns the loss.
  double step(const std::vector<const Sample*>& batch, double lr);

  /// Trains the next epoch. Throws NumericError naming the batch on a
  /// non-finite loss.
  EpochLog run_epoch(const std::vector<Sample>& train, const std::vector<Sample>* validation = nullptr);

  /// Runs the remaining epochs up to options.epochs.
  std::vector<EpochLog> run(const std::vector<Sample>& train, const std::vector<Sample>* validation = nullptr,
                            const std::function<void(const EpochLog&)>& on_epoch = {});

  const Checkpoint& state() const { return state_; }
  const TrainOptions& options() const { return options_; }

 private:
  Checkpoint state_;
  TrainOptions options_;
  double last_error_sum_ = 0;
  Index last_pixels_ = 0;
};

/// Dense prediction for one sample.
Tensor<float> predict_sample(const ModelConfig& config, const ModelWeights<float>& weights, const Sample& sample);

}  // namespace sdformer
