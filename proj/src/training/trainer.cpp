#include "sdformer/training/trainer.hpp"

#include <cmath>
#include <random>

#include "sdformer/architecture/sdformer.hpp"
#include "sdformer/error.hpp"
#include "sdformer/numerics/parallel.hpp"
#include "sdformer/training/loss.hpp"

namespace sdformer {
namespace {

Tensor<float> flip_w(const Tensor<float>& t) {
  Tensor<float> out(t.shape());
  const Index w = t.dim(2), rows = t.size() / w;
  for (Index r = 0; r < rows; ++r) {
    for (Index x = 0; x < w; ++x) out[r * w + x] = t[r * w + (w - 1 - x)];
  }
  return out;
}

std::mt19937_64 epoch_rng(std::uint64_t seed, int epoch, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

}  // namespace

nlohmann::json EpochLog::to_json() const {
  nlohmann::json j = {{"epoch", epoch}, {"lr", lr}, {"loss", loss}, {"steps", steps}};
  j["metrics"] = validation ? validation->to_json() : nlohmann::json(nullptr);
  return j;
}

std::vector<std::size_t> epoch_order(std::size_t count, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  auto rng = epoch_rng(seed, epoch, 0);
  // Fisher-Yates with a plain modulo draw keeps the order library-independent.
  for (std::size_t i = count; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  return order;
}

Sample flip_horizontal(const Sample& s) { return {s.id, flip_w(s.rgb), flip_w(s.sparse), flip_w(s.gt)}; }

double mean_sparse_depth(const std::vector<Sample>& samples) {
  double sum = 0;
  Index count = 0;
  for (const Sample& s : samples) {
    for (Index i = 0; i < s.sparse.size(); ++i) {
      if (s.sparse[i] > 0) {
        sum += s.sparse[i];
        ++count;
      }
    }
  }
  return count > 0 ? sum / static_cast<double>(count) : 0.0;
}

Tensor<float> predict_sample(const ModelConfig& config, const ModelWeights<float>& weights, const Sample& sample) {
  return predict(config, weights, sample.sparse, sample.rgb);
}

Trainer::Trainer(Checkpoint state, TrainOptions options) : state_(std::move(state)), options_(std::move(options)) {
  options_.schedule.base_lr = state_.optimizer.hyper.base_lr;
  options_.schedule.validate();
  if (options_.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (options_.epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (options_.warmup_steps < 0) throw ConfigError("train: warmup_steps must be >= 0");
}

double Trainer::step(const std::vector<const Sample*>& batch, double lr) {
  if (batch.empty()) throw ConfigError("train: empty batch");
  std::vector<Tensor<float>> masks;
  Index pixels = 0;
  for (const Sample* s : batch) {
    masks.push_back(valid_mask(s->gt));
    pixels += valid_count(masks.back());
  }
  if (pixels == 0) throw ConfigError("train: batch has no valid ground truth");
  const float inv = 1.0f / static_cast<float>(pixels);

  std::vector<std::vector<Tensor<float>>> grads(batch.size());
  std::vector<double> sums(batch.size());
  parallel_for(static_cast<Index>(batch.size()), options_.threads, [&](Index i) {
    const Sample& s = *batch[i];
    const ParameterSet<float> params(state_.weights, true);
    auto pred = model_forward(state_.config, params, constant(s.sparse), constant(s.rgb));
    auto error = masked_error_sum(pred, s.gt, masks[i]);
    sums[i] = error.value()[0];
    backward(scale(error, inv));
    for (std::size_t j = 0; j < params.size(); ++j) grads[i].push_back(params[j].grad());
  });

  double total = 0;
  for (double s : sums) total += s;
  last_error_sum_ = total;
  last_pixels_ = pixels;
  const double loss = total / static_cast<double>(pixels);
  if (!std::isfinite(loss)) throw NumericError("non-finite loss");
  for (std::size_t i = 1; i < grads.size(); ++i) {
    for (std::size_t j = 0; j < grads[0].size(); ++j) grads[0][j].array() += grads[i][j].array();
  }
  adam_step(state_.optimizer, state_.weights, grads[0], lr);
  return loss;
}

EpochLog Trainer::run_epoch(const std::vector<Sample>& train, const std::vector<Sample>* validation) {
  if (train.empty()) throw ConfigError("train: empty dataset");
  const int epoch = state_.epoch;
  EpochLog log;
  log.epoch = epoch;
  log.lr = lr_at_epoch(options_.schedule, epoch);
  const auto order = epoch_order(train.size(), state_.seed, epoch);
  auto flip_rng = epoch_rng(state_.seed, epoch, 1);
  double error_sum = 0;
  Index pixels = 0;
  for (std::size_t begin = 0, batch_index = 0; begin < order.size(); begin += options_.batch_size, ++batch_index) {
    if (options_.max_steps >= 0 && state_.optimizer.step >= options_.max_steps) break;
    const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(options_.batch_size));
    std::vector<Sample> flipped;
    flipped.reserve(end - begin);
    std::vector<const Sample*> batch;
    for (std::size_t k = begin; k < end; ++k) {
      const Sample& s = train[order[k]];
      if (options_.flip && (flip_rng() & 1)) {
        flipped.push_back(flip_horizontal(s));
        batch.push_back(&flipped.back());
      } else {
        batch.push_back(&s);
      }
    }
    double lr = log.lr;
    if (state_.optimizer.step < options_.warmup_steps) {
      lr *= static_cast<double>(state_.optimizer.step + 1) / static_cast<double>(options_.warmup_steps);
    }
    try {
      step(batch, lr);
    } catch (const NumericError& e) {
      throw NumericError("epoch " + std::to_string(epoch) + " batch " + std::to_string(batch_index) + ": " + e.what());
    }
    error_sum += last_error_sum_;
    pixels += last_pixels_;
    ++log.steps;
  }
  log.loss = pixels > 0 ? error_sum / static_cast<double>(pixels) : 0.0;
  ++state_.epoch;
  if (validation && !validation->empty()) {
    const Predictor predictor = [this](const Sample& s) { return predict_sample(state_.config, state_.weights, s); };
    log.validation = evaluate(predictor, *validation, Aggregation::kPixelPooled, options_.threads);
  }
  return log;
}

std::vector<EpochLog> Trainer::run(const std::vector<Sample>& train, const std::vector<Sample>* validation,
                                   const std::function<void(const EpochLog&)>& on_epoch) {
  std::vector<EpochLog> logs;
  while (state_.epoch < options_.epochs) {
    if (options_.max_steps >= 0 && state_.optimizer.step >= options_.max_steps) break;
    logs.push_back(run_epoch(train, validation));
    if (on_epoch) on_epoch(logs.back());
  }
  return logs;
}

}  // namespace sdformer
