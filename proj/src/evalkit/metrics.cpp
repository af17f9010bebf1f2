#include "sdformer/evalkit/metrics.hpp"

#include <cmath>

#include "sdformer/error.hpp"
#include "sdformer/numerics/parallel.hpp"

namespace sdformer {
namespace {

constexpr double kThresholds[3] = {1.25, 1.25 * 1.25, 1.25 * 1.25 * 1.25};

}  // namespace

MetricsReport MetricsReport::to_millimeters() const {
  MetricsReport r = *this;
  r.rmse *= 1000;
  r.mae *= 1000;
  return r;
}

nlohmann::json MetricsReport::to_json() const {
  return {{"rmse", rmse}, {"mae", mae}, {"irmse", irmse},   {"imae", imae},       {"rel", rel},
          {"d1", d1},     {"d2", d2},   {"d3", d3},         {"pixels", pixels},   {"samples", samples},
          {"warnings", warnings}};
}

template <typename Scalar>
void MetricsAccumulator::add_values(const Scalar* pred, const Scalar* gt, const Scalar* mask, Index n) {
  ++samples_;
  for (Index i = 0; i < n; ++i) {
    if (!(mask[i] > 0)) continue;
    const double g = gt[i];
    double p = pred[i];
    const double e = p - g;
    sq_ += e * e;
    abs_ += std::abs(e);
    rel_ += std::abs(e) / g;
    ++pixels_;
    if (p > 0) {
      const double ratio = std::max(g / p, p / g);
      for (int t = 0; t < 3; ++t) within_[t] += ratio < kThresholds[t];
    } else {
      ++warnings_;
      p = kInverseClamp;
    }
    const double ie = 1.0 / p - 1.0 / g;
    inv_sq_ += ie * ie;
    inv_abs_ += std::abs(ie);
  }
}

void MetricsAccumulator::add(const Tensor<float>& pred, const Tensor<float>& gt, const Tensor<float>& mask) {
  if (pred.shape() != gt.shape() || mask.shape() != gt.shape()) {
    throw ConfigError("metrics: shapes differ: pred " + pred.shape().str() + ", gt " + gt.shape().str() + ", mask " +
                      mask.shape().str());
  }
  add_values(pred.data(), gt.data(), mask.data(), gt.size());
}

MetricsReport MetricsAccumulator::report() const {
  if (pixels_ == 0) throw ConfigError("metrics: no valid pixels");
  const double n = static_cast<double>(pixels_);
  MetricsReport r;
  r.rmse = std::sqrt(sq_ / n);
  r.mae = abs_ / n;
  r.irmse = std::sqrt(inv_sq_ / n) * 1000;
  r.imae = inv_abs_ / n * 1000;
  r.rel = rel_ / n;
  r.d1 = 100.0 * static_cast<double>(within_[0]) / n;
  r.d2 = 100.0 * static_cast<double>(within_[1]) / n;
  r.d3 = 100.0 * static_cast<double>(within_[2]) / n;
  r.pixels = pixels_;
  r.samples = samples_;
  r.warnings = warnings_;
  return r;
}

template <typename Scalar>
MetricsReport compute_metrics(const Tensor<Scalar>& pred, const Tensor<Scalar>& gt, const Tensor<Scalar>& mask) {
  if (pred.shape() != gt.shape() || mask.shape() != gt.shape()) {
    throw ConfigError("metrics: shapes differ: pred " + pred.shape().str() + ", gt " + gt.shape().str() + ", mask " +
                      mask.shape().str());
  }
  MetricsAccumulator acc;
  acc.add_values(pred.data(), gt.data(), mask.data(), gt.size());
  return acc.report();
}

MetricsReport evaluate(const Predictor& predict, const std::vector<Sample>& samples, Aggregation aggregation,
                       int threads) {
  if (samples.empty()) throw ConfigError("evaluate: empty dataset");
  std::vector<Tensor<float>> predictions(samples.size());
  parallel_for(static_cast<Index>(samples.size()), threads,
               [&](Index i) { predictions[i] = predict(samples[i]); });

  if (aggregation == Aggregation::kPixelPooled) {
    MetricsAccumulator acc;
    for (std::size_t i = 0; i < samples.size(); ++i) acc.add(predictions[i], samples[i].gt, valid_mask(samples[i].gt));
    return acc.report();
  }
  MetricsReport mean;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const MetricsReport r = compute_metrics(predictions[i], samples[i].gt, valid_mask(samples[i].gt));
    mean.rmse += r.rmse;
    mean.mae += r.mae;
    mean.irmse += r.irmse;
    mean.imae += r.imae;
    mean.rel += r.rel;
    mean.d1 += r.d1;
    mean.d2 += r.d2;
    mean.d3 += r.d3;
    mean.pixels += r.pixels;
    mean.warnings += r.warnings;
  }
  const double n = static_cast<double>(samples.size());
  for (double* v : {&mean.rmse, &mean.mae, &mean.irmse, &mean.imae, &mean.rel, &mean.d1, &mean.d2, &mean.d3}) *v /= n;
  mean.samples = static_cast<Index>(samples.size());
  return mean;
}

template void MetricsAccumulator::add_values(const float*, const float*, const float*, Index);
template void MetricsAccumulator::add_values(const double*, const double*, const double*, Index);
template MetricsReport compute_metrics(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&);
template MetricsReport compute_metrics(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&);

}  // namespace sdformer
