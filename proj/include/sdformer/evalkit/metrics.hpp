#pragma once

#include <functional>
#include <vector>

#include <json.hpp>

#include "sdformer/datakit/sample.hpp"

namespace sdformer {

/// Inverse metrics are in 1/km and deltas in percent. rmse and mae are in
/// meters, or millimeters when a report is converted with to_millimeters().
struct MetricsReport {
  double rmse = 0;
  double mae = 0;
  double irmse = 0;
  double imae = 0;
  double rel = 0;
  double d1 = 0;
  double d2 = 0;
  double d3 = 0;
  Index pixels = 0;
  Index samples = 0;
  /// Valid pixels where the prediction was not positive.
  Index warnings = 0;

  MetricsReport to_millimeters() const;
  nlohmann::json to_json() const;
};

/// Stand-in for non-positive predictions in inverse metrics, in meters.
inline constexpr double kInverseClamp = 1e-3;

/// Pools sums over the valid pixels of every added map.
class MetricsAccumulator {
 public:
  /// Pixels with mask > 0 count; pred and gt are in meters.
  void add(const Tensor<float>& pred, const Tensor<float>& gt, const Tensor<float>& mask);
  template <typename Scalar>
  void add_values(const Scalar* pred, const Scalar* gt, const Scalar* mask, Index n);
  /// Throws ConfigError when no valid pixel was added.
  MetricsReport report() const;

 private:
  double sq_ = 0, abs_ = 0, inv_sq_ = 0, inv_abs_ = 0, rel_ = 0;
  Index within_[3] = {0, 0, 0};
  Index pixels_ = 0, samples_ = 0, warnings_ = 0;
};

template <typename Scalar>
MetricsReport compute_metrics(const Tensor<Scalar>& pred, const Tensor<Scalar>& gt, const Tensor<Scalar>& mask);

using Predictor = std::function<Tensor<float>(const Sample&)>;

enum class Aggregation { kPixelPooled, kPerImage };

/// Runs `predict` on every sample and scores it against gt > 0 pixels.
/// Predictions run on up to `threads` workers; the reduction order is fixed.
MetricsReport evaluate(const Predictor& predict, const std::vector<Sample>& samples,
                       Aggregation aggregation = Aggregation::kPixelPooled, int threads = 1);

}  // namespace sdformer
