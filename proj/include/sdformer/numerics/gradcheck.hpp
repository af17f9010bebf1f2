#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sdformer/numerics/autodiff.hpp"

namespace sdformer {

struct GradCheckOptions {
  double eps = 1e-4;
  double tolerance = 1e-6;
  /// Denominator floor of the relative error.
  double floor = 1e-8;
  /// Coordinates checked per parameter; larger parameters are subsampled.
  Index max_coordinates = 32;
  std::uint64_t seed = 0;
};

struct ParameterCheck {
  std::string name;
  /// max |analytic - numeric| over the checked coordinates, divided by the
  /// largest gradient magnitude of the parameter (floored).
  double max_relative_error = 0;
  /// Same error divided by each coordinate's own magnitude instead. Only
  /// informative: near-zero coordinates sit below the resolution of central
  /// differences, which is about |f| * 1e-16 / eps.
  double max_elementwise_error = 0;
  Index worst_index = -1;
  Index checked = 0;
};

struct GradCheckReport {
  std::vector<ParameterCheck> parameters;
  double tolerance = 0;
  double eps = 1e-4;
  bool passed = false;
  std::string failure;

  double max_relative_error() const;
};

struct NamedTensor {
  std::string name;
  Tensor<double> value;
};

using ScalarFunction = std::function<Var<double>(const std::vector<Var<double>>&)>;

/// |a - n| / max(|a|, |n|, floor)
double relative_error(double analytic, double numeric, double floor);
/// |a - n| / max(scale, floor)
double scaled_error(double analytic, double numeric, double scale, double floor);

/// Compares reverse-mode gradients of `f` against central differences.
GradCheckReport grad_check(const ScalarFunction& f, const std::vector<NamedTensor>& params,
                           const GradCheckOptions& options = {});

}  // namespace sdformer
