#include "sdformer/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace sdformer {

double GradCheckReport::max_relative_error() const {
  double worst = 0;
  for (const auto& p : parameters) worst = std::max(worst, p.max_relative_error);
  return worst;
}

double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

double scaled_error(double analytic, double numeric, double scale, double floor) {
  return std::abs(analytic - numeric) / std::max(scale, floor);
}

GradCheckReport grad_check(const ScalarFunction& f, const std::vector<NamedTensor>& params,
                           const GradCheckOptions& options) {
  if (options.eps < 1e-7 || options.eps > 1e-3)
    throw ConfigError("grad_check: eps " + std::to_string(options.eps) + " outside [1e-7, 1e-3]");

  GradCheckReport report;
  report.tolerance = options.tolerance;
  report.eps = options.eps;

  std::vector<Var<double>> traced;
  for (const auto& p : params) traced.push_back(parameter(p.value, p.name));
  const Var<double> out = f(traced);
  if (out.value().size() != 1) throw ConfigError("grad_check: function must return a scalar");
  if (!std::isfinite(out.value()[0])) {
    report.failure = "non-finite function value at the unperturbed point";
    return report;
  }
  backward(out);

  std::vector<Tensor<double>> point;
  for (const auto& p : params) point.push_back(p.value);
  auto evaluate = [&]() {
    std::vector<Var<double>> inputs;
    for (const auto& t : point) inputs.push_back(constant(t));
    return f(inputs).value()[0];
  };

  std::mt19937_64 rng(options.seed);
  report.passed = true;
  for (std::size_t p = 0; p < params.size(); ++p) {
    const Tensor<double> analytic = traced[p].grad();
    ParameterCheck check{params[p].name};
    std::vector<Index> coords(static_cast<std::size_t>(analytic.size()));
    std::iota(coords.begin(), coords.end(), Index{0});
    if (static_cast<Index>(coords.size()) > options.max_coordinates) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(static_cast<std::size_t>(options.max_coordinates));
      std::sort(coords.begin(), coords.end());
    }
    double scale = 0;
    for (Index i = 0; i < analytic.size(); ++i) scale = std::max(scale, std::abs(analytic[i]));
    std::vector<std::pair<Index, double>> numerics;
    for (Index i : coords) {
      const double saved = point[p][i];
      point[p][i] = saved + options.eps;
      const double up = evaluate();
      point[p][i] = saved - options.eps;
      const double down = evaluate();
      point[p][i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        report.passed = false;
        report.failure = "non-finite function value perturbing " + params[p].name + "[" + std::to_string(i) + "]";
        report.parameters.push_back(check);
        return report;
      }
      const double numeric = (up - down) / (2 * options.eps);
      numerics.emplace_back(i, numeric);
      scale = std::max(scale, std::abs(numeric));
    }
    for (const auto& [i, numeric] : numerics) {
      const double err = scaled_error(analytic[i], numeric, scale, options.floor);
      check.max_elementwise_error =
          std::max(check.max_elementwise_error, relative_error(analytic[i], numeric, options.floor));
      ++check.checked;
      if (err > check.max_relative_error || check.worst_index < 0) {
        check.max_relative_error = err;
        check.worst_index = i;
      }
    }
    if (check.max_relative_error >= options.tolerance) report.passed = false;
    report.parameters.push_back(check);
  }
  if (!report.passed) {
    const auto worst = std::max_element(report.parameters.begin(), report.parameters.end(), [](const auto& a, const auto& b) {
      return a.max_relative_error < b.max_relative_error;
    });
    report.failure = worst->name + " exceeds tolerance at index " + std::to_string(worst->worst_index) + " (error " +
                     std::to_string(worst->max_relative_error) + ")";
  }
  return report;
}

}  // namespace sdformer
