#pragma once

#include <string>
#include <vector>

#include "sdformer/numerics/gradcheck.hpp"

namespace sdformer {

struct OpCheck {
  std::string op;
  std::string shape;
  GradCheckReport report;
};

/// Finite-difference check of every differentiable primitive on three input
/// shapes each. Each check differentiates a random projection of the op output.
std::vector<OpCheck> check_primitives(const GradCheckOptions& options = {});

/// Random linear functional sum(r * y) with fixed-seed weights r.
Var<double> random_projection(const Var<double>& y, std::uint64_t seed);

}  // namespace sdformer
