#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>

#include "sdformer/error.hpp"
#include "sdformer/numerics/grad_suite.hpp"
#include "test_support.hpp"

using namespace sdformer;
using sdformer::testing::random_tensor;

TEST_CASE("sum of a parameter has unit gradient") {
  auto w = parameter(Tensord(Shape{3}, std::vector<double>{1, 2, 3}), "w");
  backward(sum(w));
  CHECK(w.grad() == Tensord(Shape{3}, 1.0));
}

TEST_CASE("sum of squares has gradient 2w") {
  auto w = parameter(Tensord(Shape{3}, std::vector<double>{1, 2, 3}), "w");
  backward(sum(multiply(w, w)));
  CHECK(w.grad() == Tensord(Shape{3}, std::vector<double>{2, 4, 6}));
}

TEST_CASE("backward requires a scalar root") {
  auto w = parameter(Tensord(Shape{2, 2}, 1.0), "w");
  CHECK_THROWS_WITH_AS(backward(scale(w, 2.0)), doctest::Contains("scalar"), std::exception);
}

TEST_CASE("untouched parameter has zero gradient") {
  auto used = parameter(Tensord(Shape{2}, 1.0), "used");
  auto unused = parameter(Tensord(Shape{4}, 5.0), "unused");
  backward(sum(used));
  CHECK(unused.grad() == Tensord(Shape{4}));
}

TEST_CASE("gradient accumulates over shared uses") {
  auto w = parameter(Tensord(Shape{2}, std::vector<double>{1.5, -2}), "w");
  backward(sum(add(scale(w, 3.0), multiply(w, w))));
  CHECK(w.grad() == Tensord(Shape{2}, std::vector<double>{6, -1}));
}

TEST_CASE("constants build no graph") {
  auto x = constant(Tensord(Shape{2}, 1.0));
  auto y = gelu(multiply(x, x));
  CHECK_FALSE(y.requires_grad());
  CHECK(y.node()->inputs.empty());
}

TEST_CASE("every primitive matches central differences") {
  const auto results = check_primitives();
  std::map<std::string, int> shapes_per_op;
  for (const auto& r : results) {
    INFO(r.op << " " << r.shape << " " << r.report.failure << " err=" << r.report.max_relative_error());
    CHECK(r.report.passed);
    CHECK(r.report.max_relative_error() < 1e-6);
    ++shapes_per_op[r.op];
  }
  for (const auto& [op, count] : shapes_per_op) {
    INFO(op);
    CHECK(count >= 3);
  }
}

TEST_CASE("quadratic form gradient is exact to rounding") {
  // f(w) = w^T A w has gradient (A + A^T) w; central differences are exact for quadratics.
  const Tensord a = random_tensor(Shape{1, 5, 5}, 7);
  const Tensord w0 = random_tensor(Shape{1, 5, 1}, 8);
  const ScalarFunction f = [&a](const std::vector<Var<double>>& p) {
    auto aw = matmul_batched(constant(a), p[0]);
    return sum(multiply(p[0], aw));
  };
  GradCheckOptions options;
  options.eps = 1e-3;
  options.tolerance = 1e-9;
  const auto report = grad_check(f, {{"w", w0}}, options);
  CHECK(report.passed);
  CHECK(report.max_relative_error() < 1e-9);
}

TEST_CASE("a wrong backward rule is caught") {
  const ScalarFunction f = [](const std::vector<Var<double>>& p) {
    auto y = make_var<double>("bad_square", multiply(p[0].value(), p[0].value()), {p[0]},
                              [](const Tensord&, const Tensord& g, GradientSlots<double>& slots) {
                                // Missing the factor of two.
                                if (auto* gx = slots[0]) *gx = add(*gx, g);
                              });
    return sum(y);
  };
  const auto report = grad_check(f, {{"x", random_tensor(Shape{4}, 3)}});
  CHECK_FALSE(report.passed);
  CHECK(report.max_relative_error() > 1e-3);
}

TEST_CASE("gradcheck rejects out-of-range step") {
  const ScalarFunction f = [](const std::vector<Var<double>>& p) { return sum(p[0]); };
  GradCheckOptions options;
  options.eps = 1e-2;
  CHECK_THROWS_AS(grad_check(f, {{"x", Tensord(Shape{2}, 1.0)}}, options), ConfigError);
}
