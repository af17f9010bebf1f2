#include "sdformer/numerics/grad_suite.hpp"

#include <random>

namespace sdformer {
namespace {

Tensord uniform(Shape shape, std::uint64_t seed, double lo = -1, double hi = 1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensord t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t[i] = dist(rng);
  return t;
}

// Values bounded away from the kink at zero.
Tensord away_from_zero(Shape shape, std::uint64_t seed) {
  Tensord t = uniform(std::move(shape), seed);
  for (Index i = 0; i < t.size(); ++i) t[i] += t[i] >= 0 ? 0.1 : -0.1;
  return t;
}

using V = Var<double>;
using Params = std::vector<NamedTensor>;

struct Case {
  std::string op;
  Params params;
  std::function<V(const std::vector<V>&)> body;
};

}  // namespace

Var<double> random_projection(const Var<double>& y, std::uint64_t seed) {
  return sum(multiply(y, constant(uniform(y.shape(), seed))));
}

std::vector<OpCheck> check_primitives(const GradCheckOptions& options) {
  std::vector<Case> cases;
  std::uint64_t seed = 100;
  auto next = [&] { return seed++; };

  const std::vector<std::array<Index, 3>> maps{{2, 5, 5}, {3, 4, 6}, {1, 6, 3}};
  for (const auto& [c, h, w] : maps) {
    cases.push_back({"conv2d_3x3",
                     {{"x", uniform(Shape{c, h, w}, next())},
                      {"weight", uniform(Shape{3, c, 3, 3}, next())},
                      {"bias", uniform(Shape{3}, next())}},
                     [](const std::vector<V>& p) { return conv2d(p[0], p[1], &p[2], {1, 1, 1}); }});
    cases.push_back({"conv2d_3x3_stride2",
                     {{"x", uniform(Shape{c, h, w}, next())}, {"weight", uniform(Shape{2, c, 3, 3}, next())}},
                     [](const std::vector<V>& p) { return conv2d(p[0], p[1], nullptr, {2, 1, 1}); }});
    cases.push_back({"conv2d_1x1",
                     {{"x", uniform(Shape{c, h, w}, next())}, {"weight", uniform(Shape{4, c, 1, 1}, next())}},
                     [](const std::vector<V>& p) { return conv2d(p[0], p[1], nullptr); }});
    cases.push_back({"conv2d_depthwise",
                     {{"x", uniform(Shape{c, h, w}, next())}, {"weight", uniform(Shape{c, 1, 3, 3}, next())}},
                     [c](const std::vector<V>& p) { return conv2d(p[0], p[1], nullptr, {1, 1, int(c)}); }});
  }
  for (const auto& [c, h, w] : std::vector<std::array<Index, 3>>{{4, 3, 3}, {3, 2, 5}, {6, 1, 4}}) {
    cases.push_back({"layer_norm",
                     {{"x", uniform(Shape{c, h, w}, next(), -2, 2)},
                      {"gamma", uniform(Shape{c}, next())},
                      {"beta", uniform(Shape{c}, next())}},
                     [](const std::vector<V>& p) { return layer_norm(p[0], p[1], p[2], 1e-5); }});
  }
  const std::vector<Shape> flat{Shape{7}, Shape{2, 3, 4}, Shape{3, 5}};
  for (const auto& s : flat) {
    cases.push_back({"gelu", {{"x", uniform(s, next(), -3, 3)}}, [](const std::vector<V>& p) { return gelu(p[0]); }});
    cases.push_back({"leaky_relu", {{"x", away_from_zero(s, next())}},
                     [](const std::vector<V>& p) { return leaky_relu(p[0], 0.2); }});
    cases.push_back({"add", {{"a", uniform(s, next())}, {"b", uniform(s, next())}},
                     [](const std::vector<V>& p) { return add(p[0], p[1]); }});
    cases.push_back({"multiply", {{"a", uniform(s, next())}, {"b", uniform(s, next())}},
                     [](const std::vector<V>& p) { return multiply(p[0], p[1]); }});
    cases.push_back({"scale", {{"x", uniform(s, next())}}, [](const std::vector<V>& p) { return scale(p[0], -1.75); }});
    cases.push_back({"sum", {{"x", uniform(s, next())}}, [](const std::vector<V>& p) { return sum(p[0]); }});
  }
  cases.push_back({"softmax", {{"x", uniform(Shape{3, 4, 5}, next(), -3, 3)}},
                   [](const std::vector<V>& p) { return softmax(p[0], 2); }});
  cases.push_back({"softmax", {{"x", uniform(Shape{2, 6}, next(), -3, 3)}},
                   [](const std::vector<V>& p) { return softmax(p[0], 1); }});
  cases.push_back({"softmax", {{"x", uniform(Shape{4, 3, 2}, next(), -3, 3)}},
                   [](const std::vector<V>& p) { return softmax(p[0], 0); }});
  for (const auto& [c, h, w] : std::vector<std::array<Index, 3>>{{1, 4, 4}, {2, 6, 2}, {3, 2, 8}}) {
    cases.push_back({"pixel_unshuffle", {{"x", uniform(Shape{c, h, w}, next())}},
                     [](const std::vector<V>& p) { return pixel_unshuffle(p[0], 2); }});
    cases.push_back({"pixel_shuffle", {{"x", uniform(Shape{4 * c, h, w}, next())}},
                     [](const std::vector<V>& p) { return pixel_shuffle(p[0], 2); }});
    cases.push_back({"window_partition", {{"x", uniform(Shape{c, h, w}, next())}},
                     [](const std::vector<V>& p) { return window_partition(p[0], 2, 2); }});
    cases.push_back({"window_merge", {{"x", uniform(Shape{(h / 2) * (w / 2), 4, c}, next())}},
                     [h, w](const std::vector<V>& p) { return window_merge(p[0], h, w, 2, 2); }});
    cases.push_back({"concat",
                     {{"a", uniform(Shape{c, h, w}, next())}, {"b", uniform(Shape{2, h, w}, next())}},
                     [](const std::vector<V>& p) { return concat<double>({p[0], p[1]}, 0); }});
    cases.push_back({"split",
                     {{"x", uniform(Shape{c + 2, h, w}, next())}},
                     [c](const std::vector<V>& p) {
                       auto parts = split(p[0], 0, {c, 2});
                       return concat<double>({scale(parts[0], 2.0), parts[1]}, 0);
                     }});
    cases.push_back({"pad_reflect", {{"x", uniform(Shape{c, h, w}, next())}},
                     [](const std::vector<V>& p) { return pad(p[0], Padding{1, 1, 0, 1}, PadMode::kReflect); }});
    cases.push_back({"pad_zero", {{"x", uniform(Shape{c, h, w}, next())}},
                     [](const std::vector<V>& p) { return pad(p[0], Padding{0, 1, 2, 0}, PadMode::kZero); }});
    cases.push_back({"crop", {{"x", uniform(Shape{c, h, w}, next())}},
                     [](const std::vector<V>& p) { return crop(p[0], Padding{1, 0, 0, 1}); }});
    cases.push_back({"permute", {{"x", uniform(Shape{c, h, w}, next())}},
                     [](const std::vector<V>& p) { return permute(p[0], {2, 0, 1}); }});
    cases.push_back({"reshape", {{"x", uniform(Shape{c, h, w}, next())}},
                     [c, h, w](const std::vector<V>& p) { return reshape(p[0], Shape{c * h * w}); }});
  }
  for (const auto& [b, m, k, n] : std::vector<std::array<Index, 4>>{{1, 2, 3, 4}, {3, 4, 2, 3}, {2, 5, 5, 1}}) {
    cases.push_back({"matmul_batched",
                     {{"a", uniform(Shape{b, m, k}, next())}, {"b", uniform(Shape{b, k, n}, next())}},
                     [](const std::vector<V>& p) { return matmul_batched(p[0], p[1]); }});
    cases.push_back({"matmul_batched_tb",
                     {{"a", uniform(Shape{b, m, k}, next())}, {"b", uniform(Shape{b, n, k}, next())}},
                     [](const std::vector<V>& p) { return matmul_batched(p[0], p[1], false, true); }});
    cases.push_back({"matmul_batched_ta",
                     {{"a", uniform(Shape{b, k, m}, next())}, {"b", uniform(Shape{b, k, n}, next())}},
                     [](const std::vector<V>& p) { return matmul_batched(p[0], p[1], true, false); }});
  }

  std::vector<OpCheck> results;
  for (const auto& c : cases) {
    const std::uint64_t projection_seed = next();
    const ScalarFunction f = [&c, projection_seed](const std::vector<V>& p) {
      return random_projection(c.body(p), projection_seed);
    };
    results.push_back({c.op, c.params.front().value.shape().str(), grad_check(f, c.params, options)});
  }
  return results;
}

}  // namespace sdformer
