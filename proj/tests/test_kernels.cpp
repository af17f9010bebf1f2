#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>

#include "sdformer/numerics/kernels.hpp"
#include "test_support.hpp"

using namespace sdformer;
using sdformer::testing::max_abs_diff;
using sdformer::testing::random_tensor;

namespace {

// Direct summation, independent of the im2col and depthwise paths.
Tensord conv_oracle(const Tensord& x, const Tensord& w, const Tensord* b, int stride, int padding, int groups) {
  const Index cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const Index cout = w.dim(0), k = w.dim(2);
  const Index cin_g = cin / groups, cout_g = cout / groups;
  const Index oh = (h + 2 * padding - k) / stride + 1, ow = (wd + 2 * padding - k) / stride + 1;
  Tensord out(Shape{cout, oh, ow});
  for (Index o = 0; o < cout; ++o) {
    const Index g = o / cout_g;
    for (Index y = 0; y < oh; ++y)
      for (Index xx = 0; xx < ow; ++xx) {
        double acc = b ? (*b)[o] : 0.0;
        for (Index c = 0; c < cin_g; ++c)
          for (Index i = 0; i < k; ++i)
            for (Index j = 0; j < k; ++j) {
              const Index iy = y * stride - padding + i, ix = xx * stride - padding + j;
              if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
              acc += w[((o * cin_g + c) * k + i) * k + j] * x(g * cin_g + c, iy, ix);
            }
        out(o, y, xx) = acc;
      }
  }
  return out;
}

}  // namespace

TEST_CASE("conv2d 1x1 identity weight reproduces the input") {
  const Tensord x = random_tensor(Shape{3, 4, 5}, 1);
  Tensord w(Shape{3, 3, 1, 1});
  for (Index c = 0; c < 3; ++c) w[c * 3 + c] = 1.0;
  CHECK(conv2d(x, w, nullptr) == x);
}

TEST_CASE("conv2d with zero weight and bias is zero") {
  const Tensord x = random_tensor(Shape{2, 6, 6}, 2);
  const Tensord w(Shape{4, 2, 3, 3});
  const Tensord b(Shape{4});
  const Tensord out = conv2d(x, w, &b, {.stride = 1, .padding = 1, .groups = 1});
  CHECK(out.shape() == Shape{4, 6, 6});
  CHECK(out.array().abs().maxCoeff() == 0.0);
}

TEST_CASE("conv2d matches direct summation") {
  const Tensord x = random_tensor(Shape{2, 5, 5}, 3);
  const Tensord w = random_tensor(Shape{3, 2, 3, 3}, 4);
  const Tensord b = random_tensor(Shape{3}, 5);
  CHECK(max_abs_diff(conv2d(x, w, &b, {1, 1, 1}), conv_oracle(x, w, &b, 1, 1, 1)) <= 1e-12);

  SUBCASE("strided, unpadded") {
    CHECK(max_abs_diff(conv2d(x, w, nullptr, {2, 0, 1}), conv_oracle(x, w, nullptr, 2, 0, 1)) <= 1e-12);
  }
  SUBCASE("grouped") {
    const Tensord xg = random_tensor(Shape{4, 6, 7}, 6);
    const Tensord wg = random_tensor(Shape{6, 2, 3, 3}, 7);
    CHECK(max_abs_diff(conv2d(xg, wg, nullptr, {1, 1, 2}), conv_oracle(xg, wg, nullptr, 1, 1, 2)) <= 1e-12);
  }
  SUBCASE("depthwise equals per-channel correlation") {
    const Tensord xd = random_tensor(Shape{5, 7, 6}, 8);
    const Tensord wd = random_tensor(Shape{5, 1, 3, 3}, 9);
    CHECK(max_abs_diff(conv2d(xd, wd, nullptr, {1, 1, 5}), conv_oracle(xd, wd, nullptr, 1, 1, 5)) <= 1e-12);
    CHECK(max_abs_diff(conv2d(xd, wd, nullptr, {2, 1, 5}), conv_oracle(xd, wd, nullptr, 2, 1, 5)) <= 1e-12);
  }
  SUBCASE("tiled im2col on a large map") {
    const Tensord xl = random_tensor(Shape{8, 300, 40}, 10);
    const Tensord wl = random_tensor(Shape{2, 8, 3, 3}, 11);
    CHECK(max_abs_diff(conv2d(xl, wl, nullptr, {1, 1, 1}), conv_oracle(xl, wl, nullptr, 1, 1, 1)) <= 1e-11);
  }
}

TEST_CASE("conv2d rejects mismatched shapes with the offending dimension") {
  const Tensord x(Shape{3, 4, 4});
  CHECK_THROWS_WITH_AS(conv2d(x, Tensord(Shape{2, 2, 3, 3}), nullptr, {1, 1, 1}),
                       doctest::Contains("input-channel dimension"), ConfigError);
  CHECK_THROWS_WITH_AS(conv2d(x, Tensord(Shape{2, 1, 3, 3}), nullptr, {1, 1, 2}),
                       doctest::Contains("input channels 3"), ConfigError);
}

TEST_CASE("layer_norm") {
  const Tensord ones = Tensord::constant(Shape{4}, 1.0);
  const Tensord zeros(Shape{4});

  SUBCASE("constant over channels gives zeros") {
    Tensord x(Shape{4, 2, 3});
    for (Index c = 0; c < 4; ++c)
      for (Index p = 0; p < 6; ++p) x[c * 6 + p] = 0.5 * double(p) - 1.0;
    CHECK(layer_norm(x, ones, zeros, 1e-5).array().abs().maxCoeff() == 0.0);
  }
  SUBCASE("per-location mean zero and variance one") {
    const Tensord x = random_tensor(Shape{4, 3, 3}, 12, -3, 3);
    const Tensord y = layer_norm(x, ones, zeros, 1e-5);
    for (Index p = 0; p < 9; ++p) {
      double mean = 0, var = 0;
      for (Index c = 0; c < 4; ++c) mean += y[c * 9 + p] / 4;
      for (Index c = 0; c < 4; ++c) var += (y[c * 9 + p] - mean) * (y[c * 9 + p] - mean) / 4;
      CHECK(std::abs(mean) <= 1e-6);
      CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
      CHECK(var <= 1.0);
    }
  }
  SUBCASE("random vector vs scalar formula") {
    const Tensord x = random_tensor(Shape{4, 1, 1}, 13);
    const Tensord g = random_tensor(Shape{4}, 14);
    const Tensord b = random_tensor(Shape{4}, 15);
    const double eps = 1e-5;
    double mean = 0;
    for (Index c = 0; c < 4; ++c) mean += x[c];
    mean /= 4;
    double var = 0;
    for (Index c = 0; c < 4; ++c) var += (x[c] - mean) * (x[c] - mean);
    var /= 4;
    const Tensord y = layer_norm(x, g, b, eps);
    for (Index c = 0; c < 4; ++c) CHECK(std::abs(y[c] - ((x[c] - mean) / std::sqrt(var + eps) * g[c] + b[c])) <= 1e-12);
  }
  CHECK_THROWS_AS(layer_norm(Tensord(Shape{3, 2, 2}), ones, zeros, 1e-5), ConfigError);
  CHECK_THROWS_AS(layer_norm(Tensord(Shape{4, 2, 2}), ones, zeros, 0.0), ConfigError);
}

TEST_CASE("activations") {
  const Tensord logits(Shape{2}, std::vector<double>{0.0, std::numbers::ln2});
  const Tensord p = softmax(logits, 0);
  CHECK(p[0] == doctest::Approx(1.0 / 3).epsilon(1e-15));
  CHECK(p[1] == doctest::Approx(2.0 / 3).epsilon(1e-15));

  const Tensord x = random_tensor(Shape{3, 5, 4}, 16, -5, 5);
  for (int axis = 0; axis < 3; ++axis) {
    Tensord shifted = x;
    shifted.array() += 7.25;
    CHECK(max_abs_diff(softmax(x, axis), softmax(shifted, axis)) <= 1e-12);
    const Tensord y = softmax(x, axis);
    CHECK(y.array().minCoeff() >= 0.0);
  }
  const Tensord y = softmax(x, 1);
  for (Index a = 0; a < 3; ++a)
    for (Index c = 0; c < 4; ++c) {
      double total = 0;
      for (Index k = 0; k < 5; ++k) total += y[(a * 5 + k) * 4 + c];
      CHECK(std::abs(total - 1.0) <= 1e-6);
    }
  CHECK_THROWS_AS(softmax(x, 3), ConfigError);

  CHECK(leaky_relu(Tensord::scalar(-1.0), 0.2).item() == doctest::Approx(-0.2));
  CHECK(leaky_relu(Tensord::scalar(3.0), 0.2).item() == 3.0);
  CHECK(gelu(Tensord::scalar(0.0)).item() == 0.0);
  // erf form, not the tanh approximation: GELU(1) = Phi(1).
  CHECK(gelu(Tensord::scalar(1.0)).item() == doctest::Approx(0.8413447460685429).epsilon(1e-14));
}

TEST_CASE("pixel_unshuffle places sub-grids in channels") {
  Tensord x(Shape{1, 4, 4});
  for (Index i = 0; i < 16; ++i) x[i] = double(i);
  const Tensord y = pixel_unshuffle(x, 2);
  REQUIRE(y.shape() == Shape{4, 2, 2});
  for (Index c = 0; c < 4; ++c)
    for (Index h = 0; h < 2; ++h)
      for (Index w = 0; w < 2; ++w) CHECK(y(c, h, w) == x(0, 2 * h + c / 2, 2 * w + c % 2));

  const Tensord r = random_tensor(Shape{8, 6, 10}, 17);
  CHECK(pixel_shuffle(pixel_unshuffle(r, 2), 2) == r);
  CHECK(pixel_unshuffle(r, 1) == r);
  CHECK_THROWS_WITH_AS(pixel_unshuffle(Tensord(Shape{1, 5, 4}), 2), doctest::Contains("height"), ConfigError);
  CHECK_THROWS_WITH_AS(pixel_unshuffle(Tensord(Shape{1, 4, 5}), 2), doctest::Contains("width"), ConfigError);
}

TEST_CASE("window_partition tiles without overlap") {
  CHECK(window_partition(Tensorf(Shape{1, 228, 304}), 12, 16).dim(0) == 361);

  const Tensord x = random_tensor(Shape{3, 12, 16}, 18);
  const Tensord whole = window_partition(x, 12, 16);
  CHECK(whole.shape() == Shape{1, 192, 3});
  const Tensord parts = window_partition(x, 4, 4);
  CHECK(parts.shape() == Shape{12, 16, 3});
  // Window 5 is grid row 1, column 1; position 6 is (1, 2) inside it.
  CHECK(parts[(5 * 16 + 6) * 3 + 2] == x(2, 4 + 1, 4 + 2));
  CHECK(window_merge(parts, 12, 16, 4, 4) == x);
  CHECK_THROWS_WITH_AS(window_partition(x, 5, 4), doctest::Contains("H=12 W=16"), ConfigError);
}

TEST_CASE("roundtrip properties over random divisible sizes") {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> small(1, 4);
  for (int trial = 0; trial < 50; ++trial) {
    const Index c = small(rng), dh = small(rng), dw = small(rng), r = small(rng);
    const Index h = dh * r * small(rng), w = dw * r * small(rng);
    const Tensord x = random_tensor(Shape{c, h, w}, 1000 + trial);
    CHECK(window_merge(window_partition(x, dh, dw), h, w, dh, dw) == x);
    CHECK(pixel_shuffle(pixel_unshuffle(x, int(r)), int(r)) == x);
  }
}

TEST_CASE("elementwise, concat, split, pad and crop") {
  const Tensord a = random_tensor(Shape{12, 3, 3}, 19);
  const Tensord b = random_tensor(Shape{12, 3, 3}, 20);
  const Tensord both = concat<double>({a, b}, 0);
  CHECK(both.shape() == Shape{24, 3, 3});
  const auto parts = split(both, 0, {12, 12});
  CHECK(parts[0] == a);
  CHECK(parts[1] == b);
  CHECK_THROWS_AS(split(both, 0, {12, 11}), ConfigError);
  CHECK_THROWS_AS(add(a, both), ConfigError);
  CHECK(multiply(a, b)[7] == a[7] * b[7]);

  const Padding bottom{0, 1, 0, 0};
  const Tensord padded = pad(a, bottom, PadMode::kReflect);
  CHECK(padded.shape() == Shape{12, 4, 3});
  CHECK(padded(4, 3, 1) == a(4, 1, 1));
  CHECK(crop(padded, bottom) == a);
  const Tensord zp = pad(a, Padding{1, 1, 2, 0}, PadMode::kZero);
  CHECK(zp(0, 0, 0) == 0.0);
  CHECK(crop(zp, Padding{1, 1, 2, 0}) == a);
}

TEST_CASE("matmul_batched") {
  const Tensord lhs(Shape{1, 2, 2}, std::vector<double>{1, 2, 3, 4});
  const Tensord eye(Shape{1, 2, 2}, std::vector<double>{1, 0, 0, 1});
  CHECK(matmul_batched(lhs, eye) == lhs);

  const Tensord a = random_tensor(Shape{4, 3, 5}, 21);
  const Tensord b = random_tensor(Shape{4, 5, 2}, 22);
  const Tensord c = matmul_batched(a, b);
  REQUIRE(c.shape() == Shape{4, 3, 2});
  double worst = 0;
  for (Index n = 0; n < 4; ++n)
    for (Index i = 0; i < 3; ++i)
      for (Index j = 0; j < 2; ++j) {
        double acc = 0;
        for (Index k = 0; k < 5; ++k) acc += a[(n * 3 + i) * 5 + k] * b[(n * 5 + k) * 2 + j];
        worst = std::max(worst, std::abs(acc - c[(n * 3 + i) * 2 + j]));
      }
  CHECK(worst <= 1e-12);
  const Tensord bt = permute(b, {0, 2, 1});
  CHECK(max_abs_diff(matmul_batched(a, bt, false, true), c) <= 1e-12);
  CHECK(max_abs_diff(matmul_batched(permute(a, {0, 2, 1}), b, true, false), c) <= 1e-12);
  CHECK_THROWS_AS(matmul_batched(a, a), ConfigError);
}

TEST_CASE("forward kernels are deterministic") {
  const Tensorf x = random_tensor<float>(Shape{6, 16, 16}, 23);
  const Tensorf w = random_tensor<float>(Shape{6, 6, 3, 3}, 24);
  CHECK(conv2d(x, w, nullptr, {1, 1, 1}) == conv2d(x, w, nullptr, {1, 1, 1}));
  CHECK(softmax(x, 0) == softmax(x, 0));
}
