#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "sdformer/architecture/counting.hpp"
#include "sdformer/architecture/sdformer.hpp"
#include "sdformer/error.hpp"
#include "sdformer/numerics/grad_suite.hpp"
#include "test_support.hpp"

using namespace sdformer;
using sdformer::testing::max_abs_diff;
using sdformer::testing::random_tensor;
using sdformer::testing::random_weights;

namespace {

// Odd extents at level 3 exercise the pad/crop path.
ModelConfig odd_config() {
  ModelConfig c;
  c.base_channels = 6;
  c.stages[0] = {1, 1, {Window{2, 2}, Window{4, 4}, Window{2, 4}}};
  c.stages[1] = {1, 2, {Window{2, 2}, Window{1, 2}, Window{2, 11}}};
  c.stages[2] = {1, 2, {Window{1, 1}, Window{3, 1}, Window{9, 11}}};
  c.stages[3] = {2, 4, {Window{5, 6}, Window{1, 2}, Window{5, 3}}};
  c.refinement_blocks = 1;
  c.expansion = 1.5;
  return c;
}

BlockSpec small_block() {
  BlockSpec s;
  s.channels = 12;
  s.heads = 2;
  s.windows = {Window{2, 2}, Window{4, 4}, Window{8, 8}};
  s.hidden = 20;
  return s;
}

ModelWeights<double> block_weights(const BlockSpec& s, std::uint64_t seed) {
  ModelWeights<double> w;
  const Index c = s.channels, h = s.hidden;
  w.add("b.norm1.gamma", random_tensor(Shape{c}, seed + 1, 0.5, 1.5));
  w.add("b.norm1.beta", random_tensor(Shape{c}, seed + 2, -0.2, 0.2));
  w.add("b.attn.qkv.weight", random_tensor(Shape{3 * c, c, 1, 1}, seed + 3, -0.5, 0.5));
  w.add("b.attn.qkv_dw.weight", random_tensor(Shape{3 * c, 1, 3, 3}, seed + 4, -0.5, 0.5));
  w.add("b.attn.proj.weight", random_tensor(Shape{c, c, 1, 1}, seed + 5, -0.5, 0.5));
  w.add("b.norm2.gamma", random_tensor(Shape{c}, seed + 6, 0.5, 1.5));
  w.add("b.norm2.beta", random_tensor(Shape{c}, seed + 7, -0.2, 0.2));
  w.add("b.ffn.in.weight", random_tensor(Shape{2 * h, c, 1, 1}, seed + 8, -0.5, 0.5));
  w.add("b.ffn.dw.weight", random_tensor(Shape{2 * h, 1, 3, 3}, seed + 9, -0.5, 0.5));
  w.add("b.ffn.out.weight", random_tensor(Shape{c, h, 1, 1}, seed + 10, -0.5, 0.5));
  return w;
}

std::vector<NamedTensor> named(const ModelWeights<double>& w) {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < w.size(); ++i) out.push_back({w.names()[i], w[i]});
  return out;
}

}  // namespace

TEST_CASE("nyu and kitti presets validate at their input sizes") {
  CHECK_NOTHROW(validate(ModelConfig::nyu(), 228, 304));
  CHECK_NOTHROW(validate(ModelConfig::kitti(), 320, 1216));
  const auto nyu = plan_levels(228, 304);
  CHECK(nyu[2].height == 57);
  CHECK(nyu[2].pad == Padding{0, 1, 0, 0});
  CHECK(nyu[3].height == 29);
  CHECK(nyu[3].width == 38);
  const auto kitti = plan_levels(320, 1216);
  CHECK(kitti[3].height == 40);
  CHECK(kitti[3].width == 152);
}

TEST_CASE("invalid configs are rejected with the stage named") {
  ModelConfig c = ModelConfig::nyu();
  c.base_channels = 10;
  CHECK_THROWS_AS(validate(c), ConfigError);
  CHECK_THROWS_AS(build_model(c, 0), ConfigError);

  ModelConfig w = ModelConfig::nyu();
  w.stages[2].windows[1] = Window{5, 19};
  CHECK_THROWS_WITH_AS(validate(w, 228, 304), doctest::Contains("stage 3"), ConfigError);

  ModelConfig h = ModelConfig::nyu();
  h.stages[1].heads = 3;
  CHECK_THROWS_WITH_AS(validate(h), doctest::Contains("stage 2"), ConfigError);
}

TEST_CASE("per-head dimension is constant across stages") {
  for (int level = 1; level <= 4; ++level) {
    const Placement p = level == 4 ? Placement::kLatent : Placement::kEncoder;
    CHECK(block_spec(ModelConfig::nyu(), p, level).head_dim() == 8);
    CHECK(block_spec(ModelConfig::kitti(), p, level).head_dim() == 4);
  }
  CHECK(block_spec(ModelConfig::nyu(), Placement::kRefinement, 1).head_dim() == 8);
  CHECK(block_spec(ModelConfig::nyu(), Placement::kRefinement, 1).channels == 72);
  CHECK(block_spec(ModelConfig::nyu(), Placement::kDecoder, 1).channels == 48);
}

TEST_CASE("hidden width floors the expansion") {
  CHECK(ModelConfig::nyu().hidden_channels(24) == 69);
  CHECK(ModelConfig::kitti().hidden_channels(12) == 24);
}

TEST_CASE("config json roundtrip and strict keys") {
  const ModelConfig k = ModelConfig::kitti();
  const ModelConfig back = model_config_from_json(to_json(k));
  CHECK(to_json(back) == to_json(k));
  auto j = to_json(k);
  j["windowz"] = 1;
  CHECK_THROWS_WITH_AS(model_config_from_json(j), doctest::Contains("windowz"), ConfigError);
  auto bad = to_json(k);
  bad["attention_variant"] = "full";
  CHECK_THROWS_AS(model_config_from_json(bad), ConfigError);
}

TEST_CASE("build is deterministic and initialized as documented") {
  const auto a = build_model(ModelConfig::tiny(), 5);
  const auto b = build_model(ModelConfig::tiny(), 5);
  const auto c = build_model(ModelConfig::tiny(), 6);
  CHECK(a == b);
  CHECK_FALSE(a == c);
  CHECK(a.at("encoder1.block0.norm1.gamma") == Tensor<float>(Shape{6}, 1.0f));
  CHECK(a.at("down1.bias") == Tensor<float>(Shape{3}));
  const auto& w = a.at("latent.block0.attn.qkv.weight");
  for (Index i = 0; i < w.size(); ++i) CHECK(std::abs(w[i]) <= 0.04f);
  // Non-block convs: U(-1/sqrt(fan_in), 1/sqrt(fan_in)); down1 has fan_in 6 * 9.
  const auto& d = a.at("down1.weight");
  const float bound = 1.0f / std::sqrt(54.0f);
  float widest = 0;
  for (Index i = 0; i < d.size(); ++i) widest = std::max(widest, std::abs(d[i]));
  CHECK(widest <= bound);
  CHECK(widest > 0.5f * bound);
  CHECK(a.at("output.bias") == Tensor<float>(Shape{1}));
}

TEST_CASE("set_output_bias moves the whole prediction") {
  const ModelConfig config = ModelConfig::tiny();
  auto weights = build_model(config, 2);
  const Tensor<float> sparse = random_tensor<float>(Shape{1, 16, 16}, 1, 0, 5);
  const Tensor<float> rgb = random_tensor<float>(Shape{3, 16, 16}, 2, 0, 1);
  const Tensor<float> before = predict(config, weights, sparse, rgb);
  set_output_bias(weights, 4.5f);
  const Tensor<float> after = predict(config, weights, sparse, rgb);
  CHECK(max_abs_diff(after, add(before, Tensor<float>(before.shape(), 4.5f))) < 1e-5);
}

TEST_CASE("downsample and upsample shapes") {
  ModelWeights<double> w;
  w.add("d.weight", random_tensor(Shape{48, 96, 3, 3}, 1, -0.1, 0.1));
  w.add("d.bias", Tensord(Shape{48}));
  w.add("u.weight", random_tensor(Shape{384, 192, 3, 3}, 2, -0.1, 0.1));
  w.add("u.bias", Tensord(Shape{384}));
  const ParameterSet<double> p(w, false);
  const auto levels = plan_levels(228, 304);
  auto x = constant(random_tensor(Shape{96, 57, 76}, 3));
  auto down = downsample(x, p, "d", levels[2].pad);
  CHECK(down.shape() == Shape{192, 29, 38});
  auto up = upsample(down, p, "u", levels[2].pad);
  CHECK(up.shape() == Shape{96, 57, 76});

  ModelWeights<double> w1;
  w1.add("d.weight", random_tensor(Shape{12, 24, 3, 3}, 4, -0.1, 0.1));
  w1.add("d.bias", Tensord(Shape{12}));
  const ParameterSet<double> p1(w1, false);
  CHECK(downsample(constant(Tensord(Shape{24, 228, 304})), p1, "d", {}).shape() == Shape{48, 114, 152});
}

TEST_CASE("input module shapes and zero input") {
  ModelConfig c = ModelConfig::nyu();
  const auto w = build_model(c, 1).cast<double>();
  const ParameterSet<double> p(w, false);
  auto out = input_module(constant(Tensord(Shape{1, 64, 64})), constant(Tensord(Shape{3, 64, 64})), p);
  CHECK(out.shape() == Shape{24, 64, 64});
  CHECK(out.value() == Tensord(Shape{24, 64, 64}));
  CHECK(w.at("input.depth.weight").dim(0) == 12);
  CHECK(w.at("input.rgb.weight").dim(0) == 12);
  CHECK_THROWS_AS(input_module(constant(Tensord(Shape{1, 64, 64})), constant(Tensord(Shape{3, 64, 32})), p),
                  ConfigError);
}

TEST_CASE("single-position windows pass values through") {
  const auto q = constant(random_tensor(Shape{10, 1, 6}, 1));
  const auto k = constant(random_tensor(Shape{10, 1, 6}, 2));
  const auto v = constant(random_tensor(Shape{10, 1, 6}, 3));
  CHECK(window_attention(q, k, v, 2).value() == v.value());

  // Identity qkv projections and [1,1] windows: dwsa reduces to the output projection.
  BlockSpec s = small_block();
  s.windows = {Window{1, 1}, Window{1, 1}, Window{1, 1}};
  ModelWeights<double> w;
  Tensord qkv(Shape{36, 12, 1, 1});
  for (Index i = 0; i < 36; ++i) qkv[i * 12 + i % 12] = 1;
  Tensord dw(Shape{36, 1, 3, 3});
  for (Index i = 0; i < 36; ++i) dw[i * 9 + 4] = 1;
  w.add("a.qkv.weight", qkv);
  w.add("a.qkv_dw.weight", dw);
  w.add("a.proj.weight", random_tensor(Shape{12, 12, 1, 1}, 4));
  const ParameterSet<double> p(w, false);
  const Tensord x = random_tensor(Shape{12, 4, 4}, 5);
  const Tensord expected = conv2d(x, w.at("a.proj.weight"), nullptr);
  CHECK(max_abs_diff(dwsa(constant(x), p, "a", s).value(), expected) < 1e-14);
}

TEST_CASE("constant keys average the window values") {
  const Index n = 3, a = 5, d = 4;
  Tensord k(Shape{n, a, d});
  for (Index i = 0; i < k.size(); ++i) k[i] = double(i % d) * 0.3;  // same row at every position
  const Tensord v = random_tensor(Shape{n, a, d}, 9);
  const auto y = window_attention(constant(random_tensor(Shape{n, a, d}, 8)), constant(k), constant(v), 1);
  for (Index w = 0; w < n; ++w) {
    for (Index c = 0; c < d; ++c) {
      double mean = 0;
      for (Index t = 0; t < a; ++t) mean += v[(w * a + t) * d + c];
      mean /= a;
      for (Index t = 0; t < a; ++t) CHECK(y.value()[(w * a + t) * d + c] == doctest::Approx(mean).epsilon(1e-12));
    }
  }
}

TEST_CASE("chunked inference attention matches the traced path") {
  const Index n = 200, a = 256, d = 6;
  const Tensor<float> q = random_tensor<float>(Shape{n, a, d}, 1), k = random_tensor<float>(Shape{n, a, d}, 2),
                      v = random_tensor<float>(Shape{n, a, d}, 3);
  const auto chunked = window_attention(constant(q), constant(k), constant(v), 3).value();
  const auto traced = window_attention(parameter(q), constant(k), constant(v), 3).value();
  CHECK(chunked == traced);
}

TEST_CASE("gffn equals a direct composition of kernels") {
  BlockSpec s = small_block();
  s.channels = 6;
  s.hidden = 11;
  ModelWeights<double> w;
  w.add("f.in.weight", random_tensor(Shape{22, 6, 1, 1}, 1));
  w.add("f.dw.weight", random_tensor(Shape{22, 1, 3, 3}, 2));
  w.add("f.out.weight", random_tensor(Shape{6, 11, 1, 1}, 3));
  const ParameterSet<double> p(w, false);
  const Tensord x = random_tensor(Shape{6, 8, 8}, 4);
  const Tensord t = conv2d(conv2d(x, w.at("f.in.weight"), nullptr), w.at("f.dw.weight"), nullptr, {1, 1, 22});
  const auto halves = split(t, 0, {11, 11});
  const Tensord expected = conv2d(multiply(gelu(halves[0]), halves[1]), w.at("f.out.weight"), nullptr);
  CHECK(feed_forward(constant(x), p, "f", s).value() == expected);
  CHECK(feed_forward(constant(Tensord(Shape{6, 8, 8})), p, "f", s).value() == Tensord(Shape{6, 8, 8}));
}

TEST_CASE("zeroed output projections make blocks the identity") {
  for (auto ffn : {FfnVariant::kGffn, FfnVariant::kMlp}) {
    BlockSpec s = small_block();
    s.ffn = ffn;
    ModelConfig c = ModelConfig::tiny();
    c.ffn = ffn;
    auto w = build_model(c, 3).cast<double>();
    zero_output_projections(w);
    const ParameterSet<double> p(w, false);
    const BlockSpec spec = block_spec(c, Placement::kEncoder, 2);
    const Tensord x = random_tensor(Shape{12, 8, 8}, 4);
    CHECK(sdformer_block(constant(x), p, "encoder2.block0", spec).value() == x);
  }
}

TEST_CASE("block output shape matches input for random configs") {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    BlockSpec s = small_block();
    s.heads = std::array<int, 3>{1, 2, 4}[trial % 3];
    s.attention = trial % 2 ? AttentionVariant::kWsa : AttentionVariant::kDwsa;
    const auto w = block_weights(s, 10 * trial);
    const ParameterSet<double> p(w, false);
    CHECK(sdformer_block(constant(random_tensor(Shape{12, 8, 16}, trial)), p, "b", s).shape() == Shape{12, 8, 16});
  }
}

TEST_CASE("block gradient matches finite differences") {
  for (auto attention : {AttentionVariant::kDwsa, AttentionVariant::kWsa}) {
    BlockSpec s = small_block();
    s.attention = attention;
    const auto w = block_weights(s, 20);
    auto params = named(w);
    params.push_back({"x", random_tensor(Shape{12, 8, 8}, 21)});
    const ScalarFunction f = [&](const std::vector<Var<double>>& v) {
      const ParameterSet<double> p(w, std::vector<Var<double>>(v.begin(), v.end() - 1));
      return random_projection(sdformer_block(v.back(), p, "b", s), 22);
    };
    const auto report = grad_check(f, params);
    INFO(report.failure);
    CHECK(report.passed);
    CHECK(report.max_relative_error() < 1e-6);
  }
}

TEST_CASE("window attention gradient matches finite differences") {
  const ScalarFunction f = [](const std::vector<Var<double>>& v) {
    return random_projection(window_attention(v[0], v[1], v[2], 2), 5);
  };
  const auto report = grad_check(f, {{"q", random_tensor(Shape{3, 8, 4}, 1, -2, 2)},
                                     {"k", random_tensor(Shape{3, 8, 4}, 2, -2, 2)},
                                     {"v", random_tensor(Shape{3, 8, 4}, 3)}});
  CHECK(report.passed);
  CHECK(report.max_relative_error() < 1e-6);
}

TEST_CASE("full model forward touches every parameter once traced") {
  const ModelConfig c = odd_config();
  CHECK_NOTHROW(validate(c, 36, 44));
  const auto w = random_weights(c, 1, 0.2);
  const ParameterSet<double> p(w, true);
  MacTally tally;
  auto y = model_forward(c, p, constant(random_tensor(Shape{1, 36, 44}, 2, 0, 5)),
                         constant(random_tensor(Shape{3, 36, 44}, 3, 0, 1)), &tally);
  CHECK(y.shape() == Shape{1, 36, 44});
  CHECK(p.unused().empty());
  backward(sum(y));
  for (std::size_t i = 0; i < p.size(); ++i) {
    INFO(w.names()[i]);
    CHECK(p[i].grad().shape() == w[i].shape());
  }
  const MacCount m = count_macs(c, 36, 44);
  CHECK(tally.conv == m.conv);
  CHECK(tally.attention == m.attention);
}

TEST_CASE("mac tally matches the analytic count for each variant") {
  for (auto attention : {AttentionVariant::kDwsa, AttentionVariant::kWsa}) {
    for (auto ffn : {FfnVariant::kGffn, FfnVariant::kMlp}) {
      ModelConfig c = ModelConfig::tiny();
      c.attention = attention;
      c.ffn = ffn;
      const auto w = build_model(c, 2);
      const ParameterSet<float> p(w, false);
      MacTally tally;
      model_forward(c, p, constant(Tensor<float>(Shape{1, 32, 32})), constant(Tensor<float>(Shape{3, 32, 32})), &tally);
      const MacCount m = count_macs(c, 32, 32);
      CHECK(tally.conv == m.conv);
      CHECK(tally.attention == m.attention);
    }
  }
}

TEST_CASE("parameter counts agree across the walk, the formula and the weights") {
  for (ModelConfig c : {ModelConfig::nyu(), ModelConfig::kitti(), ModelConfig::tiny(), odd_config()}) {
    for (auto ffn : {FfnVariant::kGffn, FfnVariant::kMlp}) {
      c.ffn = ffn;
      const ParamCount count = count_params(c);
      CHECK(count.total == closed_form_params(c));
      CHECK(count.total == build_model(c, 0).parameter_count());
      Index sum = 0;
      for (const auto& [module, n] : count.modules) sum += n;
      CHECK(sum == count.total);
    }
  }
  ModelConfig dwsa = ModelConfig::nyu(), wsa = ModelConfig::nyu();
  wsa.attention = AttentionVariant::kWsa;
  CHECK(count_params(dwsa).total == count_params(wsa).total);
}

TEST_CASE("attention macs grow with window area") {
  ModelConfig c = ModelConfig::nyu();
  const MacCount base = count_macs(c, 228, 304);
  c.stages[0].windows[0] = Window{4, 8};
  const MacCount wider = count_macs(c, 228, 304);
  CHECK(wider.attention > base.attention);
  CHECK(wider.conv == base.conv);

  ModelConfig wsa = ModelConfig::nyu();
  wsa.attention = AttentionVariant::kWsa;
  CHECK(count_macs(ModelConfig::nyu(), 228, 304).macs() > count_macs(wsa, 228, 304).macs());
}

TEST_CASE("forward is deterministic and model gradient is exact") {
  const ModelConfig c = ModelConfig::tiny();
  const auto w = random_weights(c, 4, 0.3);
  const Tensord sparse = random_tensor(Shape{1, 16, 16}, 5, 0, 4), rgb = random_tensor(Shape{3, 16, 16}, 6, 0, 1);
  CHECK(predict(c, w, sparse, rgb) == predict(c, w, sparse, rgb));

  const ScalarFunction f = [&](const std::vector<Var<double>>& v) {
    const ParameterSet<double> p(w, v);
    return random_projection(model_forward(c, p, constant(sparse), constant(rgb)), 7);
  };
  GradCheckOptions options;
  options.max_coordinates = 4;
  const auto report = grad_check(f, named(w), options);
  INFO(report.failure);
  CHECK(report.passed);
  CHECK(report.max_relative_error() < 1e-6);
}
