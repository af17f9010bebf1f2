#include "sdformer/architecture/sdformer.hpp"

#include <cmath>

#include "sdformer/error.hpp"

namespace sdformer {
namespace {

// Score elements materialized at once when no gradient is recorded.
constexpr Index kScoreBudget = Index{1} << 22;

template <typename S>
Var<S> conv(const Var<S>& x, const ParameterSet<S>& params, const std::string& name, bool bias,
            Conv2dOptions options, MacTally* tally) {
  const Var<S>& w = params[name + ".weight"];
  if (tally) tally->conv += conv2d_macs(x.shape(), w.shape(), options);
  if (bias) return conv2d(x, w, &params[name + ".bias"], options);
  return conv2d(x, w, nullptr, options);
}

template <typename S>
Var<S> pointwise(const Var<S>& x, const ParameterSet<S>& params, const std::string& name, MacTally* tally) {
  return conv(x, params, name, false, {}, tally);
}

template <typename S>
Var<S> depthwise(const Var<S>& x, const ParameterSet<S>& params, const std::string& name, MacTally* tally) {
  return conv(x, params, name, false, {1, 1, static_cast<int>(x.dim(0))}, tally);
}

// N x A x D -> (N*heads) x A x (D/heads)
template <typename S>
Var<S> split_heads(const Var<S>& x, int heads) {
  const Index n = x.dim(0), a = x.dim(1), d = x.dim(2) / heads;
  if (heads == 1) return x;
  return reshape(permute(reshape(x, Shape{n, a, heads, d}), {0, 2, 1, 3}), Shape{n * heads, a, d});
}

template <typename S>
Var<S> merge_heads(const Var<S>& x, int heads) {
  if (heads == 1) return x;
  const Index n = x.dim(0) / heads, a = x.dim(1), d = x.dim(2);
  return reshape(permute(reshape(x, Shape{n, heads, a, d}), {0, 2, 1, 3}), Shape{n, a, heads * d});
}

template <typename S>
Var<S> attention_core(const Var<S>& q, const Var<S>& k, const Var<S>& v, int heads) {
  const Index d = q.dim(2) / heads;
  auto scores = scale(matmul_batched(split_heads(q, heads), split_heads(k, heads), false, true),
                      S(1) / std::sqrt(S(d)));
  return merge_heads(matmul_batched(softmax(scores, 2), split_heads(v, heads)), heads);
}

template <typename S>
void block_stack(Var<S>& x, const ParameterSet<S>& params, const std::string& name, int count, const BlockSpec& spec,
                 MacTally* tally) {
  for (int i = 0; i < count; ++i) x = sdformer_block(x, params, name + ".block" + std::to_string(i), spec, tally);
}

}  // namespace

template <typename S>
Var<S> window_attention(const Var<S>& q, const Var<S>& k, const Var<S>& v, int heads, MacTally* tally) {
  if (q.shape().rank() != 3 || q.shape() != k.shape() || q.shape() != v.shape()) {
    throw ConfigError("window_attention: q, k, v must share an N x A x D shape, got " + q.shape().str() + ", " +
                      k.shape().str() + ", " + v.shape().str());
  }
  const Index n = q.dim(0), a = q.dim(1), dim = q.dim(2);
  if (heads < 1 || dim % heads != 0) {
    throw ConfigError("window_attention: " + std::to_string(dim) + " channels not divisible by " +
                      std::to_string(heads) + " heads");
  }
  if (tally) tally->attention += 2 * n * a * a * dim;
  const bool traced = q.requires_grad() || k.requires_grad() || v.requires_grad();
  const Index chunk = std::max<Index>(1, kScoreBudget / (heads * a * a));
  if (traced || chunk >= n) return attention_core(q, k, v, heads);

  Tensor<S> out(q.shape());
  for (Index begin = 0; begin < n; begin += chunk) {
    const Index count = std::min(chunk, n - begin);
    auto part = attention_core(constant(slice(q.value(), 0, begin, count)), constant(slice(k.value(), 0, begin, count)),
                               constant(slice(v.value(), 0, begin, count)), heads);
    slice_add(out, part.value(), 0, begin);
  }
  return constant(std::move(out));
}

template <typename S>
Var<S> dwsa(const Var<S>& x, const ParameterSet<S>& params, const std::string& prefix, const BlockSpec& spec,
            MacTally* tally) {
  const Index c = spec.channels, height = x.dim(1), width = x.dim(2);
  if (x.dim(0) != c) {
    throw ConfigError(prefix + ": expected " + std::to_string(c) + " channels, got " + std::to_string(x.dim(0)));
  }
  auto qkv = depthwise(pointwise(x, params, prefix + ".qkv", tally), params, prefix + ".qkv_dw", tally);
  auto chunks = split(qkv, 0, {c, c, c});
  const Index b = c / 3;
  auto qs = split(chunks[0], 0, {b, b, b});
  auto ks = split(chunks[1], 0, {b, b, b});
  auto vs = split(chunks[2], 0, {b, b, b});
  std::vector<Var<S>> branches;
  for (int i = 0; i < 3; ++i) {
    const Window w = spec.branch_window(i);
    if (height % w.height != 0 || width % w.width != 0) {
      throw ConfigError(prefix + ": window [" + std::to_string(w.height) + "," + std::to_string(w.width) +
                        "] does not divide H=" + std::to_string(height) + " W=" + std::to_string(width));
    }
    auto y = window_attention(window_partition(qs[i], w.height, w.width), window_partition(ks[i], w.height, w.width),
                              window_partition(vs[i], w.height, w.width), spec.heads, tally);
    branches.push_back(window_merge(y, height, width, w.height, w.width));
  }
  return pointwise(concat(branches, 0), params, prefix + ".proj", tally);
}

template <typename S>
Var<S> feed_forward(const Var<S>& x, const ParameterSet<S>& params, const std::string& prefix, const BlockSpec& spec,
                    MacTally* tally) {
  auto t = pointwise(x, params, prefix + ".in", tally);
  if (spec.ffn == FfnVariant::kMlp) return pointwise(gelu(t), params, prefix + ".out", tally);
  t = depthwise(t, params, prefix + ".dw", tally);
  auto halves = split(t, 0, {spec.hidden, spec.hidden});
  return pointwise(multiply(gelu(halves[0]), halves[1]), params, prefix + ".out", tally);
}

template <typename S>
Var<S> sdformer_block(const Var<S>& x, const ParameterSet<S>& params, const std::string& prefix, const BlockSpec& spec,
                      MacTally* tally) {
  auto n1 = layer_norm(x, params[prefix + ".norm1.gamma"], params[prefix + ".norm1.beta"], S(kLayerNormEps));
  auto y = add(x, dwsa(n1, params, prefix + ".attn", spec, tally));
  auto n2 = layer_norm(y, params[prefix + ".norm2.gamma"], params[prefix + ".norm2.beta"], S(kLayerNormEps));
  return add(y, feed_forward(n2, params, prefix + ".ffn", spec, tally));
}

template <typename S>
Var<S> input_module(const Var<S>& sparse, const Var<S>& rgb, const ParameterSet<S>& params, MacTally* tally) {
  if (sparse.shape().rank() != 3 || rgb.shape().rank() != 3 || sparse.dim(0) != 1 || rgb.dim(0) != 3) {
    throw ConfigError("input_module: expected 1xHxW sparse and 3xHxW rgb, got " + sparse.shape().str() + " and " +
                      rgb.shape().str());
  }
  if (sparse.dim(1) != rgb.dim(1) || sparse.dim(2) != rgb.dim(2)) {
    throw ConfigError("input_module: sparse " + sparse.shape().str() + " not aligned with rgb " + rgb.shape().str());
  }
  const Conv2dOptions same{1, 1, 1};
  auto depth = leaky_relu(conv(sparse, params, "input.depth", true, same, tally), S(kLeakySlope));
  auto image = leaky_relu(conv(rgb, params, "input.rgb", true, same, tally), S(kLeakySlope));
  return concat<S>({depth, image}, 0);
}

template <typename S>
Var<S> downsample(const Var<S>& x, const ParameterSet<S>& params, const std::string& prefix, const Padding& pad,
                  MacTally* tally) {
  if (x.dim(0) % 2 != 0) throw ConfigError(prefix + ": odd channel count " + std::to_string(x.dim(0)));
  auto padded = pad.empty() ? x : sdformer::pad(x, pad, PadMode::kReflect);
  return pixel_unshuffle(conv(padded, params, prefix, true, {1, 1, 1}, tally), 2);
}

template <typename S>
Var<S> upsample(const Var<S>& x, const ParameterSet<S>& params, const std::string& prefix, const Padding& pad,
                MacTally* tally) {
  auto y = pixel_shuffle(conv(x, params, prefix, true, {1, 1, 1}, tally), 2);
  return pad.empty() ? y : crop(y, pad);
}

template <typename S>
Var<S> model_forward(const ModelConfig& config, const ParameterSet<S>& params, const Var<S>& sparse, const Var<S>& rgb,
                     MacTally* tally) {
  const auto levels = plan_levels(sparse.dim(1), sparse.dim(2));
  const Var<S> p0 = input_module(sparse, rgb, params, tally);
  Var<S> x = p0;
  std::vector<Var<S>> skips;
  for (int level = 1; level <= 3; ++level) {
    const std::string n = std::to_string(level);
    block_stack(x, params, "encoder" + n, config.stages[level - 1].blocks,
                block_spec(config, Placement::kEncoder, level), tally);
    skips.push_back(x);
    x = downsample(x, params, "down" + n, levels[level - 1].pad, tally);
  }
  block_stack(x, params, "latent", config.stages[3].blocks, block_spec(config, Placement::kLatent, 4), tally);
  for (int level = 3; level >= 1; --level) {
    const std::string n = std::to_string(level);
    x = concat<S>({upsample(x, params, "up" + n, levels[level - 1].pad, tally), skips[level - 1]}, 0);
    if (level > 1) x = pointwise(x, params, "decoder" + n + ".reduce", tally);
    block_stack(x, params, "decoder" + n, config.stages[level - 1].blocks,
                block_spec(config, Placement::kDecoder, level), tally);
  }
  x = concat<S>({x, p0}, 0);
  block_stack(x, params, "refine", config.refinement_blocks, block_spec(config, Placement::kRefinement, 1), tally);
  return conv(x, params, "output", true, {1, 1, 1}, tally);
}

template <typename S>
Tensor<S> predict(const ModelConfig& config, const ModelWeights<S>& weights, const Tensor<S>& sparse,
                  const Tensor<S>& rgb) {
  const ParameterSet<S> params(weights, false);
  return model_forward(config, params, constant(sparse), constant(rgb)).value();
}

#define SDFORMER_INSTANTIATE_MODEL(S)                                                                              \
  template Var<S> window_attention(const Var<S>&, const Var<S>&, const Var<S>&, int, MacTally*);                 \
  template Var<S> dwsa(const Var<S>&, const ParameterSet<S>&, const std::string&, const BlockSpec&, MacTally*);    \
  template Var<S> feed_forward(const Var<S>&, const ParameterSet<S>&, const std::string&, const BlockSpec&,        \
                               MacTally*);                                                                       \
  template Var<S> sdformer_block(const Var<S>&, const ParameterSet<S>&, const std::string&, const BlockSpec&,      \
                                 MacTally*);                                                                     \
  template Var<S> input_module(const Var<S>&, const Var<S>&, const ParameterSet<S>&, MacTally*);                  \
  template Var<S> downsample(const Var<S>&, const ParameterSet<S>&, const std::string&, const Padding&, MacTally*); \
  template Var<S> upsample(const Var<S>&, const ParameterSet<S>&, const std::string&, const Padding&, MacTally*);   \
  template Var<S> model_forward(const ModelConfig&, const ParameterSet<S>&, const Var<S>&, const Var<S>&,          \
                                MacTally*);                                                                      \
  template Tensor<S> predict(const ModelConfig&, const ModelWeights<S>&, const Tensor<S>&, const Tensor<S>&);

SDFORMER_INSTANTIATE_MODEL(float)
SDFORMER_INSTANTIATE_MODEL(double)

}  // namespace sdformer
