// Acceptance run: one PASS/FAIL line per criterion. Exits 0 after reporting
// unless --strict is given, in which case any failure exits 1. --report FILE
// also writes the lines to FILE.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "sdformer/architecture/counting.hpp"
#include "sdformer/architecture/sdformer.hpp"
#include "sdformer/datakit/baseline.hpp"
#include "sdformer/datakit/preprocess.hpp"
#include "sdformer/datakit/synth.hpp"
#include "sdformer/evalkit/metrics.hpp"
#include "sdformer/numerics/grad_suite.hpp"
#include "sdformer/numerics/parallel.hpp"
#include "sdformer/training/loss.hpp"
#include "sdformer/training/model_check.hpp"
#include "sdformer/training/trainer.hpp"
#include "test_support.hpp"

using namespace sdformer;
using sdformer::testing::random_tensor;

namespace {

struct Outcome {
  bool pass = true;
  std::vector<std::string> details;

  void expect(bool ok, const std::string& what) {
    pass = pass && ok;
    details.push_back(std::string(ok ? "ok   " : "FAIL ") + what);
  }
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

bool within(double value, double target, double tolerance) {
  return std::abs(value - target) <= tolerance * target;
}

ModelConfig nyu_with(const std::function<void(ModelConfig&)>& edit) {
  ModelConfig c = ModelConfig::nyu();
  edit(c);
  return c;
}

struct Variant {
  const char* name;
  AttentionVariant attention;
  FfnVariant ffn;
  double params_m;
  double flops_g;
};

// Variants in order of increasing expected FLOPs.
const Variant kVariants[] = {{"WSA+MLP", AttentionVariant::kWsa, FfnVariant::kMlp, 5.3, 32},
                             {"WSA+GFFN", AttentionVariant::kWsa, FfnVariant::kGffn, 6.6, 42},
                             {"DWSA+MLP", AttentionVariant::kDwsa, FfnVariant::kMlp, 5.3, 51},
                             {"DWSA+GFFN", AttentionVariant::kDwsa, FfnVariant::kGffn, 6.7, 68}};

ModelConfig variant_config(const Variant& v) {
  return nyu_with([&](ModelConfig& c) {
    c.attention = v.attention;
    c.ffn = v.ffn;
  });
}

Outcome parameter_counts() {
  Outcome o;
  auto check = [&](const std::string& name, const ModelConfig& c, double target_m, double tol) {
    const auto t0 = std::chrono::steady_clock::now();
    const double m = count_params(c).total / 1e6;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    o.expect(within(m, target_m, tol) && secs < 1.0,
             name + fmt(": %.4f M vs %.2f M +-%.0f%% (%.3f s)", m, target_m, tol * 100, secs));
  };
  check("NYU", ModelConfig::nyu(), 6.77, 0.10);
  check("KITTI", ModelConfig::kitti(), 1.44, 0.10);
  check("C=12, no refinement", nyu_with([](ModelConfig& c) {
          c.base_channels = 12;
          c.refinement_blocks = 0;
        }),
        1.72, 0.10);
  check("C=12, blocks {2,2,6,2}", nyu_with([](ModelConfig& c) {
          c.base_channels = 12;
          const int blocks[4] = {2, 2, 6, 2};
          for (int i = 0; i < 4; ++i) c.stages[i].blocks = blocks[i];
        }),
        0.98, 0.10);
  check("C=12, expansion 2.00", nyu_with([](ModelConfig& c) {
          c.base_channels = 12;
          c.expansion = 2.0;
        }),
        1.44, 0.10);
  check("C=12", nyu_with([](ModelConfig& c) { c.base_channels = 12; }), 1.76, 0.10);
  for (const Variant& v : kVariants) check(v.name, variant_config(v), v.params_m, 0.15);
  return o;
}

Outcome flop_counts() {
  Outcome o;
  const MacCount nyu = count_macs(ModelConfig::nyu(), kNyuHeight, kNyuWidth);
  const MacCount kitti = count_macs(ModelConfig::kitti(), kKittiHeight, kKittiWidth);
  o.expect(within(nyu.flops() / 1e9, 68, 0.25),
           fmt("NYU 304x228: %.2f GFLOPs (%.2f GMACs) vs 68 +-25%%", nyu.flops() / 1e9, nyu.macs() / 1e9));
  o.expect(within(kitti.flops() / 1e9, 86, 0.25),
           fmt("KITTI 1216x320: %.2f GFLOPs (%.2f GMACs) vs 86 +-25%%", kitti.flops() / 1e9, kitti.macs() / 1e9));
  std::string order;
  bool increasing = true;
  double previous = 0;
  for (const Variant& v : kVariants) {
    const double g = count_macs(variant_config(v), kNyuHeight, kNyuWidth).flops() / 1e9;
    increasing = increasing && g > previous;
    previous = g;
    order += std::string(order.empty() ? "" : " < ") + v.name + fmt(" %.1f", g);
  }
  o.expect(increasing, "variant ordering " + order);
  return o;
}

Outcome gradient_suite() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0;
  std::set<std::string> ops;
  bool all = true;
  for (const OpCheck& c : check_primitives()) {
    worst = std::max(worst, c.report.max_relative_error());
    all = all && c.report.passed;
    ops.insert(c.op);
  }
  o.expect(all && worst < 1e-6, fmt("%.0f primitive checks, max error %.2e", double(ops.size()), worst));
  GradCheckOptions options;
  options.max_coordinates = 16;
  options.eps = kModelCheckEps;
  const GradCheckReport model = check_model_loss_gradient(ModelConfig::tiny(), 16, 0, options);
  o.expect(model.passed && model.max_relative_error() < 1e-6,
           fmt("tiny model loss at 16x16, %.0f tensors: max error %.2e", double(model.parameters.size()),
               model.max_relative_error()) +
               (model.failure.empty() ? "" : " (" + model.failure + ")"));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  o.expect(secs < 300, fmt("runtime %.1f s < 300 s", secs));
  return o;
}

Index lcm_of(Index a, Index b, Index c) { return std::lcm(std::lcm(a, b), c); }

/// Placement and level of a block prefix such as "decoder2.block1".
std::pair<Placement, int> placement_of(const std::string& prefix) {
  if (prefix.rfind("encoder", 0) == 0) return {Placement::kEncoder, prefix[7] - '0'};
  if (prefix.rfind("decoder", 0) == 0) return {Placement::kDecoder, prefix[7] - '0'};
  if (prefix.rfind("latent", 0) == 0) return {Placement::kLatent, 4};
  return {Placement::kRefinement, 1};
}

Outcome structural_invariants() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  bool roundtrips = true;
  int cases = 0;
  for (Index h : {4, 12, 57, 58}) {
    for (Index w : {6, 16, 38}) {
      for (Index dh : {1, 2, 3, 19}) {
        for (Index dw : {1, 2, 4, 19}) {
          if (h % dh || w % dw) continue;
          const Tensor<float> x = random_tensor<float>(Shape{5, h, w}, ++cases);
          roundtrips = roundtrips && window_merge(window_partition(x, dh, dw), h, w, dh, dw) == x;
        }
      }
      if (h % 2 == 0 && w % 2 == 0) {
        const Tensor<float> x = random_tensor<float>(Shape{3, h, w}, ++cases);
        roundtrips = roundtrips && pixel_shuffle(pixel_unshuffle(x, 2), 2) == x;
        const Tensor<float> y = random_tensor<float>(Shape{12, h, w}, ++cases);
        roundtrips = roundtrips && pixel_unshuffle(pixel_shuffle(y, 2), 2) == y;
      }
    }
  }
  o.expect(roundtrips, fmt("%.0f partition/merge and shuffle/unshuffle roundtrips bit-exact", cases));

  bool valid = true;
  try {
    validate(ModelConfig::nyu(), kNyuHeight, kNyuWidth);
    validate(ModelConfig::kitti(), kKittiHeight, kKittiWidth);
  } catch (const std::exception&) {
    valid = false;
  }
  o.expect(valid, "NYU validates at 304x228 and KITTI at 1216x320");
  const auto nyu = plan_levels(kNyuHeight, kNyuWidth);
  o.expect(nyu[2].height == 57 && nyu[2].pad.bottom == 1 && nyu[3].height == 29 && nyu[3].width == 38,
           fmt("NYU level 3 is %.0fx%.0f, padded by %.0f row, level 4 is 29x38", nyu[2].height, nyu[2].width,
               nyu[2].pad.bottom));

  int blocks = 0;
  bool identity = true;
  for (const ModelConfig& config : {ModelConfig::nyu(), ModelConfig::kitti(), ModelConfig::tiny()}) {
    ModelWeights<float> weights = build_model(config, 3);
    zero_output_projections(weights);
    const ParameterSet<float> params(weights, false);
    std::set<std::string> prefixes;
    for (const auto& name : weights.names()) {
      const auto pos = name.find(".block");
      if (pos != std::string::npos) prefixes.insert(name.substr(0, name.find('.', pos + 1)));
    }
    for (const auto& prefix : prefixes) {
      const auto [placement, level] = placement_of(prefix);
      const BlockSpec spec = block_spec(config, placement, level);
      const Index h = lcm_of(spec.windows[0].height, spec.windows[1].height, spec.windows[2].height);
      const Index w = lcm_of(spec.windows[0].width, spec.windows[1].width, spec.windows[2].width);
      const Tensor<float> x = random_tensor<float>(Shape{spec.channels, h, w}, ++blocks);
      identity = identity && sdformer_block(constant(x), params, prefix, spec).value() == x;
    }
  }
  o.expect(identity, fmt("%.0f blocks with zeroed output projections are the identity", blocks));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  o.expect(secs < 60, fmt("runtime %.1f s < 60 s", secs));
  return o;
}

// Overfit protocol: full-batch Adam on the four samples, linear warmup to
// kOverfitLr over kOverfitWarmup steps under a cosine decay to zero.
constexpr int kOverfitSteps = 500;
constexpr int kOverfitWarmup = 100;
constexpr double kOverfitLr = 2e-2;

double overfit_lr(int step) {
  const double cosine = 0.5 * (1 + std::cos(M_PI * step / kOverfitSteps));
  return kOverfitLr * cosine * std::min(1.0, (step + 1.0) / kOverfitWarmup);
}

struct OverfitRun {
  std::vector<double> losses;
  double rmse = 0;
  std::string checkpoint;
};

OverfitRun overfit_once() {
  std::vector<Sample> data;
  for (std::uint64_t s = 0; s < 4; ++s) data.push_back(make_synthetic_sample(s, 64, 64, {}));
  const std::vector<const Sample*> batch{&data[0], &data[1], &data[2], &data[3]};
  Checkpoint fresh = Checkpoint::fresh(ModelConfig::tiny(), 0);
  set_output_bias(fresh.weights, static_cast<float>(mean_sparse_depth(data)));
  Trainer trainer(std::move(fresh), {});
  OverfitRun run;
  for (int step = 0; step < kOverfitSteps; ++step) run.losses.push_back(trainer.step(batch, overfit_lr(step)));
  const Predictor predictor = [&](const Sample& s) {
    return predict_sample(trainer.state().config, trainer.state().weights, s);
  };
  run.rmse = evaluate(predictor, data).rmse;
  run.checkpoint = serialize_checkpoint(trainer.state());
  return run;
}

Outcome overfit() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  const OverfitRun a = overfit_once();
  const OverfitRun b = overfit_once();
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  o.expect(a.rmse < 0.05, fmt("training RMSE after %.0f steps: %.4f m < 0.05 m (loss %.4f -> %.4f)", kOverfitSteps,
                              a.rmse, a.losses.front(), a.losses.back()));
  o.expect(a.losses == b.losses && a.checkpoint == b.checkpoint, "repeated run: identical losses and checkpoint");
  o.expect(secs < 600, fmt("runtime %.1f s < 600 s for both runs", secs));
  return o;
}

Outcome generalization() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  ModelConfig config = ModelConfig::tiny();
  config.base_channels = 12;
  const int blocks[4] = {1, 1, 2, 2};
  for (int i = 0; i < 4; ++i) config.stages[i].blocks = blocks[i];

  std::vector<Sample> train, held_out;
  for (std::uint64_t s = 0; s < 256; ++s) train.push_back(make_synthetic_sample(s, 64, 64, {}));
  for (std::uint64_t s = 0; s < 64; ++s) held_out.push_back(make_synthetic_sample(100000 + s, 64, 64, {}));

  // Single-sample Adam steps, 100 warmup steps, rate stepped down from epoch 4.
  TrainOptions options;
  options.epochs = 10;
  options.batch_size = 1;
  options.warmup_steps = 100;
  options.schedule = {1e-3, {0.5, 0.2, 0.05}, {4, 7, 9}};
  options.threads = worker_threads();
  AdamHyper hyper;
  hyper.base_lr = options.schedule.base_lr;
  Checkpoint fresh = Checkpoint::fresh(config, 0, hyper);
  set_output_bias(fresh.weights, static_cast<float>(mean_sparse_depth(train)));
  Trainer trainer(std::move(fresh), options);
  const auto logs = trainer.run(train);
  const Predictor model = [&](const Sample& s) {
    return predict_sample(trainer.state().config, trainer.state().weights, s);
  };
  const Predictor nearest = [](const Sample& s) { return nearest_fill(s.sparse); };
  const double ours = evaluate(model, held_out, Aggregation::kPixelPooled, options.threads).rmse;
  const double baseline = evaluate(nearest, held_out, Aggregation::kPixelPooled, options.threads).rmse;
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  o.expect(ours <= 0.8 * baseline, fmt("held-out RMSE %.4f m vs nearest fill %.4f m (%.1f%% better, need 20%%)", ours,
                                       baseline, 100 * (1 - ours / baseline)));
  o.details.push_back(fmt("     final epoch loss %.4f", logs.empty() ? 0.0 : logs.back().loss));
  o.expect(secs < 7200, fmt("runtime %.1f s < 7200 s", secs));
  return o;
}

std::vector<double> values_of(const Tensord& t) { return {t.data(), t.data() + t.size()}; }

Outcome oracle_equivalence() {
  Outcome o;
  double metric_err = 0, loss_err = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Tensord gt = random_tensor(Shape{1, 16, 16}, 10 * trial, 0.5, 10);
    const Tensord pred = random_tensor(Shape{1, 16, 16}, 10 * trial + 1, 0.1, 11);
    Tensord mask = random_tensor(Shape{1, 16, 16}, 10 * trial + 2, -0.4, 1);
    mask[0] = 1;
    const auto r = compute_metrics(pred, gt, mask);
    const auto m = testing::oracle_metrics(values_of(pred), values_of(gt), values_of(mask));
    const double ours[] = {r.rmse, r.mae, r.irmse, r.imae, r.rel, r.d1, r.d2, r.d3};
    const double theirs[] = {m.rmse, m.mae, m.irmse, m.imae, m.rel, m.d1, m.d2, m.d3};
    for (int k = 0; k < 8; ++k) {
      metric_err = std::max(metric_err, std::abs(ours[k] - theirs[k]) / std::max(std::abs(theirs[k]), 1e-300));
    }
    const double loss = completion_loss(constant(pred), gt, mask).value()[0];
    const double oracle = testing::oracle_loss(values_of(pred), values_of(gt), values_of(mask));
    loss_err = std::max(loss_err, std::abs(loss - oracle) / oracle);
  }
  o.expect(metric_err <= 1e-9, fmt("metrics vs scalar oracle on 100 maps: max relative difference %.2e", metric_err));
  o.expect(loss_err <= 1e-9, fmt("loss vs scalar oracle on 100 maps: max relative difference %.2e", loss_err));

  std::vector<Sample> data;
  for (std::uint64_t s = 0; s < 2; ++s) data.push_back(make_synthetic_sample(s, 32, 32, {PatternKind::kUniform, 100}));
  const std::vector<const Sample*> batch{&data[0], &data[1]};
  Trainer uninterrupted(Checkpoint::fresh(ModelConfig::tiny(), 1), {});
  uninterrupted.step(batch, 1e-3);
  const std::string saved = serialize_checkpoint(uninterrupted.state());
  const Checkpoint loaded = deserialize_checkpoint(saved);
  o.expect(serialize_checkpoint(loaded) == saved,
           fmt("save -> load -> save byte-identical (%.0f bytes)", double(saved.size())));
  Trainer resumed(loaded, {});
  uninterrupted.step(batch, 1e-3);
  resumed.step(batch, 1e-3);
  o.expect(serialize_checkpoint(uninterrupted.state()) == serialize_checkpoint(resumed.state()),
           "step after reload bit-equal to uninterrupted training");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  bool strict = false;
  std::set<int> only;
  std::FILE* report = nullptr;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--strict") == 0) {
      strict = true;
    } else if (std::strcmp(argv[i], "--report") == 0 && i + 1 < argc) {
      report = std::fopen(argv[++i], "w");
      if (!report) {
        std::fprintf(stderr, "cannot write %s\n", argv[i]);
        return 2;
      }
    } else if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) {
      only.insert(std::atoi(argv[++i]));
    } else {
      std::fprintf(stderr, "usage: %s [--strict] [--only N]... [--report FILE]\n", argv[0]);
      return 2;
    }
  }

  struct Criterion {
    int id;
    const char* title;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "parameter counts", parameter_counts},
      {2, "FLOP counts", flop_counts},
      {4, "gradient suite", gradient_suite},
      {5, "structural invariants", structural_invariants},
      {6, "overfit", overfit},
      {7, "generalization vs nearest fill", generalization},
      {8, "oracle equivalence", oracle_equivalence},
  };

  auto emit = [&](const std::string& line) {
    std::printf("%s\n", line.c_str());
    std::fflush(stdout);
    if (report) {
      std::fprintf(report, "%s\n", line.c_str());
      std::fflush(report);
    }
  };

  int failures = 0;
  bool substitutes_pass = true;
  bool substitutes_ran = true;
  for (const Criterion& c : criteria) {
    if (!only.empty() && !only.count(c.id)) {
      if (c.id >= 4) substitutes_ran = false;
      continue;
    }
    const auto t0 = std::chrono::steady_clock::now();
    const Outcome outcome = c.run();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    emit(std::string(outcome.pass ? "PASS" : "FAIL") + " criterion " + std::to_string(c.id) + ": " + c.title +
         fmt(" (%.1f s)", secs));
    for (const auto& d : outcome.details) emit("       " + d);
    if (!outcome.pass) ++failures;
    if (c.id >= 4) substitutes_pass = substitutes_pass && outcome.pass;
  }
  if (only.empty() || only.count(3)) {
    if (substitutes_ran) {
      emit(std::string(substitutes_pass ? "PASS" : "FAIL") + " criterion 3: accuracy columns replaced by criteria 4-8");
      if (!substitutes_pass) ++failures;
    } else {
      emit("SKIP criterion 3: needs criteria 4-8 in the same run");
    }
  }
  emit(std::to_string(failures) + " criterion failure(s)");
  if (report) std::fclose(report);
  return strict && failures > 0 ? 1 : 0;
}
