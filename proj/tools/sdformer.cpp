// Command-line entry point. Exit codes: 0 success, 1 invalid input or
// configuration, 2 numeric failure.

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "sdformer/architecture/counting.hpp"
#include "sdformer/architecture/sdformer.hpp"
#include "sdformer/cli/heatmap.hpp"
#include "sdformer/cli/run_config.hpp"
#include "sdformer/datakit/baseline.hpp"
#include "sdformer/datakit/io.hpp"
#include "sdformer/error.hpp"
#include "sdformer/numerics/grad_suite.hpp"
#include "sdformer/numerics/parallel.hpp"
#include "sdformer/training/model_check.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sdformer;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& common) {
  cmd->add_option("--config", common.config, "JSON run configuration");
  cmd->add_option("--override", common.overrides, "key=value applied to the configuration")->take_all();
}

int thread_count(int requested) {
  const int cap = worker_threads();
  return requested <= 0 ? cap : std::min(requested, cap);
}

std::pair<Index, Index> input_size(const RunConfig& rc, const std::string& size) {
  if (size.empty()) return {rc.data.width, rc.data.height};
  return parse_size(size);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  out << text;
}

std::vector<Sample> load_split(const std::string& dir, const RunConfig& rc, const char* what) {
  if (dir.empty()) throw ConfigError(std::string("data.") + what + ": no dataset directory given");
  auto samples = read_dataset(dir);
  if (samples.empty()) throw ConfigError(std::string("data.") + what + ": dataset " + dir + " is empty");
  if (rc.data.preprocess) {
    for (auto& s : samples) s = preprocess(s, *rc.data.preprocess);
  }
  return samples;
}

const char* placement_name(int level) { return level == 4 ? "latent" : "encoder"; }

int describe(const RunConfig& rc, const std::string& size) {
  const auto [w, h] = input_size(rc, size);
  const ModelConfig& c = rc.model;
  std::printf("model: C=%d, %s + %s, expansion %.2f, %d refinement blocks\n", c.base_channels,
              to_string(c.attention).c_str(), to_string(c.ffn).c_str(), c.expansion, c.refinement_blocks);
  std::printf("input: %lldx%lld (WxH)\n\n", static_cast<long long>(w), static_cast<long long>(h));
  std::printf("%-6s %-8s %8s %10s %7s %7s %6s  %s\n", "level", "role", "channels", "HxW", "pad", "blocks", "heads",
              "windows");
  bool windows_ok = true;
  for (const LevelPlan& p : plan_levels(h, w)) {
    const BlockSpec spec = block_spec(c, p.level == 4 ? Placement::kLatent : Placement::kEncoder, p.level);
    std::string windows;
    for (int b = 0; b < 3; ++b) {
      const Window win = spec.branch_window(b);
      const bool ok = p.height % win.height == 0 && p.width % win.width == 0;
      windows_ok = windows_ok && (ok || c.stages[p.level - 1].blocks == 0);
      windows += std::to_string(win.height) + "x" + std::to_string(win.width) + (ok ? " ok  " : " BAD ");
    }
    const std::string hw = std::to_string(p.height) + "x" + std::to_string(p.width);
    const std::string pad = p.pad.empty() ? "-" : "+" + std::to_string(p.pad.bottom) + "," + std::to_string(p.pad.right);
    std::printf("%-6d %-8s %8lld %10s %7s %7d %6d  %s\n", p.level, placement_name(p.level),
                static_cast<long long>(c.level_channels(p.level)), hw.c_str(), pad.c_str(),
                c.stages[p.level - 1].blocks, c.stages[p.level - 1].heads, windows.c_str());
  }
  const ParamCount params = count_params(c);
  std::printf("\n%-12s %12s\n", "module", "params");
  for (const auto& [name, n] : params.modules) std::printf("%-12s %12lld\n", name.c_str(), static_cast<long long>(n));
  std::printf("%-12s %12lld (%.4f M)\n", "total", static_cast<long long>(params.total), params.total / 1e6);
  const MacCount macs = count_macs(c, h, w);
  std::printf("GFLOPs %.2f (2 per MAC; conv %.2f, attention %.2f)\n", macs.flops() / 1e9, 2.0 * macs.conv / 1e9,
              2.0 * macs.attention / 1e9);
  std::cout.flush();
  validate(c, h, w);
  return windows_ok ? 0 : 1;
}

int count(const RunConfig& rc, const std::string& size) {
  const auto [w, h] = input_size(rc, size);
  validate(rc.model, h, w);
  const ParamCount params = count_params(rc.model);
  const MacCount macs = count_macs(rc.model, h, w);
  json modules = json::object();
  for (const auto& [name, n] : params.modules) modules[name] = n;
  const json out = {{"model", to_json(rc.model)},
                    {"height", h},
                    {"width", w},
                    {"params", params.total},
                    {"params_millions", params.total / 1e6},
                    {"modules", modules},
                    {"macs", {{"conv", macs.conv}, {"attention", macs.attention}, {"total", macs.macs()}}},
                    {"flops", macs.flops()},
                    {"gflops", macs.flops() / 1e9}};
  std::cout << out.dump(2) << "\n";
  return 0;
}

int gradcheck(const RunConfig& rc, Index size, Index coordinates) {
  GradCheckOptions options;
  options.max_coordinates = coordinates;
  json ops = json::array();
  bool passed = true;
  double worst = 0;
  const double primitive_eps = options.eps;
  for (const OpCheck& c : check_primitives(options)) {
    ops.push_back({{"op", c.op}, {"shape", c.shape}, {"max_relative_error", c.report.max_relative_error()},
                   {"passed", c.report.passed}});
    passed = passed && c.report.passed;
    worst = std::max(worst, c.report.max_relative_error());
  }
  validate(rc.model, size, size);
  options.eps = kModelCheckEps;
  const GradCheckReport model = check_model_loss_gradient(rc.model, size, rc.train.seed, options);
  passed = passed && model.passed;
  worst = std::max(worst, model.max_relative_error());
  const json out = {{"ops", ops},
                    {"model",
                     {{"size", size},
                      {"eps", options.eps},
                      {"max_relative_error", model.max_relative_error()},
                      {"passed", model.passed},
                      {"failure", model.failure}}},
                    {"tolerance", options.tolerance},
                    {"eps", primitive_eps},
                    {"max_relative_error", worst},
                    {"passed", passed}};
  std::cout << out.dump(2) << "\n";
  return passed ? 0 : 2;
}

int synth(const RunConfig& rc, int count, const std::string& size, std::uint64_t seed, std::string out) {
  if (count < 1) throw ConfigError("synth: --count must be >= 1");
  const auto [w, h] = input_size(rc, size);
  if (out.empty()) out = rc.data.dataset;
  if (out.empty()) throw ConfigError("synth: no output directory (--out or data.dataset)");
  if (rc.data.pattern.kind == PatternKind::kUniform && rc.data.pattern.count > w * h) {
    throw ConfigError("synth: data.pattern.count exceeds the pixel count");
  }
  std::vector<Sample> samples(count);
  parallel_for(count, thread_count(0), [&, w = w, h = h](Index i) {
    samples[i] = make_synthetic_sample(seed + static_cast<std::uint64_t>(i), h, w, rc.data.pattern);
  });
  write_dataset(samples, out);
  std::cout << json{{"dataset", out}, {"count", count}, {"height", h}, {"width", w}}.dump() << "\n";
  return 0;
}

int train(const RunConfig& rc, bool resume) {
  const auto samples = load_split(rc.data.dataset, rc, "dataset");
  std::vector<Sample> validation;
  if (!rc.data.validation.empty()) validation = load_split(rc.data.validation, rc, "validation");
  validate(rc.model, samples.front().height(), samples.front().width());

  Checkpoint start;
  if (resume && fs::exists(rc.io.checkpoint)) {
    start = load_checkpoint(rc.io.checkpoint);
    if (to_json(start.config) != to_json(rc.model)) {
      throw ConfigError("train: checkpoint " + rc.io.checkpoint + " was made with a different model config");
    }
  } else {
    start = Checkpoint::fresh(rc.model, rc.train.seed, rc.train.adam);
    set_output_bias(start.weights, static_cast<float>(mean_sparse_depth(samples)));
  }
  TrainOptions options = rc.train.options;
  options.threads = thread_count(options.threads);

  std::ofstream log;
  if (!rc.io.log.empty()) {
    log.open(rc.io.log, resume ? std::ios::app : std::ios::trunc);
    if (!log) throw ConfigError("cannot write " + rc.io.log);
  }
  Trainer trainer(std::move(start), options);
  trainer.run(samples, validation.empty() ? nullptr : &validation, [&](const EpochLog& e) {
    const std::string line = e.to_json().dump();
    std::cout << line << std::endl;
    if (log.is_open()) log << line << std::endl;
    save_checkpoint(trainer.state(), rc.io.checkpoint);
  });
  save_checkpoint(trainer.state(), rc.io.checkpoint);
  return 0;
}

Predictor make_predictor(const RunConfig& rc, const std::string& kind, const std::vector<Sample>& samples) {
  if (kind == "nearest") return [](const Sample& s) { return nearest_fill(s.sparse); };
  if (kind == "mean") {
    double total = 0;
    Index n = 0;
    for (const Sample& s : samples) {
      for (Index i = 0; i < s.gt.size(); ++i) {
        if (s.gt[i] > 0) {
          total += s.gt[i];
          ++n;
        }
      }
    }
    const float mean = n > 0 ? static_cast<float>(total / n) : 0.0f;
    return [mean](const Sample& s) { return Tensor<float>(s.gt.shape(), mean); };
  }
  if (kind != "model") throw ConfigError("eval: unknown predictor \"" + kind + "\" (expected model, nearest or mean)");
  auto checkpoint = std::make_shared<Checkpoint>(load_checkpoint(rc.io.checkpoint));
  return [checkpoint](const Sample& s) { return predict_sample(checkpoint->config, checkpoint->weights, s); };
}

int eval(const RunConfig& rc, const std::string& predictor, bool per_image, bool millimeters) {
  const auto samples = load_split(rc.data.dataset, rc, "dataset");
  const Predictor predict = make_predictor(rc, predictor, samples);
  MetricsReport report = evaluate(predict, samples, per_image ? Aggregation::kPerImage : Aggregation::kPixelPooled,
                                  thread_count(rc.train.options.threads));
  if (millimeters) report = report.to_millimeters();
  const std::string text = report.to_json().dump(2);
  if (!rc.io.report.empty()) write_text(rc.io.report, text + "\n");
  std::cout << text << "\n";
  return 0;
}

int predict(const RunConfig& rc, std::string id, const std::string& out) {
  if (out.empty()) throw ConfigError("predict: --out is required");
  if (rc.data.dataset.empty()) throw ConfigError("data.dataset: no dataset directory given");
  if (id.empty()) {
    const auto ids = read_index(rc.data.dataset);
    if (ids.empty()) throw ConfigError("data.dataset: dataset is empty");
    id = ids.front();
  }
  Sample s = read_sample(rc.data.dataset, id);
  if (rc.data.preprocess) s = preprocess(s, *rc.data.preprocess);
  const Checkpoint checkpoint = load_checkpoint(rc.io.checkpoint);
  validate(checkpoint.config, s.height(), s.width());
  Tensor<float> depth = predict_sample(checkpoint.config, checkpoint.weights, s);
  // The PGM range is [0, 65535/256] m and 0 marks "no depth".
  for (Index i = 0; i < depth.size(); ++i) depth[i] = std::clamp(depth[i], 0.0f, 65535.0f / 256.0f);
  write_depth_pgm(depth, out);
  std::cout << json{{"id", id}, {"output", out}}.dump() << "\n";
  return 0;
}

int heatmap(const std::string& input, const std::string& out, const HeatmapOptions& options) {
  validate(options);
  if (out.empty()) throw ConfigError("heatmap: --out is required");
  const Tensor<float> depth = read_depth_pgm(input);
  bool any = false;
  for (Index i = 0; i < depth.size() && !any; ++i) any = depth[i] > 0;
  if (!any) throw FormatError("heatmap: " + input + " holds no valid depth");
  write_rgb_ppm(render_heatmap(depth, options), out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse-to-dense depth completion transformer"};
  app.require_subcommand(1);
  Common common;

  std::string size;
  auto* describe_cmd = app.add_subcommand("describe", "Print the per-level architecture table");
  add_common(describe_cmd, common);
  describe_cmd->add_option("--size", size, "Input extent WxH");

  auto* count_cmd = app.add_subcommand("count", "Print parameter and FLOP counts as JSON");
  add_common(count_cmd, common);
  count_cmd->add_option("--size", size, "Input extent WxH");

  Index check_size = 16, coordinates = 16;
  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every primitive and a model");
  add_common(gradcheck_cmd, common);
  gradcheck_cmd->add_option("--size", check_size, "Square model input extent")->check(CLI::PositiveNumber);
  gradcheck_cmd->add_option("--coordinates", coordinates, "Coordinates checked per tensor")->check(CLI::PositiveNumber);

  int synth_count = 1;
  std::uint64_t synth_seed = 0;
  std::string synth_out;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic dataset");
  add_common(synth_cmd, common);
  synth_cmd->add_option("--count", synth_count, "Number of samples")->required();
  synth_cmd->add_option("--size", size, "Sample extent WxH");
  synth_cmd->add_option("--seed", synth_seed, "Seed of the first sample");
  synth_cmd->add_option("--out", synth_out, "Output directory (default data.dataset)");

  bool resume = false;
  auto* train_cmd = app.add_subcommand("train", "Train and write a checkpoint plus a JSON-lines log");
  add_common(train_cmd, common);
  train_cmd->add_flag("--resume", resume, "Continue from io.checkpoint when it exists");

  std::string predictor = "model";
  bool per_image = false, millimeters = false;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint or a baseline on a dataset");
  add_common(eval_cmd, common);
  eval_cmd->add_option("--predictor", predictor, "model, nearest (sparse fill) or mean (constant mean gt)");
  eval_cmd->add_flag("--per-image", per_image, "Average per-image metrics instead of pooling pixels");
  eval_cmd->add_flag("--mm", millimeters, "Report rmse and mae in millimeters");

  std::string id, out;
  auto* predict_cmd = app.add_subcommand("predict", "Write the dense prediction of one sample as a PGM");
  add_common(predict_cmd, common);
  predict_cmd->add_option("--id", id, "Sample id (default: first in the index)");
  predict_cmd->add_option("--out", out, "Output PGM path");

  std::string input;
  HeatmapOptions heat;
  auto* heatmap_cmd = app.add_subcommand("heatmap", "Render a depth PGM as a jet-colored PPM");
  add_common(heatmap_cmd, common);
  heatmap_cmd->add_option("--input", input, "Depth PGM")->required();
  heatmap_cmd->add_option("--out", out, "Output PPM path")->required();
  heatmap_cmd->add_option("--min", heat.min, "Depth mapped to blue");
  heatmap_cmd->add_option("--max", heat.max, "Depth mapped to red");
  heatmap_cmd->add_option("--dilate", heat.dilate, "Odd square side grown around valid pixels");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const bool wants_tiny = gradcheck_cmd->parsed();
    const RunConfig rc = load_run_config(common.config, common.overrides, wants_tiny ? "tiny" : "nyu");
    if (describe_cmd->parsed()) return describe(rc, size);
    if (count_cmd->parsed()) return count(rc, size);
    if (gradcheck_cmd->parsed()) return gradcheck(rc, check_size, coordinates);
    if (synth_cmd->parsed()) return synth(rc, synth_count, size, synth_seed, synth_out);
    if (train_cmd->parsed()) return train(rc, resume);
    if (eval_cmd->parsed()) return eval(rc, predictor, per_image, millimeters);
    if (predict_cmd->parsed()) return predict(rc, id, out);
    if (heatmap_cmd->parsed()) return heatmap(input, out, heat);
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
