#include "sdformer/cli/run_config.hpp"

#include <fstream>
#include <set>

#include "sdformer/error.hpp"

namespace sdformer {
namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& section, const std::set<std::string>& known) {
  if (!j.is_object()) throw ConfigError(section + ": expected an object");
  for (const auto& item : j.items()) {
    if (!known.count(item.key())) throw ConfigError(section + ": unknown key \"" + item.key() + "\"");
  }
}

template <typename T>
T get(const json& j, const std::string& section, const std::string& key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(section + "." + key + ": wrong type");
  }
}

ModelConfig preset(const std::string& name) {
  if (name == "nyu") return ModelConfig::nyu();
  if (name == "kitti") return ModelConfig::kitti();
  if (name == "tiny") return ModelConfig::tiny();
  throw ConfigError("model.preset: unknown preset \"" + name + "\" (expected nyu, kitti or tiny)");
}

ModelConfig read_model(const json& j) {
  if (!j.is_object()) throw ConfigError("model: expected an object");
  json fields = j;
  ModelConfig base = ModelConfig::nyu();
  if (fields.contains("preset")) {
    base = preset(get<std::string>(fields, "model", "preset"));
    fields.erase("preset");
  }
  json merged = to_json(base);
  // Unknown keys pass through so model_config_from_json can reject them.
  for (const auto& item : fields.items()) merged[item.key()] = item.value();
  return model_config_from_json(merged);
}

TrainSection read_train(const json& j) {
  check_keys(j, "train",
             {"base_lr", "factors", "thresholds", "epochs", "batch_size", "seed", "flip", "max_steps", "warmup_steps",
              "threads"});
  TrainSection t;
  Schedule& s = t.options.schedule;
  if (j.contains("base_lr")) t.adam.base_lr = get<double>(j, "train", "base_lr");
  if (j.contains("factors")) s.factors = get<std::vector<double>>(j, "train", "factors");
  if (j.contains("thresholds")) s.thresholds = get<std::vector<int>>(j, "train", "thresholds");
  if (j.contains("epochs")) t.options.epochs = get<int>(j, "train", "epochs");
  if (j.contains("batch_size")) t.options.batch_size = get<int>(j, "train", "batch_size");
  if (j.contains("seed")) t.seed = get<std::uint64_t>(j, "train", "seed");
  if (j.contains("flip")) t.options.flip = get<bool>(j, "train", "flip");
  if (j.contains("max_steps")) t.options.max_steps = get<std::int64_t>(j, "train", "max_steps");
  if (j.contains("warmup_steps")) t.options.warmup_steps = get<std::int64_t>(j, "train", "warmup_steps");
  if (j.contains("threads")) t.options.threads = get<int>(j, "train", "threads");
  s.base_lr = t.adam.base_lr;
  if (!(t.adam.base_lr > 0)) throw ConfigError("train.base_lr: must be positive");
  if (t.options.epochs < 0) throw ConfigError("train.epochs: must be >= 0");
  if (t.options.batch_size < 1) throw ConfigError("train.batch_size: must be >= 1");
  if (t.options.threads < 0) throw ConfigError("train.threads: must be >= 0");
  if (t.options.warmup_steps < 0) throw ConfigError("train.warmup_steps: must be >= 0");
  s.validate();
  return t;
}

PatternKind parse_pattern_kind(const std::string& name) {
  if (name == "uniform") return PatternKind::kUniform;
  if (name == "scanlines") return PatternKind::kScanlines;
  throw ConfigError("data.pattern.kind: unknown pattern \"" + name + "\" (expected uniform or scanlines)");
}

DataSection read_data(const json& j) {
  check_keys(j, "data", {"dataset", "validation", "pattern", "preprocess", "height", "width"});
  DataSection d;
  if (j.contains("dataset")) d.dataset = get<std::string>(j, "data", "dataset");
  if (j.contains("validation")) d.validation = get<std::string>(j, "data", "validation");
  if (j.contains("height")) d.height = get<Index>(j, "data", "height");
  if (j.contains("width")) d.width = get<Index>(j, "data", "width");
  if (j.contains("preprocess")) {
    const auto name = get<std::string>(j, "data", "preprocess");
    if (name != "none") d.preprocess = parse_preprocess_target(name);
  }
  if (j.contains("pattern")) {
    const json& p = j.at("pattern");
    check_keys(p, "data.pattern", {"kind", "count", "lines", "column_step", "seed"});
    if (p.contains("kind")) d.pattern.kind = parse_pattern_kind(get<std::string>(p, "data.pattern", "kind"));
    if (p.contains("count")) d.pattern.count = get<Index>(p, "data.pattern", "count");
    if (p.contains("lines")) d.pattern.lines = get<Index>(p, "data.pattern", "lines");
    if (p.contains("column_step")) d.pattern.column_step = get<Index>(p, "data.pattern", "column_step");
    if (p.contains("seed")) d.pattern.seed = get<std::uint64_t>(p, "data.pattern", "seed");
  }
  if (d.height < 2 || d.width < 2) throw ConfigError("data: height and width must be >= 2");
  if (d.pattern.count < 1) throw ConfigError("data.pattern.count: must be >= 1");
  if (d.pattern.lines < 1) throw ConfigError("data.pattern.lines: must be >= 1");
  if (d.pattern.column_step < 1) throw ConfigError("data.pattern.column_step: must be >= 1");
  return d;
}

IoSection read_io(const json& j) {
  check_keys(j, "io", {"checkpoint", "report", "log"});
  IoSection io;
  if (j.contains("checkpoint")) io.checkpoint = get<std::string>(j, "io", "checkpoint");
  if (j.contains("report")) io.report = get<std::string>(j, "io", "report");
  if (j.contains("log")) io.log = get<std::string>(j, "io", "log");
  return io;
}

std::string preprocess_name(const std::optional<PreprocessTarget>& t) {
  if (!t) return "none";
  return *t == PreprocessTarget::kNyuLike ? "nyu_like" : "kitti_like";
}

}  // namespace

RunConfig run_config_from_json(const json& j) {
  check_keys(j, "config", {"model", "train", "data", "io"});
  RunConfig c;
  if (j.contains("model")) c.model = read_model(j.at("model"));
  c.train = read_train(j.value("train", json::object()));
  c.data = read_data(j.value("data", json::object()));
  c.io = read_io(j.value("io", json::object()));
  validate(c.model);
  return c;
}

json to_json(const RunConfig& c) {
  const Schedule& s = c.train.options.schedule;
  return {{"model", to_json(c.model)},
          {"train",
           {{"base_lr", c.train.adam.base_lr},
            {"factors", s.factors},
            {"thresholds", s.thresholds},
            {"epochs", c.train.options.epochs},
            {"batch_size", c.train.options.batch_size},
            {"seed", c.train.seed},
            {"flip", c.train.options.flip},
            {"max_steps", c.train.options.max_steps},
            {"warmup_steps", c.train.options.warmup_steps},
            {"threads", c.train.options.threads}}},
          {"data",
           {{"dataset", c.data.dataset},
            {"validation", c.data.validation},
            {"pattern",
             {{"kind", c.data.pattern.kind == PatternKind::kUniform ? "uniform" : "scanlines"},
              {"count", c.data.pattern.count},
              {"lines", c.data.pattern.lines},
              {"column_step", c.data.pattern.column_step},
              {"seed", c.data.pattern.seed}}},
            {"preprocess", preprocess_name(c.data.preprocess)},
            {"height", c.data.height},
            {"width", c.data.width}}},
          {"io", {{"checkpoint", c.io.checkpoint}, {"report", c.io.report}, {"log", c.io.log}}}};
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override \"" + assignment + "\": expected key=value");
  const std::string path = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json* node = &j;
  std::size_t begin = 0;
  while (true) {
    const auto dot = path.find('.', begin);
    const std::string key = path.substr(begin, dot == std::string::npos ? std::string::npos : dot - begin);
    if (key.empty()) throw ConfigError("override \"" + assignment + "\": empty key segment");
    if (!node->is_object()) throw ConfigError("override \"" + assignment + "\": \"" + key + "\" is not inside an object");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    if (!node->contains(key)) (*node)[key] = json::object();
    node = &(*node)[key];
    begin = dot + 1;
  }
}

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides,
                          const std::string& default_preset) {
  json j = json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config file " + path + " is not valid JSON");
  }
  if (!j.is_object()) throw ConfigError("config: expected an object");
  if (!j.contains("model")) j["model"] = {{"preset", default_preset}};
  for (const auto& o : overrides) apply_override(j, o);
  return run_config_from_json(j);
}

std::pair<Index, Index> parse_size(const std::string& text) {
  const auto x = text.find('x');
  try {
    if (x == std::string::npos) throw std::invalid_argument(text);
    std::size_t used_w = 0, used_h = 0;
    const Index w = std::stoll(text.substr(0, x), &used_w);
    const Index h = std::stoll(text.substr(x + 1), &used_h);
    if (used_w != x || used_h != text.size() - x - 1 || w < 1 || h < 1) throw std::invalid_argument(text);
    return {w, h};
  } catch (const std::logic_error&) {
    throw ConfigError("size \"" + text + "\": expected WxH with positive integers");
  }
}

}  // namespace sdformer
