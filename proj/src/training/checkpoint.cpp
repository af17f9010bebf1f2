#include "sdformer/training/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "sdformer/error.hpp"

namespace sdformer {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'S', 'D', 'C', 'K'};

void put_u32(std::string& out, std::uint32_t v) { out.append(reinterpret_cast<const char*>(&v), 4); }

void put_tensor(std::string& out, const std::string& name, const Tensor<float>& t) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out += name;
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (Index e : t.shape().extents()) put_u32(out, static_cast<std::uint32_t>(e));
  out.append(reinterpret_cast<const char*>(t.data()), static_cast<std::size_t>(t.size()) * sizeof(float));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::string_view take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string("checkpoint truncated while reading ") + what + " at byte " + std::to_string(pos_));
    }
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint32_t u32(const char* what) {
    std::uint32_t v;
    std::memcpy(&v, take(4, what).data(), 4);
    return v;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

Tensor<float> read_tensor(Reader& r, const std::string& expected_name, const Shape& expected_shape) {
  const std::string name(r.take(r.u32("name length"), "tensor name"));
  if (name != expected_name) throw FormatError("checkpoint tensor \"" + name + "\" where \"" + expected_name + "\" expected");
  const std::uint32_t rank = r.u32("rank");
  if (rank != static_cast<std::uint32_t>(expected_shape.rank())) {
    throw FormatError("checkpoint tensor " + name + " has rank " + std::to_string(rank) + ", expected " +
                      std::to_string(expected_shape.rank()));
  }
  std::vector<Index> extents;
  for (std::uint32_t i = 0; i < rank; ++i) extents.push_back(r.u32("extent"));
  if (extents != expected_shape.extents()) {
    throw FormatError("checkpoint tensor " + name + " has shape " + Shape(extents).str() + ", expected " +
                      expected_shape.str());
  }
  Tensor<float> t(expected_shape);
  const auto raw = r.take(static_cast<std::size_t>(t.size()) * sizeof(float), "tensor data");
  std::memcpy(t.data(), raw.data(), raw.size());
  return t;
}

}  // namespace

Checkpoint Checkpoint::fresh(const ModelConfig& config, std::uint64_t seed, AdamHyper hyper) {
  Checkpoint c;
  c.config = config;
  c.weights = build_model(config, seed);
  c.optimizer = AdamState<float>::zeros(c.weights, hyper);
  c.seed = seed;
  return c;
}

std::string serialize_checkpoint(const Checkpoint& c) {
  const nlohmann::json header = {
      {"config", to_json(c.config)},
      {"epoch", c.epoch},
      {"step", c.optimizer.step},
      {"seed", c.seed},
      {"adam", {{"beta1", c.optimizer.hyper.beta1}, {"beta2", c.optimizer.hyper.beta2}, {"eps", c.optimizer.hyper.eps},
                {"base_lr", c.optimizer.hyper.base_lr}}},
      {"tensors", 3 * c.weights.size()}};
  const std::string text = header.dump();
  std::string out(kMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  const auto& names = c.weights.names();
  for (std::size_t i = 0; i < names.size(); ++i) put_tensor(out, names[i], c.weights[i]);
  for (std::size_t i = 0; i < names.size(); ++i) put_tensor(out, "adam.m/" + names[i], c.optimizer.m[i]);
  for (std::size_t i = 0; i < names.size(); ++i) put_tensor(out, "adam.v/" + names[i], c.optimizer.v[i]);
  return out;
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(4, "magic") != std::string_view(kMagic, 4)) throw FormatError("not a checkpoint: bad magic");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const auto text = r.take(r.u32("header length"), "header");
  Checkpoint c;
  std::size_t count = 0;
  try {
    const auto header = nlohmann::json::parse(text);
    c.config = model_config_from_json(header.at("config"));
    c.epoch = header.at("epoch").get<int>();
    c.optimizer.step = header.at("step").get<std::int64_t>();
    c.seed = header.at("seed").get<std::uint64_t>();
    const auto& adam = header.at("adam");
    c.optimizer.hyper = {adam.at("beta1").get<double>(), adam.at("beta2").get<double>(), adam.at("eps").get<double>(),
                          adam.at("base_lr").get<double>()};
    count = header.at("tensors").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint config: ") + e.what());
  }
  const auto layout = parameter_layout(c.config);
  if (count != 3 * layout.size()) {
    throw FormatError("checkpoint lists " + std::to_string(count) + " tensors; config implies " +
                      std::to_string(3 * layout.size()));
  }
  for (const auto& [name, shape] : layout) c.weights.add(name, read_tensor(r, name, shape));
  for (const auto& [name, shape] : layout) c.optimizer.m.push_back(read_tensor(r, "adam.m/" + name, shape));
  for (const auto& [name, shape] : layout) c.optimizer.v.push_back(read_tensor(r, "adam.v/" + name, shape));
  if (!r.done()) throw FormatError("checkpoint has trailing bytes");
  return c;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(checkpoint);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read checkpoint " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return deserialize_checkpoint(buffer.str());
}

}  // namespace sdformer
