#include "sdformer/datakit/io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "sdformer/error.hpp"

namespace sdformer {
namespace {

struct Header {
  Index width = 0, height = 0, maxval = 0;
  std::size_t data_offset = 0;
};

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("failed writing " + path.string());
}

// Netpbm header: magic, then width, height, maxval separated by whitespace or
// comments, then exactly one whitespace byte.
Header parse_header(const std::string& bytes, const char* magic, const std::filesystem::path& path) {
  if (bytes.size() < 2 || bytes.compare(0, 2, magic) != 0) {
    throw FormatError(path.string() + ": expected magic " + magic);
  }
  std::size_t pos = 2;
  Index fields[3];
  for (Index& field : fields) {
    while (pos < bytes.size()) {
      if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
    if (pos >= bytes.size() || !std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      throw FormatError(path.string() + ": malformed header");
    }
    field = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      field = field * 10 + (bytes[pos++] - '0');
      if (field > 1'000'000) throw FormatError(path.string() + ": header value out of range");
    }
  }
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw FormatError(path.string() + ": malformed header");
  }
  Header h{fields[0], fields[1], fields[2], pos + 1};
  if (h.width < 1 || h.height < 1) throw FormatError(path.string() + ": empty image");
  return h;
}

std::string header_text(const char* magic, Index width, Index height, int maxval) {
  return std::string(magic) + "\n" + std::to_string(width) + " " + std::to_string(height) + "\n" +
         std::to_string(maxval) + "\n";
}

void check_size(const std::string& bytes, const Header& h, std::size_t sample_bytes, const std::filesystem::path& path) {
  const std::size_t expected = h.data_offset + static_cast<std::size_t>(h.width * h.height) * sample_bytes;
  if (bytes.size() != expected) {
    throw FormatError(path.string() + ": " + std::to_string(bytes.size()) + " bytes, expected " +
                      std::to_string(expected));
  }
}

}  // namespace

void write_depth_pgm(const Tensor<float>& depth, const std::filesystem::path& path) {
  if (depth.rank() != 3 || depth.dim(0) != 1) throw ConfigError("depth map must be 1xHxW, got " + depth.shape().str());
  const Index h = depth.dim(1), w = depth.dim(2);
  std::string bytes = header_text("P5", w, h, 65535);
  bytes.reserve(bytes.size() + static_cast<std::size_t>(2 * h * w));
  for (Index i = 0; i < depth.size(); ++i) {
    const float d = depth[i];
    if (!std::isfinite(d) || d < 0) throw FormatError(path.string() + ": depth " + std::to_string(d) + " not storable");
    long q = std::lround(double(d) * 256.0);
    if (d > 0 && q == 0) q = 1;
    if (q > 65535) throw FormatError(path.string() + ": depth " + std::to_string(d) + " exceeds 255.99 m");
    bytes.push_back(static_cast<char>(q >> 8));
    bytes.push_back(static_cast<char>(q & 0xff));
  }
  write_file(path, bytes);
}

Tensor<float> read_depth_pgm(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  const Header h = parse_header(bytes, "P5", path);
  if (h.maxval != 65535) throw FormatError(path.string() + ": depth maxval " + std::to_string(h.maxval) + " != 65535");
  check_size(bytes, h, 2, path);
  Tensor<float> depth(Shape{1, h.height, h.width});
  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data() + h.data_offset);
  for (Index i = 0; i < depth.size(); ++i) depth[i] = float((data[2 * i] << 8) | data[2 * i + 1]) / 256.0f;
  return depth;
}

void write_rgb_ppm(const Tensor<float>& rgb, const std::filesystem::path& path) {
  if (rgb.rank() != 3 || rgb.dim(0) != 3) throw ConfigError("rgb map must be 3xHxW, got " + rgb.shape().str());
  const Index h = rgb.dim(1), w = rgb.dim(2), plane = h * w;
  std::string bytes = header_text("P6", w, h, 255);
  for (Index i = 0; i < plane; ++i) {
    for (Index c = 0; c < 3; ++c) {
      const float v = std::isfinite(rgb[c * plane + i]) ? std::clamp(rgb[c * plane + i], 0.0f, 1.0f) : 0.0f;
      bytes.push_back(static_cast<char>(std::lround(v * 255.0f)));
    }
  }
  write_file(path, bytes);
}

Tensor<float> read_rgb_ppm(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  const Header h = parse_header(bytes, "P6", path);
  if (h.maxval != 255) throw FormatError(path.string() + ": rgb maxval " + std::to_string(h.maxval) + " != 255");
  check_size(bytes, h, 3, path);
  const Index plane = h.height * h.width;
  Tensor<float> rgb(Shape{3, h.height, h.width});
  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data() + h.data_offset);
  for (Index i = 0; i < plane; ++i) {
    for (Index c = 0; c < 3; ++c) rgb[c * plane + i] = float(data[3 * i + c]) / 255.0f;
  }
  return rgb;
}

void write_sample(const Sample& sample, const std::filesystem::path& dir) {
  validate_sample(sample);
  if (sample.id.empty() || sample.id.find_first_of("/\\ \n") != std::string::npos) {
    throw ConfigError("sample id \"" + sample.id + "\" is not a plain file stem");
  }
  std::filesystem::create_directories(dir);
  write_rgb_ppm(sample.rgb, dir / (sample.id + "_rgb.ppm"));
  write_depth_pgm(sample.sparse, dir / (sample.id + "_sparse.pgm"));
  write_depth_pgm(sample.gt, dir / (sample.id + "_gt.pgm"));
}

Sample read_sample(const std::filesystem::path& dir, const std::string& id) {
  Sample s{id, read_rgb_ppm(dir / (id + "_rgb.ppm")), read_depth_pgm(dir / (id + "_sparse.pgm")),
           read_depth_pgm(dir / (id + "_gt.pgm"))};
  validate_sample(s);
  return s;
}

void write_dataset(const std::vector<Sample>& samples, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::string index;
  for (const Sample& s : samples) {
    write_sample(s, dir);
    index += s.id + "\n";
  }
  write_file(dir / "index.txt", index);
}

std::vector<std::string> read_index(const std::filesystem::path& dir) {
  std::istringstream in(read_file(dir / "index.txt"));
  std::vector<std::string> ids;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) ids.push_back(line);
  }
  if (ids.empty()) throw FormatError((dir / "index.txt").string() + ": no sample ids");
  return ids;
}

std::vector<Sample> read_dataset(const std::filesystem::path& dir) {
  std::vector<Sample> samples;
  for (const std::string& id : read_index(dir)) samples.push_back(read_sample(dir, id));
  return samples;
}

}  // namespace sdformer
