#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "sdformer/datakit/sample.hpp"

namespace sdformer {

/// 16-bit binary PGM, big endian, maxval 65535, value = round(meters * 256);
/// 0 means invalid. Positive depths below half a step are stored as 1.
void write_depth_pgm(const Tensor<float>& depth, const std::filesystem::path& path);
/// Throws FormatError on malformed headers or a maxval other than 65535.
Tensor<float> read_depth_pgm(const std::filesystem::path& path);

/// 8-bit binary PPM; values are clamped to [0, 1] and rounded.
void write_rgb_ppm(const Tensor<float>& rgb, const std::filesystem::path& path);
Tensor<float> read_rgb_ppm(const std::filesystem::path& path);

/// Writes <id>_rgb.ppm, <id>_sparse.pgm and <id>_gt.pgm into dir.
void write_sample(const Sample& sample, const std::filesystem::path& dir);
/// Reads and validates one sample.
Sample read_sample(const std::filesystem::path& dir, const std::string& id);

/// write_sample for each sample plus index.txt listing the ids in order.
void write_dataset(const std::vector<Sample>& samples, const std::filesystem::path& dir);
std::vector<std::string> read_index(const std::filesystem::path& dir);
std::vector<Sample> read_dataset(const std::filesystem::path& dir);

}  // namespace sdformer
