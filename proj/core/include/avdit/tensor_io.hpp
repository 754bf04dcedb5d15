#pragma once

#include <filesystem>
#include <string>

#include "avdit/tensor.hpp"

namespace avdit {

// Textual header (magic, dtype, shape, axes, "end") followed by the values
// as little-endian f32.
struct TensorFile {
  Tensor tensor;
  std::string axes;  // one letter per axis, e.g. "thwc"
};

void write_tensor(const std::filesystem::path& path, const Tensor& t, const std::string& axes);
TensorFile read_tensor(const std::filesystem::path& path);

// frame_0000.ppm ... from pixels [T, H, W, 3] in [0, 1]. Returns the count.
std::size_t write_ppm_frames(const std::filesystem::path& dir, const Tensor& pixels);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace avdit
