#pragma once

#include <string>
#include <vector>

#include "cpfc/tensor.hpp"

namespace cpfc {

// 8-bit PNG I/O. {3,H,W} tensors map to RGB, {H,W} (or {1,H,W}) to
// grayscale; values are clamped to [0,1] and quantized as round(255*v).
// Loading accepts only 8-bit RGB or grayscale files.
void save_image(const std::string& path, const Tensor& image);
Tensor load_image(const std::string& path);

// Raw sidecar: little-endian 32-bit floats, row-major, no header.
// Round-trips bit-exactly.
void save_raw(const std::string& path, const Tensor& tensor);
Tensor load_raw(const std::string& path, std::vector<int> shape);

// Writes content to `path + ".tmp"` and renames onto path.
void atomic_write_text(const std::string& path, const std::string& content);

}  // namespace cpfc
