#pragma once

// Bit-exact PFM (32-bit float, color) and PPM (P6, 8-bit) image I/O.
// Tensors are (3, H, W); PFM rows are stored bottom-to-top with a
// negative scale marking little-endian payloads.

#include "sgm/tensor.hpp"

#include <filesystem>
#include <string>

namespace sgm {

Tensor<float> read_pfm(const std::filesystem::path& path);
void write_pfm(const std::filesystem::path& path, const Tensor<float>& image);

Tensor<float> read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Tensor<float>& image);

// Dispatch on extension (.pfm / .ppm).
Tensor<float> read_image(const std::filesystem::path& path);

}  // namespace sgm
