#pragma once

#include <cstdint>
#include <filesystem>

#include "flair/tensor.hpp"

namespace flair::io {

// 8-bit RGB PNG writer used for rendered class maps. rgb has shape (H,W,3).
void write_png_rgb(const std::filesystem::path& path, const Tensor<uint8_t>& rgb);

}  // namespace flair::io
