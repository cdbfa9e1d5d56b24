#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "flair/tensor.hpp"

namespace flair::io {

// Minimal NPY v1.0 support: little-endian, C-order, integer dtypes. This is
// all the FLAIR layout needs; anything else is rejected with a format_error.

void write_npy_u16(const std::filesystem::path& path, const Tensor<uint16_t>& t);
void write_npy_u8(const std::filesystem::path& path, const Tensor<uint8_t>& t);

Tensor<uint16_t> read_npy_u16(const std::filesystem::path& path);

// Accepts u1/i1/u2/i2/u4/i4 on disk, range-checked into uint8.
Tensor<uint8_t> read_npy_u8_widened(const std::filesystem::path& path);

}  // namespace flair::io
