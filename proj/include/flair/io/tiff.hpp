#pragma once

#include <cstdint>
#include <filesystem>

#include "flair/tensor.hpp"

namespace flair::io {

// Uncompressed little-endian TIFF, one 8-bit sample per band, bands stored as
// separate planes (PlanarConfiguration = 2), one strip per plane. The writer
// always produces that layout; the reader also accepts interleaved
// (PlanarConfiguration = 1) single-strip-per-row files so externally produced
// imagery loads too. Compression, tiling, and big-endian files are rejected.

// data shape (C,H,W).
void write_tiff_u8(const std::filesystem::path& path, const Tensor<uint8_t>& data);

Tensor<uint8_t> read_tiff_u8(const std::filesystem::path& path);

}  // namespace flair::io
