#include "flair/io/png.hpp"

#include <zlib.h>

#include <fstream>

namespace flair::io {
namespace {

void put32be(std::string& b, uint32_t v) {
  b.push_back(char((v >> 24) & 0xff));
  b.push_back(char((v >> 16) & 0xff));
  b.push_back(char((v >> 8) & 0xff));
  b.push_back(char(v & 0xff));
}

void put_chunk(std::string& out, const char type[4], const std::string& payload) {
  put32be(out, uint32_t(payload.size()));
  size_t crc_start = out.size();
  out.append(type, 4);
  out += payload;
  uint32_t crc = crc32(0, reinterpret_cast<const Bytef*>(out.data() + crc_start),
                       uInt(out.size() - crc_start));
  put32be(out, crc);
}

}  // namespace

void write_png_rgb(const std::filesystem::path& path, const Tensor<uint8_t>& rgb) {
  if (rgb.shape.size() != 3 || rgb.shape[2] != 3)
    throw format_error("PNG writer needs an (H,W,3) tensor, got shape " + rgb.shape_str());
  uint32_t h = uint32_t(rgb.shape[0]);
  uint32_t w = uint32_t(rgb.shape[1]);

  // Filter byte 0 in front of every scanline, then one zlib stream.
  std::string raw;
  raw.reserve(size_t(h) * (size_t(w) * 3 + 1));
  for (uint32_t r = 0; r < h; ++r) {
    raw.push_back('\0');
    raw.append(reinterpret_cast<const char*>(rgb.ptr()) + size_t(r) * w * 3, size_t(w) * 3);
  }
  uLongf comp_len = compressBound(uLong(raw.size()));
  std::string comp(comp_len, '\0');
  if (compress2(reinterpret_cast<Bytef*>(comp.data()), &comp_len,
                reinterpret_cast<const Bytef*>(raw.data()), uLong(raw.size()),
                Z_BEST_COMPRESSION) != Z_OK)
    throw error("zlib compression failed for " + path.string());
  comp.resize(comp_len);

  std::string ihdr;
  put32be(ihdr, w);
  put32be(ihdr, h);
  ihdr += char(8);  // bit depth
  ihdr += char(2);  // truecolor
  ihdr += char(0);
  ihdr += char(0);
  ihdr += char(0);

  std::string out("\x89PNG\r\n\x1a\n", 8);
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", comp);
  put_chunk(out, "IEND", "");

  std::ofstream f(path, std::ios::binary);
  if (!f) throw error("cannot open " + path.string() + " for writing");
  f.write(out.data(), std::streamsize(out.size()));
  if (!f) throw error("short write to " + path.string());
}

}  // namespace flair::io
