#include "flair/io/tiff.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

namespace flair::io {
namespace {

void put16(std::string& b, uint16_t v) {
  b.push_back(char(v & 0xff));
  b.push_back(char(v >> 8));
}

void put32(std::string& b, uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(char((v >> (8 * i)) & 0xff));
}

// tag, type, count, then the value (or offset) in a 4-byte field.
void put_entry(std::string& b, uint16_t tag, uint16_t type, uint32_t count, uint32_t value) {
  put16(b, tag);
  put16(b, type);
  put32(b, count);
  put32(b, value);
}

constexpr uint16_t kShort = 3;
constexpr uint16_t kLong = 4;

}  // namespace

void write_tiff_u8(const std::filesystem::path& path, const Tensor<uint8_t>& data) {
  if (data.shape.size() != 3)
    throw format_error("TIFF writer needs a (bands,H,W) tensor, got shape " + data.shape_str());
  uint32_t c = uint32_t(data.shape[0]);
  uint32_t h = uint32_t(data.shape[1]);
  uint32_t w = uint32_t(data.shape[2]);
  uint32_t plane = h * w;

  // Layout: header, pixel planes, out-of-line arrays, IFD.
  uint32_t data_off = 8;
  uint32_t pos = data_off + c * plane;
  if (pos & 1) ++pos;
  uint32_t bits_off = 0;
  if (c > 2) {
    bits_off = pos;
    pos += 2 * c;
  }
  uint32_t strips_off = 0, counts_off = 0;
  if (c > 1) {
    strips_off = pos;
    pos += 4 * c;
    counts_off = pos;
    pos += 4 * c;
  }
  uint32_t ifd_off = pos;

  std::string ifd;
  put16(ifd, 10);  // entry count
  put_entry(ifd, 256, kLong, 1, w);
  put_entry(ifd, 257, kLong, 1, h);
  if (c == 1)
    put_entry(ifd, 258, kShort, 1, 8);
  else if (c == 2)
    put_entry(ifd, 258, kShort, 2, 8u | (8u << 16));
  else
    put_entry(ifd, 258, kShort, c, bits_off);
  put_entry(ifd, 259, kShort, 1, 1);  // no compression
  put_entry(ifd, 262, kShort, 1, 1);  // min-is-black
  put_entry(ifd, 273, kLong, c, c == 1 ? data_off : strips_off);
  put_entry(ifd, 277, kShort, 1, c);
  put_entry(ifd, 278, kLong, 1, h);  // one strip per plane
  put_entry(ifd, 279, kLong, c, c == 1 ? plane : counts_off);
  put_entry(ifd, 284, kShort, 1, 2);  // planar
  put32(ifd, 0);                      // no next IFD

  std::ofstream f(path, std::ios::binary);
  if (!f) throw error("cannot open " + path.string() + " for writing");
  std::string head = "II";
  put16(head, 42);
  put32(head, ifd_off);
  f.write(head.data(), std::streamsize(head.size()));
  f.write(reinterpret_cast<const char*>(data.ptr()), std::streamsize(c) * plane);

  std::string tail;
  if ((data_off + c * plane) & 1) tail.push_back('\0');
  if (c > 2)
    for (uint32_t i = 0; i < c; ++i) put16(tail, 8);
  if (c > 1) {
    for (uint32_t i = 0; i < c; ++i) put32(tail, data_off + i * plane);
    for (uint32_t i = 0; i < c; ++i) put32(tail, plane);
  }
  tail += ifd;
  f.write(tail.data(), std::streamsize(tail.size()));
  if (!f) throw error("short write to " + path.string());
}

Tensor<uint8_t> read_tiff_u8(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw error("cannot open " + path.string());
  std::vector<uint8_t> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  auto need = [&](size_t off, size_t n) {
    if (off + n > buf.size()) throw format_error(path.string() + ": truncated TIFF");
  };
  auto u16at = [&](size_t off) {
    need(off, 2);
    return uint16_t(buf[off] | (buf[off + 1] << 8));
  };
  auto u32at = [&](size_t off) {
    need(off, 4);
    return uint32_t(buf[off]) | (uint32_t(buf[off + 1]) << 8) | (uint32_t(buf[off + 2]) << 16) |
           (uint32_t(buf[off + 3]) << 24);
  };

  need(0, 8);
  if (buf[0] == 'M' && buf[1] == 'M')
    throw format_error(path.string() + ": big-endian TIFF not supported");
  if (buf[0] != 'I' || buf[1] != 'I' || u16at(2) != 42)
    throw format_error(path.string() + ": not a TIFF file");

  size_t ifd = u32at(4);
  uint16_t n_entries = u16at(ifd);
  struct Field {
    uint16_t type;
    uint32_t count;
    size_t at;  // offset of the 4-byte value field
  };
  std::map<uint16_t, Field> fields;
  for (uint16_t i = 0; i < n_entries; ++i) {
    size_t e = ifd + 2 + 12u * i;
    fields[u16at(e)] = Field{u16at(e + 2), u32at(e + 4), e + 8};
  }

  auto get_vals = [&](uint16_t tag) -> std::vector<uint32_t> {
    auto it = fields.find(tag);
    if (it == fields.end()) return {};
    const Field& fl = it->second;
    size_t esz = fl.type == kShort ? 2 : fl.type == kLong ? 4 : fl.type == 1 ? 1 : 0;
    if (esz == 0)
      throw format_error(path.string() + ": TIFF tag " + std::to_string(tag) +
                         " has unsupported field type " + std::to_string(fl.type));
    size_t total = esz * fl.count;
    size_t src = total <= 4 ? fl.at : u32at(fl.at);
    std::vector<uint32_t> v(fl.count);
    for (uint32_t j = 0; j < fl.count; ++j) {
      if (esz == 1) {
        need(src + j, 1);
        v[j] = buf[src + j];
      } else if (esz == 2) {
        v[j] = u16at(src + 2 * j);
      } else {
        v[j] = u32at(src + 4 * j);
      }
    }
    return v;
  };
  auto get1 = [&](uint16_t tag, uint32_t dflt, bool required = false) {
    auto v = get_vals(tag);
    if (v.empty()) {
      if (required)
        throw format_error(path.string() + ": TIFF lacks required tag " + std::to_string(tag));
      return dflt;
    }
    return v[0];
  };

  uint32_t w = get1(256, 0, true);
  uint32_t h = get1(257, 0, true);
  if (w == 0 || h == 0) throw format_error(path.string() + ": zero-sized TIFF image");
  uint32_t comp = get1(259, 1);
  if (comp != 1)
    throw format_error(path.string() + ": expected uncompressed TIFF (compression 1), found " +
                       std::to_string(comp));
  uint32_t spp = get1(277, 1);
  for (uint32_t b : get_vals(258))
    if (b != 8)
      throw format_error(path.string() + ": expected 8 bits per sample, found " +
                         std::to_string(b));
  uint32_t planar = get1(284, 1);
  uint32_t rps = get1(278, h);
  if (rps == 0 || rps > h) rps = h;
  auto offs = get_vals(273);
  auto cnts = get_vals(279);
  if (offs.empty()) throw format_error(path.string() + ": TIFF lacks strip offsets");
  if (cnts.size() != offs.size())
    throw format_error(path.string() + ": " + std::to_string(offs.size()) + " strip offsets but " +
                       std::to_string(cnts.size()) + " strip byte counts");

  uint32_t strips_per_image = (h + rps - 1) / rps;
  Tensor<uint8_t> out({long(spp), long(h), long(w)});

  auto check_strip = [&](size_t idx, uint32_t want_bytes) {
    if (cnts[idx] != want_bytes)
      throw format_error(path.string() + ": strip " + std::to_string(idx) + " holds " +
                         std::to_string(cnts[idx]) + " bytes, expected " +
                         std::to_string(want_bytes));
    need(offs[idx], want_bytes);
  };

  if (planar == 2) {
    if (offs.size() != size_t(strips_per_image) * spp)
      throw format_error(path.string() + ": expected " +
                         std::to_string(size_t(strips_per_image) * spp) +
                         " strips for planar data, found " + std::to_string(offs.size()));
    for (uint32_t c = 0; c < spp; ++c) {
      for (uint32_t s = 0; s < strips_per_image; ++s) {
        size_t idx = size_t(c) * strips_per_image + s;
        uint32_t rows = std::min(rps, h - s * rps);
        check_strip(idx, rows * w);
        std::memcpy(&out.data[(size_t(c) * h + size_t(s) * rps) * w], buf.data() + offs[idx],
                    size_t(rows) * w);
      }
    }
  } else if (planar == 1) {
    if (offs.size() != strips_per_image)
      throw format_error(path.string() + ": expected " + std::to_string(strips_per_image) +
                         " strips for interleaved data, found " + std::to_string(offs.size()));
    for (uint32_t s = 0; s < strips_per_image; ++s) {
      uint32_t rows = std::min(rps, h - s * rps);
      check_strip(s, rows * w * spp);
      const uint8_t* src = buf.data() + offs[s];
      for (uint32_t r = 0; r < rows; ++r)
        for (uint32_t x = 0; x < w; ++x)
          for (uint32_t c = 0; c < spp; ++c)
            out.data[(size_t(c) * h + s * rps + r) * w + x] = src[(size_t(r) * w + x) * spp + c];
    }
  } else {
    throw format_error(path.string() + ": planar configuration " + std::to_string(planar) +
                       " not supported");
  }
  return out;
}

}  // namespace flair::io
