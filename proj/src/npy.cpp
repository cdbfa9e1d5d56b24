#include "flair/io/npy.hpp"

#include <cstring>
#include <fstream>

namespace flair::io {
namespace {

const char kMagic[7] = "\x93NUMPY";

std::string shape_tuple(const std::vector<long>& shape) {
  std::string s = "(";
  for (size_t i = 0; i < shape.size(); ++i) {
    s += std::to_string(shape[i]);
    if (i + 1 < shape.size()) s += ", ";
  }
  if (shape.size() == 1) s += ",";
  s += ")";
  return s;
}

void write_npy(const std::filesystem::path& path, const std::vector<long>& shape,
               const std::string& descr, const void* data, size_t bytes) {
  std::string dict = "{'descr': '" + descr + "', 'fortran_order': False, 'shape': " +
                     shape_tuple(shape) + ", }";
  // Pad so that magic(6) + version(2) + hlen(2) + dict is a multiple of 64.
  size_t base = 6 + 2 + 2;
  size_t total = base + dict.size() + 1;  // +1 for the trailing newline
  size_t padded = (total + 63) / 64 * 64;
  dict.append(padded - total, ' ');
  dict += '\n';

  std::ofstream f(path, std::ios::binary);
  if (!f) throw error("cannot open " + path.string() + " for writing");
  f.write(kMagic, 6);
  char ver[2] = {1, 0};
  f.write(ver, 2);
  uint16_t hlen = static_cast<uint16_t>(dict.size());
  f.write(reinterpret_cast<const char*>(&hlen), 2);
  f.write(dict.data(), static_cast<std::streamsize>(dict.size()));
  f.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
  if (!f) throw error("short write to " + path.string());
}

struct Header {
  std::string descr;
  std::vector<long> shape;
};

Header read_header(std::ifstream& f, const std::filesystem::path& path) {
  char magic[6];
  f.read(magic, 6);
  if (!f || std::memcmp(magic, kMagic, 6) != 0)
    throw format_error(path.string() + ": not an NPY file");
  unsigned char ver[2];
  f.read(reinterpret_cast<char*>(ver), 2);
  uint32_t hlen = 0;
  if (ver[0] == 1) {
    uint16_t h16;
    f.read(reinterpret_cast<char*>(&h16), 2);
    hlen = h16;
  } else if (ver[0] == 2 || ver[0] == 3) {
    f.read(reinterpret_cast<char*>(&hlen), 4);
  } else {
    throw format_error(path.string() + ": unsupported NPY version " + std::to_string(ver[0]));
  }
  std::string dict(hlen, '\0');
  f.read(dict.data(), hlen);
  if (!f) throw format_error(path.string() + ": truncated NPY header");

  Header h;
  auto dpos = dict.find("'descr'");
  if (dpos == std::string::npos) throw format_error(path.string() + ": NPY header lacks descr");
  auto q1 = dict.find('\'', dpos + 7);
  auto q2 = dict.find('\'', q1 + 1);
  h.descr = dict.substr(q1 + 1, q2 - q1 - 1);
  if (dict.find("'fortran_order': False") == std::string::npos)
    throw format_error(path.string() + ": fortran-order NPY not supported");
  auto spos = dict.find("'shape'");
  auto p1 = dict.find('(', spos);
  auto p2 = dict.find(')', p1);
  std::string tup = dict.substr(p1 + 1, p2 - p1 - 1);
  long cur = -1;
  for (char c : tup) {
    if (c >= '0' && c <= '9') {
      cur = (cur < 0 ? 0 : cur) * 10 + (c - '0');
    } else if (cur >= 0) {
      h.shape.push_back(cur);
      cur = -1;
    }
  }
  if (cur >= 0) h.shape.push_back(cur);
  return h;
}

}  // namespace

void write_npy_u16(const std::filesystem::path& path, const Tensor<uint16_t>& t) {
  write_npy(path, t.shape, "<u2", t.data.data(), t.data.size() * 2);
}

void write_npy_u8(const std::filesystem::path& path, const Tensor<uint8_t>& t) {
  write_npy(path, t.shape, "|u1", t.data.data(), t.data.size());
}

Tensor<uint16_t> read_npy_u16(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw error("cannot open " + path.string());
  Header h = read_header(f, path);
  if (h.descr != "<u2" && h.descr != "|u2" && h.descr != "u2")
    throw format_error(path.string() + ": expected uint16 data, found dtype '" + h.descr + "'");
  Tensor<uint16_t> t(h.shape);
  f.read(reinterpret_cast<char*>(t.data.data()),
         static_cast<std::streamsize>(t.data.size() * 2));
  if (!f) throw format_error(path.string() + ": truncated NPY payload");
  return t;
}

Tensor<uint8_t> read_npy_u8_widened(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw error("cannot open " + path.string());
  Header h = read_header(f, path);
  std::string d = h.descr;
  if (!d.empty() && (d[0] == '<' || d[0] == '|' || d[0] == '=')) d = d.substr(1);
  long width = 0;
  bool sign = false;
  if (d == "u1") width = 1;
  else if (d == "i1") width = 1, sign = true;
  else if (d == "u2") width = 2;
  else if (d == "i2") width = 2, sign = true;
  else if (d == "u4") width = 4;
  else if (d == "i4") width = 4, sign = true;
  else throw format_error(path.string() + ": unsupported mask dtype '" + h.descr + "'");

  long n = Tensor<uint8_t>::numel_of(h.shape);
  std::vector<char> raw(static_cast<size_t>(n * width));
  f.read(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (!f) throw format_error(path.string() + ": truncated NPY payload");

  Tensor<uint8_t> t(h.shape);
  for (long i = 0; i < n; ++i) {
    int64_t v = 0;
    std::memcpy(&v, raw.data() + i * width, static_cast<size_t>(width));
    if (sign) {
      // Sign-extend.
      int shift = int(64 - 8 * width);
      v = (v << shift) >> shift;
    }
    if (v < 0 || v > 255)
      throw format_error(path.string() + ": value " + std::to_string(v) +
                         " does not fit an 8-bit mask");
    t.data[static_cast<size_t>(i)] = static_cast<uint8_t>(v);
  }
  return t;
}

}  // namespace flair::io
