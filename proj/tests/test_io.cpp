#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "flair/data_model.hpp"
#include "flair/io/npy.hpp"
#include "flair/io/png.hpp"
#include "flair/io/tiff.hpp"
#include "flair/rng.hpp"

namespace fs = std::filesystem;
using namespace flair;

namespace {

fs::path temp_dir() {
  auto d = fs::temp_directory_path() / "flair_io_test";
  fs::create_directories(d);
  return d;
}

std::vector<uint8_t> slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("npy u16 round trip preserves shape and payload") {
  Tensor<uint16_t> t({3, 4, 5});
  Rng rng(7);
  for (auto& v : t.data) v = uint16_t(rng.uniform_int(0, 20000));
  auto p = temp_dir() / "a.npy";
  io::write_npy_u16(p, t);
  auto back = io::read_npy_u16(p);
  CHECK(back.shape == t.shape);
  CHECK(back.data == t.data);
}

TEST_CASE("npy header is the numpy v1.0 layout") {
  Tensor<uint8_t> t({2, 3});
  for (size_t i = 0; i < t.data.size(); ++i) t.data[i] = uint8_t(i);
  auto p = temp_dir() / "hdr.npy";
  io::write_npy_u8(p, t);
  auto raw = slurp(p);
  REQUIRE(raw.size() > 10);
  CHECK(std::memcmp(raw.data(), "\x93NUMPY\x01\x00", 8) == 0);
  uint16_t hlen = uint16_t(raw[8] | (raw[9] << 8));
  // Total header (magic + version + length + dict) is 64-byte aligned.
  CHECK((10 + hlen) % 64 == 0);
  std::string dict(raw.begin() + 10, raw.begin() + 10 + hlen);
  CHECK(dict.find("'descr': '|u1'") != std::string::npos);
  CHECK(dict.find("'fortran_order': False") != std::string::npos);
  CHECK(dict.find("(2, 3)") != std::string::npos);
  CHECK(raw.size() == size_t(10 + hlen + 6));
}

TEST_CASE("npy one-dimensional shape gets the trailing comma") {
  Tensor<uint8_t> t({4});
  auto p = temp_dir() / "one.npy";
  io::write_npy_u8(p, t);
  auto raw = slurp(p);
  std::string head(raw.begin(), raw.begin() + 80);
  CHECK(head.find("(4,)") != std::string::npos);
}

TEST_CASE("npy reader rejects mismatched dtype") {
  Tensor<uint8_t> t({2, 2});
  auto p = temp_dir() / "u8.npy";
  io::write_npy_u8(p, t);
  CHECK_THROWS_AS(io::read_npy_u16(p), format_error);
}

TEST_CASE("npy widened read accepts wider integers in range") {
  // Hand-build an <i4 file holding mask-ish values.
  std::string dict = "{'descr': '<i4', 'fortran_order': False, 'shape': (2, 2), }";
  dict.append(64 - (10 + dict.size() + 1) % 64 == 0 ? 0 : 64 - (10 + dict.size() + 1) % 64, ' ');
  dict += '\n';
  auto p = temp_dir() / "i4.npy";
  {
    std::ofstream f(p, std::ios::binary);
    f.write("\x93NUMPY\x01\x00", 8);
    uint16_t hlen = uint16_t(dict.size());
    f.write(reinterpret_cast<char*>(&hlen), 2);
    f.write(dict.data(), std::streamsize(dict.size()));
    int32_t vals[4] = {0, 55, 100, 255};
    f.write(reinterpret_cast<char*>(vals), sizeof vals);
  }
  auto t = io::read_npy_u8_widened(p);
  CHECK(t.shape == std::vector<long>({2, 2}));
  CHECK(t.data == std::vector<uint8_t>({0, 55, 100, 255}));
}

TEST_CASE("npy widened read rejects values outside 8 bits") {
  std::string dict = "{'descr': '<i2', 'fortran_order': False, 'shape': (1,), }";
  dict.append(63 - (10 + dict.size()) % 64, ' ');
  dict += '\n';
  auto p = temp_dir() / "big.npy";
  {
    std::ofstream f(p, std::ios::binary);
    f.write("\x93NUMPY\x01\x00", 8);
    uint16_t hlen = uint16_t(dict.size());
    f.write(reinterpret_cast<char*>(&hlen), 2);
    int16_t v = 300;
    f.write(reinterpret_cast<char*>(&v), 2);
  }
  CHECK_THROWS_AS(io::read_npy_u8_widened(p), format_error);
}

TEST_CASE("npy reader rejects garbage") {
  auto p = temp_dir() / "junk.npy";
  std::ofstream(p, std::ios::binary) << "not numpy at all";
  CHECK_THROWS_AS(io::read_npy_u16(p), format_error);
}

TEST_CASE("tiff round trip for one and five bands") {
  Rng rng(11);
  for (long c : {1L, 5L}) {
    Tensor<uint8_t> t({c, 7, 9});
    for (auto& v : t.data) v = uint8_t(rng.uniform_int(0, 255));
    auto p = temp_dir() / ("t" + std::to_string(c) + ".tif");
    io::write_tiff_u8(p, t);
    auto back = io::read_tiff_u8(p);
    CHECK(back.shape == t.shape);
    CHECK(back.data == t.data);
  }
}

TEST_CASE("tiff reader handles interleaved files") {
  // Hand-build a 2x2 RGB TIFF with PlanarConfiguration 1, one strip.
  std::string b;
  auto w16 = [&](uint16_t v) {
    b += char(v & 0xff);
    b += char(v >> 8);
  };
  auto w32 = [&](uint32_t v) {
    for (int i = 0; i < 4; ++i) b += char((v >> (8 * i)) & 0xff);
  };
  b += "II";
  w16(42);
  w32(8 + 12);  // IFD after the header and pixel data
  uint8_t px[12] = {10, 20, 30, 40, 50, 60, 70, 80, 90, 100, 110, 120};
  b.append(reinterpret_cast<char*>(px), 12);
  w16(8);  // entries
  auto entry = [&](uint16_t tag, uint16_t type, uint32_t count, uint32_t val) {
    w16(tag);
    w16(type);
    w32(count);
    w32(val);
  };
  entry(256, 3, 1, 2);
  entry(257, 3, 1, 2);
  entry(258, 3, 2, 8 | (8u << 16));  // count 2 < spp tolerated, both 8
  entry(259, 3, 1, 1);
  entry(273, 4, 1, 8);
  entry(277, 3, 1, 3);
  entry(279, 4, 1, 12);
  entry(284, 3, 1, 1);
  w32(0);
  auto p = temp_dir() / "inter.tif";
  std::ofstream(p, std::ios::binary).write(b.data(), std::streamsize(b.size()));

  auto t = io::read_tiff_u8(p);
  REQUIRE(t.shape == std::vector<long>({3, 2, 2}));
  // Channel planes come out deinterleaved.
  CHECK(t.at3(0, 0, 0) == 10);
  CHECK(t.at3(1, 0, 0) == 20);
  CHECK(t.at3(2, 0, 0) == 30);
  CHECK(t.at3(0, 1, 1) == 100);
  CHECK(t.at3(2, 1, 1) == 120);
}

TEST_CASE("tiff reader rejects big-endian and compressed files") {
  auto p = temp_dir() / "bad.tif";
  std::ofstream(p, std::ios::binary) << std::string("MM\x00\x2a\x00\x00\x00\x08", 8);
  CHECK_THROWS_WITH_AS(io::read_tiff_u8(p), doctest::Contains("big-endian"), format_error);

  Tensor<uint8_t> t({1, 2, 2});
  io::write_tiff_u8(p, t);
  auto raw = slurp(p);
  // Patch the compression entry (tag 259) to LZW.
  for (size_t i = 0; i + 12 <= raw.size(); ++i) {
    if (raw[i] == 0x03 && raw[i + 1] == 0x01 && raw[i + 8] == 1) {
      raw[i + 8] = 5;
      break;
    }
  }
  std::ofstream(p, std::ios::binary)
      .write(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
  CHECK_THROWS_WITH_AS(io::read_tiff_u8(p), doctest::Contains("compression"), format_error);
}

TEST_CASE("tiff reader reports truncation") {
  Tensor<uint8_t> t({2, 4, 4});
  auto p = temp_dir() / "trunc.tif";
  io::write_tiff_u8(p, t);
  auto raw = slurp(p);
  std::ofstream(p, std::ios::binary).write(reinterpret_cast<char*>(raw.data()), 20);
  CHECK_THROWS_AS(io::read_tiff_u8(p), format_error);
}

TEST_CASE("png writer emits a well-formed file") {
  Tensor<uint8_t> img({5, 3, 3});
  Rng rng(3);
  for (auto& v : img.data) v = uint8_t(rng.uniform_int(0, 255));
  auto p = temp_dir() / "img.png";
  io::write_png_rgb(p, img);
  auto raw = slurp(p);
  REQUIRE(raw.size() > 45);
  CHECK(std::memcmp(raw.data(), "\x89PNG\r\n\x1a\n", 8) == 0);
  // IHDR: width then height, big-endian, then depth 8 / color type 2.
  auto be32 = [&](size_t off) {
    return uint32_t(raw[off]) << 24 | uint32_t(raw[off + 1]) << 16 | uint32_t(raw[off + 2]) << 8 |
           uint32_t(raw[off + 3]);
  };
  CHECK(be32(8) == 13);
  CHECK(std::memcmp(raw.data() + 12, "IHDR", 4) == 0);
  CHECK(be32(16) == 3);
  CHECK(be32(20) == 5);
  CHECK(raw[24] == 8);
  CHECK(raw[25] == 2);
  CHECK(std::memcmp(raw.data() + raw.size() - 8, "IEND", 4) == 0);
}

TEST_CASE("png writer wants an (H,W,3) tensor") {
  Tensor<uint8_t> wrong({3, 5, 5});
  CHECK_THROWS_AS(io::write_png_rgb(temp_dir() / "no.png", wrong), format_error);
}
