// SPDX-License-Identifier: Apache-2.0
#include "neurtex/binary_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cctype>
#include <cstring>
#include <fstream>
#include <sstream>

namespace neurtex {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

void write_magic(std::ostream& os, std::string_view tag) {
  std::array<char, 8> buf{};
  std::copy_n(tag.data(), std::min<std::size_t>(tag.size(), 8), buf.data());
  os.write(buf.data(), 8);
}

void expect_magic(std::istream& is, std::string_view tag, const std::filesystem::path& path) {
  std::array<char, 8> buf{};
  is.read(buf.data(), 8);
  std::array<char, 8> want{};
  std::copy_n(tag.data(), std::min<std::size_t>(tag.size(), 8), want.data());
  if (!is || buf != want)
    throw IoError(path.string() + ": bad magic, expected " + std::string(tag));
}

void write_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }

std::uint32_t read_u32(std::istream& is, const std::filesystem::path& path) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  if (!is) throw IoError(path.string() + ": truncated header");
  return v;
}

void write_f32(std::ostream& os, std::span<const float> values) {
  os.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
}

void read_f32(std::istream& is, std::span<float> out, const std::filesystem::path& path) {
  is.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size_bytes()));
  if (!is) throw IoError(path.string() + ": truncated payload");
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError(path.string() + ": cannot open for writing");
  return os;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(path.string() + ": cannot open for reading");
  return is;
}

void write_ntimg(const std::filesystem::path& path, const Image& img) {
  auto os = open_out(path);
  write_magic(os, "NTIMG1");
  write_u32(os, static_cast<std::uint32_t>(img.height()));
  write_u32(os, static_cast<std::uint32_t>(img.width()));
  write_u32(os, static_cast<std::uint32_t>(img.channels()));
  write_f32(os, img.data());
  if (!os) throw IoError(path.string() + ": write failed");
}

Image read_ntimg(const std::filesystem::path& path) {
  auto is = open_in(path);
  expect_magic(is, "NTIMG1", path);
  auto h = read_u32(is, path), w = read_u32(is, path), c = read_u32(is, path);
  if (h > (1u << 16) || w > (1u << 16) || c > 4096) throw IoError(path.string() + ": implausible image header");
  Image img(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c));
  read_f32(is, img.data(), path);
  return img;
}

void write_ppm(const std::filesystem::path& path, const Image& rgb) {
  if (rgb.channels() != 3 && rgb.channels() != 1)
    throw ContractViolation("write_ppm: expected 1 or 3 channels, got " + std::to_string(rgb.channels()));
  auto os = open_out(path);
  os << "P6\n" << rgb.width() << " " << rgb.height() << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(rgb.width()) * 3);
  for (int y = 0; y < rgb.height(); ++y) {
    for (int x = 0; x < rgb.width(); ++x)
      for (int c = 0; c < 3; ++c) {
        float v = rgb.at(y, x, rgb.channels() == 3 ? c : 0);
        v = std::clamp(v, 0.0f, 1.0f);
        row[static_cast<std::size_t>(x) * 3 + c] = static_cast<unsigned char>(std::lround(v * 255.0f));
      }
    os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!os) throw IoError(path.string() + ": write failed");
}

namespace {
void skip_ws_comments(std::istream& is) {
  for (;;) {
    int c = is.peek();
    if (c == '#') {
      std::string line;
      std::getline(is, line);
    } else if (std::isspace(c)) {
      is.get();
    } else {
      return;
    }
  }
}
}  // namespace

Image read_ppm(const std::filesystem::path& path) {
  auto is = open_in(path);
  std::string magic;
  is >> magic;
  if (magic != "P6") throw IoError(path.string() + ": not a binary PPM (P6)");
  int w = 0, h = 0, maxval = 0;
  skip_ws_comments(is);
  is >> w;
  skip_ws_comments(is);
  is >> h;
  skip_ws_comments(is);
  is >> maxval;
  is.get();
  if (!is || w <= 0 || h <= 0 || maxval != 255) throw IoError(path.string() + ": unsupported PPM header");
  Image img(h, w, 3);
  std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h * 3);
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!is) throw IoError(path.string() + ": truncated PPM");
  for (std::size_t i = 0; i < buf.size(); ++i) img.data()[i] = buf[i] / 255.0f;
  return img;
}

std::string read_text(const std::filesystem::path& path) {
  auto is = open_in(path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  auto os = open_out(path);
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!os) throw IoError(path.string() + ": write failed");
}

}  // namespace neurtex
