// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "neurtex/image.hpp"

namespace neurtex {

// All binary containers start with an 8-byte magic: the ASCII tag padded
// with NUL bytes. Integers and floats are little-endian.

void write_magic(std::ostream& os, std::string_view tag);
void expect_magic(std::istream& is, std::string_view tag, const std::filesystem::path& path);
void write_u32(std::ostream& os, std::uint32_t v);
std::uint32_t read_u32(std::istream& is, const std::filesystem::path& path);
void write_f32(std::ostream& os, std::span<const float> values);
void read_f32(std::istream& is, std::span<float> out, const std::filesystem::path& path);

std::ofstream open_out(const std::filesystem::path& path);
std::ifstream open_in(const std::filesystem::path& path);

/// Raw float32 image container, tag "NTIMG1", then u32 H, W, C.
void write_ntimg(const std::filesystem::path& path, const Image& img);
Image read_ntimg(const std::filesystem::path& path);

/// 8-bit binary PPM (P6). Values are clamped to [0,1] and rounded.
void write_ppm(const std::filesystem::path& path, const Image& rgb);
Image read_ppm(const std::filesystem::path& path);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, std::string_view text);

}  // namespace neurtex
