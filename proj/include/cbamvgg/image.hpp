// Copyright 2026 The cbamvgg Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// 8-bit RGB images and their PNG / binary PPM codecs. PNG goes through
// libpng's simplified API; PPM (P6, maxval <= 255) is parsed here.

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "cbamvgg/error.hpp"

namespace cbamvgg {

struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;  // height x width x 3, row-major

  Image() = default;
  Image(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), rgb(w * h * 3, fill) {}

  std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c) { return rgb[(y * width + x) * 3 + c]; }
  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const { return rgb[(y * width + x) * 3 + c]; }
  bool empty() const { return width == 0 || height == 0; }
  friend bool operator==(const Image&, const Image&) = default;
};

inline std::vector<std::uint8_t> encode_png(const Image& img) {
  if (img.empty()) throw DataError("cannot encode an empty image");
  png_image pi;
  std::memset(&pi, 0, sizeof(pi));
  pi.version = PNG_IMAGE_VERSION;
  pi.width = static_cast<png_uint_32>(img.width);
  pi.height = static_cast<png_uint_32>(img.height);
  pi.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&pi, nullptr, &size, 0, img.rgb.data(), 0, nullptr)) {
    throw DataError(std::string("png encode failed: ") + pi.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&pi, out.data(), &size, 0, img.rgb.data(), 0, nullptr)) {
    throw DataError(std::string("png encode failed: ") + pi.message);
  }
  out.resize(size);
  return out;
}

inline void write_png(const std::filesystem::path& path, const Image& img) {
  const auto bytes = encode_png(img);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("cannot write " + path.string());
}

inline Image decode_png(const std::vector<std::uint8_t>& bytes, const std::string& source) {
  png_image pi;
  std::memset(&pi, 0, sizeof(pi));
  pi.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&pi, bytes.data(), bytes.size())) {
    throw DataError(source + ": invalid PNG (" + pi.message + ")");
  }
  pi.format = PNG_FORMAT_RGB;
  Image img(pi.width, pi.height);
  if (!png_image_finish_read(&pi, nullptr, img.rgb.data(), 0, nullptr)) {
    png_image_free(&pi);
    throw DataError(source + ": PNG decode failed (" + pi.message + ")");
  }
  if (img.empty()) throw DataError(source + ": zero-area image");
  return img;
}

inline Image decode_ppm(const std::vector<std::uint8_t>& bytes, const std::string& source) {
  std::size_t pos = 2;
  auto token = [&]() {
    for (;;) {
      while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) t += static_cast<char>(bytes[pos++]);
    if (t.empty() || !std::all_of(t.begin(), t.end(), [](char c) { return std::isdigit(c); })) {
      throw DataError(source + ": malformed PPM header");
    }
    return std::stoul(t);
  };
  const std::size_t w = token(), h = token(), maxval = token();
  ++pos;  // single whitespace before the raster
  if (w == 0 || h == 0) throw DataError(source + ": zero-area image");
  if (maxval == 0 || maxval > 255) throw DataError(source + ": only 8-bit PPM (maxval <= 255) is supported");
  if (bytes.size() < pos + w * h * 3) throw DataError(source + ": PPM raster truncated");
  Image img(w, h);
  for (std::size_t i = 0; i < w * h * 3; ++i) {
    img.rgb[i] = static_cast<std::uint8_t>((bytes[pos + i] * 255u + maxval / 2) / maxval);
  }
  return img;
}

inline std::vector<std::uint8_t> encode_ppm(const Image& img) {
  const std::string header = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.rgb.begin(), img.rgb.end());
  return out;
}

inline bool is_supported_image(const std::filesystem::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".ppm";
}

// Decodes by content: PNG signature or a "P6" PPM header. Anything else is
// rejected.
inline Image read_image(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open image " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  static const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() >= 8 && std::equal(sig, sig + 8, bytes.begin())) return decode_png(bytes, path.string());
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return decode_ppm(bytes, path.string());
  throw DataError(path.string() + ": unsupported image format (PNG and binary PPM only)");
}

}  // namespace cbamvgg
