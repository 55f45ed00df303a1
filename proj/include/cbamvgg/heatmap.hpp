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

// Colormaps, heatmap overlays, text grid dumps and embedding scatter plots.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "cbamvgg/datapipe.hpp"
#include "cbamvgg/error.hpp"
#include "cbamvgg/image.hpp"
#include "cbamvgg/tensor.hpp"

namespace cbamvgg {

using Rgb = std::array<std::uint8_t, 3>;

// Jet colormap for v in [0,1].
inline Rgb jet(double v) {
  v = std::clamp(v, 0.0, 1.0);
  auto ch = [&](double c) { return to_u8(255.0 * std::clamp(1.5 - std::abs(4.0 * v - c), 0.0, 1.0)); };
  return {ch(3.0), ch(2.0), ch(1.0)};
}

// Blue-white-red for v in [-1,1], white at 0.
inline Rgb diverging(double v) {
  v = std::clamp(v, -1.0, 1.0);
  if (v < 0) {
    const auto t = to_u8(255.0 * (1.0 + v));
    return {t, t, 255};
  }
  const auto t = to_u8(255.0 * (1.0 - v));
  return {255, t, t};
}

enum class HeatmapMode { overlay, raw };

// Scales a signed map by its largest magnitude into [-1,1].
inline TensorD normalize_signed(const TensorD& m) {
  double mx = 0;
  for (double v : m.data()) mx = std::max(mx, std::abs(v));
  TensorD out(m.shape());
  if (mx > 0)
    for (std::size_t i = 0; i < m.size(); ++i) out[i] = m[i] / mx;
  return out;
}

// `map` is [H,W] matching the base image. Non-negative maps are min-max
// scaled and drawn with jet; signed maps are scaled by max |v| and drawn
// with the diverging colormap.
inline Image render_heatmap(const TensorD& map, const Image& base, HeatmapMode mode, bool is_signed) {
  require_rank(map, 2, "render_heatmap");
  if (map.dim(0) != base.height || map.dim(1) != base.width) {
    throw ShapeError("render_heatmap: map " + shape_string(map.shape()) + " does not match image " +
                     std::to_string(base.height) + "x" + std::to_string(base.width));
  }
  require_finite(map, "render_heatmap");
  TensorD norm;
  if (is_signed) {
    norm = normalize_signed(map);
  } else {
    norm = TensorD(map.shape());
    const auto [lo, hi] = std::minmax_element(map.data().begin(), map.data().end());
    if (*hi > *lo) {
      for (std::size_t i = 0; i < map.size(); ++i) norm[i] = (map[i] - *lo) / (*hi - *lo);
    } else if (*hi > 0) {
      std::fill(norm.data().begin(), norm.data().end(), 1.0);
    }
  }
  Image out(base.width, base.height);
  for (std::size_t i = 0; i < map.size(); ++i) {
    const Rgb c = is_signed ? diverging(norm[i]) : jet(norm[i]);
    for (std::size_t k = 0; k < 3; ++k) {
      out.rgb[3 * i + k] = mode == HeatmapMode::raw ? c[k] : to_u8(0.5 * base.rgb[3 * i + k] + 0.5 * c[k]);
    }
  }
  return out;
}

// Places images left to right.
inline Image hconcat(const std::vector<Image>& parts) {
  std::size_t w = 0, h = 0;
  for (const auto& p : parts) {
    w += p.width;
    h = std::max(h, p.height);
  }
  Image out(w, h);
  std::size_t x0 = 0;
  for (const auto& p : parts) {
    for (std::size_t y = 0; y < p.height; ++y)
      for (std::size_t x = 0; x < p.width; ++x)
        for (std::size_t c = 0; c < 3; ++c) out.at(y, x0 + x, c) = p.at(y, x, c);
    x0 += p.width;
  }
  return out;
}

// Nearest-neighbour enlargement for viewing small inputs.
inline Image enlarge(const Image& img, std::size_t factor) {
  if (factor <= 1) return img;
  Image out(img.width * factor, img.height * factor);
  for (std::size_t y = 0; y < out.height; ++y)
    for (std::size_t x = 0; x < out.width; ++x)
      for (std::size_t c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y / factor, x / factor, c);
  return out;
}

// One text row per map row, values space separated.
inline std::string grid_text(const TensorD& map) {
  require_rank(map, 2, "grid_text");
  std::string s;
  char buf[40];
  for (std::size_t r = 0; r < map.dim(0); ++r) {
    for (std::size_t c = 0; c < map.dim(1); ++c) {
      std::snprintf(buf, sizeof buf, c ? " %.9g" : "%.9g", map.at(r, c));
      s += buf;
    }
    s += '\n';
  }
  return s;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw DataError("cannot write " + path.string());
}

inline Rgb category_color(int k) {
  static constexpr Rgb palette[] = {{31, 119, 180}, {255, 127, 14}, {44, 160, 44},  {214, 39, 40},
                                    {148, 103, 189}, {140, 86, 75},  {227, 119, 194}, {127, 127, 127},
                                    {188, 189, 34},  {23, 190, 207}};
  return palette[static_cast<std::size_t>(k < 0 ? 0 : k) % 10];
}

// Scatter of [n,2] points on a white canvas, one colour per label.
inline Image scatter_plot(const TensorD& xy, const std::vector<int>& labels, std::size_t side = 512) {
  require_rank(xy, 2, "scatter_plot");
  Image img(side, side, 255);
  const std::size_t n = xy.dim(0);
  if (n == 0) return img;
  double x0 = xy[0], x1 = xy[0], y0 = xy[1], y1 = xy[1];
  for (std::size_t i = 0; i < n; ++i) {
    x0 = std::min(x0, xy[2 * i]);
    x1 = std::max(x1, xy[2 * i]);
    y0 = std::min(y0, xy[2 * i + 1]);
    y1 = std::max(y1, xy[2 * i + 1]);
  }
  const double margin = 16, span = static_cast<double>(side) - 2 * margin;
  const double sx = x1 > x0 ? span / (x1 - x0) : 0, sy = y1 > y0 ? span / (y1 - y0) : 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto px = static_cast<long>(std::lround(margin + (xy[2 * i] - x0) * sx));
    const auto py = static_cast<long>(std::lround(margin + (y1 - xy[2 * i + 1]) * sy));
    const Rgb c = category_color(i < labels.size() ? labels[i] : 0);
    for (long dy = -2; dy <= 2; ++dy)
      for (long dx = -2; dx <= 2; ++dx) {
        const long x = px + dx, y = py + dy;
        if (x < 0 || y < 0 || x >= static_cast<long>(side) || y >= static_cast<long>(side)) continue;
        for (std::size_t k = 0; k < 3; ++k) img.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x), k) = c[k];
      }
  }
  return img;
}

}  // namespace cbamvgg
