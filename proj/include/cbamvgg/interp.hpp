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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace cbamvgg {

// Bilinear resampling of a single plane with half-pixel centres: destination
// pixel d samples source coordinate (d + 0.5) * in / out - 0.5, clamped to the
// valid range. An unchanged size is the identity.
inline std::vector<double> resize_bilinear(std::span<const double> src, std::size_t src_h, std::size_t src_w,
                                           std::size_t dst_h, std::size_t dst_w) {
  std::vector<double> dst(dst_h * dst_w);
  auto axis = [](std::size_t d, std::size_t in, std::size_t out, std::size_t& i0, std::size_t& i1, double& t) {
    double s = (static_cast<double>(d) + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in - 1));
    i0 = static_cast<std::size_t>(std::floor(s));
    i1 = std::min(i0 + 1, in - 1);
    t = s - static_cast<double>(i0);
  };
  for (std::size_t y = 0; y < dst_h; ++y) {
    std::size_t y0, y1;
    double ty;
    axis(y, src_h, dst_h, y0, y1, ty);
    for (std::size_t x = 0; x < dst_w; ++x) {
      std::size_t x0, x1;
      double tx;
      axis(x, src_w, dst_w, x0, x1, tx);
      const double top = src[y0 * src_w + x0] * (1.0 - tx) + src[y0 * src_w + x1] * tx;
      const double bot = src[y1 * src_w + x0] * (1.0 - tx) + src[y1 * src_w + x1] * tx;
      dst[y * dst_w + x] = top * (1.0 - ty) + bot * ty;
    }
  }
  return dst;
}

}  // namespace cbamvgg
