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

// Synthetic leaf-lesion images for desk-scale experiments: a textured green
// background with one of three lesion motifs (circular spot, elongated streak,
// marginal ring) or none. Every lesion comes with its bounding box.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "cbamvgg/datapipe.hpp"
#include "cbamvgg/error.hpp"
#include "cbamvgg/image.hpp"
#include "cbamvgg/random.hpp"

namespace cbamvgg {

enum class Lesion { clean, ring, spot, streak };

// Alphabetical so directory scanning reproduces the ids.
inline const std::vector<std::string>& lesion_class_names() {
  static const std::vector<std::string> names{"clean", "ring", "spot", "streak"};
  return names;
}

struct Box {
  std::size_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // half-open
  std::size_t area() const { return (x1 - x0) * (y1 - y0); }
  bool contains(std::size_t x, std::size_t y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
};

struct SyntheticImage {
  LabeledImage image;
  std::optional<Box> lesion;  // empty for clean images
};

struct SyntheticOptions {
  std::size_t side = 32;
  std::size_t per_class = 100;
  std::uint64_t seed = 1;
};

namespace detail {

inline void paint(Image& img, std::size_t x, std::size_t y, double a, const double (&rgb)[3]) {
  for (std::size_t c = 0; c < 3; ++c) {
    const double v = img.at(y, x, c) * (1.0 - a) + rgb[c] * a;
    img.at(y, x, c) = to_u8(v);
  }
}

inline Image leaf_background(std::size_t side, Rng& rng) {
  Image img(side, side);
  const double base[3] = {rng.uniform(50, 80), rng.uniform(120, 160), rng.uniform(40, 70)};
  const double fx = rng.uniform(0.15, 0.45), fy = rng.uniform(0.15, 0.45);
  const double px = rng.uniform(0, 2 * std::numbers::pi), py = rng.uniform(0, 2 * std::numbers::pi);
  // Vein direction for a faint stripe texture.
  const double vein = rng.uniform(0, std::numbers::pi);
  const double vc = std::cos(vein), vs = std::sin(vein);
  for (std::size_t y = 0; y < side; ++y) {
    for (std::size_t x = 0; x < side; ++x) {
      const double tex = 10.0 * std::sin(fx * x + px) * std::cos(fy * y + py) +
                         6.0 * std::sin(0.9 * (vc * x + vs * y)) + rng.normal(0.0, 6.0);
      for (std::size_t c = 0; c < 3; ++c) img.at(y, x, c) = to_u8(base[c] + tex * (c == 1 ? 1.0 : 0.6));
    }
  }
  return img;
}

inline Box bounding(double cx, double cy, double rx, double ry, std::size_t side) {
  auto lo = [&](double v) { return static_cast<std::size_t>(std::clamp(std::floor(v), 0.0, double(side))); };
  auto hi = [&](double v) { return static_cast<std::size_t>(std::clamp(std::ceil(v) + 1.0, 0.0, double(side))); };
  return {lo(cx - rx), lo(cy - ry), hi(cx + rx), hi(cy + ry)};
}

}  // namespace detail

inline SyntheticImage make_lesion_image(Lesion kind, std::size_t side, Rng& rng) {
  if (side < 16) throw ConfigError("synthetic images need side >= 16");
  SyntheticImage out;
  Image img = detail::leaf_background(side, rng);
  const double s = static_cast<double>(side);
  const double brown[3] = {rng.uniform(110, 150), rng.uniform(70, 95), rng.uniform(30, 50)};

  switch (kind) {
    case Lesion::clean:
      break;
    case Lesion::spot: {
      const double r = rng.uniform(0.10, 0.16) * s;
      const double cx = rng.uniform(r + 2, s - r - 3), cy = rng.uniform(r + 2, s - r - 3);
      for (std::size_t y = 0; y < side; ++y)
        for (std::size_t x = 0; x < side; ++x) {
          const double d = std::hypot(x - cx, y - cy);
          if (d <= r + 0.5) detail::paint(img, x, y, std::clamp(r + 0.5 - d, 0.0, 1.0) * 0.9, brown);
        }
      out.lesion = detail::bounding(cx, cy, r + 0.5, r + 0.5, side);
      break;
    }
    case Lesion::streak: {
      const double len = rng.uniform(0.30, 0.40) * s, half_w = rng.uniform(0.9, 1.4);
      const double th = rng.uniform(0, std::numbers::pi);
      const double ux = std::cos(th), uy = std::sin(th);
      const double ex = std::abs(ux) * len / 2 + half_w, ey = std::abs(uy) * len / 2 + half_w;
      const double cx = rng.uniform(ex + 2, s - ex - 3), cy = rng.uniform(ey + 2, s - ey - 3);
      for (std::size_t y = 0; y < side; ++y)
        for (std::size_t x = 0; x < side; ++x) {
          const double dx = x - cx, dy = y - cy;
          const double along = dx * ux + dy * uy, across = -dx * uy + dy * ux;
          if (std::abs(along) <= len / 2 && std::abs(across) <= half_w + 0.5)
            detail::paint(img, x, y, std::clamp(half_w + 0.5 - std::abs(across), 0.0, 1.0) * 0.9, brown);
        }
      out.lesion = detail::bounding(cx, cy, ex + 0.5, ey + 0.5, side);
      break;
    }
    case Lesion::ring: {
      // Yellow halo around a pale centre.
      const double r = rng.uniform(0.14, 0.20) * s, w = 1.3;
      const double cx = rng.uniform(r + w + 2, s - r - w - 3), cy = rng.uniform(r + w + 2, s - r - w - 3);
      const double yellow[3] = {rng.uniform(190, 225), rng.uniform(170, 200), rng.uniform(40, 70)};
      for (std::size_t y = 0; y < side; ++y)
        for (std::size_t x = 0; x < side; ++x) {
          const double d = std::abs(std::hypot(x - cx, y - cy) - r);
          if (d <= w + 0.5) detail::paint(img, x, y, std::clamp(w + 0.5 - d, 0.0, 1.0) * 0.9, yellow);
        }
      out.lesion = detail::bounding(cx, cy, r + w + 0.5, r + w + 0.5, side);
      break;
    }
  }
  out.image.pixels = std::move(img);
  out.image.class_id = static_cast<int>(kind);
  return out;
}

// per_class images of each class, interleaved by class, one generator.
inline std::vector<SyntheticImage> make_lesion_dataset(const SyntheticOptions& opt) {
  if (opt.per_class < 2) throw ConfigError("synthetic dataset needs at least 2 images per class");
  Rng rng(opt.seed);
  std::vector<SyntheticImage> out;
  out.reserve(opt.per_class * 4);
  for (std::size_t i = 0; i < opt.per_class; ++i) {
    for (int k = 0; k < 4; ++k) {
      auto im = make_lesion_image(static_cast<Lesion>(k), opt.side, rng);
      im.image.source = lesion_class_names()[k] + "/" + std::to_string(i);
      out.push_back(std::move(im));
    }
  }
  return out;
}

inline std::string synthetic_file_name(std::size_t index) {
  std::string n = std::to_string(index);
  return "img_" + std::string(n.size() < 4 ? 4 - n.size() : 0, '0') + n + ".png";
}

// Writes root/<class>/img_NNNN.png plus root/boxes.json (file -> box).
inline void write_lesion_dataset(const std::vector<SyntheticImage>& data, const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  for (const auto& name : lesion_class_names()) fs::create_directories(root / name);
  std::vector<std::size_t> counter(4, 0);
  nlohmann::ordered_json boxes = nlohmann::ordered_json::object();
  for (const auto& s : data) {
    const auto& name = lesion_class_names().at(static_cast<std::size_t>(s.image.class_id));
    const std::string rel = name + "/" + synthetic_file_name(counter[s.image.class_id]++);
    write_png(root / rel, s.image.pixels);
    if (s.lesion) boxes[rel] = {s.lesion->x0, s.lesion->y0, s.lesion->x1, s.lesion->y1};
  }
  std::ofstream f(root / "boxes.json");
  f << boxes.dump(2) << "\n";
  if (!f) throw DataError("cannot write " + (root / "boxes.json").string());
}

}  // namespace cbamvgg
