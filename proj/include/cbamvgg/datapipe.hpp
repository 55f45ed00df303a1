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

// Image ingestion: CLAHE contrast enhancement on luma, bilinear resize to the
// network side, [0,1] normalization, stratified splitting and batching.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "cbamvgg/error.hpp"
#include "cbamvgg/image.hpp"
#include "cbamvgg/interp.hpp"
#include "cbamvgg/options.hpp"
#include "cbamvgg/random.hpp"
#include "cbamvgg/tensor.hpp"
#include "json.hpp"

namespace cbamvgg {

inline std::uint8_t to_u8(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

// ---------------------------------------------------------------------------
// CLAHE

// Contrast-limited adaptive histogram equalization of one 8-bit plane.
// The plane is cut into up to tiles x tiles regions; each region's histogram
// is clipped at clip_limit times the uniform bin level, the clipped excess is
// spread evenly over all 256 bins, and the region's mapping is
// round(255 * cdf / area). Pixels blend the mappings of the four nearest
// region centres bilinearly. clip_limit = infinity disables clipping.
inline std::vector<std::uint8_t> clahe_plane(std::span<const std::uint8_t> plane, std::size_t width,
                                             std::size_t height, double clip_limit, std::size_t tiles) {
  if (width == 0 || height == 0) throw DataError("clahe: zero-area image");
  if (!(clip_limit > 0.0)) throw ConfigError("clahe: clip_limit must be positive");
  if (tiles == 0) throw ConfigError("clahe: tiles must be positive");
  const std::size_t tx = std::min(tiles, width), ty = std::min(tiles, height);
  auto edge = [](std::size_t t, std::size_t n, std::size_t extent) { return t * extent / n; };

  std::vector<std::array<std::uint8_t, 256>> luts(tx * ty);
  for (std::size_t j = 0; j < ty; ++j) {
    for (std::size_t i = 0; i < tx; ++i) {
      const std::size_t x0 = edge(i, tx, width), x1 = edge(i + 1, tx, width);
      const std::size_t y0 = edge(j, ty, height), y1 = edge(j + 1, ty, height);
      std::array<double, 256> hist{};
      for (std::size_t y = y0; y < y1; ++y)
        for (std::size_t x = x0; x < x1; ++x) hist[plane[y * width + x]] += 1.0;
      const double area = static_cast<double>((x1 - x0) * (y1 - y0));
      if (std::isfinite(clip_limit)) {
        const double limit = clip_limit * area / 256.0;
        double excess = 0.0;
        for (auto& h : hist) {
          if (h > limit) {
            excess += h - limit;
            h = limit;
          }
        }
        for (auto& h : hist) h += excess / 256.0;
      }
      double cdf = 0.0;
      auto& lut = luts[j * tx + i];
      for (std::size_t v = 0; v < 256; ++v) {
        cdf += hist[v];
        lut[v] = to_u8(255.0 * cdf / area);
      }
    }
  }

  // Tile centres in pixel coordinates.
  auto centres = [&](std::size_t n, std::size_t extent) {
    std::vector<double> c(n);
    for (std::size_t t = 0; t < n; ++t)
      c[t] = 0.5 * (static_cast<double>(edge(t, n, extent)) + static_cast<double>(edge(t + 1, n, extent))) - 0.5;
    return c;
  };
  const auto cx = centres(tx, width), cy = centres(ty, height);
  auto locate = [](const std::vector<double>& c, double p, std::size_t& a, std::size_t& b, double& t) {
    if (p <= c.front()) {
      a = b = 0;
      t = 0.0;
      return;
    }
    if (p >= c.back()) {
      a = b = c.size() - 1;
      t = 0.0;
      return;
    }
    a = 0;
    while (c[a + 1] <= p) ++a;
    b = a + 1;
    t = (p - c[a]) / (c[b] - c[a]);
  };

  std::vector<std::uint8_t> out(plane.size());
  for (std::size_t y = 0; y < height; ++y) {
    std::size_t ya, yb;
    double wy;
    locate(cy, static_cast<double>(y), ya, yb, wy);
    for (std::size_t x = 0; x < width; ++x) {
      std::size_t xa, xb;
      double wx;
      locate(cx, static_cast<double>(x), xa, xb, wx);
      const std::uint8_t v = plane[y * width + x];
      const double top = luts[ya * tx + xa][v] * (1.0 - wx) + luts[ya * tx + xb][v] * wx;
      const double bot = luts[yb * tx + xa][v] * (1.0 - wx) + luts[yb * tx + xb][v] * wx;
      out[y * width + x] = to_u8(top * (1.0 - wy) + bot * wy);
    }
  }
  return out;
}

// CLAHE on the luma of a full-range BT.601 YCbCr conversion; chroma is kept
// and the image converted back to RGB.
inline Image clahe(const Image& img, double clip_limit = 2.0, std::size_t tiles = 8) {
  if (img.empty()) throw DataError("clahe: zero-area image");
  const std::size_t n = img.width * img.height;
  std::vector<std::uint8_t> luma(n);
  std::vector<double> cb(n), cr(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double r = img.rgb[3 * i], g = img.rgb[3 * i + 1], b = img.rgb[3 * i + 2];
    luma[i] = to_u8(0.299 * r + 0.587 * g + 0.114 * b);
    cb[i] = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b;
    cr[i] = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b;
  }
  const auto eq = clahe_plane(luma, img.width, img.height, clip_limit, tiles);
  Image out(img.width, img.height);
  for (std::size_t i = 0; i < n; ++i) {
    const double y = eq[i];
    out.rgb[3 * i] = to_u8(y + 1.402 * (cr[i] - 128.0));
    out.rgb[3 * i + 1] = to_u8(y - 0.344136 * (cb[i] - 128.0) - 0.714136 * (cr[i] - 128.0));
    out.rgb[3 * i + 2] = to_u8(y + 1.772 * (cb[i] - 128.0));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Resize and normalization

inline Image resize(const Image& img, std::size_t width, std::size_t height) {
  if (img.empty()) throw DataError("resize: zero-area image");
  if (img.width == width && img.height == height) return img;
  Image out(width, height);
  std::vector<double> plane(img.width * img.height);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < plane.size(); ++i) plane[i] = img.rgb[3 * i + c];
    const auto r = resize_bilinear(plane, img.height, img.width, height, width);
    for (std::size_t i = 0; i < r.size(); ++i) out.rgb[3 * i + c] = to_u8(r[i]);
  }
  return out;
}

// Bilinear resize to side x side, then channel-first RGB values v / 255.
template <class T = float>
BasicTensor<T> preprocess(const Image& img, std::size_t side) {
  if (img.empty()) throw DataError("preprocess: zero-area image");
  if (side == 0) throw ConfigError("preprocess: side must be positive");
  const Image r = resize(img, side, side);
  BasicTensor<T> t({3, side, side});
  const std::size_t hw = side * side;
  for (std::size_t i = 0; i < hw; ++i)
    for (std::size_t c = 0; c < 3; ++c) t[c * hw + i] = static_cast<T>(r.rgb[3 * i + c] / 255.0);
  return t;
}

template <class T = float>
BasicTensor<T> prepare_image(const Image& img, std::size_t side, const PreprocessOptions& opt) {
  return preprocess<T>(opt.clahe ? clahe(img, opt.clip_limit, opt.tiles) : img, side);
}

// Inverse of preprocess's normalization, for display.
template <class T>
Image tensor_to_image(const BasicTensor<T>& t) {
  const std::size_t off = t.rank() == 4 ? 1 : 0;
  const std::size_t h = t.dim(1 + off), w = t.dim(2 + off), hw = h * w;
  Image img(w, h);
  for (std::size_t i = 0; i < hw; ++i)
    for (std::size_t c = 0; c < 3; ++c) img.rgb[3 * i + c] = to_u8(255.0 * static_cast<double>(t[c * hw + i]));
  return img;
}

// ---------------------------------------------------------------------------
// Dataset layout: root/<class_name>/<image>.png|.ppm

struct LabeledImage {
  Image pixels;
  int class_id = 0;
  std::string source;
};

struct DatasetEntry {
  std::filesystem::path path;
  int class_id = 0;
};

struct DatasetIndex {
  std::vector<std::string> class_names;  // sorted; index is the class id
  std::vector<DatasetEntry> entries;     // sorted by class, then file name
  std::vector<int> labels() const {
    std::vector<int> l;
    for (const auto& e : entries) l.push_back(e.class_id);
    return l;
  }
};

inline DatasetIndex scan_dataset(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw DataError("dataset root " + root.string() + " does not exist or is not a directory");
  DatasetIndex idx;
  std::vector<fs::path> class_dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory() && e.path().filename().string()[0] != '.') class_dirs.push_back(e.path());
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.size() < 2) throw DataError("dataset root " + root.string() + " needs at least two class directories");
  for (const auto& dir : class_dirs) {
    const int id = static_cast<int>(idx.class_names.size());
    idx.class_names.push_back(dir.filename().string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
      if (!e.is_regular_file() || e.path().filename().string()[0] == '.') continue;
      if (!is_supported_image(e.path())) {
        throw DataError(e.path().string() + ": unsupported image format (PNG and binary PPM only)");
      }
      files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DataError("class directory " + dir.string() + " contains no images");
    for (auto& f : files) idx.entries.push_back({std::move(f), id});
  }
  return idx;
}

template <class T = float>
struct Sample {
  BasicTensor<T> image;  // [3, side, side]
  int label = 0;
  std::string source;
};

template <class T = float>
std::vector<Sample<T>> load_samples(const DatasetIndex& idx, std::size_t side, const PreprocessOptions& opt) {
  std::vector<Sample<T>> out;
  out.reserve(idx.entries.size());
  for (const auto& e : idx.entries) {
    out.push_back({prepare_image<T>(read_image(e.path), side, opt), e.class_id, e.path.string()});
  }
  return out;
}

template <class T = float>
std::vector<Sample<T>> to_samples(const std::vector<LabeledImage>& images, std::size_t side,
                                  const PreprocessOptions& opt) {
  std::vector<Sample<T>> out;
  out.reserve(images.size());
  for (const auto& im : images) out.push_back({prepare_image<T>(im.pixels, side, opt), im.class_id, im.source});
  return out;
}

// ---------------------------------------------------------------------------
// Splitting

struct DatasetSplit {
  std::vector<std::size_t> train;  // ascending sample indices
  std::vector<std::size_t> test;
  std::vector<std::string> class_names;
  std::uint64_t seed = 0;
  double ratio = 0.8;
  double realized_ratio() const {
    const double n = static_cast<double>(train.size() + test.size());
    return n > 0 ? static_cast<double>(train.size()) / n : 0.0;
  }
};

// Stratified split: within each class the members are shuffled with one
// seeded generator (classes in id order) and the first round(ratio * size)
// go to train, clamped so both sides keep at least one sample.
inline DatasetSplit split(const std::vector<int>& labels, double ratio, std::uint64_t seed,
                          std::vector<std::string> class_names = {}) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("split ratio must lie in (0,1)");
  int n_classes = 0;
  for (int l : labels) {
    if (l < 0) throw DataError("negative class label");
    n_classes = std::max(n_classes, l + 1);
  }
  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(n_classes));
  for (std::size_t i = 0; i < labels.size(); ++i) members[static_cast<std::size_t>(labels[i])].push_back(i);
  DatasetSplit s;
  s.seed = seed;
  s.ratio = ratio;
  s.class_names = std::move(class_names);
  Rng rng(seed);
  for (std::size_t c = 0; c < members.size(); ++c) {
    auto& m = members[c];
    if (m.empty()) continue;
    if (m.size() < 2) {
      const std::string name = c < s.class_names.size() ? s.class_names[c] : std::to_string(c);
      throw DataError("class " + name + " has " + std::to_string(m.size()) + " sample(s); at least 2 are required");
    }
    rng.shuffle(m);
    auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(m.size())));
    n_train = std::clamp<std::size_t>(n_train, 1, m.size() - 1);
    s.train.insert(s.train.end(), m.begin(), m.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.test.insert(s.test.end(), m.begin() + static_cast<std::ptrdiff_t>(n_train), m.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

// File -> part listing for a scanned dataset.
inline nlohmann::ordered_json split_manifest(const DatasetSplit& s, const DatasetIndex& idx,
                                             const std::filesystem::path& root = {}) {
  auto rel = [&](const std::filesystem::path& p) {
    return root.empty() ? p.generic_string() : std::filesystem::relative(p, root).generic_string();
  };
  nlohmann::ordered_json j;
  j["seed"] = s.seed;
  j["ratio"] = s.ratio;
  j["realized_ratio"] = s.realized_ratio();
  j["class_names"] = idx.class_names;
  nlohmann::ordered_json counts = nlohmann::ordered_json::object();
  for (std::size_t c = 0; c < idx.class_names.size(); ++c) {
    std::size_t tr = 0, te = 0;
    for (auto i : s.train) tr += idx.entries[i].class_id == static_cast<int>(c);
    for (auto i : s.test) te += idx.entries[i].class_id == static_cast<int>(c);
    counts[idx.class_names[c]] = {{"train", tr}, {"test", te}};
  }
  j["counts"] = counts;
  std::vector<std::string> part(idx.entries.size());
  for (auto i : s.train) part[i] = "train";
  for (auto i : s.test) part[i] = "test";
  nlohmann::ordered_json files = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < idx.entries.size(); ++i) files[rel(idx.entries[i].path)] = part[i];
  j["files"] = files;
  return j;
}

// ---------------------------------------------------------------------------
// Batching

template <class T = float>
struct Batch {
  BasicTensor<T> images;  // [N, 3, side, side]
  std::vector<int> labels;
  std::vector<std::size_t> indices;  // positions in the sample list
};

template <class T>
Batch<T> make_batch(const std::vector<Sample<T>>& samples, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw DataError("empty batch");
  const auto& first = samples.at(indices[0]).image;
  const std::size_t per = first.size();
  Batch<T> b{BasicTensor<T>({indices.size(), first.dim(0), first.dim(1), first.dim(2)}), {}, indices};
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto& s = samples.at(indices[k]);
    if (s.image.shape() != first.shape()) throw ShapeError("make_batch: samples of differing shape");
    std::copy(s.image.data().begin(), s.image.data().end(), b.images.data().begin() + k * per);
    b.labels.push_back(s.label);
  }
  return b;
}

// Walks `part` (indices into `samples`) once per epoch in batches of
// batch_size; the last batch may be partial. With a seed the order is a seeded
// permutation of `part`, otherwise `part` order is kept.
template <class T = float>
class BatchIterator {
 public:
  BatchIterator(const std::vector<Sample<T>>& samples, std::vector<std::size_t> part, std::size_t batch_size,
                std::optional<std::uint64_t> shuffle_seed = std::nullopt)
      : samples_(samples), order_(std::move(part)), batch_size_(batch_size) {
    if (batch_size_ == 0) throw ConfigError("batch size must be at least 1");
    if (order_.empty()) throw DataError("cannot batch an empty split part");
    if (shuffle_seed) {
      const auto perm = seeded_permutation(order_.size(), *shuffle_seed);
      std::vector<std::size_t> shuffled(order_.size());
      for (std::size_t i = 0; i < perm.size(); ++i) shuffled[i] = order_[perm[i]];
      order_ = std::move(shuffled);
    }
  }

  std::optional<Batch<T>> next() {
    if (pos_ >= order_.size()) return std::nullopt;
    const std::size_t end = std::min(pos_ + batch_size_, order_.size());
    std::vector<std::size_t> idx(order_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                 order_.begin() + static_cast<std::ptrdiff_t>(end));
    pos_ = end;
    return make_batch(samples_, idx);
  }

  const std::vector<std::size_t>& order() const { return order_; }

 private:
  const std::vector<Sample<T>>& samples_;
  std::vector<std::size_t> order_;
  std::size_t batch_size_;
  std::size_t pos_ = 0;
};

}  // namespace cbamvgg
