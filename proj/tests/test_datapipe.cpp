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

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "cbamvgg/datapipe.hpp"
#include "cbamvgg/image.hpp"
#include "cbamvgg/synthetic.hpp"

namespace cbamvgg {
namespace {

namespace fs = std::filesystem;

fs::path temp_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / ("cbamvgg_dp_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

Image gray(std::size_t w, std::size_t h, const std::vector<std::uint8_t>& v) {
  Image img(w, h);
  for (std::size_t i = 0; i < w * h; ++i)
    for (std::size_t c = 0; c < 3; ++c) img.rgb[3 * i + c] = v[i];
  return img;
}

Image random_image(std::size_t w, std::size_t h, std::uint64_t seed) {
  Rng rng(seed);
  Image img(w, h);
  for (auto& v : img.rgb) v = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

// Textbook global equalization: round(255 * cdf(v) / N).
std::vector<std::uint8_t> equalize_oracle(const std::vector<std::uint8_t>& plane) {
  std::vector<std::size_t> hist(256, 0);
  for (auto v : plane) ++hist[v];
  std::vector<std::uint8_t> lut(256);
  std::size_t cdf = 0;
  for (int v = 0; v < 256; ++v) {
    cdf += hist[v];
    lut[v] = static_cast<std::uint8_t>(std::lround(255.0 * double(cdf) / double(plane.size())));
  }
  std::vector<std::uint8_t> out;
  for (auto v : plane) out.push_back(lut[v]);
  return out;
}

TEST(Codec, PngRoundTrip) {
  const auto img = random_image(7, 5, 1);
  EXPECT_EQ(decode_png(encode_png(img), "mem"), img);
}

TEST(Codec, PpmRoundTrip) {
  const auto img = random_image(4, 6, 2);
  EXPECT_EQ(decode_ppm(encode_ppm(img), "mem"), img);
}

TEST(Codec, UnsupportedFormatIsRejected) {
  const auto d = temp_dir("fmt");
  std::ofstream(d / "x.jpg") << "\xFF\xD8\xFF\xE0 not really";
  EXPECT_THROW(read_image(d / "x.jpg"), DataError);
}

TEST(Clahe, ConstantImageStaysConstant) {
  const auto img = gray(20, 12, std::vector<std::uint8_t>(240, 77));
  const auto out = clahe(img, 2.0, 8);
  for (auto v : out.rgb) EXPECT_EQ(v, out.rgb[0]);
}

TEST(Clahe, SingleTileUnclippedIsGlobalEqualization) {
  Rng rng(3);
  std::vector<std::uint8_t> plane(37 * 23);
  for (auto& v : plane) v = static_cast<std::uint8_t>(60 + rng.below(90));
  const auto expected = equalize_oracle(plane);
  EXPECT_EQ(clahe_plane(plane, 37, 23, std::numeric_limits<double>::infinity(), 1), expected);
  const auto out = clahe(gray(37, 23, plane), std::numeric_limits<double>::infinity(), 1);
  for (std::size_t i = 0; i < plane.size(); ++i) {
    for (std::size_t c = 0; c < 3; ++c) ASSERT_EQ(out.rgb[3 * i + c], expected[i]);
  }
}

TEST(Clahe, SingleTileMappingIsMonotone) {
  Rng rng(4);
  std::vector<std::uint8_t> plane(30 * 30);
  for (auto& v : plane) v = static_cast<std::uint8_t>(rng.below(256));
  const auto out = clahe_plane(plane, 30, 30, 2.0, 1);
  for (std::size_t i = 0; i < plane.size(); ++i)
    for (std::size_t j = 0; j < plane.size(); ++j)
      if (plane[i] < plane[j]) {
        ASSERT_LE(out[i], out[j]);
      }
}

TEST(Clahe, ClippingLimitsContrastGain) {
  // Two-level image: unclipped equalization spreads it, a tight clip keeps it closer.
  std::vector<std::uint8_t> plane(64 * 64, 100);
  for (std::size_t i = 0; i < plane.size() / 2; ++i) plane[i] = 110;
  const auto free = clahe_plane(plane, 64, 64, std::numeric_limits<double>::infinity(), 1);
  const auto tight = clahe_plane(plane, 64, 64, 1.0, 1);
  const int spread_free = std::abs(int(free.front()) - int(free.back()));
  const int spread_tight = std::abs(int(tight.front()) - int(tight.back()));
  EXPECT_LT(spread_tight, spread_free);
}

TEST(Clahe, ChromaIsPreserved) {
  const auto img = random_image(24, 24, 5);
  const auto out = clahe(img, 2.0, 4);
  auto cb = [](const Image& im, std::size_t i) {
    return 128.0 - 0.168736 * im.rgb[3 * i] - 0.331264 * im.rgb[3 * i + 1] + 0.5 * im.rgb[3 * i + 2];
  };
  double worst = 0;
  std::size_t unclamped = 0;
  for (std::size_t i = 0; i < 24 * 24; ++i) {
    const bool saturated = std::any_of(out.rgb.begin() + 3 * i, out.rgb.begin() + 3 * i + 3,
                                       [](std::uint8_t v) { return v == 0 || v == 255; });
    if (saturated) continue;
    ++unclamped;
    worst = std::max(worst, std::abs(cb(out, i) - cb(img, i)));
  }
  EXPECT_GT(unclamped, 100u);
  EXPECT_LT(worst, 1.5);
}

TEST(Clahe, ZeroAreaIsRejected) {
  EXPECT_THROW(clahe(Image{}, 2.0, 8), DataError);
}

TEST(Preprocess, ExtremesMapToUnitRange) {
  std::vector<std::uint8_t> v(16, 0);
  v[3] = 255;
  const auto t = preprocess(gray(4, 4, v), 4);
  EXPECT_EQ(t.shape(), Shape({3, 4, 4}));
  EXPECT_EQ(t[3], 1.0f);
  EXPECT_EQ(t[0], 0.0f);
}

TEST(Preprocess, SameSizeIsIdentity) {
  const auto img = random_image(9, 9, 6);
  EXPECT_EQ(resize(img, 9, 9), img);
  const auto t = preprocess<double>(img, 9);
  for (std::size_t y = 0; y < 9; ++y)
    for (std::size_t x = 0; x < 9; ++x)
      for (std::size_t c = 0; c < 3; ++c) ASSERT_EQ(t[(c * 9 + y) * 9 + x], img.at(y, x, c) / 255.0);
}

TEST(Preprocess, CheckerboardUpscaleMatchesHandBilinear) {
  // Half-pixel centres: destination 0..3 samples source -0.25, 0.25, 0.75, 1.25 (clamped).
  const std::uint8_t expected[4][4] = {
      {0, 64, 191, 255}, {64, 96, 159, 191}, {191, 159, 96, 64}, {255, 191, 64, 0}};
  const auto out = resize(gray(2, 2, {0, 255, 255, 0}), 4, 4);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x) EXPECT_EQ(out.at(y, x, 0), expected[y][x]) << y << "," << x;
}

TEST(Preprocess, OutputAlwaysInUnitInterval) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto t = preprocess(random_image(13 + s, 7 + 2 * s, s), 16);
    EXPECT_EQ(t.shape(), Shape({3, 16, 16}));
    for (float v : t.data()) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
  }
}

TEST(Preprocess, ZeroAreaIsRejected) {
  EXPECT_THROW(preprocess(Image{}, 32), DataError);
}

TEST(Split, OneClassHundredSamples) {
  const auto s = split(std::vector<int>(100, 0), 0.8, 1);
  EXPECT_EQ(s.train.size(), 80u);
  EXPECT_EQ(s.test.size(), 20u);
}

TEST(Split, PerClassRounding) {
  std::vector<int> labels(10, 0);
  labels.insert(labels.end(), 11, 1);
  const auto s = split(labels, 0.8, 3);
  std::size_t a = 0, b = 0;
  for (auto i : s.train) (labels[i] == 0 ? a : b)++;
  EXPECT_EQ(a, 8u);
  EXPECT_EQ(b, 9u);
}

TEST(Split, IsDeterministicPartition) {
  std::vector<int> labels;
  for (int i = 0; i < 57; ++i) labels.push_back(i % 3);
  const auto s1 = split(labels, 0.7, 9), s2 = split(labels, 0.7, 9), s3 = split(labels, 0.7, 10);
  EXPECT_EQ(s1.train, s2.train);
  EXPECT_EQ(s1.test, s2.test);
  EXPECT_NE(s1.train, s3.train);
  std::set<std::size_t> all(s1.train.begin(), s1.train.end());
  for (auto i : s1.test) EXPECT_TRUE(all.insert(i).second);
  EXPECT_EQ(all.size(), labels.size());
  for (int c = 0; c < 3; ++c) {
    std::size_t tr = 0;
    for (auto i : s1.train) tr += labels[i] == c;
    EXPECT_LE(std::abs(double(tr) - 0.7 * 19), 1.0);
  }
}

TEST(Split, TooSmallClassIsRejected) {
  EXPECT_THROW(split({0, 0, 1}, 0.8, 1), DataError);
  EXPECT_THROW(split({0, 0, 1, 1}, 1.0, 1), ConfigError);
}

std::vector<Sample<float>> tiny_samples(std::size_t n) {
  std::vector<Sample<float>> s;
  for (std::size_t i = 0; i < n; ++i) s.push_back({Tensor({3, 2, 2}, float(i)), int(i % 2), std::to_string(i)});
  return s;
}

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

TEST(Batches, FinalPartialBatch) {
  const auto s = tiny_samples(10);
  BatchIterator<float> it(s, iota(10), 4);
  std::vector<std::size_t> sizes;
  while (auto b = it.next()) sizes.push_back(b->labels.size());
  EXPECT_EQ(sizes, (std::vector<std::size_t>{4, 4, 2}));
}

TEST(Batches, UnshuffledKeepsOrderAndContent) {
  const auto s = tiny_samples(5);
  BatchIterator<float> it(s, {4, 1, 3, 0, 2}, 2);
  std::vector<std::size_t> seen;
  while (auto b = it.next()) {
    for (std::size_t k = 0; k < b->indices.size(); ++k) {
      EXPECT_EQ(b->images[k * 12], float(b->indices[k]));
      seen.push_back(b->indices[k]);
    }
  }
  EXPECT_EQ(seen, (std::vector<std::size_t>{4, 1, 3, 0, 2}));
}

TEST(Batches, SeededShuffleIsReproducibleAndComplete) {
  const auto s = tiny_samples(23);
  BatchIterator<float> a(s, iota(23), 5, 42), b(s, iota(23), 5, 42), c(s, iota(23), 5, 43);
  EXPECT_EQ(a.order(), b.order());
  EXPECT_NE(a.order(), c.order());
  auto sorted = a.order();
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(sorted, iota(23));
}

TEST(Batches, InvalidArguments) {
  const auto s = tiny_samples(3);
  EXPECT_THROW(BatchIterator<float>(s, {}, 2), DataError);
  EXPECT_THROW(BatchIterator<float>(s, iota(3), 0), ConfigError);
}

TEST(Dataset, ScanSortedClassesAndFormats) {
  const auto d = temp_dir("scan");
  fs::create_directories(d / "beta");
  fs::create_directories(d / "alpha");
  write_png(d / "beta" / "b.png", random_image(5, 5, 1));
  write_png(d / "beta" / "a.png", random_image(5, 5, 2));
  {
    std::ofstream f(d / "alpha" / "z.ppm", std::ios::binary);
    const auto bytes = encode_ppm(random_image(6, 4, 3));
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  write_png(d / "alpha" / "y.png", random_image(4, 4, 4));
  const auto idx = scan_dataset(d);
  EXPECT_EQ(idx.class_names, (std::vector<std::string>{"alpha", "beta"}));
  ASSERT_EQ(idx.entries.size(), 4u);
  EXPECT_EQ(idx.entries[0].class_id, 0);
  EXPECT_EQ(idx.entries[0].path.filename(), "y.png");
  EXPECT_EQ(idx.entries[2].path.filename(), "a.png");
  const auto samples = load_samples<float>(idx, 8, PreprocessOptions{});
  EXPECT_EQ(samples[0].image.shape(), Shape({3, 8, 8}));
  const auto sp = split(idx.labels(), 0.5, 1, idx.class_names);
  const auto manifest = split_manifest(sp, idx, d);
  EXPECT_EQ(manifest["files"].size(), 4u);
  EXPECT_TRUE(manifest["files"].contains("beta/a.png"));
}

TEST(Dataset, MissingRootNamesThePath) {
  try {
    scan_dataset("/nonexistent/cbamvgg_root");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/cbamvgg_root"), std::string::npos);
  }
}

TEST(Dataset, UnsupportedFileIsRejected) {
  const auto d = temp_dir("unsup");
  fs::create_directories(d / "a");
  fs::create_directories(d / "b");
  write_png(d / "a" / "x.png", random_image(3, 3, 1));
  std::ofstream(d / "b" / "y.jpg") << "jpeg";
  EXPECT_THROW(scan_dataset(d), DataError);
}

TEST(Synthetic, DeterministicWithBoxesInside) {
  SyntheticOptions o;
  o.per_class = 5;
  const auto a = make_lesion_dataset(o), b = make_lesion_dataset(o);
  ASSERT_EQ(a.size(), 20u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].image.pixels, b[i].image.pixels);
    const bool clean = a[i].image.class_id == static_cast<int>(Lesion::clean);
    EXPECT_EQ(a[i].lesion.has_value(), !clean);
    if (a[i].lesion) {
      const auto& bx = *a[i].lesion;
      EXPECT_LT(bx.x0, bx.x1);
      EXPECT_LT(bx.y0, bx.y1);
      EXPECT_LE(bx.x1, 32u);
      EXPECT_LE(bx.y1, 32u);
      EXPECT_LT(bx.area(), 32u * 32u / 2);
    }
  }
}

TEST(Synthetic, WrittenTreeScansBack) {
  const auto d = temp_dir("synth");
  SyntheticOptions o;
  o.per_class = 3;
  const auto data = make_lesion_dataset(o);
  write_lesion_dataset(data, d);
  const auto idx = scan_dataset(d);
  EXPECT_EQ(idx.class_names, lesion_class_names());
  EXPECT_EQ(idx.entries.size(), 12u);
  EXPECT_EQ(read_image(idx.entries[0].path).width, 32u);
  EXPECT_TRUE(fs::exists(d / "boxes.json"));
}

}  // namespace
}  // namespace cbamvgg
