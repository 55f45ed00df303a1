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

// Feature extraction and exact t-SNE.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "cbamvgg/datapipe.hpp"
#include "cbamvgg/error.hpp"
#include "cbamvgg/model.hpp"
#include "cbamvgg/random.hpp"
#include "cbamvgg/tensor.hpp"

namespace cbamvgg {

struct FeatureMatrix {
  TensorD rows;  // [n, d]
  std::vector<int> labels;
  std::vector<std::string> sources;
  std::string layer;
  std::size_t rows_count() const { return rows.empty() ? 0 : rows.dim(0); }
  std::size_t dims() const { return rows.empty() ? 0 : rows.dim(1); }
};

// Node whose output feeds the final dense layer.
template <class T>
std::size_t default_feature_layer(const NetworkGraph<T>& g) {
  const auto d = g.indices_of(LayerKind::dense);
  if (d.empty() || d.back() == 0) throw ConfigError("graph has no dense layer with an input node");
  return d.back() - 1;
}

// Flattened output of node `layer` for every listed sample, in list order.
template <class T>
FeatureMatrix extract_features(const NetworkGraph<T>& g, const std::vector<Sample<T>>& samples,
                               const std::vector<std::size_t>& indices, std::optional<std::size_t> layer = {},
                               std::size_t batch_size = 32) {
  const std::size_t node = layer ? *layer : default_feature_layer(g);
  if (node >= g.size()) throw ConfigError("feature layer index " + std::to_string(node) + " out of range");
  if (indices.empty()) throw DataError("extract_features: no samples");
  const std::size_t d = shape_size(g.infer_shapes()[node + 1]);
  FeatureMatrix f;
  f.layer = g.nodes[node].name;
  f.rows = TensorD({indices.size(), d});
  BatchIterator<T> it(samples, indices, batch_size);
  std::size_t row = 0;
  while (auto b = it.next()) {
    check_batch(g, b->images);
    const auto out = forward_range(g, b->images, 0, node + 1, false).output;
    for (std::size_t i = 0; i < out.size(); ++i) f.rows[row * d + i] = static_cast<double>(out[i]);
    row += b->labels.size();
  }
  for (auto i : indices) {
    f.labels.push_back(samples[i].label);
    f.sources.push_back(samples[i].source);
  }
  return f;
}

// ---------------------------------------------------------------------------
// t-SNE

struct TsneOptions {
  double perplexity = 30.0;
  std::size_t iterations = 1000;
  std::size_t exaggeration_iterations = 250;
  double exaggeration = 12.0;
  double learning_rate = 10.0;
  double momentum_early = 0.5;
  double momentum_late = 0.8;
  double init_sigma = 1e-4;
  std::uint64_t seed = 1;
};

struct Embedding2D {
  TensorD coords;  // [n, 2]
  TsneOptions options;
  double kl = 0;                  // final KL divergence
  std::vector<double> kl_trace;  // KL(P || Q) after every iteration, un-exaggerated P
  std::size_t rows() const { return coords.dim(0); }
};

// Largest admissible perplexity is strictly below (n - 1) / 3.
inline void check_perplexity(double perplexity, std::size_t n) {
  const double upper = (static_cast<double>(n) - 1.0) / 3.0;
  if (!(perplexity >= 1.0 && perplexity < upper)) {
    throw ConfigError("perplexity " + std::to_string(perplexity) + " infeasible for " + std::to_string(n) +
                      " samples; valid range is [1, " + std::to_string(upper) + ")");
  }
}

inline std::vector<double> squared_distances(const TensorD& x) {
  const std::size_t n = x.dim(0), d = x.dim(1);
  std::vector<double> d2(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < d; ++k) {
        const double t = x[i * d + k] - x[j * d + k];
        s += t * t;
      }
      d2[i * n + j] = d2[j * n + i] = s;
    }
  return d2;
}

// Row-conditional Gaussian affinities, each row's precision found by
// bisection so that its entropy (nats) is within tol of log(perplexity).
inline std::vector<double> conditional_affinities(const std::vector<double>& d2, std::size_t n, double perplexity,
                                                  double tol = 1e-5, std::vector<double>* entropies = nullptr) {
  const double target = std::log(perplexity);
  std::vector<double> p(n * n, 0.0);
  if (entropies) entropies->assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
    // Shift by the nearest distance so exp does not underflow for far rows.
    double dmin = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) dmin = std::min(dmin, d2[i * n + j]);
    double h = 0;
    for (int it = 0; it < 200; ++it) {
      double sum = 0, wsum = 0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const double e = std::exp(-beta * (d2[i * n + j] - dmin));
        p[i * n + j] = e;
        sum += e;
        wsum += e * (d2[i * n + j] - dmin);
      }
      h = std::log(sum) + beta * wsum / sum;
      for (std::size_t j = 0; j < n; ++j) p[i * n + j] /= sum;
      const double diff = h - target;
      if (std::abs(diff) < tol) break;
      if (diff > 0) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2 : (beta + hi) / 2;
      } else {
        hi = beta;
        beta = (beta + lo) / 2;
      }
    }
    if (entropies) (*entropies)[i] = h;
  }
  return p;
}

// Symmetric joint affinities (P + P^T) / 2n.
inline std::vector<double> joint_affinities(const TensorD& x, double perplexity) {
  const std::size_t n = x.dim(0);
  const auto d2 = squared_distances(x);
  const auto pc = conditional_affinities(d2, n, perplexity);
  std::vector<double> p(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) p[i * n + j] = (pc[i * n + j] + pc[j * n + i]) / (2.0 * n);
  return p;
}

// Student-t kernel values (1 + |yi - yj|^2)^-1 and their off-diagonal sum.
inline double student_kernel(const TensorD& y, std::vector<double>& num) {
  const std::size_t n = y.dim(0);
  num.assign(n * n, 0.0);
  double z = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = y[2 * i] - y[2 * j], dy = y[2 * i + 1] - y[2 * j + 1];
      const double v = 1.0 / (1.0 + dx * dx + dy * dy);
      num[i * n + j] = num[j * n + i] = v;
      z += 2 * v;
    }
  return z;
}

inline double tsne_kl(const std::vector<double>& p, const TensorD& y) {
  const std::size_t n = y.dim(0);
  std::vector<double> num;
  const double z = student_kernel(y, num);
  double kl = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j || p[i * n + j] <= 0) continue;
      const double q = std::max(num[i * n + j] / z, std::numeric_limits<double>::min());
      kl += p[i * n + j] * std::log(p[i * n + j] / q);
    }
  return kl;
}

// dKL/dy_i = 4 sum_j (p_ij - q_ij)(y_i - y_j)(1 + |y_i - y_j|^2)^-1.
inline TensorD tsne_gradient(const std::vector<double>& p, const TensorD& y) {
  const std::size_t n = y.dim(0);
  std::vector<double> num;
  const double z = student_kernel(y, num);
  TensorD g({n, 2});
  for (std::size_t i = 0; i < n; ++i) {
    double gx = 0, gy = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double m = 4.0 * (p[i * n + j] - num[i * n + j] / z) * num[i * n + j];
      gx += m * (y[2 * i] - y[2 * j]);
      gy += m * (y[2 * i + 1] - y[2 * j + 1]);
    }
    g[2 * i] = gx;
    g[2 * i + 1] = gy;
  }
  return g;
}

inline Embedding2D tsne(const TensorD& x, const TsneOptions& opt = {}) {
  require_rank(x, 2, "tsne");
  const std::size_t n = x.dim(0);
  if (n < 4) throw DataError("t-SNE needs at least 4 samples, got " + std::to_string(n));
  require_finite(x, "tsne");
  check_perplexity(opt.perplexity, n);
  bool varied = false;
  for (std::size_t i = 1; i < n && !varied; ++i)
    for (std::size_t k = 0; k < x.dim(1); ++k)
      if (x[i * x.dim(1) + k] != x[k]) {
        varied = true;
        break;
      }
  if (!varied) throw DataError("t-SNE input has zero variance (all rows identical)");

  const auto p = joint_affinities(x, opt.perplexity);
  Embedding2D e;
  e.options = opt;
  e.coords = TensorD({n, 2});
  Rng rng(opt.seed);
  for (auto& v : e.coords.data()) v = rng.normal(0.0, opt.init_sigma);

  auto phase = [&](std::size_t iters, double exaggeration, double momentum) {
    std::vector<double> pe(p);
    for (auto& v : pe) v *= exaggeration;
    TensorD update({n, 2}), gains({n, 2}, 1.0);
    for (std::size_t it = 0; it < iters; ++it) {
      const auto g = tsne_gradient(pe, e.coords);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const bool flipped = update[i] * g[i] < 0.0;
        gains[i] = std::max(flipped ? gains[i] + 0.2 : gains[i] * 0.8, 0.01);
        update[i] = momentum * update[i] - opt.learning_rate * gains[i] * g[i];
        e.coords[i] += update[i];
      }
      double mx = 0, my = 0;
      for (std::size_t i = 0; i < n; ++i) {
        mx += e.coords[2 * i];
        my += e.coords[2 * i + 1];
      }
      for (std::size_t i = 0; i < n; ++i) {
        e.coords[2 * i] -= mx / n;
        e.coords[2 * i + 1] -= my / n;
      }
      e.kl_trace.push_back(tsne_kl(p, e.coords));
    }
  };
  const std::size_t early = std::min(opt.exaggeration_iterations, opt.iterations);
  phase(early, opt.exaggeration, opt.momentum_early);
  phase(opt.iterations - early, 1.0, opt.momentum_late);
  if (!e.coords.all_finite()) throw NumericError("t-SNE diverged to non-finite coordinates");
  e.kl = e.kl_trace.empty() ? tsne_kl(p, e.coords) : e.kl_trace.back();
  return e;
}

// Mean fraction of each point's k nearest neighbours (2-D) that share its label.
inline double knn_purity(const TensorD& y, const std::vector<int>& labels, std::size_t k = 5) {
  const std::size_t n = y.dim(0), d = y.dim(1);
  if (n <= k) throw DataError("knn_purity: need more than k points");
  double total = 0;
  std::vector<std::pair<double, std::size_t>> dist;
  for (std::size_t i = 0; i < n; ++i) {
    dist.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double s = 0;
      for (std::size_t c = 0; c < d; ++c) s += (y[i * d + c] - y[j * d + c]) * (y[i * d + c] - y[j * d + c]);
      dist.push_back({s, j});
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    std::size_t same = 0;
    for (std::size_t m = 0; m < k; ++m) same += labels[dist[m].second] == labels[i];
    total += static_cast<double>(same) / static_cast<double>(k);
  }
  return total / static_cast<double>(n);
}

// "source,label,x,y" rows.
inline std::string embedding_csv(const Embedding2D& e, const std::vector<int>& labels,
                                 const std::vector<std::string>& sources) {
  std::string out = "source,label,x,y\n";
  char buf[96];
  for (std::size_t i = 0; i < e.rows(); ++i) {
    std::snprintf(buf, sizeof buf, ",%d,%.17g,%.17g\n", labels.at(i), e.coords[2 * i], e.coords[2 * i + 1]);
    out += (i < sources.size() ? sources[i] : std::to_string(i)) + buf;
  }
  return out;
}

}  // namespace cbamvgg
