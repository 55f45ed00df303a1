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

// Convolutional block attention: a channel gate from a shared bottleneck MLP
// over spatially pooled descriptors, followed by a spatial gate from a 7x7
// convolution over channel-pooled maps. Both gates are sigmoids that multiply
// the features they are applied to.

#include <cstddef>
#include <string>

#include "cbamvgg/error.hpp"
#include "cbamvgg/ops.hpp"
#include "cbamvgg/tensor.hpp"

namespace cbamvgg {

inline constexpr std::size_t kSpatialKernel = 7;
inline constexpr std::size_t kDefaultReductionRatio = 8;

template <class T>
struct ChannelAttentionParams {
  BasicTensor<T> w0;  // [c, c/r]
  BasicTensor<T> w1;  // [c/r, c]
  std::size_t reduction_ratio = kDefaultReductionRatio;

  static ChannelAttentionParams zeros(std::size_t channels, std::size_t ratio = kDefaultReductionRatio) {
    if (ratio == 0 || channels % ratio != 0) {
      throw ConfigError("cbam: reduction ratio " + std::to_string(ratio) + " must divide channel count " +
                        std::to_string(channels));
    }
    const std::size_t hidden = channels / ratio;
    return {BasicTensor<T>({channels, hidden}), BasicTensor<T>({hidden, channels}), ratio};
  }

  std::size_t channels() const { return w0.dim(0); }
  std::size_t hidden() const { return w0.dim(1); }
};

template <class T>
struct SpatialAttentionParams {
  BasicTensor<T> kernel{Shape{1, 2, kSpatialKernel, kSpatialKernel}};
  BasicTensor<T> bias{Shape{1}};  // single scalar
};

template <class T>
struct AttentionRecord {
  BasicTensor<T> channel_gate;  // [N, c, 1, 1]
  BasicTensor<T> spatial_gate;  // [N, 1, H, W]
  int stage_index = 0;          // 1-based CBAM stage
};

// Intermediate values of one cbam_forward call, enough for the exact backward.
template <class T>
struct CbamCache {
  ops::PoolReduceResult<T> desc_avg, desc_max;  // spatial reductions, [N, c, 1, 1]
  BasicTensor<T> hidden_avg, hidden_max;        // relu(v . w0), [N, c/r]
  BasicTensor<T> channel_gate;                  // [N, c, 1, 1]
  BasicTensor<T> channel_refined;               // C (x) F
  ops::PoolReduceResult<T> map_avg, map_max;    // channel reductions, [N, 1, H, W]
  BasicTensor<T> pooled_maps;                   // [N, 2, H, W]
  BasicTensor<T> spatial_gate;                  // [N, 1, H, W]
};

template <class T>
struct CbamGrads {
  BasicTensor<T> input;
  BasicTensor<T> w0, w1;
  BasicTensor<T> kernel;
  BasicTensor<T> bias;
};

namespace detail {

template <class T>
void check_channel_params(const BasicTensor<T>& features, const ChannelAttentionParams<T>& p) {
  require_rank(features, 4, "channel_attention features");
  if (p.w0.rank() != 2 || p.w1.rank() != 2 || p.w0.dim(0) != features.dim(1) || p.w1.dim(1) != features.dim(1) ||
      p.w0.dim(1) != p.w1.dim(0)) {
    throw ShapeError("channel_attention: feature channels (dim 1) = " + std::to_string(features.dim(1)) +
                     " do not match MLP weights " + shape_string(p.w0.shape()) + " / " +
                     shape_string(p.w1.shape()));
  }
}

template <class T>
BasicTensor<T> as_matrix(const BasicTensor<T>& desc) {
  return desc.reshaped({desc.dim(0), desc.dim(1)});
}

// w1 . relu(w0 . v) for a batch of descriptors [N, c]; hidden is the relu output.
template <class T>
BasicTensor<T> shared_mlp(const BasicTensor<T>& v, const ChannelAttentionParams<T>& p, BasicTensor<T>& hidden) {
  hidden = ops::relu(ops::dense(v, p.w0, BasicTensor<T>()));
  return ops::dense(hidden, p.w1, BasicTensor<T>());
}

template <class T>
BasicTensor<T> channel_gate_cached(const BasicTensor<T>& f, const ChannelAttentionParams<T>& p, CbamCache<T>& c) {
  check_channel_params(f, p);
  c.desc_avg = ops::pool_reduce(f, ops::ReduceAxis::spatial, ops::ReduceKind::avg);
  c.desc_max = ops::pool_reduce(f, ops::ReduceAxis::spatial, ops::ReduceKind::max);
  const auto oa = shared_mlp(as_matrix(c.desc_avg.output), p, c.hidden_avg);
  const auto om = shared_mlp(as_matrix(c.desc_max.output), p, c.hidden_max);
  BasicTensor<T> logits(oa.shape());
  for (std::size_t i = 0; i < logits.size(); ++i)
    logits[i] = static_cast<T>(static_cast<double>(oa[i]) + static_cast<double>(om[i]));
  return ops::sigmoid(logits).reshaped({f.dim(0), f.dim(1), 1, 1});
}

template <class T>
BasicTensor<T> spatial_gate_cached(const BasicTensor<T>& f, const SpatialAttentionParams<T>& p, CbamCache<T>& c) {
  require_rank(f, 4, "spatial_attention features");
  if (p.kernel.shape() != Shape{1, 2, kSpatialKernel, kSpatialKernel}) {
    throw ShapeError("spatial_attention: kernel must be [1,2,7,7], got " + shape_string(p.kernel.shape()));
  }
  c.map_avg = ops::pool_reduce(f, ops::ReduceAxis::channel, ops::ReduceKind::avg);
  c.map_max = ops::pool_reduce(f, ops::ReduceAxis::channel, ops::ReduceKind::max);
  const std::size_t n = f.dim(0), hw = f.dim(2) * f.dim(3);
  c.pooled_maps = BasicTensor<T>({n, 2, f.dim(2), f.dim(3)});
  for (std::size_t b = 0; b < n; ++b) {
    std::copy_n(c.map_avg.output.data().begin() + b * hw, hw, c.pooled_maps.data().begin() + (2 * b) * hw);
    std::copy_n(c.map_max.output.data().begin() + b * hw, hw, c.pooled_maps.data().begin() + (2 * b + 1) * hw);
  }
  if (p.bias.size() != 1) throw ShapeError("spatial_attention: bias must hold exactly one value");
  return ops::sigmoid(ops::conv2d(c.pooled_maps, p.kernel, p.bias, 1, kSpatialKernel / 2));
}

// out[n,c,h,w] = f[n,c,h,w] * gate, broadcasting gate over its singleton axes.
template <class T>
BasicTensor<T> broadcast_multiply(const BasicTensor<T>& f, const BasicTensor<T>& gate) {
  const std::size_t n = f.dim(0), ch = f.dim(1), h = f.dim(2), w = f.dim(3);
  const bool per_channel = gate.dim(1) == ch, per_pixel = gate.dim(2) == h && gate.dim(3) == w;
  BasicTensor<T> out(f.shape());
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t k = 0; k < ch; ++k)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          const T g = gate.at(b, per_channel ? k : 0, per_pixel ? y : 0, per_pixel ? x : 0);
          out.at(b, k, y, x) = f.at(b, k, y, x) * g;
        }
  return out;
}

}  // namespace detail

// C_m = sigmoid(MLP(avgpool(F)) + MLP(maxpool(F))), shape [N, c, 1, 1].
template <class T>
BasicTensor<T> channel_attention(const BasicTensor<T>& features, const ChannelAttentionParams<T>& params) {
  CbamCache<T> scratch;
  return detail::channel_gate_cached(features, params, scratch);
}

// S_m = sigmoid(conv7x7([avg_c(F); max_c(F)]) + b), shape [N, 1, H, W]. Padding 3
// keeps the map the size of the features.
template <class T>
BasicTensor<T> spatial_attention(const BasicTensor<T>& features, const SpatialAttentionParams<T>& params) {
  CbamCache<T> scratch;
  return detail::spatial_gate_cached(features, params, scratch);
}

template <class T>
BasicTensor<T> cbam_forward(const BasicTensor<T>& features, const ChannelAttentionParams<T>& ch,
                            const SpatialAttentionParams<T>& sp, CbamCache<T>& cache) {
  cache.channel_gate = detail::channel_gate_cached(features, ch, cache);
  cache.channel_refined = detail::broadcast_multiply(features, cache.channel_gate);
  cache.spatial_gate = detail::spatial_gate_cached(cache.channel_refined, sp, cache);
  return detail::broadcast_multiply(cache.channel_refined, cache.spatial_gate);
}

template <class T>
struct CbamOutput {
  BasicTensor<T> refined;
  AttentionRecord<T> record;
};

// Channel gate first, then the spatial gate on the channel-refined features.
template <class T>
CbamOutput<T> cbam_apply(const BasicTensor<T>& features, const ChannelAttentionParams<T>& ch,
                         const SpatialAttentionParams<T>& sp, int stage_index = 0) {
  CbamCache<T> cache;
  auto refined = cbam_forward(features, ch, sp, cache);
  return {std::move(refined), {std::move(cache.channel_gate), std::move(cache.spatial_gate), stage_index}};
}

template <class T>
CbamGrads<T> cbam_backward(const BasicTensor<T>& features, const ChannelAttentionParams<T>& ch,
                           const SpatialAttentionParams<T>& sp, const CbamCache<T>& c,
                           const BasicTensor<T>& grad_out) {
  if (grad_out.shape() != features.shape()) throw ShapeError("cbam backward: upstream shape mismatch");
  const std::size_t n = features.dim(0), nc = features.dim(1), h = features.dim(2), w = features.dim(3);
  const std::size_t hw = h * w;
  CbamGrads<T> g;

  // refined = S (x) F'
  std::vector<double> g_refined(features.size());
  BasicTensor<T> g_spatial({n, 1, h, w});
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t i = 0; i < hw; ++i) {
      const double s = c.spatial_gate[b * hw + i];
      double acc = 0.0;
      for (std::size_t k = 0; k < nc; ++k) {
        const std::size_t idx = (b * nc + k) * hw + i;
        g_refined[idx] = static_cast<double>(grad_out[idx]) * s;
        acc += static_cast<double>(grad_out[idx]) * c.channel_refined[idx];
      }
      g_spatial[b * hw + i] = static_cast<T>(acc);
    }
  }
  const auto g_logit = ops::sigmoid_backward(c.spatial_gate, g_spatial);
  auto conv_g = ops::conv2d_backward(c.pooled_maps, sp.kernel, g_logit, 1, kSpatialKernel / 2);
  g.kernel = std::move(conv_g.kernel);
  g.bias = std::move(conv_g.bias);
  BasicTensor<T> g_avg_map({n, 1, h, w}), g_max_map({n, 1, h, w});
  for (std::size_t b = 0; b < n; ++b) {
    std::copy_n(conv_g.input.data().begin() + (2 * b) * hw, hw, g_avg_map.data().begin() + b * hw);
    std::copy_n(conv_g.input.data().begin() + (2 * b + 1) * hw, hw, g_max_map.data().begin() + b * hw);
  }
  const auto ga = ops::pool_reduce_backward(features.shape(), ops::ReduceAxis::channel, ops::ReduceKind::avg,
                                            c.map_avg, g_avg_map);
  const auto gm = ops::pool_reduce_backward(features.shape(), ops::ReduceAxis::channel, ops::ReduceKind::max,
                                            c.map_max, g_max_map);
  for (std::size_t i = 0; i < g_refined.size(); ++i)
    g_refined[i] += static_cast<double>(ga[i]) + static_cast<double>(gm[i]);

  // F' = C (x) F
  std::vector<double> g_input(features.size());
  BasicTensor<T> g_gate({n, nc});
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t k = 0; k < nc; ++k) {
      const double cg = c.channel_gate[b * nc + k];
      double acc = 0.0;
      for (std::size_t i = 0; i < hw; ++i) {
        const std::size_t idx = (b * nc + k) * hw + i;
        acc += g_refined[idx] * features[idx];
        g_input[idx] = g_refined[idx] * cg;
      }
      g_gate[b * nc + k] = static_cast<T>(acc);
    }
  }
  const auto g_mlp_out = ops::sigmoid_backward(c.channel_gate.reshaped({n, nc}), g_gate);

  g.w0 = BasicTensor<T>(ch.w0.shape());
  g.w1 = BasicTensor<T>(ch.w1.shape());
  auto branch = [&](const ops::PoolReduceResult<T>& desc, const BasicTensor<T>& hidden, ops::ReduceKind kind) {
    const auto v = detail::as_matrix(desc.output);
    const auto g_out_layer = ops::dense_backward(hidden, ch.w1, g_mlp_out, false);
    const auto g_pre = ops::relu_backward(hidden, g_out_layer.input);
    const auto g_in_layer = ops::dense_backward(v, ch.w0, g_pre, false);
    for (std::size_t i = 0; i < g.w0.size(); ++i) g.w0[i] += g_in_layer.weight[i];
    for (std::size_t i = 0; i < g.w1.size(); ++i) g.w1[i] += g_out_layer.weight[i];
    const auto gv = ops::pool_reduce_backward(features.shape(), ops::ReduceAxis::spatial, kind, desc,
                                              g_in_layer.input.reshaped({n, nc, 1, 1}));
    for (std::size_t i = 0; i < g_input.size(); ++i) g_input[i] += gv[i];
  };
  branch(c.desc_avg, c.hidden_avg, ops::ReduceKind::avg);
  branch(c.desc_max, c.hidden_max, ops::ReduceKind::max);
  g.input = BasicTensor<T>(features.shape(), std::vector<T>(g_input.begin(), g_input.end()));
  return g;
}

}  // namespace cbamvgg
