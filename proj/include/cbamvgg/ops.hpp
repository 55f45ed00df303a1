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

// Differentiable layer primitives. Every forward has an explicit backward
// returning the exact vector-Jacobian product. Storage follows the tensor
// scalar type; every reduction is accumulated in double in a fixed order.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "cbamvgg/error.hpp"
#include "cbamvgg/tensor.hpp"

namespace cbamvgg::ops {

inline std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
  return (in + 2 * pad - k) / stride + 1;
}

namespace detail {

// Output positions o with 0 <= o*stride + koff - pad < in, as [lo, hi).
inline std::pair<std::size_t, std::size_t> valid_range(std::size_t out, std::size_t in, std::size_t stride,
                                                       std::size_t koff, std::size_t pad) {
  std::size_t lo = 0;
  while (lo < out && lo * stride + koff < pad) ++lo;
  std::size_t hi = lo;
  while (hi < out && hi * stride + koff - pad < in) ++hi;
  return {lo, hi};
}

inline void shape_check(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// conv2d: cross-correlation, no kernel flip.

template <class T>
struct Conv2dGrads {
  BasicTensor<T> input;
  BasicTensor<T> kernel;
  BasicTensor<T> bias;
};

template <class T>
void check_conv_args(const BasicTensor<T>& input, const BasicTensor<T>& kernel, const BasicTensor<T>& bias,
                     std::size_t stride, std::size_t padding) {
  require_rank(input, 4, "conv2d input");
  require_rank(kernel, 4, "conv2d kernel");
  detail::shape_check(stride >= 1, "conv2d: stride must be positive");
  detail::shape_check(kernel.dim(1) == input.dim(1),
                      "conv2d: input channels (dim 1) = " + std::to_string(input.dim(1)) +
                          " but kernel expects " + std::to_string(kernel.dim(1)));
  detail::shape_check(kernel.dim(2) <= input.dim(2) + 2 * padding,
                      "conv2d: kernel height (dim 2) exceeds padded input height");
  detail::shape_check(kernel.dim(3) <= input.dim(3) + 2 * padding,
                      "conv2d: kernel width (dim 3) exceeds padded input width");
  detail::shape_check(bias.empty() || bias.size() == kernel.dim(0),
                      "conv2d: bias length " + std::to_string(bias.size()) + " != output channels " +
                          std::to_string(kernel.dim(0)));
}

// An empty `bias` means no bias term.
template <class T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& kernel, const BasicTensor<T>& bias,
                      std::size_t stride = 1, std::size_t padding = 0) {
  check_conv_args(input, kernel, bias, stride, padding);
  require_finite(input, "conv2d");
  const std::size_t n_batch = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t cout = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  const std::size_t oh = conv_out_extent(h, kh, stride, padding);
  const std::size_t ow = conv_out_extent(w, kw, stride, padding);
  BasicTensor<T> out({n_batch, cout, oh, ow});
  std::vector<double> acc(oh * ow);
  const T* x = input.data().data();
  const T* k = kernel.data().data();
  for (std::size_t n = 0; n < n_batch; ++n) {
    for (std::size_t co = 0; co < cout; ++co) {
      std::fill(acc.begin(), acc.end(), bias.empty() ? 0.0 : static_cast<double>(bias[co]));
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const T* plane = x + (n * cin + ci) * h * w;
        for (std::size_t ki = 0; ki < kh; ++ki) {
          const auto [ylo, yhi] = detail::valid_range(oh, h, stride, ki, padding);
          for (std::size_t kj = 0; kj < kw; ++kj) {
            const double wv = k[((co * cin + ci) * kh + ki) * kw + kj];
            const auto [xlo, xhi] = detail::valid_range(ow, w, stride, kj, padding);
            for (std::size_t y = ylo; y < yhi; ++y) {
              const T* row = plane + (y * stride + ki - padding) * w;
              double* arow = acc.data() + y * ow;
              for (std::size_t xo = xlo; xo < xhi; ++xo) {
                arow[xo] += wv * static_cast<double>(row[xo * stride + kj - padding]);
              }
            }
          }
        }
      }
      T* dst = out.data().data() + (n * cout + co) * oh * ow;
      for (std::size_t i = 0; i < oh * ow; ++i) dst[i] = static_cast<T>(acc[i]);
    }
  }
  return out;
}

template <class T>
Conv2dGrads<T> conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& kernel,
                               const BasicTensor<T>& grad_out, std::size_t stride, std::size_t padding,
                               bool with_bias = true) {
  const std::size_t n_batch = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t cout = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  const std::size_t oh = conv_out_extent(h, kh, stride, padding);
  const std::size_t ow = conv_out_extent(w, kw, stride, padding);
  detail::shape_check(grad_out.shape() == Shape({n_batch, cout, oh, ow}),
                      "conv2d backward: upstream gradient shape " + shape_string(grad_out.shape()) +
                          " does not match forward output");
  std::vector<double> gin(input.size(), 0.0);
  std::vector<double> gk(kernel.size(), 0.0);
  std::vector<double> gb(cout, 0.0);
  const T* x = input.data().data();
  const T* k = kernel.data().data();
  const T* g = grad_out.data().data();
  for (std::size_t n = 0; n < n_batch; ++n) {
    for (std::size_t co = 0; co < cout; ++co) {
      const T* gplane = g + (n * cout + co) * oh * ow;
      if (with_bias) {
        double s = 0.0;
        for (std::size_t i = 0; i < oh * ow; ++i) s += gplane[i];
        gb[co] += s;
      }
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const T* plane = x + (n * cin + ci) * h * w;
        double* giplane = gin.data() + (n * cin + ci) * h * w;
        for (std::size_t ki = 0; ki < kh; ++ki) {
          const auto [ylo, yhi] = detail::valid_range(oh, h, stride, ki, padding);
          for (std::size_t kj = 0; kj < kw; ++kj) {
            const std::size_t kidx = ((co * cin + ci) * kh + ki) * kw + kj;
            const double wv = k[kidx];
            const auto [xlo, xhi] = detail::valid_range(ow, w, stride, kj, padding);
            double acc = 0.0;
            for (std::size_t y = ylo; y < yhi; ++y) {
              const std::size_t iy = y * stride + ki - padding;
              const T* row = plane + iy * w;
              double* grow = giplane + iy * w;
              const T* grow_out = gplane + y * ow;
              for (std::size_t xo = xlo; xo < xhi; ++xo) {
                const std::size_t ix = xo * stride + kj - padding;
                const double gv = grow_out[xo];
                acc += gv * static_cast<double>(row[ix]);
                grow[ix] += wv * gv;
              }
            }
            gk[kidx] += acc;
          }
        }
      }
    }
  }
  Conv2dGrads<T> out;
  out.input = BasicTensor<T>(input.shape(), std::vector<T>(gin.begin(), gin.end()));
  out.kernel = BasicTensor<T>(kernel.shape(), std::vector<T>(gk.begin(), gk.end()));
  if (with_bias) out.bias = BasicTensor<T>({cout}, std::vector<T>(gb.begin(), gb.end()));
  return out;
}

// ---------------------------------------------------------------------------
// maxpool2d

template <class T>
struct MaxPoolResult {
  BasicTensor<T> output;
  // Flat input index of each output cell's maximum (first in row-major scan).
  std::vector<std::size_t> winners;
};

template <class T>
MaxPoolResult<T> maxpool2d(const BasicTensor<T>& input, std::size_t size, std::size_t stride) {
  require_rank(input, 4, "maxpool2d input");
  require_finite(input, "maxpool2d");
  detail::shape_check(size >= 1 && stride >= 1, "maxpool2d: size and stride must be positive");
  const std::size_t n_batch = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  detail::shape_check(size <= h && size <= w, "maxpool2d: window " + std::to_string(size) +
                                                  " larger than input " + shape_string(input.shape()));
  const std::size_t oh = (h - size) / stride + 1, ow = (w - size) / stride + 1;
  MaxPoolResult<T> r{BasicTensor<T>({n_batch, c, oh, ow}), std::vector<std::size_t>(n_batch * c * oh * ow)};
  for (std::size_t p = 0; p < n_batch * c; ++p) {
    const std::size_t base = p * h * w;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        std::size_t best = base + (y * stride) * w + x * stride;
        for (std::size_t i = 0; i < size; ++i) {
          for (std::size_t j = 0; j < size; ++j) {
            const std::size_t idx = base + (y * stride + i) * w + x * stride + j;
            if (input[idx] > input[best]) best = idx;
          }
        }
        const std::size_t o = (p * oh + y) * ow + x;
        r.output[o] = input[best];
        r.winners[o] = best;
      }
    }
  }
  return r;
}

// Routes each upstream value to its window's winner.
template <class T>
BasicTensor<T> maxpool2d_backward(const Shape& input_shape, const std::vector<std::size_t>& winners,
                                  const BasicTensor<T>& grad_out) {
  detail::shape_check(winners.size() == grad_out.size(), "maxpool2d backward: stale winner cache");
  const std::size_t n_in = shape_size(input_shape);
  std::vector<double> g(n_in, 0.0);
  for (std::size_t o = 0; o < winners.size(); ++o) {
    detail::shape_check(winners[o] < n_in, "maxpool2d backward: winner index out of range");
    g[winners[o]] += grad_out[o];
  }
  return BasicTensor<T>(input_shape, std::vector<T>(g.begin(), g.end()));
}

// ---------------------------------------------------------------------------
// dense: out = input . weight + bias, weight is [D, K].

template <class T>
struct DenseGrads {
  BasicTensor<T> input;
  BasicTensor<T> weight;
  BasicTensor<T> bias;
};

template <class T>
BasicTensor<T> dense(const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>& bias) {
  require_rank(input, 2, "dense input");
  require_rank(weight, 2, "dense weight");
  require_finite(input, "dense");
  const std::size_t n = input.dim(0), d = input.dim(1), k = weight.dim(1);
  detail::shape_check(weight.dim(0) == d, "dense: input features (dim 1) = " + std::to_string(d) +
                                              " but weight rows = " + std::to_string(weight.dim(0)));
  detail::shape_check(bias.empty() || bias.size() == k, "dense: bias length " + std::to_string(bias.size()) +
                                                            " != outputs " + std::to_string(k));
  BasicTensor<T> out({n, k});
  std::vector<double> acc(k);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < k; ++j) acc[j] = bias.empty() ? 0.0 : static_cast<double>(bias[j]);
    for (std::size_t i = 0; i < d; ++i) {
      const double xv = input.at(r, i);
      const T* wrow = weight.data().data() + i * k;
      for (std::size_t j = 0; j < k; ++j) acc[j] += xv * static_cast<double>(wrow[j]);
    }
    for (std::size_t j = 0; j < k; ++j) out.at(r, j) = static_cast<T>(acc[j]);
  }
  return out;
}

template <class T>
DenseGrads<T> dense_backward(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                             const BasicTensor<T>& grad_out, bool with_bias = true) {
  const std::size_t n = input.dim(0), d = input.dim(1), k = weight.dim(1);
  detail::shape_check(grad_out.shape() == Shape({n, k}), "dense backward: upstream gradient shape mismatch");
  DenseGrads<T> g{BasicTensor<T>({n, d}), BasicTensor<T>({d, k}), BasicTensor<T>()};
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < d; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < k; ++j) acc += static_cast<double>(grad_out.at(r, j)) * weight.at(i, j);
      g.input.at(r, i) = static_cast<T>(acc);
    }
  }
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      double acc = 0.0;
      for (std::size_t r = 0; r < n; ++r) acc += static_cast<double>(input.at(r, i)) * grad_out.at(r, j);
      g.weight.at(i, j) = static_cast<T>(acc);
    }
  }
  if (with_bias) {
    g.bias = BasicTensor<T>({k});
    for (std::size_t j = 0; j < k; ++j) {
      double acc = 0.0;
      for (std::size_t r = 0; r < n; ++r) acc += grad_out.at(r, j);
      g.bias[j] = static_cast<T>(acc);
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Element-wise activations.

enum class Activation { relu, sigmoid };

template <class T>
T sigmoid_scalar(T x) {
  const double xd = x;
  double s = xd >= 0.0 ? 1.0 / (1.0 + std::exp(-xd)) : std::exp(xd) / (1.0 + std::exp(xd));
  // Keep the result strictly inside (0, 1) at the storage precision.
  const double lo = std::numeric_limits<T>::min();
  const double hi = std::nextafter(T(1), T(0));
  return static_cast<T>(std::clamp(s, lo, hi));
}

template <class T>
BasicTensor<T> activation(const BasicTensor<T>& input, Activation kind) {
  require_finite(input, kind == Activation::relu ? "relu" : "sigmoid");
  BasicTensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) {
    const T x = input[i];
    out[i] = kind == Activation::relu ? (x > T(0) ? x : T(0)) : sigmoid_scalar(x);
  }
  return out;
}

template <class T>
BasicTensor<T> relu(const BasicTensor<T>& input) {
  return activation(input, Activation::relu);
}

template <class T>
BasicTensor<T> sigmoid(const BasicTensor<T>& input) {
  return activation(input, Activation::sigmoid);
}

// relu' uses the cached forward output: zero gradient wherever input <= 0.
template <class T>
BasicTensor<T> relu_backward(const BasicTensor<T>& output, const BasicTensor<T>& grad_out) {
  detail::shape_check(output.shape() == grad_out.shape(), "relu backward: cache/upstream shape mismatch");
  BasicTensor<T> g(output.shape());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = output[i] > T(0) ? grad_out[i] : T(0);
  return g;
}

template <class T>
BasicTensor<T> sigmoid_backward(const BasicTensor<T>& output, const BasicTensor<T>& grad_out) {
  detail::shape_check(output.shape() == grad_out.shape(), "sigmoid backward: cache/upstream shape mismatch");
  BasicTensor<T> g(output.shape());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double s = output[i];
    g[i] = static_cast<T>(static_cast<double>(grad_out[i]) * s * (1.0 - s));
  }
  return g;
}

// ---------------------------------------------------------------------------
// softmax over the last axis of [N, K].

template <class T>
BasicTensor<T> softmax(const BasicTensor<T>& logits) {
  require_rank(logits, 2, "softmax input");
  require_finite(logits, "softmax");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  detail::shape_check(k >= 1, "softmax: need at least one class");
  BasicTensor<T> out(logits.shape());
  std::vector<double> e(k);
  for (std::size_t r = 0; r < n; ++r) {
    double mx = logits.at(r, 0);
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, static_cast<double>(logits.at(r, j)));
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      e[j] = std::exp(static_cast<double>(logits.at(r, j)) - mx);
      z += e[j];
    }
    for (std::size_t j = 0; j < k; ++j) out.at(r, j) = static_cast<T>(e[j] / z);
  }
  return out;
}

template <class T>
BasicTensor<T> softmax_backward(const BasicTensor<T>& probs, const BasicTensor<T>& grad_out) {
  detail::shape_check(probs.shape() == grad_out.shape(), "softmax backward: cache/upstream shape mismatch");
  const std::size_t n = probs.dim(0), k = probs.dim(1);
  BasicTensor<T> g(probs.shape());
  for (std::size_t r = 0; r < n; ++r) {
    double dot = 0.0;
    for (std::size_t j = 0; j < k; ++j) dot += static_cast<double>(probs.at(r, j)) * grad_out.at(r, j);
    for (std::size_t j = 0; j < k; ++j) {
      g.at(r, j) = static_cast<T>(static_cast<double>(probs.at(r, j)) * (grad_out.at(r, j) - dot));
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// pool_reduce: average or max over the spatial axes (-> N x C x 1 x 1) or over
// the channel axis (-> N x 1 x H x W).

enum class ReduceAxis { spatial, channel };
enum class ReduceKind { avg, max };

template <class T>
struct PoolReduceResult {
  BasicTensor<T> output;
  std::vector<std::size_t> winners;  // flat input index per output, max only
};

template <class T>
PoolReduceResult<T> pool_reduce(const BasicTensor<T>& input, ReduceAxis axis, ReduceKind kind) {
  require_rank(input, 4, "pool_reduce input");
  require_finite(input, "pool_reduce");
  const std::size_t n_batch = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t hw = h * w;
  detail::shape_check(axis == ReduceAxis::spatial ? hw > 0 : c > 0, "pool_reduce: empty reduction axis");
  PoolReduceResult<T> r;
  if (axis == ReduceAxis::spatial) {
    r.output = BasicTensor<T>({n_batch, c, 1, 1});
    if (kind == ReduceKind::max) r.winners.resize(n_batch * c);
    for (std::size_t p = 0; p < n_batch * c; ++p) {
      const T* src = input.data().data() + p * hw;
      if (kind == ReduceKind::avg) {
        double s = 0.0;
        for (std::size_t i = 0; i < hw; ++i) s += src[i];
        r.output[p] = static_cast<T>(s / static_cast<double>(hw));
      } else {
        std::size_t best = 0;
        for (std::size_t i = 1; i < hw; ++i)
          if (src[i] > src[best]) best = i;
        r.output[p] = src[best];
        r.winners[p] = p * hw + best;
      }
    }
  } else {
    r.output = BasicTensor<T>({n_batch, 1, h, w});
    if (kind == ReduceKind::max) r.winners.resize(n_batch * hw);
    for (std::size_t n = 0; n < n_batch; ++n) {
      for (std::size_t i = 0; i < hw; ++i) {
        const std::size_t o = n * hw + i;
        if (kind == ReduceKind::avg) {
          double s = 0.0;
          for (std::size_t ch = 0; ch < c; ++ch) s += input[(n * c + ch) * hw + i];
          r.output[o] = static_cast<T>(s / static_cast<double>(c));
        } else {
          std::size_t best = n * c * hw + i;
          for (std::size_t ch = 1; ch < c; ++ch) {
            const std::size_t idx = (n * c + ch) * hw + i;
            if (input[idx] > input[best]) best = idx;
          }
          r.output[o] = input[best];
          r.winners[o] = best;
        }
      }
    }
  }
  return r;
}

template <class T>
BasicTensor<T> pool_reduce_backward(const Shape& input_shape, ReduceAxis axis, ReduceKind kind,
                                    const PoolReduceResult<T>& fwd, const BasicTensor<T>& grad_out) {
  detail::shape_check(grad_out.shape() == fwd.output.shape(), "pool_reduce backward: upstream shape mismatch");
  if (kind == ReduceKind::max) return maxpool2d_backward(input_shape, fwd.winners, grad_out);
  const std::size_t n_batch = input_shape[0], c = input_shape[1], hw = input_shape[2] * input_shape[3];
  BasicTensor<T> g(input_shape);
  if (axis == ReduceAxis::spatial) {
    for (std::size_t p = 0; p < n_batch * c; ++p) {
      const T v = static_cast<T>(static_cast<double>(grad_out[p]) / static_cast<double>(hw));
      for (std::size_t i = 0; i < hw; ++i) g[p * hw + i] = v;
    }
  } else {
    for (std::size_t n = 0; n < n_batch; ++n)
      for (std::size_t i = 0; i < hw; ++i) {
        const T v = static_cast<T>(static_cast<double>(grad_out[n * hw + i]) / static_cast<double>(c));
        for (std::size_t ch = 0; ch < c; ++ch) g[(n * c + ch) * hw + i] = v;
      }
  }
  return g;
}

}  // namespace cbamvgg::ops
