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

// Sequential network graph, the CBAM-VGG builder, forward execution with
// activation capture, and reverse-mode gradients.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "cbamvgg/cbam.hpp"
#include "cbamvgg/error.hpp"
#include "cbamvgg/ops.hpp"
#include "cbamvgg/random.hpp"
#include "cbamvgg/tensor.hpp"

namespace cbamvgg {

enum class LayerKind { conv, relu, maxpool, cbam, flatten, dense, global_avg_pool, softmax };

inline const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::conv: return "conv";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::cbam: return "cbam";
    case LayerKind::flatten: return "flatten";
    case LayerKind::dense: return "dense";
    case LayerKind::global_avg_pool: return "global_avg_pool";
    case LayerKind::softmax: return "softmax";
  }
  return "?";
}

inline LayerKind layer_kind_from_string(const std::string& s) {
  for (auto k : {LayerKind::conv, LayerKind::relu, LayerKind::maxpool, LayerKind::cbam, LayerKind::flatten,
                 LayerKind::dense, LayerKind::global_avg_pool, LayerKind::softmax}) {
    if (s == to_string(k)) return k;
  }
  throw ConfigError("unknown layer kind '" + s + "'");
}

template <class T>
struct ConvLayer {
  BasicTensor<T> weight;  // [out, in, k, k]
  BasicTensor<T> bias;    // [out]
  std::size_t stride = 1;
  std::size_t padding = 1;
  std::size_t in_channels() const { return weight.dim(1); }
  std::size_t out_channels() const { return weight.dim(0); }
  std::size_t kernel() const { return weight.dim(2); }
};

struct ReluLayer {};

struct MaxPoolLayer {
  std::size_t size = 2;
  std::size_t stride = 2;
};

template <class T>
struct CbamLayer {
  ChannelAttentionParams<T> channel;
  SpatialAttentionParams<T> spatial;
  int stage = 0;
  // Ablated blocks pass features through unchanged (both gates forced to 1).
  bool ablated = false;
};

struct FlattenLayer {};

template <class T>
struct DenseLayer {
  BasicTensor<T> weight;  // [in, out]
  BasicTensor<T> bias;    // [out]
};

struct GlobalAvgPoolLayer {};
struct SoftmaxLayer {};

template <class T>
using Layer = std::variant<ConvLayer<T>, ReluLayer, MaxPoolLayer, CbamLayer<T>, FlattenLayer, DenseLayer<T>,
                           GlobalAvgPoolLayer, SoftmaxLayer>;

template <class T>
struct Node {
  std::string name;
  Layer<T> layer;

  LayerKind kind() const {
    static constexpr LayerKind kinds[] = {LayerKind::conv,    LayerKind::relu,  LayerKind::maxpool,
                                          LayerKind::cbam,    LayerKind::flatten, LayerKind::dense,
                                          LayerKind::global_avg_pool, LayerKind::softmax};
    return kinds[layer.index()];
  }
  template <class L>
  L& as() { return std::get<L>(layer); }
  template <class L>
  const L& as() const { return std::get<L>(layer); }
};

enum class Profile { vgg16, mini, custom };

inline const char* to_string(Profile p) {
  switch (p) {
    case Profile::vgg16: return "vgg16";
    case Profile::mini: return "mini";
    case Profile::custom: return "custom";
  }
  return "?";
}

inline Profile profile_from_string(const std::string& s) {
  if (s == "vgg16") return Profile::vgg16;
  if (s == "mini") return Profile::mini;
  if (s == "custom") return Profile::custom;
  throw ConfigError("unknown profile '" + s + "' (expected vgg16 or mini)");
}

struct ModelConfig {
  Profile profile = Profile::mini;
  std::size_t input_side = 32;
  std::size_t classes = 4;
  double width_multiplier = 1.0;
  std::size_t reduction_ratio = kDefaultReductionRatio;
  // Per-stage conv widths before the multiplier; empty selects the profile's.
  std::vector<std::size_t> stage_widths;
  std::uint64_t seed = 1;
  bool ablate_cbam = false;
};

inline constexpr std::size_t kStages = 5;
inline constexpr std::size_t kConvsPerStage[kStages] = {2, 2, 3, 3, 3};

inline std::vector<std::size_t> profile_widths(const ModelConfig& cfg) {
  std::vector<std::size_t> base = cfg.stage_widths;
  if (base.empty()) {
    if (cfg.profile == Profile::vgg16) base = {64, 128, 256, 512, 512};
    else base = {8, 16, 24, 32, 32};
  }
  if (base.size() != kStages) throw ConfigError("stage_widths must list exactly 5 widths");
  if (!(cfg.width_multiplier > 0.0) || !std::isfinite(cfg.width_multiplier)) {
    throw ConfigError("width_multiplier must be positive");
  }
  std::vector<std::size_t> out;
  for (auto w : base) {
    const auto scaled = static_cast<std::size_t>(std::lround(static_cast<double>(w) * cfg.width_multiplier));
    if (scaled == 0) throw ConfigError("width_multiplier collapses a stage width to zero");
    out.push_back(scaled);
  }
  return out;
}

template <class T>
struct ParamRef {
  std::string name;
  BasicTensor<T>* tensor;
  bool is_weight;  // false for biases; only weights enter the L2 penalty
};

template <class T>
class NetworkGraph {
 public:
  std::size_t input_channels = 3;
  std::size_t input_side = 0;
  std::size_t classes = 0;
  std::optional<ModelConfig> config;  // set when produced by build_cbam_vgg
  std::vector<Node<T>> nodes;

  NetworkGraph() = default;
  NetworkGraph(std::size_t channels, std::size_t side) : input_channels(channels), input_side(side) {}

  NetworkGraph& add_conv(std::size_t in, std::size_t out, std::size_t k = 3, std::size_t padding = 1,
                         std::size_t stride = 1, std::string name = {}) {
    ConvLayer<T> l{BasicTensor<T>({out, in, k, k}), BasicTensor<T>({out}), stride, padding};
    return push(std::move(name), std::move(l), "conv");
  }
  NetworkGraph& add_relu(std::string name = {}) { return push(std::move(name), ReluLayer{}, "relu"); }
  NetworkGraph& add_maxpool(std::size_t size = 2, std::size_t stride = 2, std::string name = {}) {
    return push(std::move(name), MaxPoolLayer{size, stride}, "pool");
  }
  NetworkGraph& add_cbam(std::size_t channels, std::size_t ratio = kDefaultReductionRatio, int stage = 0,
                         std::string name = {}) {
    CbamLayer<T> l{ChannelAttentionParams<T>::zeros(channels, ratio), SpatialAttentionParams<T>{}, stage, false};
    return push(std::move(name), std::move(l), "cbam");
  }
  NetworkGraph& add_flatten(std::string name = {}) { return push(std::move(name), FlattenLayer{}, "flatten"); }
  NetworkGraph& add_dense(std::size_t in, std::size_t out, std::string name = {}) {
    DenseLayer<T> l{BasicTensor<T>({in, out}), BasicTensor<T>({out})};
    classes = out;
    return push(std::move(name), std::move(l), "fc");
  }
  NetworkGraph& add_global_avg_pool(std::string name = {}) {
    return push(std::move(name), GlobalAvgPoolLayer{}, "gap");
  }
  NetworkGraph& add_softmax(std::string name = {}) { return push(std::move(name), SoftmaxLayer{}, "softmax"); }

  std::size_t size() const { return nodes.size(); }
  const Node<T>& operator[](std::size_t i) const { return nodes.at(i); }
  Node<T>& operator[](std::size_t i) { return nodes.at(i); }

  std::size_t count(LayerKind k) const {
    std::size_t c = 0;
    for (const auto& n : nodes) c += n.kind() == k;
    return c;
  }
  std::vector<std::size_t> indices_of(LayerKind k) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (nodes[i].kind() == k) out.push_back(i);
    return out;
  }
  std::ptrdiff_t find(const std::string& name) const {
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (nodes[i].name == name) return static_cast<std::ptrdiff_t>(i);
    return -1;
  }

  // Index of the node whose output are the pre-softmax logits.
  std::size_t logits_node() const {
    if (nodes.empty()) throw ShapeError("empty graph");
    return nodes.back().kind() == LayerKind::softmax ? nodes.size() - 2 : nodes.size() - 1;
  }

  std::vector<ParamRef<T>> params() {
    std::vector<ParamRef<T>> out;
    for (auto& n : nodes) {
      std::visit(
          [&](auto& l) {
            using L = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<L, ConvLayer<T>> || std::is_same_v<L, DenseLayer<T>>) {
              out.push_back({n.name + ".weight", &l.weight, true});
              out.push_back({n.name + ".bias", &l.bias, false});
            } else if constexpr (std::is_same_v<L, CbamLayer<T>>) {
              out.push_back({n.name + ".w0", &l.channel.w0, true});
              out.push_back({n.name + ".w1", &l.channel.w1, true});
              out.push_back({n.name + ".spatial_kernel", &l.spatial.kernel, true});
              out.push_back({n.name + ".spatial_bias", &l.spatial.bias, false});
            }
          },
          n.layer);
    }
    return out;
  }
  std::vector<ParamRef<T>> params() const {
    auto refs = const_cast<NetworkGraph*>(this)->params();
    return refs;
  }

  // Parameter slots owned by node i.
  static std::size_t param_slots(const Node<T>& n) {
    switch (n.kind()) {
      case LayerKind::conv:
      case LayerKind::dense: return 2;
      case LayerKind::cbam: return 4;
      default: return 0;
    }
  }

  std::size_t parameter_count() const {
    std::size_t c = 0;
    for (const auto& p : params()) c += p.tensor->size();
    return c;
  }

  // Activation shapes for a batch of one: entry 0 is the input, entry i+1 the
  // output of node i. Throws ShapeError on the first incompatible node.
  std::vector<Shape> infer_shapes() const {
    std::vector<Shape> shapes{{1, input_channels, input_side, input_side}};
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const Shape& s = shapes.back();
      const auto& n = nodes[i];
      auto fail = [&](const std::string& why) {
        throw ShapeError("node " + std::to_string(i) + " (" + n.name + "): " + why + ", input shape " +
                         shape_string(s));
      };
      Shape out;
      switch (n.kind()) {
        case LayerKind::conv: {
          const auto& l = n.template as<ConvLayer<T>>();
          if (s.size() != 4 || s[1] != l.in_channels()) fail("conv input channel mismatch");
          if (l.weight.dim(2) > s[2] + 2 * l.padding) fail("kernel larger than padded input");
          if (l.bias.size() != l.out_channels()) fail("conv bias length mismatch");
          out = {1, l.out_channels(), ops::conv_out_extent(s[2], l.kernel(), l.stride, l.padding),
                 ops::conv_out_extent(s[3], l.kernel(), l.stride, l.padding)};
          break;
        }
        case LayerKind::relu: out = s; break;
        case LayerKind::maxpool: {
          const auto& l = n.template as<MaxPoolLayer>();
          if (s.size() != 4 || l.size > s[2] || l.size > s[3]) fail("pool window larger than input");
          out = {1, s[1], (s[2] - l.size) / l.stride + 1, (s[3] - l.size) / l.stride + 1};
          break;
        }
        case LayerKind::cbam: {
          const auto& l = n.template as<CbamLayer<T>>();
          if (s.size() != 4 || s[1] != l.channel.channels()) fail("cbam channel mismatch");
          out = s;
          break;
        }
        case LayerKind::flatten: out = {1, shape_size(s)}; break;
        case LayerKind::global_avg_pool:
          if (s.size() != 4) fail("global average pool needs a 4-d input");
          out = {1, s[1]};
          break;
        case LayerKind::dense: {
          const auto& l = n.template as<DenseLayer<T>>();
          if (s.size() != 2 || s[1] != l.weight.dim(0)) fail("dense input width mismatch");
          if (l.bias.size() != l.weight.dim(1)) fail("dense bias length mismatch");
          out = {1, l.weight.dim(1)};
          break;
        }
        case LayerKind::softmax:
          if (s.size() != 2) fail("softmax needs a 2-d input");
          if (i + 1 != nodes.size()) fail("softmax must be the last node");
          out = s;
          break;
      }
      shapes.push_back(std::move(out));
    }
    return shapes;
  }

 private:
  template <class L>
  NetworkGraph& push(std::string name, L layer, const char* prefix) {
    if (name.empty()) name = std::string(prefix) + std::to_string(nodes.size());
    nodes.push_back(Node<T>{std::move(name), Layer<T>(std::move(layer))});
    return *this;
  }
};

// He-uniform initialization of every weight from its fan-in; biases zero.
template <class T>
void initialize_he_uniform(NetworkGraph<T>& g, std::uint64_t seed) {
  Rng rng(seed);
  auto fill = [&](BasicTensor<T>& t, std::size_t fan_in) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-limit, limit));
  };
  for (auto& n : g.nodes) {
    std::visit(
        [&](auto& l) {
          using L = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<L, ConvLayer<T>>) {
            fill(l.weight, l.weight.dim(1) * l.weight.dim(2) * l.weight.dim(3));
            std::fill(l.bias.data().begin(), l.bias.data().end(), T(0));
          } else if constexpr (std::is_same_v<L, DenseLayer<T>>) {
            fill(l.weight, l.weight.dim(0));
            std::fill(l.bias.data().begin(), l.bias.data().end(), T(0));
          } else if constexpr (std::is_same_v<L, CbamLayer<T>>) {
            fill(l.channel.w0, l.channel.w0.dim(0));
            fill(l.channel.w1, l.channel.w1.dim(0));
            fill(l.spatial.kernel, 2 * kSpatialKernel * kSpatialKernel);
            l.spatial.bias[0] = T(0);
          }
        },
        n.layer);
  }
}

// VGG16-style backbone (conv stages of 2,2,3,3,3 3x3 convs, each conv followed
// by relu), a 2x2/2 max-pool closing every stage, a CBAM block after every
// pool, then flatten, one dense classifier, softmax.
template <class T = float>
NetworkGraph<T> build_cbam_vgg(const ModelConfig& cfg) {
  if (cfg.input_side == 0 || cfg.input_side % 32 != 0) {
    throw ConfigError("input_side must be a positive multiple of 32, got " + std::to_string(cfg.input_side));
  }
  if (cfg.classes < 2) throw ConfigError("need at least 2 classes");
  const auto widths = profile_widths(cfg);
  NetworkGraph<T> g(3, cfg.input_side);
  std::size_t in = 3;
  for (std::size_t s = 0; s < kStages; ++s) {
    const std::string stage = std::to_string(s + 1);
    for (std::size_t c = 0; c < kConvsPerStage[s]; ++c) {
      const std::string id = stage + "_" + std::to_string(c + 1);
      g.add_conv(in, widths[s], 3, 1, 1, "conv" + id);
      g.add_relu("relu" + id);
      in = widths[s];
    }
    g.add_maxpool(2, 2, "pool" + stage);
    g.add_cbam(in, cfg.reduction_ratio, static_cast<int>(s + 1), "cbam" + stage);
    g.nodes.back().template as<CbamLayer<T>>().ablated = cfg.ablate_cbam;
  }
  const std::size_t side = cfg.input_side / 32;
  g.add_flatten("flatten");
  g.add_dense(in * side * side, cfg.classes, "fc");
  g.add_softmax("softmax");
  g.config = cfg;
  initialize_he_uniform(g, cfg.seed);
  return g;
}

// True when every maxpool is immediately followed by a cbam node and there are
// exactly five of each.
template <class T>
bool has_cbam_after_every_pool(const NetworkGraph<T>& g) {
  const auto pools = g.indices_of(LayerKind::maxpool);
  if (pools.size() != kStages || g.count(LayerKind::cbam) != kStages) return false;
  for (auto p : pools)
    if (p + 1 >= g.size() || g[p + 1].kind() != LayerKind::cbam) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Forward execution.

template <class T>
struct NodeCache {
  std::vector<std::size_t> winners;  // maxpool
  std::optional<CbamCache<T>> cbam;  // cbam (absent when ablated)
};

template <class T>
struct ForwardTrace {
  // activations[0] is the input, activations[i + 1] the output of node i.
  std::vector<BasicTensor<T>> activations;
  std::vector<NodeCache<T>> caches;
  std::vector<AttentionRecord<T>> attention;  // one per non-ablated CBAM node
  std::size_t first_node = 0;                 // node index of activations[0]

  const BasicTensor<T>& input_of(std::size_t node) const { return activations.at(node - first_node); }
  const BasicTensor<T>& output_of(std::size_t node) const { return activations.at(node - first_node + 1); }
  const NodeCache<T>& cache_of(std::size_t node) const { return caches.at(node - first_node); }
};

template <class T>
struct ForwardResult {
  BasicTensor<T> output;  // probabilities when the graph ends in softmax
  ForwardTrace<T> trace;  // populated when capture was requested
};

template <class T>
BasicTensor<T> run_node(const Node<T>& node, const BasicTensor<T>& x,
                        std::type_identity_t<NodeCache<T>>* cache = nullptr) {
  return std::visit(
      [&](const auto& l) -> BasicTensor<T> {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, ConvLayer<T>>) {
          return ops::conv2d(x, l.weight, l.bias, l.stride, l.padding);
        } else if constexpr (std::is_same_v<L, ReluLayer>) {
          return ops::relu(x);
        } else if constexpr (std::is_same_v<L, MaxPoolLayer>) {
          auto r = ops::maxpool2d(x, l.size, l.stride);
          if (cache) cache->winners = std::move(r.winners);
          return std::move(r.output);
        } else if constexpr (std::is_same_v<L, CbamLayer<T>>) {
          if (l.ablated) return x;
          CbamCache<T> c;
          auto out = cbam_forward(x, l.channel, l.spatial, c);
          if (cache) cache->cbam = std::move(c);
          return out;
        } else if constexpr (std::is_same_v<L, FlattenLayer>) {
          return x.reshaped({x.dim(0), x.size() / x.dim(0)});
        } else if constexpr (std::is_same_v<L, GlobalAvgPoolLayer>) {
          auto r = ops::pool_reduce(x, ops::ReduceAxis::spatial, ops::ReduceKind::avg);
          return r.output.reshaped({x.dim(0), x.dim(1)});
        } else if constexpr (std::is_same_v<L, DenseLayer<T>>) {
          return ops::dense(x, l.weight, l.bias);
        } else {
          return ops::softmax(x);
        }
      },
      node.layer);
}

// Runs nodes [first, last) starting from `x`, which must be the input of node
// `first`. With capture, keeps every activation and backward cache.
template <class T>
ForwardResult<T> forward_range(const NetworkGraph<T>& g, const BasicTensor<T>& x, std::size_t first,
                               std::size_t last, bool capture) {
  ForwardResult<T> r;
  r.trace.first_node = first;
  BasicTensor<T> cur = x;
  if (capture) r.trace.activations.push_back(cur);
  for (std::size_t i = first; i < last; ++i) {
    NodeCache<T> cache;
    BasicTensor<T> next;
    try {
      next = run_node(g.nodes[i], cur, capture ? &cache : nullptr);
    } catch (const NumericError& e) {
      throw NumericError("node " + std::to_string(i) + " (" + g.nodes[i].name + "): " + e.what(),
                         static_cast<std::ptrdiff_t>(i));
    }
    if (!next.all_finite()) {
      throw NumericError("node " + std::to_string(i) + " (" + g.nodes[i].name + ") produced a non-finite value",
                         static_cast<std::ptrdiff_t>(i));
    }
    if (capture) {
      if (cache.cbam) {
        const auto& l = g.nodes[i].template as<CbamLayer<T>>();
        r.trace.attention.push_back({cache.cbam->channel_gate, cache.cbam->spatial_gate, l.stage});
      }
      r.trace.caches.push_back(std::move(cache));
      r.trace.activations.push_back(next);
    }
    cur = std::move(next);
  }
  r.output = std::move(cur);
  return r;
}

template <class T>
void check_batch(const NetworkGraph<T>& g, const BasicTensor<T>& batch) {
  if (batch.rank() != 4 || batch.dim(1) != g.input_channels || batch.dim(2) != g.input_side ||
      batch.dim(3) != g.input_side) {
    throw ShapeError("forward: batch shape " + shape_string(batch.shape()) + " does not match input [N," +
                     std::to_string(g.input_channels) + "," + std::to_string(g.input_side) + "," +
                     std::to_string(g.input_side) + "]");
  }
  require_finite(batch, "forward");
}

template <class T>
ForwardResult<T> forward(const NetworkGraph<T>& g, const BasicTensor<T>& batch, bool capture = false) {
  check_batch(g, batch);
  return forward_range(g, batch, 0, g.size(), capture);
}

// Copy of a graph with parameters converted to another scalar type.
template <class U, class T>
NetworkGraph<U> graph_cast(const NetworkGraph<T>& g) {
  NetworkGraph<U> out(g.input_channels, g.input_side);
  out.classes = g.classes;
  out.config = g.config;
  for (const auto& n : g.nodes) {
    Layer<U> layer = std::visit(
        [](const auto& l) -> Layer<U> {
          using L = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<L, ConvLayer<T>>) {
            return ConvLayer<U>{l.weight.template cast<U>(), l.bias.template cast<U>(), l.stride, l.padding};
          } else if constexpr (std::is_same_v<L, CbamLayer<T>>) {
            return CbamLayer<U>{{l.channel.w0.template cast<U>(), l.channel.w1.template cast<U>(),
                                 l.channel.reduction_ratio},
                                {l.spatial.kernel.template cast<U>(), l.spatial.bias.template cast<U>()},
                                l.stage,
                                l.ablated};
          } else if constexpr (std::is_same_v<L, DenseLayer<T>>) {
            return DenseLayer<U>{l.weight.template cast<U>(), l.bias.template cast<U>()};
          } else {
            return l;
          }
        },
        n.layer);
    out.nodes.push_back({n.name, std::move(layer)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reverse mode.

template <class T>
struct LayerIO {
  const BasicTensor<T>& input;
  const BasicTensor<T>& output;
  const NodeCache<T>& aux;
};

template <class T>
struct LayerGrads {
  BasicTensor<T> input;
  std::vector<BasicTensor<T>> params;  // in NetworkGraph::params() order for this node
};

// Exact vector-Jacobian product of one node.
template <class T>
LayerGrads<T> backward_vjp(const Node<T>& node, const LayerIO<T>& io, const BasicTensor<T>& upstream,
                           bool want_params = true) {
  if (upstream.shape() != io.output.shape()) {
    throw ShapeError("backward (" + node.name + "): upstream " + shape_string(upstream.shape()) +
                     " does not match cached output " + shape_string(io.output.shape()));
  }
  return std::visit(
      [&](const auto& l) -> LayerGrads<T> {
        using L = std::decay_t<decltype(l)>;
        LayerGrads<T> g;
        if constexpr (std::is_same_v<L, ConvLayer<T>>) {
          auto c = ops::conv2d_backward(io.input, l.weight, upstream, l.stride, l.padding, want_params);
          g.input = std::move(c.input);
          if (want_params) g.params = {std::move(c.kernel), std::move(c.bias)};
        } else if constexpr (std::is_same_v<L, ReluLayer>) {
          g.input = ops::relu_backward(io.output, upstream);
        } else if constexpr (std::is_same_v<L, MaxPoolLayer>) {
          g.input = ops::maxpool2d_backward(io.input.shape(), io.aux.winners, upstream);
        } else if constexpr (std::is_same_v<L, CbamLayer<T>>) {
          if (l.ablated) {
            g.input = upstream;
            if (want_params) {
              g.params = {BasicTensor<T>(l.channel.w0.shape()), BasicTensor<T>(l.channel.w1.shape()),
                          BasicTensor<T>(l.spatial.kernel.shape()), BasicTensor<T>(l.spatial.bias.shape())};
            }
          } else {
            if (!io.aux.cbam) throw ShapeError("backward (" + node.name + "): missing attention cache");
            auto c = cbam_backward(io.input, l.channel, l.spatial, *io.aux.cbam, upstream);
            g.input = std::move(c.input);
            if (want_params) g.params = {std::move(c.w0), std::move(c.w1), std::move(c.kernel), std::move(c.bias)};
          }
        } else if constexpr (std::is_same_v<L, FlattenLayer>) {
          g.input = upstream.reshaped(io.input.shape());
        } else if constexpr (std::is_same_v<L, GlobalAvgPoolLayer>) {
          ops::PoolReduceResult<T> fwd{upstream.reshaped({upstream.dim(0), upstream.dim(1), 1, 1}), {}};
          g.input = ops::pool_reduce_backward(io.input.shape(), ops::ReduceAxis::spatial, ops::ReduceKind::avg, fwd,
                                              fwd.output);
        } else if constexpr (std::is_same_v<L, DenseLayer<T>>) {
          auto d = ops::dense_backward(io.input, l.weight, upstream, want_params);
          g.input = std::move(d.input);
          if (want_params) g.params = {std::move(d.weight), std::move(d.bias)};
        } else {
          g.input = ops::softmax_backward(io.output, upstream);
        }
        return g;
      },
      node.layer);
}

template <class T>
struct Gradients {
  // Aligned with NetworkGraph::params(); empty when parameters were not requested.
  std::vector<BasicTensor<T>> params;
  // Gradient with respect to the input of node `stop`.
  BasicTensor<T> input;
};

// Back-propagates `upstream` (the gradient w.r.t. the output of node `top`)
// down to the input of node `stop`.
template <class T>
Gradients<T> backward(const NetworkGraph<T>& g, const ForwardTrace<T>& trace, std::size_t top,
                      const BasicTensor<T>& upstream, std::size_t stop = 0, bool want_params = true) {
  if (trace.activations.size() != trace.caches.size() + 1 || stop < trace.first_node ||
      top >= trace.first_node + trace.caches.size() || stop > top) {
    throw ShapeError("backward: trace does not cover the requested node range");
  }
  Gradients<T> out;
  std::vector<std::size_t> slot(g.size() + 1, 0);
  for (std::size_t i = 0; i < g.size(); ++i) slot[i + 1] = slot[i] + NetworkGraph<T>::param_slots(g.nodes[i]);
  if (want_params) {
    for (const auto& p : g.params()) out.params.emplace_back(p.tensor->shape());
  }
  BasicTensor<T> grad = upstream;
  for (std::size_t i = top + 1; i-- > stop;) {
    LayerIO<T> io{trace.input_of(i), trace.output_of(i), trace.cache_of(i)};
    auto lg = backward_vjp(g.nodes[i], io, grad, want_params);
    if (want_params) {
      for (std::size_t k = 0; k < lg.params.size(); ++k) out.params[slot[i] + k] = std::move(lg.params[k]);
    }
    grad = std::move(lg.input);
  }
  out.input = std::move(grad);
  return out;
}

}  // namespace cbamvgg
