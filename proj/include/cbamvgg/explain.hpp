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

// Attribution: CBAM attention maps, Grad-CAM, Grad-CAM++ and layer-wise
// relevance propagation with per-layer rule composites. All computation runs
// on a 64-bit copy of the graph.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "cbamvgg/error.hpp"
#include "cbamvgg/interp.hpp"
#include "cbamvgg/model.hpp"
#include "cbamvgg/ops.hpp"
#include "cbamvgg/tensor.hpp"

namespace cbamvgg {

namespace detail {

template <class T>
TensorD as_batch(const NetworkGraph<T>& g, const BasicTensor<T>& image) {
  TensorD x = image.template cast<double>();
  if (x.rank() == 3) x = x.reshaped({1, x.dim(0), x.dim(1), x.dim(2)});
  if (x.rank() != 4 || x.dim(0) != 1) throw ShapeError("explain: expected one image [3,S,S] or [1,3,S,S]");
  if (x.dim(1) != g.input_channels || x.dim(2) != g.input_side || x.dim(3) != g.input_side) {
    throw ShapeError("explain: image shape " + shape_string(x.shape()) + " does not match the model input");
  }
  require_finite(x, "explain");
  return x;
}

inline void check_class(std::size_t classes, int class_id) {
  if (class_id < 0 || static_cast<std::size_t>(class_id) >= classes) {
    throw ConfigError("class " + std::to_string(class_id) + " outside [0," + std::to_string(classes) + ")");
  }
}

// Upsamples an [h,w] plane to side x side.
inline TensorD upsample(const TensorD& plane, std::size_t side) {
  return TensorD({side, side}, resize_bilinear(plane.data(), plane.dim(0), plane.dim(1), side, side));
}

}  // namespace detail

// Min-max scaling to [0,1]; an all-zero map stays zero and a constant
// positive map becomes all ones.
inline TensorD normalize_unit(const TensorD& m) {
  if (m.empty()) return m;
  const auto [lo, hi] = std::minmax_element(m.data().begin(), m.data().end());
  TensorD out(m.shape());
  if (*hi == *lo) {
    if (*hi != 0.0) std::fill(out.data().begin(), out.data().end(), 1.0);
    return out;
  }
  for (std::size_t i = 0; i < m.size(); ++i) out[i] = (m[i] - *lo) / (*hi - *lo);
  return out;
}

// ---------------------------------------------------------------------------
// Attention maps

struct StageAttention {
  int stage = 0;
  std::size_t node = 0;
  TensorD channel_gate;     // [c]
  TensorD spatial_gate;     // [h,w] at the stage resolution
  TensorD spatial_display;  // spatial gate at input resolution
  TensorD channel_display;  // mean over channels of C_k * F_k, at input resolution
};

template <class T>
std::vector<StageAttention> attention_maps(const NetworkGraph<T>& g, const BasicTensor<T>& image) {
  const auto gd = graph_cast<double>(g);
  const auto x = detail::as_batch(g, image);
  const auto fwd = forward(gd, x, true);
  std::vector<StageAttention> out;
  for (std::size_t i = 0; i < gd.size(); ++i) {
    if (gd.nodes[i].kind() != LayerKind::cbam) continue;
    const auto& cache = fwd.trace.cache_of(i).cbam;
    if (!cache) continue;
    const auto& f = fwd.trace.input_of(i);
    const std::size_t c = f.dim(1), h = f.dim(2), w = f.dim(3);
    StageAttention s;
    s.stage = gd.nodes[i].template as<CbamLayer<double>>().stage;
    s.node = i;
    s.channel_gate = cache->channel_gate.reshaped({c});
    s.spatial_gate = cache->spatial_gate.reshaped({h, w});
    TensorD summary({h, w});
    for (std::size_t k = 0; k < c; ++k)
      for (std::size_t p = 0; p < h * w; ++p) summary[p] += s.channel_gate[k] * f[k * h * w + p] / double(c);
    s.spatial_display = detail::upsample(s.spatial_gate, g.input_side);
    s.channel_display = detail::upsample(summary, g.input_side);
    out.push_back(std::move(s));
  }
  if (out.empty()) throw ConfigError("attention maps need a graph with active CBAM blocks");
  return out;
}

// ---------------------------------------------------------------------------
// Grad-CAM family

struct SaliencyMap {
  TensorD values;       // [S,S], in [0,1]
  TensorD raw;          // [h,w] at the target layer, before upsampling
  TensorD weights;      // [C] channel weights
  TensorD activations;  // [C,h,w] target-layer output
  TensorD gradients;    // [C,h,w] d logit / d activations
  int target_class = 0;
  std::string method;
  std::string layer;
  std::size_t layer_index = 0;
  double score = 0;  // the class logit
};

// Deepest CBAM output, or the deepest conv when the graph has no CBAM.
template <class T>
std::size_t default_cam_layer(const NetworkGraph<T>& g) {
  auto cb = g.indices_of(LayerKind::cbam);
  if (!cb.empty()) return cb.back();
  auto cv = g.indices_of(LayerKind::conv);
  if (!cv.empty()) return cv.back();
  throw ConfigError("graph has no conv or cbam layer to explain");
}

// Accepts a node name or a numeric node index.
template <class T>
std::size_t resolve_layer(const NetworkGraph<T>& g, const std::string& spec) {
  if (spec.empty()) return default_cam_layer(g);
  std::size_t idx = 0;
  const auto at = g.find(spec);
  if (at >= 0) {
    idx = static_cast<std::size_t>(at);
  } else if (!spec.empty() && std::all_of(spec.begin(), spec.end(), [](unsigned char ch) { return std::isdigit(ch) != 0; })) {
    idx = std::stoul(spec);
  } else {
    throw ConfigError("unknown layer '" + spec + "'");
  }
  if (idx >= g.size()) throw ConfigError("layer index " + spec + " out of range");
  return idx;
}

template <class T>
SaliencyMap cam_inputs(const NetworkGraph<T>& g, const BasicTensor<T>& image, int class_id, std::size_t layer) {
  detail::check_class(g.classes, class_id);
  if (layer >= g.size()) throw ConfigError("layer index out of range");
  const auto kind = g.nodes[layer].kind();
  if (kind != LayerKind::conv && kind != LayerKind::cbam) {
    throw ConfigError("Grad-CAM target must be a conv or cbam layer, got " + g.nodes[layer].name + " (" +
                      to_string(kind) + ")");
  }
  const auto gd = graph_cast<double>(g);
  const auto x = detail::as_batch(g, image);
  const std::size_t top = gd.logits_node();
  if (layer >= top) throw ConfigError("Grad-CAM target must precede the logits");
  const auto fwd = forward_range(gd, x, 0, top + 1, true);
  TensorD up({1, gd.classes});
  up[static_cast<std::size_t>(class_id)] = 1.0;
  const auto grads = backward(gd, fwd.trace, top, up, layer + 1, false);
  const auto& a = fwd.trace.output_of(layer);
  SaliencyMap m;
  m.activations = a.reshaped({a.dim(1), a.dim(2), a.dim(3)});
  m.gradients = grads.input.reshaped(m.activations.shape());
  m.target_class = class_id;
  m.layer = gd.nodes[layer].name;
  m.layer_index = layer;
  m.score = fwd.output[static_cast<std::size_t>(class_id)];
  return m;
}

namespace detail {

inline void finish_cam(SaliencyMap& m, std::size_t side) {
  const std::size_t c = m.activations.dim(0), h = m.activations.dim(1), w = m.activations.dim(2);
  m.raw = TensorD({h, w});
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t p = 0; p < h * w; ++p) m.raw[p] += m.weights[k] * m.activations[k * h * w + p];
  for (auto& v : m.raw.data()) v = std::max(v, 0.0);
  m.values = normalize_unit(upsample(m.raw, side));
}

}  // namespace detail

// Channel weights are spatial means of the logit gradient.
template <class T>
SaliencyMap grad_cam(const NetworkGraph<T>& g, const BasicTensor<T>& image, int class_id,
                     std::optional<std::size_t> layer = std::nullopt) {
  auto m = cam_inputs(g, image, class_id, layer ? *layer : default_cam_layer(g));
  const std::size_t c = m.gradients.dim(0), hw = m.gradients.dim(1) * m.gradients.dim(2);
  m.method = "gradcam";
  m.weights = TensorD({c});
  for (std::size_t k = 0; k < c; ++k) {
    double s = 0;
    for (std::size_t p = 0; p < hw; ++p) s += m.gradients[k * hw + p];
    m.weights[k] = s / static_cast<double>(hw);
  }
  detail::finish_cam(m, g.input_side);
  return m;
}

// Grad-CAM++ coefficients for an exponentiated score:
// a_ij = g^2 / (2 g^2 + sum_ab A_ab * g^3), zero where the denominator is;
// channel weight = sum_ij a_ij * relu(g_ij).
template <class T>
SaliencyMap grad_cam_pp(const NetworkGraph<T>& g, const BasicTensor<T>& image, int class_id,
                        std::optional<std::size_t> layer = std::nullopt) {
  auto m = cam_inputs(g, image, class_id, layer ? *layer : default_cam_layer(g));
  const std::size_t c = m.gradients.dim(0), hw = m.gradients.dim(1) * m.gradients.dim(2);
  m.method = "gradcampp";
  m.weights = TensorD({c});
  for (std::size_t k = 0; k < c; ++k) {
    double act_sum = 0;
    for (std::size_t p = 0; p < hw; ++p) act_sum += m.activations[k * hw + p];
    double wk = 0;
    for (std::size_t p = 0; p < hw; ++p) {
      const double gr = m.gradients[k * hw + p];
      const double g2 = gr * gr, g3 = g2 * gr;
      const double den = 2.0 * g2 + act_sum * g3;
      const double alpha = den != 0.0 ? g2 / den : 0.0;
      wk += alpha * std::max(gr, 0.0);
    }
    m.weights[k] = wk;
  }
  detail::finish_cam(m, g.input_side);
  return m;
}

// ---------------------------------------------------------------------------
// Layer-wise relevance propagation

struct Rule {
  enum class Kind { epsilon, zplus, alphabeta, flat, gamma, box, pass };
  Kind kind = Kind::pass;
  double epsilon = 1e-6;
  double alpha = 2.0, beta = 1.0;
  double gamma = 0.25;
  double low = 0.0, high = 1.0;

  static Rule eps(double e = 1e-6) { return {Kind::epsilon, e}; }
  static Rule zplus() { return {Kind::zplus}; }
  static Rule alpha_beta(double a = 2.0, double b = 1.0) {
    Rule r{Kind::alphabeta};
    r.alpha = a;
    r.beta = b;
    return r;
  }
  static Rule flat() { return {Kind::flat}; }
  static Rule gamma_rule(double g = 0.25) {
    Rule r{Kind::gamma};
    r.gamma = g;
    return r;
  }
  static Rule box(double l = 0.0, double h = 1.0) {
    Rule r{Kind::box};
    r.low = l;
    r.high = h;
    return r;
  }
  static Rule pass() { return {Kind::pass}; }

  bool linear() const { return kind != Kind::pass; }
  std::string name() const {
    switch (kind) {
      case Kind::epsilon: return "epsilon";
      case Kind::zplus: return "zplus";
      case Kind::alphabeta: return "alphabeta";
      case Kind::flat: return "flat";
      case Kind::gamma: return "gamma";
      case Kind::box: return "box";
      case Kind::pass: return "pass";
    }
    return "?";
  }
};

struct RuleComposite {
  std::string name;
  std::vector<Rule> rules;  // one per graph node
};

inline const std::vector<std::string>& composite_names() {
  static const std::vector<std::string> names{"epsilon_plus", "epsilon_plus_flat", "epsilon_gamma_box",
                                              "epsilon_alpha2beta1_flat"};
  return names;
}

inline std::string joined_composite_names() {
  std::string s;
  for (const auto& n : composite_names()) s += (s.empty() ? "" : ", ") + n;
  return s;
}

template <class T>
bool is_linear_node(const Node<T>& n) {
  return n.kind() == LayerKind::conv || n.kind() == LayerKind::dense;
}

// Throws ConfigError unless every node has exactly one suitable rule.
template <class T>
void validate_composite(const NetworkGraph<T>& g, const RuleComposite& c) {
  if (c.rules.size() != g.size()) {
    throw ConfigError("composite '" + c.name + "' assigns " + std::to_string(c.rules.size()) + " rules to a graph of " +
                      std::to_string(g.size()) + " layers");
  }
  std::optional<std::size_t> first_linear;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const bool lin = is_linear_node(g.nodes[i]);
    if (lin && !first_linear) first_linear = i;
    if (lin != c.rules[i].linear()) {
      throw ConfigError("composite '" + c.name + "': layer " + g.nodes[i].name + " cannot use rule " +
                        c.rules[i].name());
    }
    if (c.rules[i].kind == Rule::Kind::box && i != first_linear) {
      throw ConfigError("composite '" + c.name + "': box rule is only valid on the first layer");
    }
  }
}

// Named presets. "First block" means the convs before the first max-pool.
template <class T>
RuleComposite make_composite(const std::string& name, const NetworkGraph<T>& g, double epsilon = 1e-6) {
  const auto& names = composite_names();
  if (std::find(names.begin(), names.end(), name) == names.end()) {
    throw ConfigError("unknown composite '" + name + "'; valid names: " + joined_composite_names());
  }
  RuleComposite c{name, {}};
  std::size_t first_pool = g.size();
  for (std::size_t i = 0; i < g.size(); ++i)
    if (g.nodes[i].kind() == LayerKind::maxpool) {
      first_pool = i;
      break;
    }
  bool seen_linear = false;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto& n = g.nodes[i];
    Rule r = Rule::pass();
    if (n.kind() == LayerKind::dense) {
      r = Rule::eps(epsilon);
    } else if (n.kind() == LayerKind::conv) {
      const bool first_block = i < first_pool;
      if (name == "epsilon_plus") {
        r = Rule::zplus();
      } else if (name == "epsilon_plus_flat") {
        r = first_block ? Rule::flat() : Rule::zplus();
      } else if (name == "epsilon_gamma_box") {
        r = seen_linear ? Rule::gamma_rule(0.25) : Rule::box(0.0, 1.0);
      } else {
        r = first_block ? Rule::flat() : Rule::alpha_beta(2.0, 1.0);
      }
    }
    if (is_linear_node(n)) seen_linear = true;
    c.rules.push_back(r);
  }
  validate_composite(g, c);
  return c;
}

struct RelevanceMap {
  TensorD pixels;              // [3,S,S]
  std::vector<TensorD> layers;  // layers[i]: relevance at the input of node i; layers[top+1] the initial one
  std::vector<double> absorbed;  // per node: relevance entering minus relevance leaving (bias share)
  int target_class = 0;
  std::string composite;
  double logit = 0;

  // Pixel relevance summed over colour channels, [S,S].
  TensorD spatial() const {
    const std::size_t c = pixels.dim(0), h = pixels.dim(1), w = pixels.dim(2);
    TensorD out({h, w});
    for (std::size_t k = 0; k < c; ++k)
      for (std::size_t p = 0; p < h * w; ++p) out[p] += pixels[k * h * w + p];
    return out;
  }
};

namespace detail {

inline TensorD map_values(const TensorD& t, double (*f)(double)) {
  TensorD out(t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = f(t[i]);
  return out;
}
inline double pos_part(double v) { return v > 0 ? v : 0.0; }
inline double neg_part(double v) { return v < 0 ? v : 0.0; }

inline TensorD hadamard(const TensorD& a, const TensorD& b) {
  TensorD out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

inline void axpy(TensorD& y, double a, const TensorD& x) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

// R / z with 0 where z is exactly 0.
inline TensorD safe_div(const TensorD& r, const TensorD& z) {
  TensorD out(r.shape());
  for (std::size_t i = 0; i < r.size(); ++i) out[i] = z[i] != 0.0 ? r[i] / z[i] : 0.0;
  return out;
}

// The linear map of a conv or dense node with weights `w` and no bias, and
// its transpose.
struct LinearOp {
  const Node<double>* node;
  TensorD fwd(const TensorD& a, const TensorD& w) const {
    if (node->kind() == LayerKind::conv) {
      const auto& l = node->as<ConvLayer<double>>();
      return ops::conv2d(a, w, TensorD(), l.stride, l.padding);
    }
    return ops::dense(a, w, TensorD());
  }
  TensorD bwd(const TensorD& a, const TensorD& w, const TensorD& s) const {
    if (node->kind() == LayerKind::conv) {
      const auto& l = node->as<ConvLayer<double>>();
      return ops::conv2d_backward(a, w, s, l.stride, l.padding, false).input;
    }
    return ops::dense_backward(a, w, s, false).input;
  }
  const TensorD& weight() const {
    return node->kind() == LayerKind::conv ? node->as<ConvLayer<double>>().weight
                                           : node->as<DenseLayer<double>>().weight;
  }
  const TensorD& bias() const {
    return node->kind() == LayerKind::conv ? node->as<ConvLayer<double>>().bias : node->as<DenseLayer<double>>().bias;
  }
  // Adds the bias (broadcast over the output) to z.
  void add_bias(TensorD& z, const TensorD& b) const {
    if (b.empty()) return;
    const std::size_t k = b.size(), per = z.size() / z.dim(0) / k;
    for (std::size_t n = 0; n < z.dim(0); ++n)
      for (std::size_t j = 0; j < k; ++j)
        for (std::size_t p = 0; p < per; ++p) z[(n * k + j) * per + p] += b[j];
  }
};

inline TensorD lrp_linear(const LinearOp& op, const Rule& rule, const TensorD& a, const TensorD& r) {
  const TensorD& w = op.weight();
  const TensorD& b = op.bias();
  switch (rule.kind) {
    case Rule::Kind::epsilon: {
      TensorD z = op.fwd(a, w);
      op.add_bias(z, b);
      for (auto& v : z.data()) v += (v >= 0 ? rule.epsilon : -rule.epsilon);
      return hadamard(a, op.bwd(a, w, safe_div(r, z)));
    }
    case Rule::Kind::zplus:
    case Rule::Kind::alphabeta: {
      const double alpha = rule.kind == Rule::Kind::zplus ? 1.0 : rule.alpha;
      const double beta = rule.kind == Rule::Kind::zplus ? 0.0 : rule.beta;
      const TensorD ap = map_values(a, pos_part), an = map_values(a, neg_part);
      const TensorD wp = map_values(w, pos_part), wn = map_values(w, neg_part);
      TensorD zp = op.fwd(ap, wp);
      axpy(zp, 1.0, op.fwd(an, wn));
      op.add_bias(zp, map_values(b, pos_part));
      const TensorD sp = safe_div(r, zp);
      TensorD out = hadamard(ap, op.bwd(a, wp, sp));
      axpy(out, 1.0, hadamard(an, op.bwd(a, wn, sp)));
      if (alpha != 1.0) {
        for (auto& v : out.data()) v *= alpha;
      }
      if (beta != 0.0) {
        TensorD zn = op.fwd(ap, wn);
        axpy(zn, 1.0, op.fwd(an, wp));
        op.add_bias(zn, map_values(b, neg_part));
        const TensorD sn = safe_div(r, zn);
        axpy(out, -beta, hadamard(ap, op.bwd(a, wn, sn)));
        axpy(out, -beta, hadamard(an, op.bwd(a, wp, sn)));
      }
      return out;
    }
    case Rule::Kind::flat: {
      const TensorD ones_a(a.shape(), 1.0), ones_w(w.shape(), 1.0);
      return op.bwd(ones_a, ones_w, safe_div(r, op.fwd(ones_a, ones_w)));
    }
    case Rule::Kind::gamma: {
      TensorD wg = w, bg = b;
      for (auto& v : wg.data()) v += rule.gamma * pos_part(v);
      for (auto& v : bg.data()) v += rule.gamma * pos_part(v);
      TensorD z = op.fwd(a, wg);
      op.add_bias(z, bg);
      return hadamard(a, op.bwd(a, wg, safe_div(r, z)));
    }
    case Rule::Kind::box: {
      const TensorD lo(a.shape(), rule.low), hi(a.shape(), rule.high);
      const TensorD wp = map_values(w, pos_part), wn = map_values(w, neg_part);
      TensorD z = op.fwd(a, w);
      axpy(z, -1.0, op.fwd(lo, wp));
      axpy(z, -1.0, op.fwd(hi, wn));
      op.add_bias(z, b);
      const TensorD s = safe_div(r, z);
      TensorD out = hadamard(a, op.bwd(a, w, s));
      axpy(out, -1.0, hadamard(lo, op.bwd(a, wp, s)));
      axpy(out, -1.0, hadamard(hi, op.bwd(a, wn, s)));
      return out;
    }
    case Rule::Kind::pass: break;
  }
  throw ConfigError("rule " + rule.name() + " is not a linear rule");
}

}  // namespace detail

// Starts from the class logit at the pre-softmax node and propagates down to
// the pixels. ReLU and CBAM pass relevance through unchanged (gates act as
// constants), max-pool routes it to the window winners, flatten reshapes and
// global average pooling splits it in proportion to the activations.
template <class T>
RelevanceMap lrp(const NetworkGraph<T>& g, const BasicTensor<T>& image, int class_id, const RuleComposite& composite) {
  detail::check_class(g.classes, class_id);
  validate_composite(g, composite);
  const auto gd = graph_cast<double>(g);
  const auto x = detail::as_batch(g, image);
  const std::size_t top = gd.logits_node();
  const auto fwd = forward_range(gd, x, 0, top + 1, true);

  RelevanceMap m;
  m.target_class = class_id;
  m.composite = composite.name;
  m.logit = fwd.output[static_cast<std::size_t>(class_id)];
  m.layers.resize(top + 2);
  m.absorbed.assign(gd.size(), 0.0);
  TensorD r(fwd.output.shape());
  r[static_cast<std::size_t>(class_id)] = m.logit;
  m.layers[top + 1] = r;

  for (std::size_t i = top + 1; i-- > 0;) {
    const auto& node = gd.nodes[i];
    const auto& a = fwd.trace.input_of(i);
    TensorD next;
    switch (node.kind()) {
      case LayerKind::conv:
      case LayerKind::dense:
        next = detail::lrp_linear(detail::LinearOp{&node}, composite.rules[i], a, r);
        break;
      case LayerKind::relu:
      case LayerKind::cbam:
        next = r;
        break;
      case LayerKind::maxpool:
        next = ops::maxpool2d_backward(a.shape(), fwd.trace.cache_of(i).winners, r);
        break;
      case LayerKind::flatten:
        next = r.reshaped(a.shape());
        break;
      case LayerKind::global_avg_pool: {
        next = TensorD(a.shape());
        const std::size_t n = a.dim(0), c = a.dim(1), hw = a.dim(2) * a.dim(3);
        for (std::size_t b = 0; b < n; ++b)
          for (std::size_t k = 0; k < c; ++k) {
            const std::size_t base = (b * c + k) * hw;
            double s = 0;
            for (std::size_t p = 0; p < hw; ++p) s += a[base + p];
            if (s == 0) continue;
            for (std::size_t p = 0; p < hw; ++p) next[base + p] = a[base + p] / s * r[b * c + k];
          }
        break;
      }
      case LayerKind::softmax:
        throw ConfigError("lrp: softmax below the logits is not supported");
    }
    if (!next.all_finite()) {
      throw NumericError("lrp: non-finite relevance at layer " + node.name, static_cast<std::ptrdiff_t>(i));
    }
    m.absorbed[i] = sum(r) - sum(next);
    r = std::move(next);
    m.layers[i] = r;
  }
  m.pixels = r.reshaped({r.dim(1), r.dim(2), r.dim(3)});
  return m;
}

}  // namespace cbamvgg
