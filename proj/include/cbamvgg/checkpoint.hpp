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

// Checkpoint persistence. A checkpoint is two files:
//
//   <path>       JSON manifest: format version, input shape, build config,
//                node list with per-parameter shape, byte offset and count.
//   <path>.bin   payload: every parameter as little-endian IEEE-754 float32,
//                concatenated in topological order.
//
// Loading rebuilds each node from its manifest config, derives the parameter
// shapes that config implies and rejects any disagreement.

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "json.hpp"

#include "cbamvgg/error.hpp"
#include "cbamvgg/model.hpp"
#include "cbamvgg/options.hpp"

namespace cbamvgg {

inline constexpr const char* kCheckpointFormat = "cbamvgg-v1";

struct CheckpointMeta {
  std::vector<std::string> class_names;
  PreprocessOptions preprocess;
};

template <class T>
struct Checkpoint {
  NetworkGraph<T> graph;
  CheckpointMeta meta;
};

inline std::filesystem::path payload_path(const std::filesystem::path& manifest) {
  return std::filesystem::path(manifest.string() + ".bin");
}

namespace detail {

using nlohmann::ordered_json;

inline ordered_json config_to_json(const ModelConfig& c) {
  return ordered_json{{"profile", to_string(c.profile)},
                      {"input_side", c.input_side},
                      {"classes", c.classes},
                      {"width_multiplier", c.width_multiplier},
                      {"reduction_ratio", c.reduction_ratio},
                      {"stage_widths", c.stage_widths},
                      {"seed", c.seed},
                      {"ablate_cbam", c.ablate_cbam}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.profile = profile_from_string(j.at("profile").get<std::string>());
  c.input_side = j.at("input_side").get<std::size_t>();
  c.classes = j.at("classes").get<std::size_t>();
  c.width_multiplier = j.at("width_multiplier").get<double>();
  c.reduction_ratio = j.at("reduction_ratio").get<std::size_t>();
  c.stage_widths = j.at("stage_widths").get<std::vector<std::size_t>>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.ablate_cbam = j.at("ablate_cbam").get<bool>();
  return c;
}

template <class T>
ordered_json node_config(const Node<T>& n) {
  switch (n.kind()) {
    case LayerKind::conv: {
      const auto& l = n.template as<ConvLayer<T>>();
      return {{"in", l.in_channels()}, {"out", l.out_channels()}, {"kernel", l.kernel()},
              {"stride", l.stride},    {"padding", l.padding}};
    }
    case LayerKind::maxpool: {
      const auto& l = n.template as<MaxPoolLayer>();
      return {{"size", l.size}, {"stride", l.stride}};
    }
    case LayerKind::cbam: {
      const auto& l = n.template as<CbamLayer<T>>();
      return {{"channels", l.channel.channels()}, {"reduction_ratio", l.channel.reduction_ratio},
              {"stage", l.stage}, {"ablated", l.ablated}};
    }
    case LayerKind::dense: {
      const auto& l = n.template as<DenseLayer<T>>();
      return {{"in", l.weight.dim(0)}, {"out", l.weight.dim(1)}};
    }
    default: return ordered_json::object();
  }
}

template <class T>
void append_node(NetworkGraph<T>& g, const std::string& name, LayerKind kind, const nlohmann::json& cfg) {
  switch (kind) {
    case LayerKind::conv:
      g.add_conv(cfg.at("in"), cfg.at("out"), cfg.at("kernel"), cfg.at("padding"), cfg.at("stride"), name);
      break;
    case LayerKind::relu: g.add_relu(name); break;
    case LayerKind::maxpool: g.add_maxpool(cfg.at("size"), cfg.at("stride"), name); break;
    case LayerKind::cbam:
      g.add_cbam(cfg.at("channels"), cfg.at("reduction_ratio"), cfg.at("stage").template get<int>(), name);
      g.nodes.back().template as<CbamLayer<T>>().ablated = cfg.at("ablated").template get<bool>();
      break;
    case LayerKind::flatten: g.add_flatten(name); break;
    case LayerKind::dense: g.add_dense(cfg.at("in"), cfg.at("out"), name); break;
    case LayerKind::global_avg_pool: g.add_global_avg_pool(name); break;
    case LayerKind::softmax: g.add_softmax(name); break;
  }
}

inline void put_f32(std::vector<unsigned char>& out, float v) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<unsigned char>((bits >> (8 * b)) & 0xffu));
}

inline float get_f32(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(p[b]) << (8 * b);
  return std::bit_cast<float>(bits);
}

}  // namespace detail

template <class T>
void save_checkpoint(const NetworkGraph<T>& g, const std::filesystem::path& path, const CheckpointMeta& meta = {}) {
  using detail::ordered_json;
  ordered_json manifest;
  manifest["format"] = kCheckpointFormat;
  manifest["input"] = {{"channels", g.input_channels}, {"side", g.input_side}};
  manifest["classes"] = g.classes;
  manifest["build"] = g.config ? detail::config_to_json(*g.config) : ordered_json(nullptr);
  manifest["class_names"] = meta.class_names;
  manifest["preprocess"] = {{"clahe", meta.preprocess.clahe},
                            {"clip_limit", meta.preprocess.clip_limit},
                            {"tiles", meta.preprocess.tiles}};
  std::vector<unsigned char> payload;
  ordered_json nodes = ordered_json::array();
  auto refs = g.params();
  std::size_t ref = 0;
  for (const auto& n : g.nodes) {
    ordered_json jn{{"name", n.name}, {"kind", to_string(n.kind())}, {"config", detail::node_config(n)}};
    ordered_json params = ordered_json::array();
    for (std::size_t k = 0; k < NetworkGraph<T>::param_slots(n); ++k, ++ref) {
      const auto& p = refs[ref];
      params.push_back({{"name", p.name.substr(n.name.size() + 1)},
                        {"shape", p.tensor->shape()},
                        {"offset", payload.size()},
                        {"count", p.tensor->size()}});
      for (auto v : p.tensor->data()) detail::put_f32(payload, static_cast<float>(v));
    }
    jn["params"] = std::move(params);
    nodes.push_back(std::move(jn));
  }
  manifest["nodes"] = std::move(nodes);
  const auto bin = payload_path(path);
  manifest["payload"] = {{"file", bin.filename().string()}, {"dtype", "float32-le"}, {"bytes", payload.size()}};

  std::ofstream mf(path, std::ios::binary | std::ios::trunc);
  std::ofstream pf(bin, std::ios::binary | std::ios::trunc);
  if (!mf || !pf) throw CheckpointError(CheckpointError::Kind::io, "cannot write checkpoint " + path.string());
  mf << manifest.dump(2) << '\n';
  pf.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  if (!mf || !pf) throw CheckpointError(CheckpointError::Kind::io, "failed writing checkpoint " + path.string());
}

template <class T = float>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path) {
  using Kind = CheckpointError::Kind;
  std::ifstream mf(path);
  if (!mf) throw CheckpointError(Kind::io, "cannot open checkpoint manifest " + path.string());
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(mf);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(Kind::format, "checkpoint manifest is not valid JSON: " + std::string(e.what()));
  }
  Checkpoint<T> ck;
  std::vector<unsigned char> payload;
  try {
    const auto fmt = m.at("format").get<std::string>();
    if (fmt != kCheckpointFormat) {
      throw CheckpointError(Kind::version,
                            "checkpoint format '" + fmt + "' is not supported (expected " + kCheckpointFormat + ")");
    }
    auto& g = ck.graph;
    g.input_channels = m.at("input").at("channels");
    g.input_side = m.at("input").at("side");
    if (!m.at("build").is_null()) g.config = detail::config_from_json(m.at("build"));
    ck.meta.class_names = m.at("class_names").get<std::vector<std::string>>();
    const auto& pp = m.at("preprocess");
    ck.meta.preprocess = {pp.at("clahe"), pp.at("clip_limit"), pp.at("tiles")};

    const auto bin = path.parent_path() / m.at("payload").at("file").get<std::string>();
    std::ifstream pf(bin, std::ios::binary);
    if (!pf) throw CheckpointError(Kind::io, "cannot open checkpoint payload " + bin.string());
    payload.assign(std::istreambuf_iterator<char>(pf), std::istreambuf_iterator<char>());

    std::size_t expected_offset = 0;
    for (const auto& jn : m.at("nodes")) {
      const auto name = jn.at("name").get<std::string>();
      detail::append_node(g, name, layer_kind_from_string(jn.at("kind")), jn.at("config"));
      const auto& mparams = jn.at("params");
      const auto slots = NetworkGraph<T>::param_slots(g.nodes.back());
      if (mparams.size() != slots) {
        throw CheckpointError(Kind::shape, "node " + name + ": manifest lists " + std::to_string(mparams.size()) +
                                               " parameters, config implies " + std::to_string(slots));
      }
      auto refs = g.params();
      for (std::size_t k = 0; k < slots; ++k) {
        auto& ref = refs[refs.size() - slots + k];
        const auto& jp = mparams[k];
        const auto shape = jp.at("shape").get<Shape>();
        if (shape != ref.tensor->shape() || jp.at("count").get<std::size_t>() != ref.tensor->size()) {
          throw CheckpointError(Kind::shape, "parameter " + ref.name + ": manifest shape " + shape_string(shape) +
                                                 " disagrees with node config " +
                                                 shape_string(ref.tensor->shape()));
        }
        if (jp.at("offset").get<std::size_t>() != expected_offset) {
          throw CheckpointError(Kind::format, "parameter " + ref.name + ": offset out of sequence");
        }
        const std::size_t bytes = 4 * ref.tensor->size();
        if (expected_offset + bytes > payload.size()) {
          throw CheckpointError(Kind::truncated, "checkpoint payload truncated: parameter " + ref.name + " needs bytes [" +
                                                     std::to_string(expected_offset) + "," +
                                                     std::to_string(expected_offset + bytes) + ") of " +
                                                     std::to_string(payload.size()));
        }
        for (std::size_t i = 0; i < ref.tensor->size(); ++i) {
          (*ref.tensor)[i] = static_cast<T>(detail::get_f32(payload.data() + expected_offset + 4 * i));
        }
        expected_offset += bytes;
      }
    }
    if (payload.size() != expected_offset || m.at("payload").at("bytes").get<std::size_t>() != expected_offset) {
      throw CheckpointError(Kind::truncated, "checkpoint payload length " + std::to_string(payload.size()) +
                                                 " does not match the " + std::to_string(expected_offset) +
                                                 " bytes the manifest describes");
    }
    g.classes = m.at("classes");
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(Kind::format, "malformed checkpoint manifest: " + std::string(e.what()));
  } catch (const ShapeError& e) {
    throw CheckpointError(Kind::shape, e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(Kind::format, e.what());
  }
  try {
    ck.graph.infer_shapes();
  } catch (const ShapeError& e) {
    throw CheckpointError(Kind::shape, std::string("checkpoint topology is inconsistent: ") + e.what());
  }
  return ck;
}

}  // namespace cbamvgg
