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

// Command-line front end. Every subcommand writes under --out:
//   split/        split manifest
//   checkpoints/  best.json and final.json (+ .bin payloads)
//   reports/      history, timing and evaluation reports
//   heatmaps/     explanation images and optional text grids
//   embeddings/   t-SNE coordinates and scatter plot

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "cbamvgg/checkpoint.hpp"
#include "cbamvgg/embed.hpp"
#include "cbamvgg/explain.hpp"
#include "cbamvgg/heatmap.hpp"
#include "cbamvgg/synthetic.hpp"
#include "cbamvgg/trainer.hpp"

namespace cbamvgg::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

enum ExitCode : int { kOk = 0, kInternal = 1, kConfig = 2, kData = 3, kNumeric = 4 };

struct RunConfig {
  std::string command;
  std::string data;
  std::string out = "out";
  std::string profile = "mini";
  std::size_t input_side = 32;
  double width_multiplier = 1.0;
  std::size_t reduction_ratio = kDefaultReductionRatio;
  bool ablate = false;
  bool clahe = true;
  std::size_t epochs = 20;
  std::size_t batch = 16;
  double lr = 0.01;
  double lambda = 1e-4;
  double momentum = 0.9;
  std::size_t patience = 3;
  double split_ratio = 0.8;
  std::uint64_t seed = 1;
  std::string checkpoint;
  std::string part = "test";
  std::string image;
  std::string method;
  std::string composite;
  std::string layer;
  int class_id = -1;  // -1: the predicted class
  bool grid = false;
  double perplexity = 30.0;
  std::size_t iterations = 1000;
  std::size_t per_class = 100;
};

// Keys accepted in a config file; the same names as the long flags.
inline void apply_config_file(RunConfig& c, const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config file " + path.string() + " must hold a JSON object");
  const std::map<std::string, std::function<void(const nlohmann::json&)>> setters{
      {"data", [&](const auto& v) { c.data = v.template get<std::string>(); }},
      {"out", [&](const auto& v) { c.out = v.template get<std::string>(); }},
      {"profile", [&](const auto& v) { c.profile = v.template get<std::string>(); }},
      {"input-side", [&](const auto& v) { c.input_side = v.template get<std::size_t>(); }},
      {"width-multiplier", [&](const auto& v) { c.width_multiplier = v.template get<double>(); }},
      {"reduction-ratio", [&](const auto& v) { c.reduction_ratio = v.template get<std::size_t>(); }},
      {"ablate", [&](const auto& v) { c.ablate = v.template get<bool>(); }},
      {"clahe", [&](const auto& v) { c.clahe = v.template get<bool>(); }},
      {"epochs", [&](const auto& v) { c.epochs = v.template get<std::size_t>(); }},
      {"batch", [&](const auto& v) { c.batch = v.template get<std::size_t>(); }},
      {"lr", [&](const auto& v) { c.lr = v.template get<double>(); }},
      {"lambda", [&](const auto& v) { c.lambda = v.template get<double>(); }},
      {"momentum", [&](const auto& v) { c.momentum = v.template get<double>(); }},
      {"patience", [&](const auto& v) { c.patience = v.template get<std::size_t>(); }},
      {"split-ratio", [&](const auto& v) { c.split_ratio = v.template get<double>(); }},
      {"seed", [&](const auto& v) { c.seed = v.template get<std::uint64_t>(); }},
      {"checkpoint", [&](const auto& v) { c.checkpoint = v.template get<std::string>(); }},
      {"part", [&](const auto& v) { c.part = v.template get<std::string>(); }},
      {"image", [&](const auto& v) { c.image = v.template get<std::string>(); }},
      {"method", [&](const auto& v) { c.method = v.template get<std::string>(); }},
      {"composite", [&](const auto& v) { c.composite = v.template get<std::string>(); }},
      {"layer", [&](const auto& v) { c.layer = v.is_string() ? v.template get<std::string>() : v.dump(); }},
      {"class", [&](const auto& v) { c.class_id = v.template get<int>(); }},
      {"grid", [&](const auto& v) { c.grid = v.template get<bool>(); }},
      {"perplexity", [&](const auto& v) { c.perplexity = v.template get<double>(); }},
      {"iterations", [&](const auto& v) { c.iterations = v.template get<std::size_t>(); }},
      {"per-class", [&](const auto& v) { c.per_class = v.template get<std::size_t>(); }},
  };
  for (const auto& [key, value] : j.items()) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("config file " + path.string() + ": unknown key '" + key + "'");
    try {
      it->second(value);
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("config file " + path.string() + ": key '" + key + "' has the wrong type");
    }
  }
}

inline const std::vector<std::string>& explain_methods() {
  static const std::vector<std::string> m{"attention", "gradcam", "gradcampp", "lrp"};
  return m;
}

// Checks everything that does not need the data or a checkpoint.
inline void validate(const RunConfig& c) {
  auto need = [&](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  const auto& cmd = c.command;
  if (cmd == "train" || cmd == "eval" || cmd == "embed") need(!c.data.empty(), cmd + " requires --data");
  if (cmd == "eval" || cmd == "explain" || cmd == "embed") need(!c.checkpoint.empty(), cmd + " requires --checkpoint");
  need(!c.out.empty(), "--out must not be empty");
  if (cmd == "train") {
    profile_from_string(c.profile);
    need(c.profile != "custom", "--profile must be mini or vgg16");
    need(c.input_side >= 32 && c.input_side % 32 == 0, "--input-side must be a positive multiple of 32");
    need(c.width_multiplier > 0, "--width-multiplier must be positive");
    need(c.reduction_ratio >= 1, "--reduction-ratio must be at least 1");
    need(c.epochs >= 1, "--epochs must be at least 1");
    need(c.batch >= 1, "--batch must be at least 1");
    need(c.lr > 0 && std::isfinite(c.lr), "--lr must be positive");
    need(c.lambda >= 0 && std::isfinite(c.lambda), "--lambda must be non-negative");
    need(c.momentum >= 0 && c.momentum < 1, "--momentum must lie in [0,1)");
    need(c.patience >= 1, "--patience must be at least 1");
  }
  if (cmd == "train" || cmd == "eval" || cmd == "embed") {
    need(c.split_ratio > 0 && c.split_ratio < 1, "--split-ratio must lie strictly between 0 and 1");
  }
  if (cmd == "eval" || cmd == "embed") {
    need(c.part == "train" || c.part == "test" || c.part == "all", "--part must be train, test or all");
  }
  if (cmd == "explain") {
    need(!c.image.empty(), "explain requires --image");
    const auto& ms = explain_methods();
    need(std::find(ms.begin(), ms.end(), c.method) != ms.end(),
         "--method must be one of attention, gradcam, gradcampp, lrp (got '" + c.method + "')");
    if (c.method == "lrp") {
      need(!c.composite.empty(), "--method lrp requires --composite; valid names: " + joined_composite_names());
      const auto& names = composite_names();
      need(std::find(names.begin(), names.end(), c.composite) != names.end(),
           "unknown composite '" + c.composite + "'; valid names: " + joined_composite_names());
    } else {
      need(c.composite.empty(), "--composite only applies to --method lrp");
    }
    need(c.class_id >= -1, "--class must be a class index");
  }
  if (cmd == "embed") {
    need(c.method.empty() || c.method == "tsne",
         c.method == "umap" ? "UMAP is not supported; use --method tsne" : "--method must be tsne for embed");
    need(c.perplexity >= 1 && std::isfinite(c.perplexity), "--perplexity must be at least 1");
    need(c.iterations >= 1, "--iterations must be at least 1");
  }
  if (cmd == "synth") need(c.per_class >= 2, "--per-class must be at least 2");
}

inline void write_json(const fs::path& path, const ordered_json& j) {
  fs::create_directories(path.parent_path());
  std::ofstream f(path);
  f << j.dump(2) << "\n";
  if (!f) throw DataError("cannot write " + path.string());
}

inline DatasetSplit dataset_split(const RunConfig& c, const DatasetIndex& idx) {
  return split(idx.labels(), c.split_ratio, c.seed, idx.class_names);
}

inline std::vector<std::size_t> select_part(const RunConfig& c, const DatasetSplit& s, std::size_t n) {
  if (c.part == "train") return s.train;
  if (c.part == "test") return s.test;
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  return all;
}

inline Checkpoint<float> open_checkpoint(const RunConfig& c) { return load_checkpoint<float>(c.checkpoint); }

inline void check_classes(const CheckpointMeta& meta, const DatasetIndex& idx) {
  if (!meta.class_names.empty() && meta.class_names != idx.class_names) {
    throw DataError("dataset classes do not match the checkpoint's classes");
  }
}

inline int cmd_train(const RunConfig& c, std::ostream& log) {
  const fs::path out = c.out;
  const auto idx = scan_dataset(c.data);
  const PreprocessOptions pre{c.clahe};
  ModelConfig mc;
  mc.profile = profile_from_string(c.profile);
  mc.input_side = c.input_side;
  mc.classes = idx.class_names.size();
  mc.width_multiplier = c.width_multiplier;
  mc.reduction_ratio = c.reduction_ratio;
  mc.seed = c.seed;
  mc.ablate_cbam = c.ablate;
  auto g = build_cbam_vgg<float>(mc);
  const auto samples = load_samples<float>(idx, c.input_side, pre);
  const auto sp = dataset_split(c, idx);
  write_json(out / "split" / "split.json", split_manifest(sp, idx, c.data));

  FitConfig fc;
  fc.epochs = c.epochs;
  fc.batch_size = c.batch;
  fc.lr = c.lr;
  fc.momentum = c.momentum;
  fc.loss.lambda = c.lambda;
  fc.plateau_patience = c.patience;
  fc.seed = c.seed;
  const CheckpointMeta meta{idx.class_names, pre};
  const fs::path best = out / "checkpoints" / "best.json";
  fs::create_directories(best.parent_path());
  FitHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& r) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "epoch %zu/%zu lr %.4g train_loss %.4f train_acc %.4f test_loss %.4f test_acc %.4f\n",
                  r.epoch, c.epochs, r.lr, r.train_loss, r.train_acc, r.test_loss, r.test_acc);
    log << buf << std::flush;
  };
  hooks.on_best = [&](const EpochRecord&) { save_checkpoint(g, best, meta); };
  const auto history = fit(g, samples, sp, fc, hooks);
  save_checkpoint(g, out / "checkpoints" / "final.json", meta);

  auto j = history.to_json(false);
  j["config"] = {{"profile", c.profile},   {"input_side", c.input_side}, {"width_multiplier", c.width_multiplier},
                 {"ablate", c.ablate},     {"clahe", c.clahe},           {"epochs", c.epochs},
                 {"batch", c.batch},       {"lr", c.lr},                 {"lambda", c.lambda},
                 {"momentum", c.momentum}, {"patience", c.patience},     {"seed", c.seed}};
  write_json(out / "reports" / "history.json", j);
  ordered_json timing = ordered_json::array();
  for (const auto& e : history.epochs) timing.push_back({{"epoch", e.epoch}, {"wall_seconds", e.wall_seconds}});
  write_json(out / "reports" / "timing.json", timing);

  const auto best_model = load_checkpoint<float>(best).graph;
  const auto report = evaluate(best_model, samples, sp.test, idx.class_names);
  write_json(out / "reports" / "eval_test.json", report.to_json());
  log << "best epoch " << history.best_epoch << ": " << report.summary_line() << "\n";
  return kOk;
}

inline int cmd_eval(const RunConfig& c, std::ostream& log) {
  const auto ck = open_checkpoint(c);
  const auto idx = scan_dataset(c.data);
  check_classes(ck.meta, idx);
  const auto samples = load_samples<float>(idx, ck.graph.input_side, ck.meta.preprocess);
  const auto sp = dataset_split(c, idx);
  const auto part = select_part(c, sp, samples.size());
  const auto report = evaluate(ck.graph, samples, part, idx.class_names);
  write_json(fs::path(c.out) / "reports" / ("eval_" + c.part + ".json"), report.to_json());
  log << report.summary_line() << "\n";
  return kOk;
}

inline Image attention_panel(const StageAttention& a, const Image& base) {
  return hconcat({render_heatmap(a.spatial_display, base, HeatmapMode::overlay, false),
                  render_heatmap(a.channel_display, base, HeatmapMode::overlay, false)});
}

inline int cmd_explain(const RunConfig& c, std::ostream& log) {
  const auto ck = open_checkpoint(c);
  const auto& g = ck.graph;
  const auto x = prepare_image<float>(read_image(c.image), g.input_side, ck.meta.preprocess);
  const auto base = tensor_to_image(x);
  const auto probs = forward(g, x.reshaped({1, 3, g.input_side, g.input_side})).output;
  std::size_t pred = 0;
  for (std::size_t k = 1; k < g.classes; ++k)
    if (probs[k] > probs[pred]) pred = k;
  if (c.class_id >= static_cast<int>(g.classes)) {
    throw ConfigError("--class " + std::to_string(c.class_id) + " outside [0," + std::to_string(g.classes) + ")");
  }
  const int target = c.class_id >= 0 ? c.class_id : static_cast<int>(pred);
  std::optional<std::size_t> layer;
  if (!c.layer.empty()) layer = resolve_layer(g, c.layer);

  const fs::path dir = fs::path(c.out) / "heatmaps";
  fs::create_directories(dir);
  const std::string stem = fs::path(c.image).stem().string();
  std::vector<fs::path> written;
  auto emit = [&](const std::string& name, const Image& img, const TensorD* map) {
    write_png(dir / (name + ".png"), img);
    written.push_back(dir / (name + ".png"));
    if (c.grid && map) write_text(dir / (name + ".txt"), grid_text(*map));
  };
  if (c.method == "attention") {
    for (const auto& a : attention_maps(g, x)) {
      emit(stem + "_attention_stage" + std::to_string(a.stage), attention_panel(a, base), &a.spatial_gate);
    }
  } else if (c.method == "lrp") {
    const auto m = lrp(g, x, target, make_composite(c.composite, g));
    const auto spatial = m.spatial();
    emit(stem + "_lrp_" + c.composite, render_heatmap(spatial, base, HeatmapMode::overlay, true), &spatial);
  } else {
    const auto m = c.method == "gradcam" ? grad_cam(g, x, target, layer) : grad_cam_pp(g, x, target, layer);
    emit(stem + "_" + c.method, render_heatmap(m.values, base, HeatmapMode::overlay, false), &m.values);
  }
  const auto name = [&](std::size_t k) {
    return k < ck.meta.class_names.size() ? ck.meta.class_names[k] : std::to_string(k);
  };
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", probs[pred]);
  log << "predicted " << name(pred) << " (class " << pred << ") probability " << buf << "\n";
  log << "explained class " << name(static_cast<std::size_t>(target)) << "\n";
  for (const auto& p : written) log << "wrote " << p.string() << "\n";
  return kOk;
}

inline int cmd_embed(const RunConfig& c, std::ostream& log) {
  const auto ck = open_checkpoint(c);
  const auto idx = scan_dataset(c.data);
  check_classes(ck.meta, idx);
  const auto samples = load_samples<float>(idx, ck.graph.input_side, ck.meta.preprocess);
  const auto sp = dataset_split(c, idx);
  const auto part = select_part(c, sp, samples.size());
  check_perplexity(c.perplexity, part.size());
  std::optional<std::size_t> layer;
  if (!c.layer.empty()) layer = resolve_layer(ck.graph, c.layer);
  const auto f = extract_features(ck.graph, samples, part, layer);
  TsneOptions opt;
  opt.perplexity = c.perplexity;
  opt.iterations = c.iterations;
  opt.exaggeration_iterations = std::min(opt.exaggeration_iterations, c.iterations);
  opt.seed = c.seed;
  const auto e = tsne(f.rows, opt);
  const fs::path dir = fs::path(c.out) / "embeddings";
  fs::create_directories(dir);
  std::vector<std::string> rel;
  for (const auto& s : f.sources) rel.push_back(fs::relative(s, c.data).generic_string());
  write_text(dir / "embedding.csv", embedding_csv(e, f.labels, rel));
  write_png(dir / "scatter.png", scatter_plot(e.coords, f.labels));
  ordered_json meta{{"layer", f.layer},          {"rows", f.rows.dim(0)},           {"features", f.rows.dim(1)},
                    {"part", c.part},            {"perplexity", opt.perplexity},    {"iterations", opt.iterations},
                    {"seed", opt.seed},          {"learning_rate", opt.learning_rate}, {"init_sigma", opt.init_sigma},
                    {"kl", e.kl},                {"knn5_purity", f.rows.dim(0) > 5 ? knn_purity(e.coords, f.labels) : 0.0},
                    {"class_names", idx.class_names}};
  write_json(dir / "embedding.json", meta);
  log << "embedded " << f.rows.dim(0) << " samples from " << f.layer << " (d=" << f.rows.dim(1) << "), KL "
      << e.kl << "\n";
  return kOk;
}

inline int cmd_synth(const RunConfig& c, std::ostream& log) {
  SyntheticOptions so;
  so.side = c.input_side;
  so.per_class = c.per_class;
  so.seed = c.seed;
  write_lesion_dataset(make_lesion_dataset(so), c.out);
  log << "wrote " << 4 * c.per_class << " images to " << c.out << "\n";
  return kOk;
}

inline int dispatch(const RunConfig& c, std::ostream& log) {
  if (c.command == "train") return cmd_train(c, log);
  if (c.command == "eval") return cmd_eval(c, log);
  if (c.command == "explain") return cmd_explain(c, log);
  if (c.command == "embed") return cmd_embed(c, log);
  return cmd_synth(c, log);
}

// Parses argv, applies the config file underneath explicit flags, validates
// and runs. Diagnostics go to `err` as a single line.
inline int run(int argc, const char* const* argv, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"CBAM-VGG training, evaluation and explanation"};
  app.require_subcommand(1, 1);
  RunConfig flags;
  std::string config_file;
  // Each option copies its value into the merged config when given.
  std::vector<std::pair<CLI::Option*, std::function<void(RunConfig&)>>> given;
  auto add = [&](CLI::App* sub, const std::string& name, auto RunConfig::*field, const std::string& help) {
    auto* opt = sub->add_option("--" + name, flags.*field, help);
    given.emplace_back(opt, [&flags, field](RunConfig& dst) { dst.*field = flags.*field; });
  };
  auto add_flag = [&](CLI::App* sub, const std::string& name, bool RunConfig::*field, const std::string& help) {
    auto* opt = sub->add_flag("--" + name + ",!--no-" + name, flags.*field, help);
    given.emplace_back(opt, [&flags, field](RunConfig& dst) { dst.*field = flags.*field; });
  };

  auto common = [&](CLI::App* s) {
    s->add_option("--config", config_file, "JSON file of option values; flags override it");
    add(s, "out", &RunConfig::out, "output directory");
    add(s, "seed", &RunConfig::seed, "seed for initialization, split, shuffling and embedding");
  };
  auto data_opts = [&](CLI::App* s) {
    add(s, "data", &RunConfig::data, "dataset root: one sub-directory of images per class");
    add(s, "split-ratio", &RunConfig::split_ratio, "fraction of each class used for training");
  };

  auto* train = app.add_subcommand("train", "train a model and write checkpoints and reports");
  common(train);
  data_opts(train);
  add(train, "profile", &RunConfig::profile, "mini or vgg16");
  add(train, "input-side", &RunConfig::input_side, "network input side in pixels");
  add(train, "width-multiplier", &RunConfig::width_multiplier, "scales every conv width");
  add(train, "reduction-ratio", &RunConfig::reduction_ratio, "channel attention reduction ratio");
  add_flag(train, "ablate", &RunConfig::ablate, "force every attention gate to 1");
  add_flag(train, "clahe", &RunConfig::clahe, "contrast-limited histogram equalization before resizing");
  add(train, "epochs", &RunConfig::epochs, "training epochs");
  add(train, "batch", &RunConfig::batch, "batch size");
  add(train, "lr", &RunConfig::lr, "initial learning rate");
  add(train, "lambda", &RunConfig::lambda, "L2 penalty weight");
  add(train, "momentum", &RunConfig::momentum, "SGD momentum");
  add(train, "patience", &RunConfig::patience, "epochs without train-loss improvement before the rate drops 10x");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset part");
  common(eval);
  data_opts(eval);
  add(eval, "checkpoint", &RunConfig::checkpoint, "checkpoint manifest (.json)");
  add(eval, "part", &RunConfig::part, "train, test or all");

  auto* explain = app.add_subcommand("explain", "write explanation heatmaps for one image");
  common(explain);
  add(explain, "checkpoint", &RunConfig::checkpoint, "checkpoint manifest (.json)");
  add(explain, "image", &RunConfig::image, "PNG or PPM image");
  add(explain, "method", &RunConfig::method, "attention, gradcam, gradcampp or lrp");
  add(explain, "composite", &RunConfig::composite, "LRP rule composite: " + joined_composite_names());
  add(explain, "layer", &RunConfig::layer, "Grad-CAM target layer name or index");
  add(explain, "class", &RunConfig::class_id, "class to explain (default: the predicted one)");
  add_flag(explain, "grid", &RunConfig::grid, "also dump each map as a text grid");

  auto* embed = app.add_subcommand("embed", "project features to 2-D with t-SNE");
  common(embed);
  data_opts(embed);
  add(embed, "checkpoint", &RunConfig::checkpoint, "checkpoint manifest (.json)");
  add(embed, "part", &RunConfig::part, "train, test or all");
  add(embed, "layer", &RunConfig::layer, "feature layer name or index (default: the classifier input)");
  add(embed, "perplexity", &RunConfig::perplexity, "t-SNE perplexity");
  add(embed, "iterations", &RunConfig::iterations, "t-SNE iterations");
  add(embed, "method", &RunConfig::method, "tsne");

  auto* synth = app.add_subcommand("synth", "write the synthetic four-class lesion dataset");
  common(synth);
  add(synth, "per-class", &RunConfig::per_class, "images per class");
  add(synth, "input-side", &RunConfig::input_side, "image side in pixels");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, log, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, log, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kConfig;
  }

  try {
    RunConfig c;
    for (auto* s : {train, eval, explain, embed, synth})
      if (s->parsed()) c.command = s->get_name();
    if (!config_file.empty()) apply_config_file(c, config_file);
    for (const auto& [opt, copy] : given)
      if (opt->count() > 0) copy(c);
    validate(c);
    return dispatch(c, log);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const CheckpointError& e) {
    err << "checkpoint error: " << e.what() << "\n";
    return kConfig;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  } catch (const ShapeError& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kInternal;
  }
}

}  // namespace cbamvgg::cli
