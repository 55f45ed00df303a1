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

// Cross-entropy with L2 weight decay, SGD with momentum, and the epoch loop.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "cbamvgg/checkpoint.hpp"
#include "cbamvgg/datapipe.hpp"
#include "cbamvgg/error.hpp"
#include "cbamvgg/metrics.hpp"
#include "cbamvgg/model.hpp"
#include "cbamvgg/tensor.hpp"
#include "json.hpp"

namespace cbamvgg {

inline constexpr double kLogFloor = 1e-12;

template <class T>
BasicTensor<T> one_hot(const std::vector<int>& labels, std::size_t k) {
  BasicTensor<T> y({labels.size(), k});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) {
      throw DataError("label " + std::to_string(labels[i]) + " outside [0," + std::to_string(k) + ")");
    }
    y.at(i, static_cast<std::size_t>(labels[i])) = T(1);
  }
  return y;
}

// Mean over rows of -sum y log(max(p, 1e-12)).
template <class T>
double cross_entropy(const BasicTensor<T>& probs, const BasicTensor<T>& onehot) {
  require_rank(probs, 2, "cross_entropy");
  if (onehot.shape() != probs.shape()) throw ShapeError("cross_entropy: one-hot shape differs from probabilities");
  const std::size_t n = probs.dim(0), k = probs.dim(1);
  if (n == 0) throw ShapeError("cross_entropy: empty batch");
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t ones = 0;
    for (std::size_t c = 0; c < k; ++c) {
      const double y = static_cast<double>(onehot.at(i, c));
      if (y == 1.0) {
        ++ones;
        total -= std::log(std::max(static_cast<double>(probs.at(i, c)), kLogFloor));
      } else if (y != 0.0) {
        throw DataError("cross_entropy: row " + std::to_string(i) + " is not one-hot");
      }
    }
    if (ones != 1) throw DataError("cross_entropy: row " + std::to_string(i) + " is not one-hot");
  }
  return total / static_cast<double>(n);
}

// Gradient of the mean cross-entropy with respect to the softmax logits.
template <class T>
BasicTensor<T> cross_entropy_logit_grad(const BasicTensor<T>& probs, const BasicTensor<T>& onehot) {
  if (onehot.shape() != probs.shape()) throw ShapeError("cross_entropy: one-hot shape differs from probabilities");
  BasicTensor<T> g(probs.shape());
  const double inv = 1.0 / static_cast<double>(probs.dim(0));
  for (std::size_t i = 0; i < g.size(); ++i)
    g[i] = static_cast<T>((static_cast<double>(probs[i]) - static_cast<double>(onehot[i])) * inv);
  return g;
}

struct LossConfig {
  double lambda = 1e-4;
};

// lambda / (2N) times the squared norm of every weight tensor (biases excluded).
template <class T>
double l2_penalty(const NetworkGraph<T>& g, double lambda, std::size_t n) {
  if (n == 0) throw ConfigError("l2_penalty: sample count must be at least 1");
  double s = 0;
  for (const auto& p : g.params())
    if (p.is_weight) s += squared_norm(*p.tensor);
  return lambda / (2.0 * static_cast<double>(n)) * s;
}

template <class T>
struct SgdState {
  double momentum = 0.9;
  std::vector<BasicTensor<T>> velocity;  // aligned with NetworkGraph::params(); created on first step
};

struct StepResult {
  double loss = 0;  // cross-entropy + penalty, before the update
  double cross_entropy = 0;
  double penalty = 0;
  std::size_t correct = 0;
};

// Gradient of the full objective; the model's output must be probabilities.
template <class T>
std::vector<BasicTensor<T>> objective_gradients(const NetworkGraph<T>& g, const BasicTensor<T>& batch,
                                                const std::vector<int>& labels, const LossConfig& cfg,
                                                StepResult* info = nullptr) {
  if (g.nodes.empty() || g.nodes.back().kind() != LayerKind::softmax) {
    throw ConfigError("training requires a graph that ends in softmax");
  }
  if (labels.size() != batch.dim(0)) throw ShapeError("train_step: label count does not match batch");
  auto fwd = forward(g, batch, true);
  const auto y = one_hot<T>(labels, g.classes);
  const std::size_t n = labels.size();
  StepResult r;
  r.cross_entropy = cross_entropy(fwd.output, y);
  r.penalty = l2_penalty(g, cfg.lambda, n);
  r.loss = r.cross_entropy + r.penalty;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < g.classes; ++c)
      if (fwd.output.at(i, c) > fwd.output.at(i, best)) best = c;
    r.correct += static_cast<int>(best) == labels[i];
  }
  if (!std::isfinite(r.loss)) {
    throw NumericError("non-finite loss " + std::to_string(r.loss), static_cast<std::ptrdiff_t>(g.logits_node()));
  }
  const auto top = g.logits_node();
  auto grads = backward(g, fwd.trace, top, cross_entropy_logit_grad(fwd.output, y), 0, true);
  const auto refs = g.params();
  const double decay = cfg.lambda / static_cast<double>(n);
  for (std::size_t p = 0; p < refs.size(); ++p) {
    auto& gp = grads.params[p];
    if (refs[p].is_weight && decay != 0.0) {
      const auto w = refs[p].tensor->data();
      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] = static_cast<T>(gp[i] + decay * w[i]);
    }
    if (!gp.all_finite()) {
      const auto node = g.find(refs[p].name.substr(0, refs[p].name.find('.')));
      throw NumericError("non-finite gradient in " + refs[p].name, node);
    }
  }
  if (info) *info = r;
  return std::move(grads.params);
}

// One SGD-with-momentum update: v = mu v + grad; w -= lr v.
template <class T>
StepResult train_step(NetworkGraph<T>& g, const BasicTensor<T>& batch, const std::vector<int>& labels,
                      SgdState<T>& state, double lr, const LossConfig& cfg) {
  StepResult r;
  auto grads = objective_gradients(g, batch, labels, cfg, &r);
  auto refs = g.params();
  if (state.velocity.size() != refs.size()) {
    state.velocity.clear();
    for (const auto& p : refs) state.velocity.emplace_back(p.tensor->shape());
  }
  for (std::size_t p = 0; p < refs.size(); ++p) {
    auto& v = state.velocity[p];
    auto w = refs[p].tensor->data();
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = static_cast<T>(state.momentum * v[i] + grads[p][i]);
      w[i] = static_cast<T>(w[i] - lr * v[i]);
    }
  }
  return r;
}

// ---------------------------------------------------------------------------

// Class probabilities for the listed samples, in list order.
template <class T>
BasicTensor<T> predict(const NetworkGraph<T>& g, const std::vector<Sample<T>>& samples,
                       const std::vector<std::size_t>& indices, std::size_t batch_size = 32) {
  BasicTensor<T> out({indices.size(), g.classes});
  BatchIterator<T> it(samples, indices, batch_size);
  std::size_t row = 0;
  while (auto b = it.next()) {
    const auto p = forward(g, b->images).output;
    std::copy(p.data().begin(), p.data().end(), out.data().begin() + row * g.classes);
    row += b->labels.size();
  }
  return out;
}

template <class T>
EvalReport evaluate(const NetworkGraph<T>& g, const std::vector<Sample<T>>& samples,
                    const std::vector<std::size_t>& indices, std::vector<std::string> class_names = {},
                    std::size_t batch_size = 32) {
  const auto probs = predict(g, samples, indices, batch_size);
  std::vector<int> truth;
  for (auto i : indices) truth.push_back(samples[i].label);
  const double loss = cross_entropy(probs, one_hot<T>(truth, g.classes));
  return make_report(probs, truth, loss, std::move(class_names));
}

struct FitConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 16;
  double lr = 0.01;
  double momentum = 0.9;
  LossConfig loss;
  std::size_t plateau_patience = 3;  // epochs without train-loss improvement before decay
  double decay_factor = 0.1;
  std::uint64_t seed = 1;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double lr = 0;
  double train_loss = 0;
  double train_acc = 0;
  double test_loss = 0;
  double test_acc = 0;
  double wall_seconds = 0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_test_acc = -1;

  nlohmann::ordered_json to_json(bool with_time = true) const {
    nlohmann::ordered_json j;
    j["best_epoch"] = best_epoch;
    j["best_test_acc"] = best_test_acc;
    auto& arr = j["epochs"] = nlohmann::ordered_json::array();
    for (const auto& e : epochs) {
      nlohmann::ordered_json r{{"epoch", e.epoch},           {"lr", e.lr},
                               {"train_loss", e.train_loss}, {"train_acc", e.train_acc},
                               {"test_loss", e.test_loss},   {"test_acc", e.test_acc}};
      if (with_time) r["wall_seconds"] = e.wall_seconds;
      arr.push_back(r);
    }
    return j;
  }
};

struct FitHooks {
  // Called after each epoch with the record just appended.
  std::function<void(const EpochRecord&)> on_epoch;
  // Called when the test accuracy improves on all earlier epochs.
  std::function<void(const EpochRecord&)> on_best;
};

// Trains in place. Batches are reshuffled every epoch from (seed, epoch).
template <class T>
TrainHistory fit(NetworkGraph<T>& g, const std::vector<Sample<T>>& samples, const DatasetSplit& split,
                 const FitConfig& cfg, const FitHooks& hooks = {}) {
  if (cfg.epochs == 0) throw ConfigError("epochs must be at least 1");
  if (cfg.batch_size == 0) throw ConfigError("batch size must be at least 1");
  if (!(cfg.lr >= 0) || !std::isfinite(cfg.lr)) throw ConfigError("learning rate must be finite and non-negative");
  if (!(cfg.loss.lambda >= 0) || !std::isfinite(cfg.loss.lambda)) throw ConfigError("lambda must be non-negative");
  TrainHistory h;
  SgdState<T> opt;
  opt.momentum = cfg.momentum;
  double lr = cfg.lr;
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t e = 1; e <= cfg.epochs; ++e) {
    BatchIterator<T> it(samples, split.train, cfg.batch_size, cfg.seed * 1000003ULL + e);
    double loss_sum = 0;
    std::size_t correct = 0, seen = 0;
    while (auto b = it.next()) {
      const auto r = train_step(g, b->images, b->labels, opt, lr, cfg.loss);
      loss_sum += r.loss * static_cast<double>(b->labels.size());
      correct += r.correct;
      seen += b->labels.size();
    }
    EpochRecord rec;
    rec.epoch = e;
    rec.lr = lr;
    rec.train_loss = loss_sum / static_cast<double>(seen);
    rec.train_acc = static_cast<double>(correct) / static_cast<double>(seen);
    if (!split.test.empty()) {
      const auto rep = evaluate(g, samples, split.test);
      rec.test_loss = rep.loss;
      rec.test_acc = rep.acc;
    }
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    h.epochs.push_back(rec);
    if (rec.test_acc > h.best_test_acc) {
      h.best_test_acc = rec.test_acc;
      h.best_epoch = e;
      if (hooks.on_best) hooks.on_best(rec);
    }
    if (hooks.on_epoch) hooks.on_epoch(rec);
    if (rec.train_loss < best_loss) {
      best_loss = rec.train_loss;
      stale = 0;
    } else if (++stale >= cfg.plateau_patience) {
      lr *= cfg.decay_factor;
      stale = 0;
    }
  }
  return h;
}

}  // namespace cbamvgg
