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

// Classification metrics. Per-class rates are macro-averaged; a 0/0 rate is
// taken as 0 and counted in zero_division_warnings.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <string>
#include <vector>

#include "cbamvgg/error.hpp"
#include "cbamvgg/tensor.hpp"
#include "json.hpp"

namespace cbamvgg {

struct ConfusionMatrix {
  std::size_t classes = 0;
  std::vector<std::uint64_t> counts;  // row = true class, column = predicted

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::size_t k) : classes(k), counts(k * k, 0) {}
  ConfusionMatrix(std::size_t k, std::vector<std::uint64_t> c) : classes(k), counts(std::move(c)) {
    if (counts.size() != k * k) throw ShapeError("confusion matrix needs K*K entries");
  }

  std::uint64_t& at(std::size_t t, std::size_t p) { return counts[t * classes + p]; }
  std::uint64_t at(std::size_t t, std::size_t p) const { return counts[t * classes + p]; }
  std::uint64_t total() const { return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0}); }
  std::uint64_t trace() const {
    std::uint64_t s = 0;
    for (std::size_t k = 0; k < classes; ++k) s += at(k, k);
    return s;
  }
  std::uint64_t row_sum(std::size_t t) const {
    std::uint64_t s = 0;
    for (std::size_t p = 0; p < classes; ++p) s += at(t, p);
    return s;
  }
  std::uint64_t col_sum(std::size_t p) const {
    std::uint64_t s = 0;
    for (std::size_t t = 0; t < classes; ++t) s += at(t, p);
    return s;
  }
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

inline ConfusionMatrix confusion_matrix(const std::vector<int>& truth, const std::vector<int>& predicted,
                                        std::size_t k) {
  if (truth.size() != predicted.size()) throw ShapeError("confusion_matrix: label vectors differ in length");
  ConfusionMatrix m(k);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int t = truth[i], p = predicted[i];
    if (t < 0 || p < 0 || static_cast<std::size_t>(t) >= k || static_cast<std::size_t>(p) >= k) {
      throw DataError("confusion_matrix: label out of range [0," + std::to_string(k) + ") at position " +
                      std::to_string(i));
    }
    ++m.at(static_cast<std::size_t>(t), static_cast<std::size_t>(p));
  }
  return m;
}

struct ClassificationMetrics {
  double acc = 0, prec = 0, rec = 0, f1 = 0;
  std::vector<double> precision, recall, f1_per_class;
  std::size_t zero_division_warnings = 0;
};

inline ClassificationMetrics classification_metrics(const ConfusionMatrix& m) {
  if (m.classes == 0) throw ShapeError("classification_metrics: empty matrix");
  ClassificationMetrics r;
  const std::uint64_t n = m.total();
  r.acc = n ? static_cast<double>(m.trace()) / static_cast<double>(n) : 0.0;
  auto ratio = [&](std::uint64_t a, std::uint64_t b) {
    if (b == 0) {
      ++r.zero_division_warnings;
      return 0.0;
    }
    return static_cast<double>(a) / static_cast<double>(b);
  };
  for (std::size_t k = 0; k < m.classes; ++k) {
    const double p = ratio(m.at(k, k), m.col_sum(k));
    const double q = ratio(m.at(k, k), m.row_sum(k));
    r.precision.push_back(p);
    r.recall.push_back(q);
    r.f1_per_class.push_back(p + q > 0 ? 2 * p * q / (p + q) : 0.0);
  }
  const double kk = static_cast<double>(m.classes);
  r.prec = std::accumulate(r.precision.begin(), r.precision.end(), 0.0) / kk;
  r.rec = std::accumulate(r.recall.begin(), r.recall.end(), 0.0) / kk;
  r.f1 = std::accumulate(r.f1_per_class.begin(), r.f1_per_class.end(), 0.0) / kk;
  return r;
}

// Area under the ROC curve of `scores` against binary `positive` flags:
// threshold sweep over unique scores, trapezoids across tied blocks.
inline double binary_auc(const std::vector<double>& scores, const std::vector<bool>& positive) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
  double tp = 0, fp = 0, area = 0;
  for (std::size_t i = 0; i < order.size();) {
    double dtp = 0, dfp = 0;
    std::size_t j = i;
    for (; j < order.size() && scores[order[j]] == scores[order[i]]; ++j) (positive[order[j]] ? dtp : dfp) += 1;
    area += dfp * (tp + tp + dtp) / 2.0;
    tp += dtp;
    fp += dfp;
    i = j;
  }
  return area / (tp * fp);
}

template <class T>
double roc_auc_macro(const BasicTensor<T>& scores, const std::vector<int>& truth) {
  require_rank(scores, 2, "roc_auc_macro");
  const std::size_t n = scores.dim(0), k = scores.dim(1);
  if (truth.size() != n) throw ShapeError("roc_auc_macro: label count does not match score rows");
  double sum = 0;
  std::size_t used = 0;
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<double> s(n);
    std::vector<bool> pos(n);
    std::size_t np = 0;
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(scores.at(i, c));
      pos[i] = truth[i] == static_cast<int>(c);
      np += pos[i];
    }
    if (np == 0 || np == n) continue;
    sum += binary_auc(s, pos);
    ++used;
  }
  if (used == 0) throw DataError("roc_auc_macro: no class has both positive and negative samples");
  return sum / static_cast<double>(used);
}

inline double cohen_kappa(const ConfusionMatrix& m) {
  const std::uint64_t n = m.total();
  if (n == 0) throw DataError("cohen_kappa: empty confusion matrix");
  // Integer form of (p_o - p_e) / (1 - p_e) scaled by n^2.
  long double chance = 0;
  for (std::size_t k = 0; k < m.classes; ++k)
    chance += static_cast<long double>(m.row_sum(k)) * static_cast<long double>(m.col_sum(k));
  const long double nn = static_cast<long double>(n);
  const long double den = nn * nn - chance;
  if (den == 0) return 1.0;
  return static_cast<double>((nn * static_cast<long double>(m.trace()) - chance) / den);
}

struct EvalReport {
  ConfusionMatrix confusion;
  std::vector<std::string> class_names;
  std::size_t samples = 0;
  double loss = 0, acc = 0, prec = 0, rec = 0, f1 = 0, auc = 0, kappa = 0;
  std::size_t zero_division_warnings = 0;

  nlohmann::ordered_json metrics_json() const {
    return {{"LOSS", loss}, {"ACC", acc}, {"PREC", prec}, {"REC", rec}, {"F1", f1}, {"AUC", auc}, {"KAPPA", kappa}};
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["averaging"] = "macro";
    j["metrics"] = metrics_json();
    j["samples"] = samples;
    j["class_names"] = class_names;
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (std::size_t t = 0; t < confusion.classes; ++t) {
      std::vector<std::uint64_t> r(confusion.counts.begin() + t * confusion.classes,
                                   confusion.counts.begin() + (t + 1) * confusion.classes);
      rows.push_back(r);
    }
    j["confusion"] = rows;
    j["zero_division_warnings"] = zero_division_warnings;
    return j;
  }

  std::string summary_line() const {
    char buf[256];
    std::snprintf(buf, sizeof buf, "LOSS %.4f ACC %.4f PREC %.4f REC %.4f F1 %.4f AUC %.4f KAPPA %.4f", loss, acc,
                  prec, rec, f1, auc, kappa);
    return buf;
  }
};

// Builds a report from class probabilities; loss is supplied by the caller.
template <class T>
EvalReport make_report(const BasicTensor<T>& probs, const std::vector<int>& truth, double loss,
                       std::vector<std::string> class_names = {}) {
  require_rank(probs, 2, "make_report");
  const std::size_t n = probs.dim(0), k = probs.dim(1);
  std::vector<int> pred(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c)
      if (probs.at(i, c) > probs.at(i, best)) best = c;
    pred[i] = static_cast<int>(best);
  }
  EvalReport r;
  r.confusion = confusion_matrix(truth, pred, k);
  r.class_names = std::move(class_names);
  r.samples = n;
  r.loss = loss;
  const auto cm = classification_metrics(r.confusion);
  r.acc = cm.acc;
  r.prec = cm.prec;
  r.rec = cm.rec;
  r.f1 = cm.f1;
  r.zero_division_warnings = cm.zero_division_warnings;
  r.kappa = n ? cohen_kappa(r.confusion) : 0.0;
  try {
    r.auc = roc_auc_macro(probs, truth);
  } catch (const DataError&) {
    r.auc = 0.0;
    ++r.zero_division_warnings;
  }
  return r;
}

}  // namespace cbamvgg
