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
#include <numeric>

#include "cbamvgg/metrics.hpp"
#include "cbamvgg/random.hpp"

namespace cbamvgg {
namespace {

// Pairwise Mann-Whitney count with ties as 1/2.
double pair_count_auc(const std::vector<double>& s, const std::vector<bool>& pos) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!pos[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (pos[j]) continue;
      pairs += 1;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return wins / pairs;
}

double macro_pair_count(const TensorD& p, const std::vector<int>& y) {
  double sum = 0;
  int used = 0;
  for (std::size_t c = 0; c < p.dim(1); ++c) {
    std::vector<double> s;
    std::vector<bool> pos;
    for (std::size_t i = 0; i < p.dim(0); ++i) {
      s.push_back(p.at(i, c));
      pos.push_back(y[i] == int(c));
    }
    const auto np = std::count(pos.begin(), pos.end(), true);
    if (np == 0 || np == long(pos.size())) continue;
    sum += pair_count_auc(s, pos);
    ++used;
  }
  return sum / used;
}

// Random probability rows with coarse values so ties occur.
TensorD random_scores(std::size_t n, std::size_t k, Rng& rng) {
  TensorD p({n, k});
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0;
    for (std::size_t c = 0; c < k; ++c) s += p.at(i, c) = 1.0 + double(rng.below(6));
    for (std::size_t c = 0; c < k; ++c) p.at(i, c) /= s;
  }
  return p;
}

TEST(Confusion, PerfectIsDiagonal) {
  const auto m = confusion_matrix({0, 1, 2, 1}, {0, 1, 2, 1}, 3);
  EXPECT_EQ(m.counts, (std::vector<std::uint64_t>{1, 0, 0, 0, 2, 0, 0, 0, 1}));
}

TEST(Confusion, EmptyIsZero) {
  const auto m = confusion_matrix({}, {}, 2);
  EXPECT_EQ(m.total(), 0u);
  EXPECT_EQ(m.counts.size(), 4u);
}

TEST(Confusion, MatchesTally) {
  Rng rng(5);
  std::vector<int> t, p;
  for (int i = 0; i < 50; ++i) {
    t.push_back(int(rng.below(3)));
    p.push_back(int(rng.below(3)));
  }
  const auto m = confusion_matrix(t, p, 3);
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      std::uint64_t n = 0;
      for (int i = 0; i < 50; ++i) n += t[i] == a && p[i] == b;
      EXPECT_EQ(m.at(a, b), n);
    }
}

TEST(Confusion, OutOfRangeLabel) {
  EXPECT_THROW(confusion_matrix({0, 3}, {0, 1}, 3), DataError);
}

TEST(Metrics, DiagonalIsPerfect) {
  const auto r = classification_metrics(ConfusionMatrix(3, {4, 0, 0, 0, 5, 0, 0, 0, 6}));
  EXPECT_EQ(r.acc, 1.0);
  EXPECT_EQ(r.prec, 1.0);
  EXPECT_EQ(r.rec, 1.0);
  EXPECT_EQ(r.f1, 1.0);
}

TEST(Metrics, BinaryHandTally) {
  const ConfusionMatrix m(2, {45, 5, 10, 40});
  const auto r = classification_metrics(m);
  EXPECT_DOUBLE_EQ(r.acc, 0.85);
  EXPECT_DOUBLE_EQ(r.precision[0], 45.0 / 55.0);
  EXPECT_DOUBLE_EQ(r.recall[0], 0.90);
  EXPECT_DOUBLE_EQ(r.precision[1], 40.0 / 45.0);
  EXPECT_DOUBLE_EQ(r.recall[1], 0.80);
}

TEST(Metrics, NeverPredictedClassCountsZero) {
  const auto r = classification_metrics(ConfusionMatrix(2, {5, 0, 5, 0}));
  EXPECT_EQ(r.precision[1], 0.0);
  EXPECT_DOUBLE_EQ(r.prec, 0.25);
  EXPECT_EQ(r.zero_division_warnings, 1u);
}

TEST(Metrics, PermutationInvariance) {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::uint64_t> c(16);
    for (auto& v : c) v = rng.below(20);
    std::vector<std::size_t> perm{2, 0, 3, 1};
    std::vector<std::uint64_t> pc(16);
    for (std::size_t t = 0; t < 4; ++t)
      for (std::size_t p = 0; p < 4; ++p) pc[perm[t] * 4 + perm[p]] = c[t * 4 + p];
    const ConfusionMatrix a(4, c), b(4, pc);
    const auto ra = classification_metrics(a), rb = classification_metrics(b);
    EXPECT_NEAR(ra.acc, rb.acc, 1e-15);
    EXPECT_NEAR(ra.prec, rb.prec, 1e-15);
    EXPECT_NEAR(ra.rec, rb.rec, 1e-15);
    EXPECT_NEAR(ra.f1, rb.f1, 1e-15);
    EXPECT_NEAR(cohen_kappa(a), cohen_kappa(b), 1e-15);
  }
}

TEST(Auc, PerfectSeparation) {
  const TensorD p({4, 2}, std::vector<double>{0.9, 0.1, 0.8, 0.2, 0.3, 0.7, 0.1, 0.9});
  EXPECT_EQ(roc_auc_macro(p, {0, 0, 1, 1}), 1.0);
}

TEST(Auc, ConstantScoresGiveHalf) {
  const TensorD p({6, 3}, 1.0 / 3);
  EXPECT_EQ(roc_auc_macro(p, {0, 1, 2, 0, 1, 2}), 0.5);
}

TEST(Auc, MatchesPairCounting) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = random_scores(40, 3, rng);
    std::vector<int> y;
    for (int i = 0; i < 40; ++i) y.push_back(int(rng.below(3)));
    EXPECT_NEAR(roc_auc_macro(p, y), macro_pair_count(p, y), 1e-9);
  }
}

TEST(Auc, ClassWithoutPositivesIsSkipped) {
  const TensorD p({4, 3}, std::vector<double>{.8, .1, .1, .7, .2, .1, .2, .7, .1, .3, .6, .1});
  EXPECT_EQ(roc_auc_macro(p, {0, 0, 1, 1}), 1.0);
  EXPECT_THROW(roc_auc_macro(TensorD({2, 2}, 0.5), {0, 0}), DataError);
}

TEST(Kappa, HandComputed) {
  EXPECT_EQ(cohen_kappa(ConfusionMatrix(2, {45, 5, 10, 40})), 0.70);
  EXPECT_EQ(cohen_kappa(ConfusionMatrix(2, {7, 0, 0, 3})), 1.0);
  EXPECT_EQ(cohen_kappa(ConfusionMatrix(1, {9})), 1.0);
}

TEST(Kappa, IndependentPredictionsGiveZero) {
  // Rows and columns are both uniform with p_o = p_e = 1/2.
  EXPECT_EQ(cohen_kappa(ConfusionMatrix(2, {10, 10, 10, 10})), 0.0);
}

TEST(Report, FixedKeyOrder) {
  const TensorD p({4, 2}, std::vector<double>{0.9, 0.1, 0.4, 0.6, 0.3, 0.7, 0.2, 0.8});
  const auto r = make_report(p, {0, 0, 1, 1}, 0.5, {"a", "b"});
  std::vector<std::string> keys;
  const auto mj = r.metrics_json();
  for (auto it = mj.begin(); it != mj.end(); ++it) keys.push_back(it.key());
  EXPECT_EQ(keys, (std::vector<std::string>{"LOSS", "ACC", "PREC", "REC", "F1", "AUC", "KAPPA"}));
  EXPECT_DOUBLE_EQ(r.acc, 0.75);
  EXPECT_EQ(r.confusion.total(), 4u);
  EXPECT_EQ(r.to_json()["averaging"], "macro");
}

}  // namespace
}  // namespace cbamvgg
