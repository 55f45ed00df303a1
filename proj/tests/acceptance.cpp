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

// Acceptance run: one line per criterion.
//
//   acceptance [--strict] [--only N[,N...]]
//
// Exit status is 0 when every criterion ran to a verdict, 1 when a check
// crashed. With --strict a FAIL verdict also exits 1.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>

#include "cbamvgg/checkpoint.hpp"
#include "cbamvgg/cli.hpp"
#include "cbamvgg/embed.hpp"
#include "cbamvgg/explain.hpp"
#include "cbamvgg/metrics.hpp"
#include "cbamvgg/synthetic.hpp"
#include "cbamvgg/trainer.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace cbamvgg {
namespace {

namespace fs = std::filesystem;
using testing::naive_conv;
using testing::naive_dense;
using testing::naive_maxpool;
using testing::naive_pool_reduce;
using testing::random_tensor;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ModelConfig mini_config(std::uint64_t seed, bool ablate = false) {
  ModelConfig c;
  c.profile = Profile::mini;
  c.input_side = 32;
  c.classes = 4;
  c.stage_widths = {8, 16, 24, 32, 32};
  c.seed = seed;
  c.ablate_cbam = ablate;
  return c;
}

void randomize(NetworkGraph<double>& g, Rng& rng, double lo = -1, double hi = 1) {
  for (auto& p : g.params()) *p.tensor = random_tensor(p.tensor->shape(), rng, lo, hi);
}

// ---------------------------------------------------------------------------
// 1. gradients

Verdict gradient_suite() {
  double worst_layer = 0, worst_mini = 0;
  std::size_t coords = 0, skipped = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    for (auto kind : testing::all_layer_kinds()) {
      const auto r = testing::check_layer_gradients(kind, seed);
      worst_layer = std::max(worst_layer, r.worst_rel_error);
      coords += r.coords;
      skipped += r.skipped;
    }
    auto g = build_cbam_vgg<double>(mini_config(seed));
    Rng rng(seed * 101);
    auto x = random_tensor({1, 3, 32, 32}, rng, 0.0, 1.0);
    const auto upstream = random_tensor({1, 4}, rng);
    const std::size_t top = g.logits_node();
    const auto fr = forward_range(g, x, 0, top + 1, true);
    const auto grads = backward(g, fr.trace, top, upstream);
    auto loss = [&]() { return testing::dot(upstream, forward_range(g, x, 0, top + 1, false).output); };
    auto pattern = [&]() { return testing::graph_pattern(g, x); };
    // One relative error per seed over every probe: single entries of size
    // 1e-12 sit at the rounding floor of the difference quotient.
    testing::FdResult all;
    auto record = [&](const testing::FdResult& r) {
      all.numeric.insert(all.numeric.end(), r.numeric.begin(), r.numeric.end());
      all.analytic.insert(all.analytic.end(), r.analytic.begin(), r.analytic.end());
      skipped += r.skipped;
    };
    record(testing::finite_difference(x, testing::sample_coords(x.size(), 8, rng), loss, grads.input, 1e-3, pattern));
    auto refs = g.params();
    for (std::size_t k = 0; k < refs.size(); ++k) {
      record(testing::finite_difference(*refs[k].tensor, testing::sample_coords(refs[k].tensor->size(), 2, rng), loss,
                                        grads.params[k], 1e-3, pattern));
    }
    coords += all.numeric.size();
    worst_mini = std::max(worst_mini, all.rel_error());
  }
  const bool ok = worst_layer < 1e-4 && worst_mini < 1e-4;
  return {ok, fmt("worst rel err: layers %.2e, mini net %.2e (tol 1e-4); %zu probes, %zu kink-skipped, 20 seeds",
                  worst_layer, worst_mini, coords, skipped)};
}

// ---------------------------------------------------------------------------
// 2. kernels

Verdict kernel_oracles() {
  Rng rng(2);
  double conv = 0, pool = 0, dense = 0, reduce = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 1 + rng.below(2), ci = 1 + rng.below(3), co = 1 + rng.below(4);
    const std::size_t h = 3 + rng.below(6), w = 3 + rng.below(6);
    const std::size_t ks = 1 + 2 * rng.below(2), stride = 1 + rng.below(2), pad = rng.below(2);
    const auto x = random_tensor({n, ci, h, w}, rng);
    const auto k = random_tensor({co, ci, ks, ks}, rng);
    const auto b = random_tensor({co}, rng);
    conv = std::max(conv, testing::max_abs_diff(ops::conv2d(x, k, b, stride, pad), naive_conv(x, k, b, stride, pad)));

    const std::size_t size = 2 + rng.below(2), pstride = 1 + rng.below(2);
    pool = std::max(pool, testing::max_abs_diff(ops::maxpool2d(x, size, pstride).output, naive_maxpool(x, size, pstride)));

    const std::size_t in = 1 + rng.below(12), out = 1 + rng.below(8);
    const auto xd = random_tensor({n, in}, rng);
    const auto wd = random_tensor({in, out}, rng);
    const auto bd = random_tensor({out}, rng);
    dense = std::max(dense, testing::max_abs_diff(ops::dense(xd, wd, bd), naive_dense(xd, wd, bd)));

    for (auto axis : {ops::ReduceAxis::spatial, ops::ReduceAxis::channel})
      for (auto kind : {ops::ReduceKind::avg, ops::ReduceKind::max})
        reduce = std::max(reduce, testing::max_abs_diff(ops::pool_reduce(x, axis, kind).output,
                                                        naive_pool_reduce(x, axis, kind)));
  }
  const double worst = std::max({conv, pool, dense, reduce});
  return {worst <= 1e-6,
          fmt("max |diff|: conv %.1e, maxpool %.1e, dense %.1e, pool_reduce %.1e (tol 1e-6), 100 instances", conv,
              pool, dense, reduce)};
}

// ---------------------------------------------------------------------------
// 3. CBAM

Verdict cbam_invariants() {
  Rng rng(3);
  std::size_t gate_bad = 0, grow = 0, checked = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t r = 1 + rng.below(4), c = r * (1 + rng.below(6));
    const std::size_t h = 1 + rng.below(7), w = 1 + rng.below(7);
    auto ch = ChannelAttentionParams<double>::zeros(c, r);
    ch.w0 = random_tensor(ch.w0.shape(), rng, -2, 2);
    ch.w1 = random_tensor(ch.w1.shape(), rng, -2, 2);
    SpatialAttentionParams<double> sp;
    sp.kernel = random_tensor(sp.kernel.shape(), rng, -0.5, 0.5);
    sp.bias[0] = rng.uniform(-1, 1);
    const auto f = random_tensor({1 + rng.below(2), c, h, w}, rng, -20, 20);
    const auto out = cbam_apply(f, ch, sp);
    for (double v : out.record.channel_gate.data()) gate_bad += !(v > 0.0 && v < 1.0);
    for (double v : out.record.spatial_gate.data()) gate_bad += !(v > 0.0 && v < 1.0);
    for (std::size_t i = 0; i < f.size(); ++i) grow += std::abs(out.refined[i]) > std::abs(f[i]);
    checked += f.size();
  }
  std::size_t not_quarter = 0;
  for (int t = 0; t < 20; ++t) {
    const auto f = random_tensor({2, 8, 5, 5}, rng, -10, 10);
    const auto out = cbam_apply(f, ChannelAttentionParams<double>::zeros(8), SpatialAttentionParams<double>{});
    for (std::size_t i = 0; i < f.size(); ++i) not_quarter += out.refined[i] != 0.25 * f[i];
  }
  return {gate_bad == 0 && grow == 0 && not_quarter == 0,
          fmt("1000 tensors, %zu elements: %zu gates outside (0,1), %zu magnitudes grew; zero weights: %zu "
              "elements differ from 0.25x",
              checked, gate_bad, grow, not_quarter)};
}

// ---------------------------------------------------------------------------
// 4. LRP

RuleComposite uniform_rules(const NetworkGraph<double>& g, const Rule& linear_rule) {
  RuleComposite c{"custom", {}};
  for (const auto& n : g.nodes) c.rules.push_back(is_linear_node(n) ? linear_rule : Rule::pass());
  return c;
}

std::vector<double> brute_force_epsilon(const TensorD& a, const DenseLayer<double>& l, const TensorD& r, double eps) {
  const std::size_t in = l.weight.dim(0), out = l.weight.dim(1);
  std::vector<std::vector<double>> contrib(in, std::vector<double>(out));
  for (std::size_t j = 0; j < out; ++j) {
    double zj = l.bias[j];
    for (std::size_t i = 0; i < in; ++i) zj += a[i] * l.weight[i * out + j];
    zj += zj >= 0 ? eps : -eps;
    for (std::size_t i = 0; i < in; ++i) contrib[i][j] = a[i] * l.weight[i * out + j] / zj * r[j];
  }
  std::vector<double> ri(in, 0.0);
  for (std::size_t i = 0; i < in; ++i)
    for (std::size_t j = 0; j < out; ++j) ri[i] += contrib[i][j];
  return ri;
}

Verdict lrp_conservation() {
  // He-initialised logits sit near 1e-4, the same order as eps. The classifier
  // weights are scaled up so eps is small against every pre-activation; all
  // biases stay zero.
  double worst = 0;
  for (std::uint64_t t = 0; t < 50; ++t) {
    auto g = build_cbam_vgg<double>(mini_config(100 + t / 10));
    for (auto& v : g.nodes[g.find("fc")].as<DenseLayer<double>>().weight.data()) v *= 1e4;
    Rng rng(400 + t);
    const auto x = random_tensor({3, 32, 32}, rng, 0, 1);
    const auto m = lrp(g, x, int(t % 4), make_composite("epsilon_plus", g, 1e-6));
    worst = std::max(worst, std::abs(sum(m.pixels) - m.logit) / std::abs(m.logit));
  }

  double additivity = 0;
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    NetworkGraph<double> g(2, 2);
    g.add_flatten().add_dense(8, 6).add_relu().add_dense(6, 5).add_relu().add_dense(5, 3).add_softmax();
    randomize(g, rng);
    const auto x = random_tensor({2, 2, 2}, rng, 0, 1);
    const auto m = lrp(g, x, trial % 3, uniform_rules(g, Rule::eps(0.01)));
    const auto fwd = forward(g, x.reshaped({1, 2, 2, 2}), true);
    for (std::size_t node : {5u, 3u, 1u}) {
      const auto expected = brute_force_epsilon(fwd.trace.input_of(node), g.nodes[node].as<DenseLayer<double>>(),
                                                m.layers[node + 1], 0.01);
      for (std::size_t i = 0; i < expected.size(); ++i)
        additivity = std::max(additivity, std::abs(m.layers[node][i] - expected[i]));
    }
  }
  return {worst < 1e-3 && additivity < 1e-12,
          fmt("worst |sum R - logit|/|logit| = %.2e over 50 inputs (tol 1e-3); 3-layer enumeration max |diff| "
              "%.1e (rounding only, tol 1e-12)",
              worst, additivity)};
}

// ---------------------------------------------------------------------------
// 5. CAM

Verdict cam_equivalence() {
  Rng rng(5);
  double worst_row = 0, worst_map = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t channels = 2 + rng.below(5), classes = 2 + rng.below(4), side = 4 + rng.below(5);
    NetworkGraph<double> g(2, side);
    g.add_conv(2, channels).add_global_avg_pool().add_dense(channels, classes).add_softmax();
    randomize(g, rng);
    const auto x = random_tensor({2, side, side}, rng, 0, 1);
    const int cls = int(rng.below(classes));
    const auto m = grad_cam(g, x, cls, 0);
    const auto& w = g.nodes[2].as<DenseLayer<double>>().weight;
    const double z = double(side * side);
    for (std::size_t k = 0; k < channels; ++k)
      worst_row = std::max(worst_row, std::abs(m.weights[k] * z - w[k * classes + std::size_t(cls)]));

    const auto a = forward(g, x.reshaped({1, 2, side, side}), true).trace.output_of(0);
    TensorD cam({side, side});
    for (std::size_t k = 0; k < channels; ++k)
      for (std::size_t p = 0; p < side * side; ++p) cam[p] += w[k * classes + std::size_t(cls)] * a[k * side * side + p];
    for (auto& v : cam.data()) v = std::max(v, 0.0);
    worst_map = std::max(worst_map, testing::max_abs_diff(m.values, normalize_unit(cam)));
  }
  return {worst_row < 1e-6 && worst_map < 1e-6,
          fmt("50 nets: max |Z*alpha_k - w_kc| = %.1e, max |Grad-CAM - CAM| (normalised) = %.1e (tol 1e-6); "
              "alpha is the spatial mean so the pool size Z is the only factor",
              worst_row, worst_map)};
}

// ---------------------------------------------------------------------------
// 6. metrics

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

Verdict metric_oracles() {
  Rng rng(6);
  double auc_worst = 0;
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 2 + rng.below(60);
    std::vector<double> s(n);
    std::vector<bool> pos(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = double(rng.below(10)) / 10.0;  // coarse so ties occur
      pos[i] = rng.below(2) == 1;
    }
    pos[0] = true;
    pos[1] = false;
    auc_worst = std::max(auc_worst, std::abs(binary_auc(s, pos) - pair_count_auc(s, pos)));
  }
  const double kappa = cohen_kappa(ConfusionMatrix(2, {45, 5, 10, 40}));

  double perm_worst = 0;
  for (int t = 0; t < 100; ++t) {
    std::vector<std::uint64_t> c(16);
    for (auto& v : c) v = rng.below(20);
    std::vector<std::size_t> perm{0, 1, 2, 3};
    for (std::size_t i = 3; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
    std::vector<std::uint64_t> pc(16);
    for (std::size_t a = 0; a < 4; ++a)
      for (std::size_t b = 0; b < 4; ++b) pc[perm[a] * 4 + perm[b]] = c[a * 4 + b];
    const ConfusionMatrix ma(4, c), mb(4, pc);
    const auto ra = classification_metrics(ma), rb = classification_metrics(mb);
    for (auto d : {ra.acc - rb.acc, ra.prec - rb.prec, ra.rec - rb.rec, ra.f1 - rb.f1, cohen_kappa(ma) - cohen_kappa(mb)})
      perm_worst = std::max(perm_worst, std::abs(d));
  }
  return {auc_worst <= 1e-9 && kappa == 0.70 && perm_worst < 1e-12,
          fmt("AUC vs pair counting max |diff| %.1e on 200 instances (tol 1e-9); kappa %.17g; permutation max "
              "|diff| %.1e",
              auc_worst, kappa, perm_worst)};
}

// ---------------------------------------------------------------------------
// 7. training, 10. localisation

struct Trained {
  NetworkGraph<float> model;
  std::vector<SyntheticImage> data;
  std::vector<Sample<float>> samples;
  DatasetSplit split;
  double test_acc = 0;
  double seconds = 0;
};

FitConfig desk_fit() {
  FitConfig f;
  f.epochs = 20;
  f.batch_size = 4;
  f.lr = 1e-3;
  f.seed = 1;
  return f;
}

Trained train_desk(bool ablate) {
  const auto t0 = std::chrono::steady_clock::now();
  Trained t;
  t.data = make_lesion_dataset(SyntheticOptions{});  // 4 classes x 100, 32x32
  std::vector<LabeledImage> images;
  for (const auto& d : t.data) images.push_back(d.image);
  t.samples = to_samples<float>(images, 32, PreprocessOptions{});
  std::vector<int> labels;
  for (const auto& s : t.samples) labels.push_back(s.label);
  t.split = split(labels, 0.8, 1, lesion_class_names());
  t.model = build_cbam_vgg<float>(mini_config(1, ablate));
  const auto h = fit(t.model, t.samples, t.split, desk_fit());
  t.test_acc = h.epochs.back().test_acc;
  t.seconds = seconds_since(t0);
  return t;
}

Trained* g_trained = nullptr;

Verdict desk_training() {
  static Trained cbam = train_desk(false);
  g_trained = &cbam;
  const auto ablated = train_desk(true);
  const bool ok = cbam.test_acc >= 0.90 && cbam.seconds + ablated.seconds < 600;
  return {ok, fmt("400 images, 20 epochs, batch 4, lr 1e-3: CBAM test acc %.4f (need >= 0.90), ablated %.4f; "
                  "%.0f s + %.0f s (limit 600 s)",
                  cbam.test_acc, ablated.test_acc, cbam.seconds, ablated.seconds)};
}

double positive_mass(const TensorD& r, const Box& b) {
  double s = 0;
  const std::size_t w = r.dim(1);
  for (std::size_t y = b.y0; y < b.y1; ++y)
    for (std::size_t x = b.x0; x < b.x1; ++x) s += std::max(0.0, r[y * w + x]);
  return s;
}

Verdict lrp_localisation() {
  if (!g_trained) return {false, "needs the criterion 7 model"};
  const auto& t = *g_trained;
  Rng rng(10);
  double inside = 0, random = 0;
  std::size_t used = 0, wins = 0;
  for (auto i : t.split.test) {
    if (used == 50) break;
    if (!t.data[i].lesion) continue;
    const Box lesion = *t.data[i].lesion;
    const std::size_t bw = lesion.x1 - lesion.x0, bh = lesion.y1 - lesion.y0;
    Box other;
    other.x0 = rng.below(32 - bw + 1);
    other.y0 = rng.below(32 - bh + 1);
    other.x1 = other.x0 + bw;
    other.y1 = other.y0 + bh;
    const auto m = lrp(t.model, t.samples[i].image, t.samples[i].label, make_composite("epsilon_plus_flat", t.model));
    const auto r = m.spatial();
    double total = 0;
    for (double v : r.data()) total += std::max(0.0, v);
    if (total <= 0) total = 1;
    const double a = positive_mass(r, lesion) / total, b = positive_mass(r, other) / total;
    inside += a;
    random += b;
    wins += a > b;
    ++used;
  }
  inside /= double(used);
  random /= double(used);
  return {used == 50 && inside > random,
          fmt("mean share of positive relevance, %zu lesion test images: lesion box %.4f, random box %.4f "
              "(lesion larger on %zu); model from criterion 7",
              used, inside, random, wins)};
}

// ---------------------------------------------------------------------------
// 8. t-SNE

Verdict tsne_checks() {
  double fd = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    const auto x = random_tensor({10, 5}, rng);
    const auto p = joint_affinities(x, 2.5);
    auto y = random_tensor({10, 2}, rng, -2, 2);
    const auto analytic = tsne_gradient(p, y);
    auto loss = [&]() { return tsne_kl(p, y); };
    fd = std::max(fd, testing::finite_difference(y, testing::all_coords(y.size()), loss, analytic, 1e-5).rel_error());
  }
  Rng rng(8);
  TensorD x({150, 16});
  std::vector<int> labels;
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < 50; ++i) {
      for (std::size_t k = 0; k < 16; ++k) x[(c * 50 + i) * 16 + k] = rng.normal(k == c ? 10.0 : 0.0, 1.0);
      labels.push_back(int(c));
    }
  const TsneOptions opt;
  const auto e = tsne(x, opt);
  double worst_rise = 0;
  for (std::size_t t = opt.exaggeration_iterations + 1; t < e.kl_trace.size(); ++t)
    worst_rise = std::max(worst_rise, e.kl_trace[t] - e.kl_trace[t - 1]);
  const double purity = knn_purity(e.coords, labels, 5);
  return {fd < 1e-5 && worst_rise <= 1e-6 && purity >= 0.95,
          fmt("FD rel err %.1e (tol 1e-5); largest KL rise after exaggeration %.1e (tol 1e-6); 3-Gaussian 5-NN "
              "purity %.3f (need >= 0.95); final KL %.4f",
              fd, worst_rise, purity, e.kl)};
}

// ---------------------------------------------------------------------------
// 9. determinism

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "cbamvgg");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  if (code != 0) std::fprintf(stderr, "cbamvgg %s: exit %d: %s\n", args[1].c_str(), code, err.str().c_str());
  return code;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

Verdict determinism() {
  const auto root = fs::temp_directory_path() / ("cbamvgg_accept_" + std::to_string(::getpid()));
  fs::remove_all(root);
  const auto data = (root / "data").string();
  if (run_cli({"synth", "--out", data, "--per-class", "12", "--seed", "9"}) != 0) return {false, "synth failed"};
  for (const char* run : {"a", "b"}) {
    const auto out = (root / run).string();
    const auto ckpt = out + "/checkpoints/best.json";
    const auto img = data + "/streak/img_0002.png";
    if (run_cli({"train", "--data", data, "--out", out, "--epochs", "2", "--batch", "8", "--seed", "3"}) ||
        run_cli({"eval", "--data", data, "--checkpoint", ckpt, "--out", out, "--part", "all"}) ||
        run_cli({"explain", "--checkpoint", ckpt, "--image", img, "--method", "attention", "--out", out}) ||
        run_cli({"explain", "--checkpoint", ckpt, "--image", img, "--method", "gradcampp", "--out", out}) ||
        run_cli({"explain", "--checkpoint", ckpt, "--image", img, "--method", "lrp", "--composite",
                 "epsilon_plus_flat", "--out", out}) ||
        run_cli({"embed", "--checkpoint", ckpt, "--data", data, "--part", "all", "--perplexity", "8",
                 "--iterations", "300", "--out", out})) {
      return {false, "a CLI run failed"};
    }
  }
  std::size_t files = 0, differ = 0;
  for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), root / "a");
    if (rel == fs::path("reports/timing.json")) continue;  // wall-clock only
    ++files;
    if (slurp(e.path()) != slurp(root / "b" / rel)) {
      ++differ;
      std::fprintf(stderr, "differs: %s\n", rel.c_str());
    }
  }

  // Checkpoint round trip on a perturbed float model.
  auto g = build_cbam_vgg<float>(mini_config(21));
  Rng rng(9);
  for (auto& p : g.params())
    for (auto& v : p.tensor->data()) v = static_cast<float>(rng.normal(0, 0.3));
  save_checkpoint(g, root / "rt.json", CheckpointMeta{lesion_class_names(), {}});
  const auto ck = load_checkpoint<float>(root / "rt.json");
  std::size_t param_diff = 0;
  const auto a = g.params(), b = ck.graph.params();
  for (std::size_t k = 0; k < a.size(); ++k)
    for (std::size_t i = 0; i < a[k].tensor->size(); ++i)
      param_diff += std::memcmp(&(*a[k].tensor)[i], &(*b[k].tensor)[i], sizeof(float)) != 0;
  fs::create_directories(root / "again");  // same file name: the manifest records it
  save_checkpoint(ck.graph, root / "again" / "rt.json", CheckpointMeta{lesion_class_names(), {}});
  const bool resave = slurp(root / "rt.json.bin") == slurp(root / "again" / "rt.json.bin") &&
                      slurp(root / "rt.json") == slurp(root / "again" / "rt.json");
  const auto x = random_tensor<float>({2, 3, 32, 32}, rng, 0, 1);
  const bool same_out = forward(g, x).output == forward(ck.graph, x).output;
  fs::remove_all(root);
  return {files > 10 && differ == 0 && param_diff == 0 && resave && same_out,
          fmt("two full CLI runs: %zu files compared (reports, checkpoints, heatmaps, embeddings), %zu differ; "
              "checkpoint round trip: %zu parameter bits differ, re-save %s, outputs %s",
              files, differ, param_diff, resave ? "identical" : "DIFFERS", same_out ? "identical" : "DIFFER")};
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;  // 0 = none
  std::function<Verdict()> run;
};

}  // namespace
}  // namespace cbamvgg

int main(int argc, char** argv) {
  using namespace cbamvgg;
  bool strict = false;
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--strict") {
      strict = true;
    } else if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string tok; std::getline(ss, tok, ',');) only.insert(std::stoi(tok));
    } else {
      std::fprintf(stderr, "usage: acceptance [--strict] [--only N[,N...]]\n");
      return 2;
    }
  }
  if (only.count(10)) only.insert(7);

  const std::vector<Criterion> criteria{
      {1, "gradient suite", 120, gradient_suite},
      {2, "kernel oracles", 60, kernel_oracles},
      {3, "CBAM invariants", 0, cbam_invariants},
      {4, "LRP conservation", 0, lrp_conservation},
      {5, "CAM equivalence", 0, cam_equivalence},
      {6, "metric oracles", 0, metric_oracles},
      {7, "desk-scale training", 0, desk_training},
      {8, "t-SNE", 0, tsne_checks},
      {9, "determinism and round trip", 0, determinism},
      {10, "LRP localisation smoke test", 0, lrp_localisation},
  };
  int passed = 0, failed = 0, crashed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
      ++crashed;
    }
    const double secs = seconds_since(t0);
    if (c.budget_s > 0 && secs >= c.budget_s) {
      v.pass = false;
      v.detail += fmt("; over the %.0f s budget", c.budget_s);
    }
    (v.pass ? passed : failed) += 1;
    std::printf("[%s] %d %s: %s (%.1f s)\n", v.pass ? "PASS" : "FAIL", c.id, c.name, v.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d passed, %d failed\n", passed, failed);
  if (crashed) return 1;
  return strict && failed ? 1 : 0;
}
